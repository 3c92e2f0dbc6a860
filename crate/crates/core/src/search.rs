//! Derivative-free search over ball/point configurations for small slack in
//! the point-charge and two-ball Neumann inequalities.
//!
//! Results are observations about the sampled family only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BallSpec, Constants, Point};
use crate::error::{Error, Result};
use crate::kernels;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Slack of `-Σ δ^2 r^(2-n) <= Σ_{l != p} δ_l δ_p |x_l - x_p|^(2-n)`.
    PointChargeSlack,
    /// Neumann modulus of the unit ball minus `-λ(1/r_1 + 1/r_2)`.
    KufarevSlack,
    /// `Σ_i M(B_i) = -λ Σ δ_i^2 r_i^(2-n)`.
    SumOfModuli,
}

impl Objective {
    /// Whether the objective is the slack of an established inequality.
    pub fn is_slack(&self) -> bool {
        !matches!(self, Objective::SumOfModuli)
    }
}

/// One free coordinate of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeVariable {
    pub ball: usize,
    /// `cx, cy, cz, radius, px, py, pz, weight`, or `c<k>` / `p<k>` for any axis.
    pub field: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Center(usize),
    Radius,
    Point(usize),
    Weight,
}

fn parse_field(field: &str, n: usize) -> Result<Slot> {
    let axis = |s: &str| -> Option<usize> {
        match s {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => s.parse().ok(),
        }
    };
    let slot = match field {
        "radius" => Some(Slot::Radius),
        "weight" => Some(Slot::Weight),
        _ => match field.split_at(1.min(field.len())) {
            ("c", rest) => axis(rest).map(Slot::Center),
            ("p", rest) => axis(rest).map(Slot::Point),
            _ => None,
        },
    };
    match slot {
        Some(Slot::Center(a) | Slot::Point(a)) if a >= n => Err(Error::param(
            "free.field",
            format!("axis of `{field}` exceeds dimension {n}"),
        )),
        Some(s) => Ok(s),
        None => Err(Error::param("free.field", format!("unknown field `{field}`"))),
    }
}

/// Configuration family, objective and constraint controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchProblem {
    pub objective: Objective,
    pub balls: Vec<BallSpec>,
    pub points: Vec<Point>,
    /// Ignored by the Neumann objective, which uses `+1, -1`.
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub free: Vec<FreeVariable>,
    /// Two balls only: ball 1 and its point mirror ball 0 through the origin.
    #[serde(default)]
    pub symmetric: bool,
    /// Place every point at the centre of its ball.
    #[serde(default)]
    pub points_at_centers: bool,
    /// Every constraint must hold with at least this margin.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Starting free vector; sampled from the bounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

fn default_margin() -> f64 {
    1e-6
}

fn default_penalty() -> f64 {
    1e3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Best feasible objective after this iteration.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Vec<f64>,
    pub best_objective: f64,
    /// Slack at the best configuration; absent for objectives that are not
    /// inequality slacks.
    pub slack: Option<f64>,
    pub iterations: usize,
    pub improving_steps: usize,
    pub restarts: usize,
    pub balls: Vec<BallSpec>,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

impl SearchResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective\n");
        for t in &self.trace {
            s.push_str(&format!("{},{:e}\n", t.iteration, t.objective));
        }
        s
    }
}

/// A validated problem with its free-variable slots resolved.
struct Family<'a> {
    p: &'a SearchProblem,
    c: Constants,
    slots: Vec<(usize, Slot)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Config {
    centers: Vec<Vec<f64>>,
    radii: Vec<f64>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl<'a> Family<'a> {
    fn new(p: &'a SearchProblem) -> Result<Self> {
        let m = p.balls.len();
        if m == 0 {
            return Err(Error::EmptyConfig);
        }
        if p.points.len() != m {
            return Err(Error::LengthMismatch {
                points: p.points.len(),
                weights: m,
            });
        }
        let n = p.balls[0].dim();
        let c = Constants::new(n)?;
        for (b, q) in p.balls.iter().zip(&p.points) {
            b.center.check_dim(n)?;
            q.check_dim(n)?;
        }
        match p.objective {
            Objective::KufarevSlack => {
                if n != 3 || m != 2 {
                    return Err(Error::param("objective", "needs two balls in R^3"));
                }
            }
            _ => {
                if p.weights.len() != m {
                    return Err(Error::LengthMismatch {
                        points: m,
                        weights: p.weights.len(),
                    });
                }
            }
        }
        if p.symmetric && m != 2 {
            return Err(Error::param("symmetric", "needs exactly two balls"));
        }
        if !(p.penalty > 0.0) || !p.penalty.is_finite() {
            return Err(Error::param("penalty", "must be positive and finite"));
        }
        if !(p.margin >= 0.0) || !p.margin.is_finite() {
            return Err(Error::param("margin", "must be nonnegative and finite"));
        }
        let mut slots = Vec::new();
        for v in &p.free {
            if v.ball >= m || (p.symmetric && v.ball != 0) {
                return Err(Error::param("free.ball", format!("ball {} cannot vary", v.ball)));
            }
            if !(v.lower.is_finite() && v.upper.is_finite() && v.lower < v.upper) {
                return Err(Error::param(
                    "free.lower",
                    format!("bounds of `{}` must be finite with lower < upper", v.field),
                ));
            }
            let slot = (v.ball, parse_field(&v.field, n)?);
            if slots.contains(&slot) {
                return Err(Error::param("free.field", format!("`{}` listed twice", v.field)));
            }
            slots.push(slot);
        }
        Ok(Family {
            p,
            c,
            slots,
            lower: p.free.iter().map(|v| v.lower).collect(),
            upper: p.free.iter().map(|v| v.upper).collect(),
        })
    }

    fn dim(&self) -> usize {
        self.slots.len()
    }

    fn config(&self, x: &[f64]) -> Config {
        let p = self.p;
        let mut cfg = Config {
            centers: p.balls.iter().map(|b| b.center.coords().to_vec()).collect(),
            radii: p.balls.iter().map(|b| b.radius).collect(),
            points: p.points.iter().map(|q| q.coords().to_vec()).collect(),
            weights: match p.objective {
                Objective::KufarevSlack => vec![1.0, -1.0],
                _ => p.weights.clone(),
            },
        };
        for (&(i, slot), &v) in self.slots.iter().zip(x) {
            match slot {
                Slot::Center(a) => cfg.centers[i][a] = v,
                Slot::Radius => cfg.radii[i] = v,
                Slot::Point(a) => cfg.points[i][a] = v,
                Slot::Weight => cfg.weights[i] = v,
            }
        }
        if p.points_at_centers {
            cfg.points = cfg.centers.clone();
        }
        if p.symmetric {
            cfg.centers[1] = cfg.centers[0].iter().map(|v| -v).collect();
            cfg.radii[1] = cfg.radii[0];
            cfg.points[1] = cfg.points[0].iter().map(|v| -v).collect();
        }
        cfg
    }

    /// Constraint values; the configuration is admissible when all are >= 0.
    fn constraints(&self, cfg: &Config) -> Vec<f64> {
        let margin = self.p.margin;
        let m = cfg.radii.len();
        let mut g = Vec::new();
        for i in 0..m {
            g.push(cfg.radii[i] - margin);
            g.push(cfg.radii[i] - dist(&cfg.points[i], &cfg.centers[i]) - margin);
            for j in (i + 1)..m {
                g.push(dist(&cfg.centers[i], &cfg.centers[j]) - cfg.radii[i] - cfg.radii[j] - margin);
            }
            if self.p.objective == Objective::KufarevSlack {
                g.push(1.0 - dist(&cfg.centers[i], &[0.0; 3]) - cfg.radii[i] - margin);
                g.push(dist(&cfg.points[i], &[0.0; 3]) - margin);
            }
        }
        g
    }

    fn violation(&self, cfg: &Config) -> f64 {
        self.constraints(cfg)
            .iter()
            .map(|g| if *g < 0.0 { g * g } else { 0.0 })
            .sum()
    }

    /// Objective value; `+inf` where the closed forms are undefined.
    fn objective(&self, cfg: &Config) -> f64 {
        let n = self.c.n as f64;
        let harmonic = |i: usize| {
            let d = dist(&cfg.points[i], &cfg.centers[i]);
            (cfg.radii[i] * cfg.radii[i] - d * d) / cfg.radii[i]
        };
        let w = &cfg.weights;
        let v = match self.p.objective {
            Objective::PointChargeSlack | Objective::SumOfModuli => {
                let lhs: f64 = (0..w.len())
                    .map(|i| -w[i] * w[i] * harmonic(i).powf(2.0 - n))
                    .sum();
                if self.p.objective == Objective::SumOfModuli {
                    self.c.lambda * lhs
                } else {
                    let mut rhs = 0.0;
                    for l in 0..w.len() {
                        for q in 0..w.len() {
                            if l != q {
                                rhs += w[l] * w[q] * dist(&cfg.points[l], &cfg.points[q]).powf(2.0 - n);
                            }
                        }
                    }
                    rhs - lhs
                }
            }
            Objective::KufarevSlack => {
                let lhs = -self.c.lambda * (1.0 / harmonic(0) + 1.0 / harmonic(1));
                let a1 = Point::new(cfg.points[0].clone());
                let a2 = Point::new(cfg.points[1].clone());
                match (a1, a2) {
                    (Ok(a1), Ok(a2)) => kernels::neumann_modulus_two_points_3d(&a1, &a2)
                        .map_or(f64::INFINITY, |rhs| rhs - lhs),
                    _ => f64::INFINITY,
                }
            }
        };
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Evaluation bookkeeping: penalized values plus the best feasible point.
struct Tracker<'a> {
    fam: &'a Family<'a>,
    penalty: f64,
    best: Option<(Vec<f64>, f64)>,
    improving: usize,
}

impl Tracker<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let cfg = self.fam.config(x);
        let viol = self.fam.violation(&cfg);
        let f = self.fam.objective(&cfg);
        if viol == 0.0 && f.is_finite() {
            match &self.best {
                Some((_, b)) if f >= *b => {}
                Some(_) => {
                    self.best = Some((x.to_vec(), f));
                    self.improving += 1;
                }
                None => self.best = Some((x.to_vec(), f)),
            }
        }
        f + self.penalty * viol
    }
}

const MAX_INIT_ATTEMPTS: usize = 10_000;

fn initial_point(fam: &Family, seed: u64) -> Result<Vec<f64>> {
    let feasible = |x: &[f64]| {
        let cfg = fam.config(x);
        fam.violation(&cfg) == 0.0 && fam.objective(&cfg).is_finite()
    };
    if let Some(x) = &fam.p.initial {
        if x.len() != fam.dim() {
            return Err(Error::param("initial", "length must match the free variables"));
        }
        let mut y = x.clone();
        fam.project(&mut y);
        if y != *x || !feasible(x) {
            return Err(Error::param("initial", "starting point is not admissible"));
        }
        return Ok(y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x: Vec<f64> = fam
            .lower
            .iter()
            .zip(&fam.upper)
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        if feasible(&x) {
            return Ok(x);
        }
        if x.is_empty() {
            break;
        }
    }
    Err(Error::Infeasible)
}

fn simplex_around(fam: &Family, x0: &[f64]) -> Vec<Vec<f64>> {
    let mut s = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let step = 0.1 * (fam.upper[i] - fam.lower[i]);
        let mut y = x0.to_vec();
        y[i] = if y[i] + step <= fam.upper[i] { y[i] + step } else { y[i] - step };
        s.push(y);
    }
    s
}

fn stagnated(values: &[f64], simplex: &[Vec<f64>], fam: &Family) -> bool {
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let flat = (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs());
    let width = fam
        .upper
        .iter()
        .zip(&fam.lower)
        .map(|(u, l)| u - l)
        .fold(0.0f64, f64::max);
    let diam = simplex[1..]
        .iter()
        .map(|v| dist(v, &simplex[0]))
        .fold(0.0f64, f64::max);
    flat && diam <= 1e-10 * width
}

/// Nelder-Mead on `objective + penalty * Σ min(g, 0)^2` inside the bounds,
/// restarted once from the incumbent with the penalty doubled.
pub fn minimize_slack(problem: &SearchProblem, seed: u64, iters: usize) -> Result<SearchResult> {
    if iters == 0 {
        return Err(Error::param("iters", "must be at least 1"));
    }
    let fam = Family::new(problem)?;
    let x0 = initial_point(&fam, seed)?;
    let d = fam.dim();
    let mut tr = Tracker {
        fam: &fam,
        penalty: problem.penalty,
        best: None,
        improving: 0,
    };
    tr.eval(&x0);
    let mut trace = vec![TracePoint {
        iteration: 0,
        objective: tr.best.as_ref().map_or(f64::INFINITY, |b| b.1),
    }];
    let mut iterations = 0;
    let mut restarts = 0;

    if d > 0 {
        let mut simplex = simplex_around(&fam, &x0);
        let mut values: Vec<f64> = simplex.iter().map(|x| tr.eval(x)).collect();
        while iterations < iters {
            let mut order: Vec<usize> = (0..=d).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            if stagnated(&values, &simplex, &fam) {
                if restarts == 1 {
                    break;
                }
                restarts += 1;
                tr.penalty *= 2.0;
                let start = tr.best.as_ref().map_or_else(|| simplex[0].clone(), |b| b.0.clone());
                simplex = simplex_around(&fam, &start);
                values = simplex.iter().map(|x| tr.eval(x)).collect();
                continue;
            }
            iterations += 1;

            let mut centroid = vec![0.0; d];
            for v in &simplex[..d] {
                for (c, a) in centroid.iter_mut().zip(v) {
                    *c += a / d as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut y: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[d])
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                fam.project(&mut y);
                y
            };
            let xr = along(1.0);
            let fr = tr.eval(&xr);
            if fr < values[0] {
                let xe = along(2.0);
                let fe = tr.eval(&xe);
                if fe < fr {
                    simplex[d] = xe;
                    values[d] = fe;
                } else {
                    simplex[d] = xr;
                    values[d] = fr;
                }
            } else if fr < values[d - 1] {
                simplex[d] = xr;
                values[d] = fr;
            } else {
                let (xc, fc) = if fr < values[d] {
                    let xc = along(0.5);
                    let fc = tr.eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = tr.eval(&xc);
                    (xc, fc)
                };
                if fc < values[d].min(fr) {
                    simplex[d] = xc;
                    values[d] = fc;
                } else {
                    for i in 1..=d {
                        let y: Vec<f64> = simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, v)| b + 0.5 * (v - b))
                            .collect();
                        values[i] = tr.eval(&y);
                        simplex[i] = y;
                    }
                }
            }
            trace.push(TracePoint {
                iteration: iterations,
                objective: tr.best.as_ref().map_or(f64::INFINITY, |b| b.1),
            });
        }
    }

    let (best, best_objective) = tr.best.clone().ok_or(Error::Infeasible)?;
    let cfg = fam.config(&best);
    let slack = problem.objective.is_slack().then_some(best_objective);
    let balls = cfg
        .centers
        .iter()
        .zip(&cfg.radii)
        .map(|(c, r)| BallSpec::new(Point::new(c.clone())?, *r))
        .collect::<Result<Vec<_>>>()?;
    let points = cfg
        .points
        .iter()
        .map(|q| Point::new(q.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchResult {
        best,
        best_objective,
        slack,
        iterations,
        improving_steps: tr.improving,
        restarts,
        balls,
        points,
        weights: cfg.weights,
        trace,
    })
}

/// Objective of the family at a free vector, or `None` if the configuration
/// violates a constraint.
pub fn evaluate_objective(problem: &SearchProblem, x: &[f64]) -> Result<Option<f64>> {
    let fam = Family::new(problem)?;
    if x.len() != fam.dim() {
        return Err(Error::param("x", "length must match the free variables"));
    }
    let cfg = fam.config(x);
    let f = fam.objective(&cfg);
    Ok((fam.violation(&cfg) == 0.0 && f.is_finite()).then_some(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn kufarev_family() -> SearchProblem {
        SearchProblem {
            objective: Objective::KufarevSlack,
            balls: vec![
                BallSpec::new(p(&[0.0, 0.0, 0.5]), 0.45).unwrap(),
                BallSpec::new(p(&[0.0, 0.0, -0.5]), 0.45).unwrap(),
            ],
            points: vec![p(&[0.0, 0.0, 0.5]), p(&[0.0, 0.0, -0.5])],
            weights: vec![],
            free: vec![FreeVariable {
                ball: 0,
                field: "pz".into(),
                lower: 0.1,
                upper: 0.9,
            }],
            symmetric: true,
            points_at_centers: false,
            margin: 1e-6,
            penalty: 1e3,
            initial: None,
        }
    }

    #[test]
    fn field_names() {
        assert_eq!(parse_field("cx", 3).unwrap(), Slot::Center(0));
        assert_eq!(parse_field("p2", 3).unwrap(), Slot::Point(2));
        assert_eq!(parse_field("radius", 3).unwrap(), Slot::Radius);
        assert!(parse_field("pw", 3).is_err());
        assert!(parse_field("c3", 3).is_err());
        assert!(parse_field("", 3).is_err());
    }

    #[test]
    fn frozen_search_returns_initial_value() {
        let prob = SearchProblem {
            objective: Objective::SumOfModuli,
            free: vec![],
            symmetric: false,
            weights: vec![1.0, 1.0],
            ..kufarev_family()
        };
        let r = minimize_slack(&prob, 1, 50).unwrap();
        assert_eq!(r.improving_steps, 0);
        assert_eq!(r.iterations, 0);
        let c = Constants::new(3).unwrap();
        assert!((r.best_objective + 2.0 * c.lambda / 0.45).abs() < 1e-14);
        assert!(r.slack.is_none());
    }

    #[test]
    fn kufarev_scan_agrees() {
        let prob = kufarev_family();
        let r = minimize_slack(&prob, 7, 200).unwrap();
        let (mut best_x, mut best_f) = (0.0, f64::INFINITY);
        for i in 0..1000 {
            let x = 0.1 + 0.8 * i as f64 / 999.0;
            if let Some(f) = evaluate_objective(&prob, &[x]).unwrap() {
                if f < best_f {
                    best_x = x;
                    best_f = f;
                }
            }
        }
        assert!((r.best[0] - best_x).abs() <= 0.8 / 999.0, "{} vs {best_x}", r.best[0]);
        assert!(r.best_objective <= best_f + 1e-12);
        assert!(r.best_objective >= -1e-9);
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let prob = kufarev_family();
        let a = minimize_slack(&prob, 3, 100).unwrap();
        let b = minimize_slack(&prob, 3, 100).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
    }

    #[test]
    fn infeasible_initial_is_rejected() {
        let mut prob = kufarev_family();
        prob.initial = Some(vec![0.98]);
        assert!(minimize_slack(&prob, 0, 10).is_err());
    }
}
