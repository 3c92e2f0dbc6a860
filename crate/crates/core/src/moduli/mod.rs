//! Potential functions, reduced moduli and renormalized Dirichlet energies.
//!
//! A [`GreenEvaluator`] owns a list of source points `z_k` and evaluates the
//! regular parts `g_Γ(x, z_k, D) - λ|x - z_k|^(2-n)`. Closed-form backends cover
//! whole balls with `Γ = ∂B` and the unit ball of `R^3` with `Γ = ∅`; every
//! other domain goes through the voxel solver.

mod energy;
mod fields;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{distance, BallSpec, ChargeConfig, Constants, DomainSpec, GammaRule, Point};
use crate::error::{Error, Result};
use crate::grid::{self, ScalarField, SolveOptions, SolveReport};
use crate::kernels;

pub use energy::{
    dirichlet_integral, energy_difference_check, expansion_constants, modulus_limit_estimate,
    AsymptoticTrace, EnergyTrace, Integral,
};
pub use fields::{BumpField, PatchField, PotentialDifference, PotentialField, SumField};

/// Regular parts of `g_Γ(·, z_k, D)` for a fixed list of sources.
pub trait GreenEvaluator: Send + Sync {
    fn constants(&self) -> &Constants;
    fn domain(&self) -> &DomainSpec;
    fn sources(&self) -> &[Point];
    /// `g_Γ(x, z_k, D) - λ|x - z_k|^(2-n)`.
    fn regular(&self, x: &[f64], k: usize) -> f64;
    fn regular_gradient(&self, x: &[f64], k: usize, out: &mut [f64]);
    /// Declared absolute accuracy of every value `g_Γ(z_l, z_k, D)`.
    fn accuracy(&self) -> f64;

    /// `g_Γ(z_k, z_k, D) = -λ r(D, z_k, Γ)^(2-n)`.
    fn diagonal(&self, k: usize) -> f64 {
        self.regular(self.sources()[k].coords(), k)
    }

    fn green(&self, x: &[f64], k: usize) -> Result<f64> {
        let d = distance(x, self.sources()[k].coords());
        if d == 0.0 {
            return Err(Error::Singular);
        }
        Ok(self.constants().fundamental(d) + self.regular(x, k))
    }

    /// `g_Γ(z_l, z_k, D)`, with the diagonal convention for `l = k`.
    fn pair(&self, l: usize, k: usize) -> f64 {
        if l == k {
            return self.diagonal(k);
        }
        let zl = self.sources()[l].coords();
        self.constants()
            .fundamental(distance(zl, self.sources()[k].coords()))
            + self.regular(zl, k)
    }

    fn robin_radius(&self, k: usize) -> Result<f64> {
        self.constants().radius_from_regular(self.diagonal(k))
    }
}

fn check_sources(domain: &DomainSpec, sources: &[Point]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::EmptyConfig);
    }
    for (i, p) in sources.iter().enumerate() {
        p.check_dim(domain.dim())?;
        if !domain.contains(p.coords()) {
            return Err(Error::OutsideDomain(p.coords().to_vec()));
        }
        if let Some(j) = sources[..i].iter().position(|q| q == p) {
            return Err(Error::DuplicatePoints(j, i));
        }
    }
    Ok(())
}

/// Green function of a ball with `Γ = ∂B`, any `n >= 3`.
pub struct BallGreen {
    ball: BallSpec,
    domain: DomainSpec,
    c: Constants,
    sources: Vec<Point>,
}

impl BallGreen {
    pub fn new(ball: BallSpec, sources: Vec<Point>) -> Result<Self> {
        let c = Constants::new(ball.dim())?;
        let domain = DomainSpec::ball(ball.clone(), GammaRule::Full);
        check_sources(&domain, &sources)?;
        Ok(BallGreen {
            ball,
            domain,
            c,
            sources,
        })
    }
}

impl GreenEvaluator for BallGreen {
    fn constants(&self) -> &Constants {
        &self.c
    }
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn sources(&self) -> &[Point] {
        &self.sources
    }
    fn regular(&self, x: &[f64], k: usize) -> f64 {
        kernels::ball_green_regular(x, self.sources[k].coords(), &self.ball, &self.c)
    }
    fn regular_gradient(&self, x: &[f64], k: usize, out: &mut [f64]) {
        kernels::ball_green_regular_gradient(x, self.sources[k].coords(), &self.ball, &self.c, out)
    }
    fn accuracy(&self) -> f64 {
        0.0
    }
    fn diagonal(&self, k: usize) -> f64 {
        let r = kernels::ball_harmonic_radius(&self.sources[k], &self.ball, &self.c)
            .expect("sources are validated at construction");
        -self.c.lambda * self.c.pow_2mn(r)
    }
}

/// Neumann function of the unit ball in `R^3`. Sources must avoid the centre.
pub struct BallNeumann3 {
    domain: DomainSpec,
    c: Constants,
    sources: Vec<Point>,
}

impl BallNeumann3 {
    pub fn new(sources: Vec<Point>) -> Result<Self> {
        let domain = DomainSpec::ball(BallSpec::unit(3), GammaRule::Empty);
        check_sources(&domain, &sources)?;
        if let Some(p) = sources.iter().find(|p| p.norm() == 0.0) {
            return Err(Error::param(
                "points",
                format!("the unit-ball Neumann formula is undefined at {:?}", p.coords()),
            ));
        }
        Ok(BallNeumann3 {
            domain,
            c: Constants::new(3)?,
            sources,
        })
    }
}

impl GreenEvaluator for BallNeumann3 {
    fn constants(&self) -> &Constants {
        &self.c
    }
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn sources(&self) -> &[Point] {
        &self.sources
    }
    fn regular(&self, x: &[f64], k: usize) -> f64 {
        kernels::neumann_regular(x, self.sources[k].coords())
    }
    fn regular_gradient(&self, x: &[f64], k: usize, out: &mut [f64]) {
        kernels::neumann_regular_gradient(x, self.sources[k].coords(), out)
    }
    fn accuracy(&self) -> f64 {
        0.0
    }
    fn diagonal(&self, k: usize) -> f64 {
        kernels::ball_neumann_regular_diagonal(&self.sources[k])
            .expect("sources are validated at construction")
    }
}

/// Grid resolution and solver controls for the voxel backend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOptions {
    /// Spacing used when the domain does not carry its own.
    pub h: f64,
    pub solve: SolveOptions,
    /// Estimate accuracy by re-solving at `2h`.
    pub estimate_error: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            h: 1.0 / 32.0,
            solve: SolveOptions::default(),
            estimate_error: true,
        }
    }
}

/// Voxel-solver backend: one regular-part field per source.
pub struct GridGreen {
    domain: DomainSpec,
    c: Constants,
    sources: Vec<Point>,
    fields: Vec<ScalarField>,
    reports: Vec<SolveReport>,
    accuracy: f64,
}

impl GridGreen {
    pub fn new(domain: &DomainSpec, sources: Vec<Point>, opts: &GridOptions) -> Result<Self> {
        let c = Constants::new(domain.dim())?;
        check_sources(domain, &sources)?;
        let h = domain.preferred_h().unwrap_or(opts.h);
        let vox = domain.voxelize(h)?;
        let (fields, reports) = solve_all(&vox, &sources, &c, &opts.solve)?;
        let mut g = GridGreen {
            domain: DomainSpec::Voxel(vox),
            c,
            sources,
            fields,
            reports,
            accuracy: 0.0,
        };
        let values = g.pair_matrix();
        let scale = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        g.accuracy = h * scale;
        if opts.estimate_error && matches!(domain, DomainSpec::Ball(_)) {
            let coarse = domain.voxelize(2.0 * h).and_then(|v| {
                let (f, _) = solve_all(&v, &g.sources, &g.c, &opts.solve)?;
                Ok(GridGreen {
                    domain: DomainSpec::Voxel(v),
                    c: g.c,
                    sources: g.sources.clone(),
                    fields: f,
                    reports: Vec::new(),
                    accuracy: 0.0,
                })
            });
            if let Ok(coarse) = coarse {
                let cv = coarse.pair_matrix();
                g.accuracy = values
                    .iter()
                    .flatten()
                    .zip(cv.iter().flatten())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            }
        }
        Ok(g)
    }

    pub fn reports(&self) -> &[SolveReport] {
        &self.reports
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    fn pair_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.sources.len();
        (0..m)
            .map(|l| (0..m).map(|k| self.pair(l, k)).collect())
            .collect()
    }
}

fn solve_all(
    vox: &Arc<crate::domain::VoxelDomain>,
    sources: &[Point],
    c: &Constants,
    opts: &SolveOptions,
) -> Result<(Vec<ScalarField>, Vec<SolveReport>)> {
    let mut fields = Vec::with_capacity(sources.len());
    let mut reports = Vec::with_capacity(sources.len());
    for z in sources {
        let (f, r) = if vox.gamma_empty() {
            grid::solve_neumann_regular_part(vox, z, c, opts)?
        } else {
            grid::solve_robin_regular_part(vox, z, c, opts.tol, opts.max_iter)?
        };
        if !r.converged {
            return Err(Error::NonConvergence {
                iterations: r.iterations,
                residual: r.residual,
            });
        }
        fields.push(f);
        reports.push(r);
    }
    Ok((fields, reports))
}

impl GreenEvaluator for GridGreen {
    fn constants(&self) -> &Constants {
        &self.c
    }
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn sources(&self) -> &[Point] {
        &self.sources
    }
    fn regular(&self, x: &[f64], k: usize) -> f64 {
        self.fields[k].interpolate(x).unwrap_or(f64::NAN)
    }
    fn regular_gradient(&self, x: &[f64], k: usize, out: &mut [f64]) {
        match self.fields[k].gradient(x) {
            Ok(g) => out.copy_from_slice(&g),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }
    fn accuracy(&self) -> f64 {
        self.accuracy
    }
}

/// Adds a constant to every value of another evaluator; moduli with zero-sum
/// weights must not notice.
pub struct GaugeShift<'a> {
    pub inner: &'a dyn GreenEvaluator,
    pub shift: f64,
}

impl GreenEvaluator for GaugeShift<'_> {
    fn constants(&self) -> &Constants {
        self.inner.constants()
    }
    fn domain(&self) -> &DomainSpec {
        self.inner.domain()
    }
    fn sources(&self) -> &[Point] {
        self.inner.sources()
    }
    fn regular(&self, x: &[f64], k: usize) -> f64 {
        self.inner.regular(x, k) + self.shift
    }
    fn regular_gradient(&self, x: &[f64], k: usize, out: &mut [f64]) {
        self.inner.regular_gradient(x, k, out)
    }
    fn accuracy(&self) -> f64 {
        self.inner.accuracy()
    }
    fn diagonal(&self, k: usize) -> f64 {
        self.inner.diagonal(k) + self.shift
    }
}

/// Closed-form backend when one exists, otherwise the voxel solver.
pub fn build_evaluator(
    domain: &DomainSpec,
    sources: Vec<Point>,
    opts: &GridOptions,
) -> Result<Box<dyn GreenEvaluator>> {
    if domain.closed_form() {
        if let DomainSpec::Ball(b) = domain {
            return Ok(match b.gamma {
                GammaRule::Empty => Box::new(BallNeumann3::new(sources)?),
                _ => Box::new(BallGreen::new(b.ball.clone(), sources)?),
            });
        }
    }
    Ok(Box::new(GridGreen::new(domain, sources, opts)?))
}

/// Reduced modulus with its pair terms and expansion constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusResult {
    #[serde(rename = "M")]
    pub m: f64,
    /// `pair_terms[k][l] = δ_k δ_l g_Γ(z_l, z_k, D)`.
    pub pair_terms: Vec<Vec<f64>>,
    /// Constants `a_k` in the expansion of the potential at `z_k`.
    pub a: Vec<f64>,
    /// `(Σ|δ_k|)^2` times the backend accuracy.
    pub error_bar: f64,
}

/// Positions of the configuration's points among the evaluator's sources.
pub(crate) fn source_indices(g: &dyn GreenEvaluator, cfg: &ChargeConfig) -> Result<Vec<usize>> {
    cfg.points()
        .iter()
        .map(|p| {
            g.sources().iter().position(|s| s == p).ok_or_else(|| {
                Error::ChargeMismatch(format!("{:?} is not a source of the evaluator", p.coords()))
            })
        })
        .collect()
}

pub fn reduced_modulus(g: &dyn GreenEvaluator, cfg: &ChargeConfig) -> Result<ModulusResult> {
    let idx = source_indices(g, cfg)?;
    if g.domain().gamma_empty() && !cfg.is_neutral() {
        return Err(Error::NonZeroCharge(cfg.weights().iter().sum()));
    }
    let w = cfg.weights();
    let m = idx.len();
    let gmat: Vec<Vec<f64>> = (0..m)
        .map(|k| (0..m).map(|l| g.pair(idx[l], idx[k])).collect())
        .collect();
    let pair_terms: Vec<Vec<f64>> = (0..m)
        .map(|k| (0..m).map(|l| w[k] * w[l] * gmat[k][l]).collect())
        .collect();
    // expansion of u at z_k: own regular part plus the other sources' values
    let a: Vec<f64> = (0..m)
        .map(|k| (0..m).map(|l| w[l] * gmat[l][k]).sum())
        .collect();
    let total: f64 = w.iter().zip(&a).map(|(d, ak)| d * ak).sum();
    let abs_sum: f64 = w.iter().map(|d| d.abs()).sum();
    Ok(ModulusResult {
        m: total,
        pair_terms,
        a,
        error_bar: abs_sum * abs_sum * g.accuracy(),
    })
}

/// `u(x) = Σ δ_k g_Γ(x, z_k, D)`.
pub fn potential_eval(g: &dyn GreenEvaluator, cfg: &ChargeConfig, x: &Point) -> Result<f64> {
    let idx = source_indices(g, cfg)?;
    x.check_dim(g.constants().n)?;
    let mut s = 0.0;
    for (k, w) in idx.iter().zip(cfg.weights()) {
        s += w * g.green(x.coords(), *k)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::domain::make_constants;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_center_charge() {
        let g = BallGreen::new(BallSpec::unit(3), vec![Point::origin(3)]).unwrap();
        let cfg = ChargeConfig::single(Point::origin(3), 1.0);
        let res = reduced_modulus(&g, &cfg).unwrap();
        assert!((res.m + 1.0 / (4.0 * PI)).abs() < 1e-15);
        let u = potential_eval(&g, &cfg, &p(&[0.5, 0.0, 0.0])).unwrap();
        assert!((u - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn neumann_pair_matches_kernel() {
        let (a1, a2) = (p(&[0.3, 0.0, 0.0]), p(&[-0.3, 0.0, 0.0]));
        let g = BallNeumann3::new(vec![a1.clone(), a2.clone()]).unwrap();
        let cfg = ChargeConfig::new(vec![a1.clone(), a2.clone()], vec![1.0, -1.0]).unwrap();
        let res = reduced_modulus(&g, &cfg).unwrap();
        let k = kernels::neumann_modulus_two_points_3d(&a1, &a2).unwrap();
        assert!((res.m - k).abs() < 1e-12);
        let on_plane = potential_eval(&g, &cfg, &p(&[0.0, 0.2, -0.1])).unwrap();
        assert!(on_plane.abs() < 1e-14);
    }

    #[test]
    fn internal_consistency_and_symmetry() {
        let pts = vec![p(&[0.1, 0.2, 0.0]), p(&[-0.3, 0.1, 0.2]), p(&[0.0, -0.4, 0.3])];
        let cfg = ChargeConfig::new(pts.clone(), vec![1.0, -0.5, 2.0]).unwrap();
        let g = BallGreen::new(BallSpec::unit(3), pts).unwrap();
        let res = reduced_modulus(&g, &cfg).unwrap();
        let double: f64 = res.pair_terms.iter().flatten().sum();
        assert!((double - res.m).abs() < 1e-12);
        for k in 0..3 {
            for l in 0..3 {
                assert!((res.pair_terms[k][l] - res.pair_terms[l][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_foreign_points() {
        let g = BallGreen::new(BallSpec::unit(3), vec![Point::origin(3)]).unwrap();
        let cfg = ChargeConfig::single(p(&[0.1, 0.0, 0.0]), 1.0);
        assert!(matches!(reduced_modulus(&g, &cfg), Err(Error::ChargeMismatch(_))));
    }

    #[test]
    fn grid_backend_close_to_closed_form() {
        let c = make_constants(3).unwrap();
        let dom = DomainSpec::ball(BallSpec::unit(3), GammaRule::Cap {
            normal: vec![0.0, 0.0, 1.0],
            offset: -2.0,
        });
        let opts = GridOptions {
            h: 1.0 / 16.0,
            ..Default::default()
        };
        let g = GridGreen::new(&dom, vec![Point::origin(3)], &opts).unwrap();
        let r = g.robin_radius(0).unwrap();
        assert!((r - 1.0).abs() < 0.02, "{r}");
        assert!(g.accuracy() > 0.0 && g.accuracy() < 0.05 * c.lambda);
    }
}
