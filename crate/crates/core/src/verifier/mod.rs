//! Numerical checks of the composition inequalities for reduced moduli and of
//! the consequences drawn from them.
//!
//! Every check returns a [`VerificationReport`] whose `slack` is nonnegative
//! exactly when the inequality holds; `holds` compares it with the declared
//! error bar. Reports depend only on their inputs.

mod structure;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{BallSpec, BoundaryLabel, ChargeConfig, Constants, DomainSpec, GammaRule, Point};
use crate::error::{Error, Result};
use crate::kernels;
use crate::moduli::{
    build_evaluator, dirichlet_integral, reduced_modulus, GreenEvaluator, GridOptions,
    PotentialDifference, PotentialField,
};
use crate::quadrature::QuadratureOptions;

use structure::{
    check_containment, check_disjoint, check_spacing, is_empty, is_full, relation, step,
    structural, whole_ball, BallRelation, Placed,
};

/// Smallest error bar attached to any report, covering round-off in
/// closed-form evaluations.
pub const MIN_ERROR_BAR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub error_bar: f64,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_with_corrections: Option<f64>,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl VerificationReport {
    fn new(check: &str, lhs: f64, rhs: f64, slack: f64, error_bar: f64) -> Self {
        let error_bar = error_bar.max(MIN_ERROR_BAR);
        VerificationReport {
            check: check.into(),
            lhs,
            rhs,
            slack,
            error_bar,
            holds: slack >= -error_bar,
            slack_with_corrections: None,
            details: serde_json::Value::Null,
        }
    }

    pub const CSV_HEADER: &'static str = "check,lhs,rhs,slack,error_bar,holds,slack_with_corrections";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{},{}",
            self.check,
            self.lhs,
            self.rhs,
            self.slack,
            self.error_bar,
            self.holds,
            self.slack_with_corrections
                .map_or(String::new(), |v| format!("{v:e}"))
        )
    }
}

/// Which composition inequality to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// `M(D) >= Σ M(D_i)`: parts whose boundaries inside `D` are Dirichlet.
    Superadditive,
    /// `Σ M(D_i) >= M(D)`: parts whose Dirichlet sets lie in that of `D`.
    Subadditive,
}

/// A domain with its charge configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub domain: DomainSpec,
    pub charges: ChargeConfig,
}

/// A parent configuration and non-overlapping parts carrying its charges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    pub parent: Piece,
    pub parts: Vec<Piece>,
    /// `index_map[i][j]` is the parent index of charge `j` of part `i`.
    /// Derived from coordinates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_map: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub grid: GridOptions,
    /// Also integrate `I(u - u_i, D_i)` and report the corrected slack.
    pub corrections: bool,
    pub quadrature: QuadratureOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid: GridOptions::default(),
            corrections: false,
            quadrature: QuadratureOptions::default(),
        }
    }
}

fn mode_name(mode: CompositionMode) -> &'static str {
    match mode {
        CompositionMode::Superadditive => "composition_superadditive",
        CompositionMode::Subadditive => "composition_subadditive",
    }
}

fn resolve_index_map(spec: &DecompositionSpec) -> Result<Vec<Vec<usize>>> {
    let parent = &spec.parent.charges;
    let m = parent.len();
    let map = match &spec.index_map {
        Some(map) => {
            if map.len() != spec.parts.len() {
                return Err(structural("charge-map", "index map does not list every part"));
            }
            for (i, (row, part)) in map.iter().zip(&spec.parts).enumerate() {
                if row.len() != part.charges.len() {
                    return Err(structural("charge-map", format!("index map row {i} has wrong length")));
                }
            }
            map.clone()
        }
        None => spec
            .parts
            .iter()
            .enumerate()
            .map(|(i, part)| {
                part.charges
                    .points()
                    .iter()
                    .map(|p| {
                        parent.points().iter().position(|q| q == p).ok_or_else(|| {
                            structural(
                                "charge-map",
                                format!("part {i} has a charge at {:?} absent from the parent", p.coords()),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
    };
    let mut seen = vec![false; m];
    for (i, row) in map.iter().enumerate() {
        for (j, &k) in row.iter().enumerate() {
            if k >= m || seen[k] {
                return Err(structural("charge-map", format!("charge {j} of part {i} maps to {k}")));
            }
            seen[k] = true;
            if spec.parts[i].charges.points()[j] != parent.points()[k] {
                return Err(structural("charge-map", format!("charge {j} of part {i} is not at z_{k}")));
            }
            let (a, b) = (spec.parts[i].charges.weights()[j], parent.weights()[k]);
            if a != b {
                return Err(structural("charge-weights", format!("weight {a} of part {i} differs from {b}")));
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(structural("charge-map", format!("parent charge {k} belongs to no part")));
    }
    Ok(map)
}

/// Lazily voxelized parent, shared by the facet-level checks.
struct ParentLattice<'a> {
    domain: &'a DomainSpec,
    h: f64,
    placed: Option<Placed>,
}

impl<'a> ParentLattice<'a> {
    fn get(&mut self) -> Result<&Placed> {
        if self.placed.is_none() {
            self.placed = Some(Placed::new(self.domain, self.h, None)?);
        }
        Ok(self.placed.as_ref().unwrap())
    }
}

fn check_superadditive(parent: &DomainSpec, parts: &[&DomainSpec], h: f64) -> Result<()> {
    let mut lattice = ParentLattice {
        domain: parent,
        h,
        placed: None,
    };
    for (i, part) in parts.iter().enumerate() {
        if let (Some((bi, gi)), Some((b, g))) = (whole_ball(part), whole_ball(parent)) {
            match relation(bi, b) {
                BallRelation::Same => {
                    if !g.subset_of(gi, b.radius) {
                        return Err(structural("parent-dirichlet-kept", format!("part {i} drops parent Dirichlet boundary")));
                    }
                    continue;
                }
                BallRelation::StrictlyInside => {
                    if !is_full(gi, bi.radius) {
                        return Err(structural(
                            "interior-dirichlet",
                            format!("boundary of part {i} inside the parent is not all Dirichlet"),
                        ));
                    }
                    continue;
                }
                BallRelation::Other => {}
            }
        }
        let pp = lattice.get()?;
        let pi = Placed::new(part, h, Some(pp.voxels()))?;
        for (g, dir, label) in pi.facets() {
            if pp.occupied(step(g, dir)) && label != BoundaryLabel::Dirichlet {
                return Err(structural(
                    "interior-dirichlet",
                    format!("part {i} has a free facet inside the parent at {g:?}"),
                ));
            }
        }
        for (g, dir, label) in pp.facets() {
            if label == BoundaryLabel::Dirichlet
                && pi.occupied(g)
                && pi.label(g, dir) != Some(BoundaryLabel::Dirichlet)
            {
                return Err(structural(
                    "parent-dirichlet-kept",
                    format!("parent Dirichlet facet at {g:?} is free in part {i}"),
                ));
            }
        }
    }
    Ok(())
}

fn check_subadditive(parent: &DomainSpec, parts: &[&DomainSpec], h: f64) -> Result<()> {
    let mut lattice = ParentLattice {
        domain: parent,
        h,
        placed: None,
    };
    for (i, part) in parts.iter().enumerate() {
        if let (Some((bi, gi)), Some((b, g))) = (whole_ball(part), whole_ball(parent)) {
            let ok = match relation(bi, b) {
                BallRelation::Same => Some(gi.subset_of(g, b.radius)),
                BallRelation::StrictlyInside => Some(is_empty(gi, bi.radius)),
                BallRelation::Other => None,
            };
            match ok {
                Some(true) => continue,
                Some(false) => {
                    return Err(structural(
                        "dirichlet-subset",
                        format!("part {i} has Dirichlet boundary outside that of the parent"),
                    ))
                }
                None => {}
            }
        }
        let pp = lattice.get()?;
        let pi = Placed::new(part, h, Some(pp.voxels()))?;
        for (g, dir, label) in pi.facets() {
            if label == BoundaryLabel::Dirichlet && pp.label(g, dir) != Some(BoundaryLabel::Dirichlet) {
                return Err(structural(
                    "dirichlet-subset",
                    format!("Dirichlet facet of part {i} at {g:?} is not Dirichlet in the parent"),
                ));
            }
        }
    }
    Ok(())
}

/// Checks the structural conditions of a decomposition without computing
/// any modulus.
pub fn check_decomposition(
    spec: &DecompositionSpec,
    mode: CompositionMode,
    default_h: f64,
) -> Result<()> {
    let n = spec.parent.domain.dim();
    if spec.parts.is_empty() {
        return Err(Error::param("parts", "need at least one part"));
    }
    spec.parent.charges.validate(&spec.parent.domain)?;
    for part in &spec.parts {
        if part.domain.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: part.domain.dim(),
            });
        }
        part.charges.validate(&part.domain)?;
    }
    resolve_index_map(spec)?;
    let parts: Vec<&DomainSpec> = spec.parts.iter().map(|p| &p.domain).collect();
    let mut all = vec![&spec.parent.domain];
    all.extend(parts.iter().copied());
    let h = check_spacing(&all, default_h)?;
    for (i, part) in parts.iter().enumerate() {
        check_containment(part, &spec.parent.domain, h, &format!("part {i}"))?;
    }
    check_disjoint(&parts, h)?;
    match mode {
        CompositionMode::Superadditive => check_superadditive(&spec.parent.domain, &parts, h),
        CompositionMode::Subadditive => check_subadditive(&spec.parent.domain, &parts, h),
    }
}

fn evaluator_for(piece: &Piece, opts: &GridOptions) -> Result<Box<dyn GreenEvaluator>> {
    build_evaluator(&piece.domain, piece.charges.points().to_vec(), opts)
}

/// `I(u - u_i, D_i)` with its quadrature error.
fn correction(
    u: &dyn GreenEvaluator,
    ucfg: &ChargeConfig,
    ui: &dyn GreenEvaluator,
    uicfg: &ChargeConfig,
    opts: &QuadratureOptions,
) -> Result<(f64, f64)> {
    let diff = PotentialDifference::new(PotentialField::new(u, ucfg)?, PotentialField::new(ui, uicfg)?)?;
    let i = dirichlet_integral(&diff, ui.domain(), &[], opts)?;
    Ok((i.value, i.error))
}

pub fn verify_composition(
    spec: &DecompositionSpec,
    mode: CompositionMode,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    check_decomposition(spec, mode, opts.grid.h)?;
    let parent = evaluator_for(&spec.parent, &opts.grid)?;
    let mp = reduced_modulus(parent.as_ref(), &spec.parent.charges)?;
    let mut parts = Vec::with_capacity(spec.parts.len());
    let mut moduli = Vec::with_capacity(spec.parts.len());
    for piece in &spec.parts {
        let g = evaluator_for(piece, &opts.grid)?;
        moduli.push(reduced_modulus(g.as_ref(), &piece.charges)?);
        parts.push(g);
    }
    let sum: f64 = moduli.iter().map(|m| m.m).sum();
    let mut error_bar = mp.error_bar + moduli.iter().map(|m| m.error_bar).sum::<f64>();
    let (lhs, rhs) = match mode {
        CompositionMode::Superadditive => (mp.m, sum),
        CompositionMode::Subadditive => (sum, mp.m),
    };
    let mut details = json!({
        "parent_modulus": mp.m,
        "part_moduli": moduli.iter().map(|m| m.m).collect::<Vec<_>>(),
    });
    let mut corrected = None;
    if opts.corrections {
        let mut total = 0.0;
        let mut values = Vec::new();
        for (g, piece) in parts.iter().zip(&spec.parts) {
            let (v, e) = correction(
                parent.as_ref(),
                &spec.parent.charges,
                g.as_ref(),
                &piece.charges,
                &opts.quadrature,
            )?;
            total += v;
            error_bar += e;
            values.push(v);
        }
        details["corrections"] = json!(values);
        corrected = Some(lhs - rhs - total);
    }
    let mut report = VerificationReport::new(mode_name(mode), lhs, rhs, lhs - rhs, error_bar);
    report.slack_with_corrections = corrected;
    report.details = details;
    Ok(report)
}

/// Point charges in disjoint balls of `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointChargeSpec {
    pub balls: Vec<BallSpec>,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Radii of the enclosing balls used to approach the whole space.
pub const ENCLOSING_RADII: [f64; 3] = [10.0, 100.0, 1000.0];

fn validate_point_charges(spec: &PointChargeSpec) -> Result<Constants> {
    let m = spec.balls.len();
    if m == 0 {
        return Err(Error::EmptyConfig);
    }
    if spec.points.len() != m || spec.weights.len() != m {
        return Err(Error::LengthMismatch {
            points: spec.points.len(),
            weights: spec.weights.len().min(m),
        });
    }
    let n = spec.points[0].dim();
    let c = Constants::new(n)?;
    for (b, p) in spec.balls.iter().zip(&spec.points) {
        b.center.check_dim(n)?;
        p.check_dim(n)?;
        if !b.contains(p.coords()) {
            return Err(Error::OutsideDomain(p.coords().to_vec()));
        }
    }
    if spec.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if !spec.balls[i].disjoint_from(&spec.balls[j]) {
                return Err(Error::Overlap(format!("balls {i} and {j}")));
            }
        }
    }
    Ok(c)
}

/// `-Σ δ_l^2 r_l^(2-n) <= Σ_{l != p} δ_l δ_p |x_l - x_p|^(2-n)` with `r_l` the
/// harmonic radius of the `l`-th ball at `x_l`.
///
/// The details carry the same slack obtained from the composition check in
/// growing enclosing balls, scaled by `1/λ`, which must approach it.
pub fn verify_point_charges(spec: &PointChargeSpec) -> Result<VerificationReport> {
    let c = validate_point_charges(spec)?;
    let n = c.n;
    let w = &spec.weights;
    let mut lhs = 0.0;
    for ((b, p), d) in spec.balls.iter().zip(&spec.points).zip(w) {
        let r = kernels::ball_harmonic_radius(p, b, &c)?;
        lhs -= d * d * r.powf(2.0 - n as f64);
    }
    let mut rhs = 0.0;
    for l in 0..w.len() {
        for p in 0..w.len() {
            if l != p {
                rhs += w[l] * w[p] * spec.points[l].distance(&spec.points[p]).powf(2.0 - n as f64);
            }
        }
    }
    let slack = rhs - lhs;
    let scale = lhs.abs().max(rhs.abs());
    let mut report =
        VerificationReport::new("point_charges", lhs, rhs, slack, MIN_ERROR_BAR.max(1e-12 * scale));

    let centroid = spec
        .points
        .iter()
        .fold(Point::origin(n), |acc, p| acc.add(p))
        .scale(1.0 / spec.points.len() as f64);
    let cfg = ChargeConfig::new(spec.points.clone(), w.clone())?;
    let mut sweep = Vec::new();
    for rho in ENCLOSING_RADII {
        let outer = BallSpec::new(centroid.clone(), rho)?;
        if !spec.balls.iter().all(|b| b.inside(&outer)) {
            continue;
        }
        let decomposition = DecompositionSpec {
            parent: Piece {
                domain: DomainSpec::ball(outer, GammaRule::Full),
                charges: cfg.clone(),
            },
            parts: spec
                .balls
                .iter()
                .zip(&spec.points)
                .zip(w)
                .map(|((b, p), d)| Piece {
                    domain: DomainSpec::ball(b.clone(), GammaRule::Full),
                    charges: ChargeConfig::single(p.clone(), *d),
                })
                .collect(),
            index_map: None,
        };
        let r = verify_composition(
            &decomposition,
            CompositionMode::Superadditive,
            &VerifyOptions::default(),
        )?;
        sweep.push(json!({"rho": rho, "scaled_slack": r.slack / c.lambda}));
    }
    let gaps: Vec<f64> = sweep
        .iter()
        .map(|s| (s["scaled_slack"].as_f64().unwrap_or(f64::NAN) - slack).abs())
        .collect();
    let monotone = gaps.windows(2).all(|g| g[1] <= g[0] + 1e-12 * (1.0 + scale));
    report.details = json!({
        "enclosing_sweep": sweep,
        "sweep_gaps": gaps,
        "sweep_monotone": monotone,
    });
    Ok(report)
}

/// Runs [`verify_point_charges`] over many configurations in parallel; the
/// output order matches the input.
pub fn verify_point_charges_batch(specs: &[PointChargeSpec]) -> Vec<Result<VerificationReport>> {
    specs.par_iter().map(verify_point_charges).collect()
}

/// Two disjoint balls in the unit ball of `R^3` with a charge in each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KufarevSpec {
    pub balls: [BallSpec; 2],
    pub points: [Point; 2],
}

/// `-λ(1/r_1 + 1/r_2)` against the Neumann modulus of the unit ball with
/// charges `+1` at `a_1` and `-1` at `a_2`.
pub fn verify_kufarev_3d(spec: &KufarevSpec) -> Result<VerificationReport> {
    let c = Constants::new(3)?;
    let unit = BallSpec::unit(3);
    for (i, (b, p)) in spec.balls.iter().zip(&spec.points).enumerate() {
        b.center.check_dim(3)?;
        p.check_dim(3)?;
        if !b.inside(&unit) {
            return Err(Error::Containment(format!("ball {i} is not inside the unit ball")));
        }
        if !b.contains(p.coords()) {
            return Err(Error::OutsideDomain(p.coords().to_vec()));
        }
    }
    if !spec.balls[0].disjoint_from(&spec.balls[1]) {
        return Err(Error::Overlap("balls 0 and 1".into()));
    }
    let [a1, a2] = &spec.points;
    let r1 = kernels::ball_harmonic_radius(a1, &spec.balls[0], &c)?;
    let r2 = kernels::ball_harmonic_radius(a2, &spec.balls[1], &c)?;
    let lhs = -c.lambda * (1.0 / r1 + 1.0 / r2);
    let rhs = kernels::neumann_modulus_two_points_3d(a1, a2)?;
    let expanded = c.lambda * kernels::neumann_modulus_expanded_3d(a1, a2)?;
    let slack = rhs - lhs;
    let mut report = VerificationReport::new(
        "kufarev",
        lhs,
        rhs,
        slack,
        MIN_ERROR_BAR.max(1e-12 * rhs.abs().max(lhs.abs())),
    );
    report.details = json!({
        "harmonic_radii": [r1, r2],
        "rhs_expanded": expanded,
        "expanded_difference": (expanded - rhs).abs(),
    });
    Ok(report)
}

/// How the larger domain extends the smaller one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionDirection {
    /// `D` grows through its Dirichlet boundary: `M(D̃) >= M(D)`.
    AcrossGamma,
    /// `D` grows through its free boundary with `Γ̃ = Γ`: `M(D̃) <= M(D)`.
    AcrossFree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionSpec {
    pub domain: DomainSpec,
    pub extended: DomainSpec,
    pub charges: ChargeConfig,
    pub direction: ExtensionDirection,
}

fn dirichlet_facets(p: &Placed) -> std::collections::HashSet<([i64; 3], usize)> {
    p.facets()
        .into_iter()
        .filter(|f| f.2 == BoundaryLabel::Dirichlet)
        .map(|f| (f.0, f.1))
        .collect()
}

fn check_extension(d: &DomainSpec, dt: &DomainSpec, dir: ExtensionDirection, h: f64) -> Result<()> {
    check_containment(d, dt, h, "the domain")?;
    if let (Some((b, g)), Some((bt, gt))) = (whole_ball(d), whole_ball(dt)) {
        let ok = match (relation(b, bt), dir) {
            (BallRelation::Same, ExtensionDirection::AcrossGamma) => Some(gt.subset_of(g, b.radius)),
            (BallRelation::Same, ExtensionDirection::AcrossFree) => {
                Some(gt.subset_of(g, b.radius) && g.subset_of(gt, b.radius))
            }
            (BallRelation::StrictlyInside, ExtensionDirection::AcrossGamma) => Some(is_full(g, b.radius)),
            (BallRelation::StrictlyInside, ExtensionDirection::AcrossFree) => {
                Some(is_empty(g, b.radius) && is_empty(gt, bt.radius))
            }
            (BallRelation::Other, _) => None,
        };
        match ok {
            Some(true) => return Ok(()),
            Some(false) => {
                return Err(structural("extension", "boundary labels do not fit the direction"))
            }
            None => {}
        }
    }
    let pt = Placed::new(dt, h, None)?;
    let pd = Placed::new(d, h, Some(pt.voxels()))?;
    let wanted = match dir {
        ExtensionDirection::AcrossGamma => BoundaryLabel::Dirichlet,
        ExtensionDirection::AcrossFree => BoundaryLabel::Neumann,
    };
    for (g, k, label) in pd.facets() {
        if pt.occupied(step(g, k)) && label != wanted {
            return Err(structural(
                "extension",
                format!("facet at {g:?} inside the extension is {label:?}"),
            ));
        }
    }
    match dir {
        ExtensionDirection::AcrossGamma => {
            for (g, k, label) in pt.facets() {
                if label == BoundaryLabel::Dirichlet
                    && pd.occupied(g)
                    && pd.label(g, k) != Some(BoundaryLabel::Dirichlet)
                {
                    return Err(structural(
                        "extension",
                        format!("Dirichlet facet at {g:?} of the extension is free in the domain"),
                    ));
                }
            }
        }
        ExtensionDirection::AcrossFree => {
            if dirichlet_facets(&pd) != dirichlet_facets(&pt) {
                return Err(structural("extension", "Dirichlet sets differ"));
            }
        }
    }
    Ok(())
}

pub fn verify_extension_monotonicity(
    spec: &ExtensionSpec,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let (d, dt) = (&spec.domain, &spec.extended);
    if d.dim() != dt.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            got: dt.dim(),
        });
    }
    spec.charges.validate(d)?;
    spec.charges.validate(dt)?;
    let h = check_spacing(&[d, dt], opts.grid.h)?;
    check_extension(d, dt, spec.direction, h)?;
    let g = build_evaluator(d, spec.charges.points().to_vec(), &opts.grid)?;
    let gt = build_evaluator(dt, spec.charges.points().to_vec(), &opts.grid)?;
    let m = reduced_modulus(g.as_ref(), &spec.charges)?;
    let mt = reduced_modulus(gt.as_ref(), &spec.charges)?;
    let (lhs, rhs) = match spec.direction {
        ExtensionDirection::AcrossGamma => (mt.m, m.m),
        ExtensionDirection::AcrossFree => (m.m, mt.m),
    };
    let mut error_bar = m.error_bar + mt.error_bar;
    let mut details = json!({"modulus": m.m, "extended_modulus": mt.m});
    let mut corrected = None;
    if opts.corrections {
        let (v, e) = correction(gt.as_ref(), &spec.charges, g.as_ref(), &spec.charges, &opts.quadrature)?;
        error_bar += e;
        details["correction"] = json!(v);
        corrected = Some(lhs - rhs - v);
    }
    let name = match spec.direction {
        ExtensionDirection::AcrossGamma => "extension_across_gamma",
        ExtensionDirection::AcrossFree => "extension_across_free",
    };
    let mut report = VerificationReport::new(name, lhs, rhs, lhs - rhs, error_bar);
    report.slack_with_corrections = corrected;
    report.details = details;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn ball(c: &[f64], r: f64) -> BallSpec {
        BallSpec::new(p(c), r).unwrap()
    }

    fn two_ball_split(gamma_inner: GammaRule) -> DecompositionSpec {
        let z = [p(&[-0.4, 0.0, 0.0]), p(&[0.4, 0.0, 0.0])];
        DecompositionSpec {
            parent: Piece {
                domain: DomainSpec::ball(BallSpec::unit(3), GammaRule::Full),
                charges: ChargeConfig::new(z.to_vec(), vec![1.0, 1.0]).unwrap(),
            },
            parts: z
                .iter()
                .map(|zk| Piece {
                    domain: DomainSpec::ball(BallSpec::new(zk.clone(), 0.3).unwrap(), gamma_inner.clone()),
                    charges: ChargeConfig::single(zk.clone(), 1.0),
                })
                .collect(),
            index_map: None,
        }
    }

    #[test]
    fn superadditive_balls_hold() {
        let r = verify_composition(
            &two_ball_split(GammaRule::Full),
            CompositionMode::Superadditive,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(r.holds && r.slack > 0.0, "{r:?}");
    }

    #[test]
    fn neumann_inner_parts_are_rejected() {
        let e = check_decomposition(
            &two_ball_split(GammaRule::Empty),
            CompositionMode::Superadditive,
            1.0 / 16.0,
        );
        assert!(matches!(e, Err(Error::NonZeroCharge(_))), "{e:?}");
    }

    #[test]
    fn capped_inner_part_violates_first_condition() {
        let cap = GammaRule::Cap {
            normal: vec![1.0, 0.0, 0.0],
            offset: 0.0,
        };
        let e = check_decomposition(&two_ball_split(cap), CompositionMode::Superadditive, 1.0 / 16.0);
        assert!(matches!(e, Err(Error::Structural { ref condition, .. }) if condition == "interior-dirichlet"), "{e:?}");
    }

    #[test]
    fn weights_must_match() {
        let mut s = two_ball_split(GammaRule::Full);
        s.parts[0].charges = ChargeConfig::single(p(&[-0.4, 0.0, 0.0]), 2.0);
        let e = check_decomposition(&s, CompositionMode::Superadditive, 1.0 / 16.0);
        assert!(matches!(e, Err(Error::Structural { ref condition, .. }) if condition == "charge-weights"));
    }

    #[test]
    fn overlapping_parts_are_rejected() {
        let mut s = two_ball_split(GammaRule::Full);
        s.parts[1].domain = DomainSpec::ball(ball(&[0.2, 0.0, 0.0], 0.5), GammaRule::Full);
        let e = check_decomposition(&s, CompositionMode::Superadditive, 1.0 / 16.0);
        assert!(matches!(e, Err(Error::Overlap(_))), "{e:?}");
    }

    #[test]
    fn identity_decomposition_has_zero_slack() {
        let z = vec![p(&[0.2, 0.1, 0.0]), p(&[-0.3, 0.0, 0.2])];
        let cfg = ChargeConfig::new(z, vec![1.0, -0.5]).unwrap();
        let piece = Piece {
            domain: DomainSpec::ball(BallSpec::unit(3), GammaRule::Full),
            charges: cfg,
        };
        let s = DecompositionSpec {
            parent: piece.clone(),
            parts: vec![piece],
            index_map: None,
        };
        for mode in [CompositionMode::Superadditive, CompositionMode::Subadditive] {
            let r = verify_composition(&s, mode, &VerifyOptions::default()).unwrap();
            assert!(r.slack.abs() < 1e-14 && r.holds);
        }
    }

    #[test]
    fn point_charges_sweep_approaches_slack() {
        let spec = PointChargeSpec {
            balls: vec![ball(&[-1.0, 0.0, 0.0], 1.0), ball(&[1.0, 0.0, 0.0], 1.0)],
            points: vec![p(&[-1.0, 0.0, 0.0]), p(&[1.0, 0.0, 0.0])],
            weights: vec![1.0, 1.0],
        };
        let r = verify_point_charges(&spec).unwrap();
        // -2 <= 2 * (1/2)
        assert!((r.lhs + 2.0).abs() < 1e-15 && (r.rhs - 1.0).abs() < 1e-15);
        assert_eq!(r.details["sweep_monotone"], json!(true));
        let gaps = r.details["sweep_gaps"].as_array().unwrap();
        assert_eq!(gaps.len(), 3);
        assert!(gaps[2].as_f64().unwrap() < 1e-2);
    }

    #[test]
    fn kufarev_expanded_form_agrees() {
        let spec = KufarevSpec {
            balls: [ball(&[0.0, 0.0, 0.5], 0.4), ball(&[0.0, 0.0, -0.5], 0.4)],
            points: [p(&[0.0, 0.0, 0.5]), p(&[0.0, 0.0, -0.5])],
        };
        let r = verify_kufarev_3d(&spec).unwrap();
        assert!(r.holds);
        assert!(r.details["expanded_difference"].as_f64().unwrap() < 1e-12);
    }

    #[test]
    fn report_csv_row() {
        let r = VerificationReport::new("x", 1.0, 0.5, 0.5, 0.0);
        assert_eq!(r.csv_row(), "x,1e0,5e-1,5e-1,1e-9,true,");
        assert_eq!(
            VerificationReport::CSV_HEADER.split(',').count(),
            r.csv_row().split(',').count()
        );
    }
}
