//! Geometry and charge configurations shared by the rest of the crate.
//!
//! A domain is either an analytic ball (optionally cut by a half-space) with a
//! rule selecting the Dirichlet part `Γ` of its boundary, or an explicit voxel
//! mask whose boundary facets carry Dirichlet/Neumann labels. Points are plain
//! coordinate vectors in `R^n`; closed-form kernels accept any `n >= 3`, grid
//! solves are restricted to `n = 3`.

mod voxel;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use voxel::{rle_decode, rle_encode, BoundaryLabel, VoxelDomain, DIRECTIONS};

/// A point of `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Point(coords))
    }

    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.0, &other.0)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.0, &other.0)
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl From<[f64; 3]> for Point {
    fn from(v: [f64; 3]) -> Self {
        Point(v.to_vec())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let len = norm(v);
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::param("normal", "must be a nonzero finite vector"));
    }
    Ok(v.iter().map(|x| x / len).collect())
}

/// Dimensional constants: the unit-sphere area `omega` and `lambda = 1/((n-2) omega)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub n: usize,
    pub omega: f64,
    pub lambda: f64,
}

impl Constants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::DimensionUnsupported(n));
        }
        // |S^{n-1}| = 2π/(n-2) |S^{n-3}|, seeded by |S^0| = 2 and |S^1| = 2π.
        let mut omega = if n % 2 == 1 { 2.0 } else { 2.0 * PI };
        let mut k = if n % 2 == 1 { 1 } else { 2 };
        while k < n {
            k += 2;
            omega *= 2.0 * PI / (k - 2) as f64;
        }
        let lambda = 1.0 / ((n - 2) as f64 * omega);
        Ok(Constants { n, omega, lambda })
    }

    /// `lambda * d^(2-n)`.
    pub fn fundamental(&self, d: f64) -> f64 {
        self.lambda * self.pow_2mn(d)
    }

    pub fn pow_2mn(&self, d: f64) -> f64 {
        d.powi(2 - self.n as i32)
    }

    /// Inverts `-lambda r^(2-n) = value` for the radius.
    pub fn radius_from_regular(&self, value: f64) -> Result<f64> {
        if !(value < 0.0) {
            return Err(Error::NoRealRadius(value));
        }
        Ok((-value / self.lambda).powf(1.0 / (2.0 - self.n as f64)))
    }
}

pub fn make_constants(n: usize) -> Result<Constants> {
    Constants::new(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param("radius", "must be positive and finite"));
        }
        Ok(BallSpec { center, radius })
    }

    pub fn unit(n: usize) -> Self {
        BallSpec {
            center: Point::origin(n),
            radius: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Strict interior test.
    pub fn contains(&self, x: &[f64]) -> bool {
        distance(x, self.center.coords()) < self.radius
    }

    pub fn disjoint_from(&self, other: &BallSpec) -> bool {
        self.center.distance(&other.center) >= self.radius + other.radius
    }

    /// `self ⊆ other` for the open balls.
    pub fn inside(&self, other: &BallSpec) -> bool {
        self.center.distance(&other.center) + self.radius <= other.radius * (1.0 + 1e-14)
    }
}

/// Selects the Dirichlet part `Γ` of a ball's boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaRule {
    /// `Γ = ∂D`.
    Full,
    /// `Γ = ∅` (Neumann function).
    Empty,
    /// Spherical cap `{ x : n·(x - center) > offset }`.
    Cap { normal: Vec<f64>, offset: f64 },
}

impl GammaRule {
    pub(crate) fn selects(&self, center: &[f64], x: &[f64]) -> bool {
        match self {
            GammaRule::Full => true,
            GammaRule::Empty => false,
            GammaRule::Cap { normal, offset } => {
                let rel: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                dot(normal, &rel) > *offset
            }
        }
    }

    /// Set containment `self ⊆ other` on the same sphere of radius `radius`.
    pub fn subset_of(&self, other: &GammaRule, radius: f64) -> bool {
        match (self, other) {
            (GammaRule::Empty, _) | (_, GammaRule::Full) => true,
            (GammaRule::Cap { offset, .. }, GammaRule::Empty) => *offset >= radius,
            (GammaRule::Full, GammaRule::Empty) => false,
            (GammaRule::Full, GammaRule::Cap { offset, .. }) => *offset < -radius,
            (GammaRule::Cap { normal: a, offset: oa }, GammaRule::Cap { normal: b, offset: ob }) => {
                *oa >= radius
                    || *ob < -radius
                    || (distance(a, b) < 1e-12 && oa >= ob)
            }
        }
    }
}

/// Half-space restriction `{ x : n·(x - center) > offset }` of a ball; the flat
/// face carries `face` as its boundary label.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub face: BoundaryLabel,
}

impl Cut {
    pub(crate) fn keeps(&self, center: &[f64], x: &[f64]) -> bool {
        let rel: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        dot(&self.normal, &rel) > self.offset
    }
}

/// A ball (possibly cut by a half-space) with its boundary selection rule and
/// an optional preferred grid spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct BallDomain {
    pub ball: BallSpec,
    pub gamma: GammaRule,
    pub cut: Option<Cut>,
    pub h: Option<f64>,
}

impl BallDomain {
    pub fn new(ball: BallSpec, gamma: GammaRule) -> Self {
        BallDomain {
            ball,
            gamma,
            cut: None,
            h: None,
        }
    }

    pub fn with_cut(mut self, cut: Cut) -> Self {
        self.cut = Some(cut);
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.ball.contains(x)
            && self
                .cut
                .as_ref()
                .map_or(true, |c| c.keeps(self.ball.center.coords(), x))
    }

    pub fn gamma_empty(&self) -> bool {
        matches!(self.gamma, GammaRule::Empty)
            && self
                .cut
                .as_ref()
                .map_or(true, |c| c.face == BoundaryLabel::Neumann)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    Ball(BallDomain),
    Voxel(Arc<VoxelDomain>),
}

impl DomainSpec {
    pub fn ball(ball: BallSpec, gamma: GammaRule) -> Self {
        DomainSpec::Ball(BallDomain::new(ball, gamma))
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball(b) => b.ball.dim(),
            DomainSpec::Voxel(_) => 3,
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            DomainSpec::Ball(b) => b.contains(x),
            DomainSpec::Voxel(v) => v.contains_point(x),
        }
    }

    pub fn gamma_empty(&self) -> bool {
        match self {
            DomainSpec::Ball(b) => b.gamma_empty(),
            DomainSpec::Voxel(v) => v.gamma_empty(),
        }
    }

    /// Whether the closed-form kernels cover this domain: a whole ball with
    /// `Γ = ∂D`, or the unit ball of `R^3` centred at the origin with `Γ = ∅`.
    /// A ball carrying its own grid spacing asks for the voxel backend.
    pub fn closed_form(&self) -> bool {
        match self {
            DomainSpec::Ball(b) if b.cut.is_none() && b.h.is_none() => match b.gamma {
                GammaRule::Full => true,
                GammaRule::Empty => {
                    b.ball.dim() == 3 && b.ball.radius == 1.0 && b.ball.center.norm() == 0.0
                }
                GammaRule::Cap { .. } => false,
            },
            _ => false,
        }
    }

    /// Voxel form of the domain at spacing `h`. Voxel domains are returned
    /// as-is when `h` matches their own spacing.
    pub fn voxelize(&self, h: f64) -> Result<Arc<VoxelDomain>> {
        match self {
            DomainSpec::Ball(b) => Ok(Arc::new(voxel::voxelize_domain(b, h)?)),
            DomainSpec::Voxel(v) => {
                if (v.h - h).abs() > 1e-12 * h {
                    return Err(Error::param(
                        "h",
                        format!("voxel domain has spacing {}, requested {h}", v.h),
                    ));
                }
                Ok(v.clone())
            }
        }
    }

    /// Grid spacing preferred by the domain itself, if any.
    pub fn preferred_h(&self) -> Option<f64> {
        match self {
            DomainSpec::Ball(b) => b.h,
            DomainSpec::Voxel(v) => Some(v.h),
        }
    }
}

/// Boundary-selection rule used by [`voxelize_ball`].
#[derive(Clone, Debug, PartialEq)]
pub enum VoxelGamma {
    FullDirichlet,
    FullNeumann,
    Cap { normal: Vec<f64>, offset: f64 },
}

impl From<&VoxelGamma> for GammaRule {
    fn from(g: &VoxelGamma) -> Self {
        match g {
            VoxelGamma::FullDirichlet => GammaRule::Full,
            VoxelGamma::FullNeumann => GammaRule::Empty,
            VoxelGamma::Cap { normal, offset } => GammaRule::Cap {
                normal: normal.clone(),
                offset: *offset,
            },
        }
    }
}

pub fn voxelize_ball(ball: &BallSpec, h: f64, gamma: &VoxelGamma) -> Result<VoxelDomain> {
    let mut rule = GammaRule::from(gamma);
    if let GammaRule::Cap { normal, .. } = &mut rule {
        *normal = unit(normal)?;
    }
    voxel::voxelize_domain(&BallDomain::new(ball.clone(), rule), h)
}

/// Charge points `Z` with weights `Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChargeDoc", into = "ChargeDoc")]
pub struct ChargeConfig {
    points: Vec<Point>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChargeDoc {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl TryFrom<ChargeDoc> for ChargeConfig {
    type Error = Error;
    fn try_from(d: ChargeDoc) -> Result<Self> {
        ChargeConfig::new(d.points, d.weights)
    }
}

impl From<ChargeConfig> for ChargeDoc {
    fn from(c: ChargeConfig) -> Self {
        ChargeDoc {
            points: c.points,
            weights: c.weights,
        }
    }
}

impl ChargeConfig {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::EmptyConfig);
        }
        let n = points[0].dim();
        for p in &points {
            p.check_dim(n)?;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("weights", "must be finite"));
        }
        Ok(ChargeConfig { points, weights })
    }

    pub fn single(point: Point, weight: f64) -> Self {
        ChargeConfig {
            points: vec![point],
            weights: vec![weight],
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn scaled(&self, c: f64) -> Self {
        ChargeConfig {
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    /// Sum of weights is zero up to round-off relative to `Σ|δ|`.
    pub fn is_neutral(&self) -> bool {
        let sum: f64 = self.weights.iter().sum();
        let scale: f64 = self.weights.iter().map(|w| w.abs()).sum::<f64>().max(1.0);
        sum.abs() <= 1e-12 * scale
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<&Self> {
        check_config(self, domain, domain.gamma_empty())?;
        Ok(self)
    }
}

fn check_config(cfg: &ChargeConfig, domain: &DomainSpec, gamma_empty: bool) -> Result<()> {
    let n = domain.dim();
    for p in &cfg.points {
        p.check_dim(n)?;
    }
    for i in 0..cfg.len() {
        for j in (i + 1)..cfg.len() {
            if cfg.points[i] == cfg.points[j] {
                return Err(Error::DuplicatePoints(i, j));
            }
        }
    }
    for p in &cfg.points {
        if !domain.contains(p.coords()) {
            return Err(Error::OutsideDomain(p.coords().to_vec()));
        }
    }
    if gamma_empty && !cfg.is_neutral() {
        return Err(Error::NonZeroCharge(cfg.weights.iter().sum()));
    }
    Ok(())
}

/// Checks `cfg` against `domain`; `gamma_empty` enforces the zero-sum
/// requirement of the Neumann case.
pub fn validate_charge_config(
    cfg: &ChargeConfig,
    domain: &DomainSpec,
    gamma_empty: bool,
) -> Result<ChargeConfig> {
    check_config(cfg, domain, gamma_empty)?;
    Ok(cfg.clone())
}

// ---------------------------------------------------------------------------
// JSON documents

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum DomainDoc {
    Ball {
        center: Point,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
        #[serde(default = "GammaDoc::full")]
        gamma: GammaDoc,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cut: Option<CutDoc>,
    },
    Voxel {
        origin: [f64; 3],
        h: f64,
        dims: [usize; 3],
        mask: Vec<u8>,
        labels: Vec<u8>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaDoc {
    Named(String),
    Cap { cap_normal: Vec<f64>, cap_offset: f64 },
}

impl GammaDoc {
    fn full() -> Self {
        GammaDoc::Named("full".into())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CutDoc {
    normal: Vec<f64>,
    offset: f64,
    face: BoundaryLabel,
}

impl TryFrom<DomainDoc> for DomainSpec {
    type Error = Error;
    fn try_from(doc: DomainDoc) -> Result<Self> {
        match doc {
            DomainDoc::Ball {
                center,
                radius,
                h,
                gamma,
                cut,
            } => {
                let n = center.dim();
                if n < 3 {
                    return Err(Error::DimensionUnsupported(n));
                }
                let ball = BallSpec::new(center, radius)?;
                let gamma = match gamma {
                    GammaDoc::Named(s) => match s.as_str() {
                        "full" => GammaRule::Full,
                        "none" => GammaRule::Empty,
                        other => {
                            return Err(Error::param(
                                "gamma",
                                format!("expected \"full\", \"none\" or a cap, got {other:?}"),
                            ))
                        }
                    },
                    GammaDoc::Cap {
                        cap_normal,
                        cap_offset,
                    } => {
                        if cap_normal.len() != n {
                            return Err(Error::param("cap_normal", "dimension mismatch"));
                        }
                        GammaRule::Cap {
                            normal: unit(&cap_normal)?,
                            offset: cap_offset,
                        }
                    }
                };
                let cut = cut
                    .map(|c| -> Result<Cut> {
                        if c.normal.len() != n {
                            return Err(Error::param("cut.normal", "dimension mismatch"));
                        }
                        Ok(Cut {
                            normal: unit(&c.normal)?,
                            offset: c.offset,
                            face: c.face,
                        })
                    })
                    .transpose()?;
                if let Some(h) = h {
                    if !(h > 0.0) {
                        return Err(Error::param("h", "must be positive"));
                    }
                }
                Ok(DomainSpec::Ball(BallDomain {
                    ball,
                    gamma,
                    cut,
                    h,
                }))
            }
            DomainDoc::Voxel {
                origin,
                h,
                dims,
                mask,
                labels,
            } => {
                let total = dims[0] * dims[1] * dims[2];
                let occ = rle_decode(&mask, total).map_err(|e| Error::param("mask", e))?;
                let lab = rle_decode(&labels, total).map_err(|e| Error::param("labels", e))?;
                let occ = occ.into_iter().map(|b| b != 0).collect();
                Ok(DomainSpec::Voxel(Arc::new(VoxelDomain::new(
                    origin, h, dims, occ, lab,
                )?)))
            }
        }
    }
}

impl From<DomainSpec> for DomainDoc {
    fn from(d: DomainSpec) -> Self {
        match d {
            DomainSpec::Ball(b) => DomainDoc::Ball {
                center: b.ball.center,
                radius: b.ball.radius,
                h: b.h,
                gamma: match b.gamma {
                    GammaRule::Full => GammaDoc::Named("full".into()),
                    GammaRule::Empty => GammaDoc::Named("none".into()),
                    GammaRule::Cap { normal, offset } => GammaDoc::Cap {
                        cap_normal: normal,
                        cap_offset: offset,
                    },
                },
                cut: b.cut.map(|c| CutDoc {
                    normal: c.normal,
                    offset: c.offset,
                    face: c.face,
                }),
            },
            DomainSpec::Voxel(v) => DomainDoc::Voxel {
                origin: v.origin,
                h: v.h,
                dims: v.dims,
                mask: rle_encode(
                    &v.occupancy()
                        .iter()
                        .map(|&b| b as u8)
                        .collect::<Vec<_>>(),
                ),
                labels: rle_encode(v.dirichlet_bits()),
            },
        }
    }
}

impl Serialize for DomainSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DomainDoc::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DomainSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = DomainDoc::deserialize(d)?;
        DomainSpec::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn constants_three_and_four() {
        let c3 = make_constants(3).unwrap();
        assert!((c3.omega - 4.0 * PI).abs() < 1e-14);
        assert!((c3.lambda - 1.0 / (4.0 * PI)).abs() < 1e-16);
        let c4 = make_constants(4).unwrap();
        assert!((c4.omega - 2.0 * PI * PI).abs() < 1e-13);
        assert!((c4.lambda - 1.0 / (4.0 * PI * PI)).abs() < 1e-16);
    }

    #[test]
    fn constants_reject_plane() {
        assert!(matches!(make_constants(2), Err(Error::DimensionUnsupported(2))));
        assert!(make_constants(0).is_err());
    }

    #[test]
    fn radius_roundtrip() {
        let c = make_constants(5).unwrap();
        let r = 0.37;
        let v = -c.lambda * c.pow_2mn(r);
        assert!((c.radius_from_regular(v).unwrap() - r).abs() < 1e-14);
        assert!(matches!(c.radius_from_regular(0.0), Err(Error::NoRealRadius(_))));
    }

    #[test]
    fn charge_validation_cases() {
        let dirichlet = DomainSpec::ball(BallSpec::unit(3), GammaRule::Full);
        let neumann = DomainSpec::ball(BallSpec::unit(3), GammaRule::Empty);

        let single = ChargeConfig::single(p(&[0.0, 0.0, 0.0]), 1.0);
        assert!(validate_charge_config(&single, &dirichlet, false).is_ok());

        let pair = ChargeConfig::new(vec![p(&[0.3, 0.0, 0.0]), p(&[-0.3, 0.0, 0.0])], vec![1.0, -1.0])
            .unwrap();
        assert!(validate_charge_config(&pair, &neumann, true).is_ok());

        let lone = ChargeConfig::single(p(&[0.3, 0.0, 0.0]), 1.0);
        assert!(matches!(
            validate_charge_config(&lone, &neumann, true),
            Err(Error::NonZeroCharge(_))
        ));

        let dup = ChargeConfig::new(vec![p(&[0.1, 0.0, 0.0]), p(&[0.1, 0.0, 0.0])], vec![1.0, 2.0])
            .unwrap();
        assert!(matches!(
            validate_charge_config(&dup, &dirichlet, false),
            Err(Error::DuplicatePoints(0, 1))
        ));

        let out = ChargeConfig::single(p(&[1.0, 0.0, 0.0]), 1.0);
        assert!(matches!(
            validate_charge_config(&out, &dirichlet, false),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn charge_length_mismatch() {
        let err = ChargeConfig::new(vec![p(&[0.0, 0.0, 0.0])], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { points: 1, weights: 2 }));
        let json = r#"{"points":[[0,0,0],[0.1,0,0]],"weights":[1]}"#;
        let msg = serde_json::from_str::<ChargeConfig>(json).unwrap_err().to_string();
        assert!(msg.contains("weights"), "{msg}");
    }

    #[test]
    fn domain_json_roundtrip() {
        let json = r#"{"type":"ball","center":[0,0,0],"radius":1,"h":0.125,
                       "gamma":{"cap_normal":[0,0,2],"cap_offset":0.5}}"#;
        let d: DomainSpec = serde_json::from_str(json).unwrap();
        match &d {
            DomainSpec::Ball(b) => {
                assert_eq!(b.h, Some(0.125));
                assert_eq!(
                    b.gamma,
                    GammaRule::Cap {
                        normal: vec![0.0, 0.0, 1.0],
                        offset: 0.5
                    }
                );
            }
            _ => panic!("expected ball"),
        }
        let back: DomainSpec = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);

        let v = DomainSpec::Voxel(Arc::new(
            voxelize_ball(&BallSpec::unit(3), 0.2, &VoxelGamma::FullNeumann).unwrap(),
        ));
        let back: DomainSpec = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert!(back.gamma_empty());
    }

    #[test]
    fn bad_gamma_names_key() {
        let json = r#"{"type":"ball","center":[0,0,0],"radius":1,"gamma":"half"}"#;
        let msg = serde_json::from_str::<DomainSpec>(json).unwrap_err().to_string();
        assert!(msg.contains("gamma"), "{msg}");
    }

    #[test]
    fn gamma_subset_rules() {
        let cap = |o: f64| GammaRule::Cap {
            normal: vec![0.0, 0.0, 1.0],
            offset: o,
        };
        assert!(GammaRule::Empty.subset_of(&GammaRule::Full, 1.0));
        assert!(cap(0.5).subset_of(&cap(0.0), 1.0));
        assert!(!cap(0.0).subset_of(&cap(0.5), 1.0));
        assert!(!GammaRule::Full.subset_of(&cap(0.0), 1.0));
        assert!(GammaRule::Full.subset_of(&GammaRule::Full, 1.0));
    }
}
