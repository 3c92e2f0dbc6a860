//! Adaptive midpoint quadrature over balls, cut balls and voxel masks.
//!
//! Space is covered by axis-aligned cubes (the cells of a voxel mask, or a
//! uniform tiling of a ball's bounding box) which are split into `2^n`
//! children wherever the integrand is singular or the region boundary is
//! curved. Leaves contribute `H^n f(centre)` when their centre lies in the
//! region and outside every excluded ball.

use rayon::prelude::*;

use crate::domain::{distance, dot, norm, BallDomain, DomainSpec, VoxelDomain};
use crate::error::{Error, Result};

/// A surface across which a field's gradient may jump.
#[derive(Clone, Debug, PartialEq)]
pub enum Interface {
    Sphere { center: Vec<f64>, radius: f64 },
    /// `{ x : normal·(x - point) = 0 }`, `normal` of unit length.
    Plane { point: Vec<f64>, normal: Vec<f64> },
}

impl Interface {
    fn crosses(&self, c: &[f64], half: f64) -> bool {
        match self {
            Interface::Sphere { center, radius } => {
                (distance(c, center) - radius).abs() <= half * (c.len() as f64).sqrt()
            }
            Interface::Plane { point, normal } => {
                let s: f64 = c.iter().zip(point).zip(normal).map(|((a, p), n)| (a - p) * n).sum();
                s.abs() <= half * normal.iter().map(|n| n.abs()).sum::<f64>()
            }
        }
    }
}

/// A real function on (part of) `R^n` with an analytic or grid gradient.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Points where the field is singular.
    fn poles(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
    /// Surfaces where the gradient is discontinuous.
    fn interfaces(&self) -> Vec<Interface> {
        Vec::new()
    }
}

/// Resolution controls. Lengths are absolute except `max_h` and
/// `boundary_h`, which are fractions of the ball radius for ball regions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub max_h: f64,
    /// Cube size near a pole is at most `eta` times its distance to the pole.
    pub eta: f64,
    /// Cube size on the surface of an excluded ball.
    pub exclusion_h: f64,
    pub boundary_h: f64,
    pub max_depth: u32,
}

impl QuadratureOptions {
    /// Resolution tied to the exclusion radius `r`, so that the quadrature
    /// error of a renormalized energy shrinks proportionally to `r`.
    pub fn for_radius(r: f64) -> Self {
        QuadratureOptions {
            max_h: 1.0 / 8.0,
            eta: 0.5 * r,
            exclusion_h: 0.1 * r * r,
            boundary_h: 1.0 / 128.0,
            max_depth: 20,
        }
    }

    /// Every size doubled; used for error estimates.
    pub fn coarsened(&self) -> Self {
        QuadratureOptions {
            max_h: 2.0 * self.max_h,
            eta: 2.0 * self.eta,
            exclusion_h: 2.0 * self.exclusion_h,
            boundary_h: 2.0 * self.boundary_h,
            max_depth: self.max_depth,
        }
    }
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions::for_radius(0.1)
    }
}

/// An excluded ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub center: Vec<f64>,
    pub radius: f64,
}

enum Region<'a> {
    Ball(&'a BallDomain),
    Voxel(&'a VoxelDomain),
}

impl Region<'_> {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball(b) => b.contains(x),
            Region::Voxel(v) => v.contains_point(x),
        }
    }

    /// Conservative test that the cube misses the region entirely.
    fn misses(&self, c: &[f64], half: f64) -> bool {
        match self {
            Region::Ball(b) => {
                let n = c.len() as f64;
                if distance(c, b.ball.center.coords()) - half * n.sqrt() >= b.ball.radius {
                    return true;
                }
                if let Some(cut) = &b.cut {
                    let s: f64 = c
                        .iter()
                        .zip(b.ball.center.coords())
                        .zip(&cut.normal)
                        .map(|((a, o), nn)| (a - o) * nn)
                        .sum();
                    let reach = half * cut.normal.iter().map(|v| v.abs()).sum::<f64>();
                    if s + reach <= cut.offset {
                        return true;
                    }
                }
                false
            }
            Region::Voxel(_) => false,
        }
    }
}

pub(crate) struct Plan<'a> {
    region: Region<'a>,
    exclusions: &'a [Exclusion],
    poles: Vec<Vec<f64>>,
    surfaces: Vec<Interface>,
    opts: QuadratureOptions,
    max_h: f64,
    boundary_h: f64,
    roots: Vec<(Vec<f64>, f64)>,
    n: usize,
}

impl<'a> Plan<'a> {
    pub(crate) fn new(
        domain: &'a DomainSpec,
        exclusions: &'a [Exclusion],
        poles: Vec<Vec<f64>>,
        interfaces: Vec<Interface>,
        opts: QuadratureOptions,
    ) -> Self {
        let n = domain.dim();
        match domain {
            DomainSpec::Ball(b) => {
                let r = b.ball.radius;
                let per_axis = (2.0 / opts.max_h).ceil().max(1.0) as usize;
                let size = 2.0 * r / per_axis as f64;
                let lo: Vec<f64> = b.ball.center.coords().iter().map(|c| c - r).collect();
                let total = per_axis.pow(n as u32);
                let roots = (0..total)
                    .map(|mut idx| {
                        let mut c = vec![0.0; n];
                        for (a, ca) in c.iter_mut().enumerate() {
                            let i = idx % per_axis;
                            idx /= per_axis;
                            *ca = lo[a] + size * (i as f64 + 0.5);
                        }
                        (c, 0.5 * size)
                    })
                    .collect();
                let mut surfaces = interfaces;
                surfaces.push(Interface::Sphere {
                    center: b.ball.center.coords().to_vec(),
                    radius: r,
                });
                if let Some(cut) = &b.cut {
                    let nn = norm(&cut.normal);
                    let unit: Vec<f64> = cut.normal.iter().map(|v| v / nn).collect();
                    let point = b
                        .ball
                        .center
                        .coords()
                        .iter()
                        .zip(&unit)
                        .map(|(c, u)| c + cut.offset / nn * u)
                        .collect();
                    surfaces.push(Interface::Plane {
                        point,
                        normal: unit,
                    });
                }
                Plan {
                    region: Region::Ball(b),
                    exclusions,
                    poles,
                    surfaces,
                    opts,
                    max_h: opts.max_h * r,
                    boundary_h: opts.boundary_h * r,
                    roots,
                    n,
                }
            }
            DomainSpec::Voxel(v) => {
                let roots = v
                    .cells()
                    .iter()
                    .map(|&cell| (v.cell_center(cell).to_vec(), 0.5 * v.h))
                    .collect();
                Plan {
                    region: Region::Voxel(v),
                    exclusions,
                    poles,
                    surfaces: interfaces,
                    opts,
                    max_h: v.h,
                    boundary_h: opts.boundary_h,
                    roots,
                    n,
                }
            }
        }
    }

    fn excluded(&self, x: &[f64]) -> bool {
        self.exclusions.iter().any(|e| distance(x, &e.center) < e.radius)
    }

    fn inside_exclusion(&self, c: &[f64], half: f64) -> bool {
        let diag = half * (self.n as f64).sqrt();
        self.exclusions
            .iter()
            .any(|e| distance(c, &e.center) + diag <= e.radius)
    }

    fn needs_split(&self, c: &[f64], half: f64, depth: u32) -> bool {
        if depth >= self.opts.max_depth {
            return false;
        }
        let size = 2.0 * half;
        if size > self.max_h {
            return true;
        }
        let diag = half * (self.n as f64).sqrt();
        for p in &self.poles {
            let d = distance(c, p) - diag;
            if d <= 0.0 || size > self.opts.eta * d {
                return true;
            }
        }
        if size > self.opts.exclusion_h
            && self
                .exclusions
                .iter()
                .any(|e| (distance(c, &e.center) - e.radius).abs() <= diag)
        {
            return true;
        }
        size > self.boundary_h && self.surfaces.iter().any(|s| s.crosses(c, half))
    }

    fn integrate_root(
        &self,
        root: &(Vec<f64>, f64),
        k: usize,
        f: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Vec<f64> {
        let mut acc = vec![0.0; k];
        let mut vals = vec![0.0; k];
        let mut stack = vec![(root.0.clone(), root.1, 0u32)];
        while let Some((c, half, depth)) = stack.pop() {
            if self.region.misses(&c, half) || self.inside_exclusion(&c, half) {
                continue;
            }
            if self.needs_split(&c, half, depth) {
                let q = 0.5 * half;
                for child in 0..(1usize << self.n) {
                    let cc: Vec<f64> = c
                        .iter()
                        .enumerate()
                        .map(|(a, v)| if child >> a & 1 == 1 { v + q } else { v - q })
                        .collect();
                    stack.push((cc, q, depth + 1));
                }
                continue;
            }
            if !self.region.contains(&c) || self.excluded(&c) {
                continue;
            }
            let vol = (2.0 * half).powi(self.n as i32);
            f(&c, &mut vals);
            for (a, v) in acc.iter_mut().zip(&vals) {
                *a += vol * v;
            }
        }
        acc
    }

    /// Integrals of the `k` components of `f` over the region minus the
    /// exclusions, summed in a fixed order.
    pub(crate) fn integrate(
        &self,
        k: usize,
        f: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .roots
            .par_iter()
            .map(|r| self.integrate_root(r, k, f))
            .collect();
        let mut total = vec![0.0; k];
        for p in parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }
}

/// Checks that excluded balls lie inside the domain, are pairwise disjoint,
/// and cover every pole of the integrand inside the domain.
pub(crate) fn check_exclusions(
    domain: &DomainSpec,
    exclusions: &[Exclusion],
    poles: &[Vec<f64>],
) -> Result<()> {
    let n = domain.dim();
    for (i, e) in exclusions.iter().enumerate() {
        if e.center.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: e.center.len(),
            });
        }
        if !(e.radius > 0.0) || !e.radius.is_finite() {
            return Err(Error::BadExclusion(format!("ball {i} has radius {}", e.radius)));
        }
        let inside = match domain {
            DomainSpec::Ball(b) => {
                let c = b.ball.center.coords();
                let mut ok = distance(&e.center, c) + e.radius < b.ball.radius;
                if let Some(cut) = &b.cut {
                    let nn = norm(&cut.normal);
                    let rel: Vec<f64> = e.center.iter().zip(c).map(|(a, o)| a - o).collect();
                    ok &= (dot(&cut.normal, &rel) - cut.offset) / nn > e.radius;
                }
                ok
            }
            DomainSpec::Voxel(v) => {
                let layers = (e.radius / v.h).ceil() as i64 + 1;
                v.has_clearance(&e.center, layers)
            }
        };
        if !inside {
            return Err(Error::BadExclusion(format!(
                "ball {i} around {:?} touches the domain boundary",
                e.center
            )));
        }
        for (j, f) in exclusions.iter().enumerate().skip(i + 1) {
            if distance(&e.center, &f.center) <= e.radius + f.radius {
                return Err(Error::BadExclusion(format!("balls {i} and {j} overlap")));
            }
        }
    }
    for p in poles {
        if domain.contains(p) && !exclusions.iter().any(|e| distance(p, &e.center) < e.radius) {
            return Err(Error::BadExclusion(format!(
                "singular point {p:?} is not excluded"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::{BallSpec, BoundaryLabel, GammaRule, Point};

    fn ball(r: f64) -> DomainSpec {
        DomainSpec::ball(
            BallSpec::new(Point::origin(3), r).unwrap(),
            GammaRule::Full,
        )
    }

    #[test]
    fn ball_volume() {
        let dom = ball(1.0);
        let plan = Plan::new(&dom, &[], vec![], vec![], QuadratureOptions::default());
        let v = plan.integrate(1, &|_, out| out[0] = 1.0)[0];
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI).abs() < 2e-3, "{v}");
    }

    #[test]
    fn shell_volume_with_exclusion() {
        let dom = ball(1.0);
        let ex = [Exclusion {
            center: vec![0.2, 0.0, 0.0],
            radius: 0.3,
        }];
        let plan = Plan::new(&dom, &ex, vec![], vec![], QuadratureOptions::for_radius(0.3));
        let v = plan.integrate(1, &|_, out| out[0] = 1.0)[0];
        let exact = 4.0 / 3.0 * std::f64::consts::PI * (1.0 - 0.027);
        assert!((v - exact).abs() < 2e-3, "{v} {exact}");
    }

    #[test]
    fn unit_cube_voxels() {
        let h = 0.1;
        let dom = DomainSpec::Voxel(Arc::new(
            VoxelDomain::from_fn(
                [h / 2.0; 3],
                h,
                [10, 10, 10],
                |_| true,
                |_, _| BoundaryLabel::Dirichlet,
            )
            .unwrap(),
        ));
        let plan = Plan::new(&dom, &[], vec![], vec![], QuadratureOptions::default());
        let v = plan.integrate(2, &|x, out| {
            out[0] = 1.0;
            out[1] = x[0];
        });
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!((v[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_sum() {
        let dom = ball(1.0);
        let plan = Plan::new(
            &dom,
            &[],
            vec![vec![0.3, 0.1, 0.0]],
            vec![],
            QuadratureOptions::for_radius(0.2),
        );
        let f = |x: &[f64], out: &mut [f64]| out[0] = (x[0] * 3.0).sin() + x[1] * x[2];
        let a = plan.integrate(1, &f);
        let b = plan.integrate(1, &f);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn exclusion_validation() {
        let dom = ball(1.0);
        let touching = [Exclusion {
            center: vec![0.8, 0.0, 0.0],
            radius: 0.2,
        }];
        assert!(check_exclusions(&dom, &touching, &[]).is_err());
        let overlapping = [
            Exclusion {
                center: vec![0.1, 0.0, 0.0],
                radius: 0.2,
            },
            Exclusion {
                center: vec![-0.1, 0.0, 0.0],
                radius: 0.2,
            },
        ];
        assert!(check_exclusions(&dom, &overlapping, &[]).is_err());
        let uncovered = [vec![0.5, 0.0, 0.0]];
        assert!(matches!(
            check_exclusions(&dom, &[], &uncovered),
            Err(Error::BadExclusion(_))
        ));
    }
}
