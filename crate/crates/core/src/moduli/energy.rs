use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{distance, ChargeConfig, Constants, DomainSpec};
use crate::error::{Error, Result};
use crate::quadrature::{check_exclusions, Exclusion, Field, Plan, QuadratureOptions};

use super::PotentialField;

/// A quadrature value with an error estimate (difference to the same rule
/// with every resolution length doubled).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn grid_exclusion_check(domain: &DomainSpec, excluded: &[Exclusion]) -> Result<()> {
    if let DomainSpec::Voxel(v) = domain {
        if let Some(e) = excluded.iter().find(|e| !(e.radius > 2.0 * v.h)) {
            return Err(Error::BadExclusion(format!(
                "radius {} must exceed twice the grid spacing {}",
                e.radius, v.h
            )));
        }
    }
    Ok(())
}

/// `I(f, D_r) = ∫ |∇f|^2` over `domain` minus the excluded balls.
pub fn dirichlet_integral(
    f: &dyn Field,
    domain: &DomainSpec,
    excluded: &[Exclusion],
    opts: &QuadratureOptions,
) -> Result<Integral> {
    if f.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: f.dim(),
        });
    }
    let poles = f.poles();
    check_exclusions(domain, excluded, &poles)?;
    grid_exclusion_check(domain, excluded)?;
    let n = f.dim();
    let integrand = |x: &[f64], out: &mut [f64]| {
        let mut g = vec![0.0; n];
        f.gradient(x, &mut g);
        out[0] = g.iter().map(|v| v * v).sum();
    };
    let run = |o: QuadratureOptions| {
        Plan::new(domain, excluded, poles.clone(), f.interfaces(), o).integrate(1, &integrand)[0]
    };
    let value = run(*opts);
    let coarse = run(opts.coarsened());
    Ok(Integral {
        value,
        error: (value - coarse).abs(),
    })
}

/// `I(u, D_r) - λ r^(2-n) Σ δ_k^2` over decreasing radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTrace {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Quadrature error estimate of each value.
    pub errors: Vec<f64>,
    /// Two-point Richardson extrapolation (first order in `r`) of the last
    /// two values.
    pub limit: f64,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::param("radii", "need at least one radius"));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::param("radii", "must be positive and finite"));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("radii", "must be strictly decreasing"));
    }
    Ok(())
}

pub(crate) fn richardson(radii: &[f64], values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return values[m - 1];
    }
    let (r1, r2) = (radii[m - 2], radii[m - 1]);
    let (v1, v2) = (values[m - 2], values[m - 1]);
    (r1 * v2 - r2 * v1) / (r1 - r2)
}

fn exclusions(cfg: &ChargeConfig, r: f64) -> Vec<Exclusion> {
    cfg.points()
        .iter()
        .map(|p| Exclusion {
            center: p.coords().to_vec(),
            radius: r,
        })
        .collect()
}

/// Renormalized energies whose limit is the reduced modulus.
pub fn modulus_limit_estimate(
    u: &PotentialField,
    cfg: &ChargeConfig,
    radii: &[f64],
) -> Result<AsymptoticTrace> {
    check_radii(radii)?;
    check_weights(u, cfg)?;
    let g = u.evaluator();
    let c = g.constants();
    let sq: f64 = cfg.weights().iter().map(|d| d * d).sum();
    let mut values = Vec::with_capacity(radii.len());
    let mut errors = Vec::with_capacity(radii.len());
    for &r in radii {
        let ex = exclusions(cfg, r);
        let i = dirichlet_integral(u, g.domain(), &ex, &QuadratureOptions::for_radius(r))?;
        values.push(i.value - c.lambda * c.pow_2mn(r) * sq);
        errors.push(i.error);
    }
    Ok(AsymptoticTrace {
        radii: radii.to_vec(),
        limit: richardson(radii, &values),
        values,
        errors,
    })
}

fn check_weights(u: &PotentialField, cfg: &ChargeConfig) -> Result<()> {
    let same = u.weights() == cfg.weights()
        && u.points().iter().zip(cfg.points()).all(|(a, b)| *a == b);
    if !same || u.weights().len() != cfg.len() {
        return Err(Error::ChargeMismatch(
            "potential and configuration carry different charges".into(),
        ));
    }
    Ok(())
}

/// `I(v - u, D_r) - [I(v, D_r) - I(u, D_r) - 2 Σ δ_k (b_k - a_k)]` over radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

pub fn energy_difference_check(
    v: &dyn Field,
    u: &PotentialField,
    domain: &DomainSpec,
    cfg: &ChargeConfig,
    b: &[f64],
    a: &[f64],
    radii: &[f64],
) -> Result<EnergyTrace> {
    check_radii(radii)?;
    check_weights(u, cfg)?;
    if b.len() != cfg.len() || a.len() != cfg.len() {
        return Err(Error::ChargeMismatch(format!(
            "{} charges but {} constants b and {} constants a",
            cfg.len(),
            b.len(),
            a.len()
        )));
    }
    if v.dim() != domain.dim() || u.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: v.dim(),
        });
    }
    let shift: f64 = cfg
        .weights()
        .iter()
        .zip(b.iter().zip(a))
        .map(|(d, (bk, ak))| d * (bk - ak))
        .sum();
    let mut poles = v.poles();
    for p in u.poles() {
        if !poles.contains(&p) {
            poles.push(p);
        }
    }
    let mut interfaces = v.interfaces();
    interfaces.extend(u.interfaces());
    let n = domain.dim();
    let integrand = |x: &[f64], out: &mut [f64]| {
        let mut gv = vec![0.0; n];
        let mut gu = vec![0.0; n];
        v.gradient(x, &mut gv);
        u.gradient(x, &mut gu);
        out[0] = gv.iter().zip(&gu).map(|(p, q)| (p - q) * (p - q)).sum();
        out[1] = gv.iter().map(|p| p * p).sum();
        out[2] = gu.iter().map(|q| q * q).sum();
    };
    let mut values = Vec::with_capacity(radii.len());
    let mut errors = Vec::with_capacity(radii.len());
    for &r in radii {
        let ex = exclusions(cfg, r);
        check_exclusions(domain, &ex, &poles)?;
        grid_exclusion_check(domain, &ex)?;
        let eval = |o: QuadratureOptions| {
            let s = Plan::new(domain, &ex, poles.clone(), interfaces.clone(), o).integrate(3, &integrand);
            s[0] - (s[1] - s[2] - 2.0 * shift)
        };
        let opts = QuadratureOptions::for_radius(r);
        let fine = eval(opts);
        let coarse = eval(opts.coarsened());
        values.push(fine);
        errors.push((fine - coarse).abs());
    }
    Ok(EnergyTrace {
        radii: radii.to_vec(),
        values,
        errors,
    })
}

/// Unit vectors for spherical averages: a Fibonacci lattice for `n = 3`,
/// the `2n` vertices of the cross-polytope otherwise.
fn sphere_nodes(n: usize) -> Vec<Vec<f64>> {
    if n == 3 {
        const COUNT: usize = 512;
        let golden = PI * (3.0 - 5f64.sqrt());
        return (0..COUNT)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / COUNT as f64;
                let s = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                vec![s * t.cos(), s * t.sin(), z]
            })
            .collect();
    }
    let mut out = Vec::with_capacity(2 * n);
    for a in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[a] = sign;
            out.push(e);
        }
    }
    out
}

/// Constants `b_k` of an admissible `v` near each `z_k`: the spherical mean of
/// `v - δ_k λ |x - z_k|^(2-n)` over `S(z_k, radius)`.
pub fn expansion_constants(
    v: &dyn Field,
    cfg: &ChargeConfig,
    c: &Constants,
    radius: f64,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    if v.dim() != c.n || cfg.dim() != c.n {
        return Err(Error::DimensionMismatch {
            expected: c.n,
            got: v.dim(),
        });
    }
    for (i, p) in cfg.points().iter().enumerate() {
        for q in &cfg.points()[i + 1..] {
            if distance(p.coords(), q.coords()) <= 2.0 * radius {
                return Err(Error::param("radius", "averaging spheres overlap"));
            }
        }
    }
    let nodes = sphere_nodes(c.n);
    Ok(cfg
        .points()
        .iter()
        .zip(cfg.weights())
        .map(|(z, d)| {
            let mean = nodes
                .iter()
                .map(|e| {
                    let x: Vec<f64> = z.coords().iter().zip(e).map(|(a, b)| a + radius * b).collect();
                    v.value(&x)
                })
                .sum::<f64>()
                / nodes.len() as f64;
            mean - d * c.fundamental(radius)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::{BallSpec, BoundaryLabel, GammaRule, Point, VoxelDomain};
    use crate::moduli::{BallGreen, BumpField, GreenEvaluator};

    struct Linear;
    impl Field for Linear {
        fn dim(&self) -> usize {
            3
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn gradient(&self, _: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn linear_on_unit_cube() {
        let h = 1.0 / 16.0;
        let dom = DomainSpec::Voxel(Arc::new(
            VoxelDomain::from_fn([h / 2.0; 3], h, [16, 16, 16], |_| true, |_, _| BoundaryLabel::Dirichlet)
                .unwrap(),
        ));
        let i = dirichlet_integral(&Linear, &dom, &[], &QuadratureOptions::default()).unwrap();
        assert!((i.value - 1.0).abs() < 1e-12);
        let zero = BumpField {
            center: vec![0.5; 3],
            radius: 0.2,
            amplitude: 0.0,
        };
        assert_eq!(dirichlet_integral(&zero, &dom, &[], &QuadratureOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn radial_energy_outside_small_ball() {
        let g = BallGreen::new(BallSpec::unit(3), vec![Point::origin(3)]).unwrap();
        let cfg = ChargeConfig::single(Point::origin(3), 1.0);
        let u = PotentialField::new(&g, &cfg).unwrap();
        let r = 0.2;
        let ex = [Exclusion {
            center: vec![0.0; 3],
            radius: r,
        }];
        let i = dirichlet_integral(&u, g.domain(), &ex, &QuadratureOptions::for_radius(r)).unwrap();
        let lambda = g.constants().lambda;
        let exact = lambda * (1.0 / r - 1.0);
        assert!((i.value - exact).abs() < 3e-3 * exact, "{} {exact}", i.value);
        assert!(i.error > 0.0);
    }

    #[test]
    fn pole_must_be_excluded() {
        let g = BallGreen::new(BallSpec::unit(3), vec![Point::origin(3)]).unwrap();
        let cfg = ChargeConfig::single(Point::origin(3), 1.0);
        let u = PotentialField::new(&g, &cfg).unwrap();
        let err = dirichlet_integral(&u, g.domain(), &[], &QuadratureOptions::default());
        assert!(matches!(err, Err(Error::BadExclusion(_))));
    }

    #[test]
    fn expansion_constants_recover_a() {
        let pts = vec![
            Point::from([0.3, 0.0, 0.1]),
            Point::from([-0.2, 0.2, 0.0]),
        ];
        let cfg = ChargeConfig::new(pts.clone(), vec![1.0, -2.0]).unwrap();
        let g = BallGreen::new(BallSpec::unit(3), pts).unwrap();
        let u = PotentialField::new(&g, &cfg).unwrap();
        let res = crate::moduli::reduced_modulus(&g, &cfg).unwrap();
        let b = expansion_constants(&u, &cfg, g.constants(), 0.05).unwrap();
        for (bk, ak) in b.iter().zip(&res.a) {
            assert!((bk - ak).abs() < 1e-5, "{bk} {ak}");
        }
        let _ = DomainSpec::ball(BallSpec::unit(3), GammaRule::Full);
    }
}
