//! Finite-difference Robin functions on voxel domains.
//!
//! The unknown is the regular part `w = g - Φ` of the Robin function, where
//! `Φ = Σ δ_k λ |x - z_k|^-1` is the singular part, sampled at cell centres.
//! Each cell balances the fluxes through its six facets:
//!
//! * interior facet: `(w_j - w_i)/h`,
//! * Dirichlet facet: ghost value at the facet centre, `2 (w_f - w_i)/h`
//!   with `w_f = -Φ(x_f)`,
//! * Neumann facet: prescribed outward flux `-∂Φ/∂ν` averaged over the facet.
//!
//! The facet average of `∂Φ/∂ν` is exact (it is the solid angle the facet
//! subtends at the charge), so the Neumann data of a pure Neumann problem is
//! compatible to round-off whenever the charges lie inside the mask.

mod io;
mod solver;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryLabel, ChargeConfig, Constants, Point, VoxelDomain, DIRECTIONS};
use crate::error::{Error, Result};

pub use io::{read_field_binary, RawField};

/// Values of a function on the occupied cells of a voxel domain, in the
/// domain's compact cell order.
#[derive(Clone, Debug)]
pub struct ScalarField {
    domain: Arc<VoxelDomain>,
    values: Vec<f64>,
    grads: OnceLock<Vec<[f64; 3]>>,
}

impl ScalarField {
    pub fn new(domain: Arc<VoxelDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.n_cells() {
            return Err(Error::param(
                "values",
                format!("expected {} values, got {}", domain.n_cells(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ScalarField {
            domain,
            values,
            grads: OnceLock::new(),
        })
    }

    pub fn domain(&self) -> &Arc<VoxelDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the occupied cell with linear index `cell`.
    pub fn at_cell(&self, cell: usize) -> Option<f64> {
        self.domain.compact(cell).map(|i| self.values[i])
    }

    /// Trilinear interpolation between cell centres. Corners outside the
    /// mask are dropped and the remaining weights renormalized.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        self.trilinear(x, |i| [self.values[i]]).map(|v| v[0])
    }

    /// Trilinear interpolation of the cell gradients (see
    /// [`ScalarField::gradient_at_cell`]).
    pub fn gradient(&self, x: &[f64]) -> Result<[f64; 3]> {
        let grads = self.grads.get_or_init(|| {
            self.domain
                .cells()
                .iter()
                .map(|&c| self.gradient_at_cell(c))
                .collect()
        });
        self.trilinear(x, |i| grads[i])
    }

    fn trilinear<const K: usize>(&self, x: &[f64], f: impl Fn(usize) -> [f64; K]) -> Result<[f64; K]> {
        let d = &self.domain;
        if x.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: x.len(),
            });
        }
        let mut base = [0i64; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] - d.origin[a]) / d.h;
            let fl = s.floor();
            base[a] = fl as i64;
            t[a] = s - fl;
        }
        let mut acc = [0.0; K];
        let mut wsum = 0.0;
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut ijk = base;
            for a in 0..3 {
                ijk[a] += off[a] as i64;
                w *= if off[a] == 1 { t[a] } else { 1.0 - t[a] };
            }
            if w == 0.0 {
                continue;
            }
            if let Some(i) = d.linear(ijk).and_then(|c| d.compact(c)) {
                for (a, v) in acc.iter_mut().zip(f(i)) {
                    *a += w * v;
                }
                wsum += w;
            }
        }
        if wsum < 1e-12 {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        Ok(acc.map(|a| a / wsum))
    }

    /// Central-difference gradient at an occupied cell (one-sided next to the
    /// boundary, zero along an axis with no occupied neighbour).
    pub fn gradient_at_cell(&self, cell: usize) -> [f64; 3] {
        let d = &self.domain;
        let v0 = self.at_cell(cell).unwrap_or(f64::NAN);
        let mut g = [0.0; 3];
        for a in 0..3 {
            let minus = d.neighbor(cell, 2 * a).and_then(|c| self.at_cell(c));
            let plus = d.neighbor(cell, 2 * a + 1).and_then(|c| self.at_cell(c));
            g[a] = match (minus, plus) {
                (Some(m), Some(p)) => (p - m) / (2.0 * d.h),
                (Some(m), None) => (v0 - m) / d.h,
                (None, Some(p)) => (p - v0) / d.h,
                (None, None) => 0.0,
            };
        }
        g
    }

    /// Flat binary layout: `dims` as three little-endian `u64`, `origin` and
    /// `h` as little-endian `f64`, then one `f64` per lattice cell in
    /// x-fastest order with `NaN` for unoccupied cells.
    pub fn write_binary<W: std::io::Write>(&self, w: W) -> Result<()> {
        io::write_binary(self, w)
    }

    /// CSV with header `i,j,k,value`, one row per occupied cell.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        io::write_csv(self, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Max-norm of `b - A w` for the scaled cell equations.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Clearance (in cell layers) required around every charge point.
pub const CLEARANCE_LAYERS: i64 = 2;

/// Regular part of the Robin function `g_Γ(·, z0, D)` for a mixed
/// Dirichlet/Neumann voxel domain. Refuses the all-Neumann case, where a
/// single charge cannot satisfy the zero-sum requirement.
///
/// Non-convergence within `max_iter` is not an error: the returned report
/// has `converged = false`.
pub fn solve_robin_regular_part(
    domain: &Arc<VoxelDomain>,
    z0: &Point,
    c: &Constants,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, SolveReport)> {
    if domain.gamma_empty() {
        return Err(Error::SingleChargeNeumann);
    }
    solve_regular_part(
        domain,
        &ChargeConfig::single(z0.clone(), 1.0),
        c,
        &SolveOptions { tol, max_iter },
    )
}

/// Regular part of the potential `Σ δ_k g_Γ(·, z_k, D)`. With `Γ = ∅` the
/// weights must sum to zero; the result is then normalized to zero mean over
/// the boundary.
pub fn solve_regular_part(
    domain: &Arc<VoxelDomain>,
    cfg: &ChargeConfig,
    c: &Constants,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    if domain.gamma_empty() && !cfg.is_neutral() {
        return Err(Error::NonZeroCharge(cfg.weights().iter().sum()));
    }
    solve(domain, cfg, c, opts, false)
}

/// Regular part of the Neumann function `g_∅(·, z, D)` with boundary flux
/// `1/μ(∂D)` (discrete facet area), normalized to zero boundary mean. This
/// gauge makes the discrete Neumann function symmetric.
pub fn solve_neumann_regular_part(
    domain: &Arc<VoxelDomain>,
    z: &Point,
    c: &Constants,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    if !domain.gamma_empty() {
        return Err(Error::param("domain", "the Neumann function needs Γ = ∅"));
    }
    solve(domain, &ChargeConfig::single(z.clone(), 1.0), c, opts, true)
}

fn check_charges(domain: &VoxelDomain, cfg: &ChargeConfig, c: &Constants) -> Result<()> {
    if c.n != 3 {
        return Err(Error::Unsupported(format!(
            "grid solves are three-dimensional, got n = {}",
            c.n
        )));
    }
    for p in cfg.points() {
        p.check_dim(3)?;
        if !domain.contains_point(p.coords()) {
            return Err(Error::OutsideDomain(p.coords().to_vec()));
        }
        if !domain.has_clearance(p.coords(), CLEARANCE_LAYERS) {
            return Err(Error::TooCloseToBoundary {
                point: p.coords().to_vec(),
                min_distance: CLEARANCE_LAYERS as f64 * domain.h,
            });
        }
    }
    for i in 0..cfg.len() {
        for j in (i + 1)..cfg.len() {
            if cfg.points()[i] == cfg.points()[j] {
                return Err(Error::DuplicatePoints(i, j));
            }
        }
    }
    Ok(())
}

fn singular_part(cfg: &ChargeConfig, c: &Constants, x: &[f64]) -> f64 {
    cfg.points()
        .iter()
        .zip(cfg.weights())
        .map(|(p, w)| w * c.fundamental(crate::domain::distance(x, p.coords())))
        .sum()
}

/// Signed solid angle subtended at `p` by the axis-aligned facet of `cell` in
/// direction `dir`, positive when the facet lies on the outward side of `p`.
fn facet_solid_angle(dom: &VoxelDomain, cell: usize, dir: usize, p: &[f64]) -> f64 {
    let fc = dom.facet_center(cell, dir);
    let axis = dir / 2;
    let sign = DIRECTIONS[dir][axis] as f64;
    let dist = sign * (fc[axis] - p[axis]);
    if dist == 0.0 {
        return 0.0;
    }
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let half = 0.5 * dom.h;
    let (u0, u1) = (fc[u] - half - p[u], fc[u] + half - p[u]);
    let (v0, v1) = (fc[v] - half - p[v], fc[v] + half - p[v]);
    let d = dist.abs();
    let f = |a: f64, b: f64| (a * b).atan2(d * (a * a + b * b + d * d).sqrt());
    dist.signum() * (f(u1, v1) - f(u0, v1) - f(u1, v0) + f(u0, v0))
}

fn solve(
    domain: &Arc<VoxelDomain>,
    cfg: &ChargeConfig,
    c: &Constants,
    opts: &SolveOptions,
    neumann_function: bool,
) -> Result<(ScalarField, SolveReport)> {
    check_charges(domain, cfg, c)?;
    let dom = domain.as_ref();
    let h = dom.h;
    let op = solver::Operator::new(dom);
    let neumann_facets = dom
        .boundary_facets()
        .filter(|f| f.2 == BoundaryLabel::Neumann)
        .count();
    let flux_const = if neumann_function {
        1.0 / (h * h * neumann_facets as f64)
    } else {
        0.0
    };

    // q_f: outward normal derivative of w on a Neumann facet, times h^2.
    let facet_flux = |cell: usize, dir: usize| -> f64 {
        let mut s = 0.0;
        for (p, w) in cfg.points().iter().zip(cfg.weights()) {
            s += w * c.lambda * facet_solid_angle(dom, cell, dir, p.coords());
        }
        s - flux_const * h * h
    };

    let mut b = vec![0.0; dom.n_cells()];
    let mut total_flux = 0.0;
    for (i, &cell) in dom.cells().iter().enumerate() {
        for dir in 0..6 {
            match dom.facet_label(cell, dir) {
                Some(BoundaryLabel::Dirichlet) => {
                    b[i] -= 2.0 * singular_part(cfg, c, &dom.facet_center(cell, dir));
                }
                Some(BoundaryLabel::Neumann) => {
                    let q = facet_flux(cell, dir);
                    total_flux += q;
                    b[i] += q / h;
                }
                None => {}
            }
        }
    }
    if dom.gamma_empty() {
        let tol = opts.tol.max(1e-10);
        if total_flux.abs() > tol {
            return Err(Error::Incompatible {
                defect: total_flux.abs(),
                tol,
            });
        }
        solver::remove_mean(&mut b);
    }

    let out = solver::pcg(&op, &b, opts.tol, opts.max_iter);
    let mut values = out.x;
    if dom.gamma_empty() {
        // zero mean of g over the boundary, with facet values extrapolated
        // from the adjacent cell by the prescribed flux
        let mut acc = 0.0;
        let mut count = 0usize;
        for (i, &cell) in dom.cells().iter().enumerate() {
            for dir in 0..6 {
                if dom.facet_label(cell, dir).is_some() {
                    let xf = dom.facet_center(cell, dir);
                    let q = facet_flux(cell, dir) / (h * h);
                    acc += values[i] + 0.5 * h * q + singular_part(cfg, c, &xf);
                    count += 1;
                }
            }
        }
        let mean = acc / count as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    let report = SolveReport {
        iterations: out.iterations,
        residual: out.residual,
        converged: out.converged,
    };
    Ok((ScalarField::new(domain.clone(), values)?, report))
}

/// Robin radius `r(D, z0, Γ)` from the grid regular part at `z0`.
pub fn robin_radius_grid(
    domain: &Arc<VoxelDomain>,
    z0: &Point,
    c: &Constants,
    tol: f64,
) -> Result<f64> {
    robin_radius_grid_with(domain, z0, c, &SolveOptions { tol, ..Default::default() })
}

pub fn robin_radius_grid_with(
    domain: &Arc<VoxelDomain>,
    z0: &Point,
    c: &Constants,
    opts: &SolveOptions,
) -> Result<f64> {
    let (field, report) = solve_robin_regular_part(domain, z0, c, opts.tol, opts.max_iter)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    c.radius_from_regular(field.interpolate(z0.coords())?)
}
