//! Jacobi-preconditioned conjugate gradients for the voxel Laplacian.
//!
//! All reductions go through fixed-size chunks summed in index order, so a
//! solve is bit-reproducible regardless of the rayon thread count.

use rayon::prelude::*;

use crate::domain::VoxelDomain;

const CHUNK: usize = 4096;
const NONE: u32 = u32::MAX;
const REPLACE_EVERY: usize = 50;

/// The matrix `A` of the scaled equations `A w = b`: one row per occupied
/// cell, `A_ii = #neighbours + 2 #Dirichlet facets`, `A_ij = -1`.
pub(crate) struct Operator {
    nbr: Vec<[u32; 6]>,
    diag: Vec<f64>,
    singular: bool,
}

impl Operator {
    pub(crate) fn new(dom: &VoxelDomain) -> Self {
        let cells = dom.cells();
        let mut nbr = Vec::with_capacity(cells.len());
        let mut diag = Vec::with_capacity(cells.len());
        let bits = dom.dirichlet_bits();
        for &c in cells {
            let mut row = [NONE; 6];
            let mut d = 0.0;
            for (dir, slot) in row.iter_mut().enumerate() {
                match dom.neighbor(c, dir) {
                    Some(n) => {
                        *slot = dom.compact(n).unwrap() as u32;
                        d += 1.0;
                    }
                    None if bits[c] & (1 << dir) != 0 => d += 2.0,
                    None => {}
                }
            }
            nbr.push(row);
            diag.push(d);
        }
        Operator {
            nbr,
            diag,
            singular: dom.gamma_empty(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.diag.len()
    }

    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, ys)| {
            let base = ci * CHUNK;
            for (k, out) in ys.iter_mut().enumerate() {
                let i = base + k;
                let mut s = self.diag[i] * x[i];
                for &j in &self.nbr[i] {
                    if j != NONE {
                        s -= x[j as usize];
                    }
                }
                *out = s;
            }
        });
    }

    fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.apply(x, r);
        r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        if self.singular {
            remove_mean(r);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

pub(crate) fn sum(a: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(CHUNK).map(|x| x.iter().sum()).collect();
    partial.iter().sum()
}

pub(crate) fn remove_mean(a: &mut [f64]) {
    let mean = sum(a) / a.len() as f64;
    a.par_iter_mut().for_each(|v| *v -= mean);
}

fn max_abs(a: &[f64]) -> f64 {
    a.par_iter().map(|v| v.abs()).reduce(|| 0.0, f64::max)
}

pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` from a zero initial guess, stopping when the max-norm of
/// the true residual is at most `tol`. For the all-Neumann operator `b` must
/// already have zero sum.
pub(crate) fn pcg(op: &Operator, b: &[f64], tol: f64, max_iter: usize) -> CgOutcome {
    let n = op.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut res = max_abs(&r);
    if res <= tol {
        return CgOutcome {
            x,
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            op.residual(b, &x, &mut r);
            res = max_abs(&r);
            return CgOutcome {
                x,
                iterations: it - 1,
                residual: res,
                converged: res <= tol,
            };
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        if it % REPLACE_EVERY == 0 {
            op.residual(b, &x, &mut r);
        } else {
            r.par_iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
        }
        res = max_abs(&r);
        if res <= tol {
            op.residual(b, &x, &mut r);
            res = max_abs(&r);
            if res <= tol {
                return CgOutcome {
                    x,
                    iterations: it,
                    residual: res,
                    converged: true,
                };
            }
        }
        z.par_iter_mut()
            .zip(&r)
            .zip(&op.diag)
            .for_each(|((zi, ri), d)| *zi = ri / d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    op.residual(b, &x, &mut r);
    res = max_abs(&r);
    CgOutcome {
        x,
        iterations: max_iter,
        residual: res,
        converged: res <= tol,
    }
}
