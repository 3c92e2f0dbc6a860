use crate::domain::{distance, ChargeConfig, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::kernels::fundamental_gradient;
use crate::quadrature::{Field, Interface};

use super::{source_indices, GreenEvaluator};

/// The potential function `u = Σ δ_k g_Γ(·, z_k, D)`.
#[derive(Clone)]
pub struct PotentialField<'a> {
    g: &'a dyn GreenEvaluator,
    idx: Vec<usize>,
    weights: Vec<f64>,
}

impl<'a> PotentialField<'a> {
    pub fn new(g: &'a dyn GreenEvaluator, cfg: &ChargeConfig) -> Result<Self> {
        Ok(PotentialField {
            g,
            idx: source_indices(g, cfg)?,
            weights: cfg.weights().to_vec(),
        })
    }

    pub fn evaluator(&self) -> &'a dyn GreenEvaluator {
        self.g
    }

    pub fn points(&self) -> Vec<&Point> {
        self.idx.iter().map(|&k| &self.g.sources()[k]).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn point(&self, j: usize) -> &[f64] {
        self.g.sources()[self.idx[j]].coords()
    }

    /// Regular part of the `j`-th term, without its weight.
    fn term_regular(&self, x: &[f64], j: usize) -> f64 {
        self.g.regular(x, self.idx[j])
    }

    fn term_singular(&self, x: &[f64], j: usize) -> f64 {
        self.g.constants().fundamental(distance(x, self.point(j)))
    }

    fn add_term_gradient(&self, x: &[f64], j: usize, scale_sing: f64, scale_reg: f64, out: &mut [f64]) {
        let n = out.len();
        let mut tmp = vec![0.0; n];
        if scale_sing != 0.0 {
            fundamental_gradient(x, self.point(j), self.g.constants(), &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += scale_sing * t;
            }
        }
        if scale_reg != 0.0 {
            self.g.regular_gradient(x, self.idx[j], &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += scale_reg * t;
            }
        }
    }
}

impl Field for PotentialField<'_> {
    fn dim(&self) -> usize {
        self.g.constants().n
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.idx.len())
            .map(|j| self.weights[j] * (self.term_singular(x, j) + self.term_regular(x, j)))
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.idx.len() {
            self.add_term_gradient(x, j, self.weights[j], self.weights[j], out);
        }
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        (0..self.idx.len())
            .filter(|&j| self.weights[j] != 0.0)
            .map(|j| self.point(j).to_vec())
            .collect()
    }
}

/// `u - u_i` for two potentials whose shared charge points are subtracted
/// through their regular parts, so matched poles cancel exactly.
pub struct PotentialDifference<'a> {
    u: PotentialField<'a>,
    ui: PotentialField<'a>,
    /// For each term of `ui`, the matching term of `u`, if any.
    matched: Vec<Option<usize>>,
}

impl<'a> PotentialDifference<'a> {
    pub fn new(u: PotentialField<'a>, ui: PotentialField<'a>) -> Result<Self> {
        if u.dim() != ui.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                got: ui.dim(),
            });
        }
        let matched = (0..ui.idx.len())
            .map(|j| (0..u.idx.len()).find(|&k| u.point(k) == ui.point(j)))
            .collect();
        Ok(PotentialDifference { u, ui, matched })
    }

    fn in_ui(&self, k: usize) -> Option<usize> {
        self.matched.iter().position(|m| *m == Some(k))
    }
}

impl Field for PotentialDifference<'_> {
    fn dim(&self) -> usize {
        self.u.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.u.idx.len() {
            let wu = self.u.weights[k];
            match self.in_ui(k) {
                Some(j) => {
                    let wi = self.ui.weights[j];
                    if wu != wi {
                        s += (wu - wi) * self.u.term_singular(x, k);
                    }
                    s += wu * self.u.term_regular(x, k) - wi * self.ui.term_regular(x, j);
                }
                None => s += wu * (self.u.term_singular(x, k) + self.u.term_regular(x, k)),
            }
        }
        for (j, m) in self.matched.iter().enumerate() {
            if m.is_none() {
                let wi = self.ui.weights[j];
                s -= wi * (self.ui.term_singular(x, j) + self.ui.term_regular(x, j));
            }
        }
        s
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..self.u.idx.len() {
            let wu = self.u.weights[k];
            match self.in_ui(k) {
                Some(j) => {
                    let wi = self.ui.weights[j];
                    self.u.add_term_gradient(x, k, wu - wi, wu, out);
                    self.ui.add_term_gradient(x, j, 0.0, -wi, out);
                }
                None => self.u.add_term_gradient(x, k, wu, wu, out),
            }
        }
        for (j, m) in self.matched.iter().enumerate() {
            if m.is_none() {
                let wi = self.ui.weights[j];
                self.ui.add_term_gradient(x, j, -wi, -wi, out);
            }
        }
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        let mut p = Vec::new();
        for k in 0..self.u.idx.len() {
            let w = match self.in_ui(k) {
                Some(j) => self.u.weights[k] - self.ui.weights[j],
                None => self.u.weights[k],
            };
            if w != 0.0 {
                p.push(self.u.point(k).to_vec());
            }
        }
        for (j, m) in self.matched.iter().enumerate() {
            if m.is_none() && self.ui.weights[j] != 0.0 {
                p.push(self.ui.point(j).to_vec());
            }
        }
        p
    }
}

/// `u_i` on `D_i`, zero elsewhere: the competitor built from the potentials
/// of non-overlapping subdomains.
pub struct PatchField<'a> {
    parts: Vec<(DomainSpec, PotentialField<'a>)>,
    n: usize,
}

impl<'a> PatchField<'a> {
    pub fn new(parts: Vec<(DomainSpec, PotentialField<'a>)>) -> Result<Self> {
        let n = parts.first().ok_or(Error::EmptyConfig)?.0.dim();
        for (d, u) in &parts {
            if d.dim() != n || u.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: d.dim().max(u.dim()),
                });
            }
        }
        Ok(PatchField { parts, n })
    }

    fn part_at(&self, x: &[f64]) -> Option<&PotentialField<'a>> {
        self.parts.iter().find(|(d, _)| d.contains(x)).map(|(_, u)| u)
    }
}

impl Field for PatchField<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.part_at(x).map_or(0.0, |u| u.value(x))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self.part_at(x) {
            Some(u) => u.gradient(x, out),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        self.parts.iter().flat_map(|(_, u)| u.poles()).collect()
    }

    fn interfaces(&self) -> Vec<Interface> {
        let mut out = Vec::new();
        for (d, _) in &self.parts {
            if let DomainSpec::Ball(b) = d {
                out.push(Interface::Sphere {
                    center: b.ball.center.coords().to_vec(),
                    radius: b.ball.radius,
                });
                if let Some(cut) = &b.cut {
                    let nn = crate::domain::norm(&cut.normal);
                    let unit: Vec<f64> = cut.normal.iter().map(|v| v / nn).collect();
                    let point = b
                        .ball
                        .center
                        .coords()
                        .iter()
                        .zip(&unit)
                        .map(|(c, u)| c + cut.offset / nn * u)
                        .collect();
                    out.push(Interface::Plane {
                        point,
                        normal: unit,
                    });
                }
            }
        }
        out
    }
}

/// `amplitude (1 - |x - c|^2/R^2)^3` inside `B(c, R)`, zero outside.
#[derive(Clone, Debug)]
pub struct BumpField {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Field for BumpField {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = distance(x, &self.center) / self.radius;
        if s >= 1.0 {
            return 0.0;
        }
        self.amplitude * (1.0 - s * s).powi(3)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r2 = self.radius * self.radius;
        let s2 = distance(x, &self.center).powi(2) / r2;
        if s2 >= 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let f = -6.0 * self.amplitude * (1.0 - s2).powi(2) / r2;
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = f * (a - c);
        }
    }
}

/// Linear combination `Σ c_i f_i`.
pub struct SumField<'a> {
    terms: Vec<(f64, &'a dyn Field)>,
}

impl<'a> SumField<'a> {
    pub fn new(terms: Vec<(f64, &'a dyn Field)>) -> Self {
        SumField { terms }
    }
}

impl Field for SumField<'_> {
    fn dim(&self) -> usize {
        self.terms.first().map_or(0, |t| t.1.dim())
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = vec![0.0; out.len()];
        for (c, f) in &self.terms {
            f.gradient(x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += c * t;
            }
        }
    }

    fn poles(&self) -> Vec<Vec<f64>> {
        let mut p: Vec<Vec<f64>> = Vec::new();
        for (_, f) in &self.terms {
            for q in f.poles() {
                if !p.contains(&q) {
                    p.push(q);
                }
            }
        }
        p
    }

    fn interfaces(&self) -> Vec<Interface> {
        self.terms.iter().flat_map(|(_, f)| f.interfaces()).collect()
    }
}
