//! Closed-form kernels: the fundamental solution, the Dirichlet Green function
//! of a ball, and the Neumann function of the unit ball in `R^3`.
//!
//! Every kernel is split into the singular part `lambda |x - y|^(2-n)` and a
//! regular part that stays finite on the diagonal. The diagonal value of the
//! regular part is `-lambda r^(2-n)` with `r` the Robin radius, which is how
//! moduli pick up their diagonal terms.

use std::f64::consts::PI;

use crate::domain::{distance, dot, norm, BallSpec, Constants, Point};
use crate::error::{Error, Result};

const INV_4PI: f64 = 1.0 / (4.0 * PI);

fn check_pair(x: &Point, y: &Point, c: &Constants) -> Result<()> {
    x.check_dim(c.n)?;
    y.check_dim(c.n)
}

fn check_inside(p: &[f64], ball: &BallSpec) -> Result<()> {
    if !ball.contains(p) {
        return Err(Error::OutsideDomain(p.to_vec()));
    }
    Ok(())
}

/// `lambda_n |x - y|^(2-n)`.
pub fn fundamental_solution(x: &Point, y: &Point, c: &Constants) -> Result<f64> {
    check_pair(x, y, c)?;
    let d = x.distance(y);
    if d == 0.0 {
        return Err(Error::Singular);
    }
    Ok(c.fundamental(d))
}

/// Gradient in `x` of the fundamental solution.
pub(crate) fn fundamental_gradient(x: &[f64], y: &[f64], c: &Constants, out: &mut [f64]) {
    let d = distance(x, y);
    let s = -((c.n - 2) as f64) * c.lambda * d.powi(-(c.n as i32));
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = s * (a - b);
    }
}

/// Image point `|y'| x'/rho - rho y'/|y'|` (relative to the centre), or `None`
/// when `y` is the centre.
fn image(x: &[f64], y: &[f64], ball: &BallSpec) -> Option<Vec<f64>> {
    let c = ball.center.coords();
    let rho = ball.radius;
    let yp: Vec<f64> = y.iter().zip(c).map(|(a, b)| a - b).collect();
    let ny = norm(&yp);
    if ny == 0.0 {
        return None;
    }
    Some(
        x.iter()
            .zip(c)
            .zip(&yp)
            .map(|((xa, ca), ya)| ny * (xa - ca) / rho - rho * ya / ny)
            .collect(),
    )
}

/// Regular part `g(x, y) - lambda |x - y|^(2-n)` of the ball Green function;
/// finite for `x = y`.
pub(crate) fn ball_green_regular(x: &[f64], y: &[f64], ball: &BallSpec, c: &Constants) -> f64 {
    match image(x, y, ball) {
        Some(img) => -c.fundamental(norm(&img)),
        None => -c.fundamental(ball.radius),
    }
}

pub(crate) fn ball_green_regular_gradient(
    x: &[f64],
    y: &[f64],
    ball: &BallSpec,
    c: &Constants,
    out: &mut [f64],
) {
    match image(x, y, ball) {
        Some(img) => {
            let ny = distance(y, ball.center.coords());
            let d = norm(&img);
            // d/dx of -lambda |X|^(2-n) with dX/dx = (|y'|/rho) I
            let s = ((c.n - 2) as f64) * c.lambda * d.powi(-(c.n as i32)) * ny / ball.radius;
            for (o, v) in out.iter_mut().zip(&img) {
                *o = s * v;
            }
        }
        None => out.iter_mut().for_each(|o| *o = 0.0),
    }
}

/// Green function of the ball with `Γ = ∂B`.
pub fn ball_green(x: &Point, y: &Point, ball: &BallSpec, c: &Constants) -> Result<f64> {
    check_pair(x, y, c)?;
    ball.center.check_dim(c.n)?;
    check_inside(x.coords(), ball)?;
    check_inside(y.coords(), ball)?;
    let d = x.distance(y);
    if d == 0.0 {
        return Err(Error::Singular);
    }
    Ok(c.fundamental(d) + ball_green_regular(x.coords(), y.coords(), ball, c))
}

/// Harmonic radius `(rho^2 - |y - a|^2)/rho` of `B(a, rho)` at `y`.
pub fn ball_harmonic_radius(y: &Point, ball: &BallSpec, c: &Constants) -> Result<f64> {
    y.check_dim(c.n)?;
    ball.center.check_dim(c.n)?;
    check_inside(y.coords(), ball)?;
    let d = y.distance(&ball.center);
    Ok((ball.radius * ball.radius - d * d) / ball.radius)
}

fn check_unit_ball_3d(p: &Point) -> Result<()> {
    p.check_dim(3)?;
    if !(p.norm() < 1.0) {
        return Err(Error::OutsideDomain(p.coords().to_vec()));
    }
    Ok(())
}

/// Regular part of the unit-ball Neumann function,
/// `(1/4π)( |y|/|x|y|^2 - y| - log|1 - x·y + |x|y|^2 - y|/|y|| )`; requires `y != 0`.
pub(crate) fn neumann_regular(x: &[f64], y: &[f64]) -> f64 {
    let ny = norm(y);
    let ny2 = ny * ny;
    let a: Vec<f64> = x.iter().zip(y).map(|(xa, ya)| xa * ny2 - ya).collect();
    let na = norm(&a);
    let l = 1.0 - dot(x, y) + na / ny;
    INV_4PI * (ny / na - l.abs().ln())
}

pub(crate) fn neumann_regular_gradient(x: &[f64], y: &[f64], out: &mut [f64]) {
    let ny = norm(y);
    let ny2 = ny * ny;
    let a: Vec<f64> = x.iter().zip(y).map(|(xa, ya)| xa * ny2 - ya).collect();
    let na = norm(&a);
    let l = 1.0 - dot(x, y) + na / ny;
    let s1 = -ny * ny2 / (na * na * na);
    for ((o, av), yv) in out.iter_mut().zip(&a).zip(y) {
        let dl = -yv + ny * av / na;
        *o = INV_4PI * (s1 * av - dl / l);
    }
}

/// Neumann function of the unit ball in `R^3` (boundary flux `1/(4π)`).
/// Refuses `y = 0`, where the formula degenerates.
pub fn ball_neumann_3d(x: &Point, y: &Point) -> Result<f64> {
    check_unit_ball_3d(x)?;
    check_unit_ball_3d(y)?;
    if y.norm() == 0.0 {
        return Err(Error::param("y", "the Neumann formula is undefined at y = 0"));
    }
    let d = x.distance(y);
    if d == 0.0 {
        return Err(Error::Singular);
    }
    Ok(INV_4PI / d + neumann_regular(x.coords(), y.coords()))
}

/// Diagonal limit of the Neumann regular part,
/// `(1/4π)(1/(1-|y|^2) - log(2(1-|y|^2)))`.
pub fn ball_neumann_regular_diagonal(y: &Point) -> Result<f64> {
    check_unit_ball_3d(y)?;
    let s = 1.0 - dot(y.coords(), y.coords());
    Ok(INV_4PI * (1.0 / s - (2.0 * s).ln()))
}

/// Reduced modulus of the unit ball with `Γ = ∅`, charges `{a1, a2}` and
/// weights `{1, -1}`.
pub fn neumann_modulus_two_points_3d(a1: &Point, a2: &Point) -> Result<f64> {
    check_unit_ball_3d(a1)?;
    check_unit_ball_3d(a2)?;
    if a1.norm() == 0.0 || a2.norm() == 0.0 {
        return Err(Error::param("a", "charge points must be nonzero"));
    }
    if a1 == a2 {
        return Err(Error::Singular);
    }
    Ok(ball_neumann_regular_diagonal(a1)? + ball_neumann_regular_diagonal(a2)?
        - 2.0 * ball_neumann_3d(a1, a2)?)
}

/// The same modulus written out term by term and multiplied by `4π`:
///
/// ```text
/// -2/|a1-a2| - 2|a2|/|a1|a2|^2 - a2| + 2 log|1 - (a1,a2) + |a1|a2|^2 - a2|/|a2||
///   + 1/(1-|a1|^2) + 1/(1-|a2|^2) - log(4(1-|a1|^2)(1-|a2|^2))
/// ```
pub fn neumann_modulus_expanded_3d(a1: &Point, a2: &Point) -> Result<f64> {
    check_unit_ball_3d(a1)?;
    check_unit_ball_3d(a2)?;
    if a2.norm() == 0.0 {
        return Err(Error::param("a2", "must be nonzero"));
    }
    let (x, y) = (a1.coords(), a2.coords());
    let dxy = distance(x, y);
    if dxy == 0.0 {
        return Err(Error::Singular);
    }
    let ny = norm(y);
    let w: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * ny * ny - b).collect();
    let nw = norm(&w);
    let s1 = 1.0 - dot(x, x);
    let s2 = 1.0 - dot(y, y);
    Ok(-2.0 / dxy - 2.0 * ny / nw + 2.0 * (1.0 - dot(x, y) + nw / ny).abs().ln() + 1.0 / s1
        + 1.0 / s2
        - (4.0 * s1 * s2).ln())
}
