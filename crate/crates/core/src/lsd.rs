//! Limiting spectral distribution of Gram matrices of a stationary process
//! with spectral density `f`.
//!
//! The companion transform `s = S_(z) = -(1 - c)/z + c S(z)` solves
//!
//! ```text
//! z = -1/s + (c / 2 pi) int_0^{2 pi} 2 pi f(l) / (1 + 2 pi f(l) s) dl
//! ```
//!
//! which is solved pointwise by damped fixed-point iteration on
//! `s <- -1 / (z - I(s))`, accelerated by guarded Newton steps once they
//! reduce the residual. The integral uses the trapezoid rule on `Q` uniform
//! nodes; the integrand is periodic, so convergence in `Q` is spectral.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::AutocovarianceSeq;

/// `f(l) = (1/2 pi)(gamma_0 + 2 sum_{k=1}^K gamma_k cos(k l))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityFn {
    gamma: AutocovarianceSeq,
}

impl SpectralDensityFn {
    pub fn autocovariance(&self) -> &AutocovarianceSeq {
        &self.gamma
    }

    /// Raw cosine series, without clipping.
    pub fn eval(&self, lambda: f64) -> f64 {
        let g = &self.gamma.gamma;
        let tail: f64 = g
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, gk)| gk * (k as f64 * lambda).cos())
            .sum();
        (g[0] + 2.0 * tail) / (2.0 * PI)
    }

    /// Values at `l_j = 2 pi j / Q`. Values in `[-1e-8 gamma_0, 0)` are clipped
    /// to zero; anything more negative signals a truncation order too low.
    pub fn sample(&self, nodes: usize) -> Result<Vec<f64>> {
        if nodes == 0 {
            return Err(Error::parameter("need at least one quadrature node"));
        }
        let g = &self.gamma.gamma;
        let table: Vec<f64> = (0..nodes)
            .map(|r| (2.0 * PI * r as f64 / nodes as f64).cos())
            .collect();
        let g0 = g[0];
        let floor = -1e-8 * g0;
        (0..nodes)
            .map(|j| {
                let tail: f64 = g
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, gk)| gk * table[(k * j) % nodes])
                    .sum();
                let value = (g0 + 2.0 * tail) / (2.0 * PI);
                if value < floor {
                    Err(Error::TruncationOrder {
                        lambda: 2.0 * PI * j as f64 / nodes as f64,
                        value,
                    })
                } else {
                    Ok(value.max(0.0))
                }
            })
            .collect()
    }
}

pub fn spectral_density(gamma: &AutocovarianceSeq) -> Result<SpectralDensityFn> {
    if !gamma.summable {
        return Err(Error::unsupported(
            "non-summable autocovariances (long memory) have no bounded spectral density",
        ));
    }
    if gamma.gamma.is_empty() {
        return Err(Error::parameter("empty autocovariance sequence"));
    }
    Ok(SpectralDensityFn {
        gamma: gamma.clone(),
    })
}

/// Spectral density identically zero (the degenerate zero process).
pub fn zero_density() -> SpectralDensityFn {
    SpectralDensityFn {
        gamma: AutocovarianceSeq::new(vec![0.0], crate::process::AutocovSource::ClosedForm, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub quad_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            quad_nodes: 2048,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.quad_nodes == 0 {
            return Err(Error::parameter("quad_nodes must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::parameter("max_iter must be positive"));
        }
        Ok(())
    }
}

/// One solved point of the limit equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub z: Complex64,
    /// `S(z)`.
    pub s: Complex64,
    /// Companion `S_(z)`.
    pub s_companion: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

const NEWTON_PERIOD: usize = 16;
const MIN_DAMPING: f64 = 1.0 / 1024.0;
const NEWTON_STEPS: usize = 40;

/// The limit equation discretized on the quadrature nodes for a fixed `c`.
#[derive(Debug, Clone)]
pub struct LsdSolver {
    c: f64,
    /// Distinct values of `2 pi f(l_j)` with their quadrature weights.
    atoms: Vec<(f64, f64)>,
    opts: SolverOptions,
    gamma0: f64,
}

impl LsdSolver {
    pub fn new(f: &SpectralDensityFn, c: f64, opts: SolverOptions) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::parameter(format!("aspect ratio c must be positive, got {c}")));
        }
        opts.validate()?;
        let mut t: Vec<f64> = f.sample(opts.quad_nodes)?.into_iter().map(|v| 2.0 * PI * v).collect();
        t.sort_by(f64::total_cmp);
        let w = 1.0 / opts.quad_nodes as f64;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for v in t {
            match atoms.last_mut() {
                Some((last, weight)) if *last == v => *weight += w,
                _ => atoms.push((v, w)),
            }
        }
        Ok(LsdSolver {
            c,
            atoms,
            opts,
            gamma0: f.autocovariance().gamma0(),
        })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.c
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// First moment of the limit law, `gamma_0`.
    pub fn mean(&self) -> f64 {
        self.gamma0
    }

    /// Largest value of `2 pi f` on the nodes.
    pub fn max_weight(&self) -> f64 {
        self.atoms.last().map(|a| a.0).unwrap_or(0.0)
    }

    /// `I(s) = (c / 2 pi) int 2 pi f / (1 + 2 pi f s)` and its derivative.
    fn integral(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut value = Complex64::new(0.0, 0.0);
        let mut deriv = Complex64::new(0.0, 0.0);
        for &(t, w) in &self.atoms {
            if t == 0.0 {
                continue;
            }
            let inv = (Complex64::new(1.0, 0.0) + s * t).inv();
            let q = inv * t;
            value += q * w;
            deriv -= q * q * w;
        }
        (value * self.c, deriv * self.c)
    }

    /// `|z - (-1/s + I(s))|`.
    pub fn residual(&self, z: Complex64, s_companion: Complex64) -> f64 {
        let (i, _) = self.integral(s_companion);
        (z - (-s_companion.inv() + i)).norm()
    }

    /// Cold solve from `-1/z`. Close to the real axis the iteration is first
    /// run at heights `Im z * 2^j >= 1` and walked down, each rung warm-started
    /// from the one above.
    pub fn solve(&self, z: Complex64) -> Result<FixedPoint> {
        if !(z.im > 0.0) {
            return Err(Error::domain(format!("need Im z > 0, got {z}")));
        }
        let target = self.opts.tol * (1.0 + z.norm());
        if z.im >= 1.0 {
            return self.solve_from(z, -z.inv());
        }
        if let Some((root, steps, res)) = self.newton(z, -z.inv(), target) {
            return self.finish(z, root, steps, res);
        }
        let rungs = (1.0 / z.im).log2().ceil() as i32;
        let top = Complex64::new(z.re, z.im * 2f64.powi(rungs));
        let mut point = self.solve_from(top, -top.inv())?;
        let mut iterations = point.iterations;
        for j in (0..rungs).rev() {
            let zj = Complex64::new(z.re, z.im * 2f64.powi(j));
            point = self.solve_from(zj, point.s_companion)?;
            iterations += point.iterations;
        }
        point.iterations = iterations;
        Ok(point)
    }

    /// Iterates from `start` (must lie in the upper half-plane).
    pub fn solve_from(&self, z: Complex64, start: Complex64) -> Result<FixedPoint> {
        if !(z.im > 0.0) {
            return Err(Error::domain(format!("need Im z > 0, got {z}")));
        }
        let target = self.opts.tol * (1.0 + z.norm());
        let mut s = if start.im > 0.0 { start } else { -z.inv() };
        let mut damping: f64 = 1.0;
        let mut prev_step = f64::INFINITY;
        let mut growth = 0;
        let mut trace = Vec::new();
        let mut iterations = 0;

        while iterations <= self.opts.max_iter {
            if iterations % NEWTON_PERIOD == 0 {
                if let Some((root, steps, res)) = self.newton(z, s, target) {
                    return self.finish(z, root, iterations + steps, res);
                }
            }
            let (i_val, _) = self.integral(s);
            let res = (z - (-s.inv() + i_val)).norm();
            trace.push(res);
            if res <= target {
                return self.finish(z, s, iterations, res);
            }
            if iterations == self.opts.max_iter {
                break;
            }
            iterations += 1;

            // F maps the upper half-plane into itself, so every convex
            // combination of s and F(s) stays there too.
            let step = -(z - i_val).inv() - s;
            let size = step.norm();
            if size > prev_step {
                growth += 1;
                if growth >= 2 {
                    damping = (damping * 0.5).max(MIN_DAMPING);
                    growth = 0;
                }
            } else {
                growth = 0;
            }
            prev_step = size;
            let mut next = s + step * damping;
            while next.im <= 0.0 && damping > f64::EPSILON {
                damping *= 0.5;
                next = s + step * damping;
            }
            s = next;
        }

        let keep = trace.len().saturating_sub(32);
        Err(Error::Solver {
            z,
            iterations: self.opts.max_iter,
            last_residual: trace.last().copied().unwrap_or(f64::NAN),
            residual_trace: trace.split_off(keep),
        })
    }

    /// Newton on `R(s) = -1/s + I(s) - z` from `s`. Returns the root only if it
    /// reaches `target` without leaving the upper half-plane; the solution
    /// there is unique, so such a root is the fixed point.
    fn newton(&self, z: Complex64, mut s: Complex64, target: f64) -> Option<(Complex64, usize, f64)> {
        for step in 0..NEWTON_STEPS {
            let (i_val, i_der) = self.integral(s);
            let r = z - (-s.inv() + i_val);
            let res = r.norm();
            if res <= target {
                return Some((s, step, res));
            }
            let slope = (s * s).inv() + i_der;
            s += r / slope;
            if !(s.is_finite() && s.im > 0.0) {
                return None;
            }
        }
        None
    }

    fn finish(&self, z: Complex64, s_companion: Complex64, iterations: usize, residual: f64) -> Result<FixedPoint> {
        let s = (s_companion + (1.0 - self.c) / z) / self.c;
        if !(s_companion.im > 0.0) {
            return Err(Error::Solver {
                z,
                iterations,
                last_residual: residual,
                residual_trace: vec![residual],
            });
        }
        Ok(FixedPoint {
            z,
            s,
            s_companion,
            iterations,
            residual,
        })
    }

    /// Solves a grid in order, warm-starting each point from its predecessor.
    pub fn solve_path(&self, zs: &[Complex64]) -> Result<Vec<FixedPoint>> {
        let mut out: Vec<FixedPoint> = Vec::with_capacity(zs.len());
        for &z in zs {
            let point = match out.last() {
                Some(prev) => self
                    .solve_from(z, prev.s_companion)
                    .or_else(|_| self.solve(z))?,
                None => self.solve(z)?,
            };
            out.push(point);
        }
        Ok(out)
    }
}

/// Solved points of the limit equation for one aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StieltjesSolution {
    pub c: f64,
    pub points: Vec<FixedPoint>,
}

impl StieltjesSolution {
    pub fn to_csv(&self) -> String {
        solutions_csv(&self.points)
    }
}

impl LsdSolver {
    /// Solves every point independently and concurrently.
    pub fn solve_grid(&self, zs: &[Complex64]) -> Result<StieltjesSolution> {
        let points = zs.par_iter().map(|&z| self.solve(z)).collect::<Result<Vec<_>>>()?;
        Ok(StieltjesSolution { c: self.c, points })
    }
}

pub fn solve_fixed_point(f: &SpectralDensityFn, c: f64, z: Complex64, opts: SolverOptions) -> Result<FixedPoint> {
    LsdSolver::new(f, c, opts)?.solve(z)
}

/// Stieltjes transform of the Marchenko-Pastur law with ratio `c` and scale
/// `sigma2`: the root of `c z sigma2 S^2 + (z - sigma2 (1 - c)) S + 1 = 0` in
/// the upper half-plane.
pub fn mp_reference(z: Complex64, c: f64, sigma2: f64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::domain(format!("need Im z > 0, got {z}")));
    }
    if !(c > 0.0 && sigma2 > 0.0) {
        return Err(Error::parameter("c and sigma2 must be positive"));
    }
    let a = z * (c * sigma2);
    let b = z - sigma2 * (1.0 - c);
    let disc = (b * b - a * 4.0).sqrt();
    let q1 = -(b + disc) * 0.5;
    let q2 = -(b - disc) * 0.5;
    let q = if q1.norm() >= q2.norm() { q1 } else { q2 };
    let r1 = q / a;
    let r2 = q.inv();
    Ok(if r1.im >= r2.im { r1 } else { r2 })
}

fn mp_edges(c: f64, sigma2: f64) -> (f64, f64) {
    let sc = c.sqrt();
    (sigma2 * (1.0 - sc).powi(2), sigma2 * (1.0 + sc).powi(2))
}

/// Absolutely continuous part of the Marchenko-Pastur law.
pub fn mp_density(x: f64, c: f64, sigma2: f64) -> f64 {
    let (lo, hi) = mp_edges(c, sigma2);
    if x <= lo || x >= hi || x <= 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * c * sigma2 * x)
}

/// Marchenko-Pastur CDF, including the atom `1 - 1/c` at 0 when `c > 1`.
/// The substitution `x = (lo + hi)/2 - (hi - lo)/2 cos(theta)` removes the
/// edge singularities; composite Simpson in `theta`.
pub fn mp_cdf(x: f64, c: f64, sigma2: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let atom = if c > 1.0 { 1.0 - 1.0 / c } else { 0.0 };
    let (lo, hi) = mp_edges(c, sigma2);
    if x <= lo {
        return atom;
    }
    let continuous_mass = if c > 1.0 { 1.0 / c } else { 1.0 };
    if x >= hi {
        return atom + continuous_mass;
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let theta_max = ((mid - x) / half).clamp(-1.0, 1.0).acos();
    let integrand = |theta: f64| {
        let xt = mid - half * theta.cos();
        let s = theta.sin();
        if xt <= 0.0 {
            // lo = 0 (c = 1): sin^2 / (1 - cos) -> 1 + cos
            return half * (1.0 + theta.cos()) / (2.0 * PI * c * sigma2);
        }
        half * half * s * s / (2.0 * PI * c * sigma2 * xt)
    };
    let panels = 4096;
    let h = theta_max / panels as f64;
    let mut sum = integrand(0.0) + integrand(theta_max);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(k as f64 * h);
    }
    (atom + sum * h / 3.0).min(1.0)
}

/// `(x, (1/pi) Im S(x + i v))` along a grid, solved in order with warm starts.
pub fn density_from_stieltjes(solver: &LsdSolver, xs: &[f64], v: f64) -> Result<Vec<(f64, f64)>> {
    if !(1e-4..=1e-2).contains(&v) {
        return Err(Error::domain(format!("inversion height v must lie in [1e-4, 1e-2], got {v}")));
    }
    let zs: Vec<Complex64> = xs.iter().map(|&x| Complex64::new(x, v)).collect();
    let points = solver.solve_path(&zs)?;
    Ok(points
        .iter()
        .map(|p| (p.z.re, (p.s.im / PI).max(0.0)))
        .collect())
}

pub const DEFAULT_INVERSION_HEIGHT: f64 = 1e-3;

/// Grid for Stieltjes inversion: step `10 v` left of `-20 v`, `v / 4` on
/// `[-20 v, 20 v]` (where atoms and hard-edge singularities sit), `v` beyond.
pub fn inversion_grid(x_min: f64, x_max: f64, v: f64) -> Vec<f64> {
    let near = 20.0 * v;
    let mut xs = Vec::new();
    let mut k = 0;
    loop {
        let x = x_min + 10.0 * v * k as f64;
        if x >= -near {
            break;
        }
        xs.push(x);
        k += 1;
    }
    let fine = (8.0 * near / v).round() as usize;
    for k in 0..fine {
        let x = -near + 0.25 * v * k as f64;
        if x >= x_min && x <= x_max {
            xs.push(x);
        }
    }
    let mut k = 0;
    loop {
        let x = near + v * k as f64;
        if x > x_max {
            break;
        }
        xs.push(x);
        k += 1;
    }
    xs
}

/// Support bound: `(1 + sqrt c)^2 max(2 pi f)`, padded.
pub fn support_upper_bound(solver: &LsdSolver) -> f64 {
    let c = solver.aspect_ratio();
    (1.0 + c.sqrt()).powi(2) * solver.max_weight() * 1.1 + 0.5
}

/// Trapezoid rule over an `(x, y)` polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Piecewise-linear CDF of the limit law: an atom at 0 plus an integrated
/// continuous density.
#[derive(Debug, Clone, PartialEq)]
pub struct LsdCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    /// Point mass at the origin.
    pub atom: f64,
    /// Total mass captured by the grid before normalization.
    pub mass: f64,
}

impl LsdCdf {
    /// Continuous law from `(x, density)` samples, normalized to total mass 1.
    pub fn from_density(points: &[(f64, f64)]) -> Self {
        Self::with_atom(points, 0.0)
    }

    /// `atom` at 0 plus the continuous part `points`, scaled to carry `1 - atom`.
    pub fn with_atom(points: &[(f64, f64)], atom: f64) -> Self {
        let mut xs = Vec::with_capacity(points.len());
        let mut cdf = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, &(x, y)) in points.iter().enumerate() {
            if i > 0 {
                let (x0, y0) = points[i - 1];
                acc += 0.5 * (x - x0) * (y + y0);
            }
            xs.push(x);
            cdf.push(acc);
        }
        let continuous = acc;
        let scale = if continuous > 0.0 { (1.0 - atom) / continuous } else { 0.0 };
        for v in &mut cdf {
            *v *= scale;
        }
        LsdCdf {
            xs,
            cdf,
            atom,
            mass: atom + continuous,
        }
    }

    /// CSV with columns `x, cdf`; the atom is included at every `x >= 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,cdf\n");
        for &x in &self.xs {
            out.push_str(&format!("{x},{}\n", self.eval(x)));
        }
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        let atom = if x >= 0.0 { self.atom } else { 0.0 };
        if self.xs.is_empty() || x < self.xs[0] {
            return atom;
        }
        let i = self.xs.partition_point(|&g| g <= x);
        if i >= self.xs.len() {
            return 1.0;
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        atom + c0 + (c1 - c0) * (x - x0) / (x1 - x0)
    }
}

/// Relative inversion height near the origin: `v(x) = min(v, x / 20)`.
const HEIGHT_SLOPE: f64 = 0.05;
const GEOMETRIC_RATIO: f64 = 1.02;

/// CDF of the limit law. For `c > 1` the atom `1 - 1/c` at 0 is split off
/// exactly, since `S_(z) / c = S(z) + (1 - 1/c) / z` is the transform of the
/// continuous part. That part is inverted at height `min(v, x / 20)` on a
/// geometric grid near 0 and at height `v` with step `v / 2` across the bulk.
pub fn lsd_cdf(solver: &LsdSolver, v: f64) -> Result<LsdCdf> {
    if !(1e-4..=1e-2).contains(&v) {
        return Err(Error::domain(format!("inversion height v must lie in [1e-4, 1e-2], got {v}")));
    }
    let c = solver.aspect_ratio();
    let atom = (1.0 - 1.0 / c).max(0.0);
    let scale = solver.max_weight().max(f64::MIN_POSITIVE);
    let switch = v / HEIGHT_SLOPE;
    let mut zs = Vec::new();
    let mut x = 1e-10 * scale;
    while x < switch {
        zs.push(Complex64::new(x, HEIGHT_SLOPE * x));
        x *= GEOMETRIC_RATIO;
    }
    let x_max = support_upper_bound(solver);
    let steps = ((x_max - switch) / (0.5 * v)).ceil() as usize;
    zs.extend((0..=steps).map(|k| Complex64::new(switch + 0.5 * v * k as f64, v)));

    let points = solver.solve_path(&zs)?;
    let density: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let t = if c > 1.0 { p.s_companion / c } else { p.s };
            (p.z.re, (t.im / PI).max(0.0))
        })
        .collect();
    Ok(LsdCdf::with_atom(&density, atom))
}

/// CSV with columns `re_z, im_z, re_S, im_S, re_Su, im_Su, iters, residual`.
pub fn solutions_csv(points: &[FixedPoint]) -> String {
    let mut out = String::from("re_z,im_z,re_S,im_S,re_Su,im_Su,iters,residual\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.z.re, p.z.im, p.s.re, p.s.im, p.s_companion.re, p.s_companion.im, p.iterations, p.residual
        ));
    }
    out
}

/// CSV with columns `x, density`.
pub fn density_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("x,density\n");
    for (x, d) in points {
        out.push_str(&format!("{x},{d}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{autocovariance_closed_form, AutocovSource, ProcessSpec};
    use approx::assert_abs_diff_eq;

    fn white(sigma2: f64) -> SpectralDensityFn {
        spectral_density(&AutocovarianceSeq::new(vec![sigma2], AutocovSource::ClosedForm, true)).unwrap()
    }

    #[test]
    fn solver_options_are_validated() {
        let f = white(1.0);
        for opts in [
            SolverOptions { quad_nodes: 0, ..Default::default() },
            SolverOptions { tol: 0.0, ..Default::default() },
            SolverOptions { tol: f64::NAN, ..Default::default() },
            SolverOptions { max_iter: 0, ..Default::default() },
        ] {
            assert!(matches!(LsdSolver::new(&f, 1.0, opts), Err(Error::Parameter(_))), "{opts:?}");
        }
    }

    #[test]
    fn white_noise_density_is_flat() {
        let f = white(1.0);
        for l in [0.0, 1.0, 3.0, 6.0] {
            assert_abs_diff_eq!(f.eval(l), 1.0 / (2.0 * PI), epsilon = 1e-15);
        }
    }

    #[test]
    fn doubling_density_at_zero() {
        let g = autocovariance_closed_form(&ProcessSpec::doubling_map(), 60).unwrap();
        let f = spectral_density(&g).unwrap();
        assert_abs_diff_eq!(f.eval(0.0), 1.0 / (8.0 * PI), epsilon = 1e-10);
    }

    #[test]
    fn density_symmetry_and_mass() {
        let g = autocovariance_closed_form(&ProcessSpec::harris(1.0), 64).unwrap();
        let f = spectral_density(&g).unwrap();
        for l in [0.1, 0.9, 2.5] {
            assert_abs_diff_eq!(f.eval(l), f.eval(2.0 * PI - l), epsilon = 1e-12);
        }
        let q = 2048;
        let vals = f.sample(q).unwrap();
        let integral = vals.iter().sum::<f64>() * 2.0 * PI / q as f64;
        assert_abs_diff_eq!(integral, g.gamma0(), epsilon = 1e-6);
    }

    #[test]
    fn long_memory_rejected() {
        let g = AutocovarianceSeq::new(vec![1.0, 0.5], AutocovSource::ClosedForm, false);
        assert!(matches!(spectral_density(&g), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn negative_density_flags_truncation_order() {
        // 1 + 2(0.9 cos l) < 0 near l = pi.
        let g = AutocovarianceSeq::new(vec![1.0, 0.9], AutocovSource::ClosedForm, true);
        let f = spectral_density(&g).unwrap();
        assert!(matches!(f.sample(64), Err(Error::TruncationOrder { .. })));
    }

    #[test]
    fn zero_process_gives_dirac_at_zero() {
        let z = Complex64::new(0.7, 0.4);
        let p = solve_fixed_point(&zero_density(), 0.5, z, SolverOptions::default()).unwrap();
        let expect = -z.inv();
        assert_abs_diff_eq!((p.s_companion - expect).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((p.s - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mp_branch_near_negative_axis() {
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let s = mp_reference(Complex64::new(-1.0, 1e-6), 1.0, 1.0).unwrap();
        assert!((s.re - golden).abs() < 1e-5);
        let p = solve_fixed_point(&white(1.0), 1.0, Complex64::new(-1.0, 1e-6), SolverOptions::default()).unwrap();
        assert!((p.s.re - golden).abs() < 1e-4, "{}", p.s);
    }

    #[test]
    fn mp_total_mass() {
        let y = 1e3;
        for (c, s2) in [(0.5, 1.0), (1.0, 1.0), (2.0, 3.0)] {
            let s = mp_reference(Complex64::new(0.0, y), c, s2).unwrap();
            let w = -Complex64::new(0.0, y) * s;
            assert!((w - 1.0).norm() < 1e-2);
        }
        assert!(mp_reference(Complex64::new(1.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn mp_cdf_endpoints() {
        assert_eq!(mp_cdf(-1.0, 0.5, 1.0), 0.0);
        assert_abs_diff_eq!(mp_cdf(10.0, 0.5, 1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mp_cdf(3.99999999, 1.0, 1.0), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mp_cdf(0.0, 2.0, 1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mp_cdf(100.0, 2.0, 1.0), 1.0, epsilon = 1e-12);
        // Median of MP(c = 1) is at most the mean 1.
        assert!(mp_cdf(1.0, 1.0, 1.0) > 0.5);
    }

    #[test]
    fn inversion_height_bounds() {
        let solver = LsdSolver::new(&white(1.0), 1.0, SolverOptions::default()).unwrap();
        assert!(density_from_stieltjes(&solver, &[1.0], 0.5).is_err());
        assert!(density_from_stieltjes(&solver, &[1.0], 1e-5).is_err());
    }

    #[test]
    fn mp_density_via_inversion() {
        let solver = LsdSolver::new(&white(1.0), 1.0, SolverOptions::default()).unwrap();
        let d = density_from_stieltjes(&solver, &[2.0, 5.0], 1e-3).unwrap();
        assert_abs_diff_eq!(d[0].1, 1.0 / (2.0 * PI), epsilon = 0.01);
        assert_abs_diff_eq!(mp_density(2.0, 1.0, 1.0), 1.0 / (2.0 * PI), epsilon = 1e-15);
        assert!(d[1].1 < 5e-3);
    }

    #[test]
    fn zero_density_inverts_to_poisson_kernel() {
        let solver = LsdSolver::new(&zero_density(), 1.0, SolverOptions::default()).unwrap();
        let v = 1e-3;
        let d = density_from_stieltjes(&solver, &[-0.01, 0.0, 0.002], v).unwrap();
        for (x, dens) in d {
            assert_abs_diff_eq!(dens, v / (PI * (x * x + v * v)), epsilon = 1e-8 * (1.0 + dens));
        }
    }

    #[test]
    fn laurent_tail_on_imaginary_axis() {
        let g = autocovariance_closed_form(&ProcessSpec::harris(1.0), 64).unwrap();
        let f = spectral_density(&g).unwrap();
        let z = Complex64::new(0.0, 1e3);
        for c in [0.5, 1.0, 2.0] {
            let p = solve_fixed_point(&f, c, z, SolverOptions::default()).unwrap();
            assert!((p.s + z.inv()).norm() <= 10.0 * g.gamma0() / z.norm_sqr());
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        let g = autocovariance_closed_form(&ProcessSpec::harris(1.0), 64).unwrap();
        let f = spectral_density(&g).unwrap();
        let coarse = SolverOptions::default();
        let fine = SolverOptions { quad_nodes: 4096, ..coarse };
        for z in [Complex64::new(0.5, 0.1), Complex64::new(2.0, 0.5), Complex64::i()] {
            let a = solve_fixed_point(&f, 1.0, z, coarse).unwrap();
            let b = solve_fixed_point(&f, 1.0, z, fine).unwrap();
            assert!((a.s - b.s).norm() < 1e-8);
        }
    }

    #[test]
    fn herglotz_and_companion_identity() {
        let g = autocovariance_closed_form(&ProcessSpec::doubling_map(), 60).unwrap();
        let solver = LsdSolver::new(&spectral_density(&g).unwrap(), 0.7, SolverOptions::default()).unwrap();
        let zs: Vec<Complex64> = (0..12).map(|k| Complex64::new(-0.5 + 0.2 * k as f64, 0.05 + 0.1 * k as f64)).collect();
        let sol = solver.solve_grid(&zs).unwrap();
        for p in &sol.points {
            assert!(p.s.im > 0.0 && p.s_companion.im > 0.0);
            assert!(p.s_companion.norm() <= 1.0 / p.z.im);
            let back = -(1.0 - 0.7) / p.z + p.s * 0.7;
            assert!((back - p.s_companion).norm() < 1e-12);
            assert!(p.residual <= 1e-12 * (1.0 + p.z.norm()));
        }
        let path = solver.solve_path(&zs).unwrap();
        for (a, b) in path.iter().zip(&sol.points) {
            assert!((a.s - b.s).norm() < 1e-9);
        }
        assert_eq!(sol.to_csv().lines().count(), 13);
    }

    #[test]
    fn cold_solve_near_hard_edge() {
        let solver = LsdSolver::new(&white(1.0), 1.0, SolverOptions::default()).unwrap();
        for z in [Complex64::new(0.02, 1e-3), Complex64::new(1e-6, 1e-8), Complex64::new(3.99, 1e-4)] {
            let p = solver.solve(z).unwrap();
            assert!((p.s - mp_reference(z, 1.0, 1.0).unwrap()).norm() < 1e-8 * p.s.norm());
        }
    }

    #[test]
    fn inversion_grid_is_increasing_and_covers_origin() {
        let xs = inversion_grid(-0.5, 4.0, 1e-3);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert!(xs.windows(2).all(|w| w[1] - w[0] <= 1e-2 + 1e-12));
        assert!(xs.iter().any(|&x| x.abs() < 1e-12));
        assert!(*xs.last().unwrap() <= 4.0 && *xs.last().unwrap() > 3.99);
    }

    #[test]
    fn lsd_cdf_matches_marchenko_pastur() {
        for c in [0.5, 1.0, 2.0] {
            let solver = LsdSolver::new(&white(1.0), c, SolverOptions::default()).unwrap();
            let cdf = lsd_cdf(&solver, DEFAULT_INVERSION_HEIGHT).unwrap();
            assert!((cdf.mass - 1.0).abs() < 5e-3, "c = {c}: mass {}", cdf.mass);
            let worst = (0..=400)
                .map(|k| -0.1 + 0.02 * k as f64)
                .map(|x| (cdf.eval(x) - mp_cdf(x, c, 1.0)).abs())
                .fold(0.0, f64::max);
            assert!(worst < 5e-3, "c = {c}: sup error {worst}");
        }
    }

    #[test]
    fn cdf_from_density_interpolates() {
        let cdf = LsdCdf::from_density(&[(0.0, 1.0), (1.0, 1.0), (2.0, 0.0)]);
        assert_abs_diff_eq!(cdf.mass, 1.5, epsilon = 1e-15);
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_abs_diff_eq!(cdf.eval(1.0), 1.0 / 1.5, epsilon = 1e-15);
        assert_eq!(cdf.eval(3.0), 1.0);
    }
}
