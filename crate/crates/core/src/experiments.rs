//! Seeded Monte Carlo campaigns.
//!
//! Replicate `r` uses seed `base_seed + r` at every size, so paired
//! comparisons across sizes and ensembles share randomness. Companion
//! ensembles draw from streams derived from the replicate seed. Replicates
//! run concurrently; results are collected in replicate order and reduced
//! sequentially, so reports are bit-for-bit reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_bundle;
use crate::lsd::{lsd_cdf, mp_cdf, spectral_density, LsdCdf, LsdSolver, SolverOptions, DEFAULT_INVERSION_HEIGHT};
use crate::matrix::{
    build_an, build_blocked_matrix, build_bn, build_gn, check_projection_support, resample_independent_blocks,
    scheme_for, BlockParams, EnsembleConfig,
};
use crate::process::{
    autocovariance_closed_form, beta_decay, sample_trajectory, AutocovarianceSeq, ProcessKind, ProcessSpec,
};
use crate::rng::{derive_seed, stream};
use crate::spectral::{kolmogorov_distance, EnsembleKind, GramSpectrum};

pub const SCHEMA_VERSION: u32 = 1;

fn default_replicates() -> usize {
    5
}
fn default_z_grid() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0]]
}
fn default_alpha() -> f64 {
    1.5
}
fn default_gamma_lags() -> usize {
    1024
}
fn default_inversion_height() -> f64 {
    DEFAULT_INVERSION_HEIGHT
}
fn default_deviation() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: ProcessSpec,
    /// `(N, n)` pairs, nondecreasing in `N`.
    pub sizes: Vec<(usize, usize)>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// `[Re z, Im z]` pairs.
    #[serde(default = "default_z_grid")]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub base_seed: u64,
    /// Ladder of `(m, a_m, M)` for the approximation chain.
    #[serde(default)]
    pub blocks: Vec<BlockParams>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Exponent of `log n` in the concentration envelope.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Also compare `A_n` to the limit law.
    #[serde(default)]
    pub include_an: bool,
    /// Lags of the closed-form autocovariance fed to the limit equation.
    #[serde(default = "default_gamma_lags")]
    pub gamma_lags: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_inversion_height")]
    pub inversion_height: f64,
    /// Deviation level `t` at which the concentration envelope is evaluated.
    #[serde(default = "default_deviation")]
    pub deviation: f64,
}

impl ExperimentConfig {
    pub fn new(spec: ProcessSpec, sizes: Vec<(usize, usize)>) -> Self {
        ExperimentConfig {
            spec,
            sizes,
            replicates: default_replicates(),
            z_grid: default_z_grid(),
            base_seed: 0,
            blocks: Vec::new(),
            output: None,
            alpha: default_alpha(),
            include_an: false,
            gamma_lags: default_gamma_lags(),
            solver: SolverOptions::default(),
            inversion_height: default_inversion_height(),
            deviation: default_deviation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.sizes.is_empty() {
            return Err(Error::parameter("at least one size is required"));
        }
        for &(rows, cols) in &self.sizes {
            EnsembleConfig::new(rows, cols)?;
        }
        if self.sizes.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::parameter("sizes must be nondecreasing in N"));
        }
        if self.replicates == 0 {
            return Err(Error::parameter("replicates must be positive"));
        }
        if self.z_grid.is_empty() {
            return Err(Error::parameter("z_grid is empty"));
        }
        if let Some(z) = self.z_grid.iter().find(|z| !(z[1] > 0.0) || !z[0].is_finite()) {
            return Err(Error::domain(format!("z = {} + {}i is not in the upper half-plane", z[0], z[1])));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::parameter(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.deviation > 0.0) {
            return Err(Error::parameter("deviation must be positive"));
        }
        self.solver.validate()
    }

    pub fn zs(&self) -> Vec<Complex64> {
        self.z_grid.iter().map(|z| Complex64::new(z[0], z[1])).collect()
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LsdConvergence,
    Universality,
    Concentration,
    ApproximationChain,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::LsdConvergence => "lsd_convergence",
            ExperimentKind::Universality => "universality",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::ApproximationChain => "approximation_chain",
        }
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricTable {
    pub fn new(columns: &[&str]) -> Self {
        MetricTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub software: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub tables: BTreeMap<String, MetricTable>,
    pub checks: BTreeMap<String, bool>,
    pub notices: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    fn new(kind: ExperimentKind, cfg: &ExperimentConfig) -> Self {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: kind,
            software: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config: cfg.clone(),
            seeds: (0..cfg.replicates).map(|r| cfg.replicate_seed(r)).collect(),
            tables: BTreeMap::new(),
            checks: BTreeMap::new(),
            notices: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn table(&self, name: &str) -> Option<&MetricTable> {
        self.tables.get(name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `report.json` plus one `<table>.csv` per table, written atomically.
    pub fn artifacts(&self) -> Vec<(String, Vec<u8>)> {
        let mut files = vec![("report.json".to_string(), self.to_json().into_bytes())];
        for (name, table) in &self.tables {
            files.push((format!("{name}.csv"), table.to_csv().into_bytes()));
        }
        files
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_bundle(dir, &self.artifacts())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (denominator `len - 1`).
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn spectrum(gram: &DMatrix<f64>, cols: usize, kind: EnsembleKind) -> Result<GramSpectrum> {
    GramSpectrum::from_gram(gram, cols, kind)
}

fn stieltjes_all(spec: &GramSpectrum, zs: &[Complex64]) -> Result<Vec<Complex64>> {
    zs.iter().map(|&z| spec.stieltjes(z)).collect()
}

fn closed_form(spec: &ProcessSpec, lags: usize) -> Result<AutocovarianceSeq> {
    autocovariance_closed_form(spec, lags)
}

/// Limit law used as the KS reference.
enum Reference {
    MarchenkoPastur { c: f64, sigma2: f64 },
    Solved(LsdCdf),
}

impl Reference {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Reference::MarchenkoPastur { c, sigma2 } => mp_cdf(x, *c, *sigma2),
            Reference::Solved(cdf) => cdf.eval(x),
        }
    }
}

struct LimitLaw {
    c: f64,
    reference: Reference,
    mass: f64,
    normalization: f64,
}

fn limit_law(cfg: &ExperimentConfig, c: f64) -> Result<LimitLaw> {
    let gamma = closed_form(&cfg.spec, cfg.gamma_lags)?;
    let f = spectral_density(&gamma)?;
    let solver = LsdSolver::new(&f, c, cfg.solver)?;
    let y = 1e3;
    let at_infinity = solver.solve(Complex64::new(0.0, y))?;
    let normalization = (-Complex64::new(0.0, y) * at_infinity.s).re;
    let cdf = lsd_cdf(&solver, cfg.inversion_height)?;
    let mass = cdf.mass;
    let reference = if cfg.spec.kind == ProcessKind::IidBaseline {
        Reference::MarchenkoPastur {
            c,
            sigma2: gamma.gamma0(),
        }
    } else {
        Reference::Solved(cdf)
    };
    Ok(LimitLaw {
        c,
        reference,
        mass,
        normalization,
    })
}

/// Mean KS distance between the ESD of `B_n` (and optionally `A_n`) and the
/// solved limit law, per size.
pub fn run_lsd_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::LsdConvergence, cfg);

    let mut laws: Vec<LimitLaw> = Vec::new();
    for &(rows, cols) in &cfg.sizes {
        let c = rows as f64 / cols as f64;
        if !laws.iter().any(|l| l.c == c) {
            laws.push(limit_law(cfg, c)?);
        }
    }
    let mut lsd = MetricTable::new(&["c", "density_mass", "normalization"]);
    for law in &laws {
        lsd.push(vec![law.c, law.mass, law.normalization]);
    }

    let (mut reps, mut summary) = if cfg.include_an {
        (
            MetricTable::new(&["N", "n", "replicate", "seed", "ks_bn", "ks_an"]),
            MetricTable::new(&["N", "n", "mean_ks_bn", "std_ks_bn", "mean_ks_an"]),
        )
    } else {
        (
            MetricTable::new(&["N", "n", "replicate", "seed", "ks_bn"]),
            MetricTable::new(&["N", "n", "mean_ks_bn", "std_ks_bn"]),
        )
    };
    let mut means = Vec::new();
    for &(rows, cols) in &cfg.sizes {
        let ens = EnsembleConfig::new(rows, cols)?;
        let c = ens.aspect_ratio();
        let law = laws.iter().find(|l| l.c == c).expect("law cached per ratio");
        let rows_out = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.replicate_seed(r);
                let traj = sample_trajectory(&cfg.spec, ens.entries(), seed)?;
                let (_, g) = build_bn(&traj, &ens)?;
                let esd = spectrum(&g, cols, EnsembleKind::Bn)?.esd();
                let ks_bn = kolmogorov_distance(&esd, |x| law.reference.eval(x));
                let ks_an = if cfg.include_an {
                    let (_, ga) = build_an(&cfg.spec, &ens, seed)?;
                    let esd = spectrum(&ga, cols, EnsembleKind::An)?.esd();
                    Some(kolmogorov_distance(&esd, |x| law.reference.eval(x)))
                } else {
                    None
                };
                Ok((seed, ks_bn, ks_an))
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, &(seed, bn, an)) in rows_out.iter().enumerate() {
            let mut row = vec![rows as f64, cols as f64, r as f64, seed as f64, bn];
            row.extend(an);
            reps.push(row);
        }
        let bn: Vec<f64> = rows_out.iter().map(|x| x.1).collect();
        let an: Vec<f64> = rows_out.iter().filter_map(|x| x.2).collect();
        means.push(mean(&bn));
        let mut row = vec![rows as f64, cols as f64, mean(&bn), std_dev(&bn)];
        if cfg.include_an {
            row.push(mean(&an));
        }
        summary.push(row);
    }
    report.checks.insert("mean_ks_bn_strictly_decreasing".into(), strictly_decreasing(&means));
    report.tables.insert("lsd".into(), lsd);
    report.tables.insert("replicates".into(), reps);
    report.tables.insert("summary".into(), summary);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// `|S_{B_n}(z) - S_{G_n}(z)|` with a Gaussian-vs-Gaussian control, per size
/// and grid point.
pub fn run_universality(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Universality, cfg);
    let zs = cfg.zs();

    let mut reps = MetricTable::new(&[
        "N", "n", "replicate", "re_z", "im_z", "re_s_bn", "im_s_bn", "re_s_gn", "im_s_gn", "abs_diff_bg", "abs_diff_gg",
    ]);
    let mut summary = MetricTable::new(&[
        "N",
        "n",
        "re_z",
        "im_z",
        "mean_abs_diff_bg",
        "abs_mean_diff_bg",
        "mean_abs_diff_gg",
    ]);
    let mut per_z: Vec<Vec<f64>> = vec![Vec::new(); zs.len()];
    for &(rows, cols) in &cfg.sizes {
        let ens = EnsembleConfig::new(rows, cols)?;
        let gamma = closed_form(&cfg.spec, rows - 1)?;
        let out = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.replicate_seed(r);
                let traj = sample_trajectory(&cfg.spec, ens.entries(), seed)?;
                let (_, gb) = build_bn(&traj, &ens)?;
                let (_, gg) = build_gn(&gamma, &ens, derive_seed(seed, stream::GAUSSIAN))?;
                let (_, gc) = build_gn(&gamma, &ens, derive_seed(seed, stream::GAUSSIAN_CONTROL))?;
                let sb = stieltjes_all(&spectrum(&gb, cols, EnsembleKind::Bn)?, &zs)?;
                let sg = stieltjes_all(&spectrum(&gg, cols, EnsembleKind::Gn)?, &zs)?;
                let sc = stieltjes_all(&spectrum(&gc, cols, EnsembleKind::Gn)?, &zs)?;
                Ok((sb, sg, sc))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, z) in zs.iter().enumerate() {
            let mut bg = Vec::new();
            let mut gg = Vec::new();
            let mut sum_b = Complex64::new(0.0, 0.0);
            let mut sum_g = Complex64::new(0.0, 0.0);
            for (r, (sb, sg, sc)) in out.iter().enumerate() {
                let d = (sb[k] - sg[k]).norm();
                let dc = (sc[k] - sg[k]).norm();
                bg.push(d);
                gg.push(dc);
                sum_b += sb[k];
                sum_g += sg[k];
                reps.push(vec![
                    rows as f64, cols as f64, r as f64, z.re, z.im, sb[k].re, sb[k].im, sg[k].re, sg[k].im, d, dc,
                ]);
            }
            let reps_f = cfg.replicates as f64;
            let abs_mean = ((sum_b - sum_g) / reps_f).norm();
            per_z[k].push(mean(&bg));
            summary.push(vec![rows as f64, cols as f64, z.re, z.im, mean(&bg), abs_mean, mean(&gg)]);
        }
    }
    let decreasing = per_z.iter().all(|v| strictly_decreasing(v));
    report.checks.insert("mean_abs_diff_bg_strictly_decreasing".into(), decreasing);
    report.tables.insert("replicates".into(), reps);
    report.tables.insert("summary".into(), summary);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Upper bound on `P(|S - E S| > t)` with `t = 4x`:
/// `4 exp(-x^2 v^2 N^2 (log n)^a / (256 n^2)) + 32 n^2 (log n)^a / (x^2 v^2 N^2) beta_{[n/(log n)^a] N}`.
pub fn concentration_envelope(spec: &ProcessSpec, rows: usize, cols: usize, v: f64, t: f64, alpha: f64) -> f64 {
    let x = t / 4.0;
    let (nf, big_n) = (cols as f64, rows as f64);
    let log_a = nf.ln().powf(alpha);
    let exponent = x * x * v * v * big_n * big_n * log_a / (256.0 * nf * nf);
    let lag = (nf / log_a).floor() as u64 * rows as u64;
    let beta = beta_decay(spec).bound(lag);
    4.0 * (-exponent).exp() + 32.0 * nf * nf * log_a / (x * x * v * v * big_n * big_n) * beta
}

/// Replicate spread of `S_{B_n}(z)` per size, with the exponential envelope
/// for comparison.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.replicates < 50 {
        return Err(Error::parameter(format!(
            "concentration needs at least 50 replicates, got {}",
            cfg.replicates
        )));
    }
    let start = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::Concentration, cfg);
    let zs = cfg.zs();

    let mut reps = MetricTable::new(&["N", "n", "replicate", "re_z", "im_z", "re_s", "im_s"]);
    let mut summary = MetricTable::new(&[
        "N",
        "n",
        "re_z",
        "im_z",
        "mean_re_s",
        "mean_im_s",
        "std_re_s",
        "std_im_s",
        "deviation",
        "tail_fraction",
        "envelope",
    ]);
    let mut std_by_z: Vec<Vec<f64>> = vec![Vec::new(); zs.len()];
    for &(rows, cols) in &cfg.sizes {
        let ens = EnsembleConfig::new(rows, cols)?;
        let out = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let traj = sample_trajectory(&cfg.spec, ens.entries(), cfg.replicate_seed(r))?;
                let (_, g) = build_bn(&traj, &ens)?;
                stieltjes_all(&spectrum(&g, cols, EnsembleKind::Bn)?, &zs)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, z) in zs.iter().enumerate() {
            let s: Vec<Complex64> = out.iter().map(|v| v[k]).collect();
            for (r, sk) in s.iter().enumerate() {
                reps.push(vec![rows as f64, cols as f64, r as f64, z.re, z.im, sk.re, sk.im]);
            }
            let re: Vec<f64> = s.iter().map(|c| c.re).collect();
            let im: Vec<f64> = s.iter().map(|c| c.im).collect();
            let centre = Complex64::new(mean(&re), mean(&im));
            let tail = s.iter().filter(|c| (**c - centre).norm() > cfg.deviation).count() as f64 / s.len() as f64;
            let envelope = concentration_envelope(&cfg.spec, rows, cols, z.im, cfg.deviation, cfg.alpha);
            std_by_z[k].push(std_dev(&re));
            summary.push(vec![
                rows as f64,
                cols as f64,
                z.re,
                z.im,
                centre.re,
                centre.im,
                std_dev(&re),
                std_dev(&im),
                cfg.deviation,
                tail,
                envelope,
            ]);
        }
    }
    let decreasing = std_by_z.iter().all(|v| strictly_decreasing(v));
    report.checks.insert("std_re_s_strictly_decreasing".into(), decreasing);
    report.tables.insert("replicates".into(), reps);
    report.tables.insert("summary".into(), summary);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// `B_n -> B_bar_{n,m} -> B_bar*_{n,m}` along a ladder of block parameters.
pub fn run_approximation_chain(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.blocks.is_empty() {
        return Err(Error::parameter("approximation chain needs at least one block parameter set"));
    }
    let start = Instant::now();
    let mut report = ExperimentReport::new(ExperimentKind::ApproximationChain, cfg);
    let zs = cfg.zs();

    let mut reps = MetricTable::new(&[
        "N",
        "n",
        "m",
        "a_m",
        "truncation",
        "replicate",
        "re_z",
        "im_z",
        "diff_b_bbar",
        "diff_bbar_bstar",
        "trace_defect",
        "trace_bbar",
        "gamma0_hat",
        "max_abs_xbar",
    ]);
    let mut summary = MetricTable::new(&[
        "N",
        "n",
        "m",
        "a_m",
        "truncation",
        "re_z",
        "im_z",
        "mean_diff_b_bbar",
        "mean_diff_bbar_bstar",
        "mean_trace_defect",
        "trace_bound_holds",
        "sup_bound_holds",
    ]);
    let mut trace_ok = true;
    let mut sup_ok = true;
    let mut defect_monotone = true;

    for &(rows, cols) in &cfg.sizes {
        let ens = EnsembleConfig::new(rows, cols)?;
        let mut prev_defect: Option<f64> = None;
        for params in &cfg.blocks {
            let scheme = match scheme_for(&cfg.spec, rows, params)
                .and_then(|s| check_projection_support(&cfg.spec, &s).map(|_| s))
            {
                Ok(s) => s,
                Err(e @ (Error::UnsupportedModel(_) | Error::Scheme(_))) => {
                    report.notices.push(format!(
                        "skipped N = {rows}, n = {cols}, m = {}: {e}",
                        params.m
                    ));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let out = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let seed = cfg.replicate_seed(r);
                    let traj = sample_trajectory(&cfg.spec, ens.entries(), seed)?;
                    let (x, gb) = build_bn(&traj, &ens)?;
                    let xbar = build_blocked_matrix(&traj, &scheme, &ens)?;
                    let xstar = resample_independent_blocks(&cfg.spec, &scheme, &ens, seed)?;
                    let gbar = xbar.gram();
                    let sb = stieltjes_all(&spectrum(&gb, cols, EnsembleKind::Bn)?, &zs)?;
                    let sbar = stieltjes_all(&spectrum(&gbar, cols, EnsembleKind::Blocked)?, &zs)?;
                    let sstar = stieltjes_all(&spectrum(&xstar.gram(), cols, EnsembleKind::BlockedStar)?, &zs)?;
                    let entries = ens.entries() as f64;
                    let defect = (&x.entries - &xbar.entries).norm_squared() / entries;
                    let trace_bbar = gbar.trace() / rows as f64;
                    let gamma0_hat = x.entries.norm_squared() / entries;
                    let max_abs = xbar.entries.amax().max(xstar.entries.amax());
                    Ok((sb, sbar, sstar, defect, trace_bbar, gamma0_hat, max_abs))
                })
                .collect::<Result<Vec<_>>>()?;

            let mut defects = Vec::new();
            let mut size_trace_ok = true;
            let mut size_sup_ok = true;
            for (_, _, _, defect, tr, g0, mx) in &out {
                defects.push(*defect);
                size_trace_ok &= tr.abs() <= 4.0 * g0;
                size_sup_ok &= *mx <= 2.0 * scheme.truncation;
            }
            trace_ok &= size_trace_ok;
            sup_ok &= size_sup_ok;
            let mean_defect = mean(&defects);
            if let Some(prev) = prev_defect {
                defect_monotone &= mean_defect <= prev;
            }
            prev_defect = Some(mean_defect);

            let head = [
                rows as f64,
                cols as f64,
                scheme.m as f64,
                scheme.a_m as f64,
                scheme.truncation,
            ];
            for (k, z) in zs.iter().enumerate() {
                let mut d1 = Vec::new();
                let mut d2 = Vec::new();
                for (r, (sb, sbar, sstar, defect, tr, g0, mx)) in out.iter().enumerate() {
                    let a = (sb[k] - sbar[k]).norm();
                    let b = (sbar[k] - sstar[k]).norm();
                    d1.push(a);
                    d2.push(b);
                    let mut row = head.to_vec();
                    row.extend([r as f64, z.re, z.im, a, b, *defect, *tr, *g0, *mx]);
                    reps.push(row);
                }
                let mut row = head.to_vec();
                row.extend([
                    z.re,
                    z.im,
                    mean(&d1),
                    mean(&d2),
                    mean_defect,
                    f64::from(u8::from(size_trace_ok)),
                    f64::from(u8::from(size_sup_ok)),
                ]);
                summary.push(row);
            }
        }
    }
    report.checks.insert("trace_bound_holds".into(), trace_ok);
    report.checks.insert("sup_bound_holds".into(), sup_ok);
    report.checks.insert("trace_defect_nonincreasing_along_ladder".into(), defect_monotone);
    report.tables.insert("replicates".into(), reps);
    report.tables.insert("summary".into(), summary);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match kind {
        ExperimentKind::LsdConvergence => run_lsd_convergence(cfg),
        ExperimentKind::Universality => run_universality(cfg),
        ExperimentKind::Concentration => run_concentration(cfg),
        ExperimentKind::ApproximationChain => run_approximation_chain(cfg),
    }
}
