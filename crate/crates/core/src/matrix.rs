//! Matrix ensembles built from stationary processes, plus the block /
//! truncation / independent-resampling approximations of the single-trajectory
//! Gram matrix.
//!
//! Indices follow the column-major filling of the data matrix: the flat index
//! `k = (i - 1) N + r` (1-based) is row `r` of column `i`, so a trajectory of
//! length `N n` fills the `N x n` matrix column by column.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{
    autocovariance_closed_form, sample_trajectory, sup_abs_value, AutocovarianceSeq, Observable,
    ProcessKind, ProcessSpec, Trajectory, DOUBLING_DIGITS,
};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::spectral::{eig_sym, empirical_stieltjes, EnsembleKind};

/// Dimensions of an `N x n` data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub rows: usize,
    pub cols: usize,
}

impl EnsembleConfig {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::parameter(format!(
                "ensembles need N >= 2 and n >= 2, got N = {rows}, n = {cols}"
            )));
        }
        Ok(EnsembleConfig { rows, cols })
    }

    /// `c = N / n`.
    pub fn aspect_ratio(&self) -> f64 {
        self.rows as f64 / self.cols as f64
    }

    pub fn entries(&self) -> usize {
        self.rows * self.cols
    }
}

/// Block parameters `(m, a_m, M)`; `truncation = None` means the default
/// `M = 10 sqrt(gamma_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockParams {
    pub m: usize,
    #[serde(default)]
    pub a_m: Option<usize>,
    #[serde(default)]
    pub truncation: Option<f64>,
}

impl BlockParams {
    /// `a_m` defaults to `m`, so `p = m^2`.
    pub fn multiplier(&self) -> usize {
        self.a_m.unwrap_or(self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: Option<ProcessSpec>,
    pub seed: Option<u64>,
    pub block: Option<BlockParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub entries: DMatrix<f64>,
    pub kind: EnsembleKind,
    pub provenance: Provenance,
}

impl DataMatrix {
    /// `(1/n) X X^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        gram(&self.entries)
    }

    /// Row-major CSV preceded by a `# N,n,kind` comment header.
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.entries, self.kind)
    }
}

pub fn matrix_csv(m: &DMatrix<f64>, kind: EnsembleKind) -> String {
    let mut out = format!("# N,n,kind\n# {},{},{}\n", m.nrows(), m.ncols(), kind.as_str());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `(1/n) X X^T` for an `N x n` matrix, exactly symmetric.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols().max(1) as f64;
    let mut g = x * x.transpose();
    g /= n;
    let dim = g.nrows();
    for j in 0..dim {
        for i in 0..j {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Single-trajectory Gram matrix: `X_n[(i, j)] = X_{(j-1)N + i}`.
pub fn build_bn(traj: &Trajectory, cfg: &EnsembleConfig) -> Result<(DataMatrix, DMatrix<f64>)> {
    let (mut data, g) = build_bn_from_values(&traj.values, cfg)?;
    data.provenance = Provenance {
        spec: Some(traj.spec.clone()),
        seed: Some(traj.seed),
        block: None,
    };
    Ok((data, g))
}

/// [`build_bn`] for a raw series, e.g. one read from disk.
pub fn build_bn_from_values(values: &[f64], cfg: &EnsembleConfig) -> Result<(DataMatrix, DMatrix<f64>)> {
    let needed = cfg.entries();
    if values.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: values.len(),
        });
    }
    if let Some(v) = values[..needed].iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("series contains a non-finite value {v}")));
    }
    let data = DataMatrix {
        entries: DMatrix::from_column_slice(cfg.rows, cfg.cols, &values[..needed]),
        kind: EnsembleKind::Bn,
        provenance: Provenance {
            spec: None,
            seed: None,
            block: None,
        },
    };
    let g = data.gram();
    Ok((data, g))
}

/// Sample covariance of `n` independent length-`N` trajectories.
pub fn build_an(spec: &ProcessSpec, cfg: &EnsembleConfig, seed: u64) -> Result<(DataMatrix, DMatrix<f64>)> {
    spec.validate()?;
    let column_seeds: Vec<u64> = (0..cfg.cols as u64)
        .map(|k| derive_seed(derive_seed(seed, stream::COLUMNS), k))
        .collect();
    let columns = column_seeds
        .par_iter()
        .map(|&s| sample_trajectory(spec, cfg.rows, s).map(|t| t.values))
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    let data = DataMatrix {
        entries: DMatrix::from_column_slice(cfg.rows, cfg.cols, &flat),
        kind: EnsembleKind::An,
        provenance: Provenance {
            spec: Some(spec.clone()),
            seed: Some(seed),
            block: None,
        },
    };
    let g = data.gram();
    Ok((data, g))
}

/// Lower Cholesky factor of the `N x N` Toeplitz matrix `(gamma_{|i-j|})`.
/// One retry with `1e-12 gamma_0` added to the diagonal absorbs rank-deficient
/// but PSD inputs.
pub fn toeplitz_cholesky(gamma: &AutocovarianceSeq, dim: usize) -> Result<DMatrix<f64>> {
    let g0 = gamma.gamma0();
    if !(g0 > 0.0) {
        return Err(Error::Covariance(format!("gamma_0 must be positive, got {g0}")));
    }
    let toeplitz = DMatrix::from_fn(dim, dim, |i, j| gamma.at(i.abs_diff(j)));
    if let Some(ch) = Cholesky::new(toeplitz.clone()) {
        return Ok(ch.l());
    }
    let delta = 1e-12 * g0;
    log::debug!("Toeplitz covariance not numerically PD; regularizing with {delta:e} I");
    let regularized = toeplitz + DMatrix::identity(dim, dim) * delta;
    Cholesky::new(regularized)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Covariance("Toeplitz covariance is not positive semi-definite".into()))
}

/// Gaussian ensemble with the same covariance structure: columns `Z_i = L W_i`.
pub fn build_gn(gamma: &AutocovarianceSeq, cfg: &EnsembleConfig, seed: u64) -> Result<(DataMatrix, DMatrix<f64>)> {
    let l = toeplitz_cholesky(gamma, cfg.rows)?;
    let mut rng = rng_from_seed(seed);
    let w = DMatrix::from_fn(cfg.rows, cfg.cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = DataMatrix {
        entries: l * w,
        kind: EnsembleKind::Gn,
        provenance: Provenance {
            spec: None,
            seed: Some(seed),
            block: None,
        },
    };
    let g = data.gram();
    Ok((data, g))
}

/// Partition of every column into active blocks `I` of length `p = a_m m`
/// separated by gaps `J` of length `3m`, with a trailing gap absorbing the
/// remainder: `k_N = floor(N / (p + 3m))` active blocks per column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub rows: usize,
    pub m: usize,
    pub a_m: usize,
    pub p: usize,
    pub k_n: usize,
    /// Truncation level `M` of `phi_M(x) = (x ^ M) v (-M)`.
    pub truncation: f64,
}

impl BlockScheme {
    pub fn new(rows: usize, m: usize, a_m: usize) -> Result<Self> {
        if m == 0 || a_m == 0 {
            return Err(Error::Scheme(format!("need m >= 1 and a_m >= 1, got m = {m}, a_m = {a_m}")));
        }
        let p = a_m * m;
        let period = p + 3 * m;
        if period > rows {
            return Err(Error::Scheme(format!(
                "p + 3m = {period} exceeds the column length N = {rows}"
            )));
        }
        if (m as f64) > (rows as f64).sqrt() / 2.0 {
            log::warn!("block half-window m = {m} exceeds sqrt(N)/2 for N = {rows}");
        }
        Ok(BlockScheme {
            rows,
            m,
            a_m,
            p,
            k_n: rows / period,
            truncation: f64::INFINITY,
        })
    }

    pub fn with_truncation(mut self, truncation: f64) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn period(&self) -> usize {
        self.p + 3 * self.m
    }

    /// `I^i_l` as a 0-based flat range, for 0-based column `col` and block `l < k_N`.
    pub fn active(&self, col: usize, l: usize) -> Range<usize> {
        let start = col * self.rows + l * self.period();
        start..start + self.p
    }

    /// `J^i_l` for `l < k_N`, and the trailing (possibly empty) gap for `l = k_N`.
    pub fn gap(&self, col: usize, l: usize) -> Range<usize> {
        let base = col * self.rows;
        if l < self.k_n {
            let start = base + l * self.period() + self.p;
            start..start + 3 * self.m
        } else {
            base + self.k_n * self.period()..base + self.rows
        }
    }

    /// All `I` and `J` ranges of `cols` columns, in index order.
    pub fn partition(&self, cols: usize) -> Vec<(bool, Range<usize>)> {
        let mut out = Vec::with_capacity(cols * (2 * self.k_n + 1));
        for col in 0..cols {
            for l in 0..self.k_n {
                out.push((true, self.active(col, l)));
                out.push((false, self.gap(col, l)));
            }
            out.push((false, self.gap(col, self.k_n)));
        }
        out
    }

    /// Innovation window of an active block starting at 1-based time `t0`:
    /// `t0 - m ..= t0 + p - 1 + m`.
    fn innovation_window(&self, t0: i64) -> (i64, i64) {
        (t0 - self.m as i64, t0 + self.p as i64 - 1 + self.m as i64)
    }
}

/// `10 sqrt(gamma_0)` from the closed-form autocovariance.
pub fn default_truncation(spec: &ProcessSpec) -> Result<f64> {
    let g = autocovariance_closed_form(spec, 0)?;
    Ok(10.0 * g.gamma0().sqrt())
}

/// Resolves `M` for a parameter set: explicit value, else the default.
pub fn scheme_for(spec: &ProcessSpec, rows: usize, params: &BlockParams) -> Result<BlockScheme> {
    let truncation = match params.truncation {
        Some(m) => m,
        None => default_truncation(spec)?,
    };
    if !(truncation > 0.0) {
        return Err(Error::parameter(format!("truncation level must be positive, got {truncation}")));
    }
    Ok(BlockScheme::new(rows, params.m, params.multiplier())?.with_truncation(truncation))
}

/// Whether `E(phi_M(X_k) | B)` has an exact closed form for this model.
pub fn check_projection_support(spec: &ProcessSpec, scheme: &BlockScheme) -> Result<()> {
    spec.validate()?;
    match spec.kind {
        ProcessKind::HarrisChain | ProcessKind::IidBaseline => Ok(()),
        ProcessKind::NoncausalWindow => {
            let half = spec.window_half_width();
            let sup = sup_abs_value(spec).unwrap_or(f64::INFINITY);
            if half <= scheme.m || scheme.truncation >= sup {
                Ok(())
            } else {
                Err(Error::unsupported(format!(
                    "window half-width {half} exceeds m = {} and M = {} < sup|X| = {sup}; \
                     the projection would need nested Monte Carlo",
                    scheme.m, scheme.truncation
                )))
            }
        }
        ProcessKind::DoublingMap => {
            if spec.observable == Observable::CenteredIdentity && scheme.truncation >= 0.5 {
                Ok(())
            } else {
                Err(Error::unsupported(
                    "doubling-map projections need h(x) = x - 1/2 and M >= 1/2",
                ))
            }
        }
    }
}

/// `E(X_tilde_{k,m,M})`. Every supported projection is an odd function of
/// sign-symmetric innovations, so the centering constant vanishes.
pub fn centering_constant(spec: &ProcessSpec, scheme: &BlockScheme) -> Result<f64> {
    check_projection_support(spec, scheme)?;
    Ok(0.0)
}

/// Monte Carlo estimate of the centering constant from `samples` independent
/// blocks, for cross-checking [`centering_constant`].
pub fn monte_carlo_centering(spec: &ProcessSpec, scheme: &BlockScheme, samples: usize, seed: u64) -> Result<f64> {
    check_projection_support(spec, scheme)?;
    let per_block = (0..samples as u64)
        .into_par_iter()
        .map(|b| {
            let (traj, t0) = fresh_block(spec, scheme, derive_seed(seed, b))?;
            let block = project_block(&traj, scheme, t0, 0.0);
            Ok(block.iter().sum::<f64>() / block.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_block.iter().sum::<f64>() / samples.max(1) as f64)
}

fn clip(x: f64, m: f64) -> f64 {
    x.clamp(-m, m)
}

/// `h_k(B)` for the `p` indices of the active block starting at 1-based time
/// `t0`, reading only innovations inside the block window.
fn project_block(traj: &Trajectory, scheme: &BlockScheme, t0: i64, centering: f64) -> Vec<f64> {
    let spec = &traj.spec;
    let (_, hi) = scheme.innovation_window(t0);
    let lo = t0 - scheme.m as i64;
    (0..scheme.p as i64)
        .map(|offset| {
            let k = t0 + offset;
            let value = traj.values[(k - 1) as usize];
            let projected = match spec.kind {
                ProcessKind::HarrisChain | ProcessKind::IidBaseline => clip(value, scheme.truncation),
                ProcessKind::NoncausalWindow => {
                    let half = spec.window_half_width() as i64;
                    if half <= scheme.m as i64 {
                        clip(value, scheme.truncation)
                    } else {
                        // M >= sup|X|: the projection is the window sum over
                        // innovations inside the block; outside terms are centered.
                        spec.window_coeffs
                            .iter()
                            .enumerate()
                            .filter_map(|(idx, c)| {
                                let t = k + idx as i64 - half;
                                (lo..=hi)
                                    .contains(&t)
                                    .then(|| c * spec.observable.apply(traj.innovation(t)))
                            })
                            .sum()
                    }
                }
                ProcessKind::DoublingMap => {
                    // Known digits b_{k+1} ..= b_{hi}; the unknown tail averages to 1/2.
                    let known = (hi - k) as usize;
                    if known >= DOUBLING_DIGITS {
                        value
                    } else {
                        let mut x = 0.0;
                        let mut w = 0.5;
                        for d in 1..=known as i64 {
                            x += w * traj.innovation(k + d);
                            w *= 0.5;
                        }
                        x + w - 0.5
                    }
                }
            };
            projected - centering
        })
        .collect()
}

/// Centered, truncated block projections of a single trajectory; zero on gaps.
pub fn build_blocked_matrix(traj: &Trajectory, scheme: &BlockScheme, cfg: &EnsembleConfig) -> Result<DataMatrix> {
    if scheme.rows != cfg.rows {
        return Err(Error::Scheme(format!(
            "scheme built for N = {} used with N = {}",
            scheme.rows, cfg.rows
        )));
    }
    if traj.len() < cfg.entries() {
        return Err(Error::InsufficientData {
            needed: cfg.entries(),
            got: traj.len(),
        });
    }
    let centering = centering_constant(&traj.spec, scheme)?;
    let mut entries = DMatrix::zeros(cfg.rows, cfg.cols);
    for col in 0..cfg.cols {
        for l in 0..scheme.k_n {
            let range = scheme.active(col, l);
            let block = project_block(traj, scheme, range.start as i64 + 1, centering);
            let row0 = l * scheme.period();
            for (r, v) in block.into_iter().enumerate() {
                entries[(row0 + r, col)] = v;
            }
        }
    }
    Ok(DataMatrix {
        entries,
        kind: EnsembleKind::Blocked,
        provenance: Provenance {
            spec: Some(traj.spec.clone()),
            seed: Some(traj.seed),
            block: Some(BlockParams {
                m: scheme.m,
                a_m: Some(scheme.a_m),
                truncation: Some(scheme.truncation),
            }),
        },
    })
}

/// A fresh stationary segment long enough to hold one block window, and the
/// 1-based time of its first active index.
fn fresh_block(spec: &ProcessSpec, scheme: &BlockScheme, seed: u64) -> Result<(Trajectory, i64)> {
    let len = scheme.p + 2 * scheme.m;
    Ok((sample_trajectory(spec, len, seed)?, scheme.m as i64 + 1))
}

/// Same construction as [`build_blocked_matrix`], but every block window is an
/// independent draw from the stationary block law, so distinct blocks are
/// independent by construction.
pub fn resample_independent_blocks(
    spec: &ProcessSpec,
    scheme: &BlockScheme,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<DataMatrix> {
    if scheme.rows != cfg.rows {
        return Err(Error::Scheme(format!(
            "scheme built for N = {} used with N = {}",
            scheme.rows, cfg.rows
        )));
    }
    let centering = centering_constant(spec, scheme)?;
    let block_seed = derive_seed(seed, stream::BLOCKS);
    let columns = (0..cfg.cols)
        .into_par_iter()
        .map(|col| {
            let mut column = vec![0.0; cfg.rows];
            for l in 0..scheme.k_n {
                let index = (col * scheme.k_n + l) as u64;
                let (traj, t0) = fresh_block(spec, scheme, derive_seed(block_seed, index))?;
                let block = project_block(&traj, scheme, t0, centering);
                let row0 = l * scheme.period();
                column[row0..row0 + scheme.p].copy_from_slice(&block);
            }
            Ok(column)
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(DataMatrix {
        entries: DMatrix::from_column_slice(cfg.rows, cfg.cols, &flat),
        kind: EnsembleKind::BlockedStar,
        provenance: Provenance {
            spec: Some(spec.clone()),
            seed: Some(seed),
            block: Some(BlockParams {
                m: scheme.m,
                a_m: Some(scheme.a_m),
                truncation: Some(scheme.truncation),
            }),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl PerturbationBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// Both sides of
/// `|S_{AA^T/n}(z) - S_{BB^T/n}(z)| <= sqrt2 / (N v^2) |Tr(AA^T/n + BB^T/n)|^{1/2} |Tr((A-B)(A-B)^T)/n|^{1/2}`.
pub fn stieltjes_perturbation_bound(a: &DMatrix<f64>, b: &DMatrix<f64>, z: Complex64) -> Result<PerturbationBound> {
    if !(z.im > 0.0) {
        return Err(Error::domain(format!("need Im z > 0, got {z}")));
    }
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (rows, cols) = a.shape();
    let n = cols as f64;
    let sa = empirical_stieltjes(&eig_sym(&gram(a))?, z)?;
    let sb = empirical_stieltjes(&eig_sym(&gram(b))?, z)?;
    let lhs = (sa - sb).norm();
    let trace_sum = (a.norm_squared() + b.norm_squared()) / n;
    let trace_diff = (a - b).norm_squared() / n;
    let rhs = std::f64::consts::SQRT_2 / (rows as f64 * z.im * z.im) * trace_sum.abs().sqrt() * trace_diff.abs().sqrt();
    Ok(PerturbationBound { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::AutocovSource;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn raw_series_builder() {
        let cfg = EnsembleConfig::new(2, 2).unwrap();
        let (data, g) = build_bn_from_values(&[1.0; 4], &cfg).unwrap();
        assert_eq!(g, dmatrix![1.0, 1.0; 1.0, 1.0]);
        assert!(data.provenance.spec.is_none());
        assert!(matches!(
            build_bn_from_values(&[1.0; 3], &cfg),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
        assert!(build_bn_from_values(&[1.0, f64::NAN, 1.0, 1.0], &cfg).is_err());
    }

    fn constant_trajectory(len: usize, value: f64) -> Trajectory {
        Trajectory {
            values: vec![value; len],
            innovations: vec![value; len],
            margin: 0,
            seed: 0,
            spec: ProcessSpec::iid(1.0),
        }
    }

    #[test]
    fn ensemble_config_bounds() {
        assert!(EnsembleConfig::new(1, 5).is_err());
        assert!(EnsembleConfig::new(5, 1).is_err());
        let cfg = EnsembleConfig::new(3, 4).unwrap();
        assert_eq!(cfg.aspect_ratio(), 0.75);
    }

    #[test]
    fn all_ones_bn() {
        let cfg = EnsembleConfig::new(2, 2).unwrap();
        let (_, b) = build_bn(&constant_trajectory(4, 1.0), &cfg).unwrap();
        assert_eq!(b, dmatrix![1.0, 1.0; 1.0, 1.0]);
    }

    #[test]
    fn bn_fills_columns_from_consecutive_values() {
        let mut t = constant_trajectory(6, 0.0);
        t.values = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let cfg = EnsembleConfig::new(3, 2).unwrap();
        let (x, _) = build_bn(&t, &cfg).unwrap();
        assert_eq!(x.entries[(0, 1)], 4.0);
        assert_eq!(x.entries[(2, 0)], 3.0);
    }

    #[test]
    fn bn_needs_enough_data() {
        let cfg = EnsembleConfig::new(3, 3).unwrap();
        assert!(matches!(
            build_bn(&constant_trajectory(8, 1.0), &cfg),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rank_one_gram() {
        let mut x = DMatrix::zeros(4, 1);
        x[(0, 0)] = 1.0;
        let g = gram(&x);
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn cholesky_two_by_two() {
        let gamma = AutocovarianceSeq::new(vec![1.0, 0.5], AutocovSource::ClosedForm, true);
        let l = toeplitz_cholesky(&gamma, 2).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 0.75f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn singular_toeplitz_is_regularized() {
        // gamma_k = cos(k w) gives a rank-2 PSD Toeplitz matrix.
        let w = 0.7f64;
        let gamma = AutocovarianceSeq::new(
            (0..10).map(|k| (k as f64 * w).cos()).collect(),
            AutocovSource::ClosedForm,
            true,
        );
        let l = toeplitz_cholesky(&gamma, 10).unwrap();
        let back = &l * l.transpose();
        for i in 0..10 {
            for j in 0..10 {
                assert_abs_diff_eq!(back[(i, j)], gamma.at(i.abs_diff(j)), epsilon = 1e-9);
            }
        }
        let indefinite = AutocovarianceSeq::new(vec![1.0, -2.0], AutocovSource::ClosedForm, true);
        assert!(matches!(toeplitz_cholesky(&indefinite, 2), Err(Error::Covariance(_))));
    }

    #[test]
    fn white_gaussian_sample_covariance() {
        let gamma = AutocovarianceSeq::new(vec![1.0, 0.0, 0.0], AutocovSource::ClosedForm, true);
        let n = 10_000;
        let cfg = EnsembleConfig::new(20, n).unwrap();
        let (_, g) = build_gn(&gamma, &cfg, 5).unwrap();
        let tol = 5.0 / (n as f64).sqrt();
        for i in 0..20 {
            for j in 0..20 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - target).abs() < tol, "({i},{j}) = {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn block_scheme_indices() {
        let s = BlockScheme::new(100, 2, 5).unwrap();
        assert_eq!(s.p, 10);
        assert_eq!(s.k_n, 6);
        assert_eq!(s.active(0, 0), 0..10);
        assert_eq!(s.gap(0, 0), 10..16);
        assert_eq!(s.gap(0, 6), 96..100);
        assert!(s.p * s.k_n <= 100);
    }

    #[test]
    fn block_scheme_exact_fit_has_empty_tail() {
        let s = BlockScheme::new(96, 2, 5).unwrap();
        assert_eq!(s.k_n, 6);
        assert!(s.gap(3, s.k_n).is_empty());
    }

    #[test]
    fn block_scheme_rejects_oversized_period() {
        assert!(matches!(BlockScheme::new(10, 2, 5), Err(Error::Scheme(_))));
        assert!(BlockScheme::new(10, 0, 5).is_err());
    }

    #[test]
    fn blocked_entries_vanish_on_gaps_and_are_bounded() {
        let spec = ProcessSpec::harris(1.0);
        let cfg = EnsembleConfig::new(60, 8).unwrap();
        let traj = sample_trajectory(&spec, cfg.entries(), 3).unwrap();
        let scheme = BlockScheme::new(60, 2, 3).unwrap().with_truncation(0.4);
        let x = build_blocked_matrix(&traj, &scheme, &cfg).unwrap();
        let flat = x.entries.as_slice();
        for (active, range) in scheme.partition(cfg.cols) {
            for k in range {
                if active {
                    assert!(flat[k].abs() <= 0.4 + 1e-15);
                    assert_eq!(flat[k], traj.values[k].clamp(-0.4, 0.4));
                } else {
                    assert_eq!(flat[k], 0.0);
                }
            }
        }
        assert!(x.entries.amax() <= 2.0 * scheme.truncation);
    }

    #[test]
    fn doubling_projection_averages_unknown_digits() {
        let spec = ProcessSpec::doubling_map();
        let cfg = EnsembleConfig::new(40, 3).unwrap();
        let traj = sample_trajectory(&spec, cfg.entries(), 8).unwrap();
        let scheme = BlockScheme::new(40, 2, 2).unwrap().with_truncation(1.0);
        let x = build_blocked_matrix(&traj, &scheme, &cfg).unwrap();
        // Last active index of the first block: 1-based k = 4, window ends at 6,
        // so digits b_5, b_6 are known.
        let k = 4i64;
        let expect = 0.5 * traj.innovation(k + 1) + 0.25 * traj.innovation(k + 2) + 0.125 - 0.5;
        assert_abs_diff_eq!(x.entries[(3, 0)], expect, epsilon = 1e-15);
        assert!((x.entries[(3, 0)] - traj.values[3]).abs() <= 0.125 + 1e-12);
    }

    #[test]
    fn unsupported_projections_rejected() {
        let spec = ProcessSpec::noncausal(vec![0.2, 0.2, 0.2, 1.0, 0.2, 0.2, 0.2]);
        let cfg = EnsembleConfig::new(40, 2).unwrap();
        let traj = sample_trajectory(&spec, cfg.entries(), 1).unwrap();
        let scheme = BlockScheme::new(40, 1, 2).unwrap().with_truncation(0.5);
        assert!(matches!(
            build_blocked_matrix(&traj, &scheme, &cfg),
            Err(Error::UnsupportedModel(_))
        ));
        let dm = ProcessSpec::doubling_map().with_observable(Observable::SignedSqrt);
        assert!(matches!(
            resample_independent_blocks(&dm, &scheme, &cfg, 1),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn centering_constant_agrees_with_monte_carlo() {
        for spec in [
            ProcessSpec::harris(1.0),
            ProcessSpec::noncausal(vec![0.5, 1.0, 0.3]),
            ProcessSpec::doubling_map(),
        ] {
            let scheme = BlockScheme::new(40, 2, 2).unwrap().with_truncation(0.6);
            let exact = centering_constant(&spec, &scheme).unwrap();
            let mc = monte_carlo_centering(&spec, &scheme, 20_000, 4).unwrap();
            assert!((mc - exact).abs() < 0.01, "{:?}: {mc}", spec.kind);
        }
    }

    #[test]
    fn perturbation_bound_trivial_cases() {
        let a = DMatrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64).sin());
        let same = stieltjes_perturbation_bound(&a, &a, Complex64::i()).unwrap();
        assert_eq!(same.lhs, 0.0);
        assert_eq!(same.rhs, 0.0);

        let zero = DMatrix::zeros(5, 7);
        let z = Complex64::new(0.3, 0.8);
        let bound = stieltjes_perturbation_bound(&a, &zero, z).unwrap();
        let sa = empirical_stieltjes(&eig_sym(&gram(&a)).unwrap(), z).unwrap();
        assert_abs_diff_eq!(bound.lhs, (sa + z.inv()).norm(), epsilon = 1e-12);
        assert!(bound.holds(1e-10));

        assert!(stieltjes_perturbation_bound(&a, &a, Complex64::new(1.0, 0.0)).is_err());
        assert!(stieltjes_perturbation_bound(&a, &DMatrix::zeros(5, 6), Complex64::i()).is_err());
    }

    #[test]
    fn matrix_csv_header() {
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let csv = matrix_csv(&m, EnsembleKind::Bn);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec!["# N,n,kind", "# 2,2,bn", "1,2", "3,4"]);
    }
}
