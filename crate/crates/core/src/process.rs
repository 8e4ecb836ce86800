//! Stationary processes `X_k = g(..., e_{k-1}, e_k, e_{k+1}, ...)` driven by
//! beta-mixing innovations, together with their exact autocovariances and the
//! decay class of their mixing coefficients.
//!
//! Four models are available:
//!
//! * `harris_chain`: the symmetrized sticky chain on `[-1, 1]` with kernel
//!   `K(x, .) = (1 - |x|) delta_x + |x| nu`, where `nu` has density
//!   `((a + 1) / 2) |x|^a`. The observable is applied to the current state.
//! * `doubling_map`: orbits of `T(x) = 2x mod 1`, represented by a sliding window
//!   of 64 i.i.d. fair binary digits, observed through `h(x) = x - 1/2`.
//! * `noncausal_window`: `X_k = sum_{|j| <= J} c_j g(e_{k+j})` with i.i.d.
//!   innovations uniform on `[-sqrt 3, sqrt 3]` (unit variance, bounded).
//! * `iid_baseline`: `X_k = sigma * g(e_k)` with standard Gaussian `e_k`.

use std::f64::consts::FRAC_2_PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Digits kept in the doubling-map window.
pub const DOUBLING_DIGITS: usize = 64;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    HarrisChain,
    DoublingMap,
    NoncausalWindow,
    IidBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `g(x) = sign(x) |x|^{1/2}`
    SignedSqrt,
    /// `g(x) = x` (centered by symmetry of the innovation law)
    CenteredIdentity,
}

impl Observable {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Observable::SignedSqrt => x.signum() * x.abs().sqrt(),
            Observable::CenteredIdentity => x,
        }
    }
}

/// Declarative description of a stationary process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawProcessSpec")]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    /// Exponent of the `nu` density for the Harris chain.
    pub a: f64,
    /// `c_{-J}, ..., c_J`; odd length.
    pub window_coeffs: Vec<f64>,
    pub observable: Observable,
    /// Scale of the i.i.d. baseline.
    pub sigma2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcessSpec {
    kind: ProcessKind,
    #[serde(default)]
    a: Option<f64>,
    #[serde(default)]
    window_coeffs: Vec<f64>,
    #[serde(default)]
    observable: Option<Observable>,
    #[serde(default)]
    sigma2: Option<f64>,
}

impl From<RawProcessSpec> for ProcessSpec {
    fn from(raw: RawProcessSpec) -> Self {
        let default_observable = match raw.kind {
            ProcessKind::HarrisChain => Observable::SignedSqrt,
            _ => Observable::CenteredIdentity,
        };
        ProcessSpec {
            kind: raw.kind,
            a: raw.a.unwrap_or(1.0),
            window_coeffs: raw.window_coeffs,
            observable: raw.observable.unwrap_or(default_observable),
            sigma2: raw.sigma2.unwrap_or(1.0),
        }
    }
}

impl ProcessSpec {
    pub fn harris(a: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::HarrisChain,
            a,
            window_coeffs: Vec::new(),
            observable: Observable::SignedSqrt,
            sigma2: 1.0,
        }
    }

    pub fn doubling_map() -> Self {
        ProcessSpec {
            kind: ProcessKind::DoublingMap,
            a: 1.0,
            window_coeffs: Vec::new(),
            observable: Observable::CenteredIdentity,
            sigma2: 1.0,
        }
    }

    pub fn noncausal(window_coeffs: Vec<f64>) -> Self {
        ProcessSpec {
            kind: ProcessKind::NoncausalWindow,
            a: 1.0,
            window_coeffs,
            observable: Observable::CenteredIdentity,
            sigma2: 1.0,
        }
    }

    pub fn iid(sigma2: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::IidBaseline,
            a: 1.0,
            window_coeffs: Vec::new(),
            observable: Observable::CenteredIdentity,
            sigma2,
        }
    }

    pub fn with_observable(mut self, observable: Observable) -> Self {
        self.observable = observable;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProcessKind::HarrisChain => {
                if !(self.a.is_finite() && self.a > 0.0) {
                    return Err(Error::parameter(format!(
                        "harris_chain requires a > 0, got {}",
                        self.a
                    )));
                }
            }
            ProcessKind::NoncausalWindow => {
                let len = self.window_coeffs.len();
                if len == 0 || len.is_multiple_of(2) {
                    return Err(Error::parameter(format!(
                        "noncausal_window needs 2J+1 coefficients, got {len}"
                    )));
                }
                if self.window_coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::parameter("window coefficients must be finite"));
                }
                if self.window_coeffs.iter().all(|&c| c == 0.0) {
                    return Err(Error::parameter(
                        "noncausal_window with all-zero coefficients is the degenerate zero process",
                    ));
                }
            }
            ProcessKind::IidBaseline => {
                if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
                    return Err(Error::parameter(format!(
                        "iid_baseline requires sigma2 > 0, got {}",
                        self.sigma2
                    )));
                }
            }
            ProcessKind::DoublingMap => {}
        }
        Ok(())
    }

    /// Half-width `J` of a noncausal window, 0 for every other model.
    pub fn window_half_width(&self) -> usize {
        match self.kind {
            ProcessKind::NoncausalWindow => self.window_coeffs.len() / 2,
            _ => 0,
        }
    }

    /// Innovation margin kept on each side of a trajectory.
    pub fn innovation_margin(&self) -> usize {
        match self.kind {
            ProcessKind::NoncausalWindow => self.window_half_width(),
            ProcessKind::DoublingMap => DOUBLING_DIGITS,
            ProcessKind::HarrisChain | ProcessKind::IidBaseline => 0,
        }
    }

    /// `X_k` depends on `e_k` alone.
    pub fn is_instantaneous(&self) -> bool {
        matches!(
            self.kind,
            ProcessKind::HarrisChain | ProcessKind::IidBaseline
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("process spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ProcessSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A realized sample `X_1..X_L` with the innovations that generated it.
///
/// Innovations are stored for indices `1 - margin ..= L + margin`; for the
/// doubling map they are the binary digits (as 0.0 / 1.0), for the Harris chain
/// the chain states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub innovations: Vec<f64>,
    pub margin: usize,
    pub seed: u64,
    pub spec: ProcessSpec,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Innovation `e_t` for the 1-based time index `t`.
    pub fn innovation(&self, t: i64) -> f64 {
        let offset = t - 1 + self.margin as i64;
        self.innovations[usize::try_from(offset).expect("innovation index within margin")]
    }

    /// Packed digit window `b_{k+1} .. b_{k+64}` (most significant first) that
    /// represents the doubling-map state `x_k`.
    pub fn doubling_word(&self, k: usize) -> Option<u64> {
        if self.spec.kind != ProcessKind::DoublingMap || k == 0 || k > self.len() {
            return None;
        }
        let mut word = 0u64;
        for d in 1..=DOUBLING_DIGITS {
            let bit = self.innovation((k + d) as i64) as u64;
            word = (word << 1) | bit;
        }
        Some(word)
    }

    /// Single-column CSV with header `x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20 + 2);
        out.push_str("x\n");
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// One application of the doubling map on the packed digit window: drop the
/// leading digit. The trailing digit of the next state is the next innovation.
pub fn doubling_step(word: u64) -> u64 {
    word << 1
}

/// Point of `[0, 1)` encoded by a digit window, truncated to `f64` precision.
pub fn doubling_point(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn doubling_observable(observable: Observable, word: u64) -> f64 {
    observable.apply(doubling_point(word) - 0.5)
}

pub fn sample_trajectory(spec: &ProcessSpec, len: usize, seed: u64) -> Result<Trajectory> {
    spec.validate()?;
    if len == 0 {
        return Err(Error::domain("trajectory length must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let (values, innovations) = match spec.kind {
        ProcessKind::HarrisChain => sample_harris(spec, len, &mut rng),
        ProcessKind::DoublingMap => sample_doubling(spec, len, &mut rng),
        ProcessKind::NoncausalWindow => sample_noncausal(spec, len, &mut rng),
        ProcessKind::IidBaseline => sample_iid(spec, len, &mut rng),
    };
    Ok(Trajectory {
        values,
        innovations,
        margin: spec.innovation_margin(),
        seed,
        spec: spec.clone(),
    })
}

fn random_sign(rng: &mut Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draw from the invariant law `pi(dx) = (a/2)|x|^{a-1} dx`.
pub(crate) fn harris_stationary_draw(a: f64, rng: &mut Rng) -> f64 {
    let u: f64 = rng.random();
    random_sign(rng) * u.powf(1.0 / a)
}

fn sample_harris(spec: &ProcessSpec, len: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let a = spec.a;
    let mut states = Vec::with_capacity(len);
    let mut x = harris_stationary_draw(a, rng);
    states.push(x);
    for _ in 1..len {
        let u: f64 = rng.random();
        if u >= 1.0 - x.abs() {
            let r: f64 = rng.random();
            x = random_sign(rng) * r.powf(1.0 / (a + 1.0));
        }
        states.push(x);
    }
    let values = states.iter().map(|&e| spec.observable.apply(e)).collect();
    (values, states)
}

fn sample_doubling(spec: &ProcessSpec, len: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let margin = DOUBLING_DIGITS;
    let digits: Vec<f64> = (0..len + 2 * margin)
        .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
        .collect();
    // b_t sits at index t - 1 + margin; x_1 reads b_2 ..= b_65.
    let bit = |t: usize| digits[t - 1 + margin] as u64;
    let mut word = 0u64;
    for t in 2..=DOUBLING_DIGITS + 1 {
        word = (word << 1) | bit(t);
    }
    let mut values = Vec::with_capacity(len);
    values.push(doubling_observable(spec.observable, word));
    for k in 2..=len {
        word = doubling_step(word) | bit(k + DOUBLING_DIGITS);
        values.push(doubling_observable(spec.observable, word));
    }
    (values, digits)
}

fn sample_noncausal(spec: &ProcessSpec, len: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let half = spec.window_half_width();
    let eps: Vec<f64> = (0..len + 2 * half)
        .map(|_| SQRT_3 * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let transformed: Vec<f64> = eps.iter().map(|&e| spec.observable.apply(e)).collect();
    // X_k = sum_j c_j g(e_{k+j}); e_{k+j} sits at index k + j - 1 + half.
    let values = (0..len)
        .map(|k0| {
            spec.window_coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| c * transformed[k0 + idx])
                .sum()
        })
        .collect();
    (values, eps)
}

fn sample_iid(spec: &ProcessSpec, len: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let scale = spec.sigma2.sqrt();
    let eps: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let values = eps
        .iter()
        .map(|&e| scale * spec.observable.apply(e))
        .collect();
    (values, eps)
}

/// `sup |X_k|` when it is finite.
pub fn sup_abs_value(spec: &ProcessSpec) -> Option<f64> {
    match spec.kind {
        ProcessKind::HarrisChain => Some(1.0),
        ProcessKind::DoublingMap => Some(spec.observable.apply(0.5)),
        ProcessKind::NoncausalWindow => {
            let bound = spec.observable.apply(SQRT_3);
            Some(spec.window_coeffs.iter().map(|c| c.abs()).sum::<f64>() * bound)
        }
        ProcessKind::IidBaseline => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutocovSource {
    ClosedForm,
    MonteCarlo,
    /// Given directly by the caller.
    Supplied,
}

/// `gamma_0 .. gamma_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovarianceSeq {
    pub gamma: Vec<f64>,
    pub source: AutocovSource,
    /// Absolute summability asserted by the model class.
    pub summable: bool,
}

impl AutocovarianceSeq {
    pub fn new(gamma: Vec<f64>, source: AutocovSource, summable: bool) -> Self {
        AutocovarianceSeq {
            gamma,
            source,
            summable,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.gamma.len().saturating_sub(1)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma.first().copied().unwrap_or(0.0)
    }

    /// `gamma_k`, zero beyond the stored lags.
    pub fn at(&self, k: usize) -> f64 {
        self.gamma.get(k).copied().unwrap_or(0.0)
    }

    /// Attempted Cholesky of the `(K+1) x (K+1)` Toeplitz matrix; pivots may
    /// dip to `-tol * gamma_0` before the matrix is declared indefinite.
    pub fn toeplitz_is_psd(&self, tol: f64) -> bool {
        let n = self.gamma.len();
        if n == 0 {
            return false;
        }
        let g0 = self.gamma0().abs().max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.gamma[i - j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s < -tol * g0 {
                        return false;
                    }
                    l[i * n + i] = s.max(0.0).sqrt();
                } else {
                    let d = l[j * n + j];
                    l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
                }
            }
        }
        true
    }

    /// Checks `gamma_0 > 0`, `|gamma_k| <= gamma_0` and the Toeplitz PSD property.
    pub fn validate(&self) -> Result<()> {
        let g0 = self.gamma0();
        if !(g0 > 0.0) {
            return Err(Error::Covariance(format!("gamma_0 must be positive, got {g0}")));
        }
        if let Some((k, g)) = self
            .gamma
            .iter()
            .enumerate()
            .find(|(_, g)| g.abs() > g0 * (1.0 + 1e-12))
        {
            return Err(Error::Covariance(format!(
                "|gamma_{k}| = {} exceeds gamma_0 = {g0}",
                g.abs()
            )));
        }
        if !self.toeplitz_is_psd(1e-10) {
            return Err(Error::Covariance(
                "Toeplitz autocovariance matrix is not positive semi-definite".into(),
            ));
        }
        Ok(())
    }
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

/// Exact autocovariances of the models with known analytics.
pub fn autocovariance_closed_form(spec: &ProcessSpec, max_lag: usize) -> Result<AutocovarianceSeq> {
    spec.validate()?;
    let gamma: Vec<f64> = match (spec.kind, spec.observable) {
        // gamma_k = int g(x)^2 (1-|x|)^k pi(dx) = a B(a + 1 + [identity], k + 1)
        (ProcessKind::HarrisChain, obs) => {
            let a = spec.a;
            let shift = match obs {
                Observable::SignedSqrt => 1.0,
                Observable::CenteredIdentity => 2.0,
            };
            (0..=max_lag)
                .map(|k| a * ln_beta(a + shift, k as f64 + 1.0).exp())
                .collect()
        }
        (ProcessKind::DoublingMap, Observable::CenteredIdentity) => (0..=max_lag)
            .map(|k| 2f64.powi(-(k as i32)) / 12.0)
            .collect(),
        (ProcessKind::DoublingMap, Observable::SignedSqrt) => {
            return Err(Error::unsupported(
                "doubling_map autocovariances are only known for h(x) = x - 1/2",
            ))
        }
        (ProcessKind::IidBaseline, obs) => {
            let var = match obs {
                Observable::CenteredIdentity => 1.0,
                Observable::SignedSqrt => FRAC_2_PI.sqrt(),
            };
            let mut g = vec![0.0; max_lag + 1];
            g[0] = spec.sigma2 * var;
            g
        }
        (ProcessKind::NoncausalWindow, obs) => {
            // Var g(e) for e uniform on [-sqrt 3, sqrt 3].
            let var = match obs {
                Observable::CenteredIdentity => 1.0,
                Observable::SignedSqrt => SQRT_3 / 2.0,
            };
            let c = &spec.window_coeffs;
            (0..=max_lag)
                .map(|k| {
                    if k >= c.len() {
                        0.0
                    } else {
                        var * c.iter().zip(&c[k..]).map(|(x, y)| x * y).sum::<f64>()
                    }
                })
                .collect()
        }
    };
    Ok(AutocovarianceSeq::new(gamma, AutocovSource::ClosedForm, true))
}

/// `E(g(e_k) | e_0 = x0) = (1 - |x0|)^k g(x0)` for the Harris chain with the
/// signed square-root observable.
pub fn conditional_expectation_harris(x0: f64, k: u32, a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::parameter(format!("a must be positive, got {a}")));
    }
    if !(x0.abs() <= 1.0) {
        return Err(Error::domain(format!("x0 must lie in [-1, 1], got {x0}")));
    }
    Ok((1.0 - x0.abs()).powi(k as i32) * Observable::SignedSqrt.apply(x0))
}

/// CDF of the Harris invariant law: `1/2 + sign(x) |x|^a / 2` on `[-1, 1]`.
pub fn harris_stationary_cdf(x: f64, a: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        0.5 + 0.5 * x.signum() * x.abs().powf(a)
    }
}

fn biased_autocovariance(values: &[f64], max_lag: usize) -> Vec<f64> {
    let len = values.len() as f64;
    (0..=max_lag)
        .map(|k| {
            values
                .iter()
                .zip(&values[k..])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / len
        })
        .collect()
}

/// `gamma_hat_k = (1/L) sum_{t <= L-k} X_t X_{t+k}`.
pub fn estimate_autocovariance(traj: &Trajectory, max_lag: usize) -> Result<AutocovarianceSeq> {
    let len = traj.len();
    if len <= 4 * max_lag {
        return Err(Error::InsufficientData {
            needed: 4 * max_lag,
            got: len,
        });
    }
    Ok(AutocovarianceSeq::new(
        biased_autocovariance(&traj.values, max_lag),
        AutocovSource::MonteCarlo,
        true,
    ))
}

/// Batch-means standard errors of `gamma_hat_0..=gamma_hat_K`: the spread of
/// the estimate over `batches` disjoint segments, divided by `sqrt(batches)`.
pub fn autocovariance_standard_errors(
    traj: &Trajectory,
    max_lag: usize,
    batches: usize,
) -> Result<Vec<f64>> {
    if batches < 2 {
        return Err(Error::parameter("batch means need at least two batches"));
    }
    let seg = traj.len() / batches;
    if seg <= 4 * max_lag {
        return Err(Error::InsufficientData {
            needed: 4 * max_lag * batches,
            got: traj.len(),
        });
    }
    let per_batch: Vec<Vec<f64>> = traj
        .values
        .chunks_exact(seg)
        .take(batches)
        .map(|chunk| biased_autocovariance(chunk, max_lag))
        .collect();
    let b = batches as f64;
    Ok((0..=max_lag)
        .map(|k| {
            let mean = per_batch.iter().map(|g| g[k]).sum::<f64>() / b;
            let var = per_batch.iter().map(|g| (g[k] - mean).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DecayClass {
    Polynomial { a: f64 },
    Exponential { rate: f64 },
    Zero,
}

/// Upper-bound model `beta_n <= bound(n)` for the innovation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDecayModel {
    pub class: DecayClass,
    /// Multiplier of the decay; the models only pin down the class.
    pub constant: f64,
}

pub const DEFAULT_BETA_CONSTANT: f64 = 1.0;

impl BetaDecayModel {
    /// `beta_0 = 1`; for `n >= 1` the class bound, capped at 1.
    pub fn bound(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let x = n as f64;
        let raw = match self.class {
            DecayClass::Polynomial { a } => self.constant * x.powf(-a),
            DecayClass::Exponential { rate } => self.constant * (-rate * x).exp(),
            DecayClass::Zero => 0.0,
        };
        raw.min(1.0)
    }
}

pub fn beta_decay(spec: &ProcessSpec) -> BetaDecayModel {
    beta_decay_with_constant(spec, DEFAULT_BETA_CONSTANT)
}

pub fn beta_decay_with_constant(spec: &ProcessSpec, constant: f64) -> BetaDecayModel {
    let class = match spec.kind {
        ProcessKind::HarrisChain => DecayClass::Polynomial { a: spec.a },
        // The digit window forgets its past at rate 2^{-n}.
        ProcessKind::DoublingMap => DecayClass::Exponential {
            rate: std::f64::consts::LN_2,
        },
        ProcessKind::NoncausalWindow | ProcessKind::IidBaseline => DecayClass::Zero,
    };
    BetaDecayModel { class, constant }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondBetaDiagnostic {
    /// `(n, sum_{j <= n} log(j)^{3 alpha / 2} j^{-1/2} bound(j))` at `n = 2^k - 1`
    /// and at the horizon.
    pub partial_sums: Vec<(u64, f64)>,
    /// Ratios of consecutive dyadic block sums `D_{k+1} / D_k`.
    pub block_ratios: Vec<f64>,
    pub converged: bool,
}

/// Summability diagnostic for `sum_n log(n)^{3 alpha/2} n^{-1/2} beta_n`.
///
/// Terms are grouped into dyadic blocks `[2^k, 2^{k+1})` (Cauchy condensation):
/// the series converges iff the block sums decay geometrically, which for the
/// polynomial class `n^{-a}` happens with ratio `2^{1/2 - a}`. The verdict is
/// positive when the last three block ratios are all below 1, or when the
/// tail vanishes identically.
pub fn check_cond_beta(model: &BetaDecayModel, alpha: f64, horizon: u64) -> Result<CondBetaDiagnostic> {
    if !(alpha > 1.0) {
        return Err(Error::parameter(format!("alpha must exceed 1, got {alpha}")));
    }
    if horizon < 10 {
        return Err(Error::parameter(format!("horizon must be at least 10, got {horizon}")));
    }
    let expo = 1.5 * alpha;
    let term = |n: u64| -> f64 {
        let x = n as f64;
        x.ln().powf(expo) * x.powf(-0.5) * model.bound(n)
    };

    let mut partial_sums = Vec::new();
    let mut block_sums = Vec::new();
    let mut running = 0.0;
    let mut block = 0.0;
    let mut next_edge = 2u64;
    for n in 1..=horizon {
        running += term(n);
        block += term(n);
        if n + 1 == next_edge {
            partial_sums.push((n, running));
            block_sums.push(block);
            block = 0.0;
            next_edge *= 2;
        }
    }
    if partial_sums.last().map(|&(n, _)| n) != Some(horizon) {
        partial_sums.push((horizon, running));
    }

    let block_ratios: Vec<f64> = block_sums
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (0.0, 0.0) => 0.0,
            (0.0, _) => f64::INFINITY,
            (d0, d1) => d1 / d0,
        })
        .collect();
    let tail = block_ratios.len().min(3);
    let converged = tail > 0 && block_ratios[block_ratios.len() - tail..].iter().all(|&r| r < 1.0);

    Ok(CondBetaDiagnostic {
        partial_sums,
        block_ratios,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spec_validation() {
        assert!(ProcessSpec::harris(0.0).validate().is_err());
        assert!(ProcessSpec::harris(-1.0).validate().is_err());
        assert!(ProcessSpec::noncausal(vec![0.0, 0.0, 0.0]).validate().is_err());
        assert!(ProcessSpec::noncausal(vec![1.0, 1.0]).validate().is_err());
        assert!(ProcessSpec::iid(0.0).validate().is_err());
        assert!(ProcessSpec::noncausal(vec![0.0, 1.0, 0.0]).validate().is_ok());
    }

    #[test]
    fn zero_length_is_domain_error() {
        let err = sample_trajectory(&ProcessSpec::iid(1.0), 0, 1).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn harris_triple_is_deterministic() {
        let spec = ProcessSpec::harris(1.0);
        let a = sample_trajectory(&spec, 3, 99).unwrap();
        let b = sample_trajectory(&spec, 3, 99).unwrap();
        assert_eq!(a.values.len(), 3);
        let bits = |t: &Trajectory| t.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&sample_trajectory(&spec, 3, 100).unwrap()));
    }

    #[test]
    fn innovation_lengths_include_margins() {
        let spec = ProcessSpec::noncausal(vec![0.5, 1.0, 0.25, 0.1, 0.3]);
        let t = sample_trajectory(&spec, 50, 3).unwrap();
        assert_eq!(t.innovations.len(), 50 + 2 * 2);
        let d = sample_trajectory(&ProcessSpec::doubling_map(), 10, 3).unwrap();
        assert_eq!(d.innovations.len(), 10 + 2 * DOUBLING_DIGITS);
    }

    #[test]
    fn noncausal_values_match_window_sum() {
        let spec = ProcessSpec::noncausal(vec![0.5, 1.0, -0.25]);
        let t = sample_trajectory(&spec, 20, 11).unwrap();
        for k in 1..=20i64 {
            let direct = 0.5 * t.innovation(k - 1) + t.innovation(k) - 0.25 * t.innovation(k + 1);
            assert_abs_diff_eq!(t.values[(k - 1) as usize], direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn doubling_shift_is_the_map() {
        let t = sample_trajectory(&ProcessSpec::doubling_map(), 2, 5).unwrap();
        let w1 = t.doubling_word(1).unwrap();
        let w2 = t.doubling_word(2).unwrap();
        assert_eq!(w2 & !1, doubling_step(w1));
        assert_eq!(w2 & 1, t.innovation(2 + DOUBLING_DIGITS as i64) as u64);
        assert_eq!(t.values[1], doubling_point(w2) - 0.5);
        assert_eq!(t.values[0], doubling_point(w1) - 0.5);
    }

    #[test]
    fn iid_sample_mean_is_near_zero() {
        let n = 100_000;
        let t = sample_trajectory(&ProcessSpec::iid(1.0), n, 2024).unwrap();
        let mean = t.values.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn harris_closed_form_small_lags() {
        let g = autocovariance_closed_form(&ProcessSpec::harris(1.0), 2).unwrap();
        assert_abs_diff_eq!(g.gamma[0], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(g.gamma[1], 1.0 / 6.0, epsilon = 1e-13);
        assert_abs_diff_eq!(g.gamma[2], 1.0 / 12.0, epsilon = 1e-13);
        assert_eq!(g.source, AutocovSource::ClosedForm);
        assert!(g.summable);
    }

    #[test]
    fn iid_closed_form() {
        let g = autocovariance_closed_form(&ProcessSpec::iid(1.0), 3).unwrap();
        assert_eq!(g.gamma, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn doubling_closed_form_lag_one() {
        let g = autocovariance_closed_form(&ProcessSpec::doubling_map(), 1).unwrap();
        assert_abs_diff_eq!(g.gamma[1], 1.0 / 24.0, epsilon = 1e-15);
    }

    #[test]
    fn unsupported_observable_combination() {
        let spec = ProcessSpec::doubling_map().with_observable(Observable::SignedSqrt);
        let err = autocovariance_closed_form(&spec, 3).unwrap_err();
        assert!(matches!(err, Error::UnsupportedModel(_)));
    }

    #[test]
    fn closed_forms_are_valid_sequences() {
        for spec in [
            ProcessSpec::harris(1.0),
            ProcessSpec::harris(0.3),
            ProcessSpec::harris(2.0).with_observable(Observable::CenteredIdentity),
            ProcessSpec::doubling_map(),
            ProcessSpec::noncausal(vec![0.3, -0.2, 1.0, 0.4, 0.1]),
            ProcessSpec::iid(2.0),
        ] {
            autocovariance_closed_form(&spec, 30).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn conditional_expectation_examples() {
        assert_abs_diff_eq!(
            conditional_expectation_harris(0.25, 2, 1.0).unwrap(),
            0.28125,
            epsilon = 1e-15
        );
        for x0 in [-0.7, -0.1, 0.0, 0.33, 1.0] {
            assert_eq!(
                conditional_expectation_harris(x0, 0, 1.0).unwrap(),
                Observable::SignedSqrt.apply(x0)
            );
        }
        let mut prev = f64::INFINITY;
        for k in [0, 1, 5, 20, 80, 400] {
            let v = conditional_expectation_harris(0.5, k, 1.0).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(prev < 1e-100);
        assert!(matches!(
            conditional_expectation_harris(1.5, 1, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_trajectory_estimates_zero() {
        let traj = Trajectory {
            values: vec![0.0; 100],
            innovations: vec![0.0; 100],
            margin: 0,
            seed: 0,
            spec: ProcessSpec::iid(1.0),
        };
        let g = estimate_autocovariance(&traj, 5).unwrap();
        assert!(g.gamma.iter().all(|&v| v == 0.0));
        assert_eq!(g.source, AutocovSource::MonteCarlo);
    }

    #[test]
    fn estimate_requires_enough_data() {
        let traj = sample_trajectory(&ProcessSpec::iid(1.0), 40, 1).unwrap();
        assert!(matches!(
            estimate_autocovariance(&traj, 10),
            Err(Error::InsufficientData { .. })
        ));
        assert!(estimate_autocovariance(&traj, 9).is_ok());
    }

    #[test]
    fn iid_variance_estimate() {
        let traj = sample_trajectory(&ProcessSpec::iid(1.0), 100_000, 77).unwrap();
        let g = estimate_autocovariance(&traj, 3).unwrap();
        assert!((0.97..=1.03).contains(&g.gamma[0]), "{}", g.gamma[0]);
    }

    #[test]
    fn beta_decay_classes() {
        let h = beta_decay(&ProcessSpec::harris(1.0));
        for n in [1u64, 2, 10, 1000] {
            assert_abs_diff_eq!(h.bound(n), 1.0 / n as f64, epsilon = 1e-15);
        }
        let iid = beta_decay(&ProcessSpec::iid(1.0));
        assert!((1..100).all(|n| iid.bound(n) == 0.0));
        let d = beta_decay(&ProcessSpec::doubling_map());
        for n in 1..20u64 {
            assert_abs_diff_eq!(
                d.bound(2 * n) / d.bound(n),
                2f64.powi(-(n as i32)),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cond_beta_verdicts() {
        let exp = beta_decay(&ProcessSpec::doubling_map());
        assert!(check_cond_beta(&exp, 1.5, 10_000).unwrap().converged);
        let poly = beta_decay(&ProcessSpec::harris(1.0));
        assert!(check_cond_beta(&poly, 1.5, 1_000_000).unwrap().converged);
        let zero = beta_decay(&ProcessSpec::iid(1.0));
        assert!(check_cond_beta(&zero, 1.5, 100).unwrap().converged);
        assert!(matches!(
            check_cond_beta(&poly, 1.0, 100),
            Err(Error::Parameter(_))
        ));
        assert!(check_cond_beta(&poly, 1.5, 9).is_err());
    }

    #[test]
    fn cond_beta_diverges_for_slow_decay() {
        // n^{-0.8} polylog(n): the partial sums keep growing like n^{0.2}.
        let slow = beta_decay(&ProcessSpec::harris(0.3));
        let diag = check_cond_beta(&slow, 1.5, 1_000_000).unwrap();
        assert!(!diag.converged);
        let sums = &diag.partial_sums;
        let grow: Vec<f64> = sums.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let n = grow.len();
        assert!(grow[n - 2] > grow[n - 3]);
    }

    #[test]
    fn spec_json_roundtrip_with_defaults() {
        let spec = ProcessSpec::from_json(r#"{"kind":"harris_chain","a":2.0}"#).unwrap();
        assert_eq!(spec, ProcessSpec::harris(2.0));
        let spec = ProcessSpec::from_json(r#"{"kind":"doubling_map"}"#).unwrap();
        assert_eq!(spec.observable, Observable::CenteredIdentity);
        let round = ProcessSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(round, spec);
        assert!(ProcessSpec::from_json(r#"{"kind":"harris_chain","a":-1}"#).is_err());
    }

    #[test]
    fn trajectory_csv_has_header() {
        let t = sample_trajectory(&ProcessSpec::iid(1.0), 3, 1).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].parse::<f64>().unwrap(), t.values[0]);
    }
}
