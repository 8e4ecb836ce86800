//! Eigenvalues, empirical spectral distributions and Stieltjes transforms.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which ensemble a matrix or spectrum came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Gram matrix of a single trajectory cut into columns.
    Bn,
    /// Sample covariance of independent trajectories.
    An,
    /// Gaussian sample covariance with matched autocovariance.
    Gn,
    /// Centered, truncated block projections.
    Blocked,
    /// Block projections with independently resampled blocks.
    BlockedStar,
}

impl EnsembleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::Bn => "bn",
            EnsembleKind::An => "an",
            EnsembleKind::Gn => "gn",
            EnsembleKind::Blocked => "blocked",
            EnsembleKind::BlockedStar => "blocked_star",
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-10;

/// Full real spectrum of a symmetric matrix, ascending.
pub fn eig_sym(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::Shape(format!("expected a square matrix, got {rows}x{cols}")));
    }
    if rows == 0 {
        return Ok(Vec::new());
    }
    let scale = matrix.amax();
    let mut asym = 0.0f64;
    for j in 0..cols {
        for i in 0..j {
            asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Shape(format!(
            "matrix is not symmetric: max |A - A^T| = {asym:e} (scale {scale:e})"
        )));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    let trace = sym.trace();
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    debug_assert!(
        (eigs.iter().sum::<f64>() - trace).abs() <= 1e-8 * (1.0 + trace.abs()),
        "eigenvalues lost the trace"
    );
    Ok(eigs)
}

/// Spectrum of an `N x N` Gram matrix built from an `N x n` data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSpectrum {
    pub eigenvalues: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub kind: EnsembleKind,
}

impl GramSpectrum {
    /// Eigendecomposes a PSD Gram matrix. Eigenvalues in
    /// `[-1e-10 max|lambda|, 0)` are rounding noise and clipped to zero;
    /// anything more negative is an error.
    pub fn from_gram(gram: &DMatrix<f64>, cols: usize, kind: EnsembleKind) -> Result<Self> {
        let mut eigenvalues = eig_sym(gram)?;
        let scale = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let floor = -PSD_TOL * scale;
        if let Some(&min) = eigenvalues.first() {
            if min < floor {
                return Err(Error::domain(format!(
                    "Gram matrix is not positive semi-definite: smallest eigenvalue {min:e}"
                )));
            }
        }
        let clipped = eigenvalues.iter().filter(|&&l| l < 0.0).count();
        if clipped > 0 {
            log::debug!("clipped {clipped} slightly negative eigenvalues of a {} Gram matrix", kind.as_str());
            for l in eigenvalues.iter_mut().filter(|l| **l < 0.0) {
                *l = 0.0;
            }
        }
        Ok(GramSpectrum {
            rows: gram.nrows(),
            eigenvalues,
            cols,
            kind,
        })
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.rows as f64 / self.cols as f64
    }

    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        empirical_stieltjes(&self.eigenvalues, z)
    }

    pub fn esd(&self) -> EsdFunction {
        EsdFunction::from_sorted(self.eigenvalues.clone())
    }

    /// One `lambda` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda\n");
        for l in &self.eigenvalues {
            out.push_str(&format!("{l}\n"));
        }
        out
    }
}

/// `(1/N) sum_k 1 / (lambda_k - z)`.
pub fn empirical_stieltjes(eigenvalues: &[f64], z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::domain(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    if eigenvalues.is_empty() {
        return Err(Error::domain("empty spectrum"));
    }
    let sum: Complex64 = eigenvalues.iter().map(|&l| (Complex64::new(l, 0.0) - z).inv()).sum();
    Ok(sum / eigenvalues.len() as f64)
}

/// Step CDF `F(x) = (1/N) #{k : lambda_k <= x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdFunction {
    sorted: Vec<f64>,
}

impl EsdFunction {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        EsdFunction { sorted: eigenvalues }
    }

    fn from_sorted(sorted: Vec<f64>) -> Self {
        EsdFunction { sorted }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&l| l <= x) as f64 / self.sorted.len() as f64
    }
}

/// `sup_x |F_esd(x) - F_ref(x)|`, evaluated on both sides of every jump of the
/// step function. The left side of a jump at `lambda` compares against
/// `F_ref` at the next float below `lambda`, so step references are handled
/// exactly.
pub fn kolmogorov_distance<F: Fn(f64) -> f64>(esd: &EsdFunction, reference: F) -> f64 {
    let atoms = esd.atoms();
    let n = atoms.len() as f64;
    let mut sup = 0.0f64;
    let mut i = 0;
    while i < atoms.len() {
        let x = atoms[i];
        let mut j = i;
        while j < atoms.len() && atoms[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        sup = sup.max((at - reference(x)).abs());
        sup = sup.max((below - reference(x.next_down())).abs());
        i = j;
    }
    sup.min(1.0)
}

/// CSV with columns `re_z, im_z, re_S, im_S`.
pub fn stieltjes_grid_csv(points: &[(Complex64, Complex64)]) -> String {
    let mut out = String::from("re_z,im_z,re_S,im_S\n");
    for (z, s) in points {
        out.push_str(&format!("{},{},{},{}\n", z.re, z.im, s.re, s.im));
    }
    out
}
