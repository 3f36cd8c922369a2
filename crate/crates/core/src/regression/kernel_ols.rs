use alloc::vec::Vec;

use super::kernel::Kernel;
use super::linalg::cholesky_solve;
use crate::error::{Error, Result};

/// Dual weights and intercept of a kernel least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOlsSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Solves `(K + ridge I) a = z - mean(z)` on already-standardized rows.
///
/// Centering the targets lets a linear kernel recover an intercept.
pub fn solve_kernel_ols(rows: &[Vec<f64>], targets: &[f64], kernel: Kernel, ridge: f64) -> Result<KernelOlsSolution> {
    let n = rows.len();
    if n == 0 || n != targets.len() {
        return Err(Error::invalid("kernel OLS needs matching, non-empty rows and targets"));
    }
    if !(ridge > 0.0) {
        return Err(Error::invalid("ridge must be positive"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite target"));
    }
    let mut gram = kernel.gram(rows);
    for i in 0..n {
        gram[i * n + i] += ridge;
    }
    let intercept = targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = targets.iter().map(|z| z - intercept).collect();
    let weights = cholesky_solve(&gram, n, &centered).ok_or(Error::Singular { ridge })?;
    Ok(KernelOlsSolution { weights, intercept })
}
