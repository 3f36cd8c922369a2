//! ν-support vector regression solved by SMO.
//!
//! The dual is written over `2n` variables `beta = [alpha; alpha*]` with
//! signs `y = [+1...; -1...]`:
//!
//! ```text
//! min  1/2 beta' Q beta + p' beta
//! s.t. sum_{y=+1} beta = sum_{y=-1} beta = C nu n / 2,   0 <= beta <= C
//! ```
//!
//! where `Q_st = y_s y_t K(s mod n, t mod n)` and `p = [-z; z]`. Because both
//! equality constraints act on one sign class each, every SMO step moves a
//! pair of variables from the same class. The decision function is
//! `f(x) = sum_i (alpha_i - alpha*_i) K(x_i, x) + b`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Second-order step denominators below this are clamped.
const TAU: f64 = 1e-12;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Maximal KKT violation accepted at convergence.
    pub tolerance: f64,
    /// Update cap; `None` means `10 * n^2`.
    pub max_updates: Option<usize>,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { tolerance: 1e-3, max_updates: None }
    }
}

/// A converged ν-SVR dual solution.
#[derive(Debug, Clone, PartialEq)]
pub struct NuSvrDual {
    /// `[alpha; alpha*]`, length `2n`.
    pub beta: Vec<f64>,
    /// Box upper bound `C`.
    pub upper: f64,
    pub bias: f64,
    /// Width of the insensitive tube implied by ν.
    pub epsilon: f64,
    pub updates: usize,
    /// Maximal first-order KKT violation at exit.
    pub kkt_violation: f64,
}

impl NuSvrDual {
    pub fn n(&self) -> usize {
        self.beta.len() / 2
    }

    /// Expansion coefficients `alpha_i - alpha*_i`.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| self.beta[i] - self.beta[i + n]).collect()
    }
}

struct State<'a> {
    gram: &'a [f64],
    n: usize,
    c: f64,
    beta: Vec<f64>,
    /// `f_i = (K w)_i - z_i`; the gradient is `G_i = f_i`, `G_{i+n} = -f_i`.
    f: Vec<f64>,
}

impl State<'_> {
    #[inline]
    fn k(&self, s: usize, t: usize) -> f64 {
        let n = self.n;
        self.gram[(s % n) * n + t % n]
    }

    #[inline]
    fn grad(&self, s: usize) -> f64 {
        if s < self.n {
            self.f[s]
        } else {
            -self.f[s - self.n]
        }
    }

    #[inline]
    fn positive(&self, s: usize) -> bool {
        s < self.n
    }

    #[inline]
    fn at_upper(&self, s: usize) -> bool {
        self.beta[s] >= self.c
    }

    #[inline]
    fn at_lower(&self, s: usize) -> bool {
        self.beta[s] <= 0.0
    }

    /// LIBSVM-style second-order working set selection restricted to one
    /// sign class. Returns the pair and the maximal violation.
    fn select(&self) -> (Option<(usize, usize)>, f64) {
        let two_n = 2 * self.n;
        let (mut gmaxp, mut ip) = (f64::NEG_INFINITY, None);
        let (mut gmaxn, mut in_) = (f64::NEG_INFINITY, None);
        for s in 0..two_n {
            let g = self.grad(s);
            if self.positive(s) {
                if !self.at_upper(s) && -g >= gmaxp {
                    gmaxp = -g;
                    ip = Some(s);
                }
            } else if !self.at_lower(s) && g >= gmaxn {
                gmaxn = g;
                in_ = Some(s);
            }
        }

        let (mut gmaxp2, mut gmaxn2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut best: Option<usize> = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..two_n {
            let g = self.grad(t);
            if self.positive(t) {
                if self.at_lower(t) {
                    continue;
                }
                gmaxp2 = gmaxp2.max(g);
                let diff = gmaxp + g;
                if let (Some(i), true) = (ip, diff > 0.0) {
                    let quad = self.k(i, i) + self.k(t, t) - 2.0 * self.k(i, t);
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        best = Some(t);
                    }
                }
            } else {
                if self.at_upper(t) {
                    continue;
                }
                gmaxn2 = gmaxn2.max(-g);
                let diff = gmaxn - g;
                if let (Some(i), true) = (in_, diff > 0.0) {
                    let quad = self.k(i, i) + self.k(t, t) - 2.0 * self.k(i, t);
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        best = Some(t);
                    }
                }
            }
        }

        let violation = (gmaxp + gmaxp2).max(gmaxn + gmaxn2).max(0.0);
        let pair = best.map(|j| (if self.positive(j) { ip.unwrap() } else { in_.unwrap() }, j));
        (pair, violation)
    }

    /// Moves mass between two variables of the same class, keeping their sum.
    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let quad = self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j);
        let quad = if quad > 0.0 { quad } else { TAU };
        let delta = (self.grad(i) - self.grad(j)) / quad;
        let (old_i, old_j) = (self.beta[i], self.beta[j]);
        let sum = old_i + old_j;
        let mut bi = old_i - delta;
        let mut bj = old_j + delta;
        if sum > c {
            if bi > c {
                bi = c;
                bj = sum - c;
            }
        } else if bj < 0.0 {
            bj = 0.0;
            bi = sum;
        }
        if sum > c {
            if bj > c {
                bj = c;
                bi = sum - c;
            }
        } else if bi < 0.0 {
            bi = 0.0;
            bj = sum;
        }
        self.beta[i] = bi;
        self.beta[j] = bj;

        // Translate variable moves into moves of w = alpha - alpha*.
        let n = self.n;
        let dw = |s: usize, d: f64| if s < n { (s, d) } else { (s - n, -d) };
        let (ri, dwi) = dw(i, bi - old_i);
        let (rj, dwj) = dw(j, bj - old_j);
        for k in 0..n {
            self.f[k] += self.gram[k * n + ri] * dwi + self.gram[k * n + rj] * dwj;
        }
    }

    /// Bias and tube width from the free variables of each class.
    fn offsets(&self) -> (f64, f64) {
        let n = self.n;
        let class = |range: core::ops::Range<usize>| {
            let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut sum, mut free) = (0.0, 0usize);
            for s in range {
                let g = self.grad(s);
                if self.at_upper(s) {
                    lb = lb.max(g);
                } else if self.at_lower(s) {
                    ub = ub.min(g);
                } else {
                    sum += g;
                    free += 1;
                }
            }
            if free > 0 {
                sum / free as f64
            } else if ub.is_finite() && lb.is_finite() {
                (ub + lb) / 2.0
            } else if ub.is_finite() {
                ub
            } else {
                lb
            }
        };
        let r1 = class(0..n);
        let r2 = class(n..2 * n);
        // rho = (r1 - r2) / 2 and b = -rho; r = (r1 + r2) / 2 and epsilon = -r.
        ((r2 - r1) / 2.0, -(r1 + r2) / 2.0)
    }
}

/// Solves the ν-SVR dual for a precomputed Gram matrix (row-major `n x n`).
pub fn solve_nu_svr(gram: &[f64], targets: &[f64], c: f64, nu: f64, opts: SmoOptions) -> Result<NuSvrDual> {
    let n = targets.len();
    if n == 0 {
        return Err(Error::invalid("SVR needs at least one training row"));
    }
    if gram.len() != n * n {
        return Err(Error::invalid("Gram matrix does not match target count"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(alloc::format!("C must be positive, got {c}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(alloc::format!("nu must lie in (0, 1], got {nu}")));
    }
    if targets.iter().chain(gram).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite SVR input"));
    }

    let mut beta = alloc::vec![0.0; 2 * n];
    let mut remaining = c * nu * n as f64 / 2.0;
    for i in 0..n {
        let a = remaining.min(c);
        beta[i] = a;
        beta[i + n] = a;
        remaining -= a;
    }
    // w = alpha - alpha* starts at zero, so f = -z.
    let f = targets.iter().map(|z| -z).collect();
    let mut state = State { gram, n, c, beta, f };

    let cap = opts.max_updates.unwrap_or(10 * n * n);
    let mut updates = 0;
    loop {
        let (pair, violation) = state.select();
        let Some((i, j)) = pair.filter(|_| violation >= opts.tolerance) else {
            let (bias, epsilon) = state.offsets();
            return Ok(NuSvrDual {
                beta: state.beta,
                upper: c,
                bias,
                epsilon,
                updates,
                kkt_violation: violation,
            });
        };
        if updates >= cap {
            return Err(Error::SolverCap { iterations: cap, residual: violation });
        }
        state.update(i, j);
        updates += 1;
    }
}

/// Maximal first-order KKT violation of a candidate dual point; used to
/// audit solutions independently of the solver's own bookkeeping.
pub fn kkt_violation(gram: &[f64], targets: &[f64], beta: &[f64], c: f64) -> f64 {
    let n = targets.len();
    let w: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    let f: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| gram[i * n + j] * w[j]).sum::<f64>() - targets[i])
        .collect();
    let mut worst: f64 = 0.0;
    // Class +1: variables alpha_i with gradient f_i.
    // Class -1: variables alpha*_i with gradient -f_i.
    for (sign, offset) in [(1.0, 0), (-1.0, n)] {
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::INFINITY;
        for i in 0..n {
            let b = beta[i + offset];
            let g = sign * f[i];
            // -y*G for this class
            let v = -sign * g;
            let can_up = if sign > 0.0 { b < c } else { b > 0.0 };
            let can_down = if sign > 0.0 { b > 0.0 } else { b < c };
            if can_up {
                up = up.max(v);
            }
            if can_down {
                low = low.min(v);
            }
        }
        if up.is_finite() && low.is_finite() {
            worst = worst.max(up - low);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::kernel::Kernel;
    use alloc::vec;

    #[test]
    fn constant_targets_give_constant_function() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3 - 0.5]).collect();
        let gram = Kernel::Rbf { gamma: 0.7 }.gram(&rows);
        let sol = solve_nu_svr(&gram, &[0.42; 6], 1.0, 0.5, SmoOptions::default()).unwrap();
        assert!(sol.coefficients().iter().all(|c| c.abs() < 1e-12));
        assert!((sol.bias - 0.42).abs() < 1e-12);
    }

    #[test]
    fn equality_constraints_hold() {
        let rows: Vec<Vec<f64>> = (0..15).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let z: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 - r[1] + 0.1).collect();
        let gram = Kernel::Rbf { gamma: 0.5 }.gram(&rows);
        let (c, nu) = (3.0, 0.4);
        let sol = solve_nu_svr(&gram, &z, c, nu, SmoOptions::default()).unwrap();
        let target = c * nu * 15.0 / 2.0;
        let sp: f64 = sol.beta[..15].iter().sum();
        let sn: f64 = sol.beta[15..].iter().sum();
        assert!((sp - target).abs() < 1e-6 && (sn - target).abs() < 1e-6);
        assert!(sol.beta.iter().all(|&b| (0.0..=c).contains(&b)));
        assert!(sol.kkt_violation <= 1e-3);
        assert!(kkt_violation(&gram, &z, &sol.beta, c) <= 1e-3 + 1e-9);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let g = [1.0];
        assert!(solve_nu_svr(&g, &[1.0], 0.0, 0.5, SmoOptions::default()).is_err());
        assert!(solve_nu_svr(&g, &[1.0], 1.0, 0.0, SmoOptions::default()).is_err());
        assert!(solve_nu_svr(&g, &[f64::NAN], 1.0, 0.5, SmoOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0]).collect();
        let z: Vec<f64> = rows.iter().map(|r| (r[0] * 3.0).sin()).collect();
        let gram = Kernel::Rbf { gamma: 2.0 }.gram(&rows);
        let err = solve_nu_svr(&gram, &z, 10.0, 0.5, SmoOptions { tolerance: 1e-3, max_updates: Some(1) })
            .unwrap_err();
        assert!(matches!(err, Error::SolverCap { iterations: 1, residual } if residual > 1e-3));
    }
}
