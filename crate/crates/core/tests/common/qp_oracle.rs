//! Independent solver for the ν-SVR dual: accelerated projected gradient
//! with an exact projection onto each capped simplex.

pub fn objective(gram: &[f64], z: &[f64], beta: &[f64]) -> f64 {
    let n = z.len();
    let w: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += w[i] * gram[i * n + j] * w[j];
        }
    }
    let lin: f64 = (0..n).map(|i| -z[i] * beta[i] + z[i] * beta[i + n]).sum();
    0.5 * quad + lin
}

/// Euclidean projection onto `{x : sum x = total, 0 <= x <= cap}`.
pub fn project_capped_simplex(v: &mut [f64], total: f64, cap: f64) {
    let mass = |lam: f64, v: &[f64]| v.iter().map(|x| (x - lam).clamp(0.0, cap)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - cap;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    while hi - lo > 1e-15 * (1.0 + hi.abs().max(lo.abs())) {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mass(mid, v) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    for x in v.iter_mut() {
        *x = (*x - lam).clamp(0.0, cap);
    }
}

fn largest_eigenvalue(gram: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0; n];
    let mut lam = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| gram[i * n + j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        lam = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lam
}

pub fn fista(gram: &[f64], z: &[f64], c: f64, nu: f64, iters: usize) -> Vec<f64> {
    let n = z.len();
    let total = c * nu * n as f64 / 2.0;
    // Q = [K -K; -K K] has spectral norm 2 * lambda_max(K)
    let step = 1.0 / (2.0 * largest_eigenvalue(gram, n));
    let mut x = vec![total / n as f64; 2 * n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let w: Vec<f64> = (0..n).map(|i| y[i] - y[i + n]).collect();
        let kw: Vec<f64> = (0..n).map(|i| (0..n).map(|j| gram[i * n + j] * w[j]).sum()).collect();
        let mut next: Vec<f64> = (0..2 * n)
            .map(|s| {
                let g = if s < n { kw[s] - z[s] } else { -kw[s - n] + z[s - n] };
                y[s] - step * g
            })
            .collect();
        let (up, down) = next.split_at_mut(n);
        project_capped_simplex(up, total, c);
        project_capped_simplex(down, total, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = (0..2 * n).map(|s| next[s] + (t - 1.0) / t_next * (next[s] - x[s])).collect();
        x = next;
        t = t_next;
    }
    x
}

/// Bias implied by a dual solution: the mean of `z - Kw` over variables
/// strictly inside the box, or the midpoint of the feasible interval when
/// none is.
pub fn bias(gram: &[f64], z: &[f64], beta: &[f64], c: f64) -> f64 {
    let n = z.len();
    let w: Vec<f64> = (0..n).map(|i| beta[i] - beta[i + n]).collect();
    let resid: Vec<f64> = (0..n).map(|i| z[i] - (0..n).map(|j| gram[i * n + j] * w[j]).sum::<f64>()).collect();
    let eps = 1e-6 * c.max(1.0);
    let free: Vec<f64> = (0..2 * n).filter(|&s| beta[s] > eps && beta[s] < c - eps).map(|s| resid[s % n]).collect();
    let (up, down): (Vec<usize>, Vec<usize>) = (0..2 * n).partition(|&s| s < n);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if !free.is_empty() {
        // free upper and lower variables sit at b + eps and b - eps
        let fu: Vec<f64> = up.iter().filter(|&&s| beta[s] > eps && beta[s] < c - eps).map(|&s| resid[s]).collect();
        let fd: Vec<f64> = down.iter().filter(|&&s| beta[s] > eps && beta[s] < c - eps).map(|&s| resid[s - n]).collect();
        if !fu.is_empty() && !fd.is_empty() {
            return (avg(&fu) + avg(&fd)) / 2.0;
        }
        return avg(&free);
    }
    let lo = resid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo + hi) / 2.0
}
