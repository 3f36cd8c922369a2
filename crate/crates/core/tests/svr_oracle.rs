//! Checks the SMO solver against an independent accelerated projected
//! gradient method on the same dual.

use curvestop_core::regression::Kernel;
use curvestop_core::regression::svr::{kkt_violation, solve_nu_svr, SmoOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::qp_oracle::{bias, fista, objective};

fn problem(seed: u64, n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let z: Vec<f64> = rows.iter().map(|r| r.iter().map(|x| x.sin()).sum::<f64>() + rng.random_range(-0.1..0.1)).collect();
    let gram = Kernel::Rbf { gamma: 0.7 }.gram(&rows);
    (gram, z)
}

#[test]
fn smo_reaches_the_reference_optimum() {
    for (seed, c, nu) in [(1u64, 1.0, 0.5), (2, 10.0, 0.3), (3, 0.2, 0.8), (4, 3.0, 0.1)] {
        let (gram, z) = problem(seed, 24, 3);
        let reference = fista(&gram, &z, c, nu, 20_000);
        let f_ref = objective(&gram, &z, &reference);
        let tight = solve_nu_svr(&gram, &z, c, nu, SmoOptions { tolerance: 1e-8, max_updates: Some(2_000_000) }).unwrap();
        let f_tight = objective(&gram, &z, &tight.beta);
        assert!(f_tight <= f_ref + 1e-9, "seed {seed}: smo {f_tight} vs reference {f_ref}");
        assert!((f_tight - f_ref).abs() <= 1e-6 * (1.0 + f_ref.abs()), "seed {seed}: smo {f_tight} vs reference {f_ref}");
        let default = solve_nu_svr(&gram, &z, c, nu, SmoOptions::default()).unwrap();
        let f_default = objective(&gram, &z, &default.beta);
        assert!((f_default - f_ref).abs() <= 1e-3 * (1.0 + f_ref.abs()), "seed {seed}: default tolerance drifted");
        assert!(default.kkt_violation <= 1e-3);
        assert!(kkt_violation(&gram, &z, &tight.beta, c) <= 1e-8);
        // in-sample predictions agree, bias included
        let n = z.len();
        let b_ref = bias(&gram, &z, &reference, c);
        for i in 0..n {
            let f = |beta: &[f64], b: f64| (0..n).map(|j| (beta[j] - beta[j + n]) * gram[i * n + j]).sum::<f64>() + b;
            assert!((f(&tight.beta, tight.bias) - f(&reference, b_ref)).abs() < 1e-3, "seed {seed} row {i}");
        }
    }
}

#[test]
fn smo_solution_is_feasible() {
    let (gram, z) = problem(9, 30, 2);
    let (c, nu) = (2.0, 0.4);
    let sol = solve_nu_svr(&gram, &z, c, nu, SmoOptions::default()).unwrap();
    let n = z.len();
    let total = c * nu * n as f64 / 2.0;
    assert!(sol.beta.iter().all(|&b| (-1e-12..=c + 1e-12).contains(&b)));
    assert!((sol.beta[..n].iter().sum::<f64>() - total).abs() < 1e-9);
    assert!((sol.beta[n..].iter().sum::<f64>() - total).abs() < 1e-9);
}
