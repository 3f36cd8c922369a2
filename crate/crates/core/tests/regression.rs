use curvestop_core::curve::{FeatureKey, FeatureSchema};
use curvestop_core::dataset::CurveDataset;
use curvestop_core::regression::{
    fit, fit_kernel_ols, fit_nu_svr, fit_random_forest, r_squared, random_search_cv, Backend, CvConfig, Kernel,
    RegressorSpec,
};
use curvestop_core::srm::{fit_srm, SrmOptions};
use curvestop_core::synth::{generate_dataset, standard_benchmark};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_problem(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..5.0), rng.random_range(-3.0..3.0)]).collect();
    let y = rows.iter().map(|r| 2.0 * r[0] - r[1] + 0.5).collect();
    (rows, y)
}

#[test]
fn linear_kernel_least_squares_recovers_a_plane() {
    let (rows, y) = linear_problem(30);
    let m = fit_kernel_ols(&rows, &y, Kernel::Linear, 1e-8).unwrap();
    for (x, want) in [(vec![1.0, 1.0], 1.5), (vec![4.0, -2.0], 10.5), (vec![0.0, 0.0], 0.5)] {
        assert!((m.predict(&x).unwrap() - want).abs() < 1e-5);
    }
}

#[test]
fn rbf_least_squares_interpolates() {
    let (rows, _) = linear_problem(25);
    let y: Vec<f64> = rows.iter().map(|r| (r[0] * 1.3).sin() + r[1] * r[1] * 0.1).collect();
    let m = fit_kernel_ols(&rows, &y, Kernel::Rbf { gamma: 0.5 }, 1e-10).unwrap();
    let pred = m.predict_rows(&rows).unwrap();
    for (p, t) in pred.iter().zip(&y) {
        assert!((p - t).abs() < 1e-4, "{p} vs {t}");
    }
}

#[test]
fn linear_svr_tracks_a_plane() {
    let (rows, y) = linear_problem(40);
    let m = fit_nu_svr(&rows, &y, 100.0, 0.5, Kernel::Linear).unwrap();
    let pred = m.predict_rows(&rows).unwrap();
    assert!(r_squared(&pred, &y).unwrap() > 0.999);
}

#[test]
fn forest_learns_a_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let y: Vec<f64> = rows.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
    let m = fit_random_forest(&rows, &y, 50, 1.0, 9).unwrap();
    let test: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 49.0, 0.5]).collect();
    let truth: Vec<f64> = test.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
    assert!(r_squared(&m.predict_rows(&test).unwrap(), &truth).unwrap() > 0.8);
    assert_eq!(m, fit_random_forest(&rows, &y, 50, 1.0, 9).unwrap());
}

#[test]
fn last_seen_reads_the_latest_value() {
    let layout = vec![FeatureKey::Value(1), FeatureKey::Value(2), FeatureKey::FirstDiff(2)];
    let rows = vec![vec![0.1, 0.3, 0.2], vec![0.2, 0.5, 0.35], vec![0.4, 0.45, 0.425]];
    let m = fit(&RegressorSpec::LastSeenValue, &rows, &[0.0, 0.0, 0.0], &layout).unwrap();
    assert_eq!(m.predict_rows(&rows).unwrap(), vec![0.3, 0.5, 0.45]);
}

#[test]
fn search_is_deterministic_and_picks_a_listed_backend() {
    let (rows, y) = linear_problem(30);
    let layout = vec![FeatureKey::Value(1), FeatureKey::Value(2)];
    let cv = CvConfig::default().with_budget(6).with_seed(5);
    for backend in [Backend::NuSvrRbf, Backend::KernelOls, Backend::RandomForest] {
        let a = random_search_cv(&rows, &y, &layout, &cv, backend).unwrap();
        assert_eq!(a.0.backend(), backend);
        assert_eq!(a, random_search_cv(&rows, &y, &layout, &cv, backend).unwrap());
    }
}

fn benchmark(n: usize) -> CurveDataset {
    generate_dataset(&standard_benchmark().with_count(n)).unwrap()
}

#[test]
fn srm_beats_last_seen_on_held_out_curves() {
    let d = benchmark(160);
    let train = d.subset(&(0..100).collect::<Vec<_>>()).unwrap();
    let test = d.subset(&(100..160).collect::<Vec<_>>()).unwrap();
    let opts = SrmOptions { taus: Some(vec![5]), cv: CvConfig::default().with_budget(20), ..Default::default() };
    let srm = fit_srm(&train, &opts).unwrap();
    let last = fit_srm(&train, &SrmOptions { backend: Backend::LastSeenValue, schema: FeatureSchema::TS, ..opts }).unwrap();
    let score = |m: &curvestop_core::srm::SequentialRegressionModel| {
        let pred: Vec<f64> =
            test.records().iter().map(|r| m.predict_final(&r.config, &r.curve.values()[..5]).unwrap().0).collect();
        r_squared(&pred, &test.normalized_finals()).unwrap()
    };
    assert!(score(&srm) > 0.8);
    assert!(score(&srm) > score(&last));
    assert!(srm.sigma_table()[&5] < last.sigma_table()[&5]);
    assert!(srm.predict_final(&test.records()[0].config, &test.records()[0].curve.values()[..4]).is_err());
}
