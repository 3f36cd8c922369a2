use std::collections::BTreeMap;

use curvestop_core::curve::{ConfigDescriptor, MetricOrientation};
use curvestop_core::synth::{
    generate_dataset, hp_decoupled_benchmark, hyperband_workload, render_curve, sample_config, standard_benchmark,
    Coupling, CurveFamilySpec, DropStep, Scale, SyntheticSource,
};

fn descriptor(layers: f64, weights: f64, lr: f64, momentum: f64) -> ConfigDescriptor {
    ConfigDescriptor::new(
        BTreeMap::from([("layers".into(), layers), ("weights".into(), weights)]),
        BTreeMap::from([("learning_rate".into(), lr), ("momentum".into(), momentum)]),
    )
}

#[test]
fn noiseless_curve_follows_the_saturating_formula() {
    let spec = CurveFamilySpec {
        horizon: 10,
        coupling: Coupling::constant(0.1, 0.8, 0.4),
        drops: vec![DropStep { epoch: 6, height: 0.05 }],
        noise_std: 0.0,
        run_offset_std: 0.0,
        orientation: MetricOrientation::HigherIsBetter,
        clip: (0.0, 1.0),
    };
    let c = render_curve(&spec, "x", &descriptor(3.0, 1e5, 0.01, 0.9), 77).unwrap();
    for (i, &v) in c.values().iter().enumerate() {
        let t = (i + 1) as f64;
        let drop = if i + 1 >= 6 { 0.05 } else { 0.0 };
        let want = 0.8 - 0.7 * (-0.4 * t).exp() + drop;
        assert!((v - want).abs() < 1e-15, "epoch {}: {v} vs {want}", i + 1);
    }
}

#[test]
fn generation_is_reproducible() {
    let g = standard_benchmark().with_count(50);
    assert_eq!(generate_dataset(&g).unwrap(), generate_dataset(&g).unwrap());
    let other = generate_dataset(&g.clone().with_seed(1)).unwrap();
    assert_ne!(generate_dataset(&g).unwrap(), other);
}

#[test]
fn prefix_of_a_larger_dataset_is_unchanged() {
    let small = generate_dataset(&standard_benchmark().with_count(20)).unwrap();
    let large = generate_dataset(&standard_benchmark().with_count(60)).unwrap();
    assert_eq!(small.records(), &large.records()[..20]);
}

#[test]
fn sampled_parameters_stay_in_range() {
    let g = standard_benchmark();
    for i in 0..300 {
        let c = sample_config(&g, i).unwrap();
        for (block, ranges) in [(&c.ap, &g.ap), (&c.hp, &g.hp)] {
            assert_eq!(block.len(), ranges.len());
            for (k, r) in ranges {
                let v = block[k];
                assert!(v >= r.min && v <= r.max, "{k} = {v}");
                if r.integer {
                    assert_eq!(v, v.round());
                }
                if r.scale == Scale::Log {
                    assert!(v > 0.0);
                }
            }
        }
    }
    assert!(sample_config(&g, g.count).is_err());
}

#[test]
fn decoupled_finals_ignore_hyperparameters() {
    let g = hp_decoupled_benchmark();
    let a = g.family.params(&descriptor(6.0, 1e6, 1e-4, 0.55)).unwrap();
    let b = g.family.params(&descriptor(6.0, 1e6, 1e-1, 0.95)).unwrap();
    assert_eq!(a, b);
    let s = standard_benchmark();
    let a = s.family.params(&descriptor(6.0, 1e6, 1e-4, 0.55)).unwrap();
    let b = s.family.params(&descriptor(6.0, 1e6, 1e-1, 0.95)).unwrap();
    assert_ne!(a.y_final, b.y_final);
}

#[test]
fn any_epoch_is_available_without_the_rest() {
    let source = SyntheticSource::new(hyperband_workload()).unwrap();
    let key = 123_456_789usize;
    let curve: Vec<f64> = (1..=27).map(|t| source.value(key, t).unwrap()).collect();
    let rendered = render_curve(&source.generator().family, "k", &source.config(key), source.generator().curve_seed(key)).unwrap();
    assert_eq!(curve, rendered.values());
    assert_eq!(source.final_value(key).unwrap(), curve[26]);
    assert!(source.value(key, 0).is_err());
    assert!(source.value(key, 28).is_err());
}

#[test]
fn standard_benchmark_has_spread() {
    let d = generate_dataset(&standard_benchmark()).unwrap();
    let f = d.normalized_finals();
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let sd = (f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert_eq!(d.len(), 1000);
    assert_eq!(d.horizon(), 20);
    assert!(sd > 0.04, "final sd {sd}");
    assert!(d.records().iter().all(|r| r.curve.values().iter().all(|v| (0.0..=1.0).contains(v))));
}
