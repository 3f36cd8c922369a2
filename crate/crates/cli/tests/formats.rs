use curvestop::dataset_io::{decode, encode, parse_csv, parse_jsonl, to_csv, to_jsonl, DatasetFormat};
use curvestop::manifest::{generate, regenerate, sha256_hex};
use curvestop::model_io::{decode_model, encode_model, load_model, save_model};
use curvestop::CliError;
use curvestop_core::curve::ConfigDescriptor;
use curvestop_core::dataset::CurveDataset;
use curvestop_core::regression::{Backend, CvConfig};
use curvestop_core::srm::{fit_srm, SrmOptions};
use curvestop_core::synth::{generate_dataset, standard_benchmark};

const GOLDEN_MODEL: &str = include_str!("fixtures/model_v1.json");

fn sample(n: usize) -> CurveDataset {
    generate_dataset(&standard_benchmark().with_count(n)).unwrap()
}

fn validation_message<T: std::fmt::Debug>(r: curvestop::Result<T>) -> String {
    match r {
        Err(CliError::Validation(m)) => m,
        Err(CliError::Core(e)) if e.is_validation() => e.to_string(),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn jsonl_and_csv_round_trip_to_the_same_dataset() {
    let d = sample(25);
    let from_jsonl = parse_jsonl(&to_jsonl(&d).unwrap()).unwrap();
    let from_csv = parse_csv(&to_csv(&d).unwrap()).unwrap();
    assert_eq!(from_jsonl, d);
    assert_eq!(from_csv, d);
    // re-encoding is byte stable
    assert_eq!(to_jsonl(&from_csv).unwrap(), to_jsonl(&d).unwrap());
    assert_eq!(to_csv(&from_jsonl).unwrap(), to_csv(&d).unwrap());
    for f in [DatasetFormat::Jsonl, DatasetFormat::Csv] {
        assert_eq!(decode(&encode(&d, f).unwrap(), f).unwrap(), d);
    }
}

#[test]
fn short_curve_is_reported_with_its_id() {
    let d = sample(3);
    let text = to_jsonl(&d).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    v["curve"].as_array_mut().unwrap().pop();
    lines[1] = v.to_string();
    let msg = validation_message(parse_jsonl(&lines.join("\n")));
    assert!(msg.contains("line 2") && msg.contains("c00001") && msg.contains("19 of 20"), "{msg}");

    let csv = to_csv(&d).unwrap();
    let mut rows: Vec<String> = csv.lines().map(str::to_string).collect();
    let cut = rows[2].rfind(',').unwrap();
    rows[2].truncate(cut);
    let msg = validation_message(parse_csv(&rows.join("\n")));
    assert!(msg.contains("line 3") && msg.contains("c00001") && msg.contains("19 of 20"), "{msg}");
}

#[test]
fn inconsistent_records_are_rejected() {
    let d = sample(3);
    let text = to_jsonl(&d).unwrap();
    let dup = format!("{text}{}\n", text.lines().next().unwrap());
    assert!(validation_message(parse_jsonl(&dup)).contains("line 4"));
    // the first record fixes the key set
    let extra = text.replacen("\"momentum\"", "\"dropout\"", 1);
    assert!(validation_message(parse_jsonl(&extra)).contains("line 2"));
    let unknown = text.replacen("{\"id\"", "{\"colour\":1,\"id\"", 1);
    validation_message(parse_jsonl(&unknown));
    assert!(validation_message(parse_jsonl("")).contains("no records"));
    let over = text.replacen("\"curve\":[", "\"curve\":[1.5,", 1).replacen("\"horizon\":20", "\"horizon\":21", 1);
    assert!(validation_message(parse_jsonl(&over)).contains("out-of-range"));
}

fn small_model() -> curvestop_core::srm::SequentialRegressionModel {
    let opts = SrmOptions { taus: Some(vec![2, 5]), cv: CvConfig::default().with_budget(3), ..Default::default() };
    fit_srm(&sample(40), &opts).unwrap()
}

#[test]
fn model_round_trip_is_lossless() {
    let m = small_model();
    let bytes = encode_model(&m).unwrap();
    let back = decode_model(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(back, m);
    assert_eq!(encode_model(&back).unwrap(), bytes);
    let d = sample(60);
    for r in &d.records()[40..] {
        for tau in [2, 5] {
            let a = m.predict_final(&r.config, &r.curve.values()[..tau]).unwrap();
            let b = back.predict_final(&r.config, &r.curve.values()[..tau]).unwrap();
            assert_eq!(a.0.to_bits(), b.0.to_bits());
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&path, &m).unwrap();
    assert_eq!(load_model(&path).unwrap(), m);
}

#[test]
fn golden_model_still_loads_and_predicts() {
    let m = decode_model(GOLDEN_MODEL).unwrap();
    assert_eq!(m.taus(), vec![2]);
    assert_eq!(m.models()[&2].spec().backend(), Backend::KernelOls);
    let config = ConfigDescriptor::new(
        [("layers".to_string(), 5.0), ("weights".to_string(), 1e5)].into(),
        [("learning_rate".to_string(), 0.01), ("momentum".to_string(), 0.9)].into(),
    );
    let (y_hat, sigma) = m.predict_final(&config, &[0.2, 0.3]).unwrap();
    assert!((y_hat - 0.592_060_355_256_489_9).abs() < 1e-12, "{y_hat}");
    assert!((sigma - 0.078_906_561_447_034_08).abs() < 1e-12, "{sigma}");
    assert_eq!(String::from_utf8(encode_model(&m).unwrap()).unwrap(), GOLDEN_MODEL);
}

#[test]
fn damaged_model_files_fail_cleanly() {
    let truncated = &GOLDEN_MODEL[..GOLDEN_MODEL.len() / 2];
    assert!(validation_message(decode_model(truncated)).contains("malformed"));
    let newer = GOLDEN_MODEL.replacen("\"version\": 1", "\"version\": 2", 1);
    assert!(validation_message(decode_model(&newer)).contains("version 2"));
    let alien = GOLDEN_MODEL.replacen("curvestop-srm", "something-else", 1);
    assert!(validation_message(decode_model(&alien)).contains("not a model"));
    let bad_sigma = GOLDEN_MODEL.replacen("\"sigma\": {\n      \"2\": ", "\"sigma\": {\n      \"2\": -", 1);
    assert_ne!(bad_sigma, GOLDEN_MODEL);
    assert!(validation_message(decode_model(&bad_sigma)).contains("sigma"));
    assert!(matches!(load_model(std::path::Path::new("/nonexistent/m.json")), Err(e) if e.exit_code() == 2));
}

#[test]
fn manifest_regenerates_identical_bytes() {
    let gen = standard_benchmark().with_count(30).with_seed(4);
    let (d, manifest) = generate(&gen).unwrap();
    assert_eq!(manifest.records, 30);
    assert_eq!(manifest.sha256, sha256_hex(to_jsonl(&d).unwrap().as_bytes()));
    assert_eq!(regenerate(&manifest).unwrap(), d);
    let mut tampered = manifest.clone();
    tampered.generator.seed += 1;
    assert!(regenerate(&tampered).is_err());
}
