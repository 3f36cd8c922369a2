use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use curvestop::advisor::{serve, serve_tcp, Advisor, BestLedger, Envelope, Message};
use curvestop_core::curve::MetricOrientation;
use curvestop_core::regression::CvConfig;
use curvestop_core::srm::{fit_srm, SequentialRegressionModel, SrmOptions};
use curvestop_core::stopping::{should_terminate, Action, TerminationPolicy};
use curvestop_core::synth::{generate_dataset, standard_benchmark};
use serde_json::{json, Value};

fn model() -> SequentialRegressionModel {
    let d = generate_dataset(&standard_benchmark().with_count(40)).unwrap();
    let opts = SrmOptions { taus: Some(vec![2, 5]), cv: CvConfig::default().with_budget(3), ..Default::default() };
    fit_srm(&d, &opts).unwrap()
}

fn register(session: &str) -> String {
    json!({"v": 1, "kind": "register", "session": session,
           "ap": {"layers": 6, "weights": 200000}, "hp": {"learning_rate": 0.003, "momentum": 0.8}})
    .to_string()
}

fn report(session: &str, epoch: usize, value: f64) -> String {
    json!({"v": 1, "kind": "epoch_report", "session": session, "epoch": epoch, "value": value}).to_string()
}

fn finalize(session: &str, value: f64) -> String {
    json!({"v": 1, "kind": "finalize", "session": session, "value": value}).to_string()
}

fn send(a: &mut Advisor, line: &str) -> Value {
    serde_json::from_str(&a.handle_line(line)).unwrap()
}

#[test]
fn decisions_match_the_stopping_rule() {
    let m = model();
    let policy = TerminationPolicy::new(0.9).unwrap();
    let mut a = Advisor::new(m.clone(), policy, None).unwrap();
    assert_eq!(send(&mut a, &register("x"))["kind"], "ack");
    // no finished scores yet: no reference
    let r = send(&mut a, &report("x", 1, 0.3));
    assert_eq!((r["kind"].as_str(), r["action"].as_str(), &r["reference"]), (Some("decision"), Some("continue"), &Value::Null));
    send(&mut a, &register("best"));
    assert_eq!(send(&mut a, &finalize("best", 0.62))["best"], 0.62);
    let curve = [0.3, 0.42, 0.5, 0.55, 0.58];
    for (i, &v) in curve.iter().enumerate().skip(1) {
        let r = send(&mut a, &report("x", i + 1, v));
        let tau = i + 1;
        if !m.has_tau(tau) {
            assert_eq!(r["y_hat"], Value::Null);
            continue;
        }
        let config = curvestop_core::curve::ConfigDescriptor::new(
            [("layers".into(), 6.0), ("weights".into(), 2e5)].into(),
            [("learning_rate".into(), 0.003), ("momentum".into(), 0.8)].into(),
        );
        let (y_hat, sigma) = m.predict_final(&config, &curve[..tau]).unwrap();
        let d = should_terminate(&policy, y_hat, sigma, &[0.62]).unwrap();
        assert_eq!(r["y_hat"].as_f64().unwrap(), y_hat);
        assert_eq!(r["sigma"].as_f64().unwrap(), sigma);
        assert_eq!(r["probability"].as_f64().unwrap(), d.probability);
        assert_eq!(r["reference"].as_f64(), d.reference);
        let action: Action = serde_json::from_value(r["action"].clone()).unwrap();
        assert_eq!(action, d.action);
    }
}

#[test]
fn hopeless_session_is_stopped_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.json");
    let mut a = Advisor::new(model(), TerminationPolicy::default(), Some(path.clone())).unwrap();
    send(&mut a, &register("good"));
    send(&mut a, &finalize("good", 0.95));
    send(&mut a, &register("bad"));
    assert_eq!(send(&mut a, &report("bad", 1, 0.05))["action"], "continue");
    let r = send(&mut a, &report("bad", 2, 0.06));
    assert_eq!(r["action"], "terminate", "{r}");
    assert!(r["probability"].as_f64().unwrap() >= 0.99);
    assert_eq!(r["reference"], 0.95);
    // the session is over
    assert_eq!(send(&mut a, &report("bad", 3, 0.07))["kind"], "error");
    let ack = send(&mut a, &json!({"v": 1, "kind": "finalize", "session": "bad"}).to_string());
    assert_eq!((ack["kind"].as_str(), ack["best"].as_f64()), (Some("ack"), Some(0.95)));

    let ledger = BestLedger::load(&path, MetricOrientation::HigherIsBetter).unwrap();
    assert_eq!(ledger.entries.len(), 2);
    assert!(!ledger.entries[0].predicted && ledger.entries[1].predicted);
    assert_eq!(ledger.entries[1].score, r["y_hat"].as_f64().unwrap());
    // a restarted advisor picks the ledger up again
    let b = Advisor::new(model(), TerminationPolicy::default(), Some(path.clone())).unwrap();
    assert_eq!(b.ledger().sorted().len(), 2);
    assert!(BestLedger::load(&path, MetricOrientation::LowerIsBetter).is_err());
}

#[test]
fn protocol_errors_are_answered_not_fatal() {
    let mut a = Advisor::new(model(), TerminationPolicy::default(), None).unwrap();
    let r = send(&mut a, &report("ghost", 1, 0.5));
    assert_eq!((r["kind"].as_str(), r["session"].as_str()), (Some("error"), Some("ghost")));
    assert!(r["message"].as_str().unwrap().contains("unregistered"));
    assert_eq!(send(&mut a, "{not json")["kind"], "error");
    let r = send(&mut a, &json!({"v": 2, "kind": "register", "session": "s"}).to_string());
    assert!(r["message"].as_str().unwrap().contains("version 2"));
    assert_eq!(send(&mut a, &json!({"kind": "register", "session": "s"}).to_string())["kind"], "error");
    send(&mut a, &register("s"));
    assert_eq!(send(&mut a, &register("s"))["kind"], "error");
    assert!(send(&mut a, &report("s", 2, 0.5))["message"].as_str().unwrap().contains("out-of-order"));
    assert!(send(&mut a, &report("s", 1, 1.5))["message"].as_str().unwrap().contains("out of range"));
    let missing = json!({"v": 1, "kind": "register", "session": "t", "ap": {"layers": 3}, "hp": {}}).to_string();
    assert_eq!(send(&mut a, &missing)["kind"], "error");
    // a partial curve cannot finalize without a value
    send(&mut a, &report("s", 1, 0.5));
    assert_eq!(send(&mut a, &json!({"v": 1, "kind": "finalize", "session": "s"}).to_string())["kind"], "error");
    assert_eq!(send(&mut a, &finalize("s", 0.7))["kind"], "ack");
    assert_eq!(send(&mut a, &finalize("s", 0.7))["kind"], "error");
    assert_eq!(a.ledger().sorted(), &[0.7]);
}

#[test]
fn stream_and_socket_serving() {
    let script = [register("a"), report("a", 1, 0.4), String::new(), finalize("a", 0.8)].join("\n");
    let mut out = Vec::new();
    serve(&Mutex::new(Advisor::new(model(), TerminationPolicy::default(), None).unwrap()), script.as_bytes(), &mut out)
        .unwrap();
    let replies: Vec<Value> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(replies.len(), 3);
    assert_eq!(replies[2]["best"], 0.8);

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let advisor = Arc::new(Mutex::new(Advisor::new(model(), TerminationPolicy::default(), None).unwrap()));
    std::thread::spawn(move || serve_tcp(advisor, listener));
    let mut clients: Vec<(TcpStream, BufReader<TcpStream>)> = (0..2)
        .map(|_| {
            let s = TcpStream::connect(addr).unwrap();
            let r = BufReader::new(s.try_clone().unwrap());
            (s, r)
        })
        .collect();
    let mut ask = |i: usize, line: &str| -> Message {
        let (w, r) = &mut clients[i];
        writeln!(w, "{line}").unwrap();
        let mut reply = String::new();
        r.read_line(&mut reply).unwrap();
        serde_json::from_str::<Envelope>(&reply).unwrap().message
    };
    assert!(matches!(ask(0, &register("p")), Message::Ack { .. }));
    assert!(matches!(ask(1, &register("q")), Message::Ack { .. }));
    assert!(matches!(ask(0, &finalize("p", 0.9)), Message::Ack { best: Some(b), .. } if b == 0.9));
    // the second connection sees the first one's score
    assert!(matches!(ask(1, &finalize("q", 0.5)), Message::Ack { best: Some(b), .. } if b == 0.9));
}
