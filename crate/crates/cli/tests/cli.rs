use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mkalloc::forecaster::SemiBlackBoxModel;
use mkalloc::simlab::{sparse_context_family, SparseFamilySpec};
use mkalloc::{evaluate, Segment};
use serde_json::Value;

fn mkalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkalloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RANDOM_SEGMENTS: &str = "segment_id,D,a,b\n\
s1,100,0.3,0.8\n\
s2,50,-0.5,1.2\n\
s3,70,1.0,0.4\n\
s4,120,-1.5,0.9\n";

#[test]
fn symmetric_segments_get_equal_costs() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(dir.path(), "seg.csv", "segment_id,D,a,b\nx,100,-1,0.5\ny,100,-1,0.5\n");
    let out = dir.path().join("report.json");
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--budget", "10", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out);
    let rows = r["per_segment"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["c"], rows[1]["c"]);
    assert!(r["spend"].as_f64().unwrap() <= 10.0 + 1e-9);
}

#[test]
fn budget_below_minimum_spend_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(dir.path(), "seg.csv", RANDOM_SEGMENTS);
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--budget", "-1e6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn roi_target_holds_in_report() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(dir.path(), "seg.csv", RANDOM_SEGMENTS);
    let out = dir.path().join("report.json");
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--roi", "1.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out);
    let (obj, spend) = (r["objective"].as_f64().unwrap(), r["spend"].as_f64().unwrap());
    assert!(spend > 0.0);
    assert!(obj / spend >= 1.5 - 1e-6, "roi {}", obj / spend);
}

#[test]
fn report_round_trips_through_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(dir.path(), "seg.csv", RANDOM_SEGMENTS);
    let out = dir.path().join("report.json");
    let csv = dir.path().join("rows.csv");
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--budget", "40", "--out", s(&out), "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out);
    let segments = vec![
        Segment::new("s1", 100.0, 0.3, 0.8).unwrap(),
        Segment::new("s2", 50.0, -0.5, 1.2).unwrap(),
        Segment::new("s3", 70.0, 1.0, 0.4).unwrap(),
        Segment::new("s4", 120.0, -1.5, 0.9).unwrap(),
    ];
    let rows = r["per_segment"].as_array().unwrap();
    let costs: Vec<f64> = rows.iter().map(|x| x["c"].as_f64().unwrap()).collect();
    let ev = evaluate(&segments, &costs);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    assert!(rel(ev.objective, r["objective"].as_f64().unwrap()) < 1e-9);
    assert!(rel(ev.spend, r["spend"].as_f64().unwrap()) < 1e-9);

    let sum = |k: &str| rows.iter().map(|x| x[k].as_f64().unwrap()).sum::<f64>();
    assert!(rel(sum("sales"), r["objective"].as_f64().unwrap()) < 1e-9);
    assert!(rel(sum("spend"), r["spend"].as_f64().unwrap()) < 1e-9);
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().count(), 5);
    assert!(csv_text.starts_with("id,c,q,sales,spend\n"));
}

#[test]
fn discrete_allocation_and_its_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(
        dir.path(),
        "seg.csv",
        "segment_id,D,a,b,options\nx,100,-1,0.5,0|1|2|3\ny,80,-0.5,0.7,0|0.5|1|1.5\n",
    );
    for strategy in ["two-step", "direct"] {
        let out = dir.path().join(format!("{strategy}.json"));
        let o = mkalloc(&[
            "allocate", "--segments", s(&seg), "--budget", "50", "--discrete", "--strategy", strategy, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r = read_json(&out);
        assert!(r["spend"].as_f64().unwrap() <= 50.0 + 1e-9);
        for row in r["per_segment"].as_array().unwrap() {
            let c = row["c"].as_f64().unwrap();
            assert!([0.0, 0.5, 1.0, 1.5, 2.0, 3.0].contains(&c), "{c}");
        }
        assert!(r["approx_error_upper_bound"].is_number());
    }
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--roi", "1.5", "--discrete"]);
    assert_eq!(o.status.code(), Some(1));
    let plain = write(dir.path(), "plain.csv", RANDOM_SEGMENTS);
    let o = mkalloc(&["allocate", "--segments", s(&plain), "--budget", "10", "--discrete"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mkalloc(&["allocate", "--segments", s(&plain), "--budget", "10", "--roi", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let seg = write(dir.path(), "seg.csv", "segment_id,D,a,b\ns1,100,0.3,0.8\ns2,100,zero,0.8\n");
    let o = mkalloc(&["allocate", "--segments", s(&seg), "--budget", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seg.csv:3:"), "{}", stderr(&o));

    let dup = write(dir.path(), "dup.csv", "segment_id,D,a,b\ns1,100,0.3,0.8\ns1,100,0.3,0.8\n");
    let o = mkalloc(&["allocate", "--segments", s(&dup), "--budget", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dup.csv:3:"), "{}", stderr(&o));

    let hist = write(dir.path(), "hist.csv", "segment_id,cost,sales,store\ns1,0.5,10,a\ns1,1.0,-3,a\n");
    let o = mkalloc(&["fit", "--history", s(&hist), "--d-from-max", "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hist.csv:3:"), "{}", stderr(&o));
}

/// History CSV (training rows first, then held-out rows) and a segments file
/// with the true market sizes.
fn synthetic_history(dir: &Path, seed: u64) -> (PathBuf, PathBuf, f64) {
    let fam = sparse_context_family(&SparseFamilySpec::new(seed)).unwrap();
    let size = |id: &str| fam.truth.iter().find(|t| t.id == id).unwrap().size;
    let ctx = |id: &str| {
        let c = &fam.train.segments.iter().find(|s| s.id == id).unwrap().context;
        let get = |k: &str| c.iter().find(|(name, _)| name == k).unwrap().1.clone();
        format!("{},{}", get("store"), get("slot"))
    };
    let mut hist = String::from("segment_id,cost,sales,store,slot\n");
    for o in &fam.train.observations {
        let sales = (o.share * size(&o.segment)).round();
        hist.push_str(&format!("{},{},{},{}\n", o.segment, o.cost, sales, ctx(&o.segment)));
    }
    for t in &fam.test {
        hist.push_str(&format!("{},{},{},{}\n", t.segment, t.cost, t.sales, ctx(&t.segment)));
    }
    let mut segs = String::from("segment_id,D\n");
    for t in &fam.truth {
        segs.push_str(&format!("{},{}\n", t.id, t.size));
    }
    let frac = fam.train.observations.len() as f64 / (fam.train.observations.len() + fam.test.len()) as f64;
    (write(dir, "history.csv", &hist), write(dir, "segments.csv", &segs), frac)
}

#[test]
fn fit_is_deterministic_and_beats_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let (hist, segs, frac) = synthetic_history(dir.path(), 3);
    let frac = format!("{frac}");
    let run = |name: &str, extra: &[&str]| {
        let model = dir.path().join(format!("{name}.json"));
        let report = dir.path().join(format!("{name}.report.json"));
        let mut args = vec![
            "fit", "--history", s(&hist), "--segments", s(&segs), "--train-fraction", &frac, "--epochs", "300", "--seed", "5",
            "--out", s(&model), "--report", s(&report),
        ];
        args.extend_from_slice(extra);
        let o = mkalloc(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(&model).unwrap(), read_json(&report))
    };
    let (m1, r1) = run("sbb1", &[]);
    let (m2, _) = run("sbb2", &[]);
    assert_eq!(m1, m2, "same seed must give byte-identical models");
    let (_, base) = run("logit", &["--baseline"]);
    let (sbb, logit) = (r1["rmae"].as_f64().unwrap(), base["rmae"].as_f64().unwrap());
    assert!(r1["test_rows"].as_u64().unwrap() > 0);
    assert!(sbb <= logit, "shared model rmae {sbb} vs baseline {logit}");
}

#[test]
fn predictions_match_exported_curves() {
    let dir = tempfile::tempdir().unwrap();
    let (hist, segs, _) = synthetic_history(dir.path(), 11);
    let model = dir.path().join("model.json");
    let o = mkalloc(&["fit", "--history", s(&hist), "--segments", s(&segs), "--epochs", "50", "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = SemiBlackBoxModel::from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();

    let seg_text = std::fs::read_to_string(&segs).unwrap();
    let sizes: std::collections::HashMap<String, f64> = seg_text
        .lines()
        .skip(1)
        .map(|l| {
            let (id, d) = l.split_once(',').unwrap();
            (id.to_string(), d.parse().unwrap())
        })
        .collect();
    // one extra segment the model has never seen
    let extra = format!("{seg_text}ghost,10\n");
    let segs = write(dir.path(), "with_ghost.csv", &extra);
    let pred = dir.path().join("pred.csv");
    let o = mkalloc(&["predict", "--model", s(&model), "--segments", s(&segs), "--cost-grid", "-2:0.5:2", "--out", s(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("ghost"));

    let mut reader = csv::Reader::from_path(&pred).unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let id = &rec[0];
        let c: f64 = rec[1].parse().unwrap();
        let q: f64 = rec[2].parse().unwrap();
        let d: f64 = rec[3].parse().unwrap();
        let seg = m.export_segment(id, sizes[id]).unwrap();
        assert!((q - seg.share(c)).abs() <= 1e-11 * seg.share(c), "{id} {c}");
        assert!((d - seg.demand(c)).abs() <= 1e-11 * seg.demand(c), "{id} {c}");
        rows += 1;
    }
    assert!(rows >= 100, "{rows} rows");

    // at the market cost the share is one half
    let id = &m.segments[0].id;
    let (a, b) = m.logit_params(id).unwrap();
    let one = write(dir.path(), "one.csv", &format!("segment_id,D\n{id},10\n"));
    let o = mkalloc(&["predict", "--model", s(&model), "--segments", s(&one), "--cost-grid", &format!("{}", -a / b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let line = text.lines().nth(1).unwrap();
    let q: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
    assert!((q - 0.5).abs() < 1e-11, "{line}");

    let o = mkalloc(&["predict", "--model", s(&model), "--segments", s(&one), "--cost-grid", ""]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "segment_id,cost,q,sales\n");
}

#[test]
fn converge_writes_a_shrinking_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = mkalloc(&["simulate", "converge", "--n", "100", "--seed", "7", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let widths: Vec<(String, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[2].to_string(), r[4].parse::<f64>().unwrap() - r[3].parse::<f64>().unwrap())
        })
        .collect();
    let bisect: Vec<f64> = widths.iter().filter(|(p, _)| p == "bisection").map(|(_, w)| *w).collect();
    assert!(!bisect.is_empty());
    assert!(bisect.windows(2).all(|w| w[1] < w[0]), "{bisect:?}");
}

#[test]
fn discrete_error_prints_six_rows() {
    let o = mkalloc(&["simulate", "discrete-error", "--runs", "5", "--n", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7, "{text}");
    for (line, d) in lines[1..].iter().zip(["0.1", "0.5", "1", "2", "4", "8"]) {
        assert_eq!(line.split_whitespace().next(), Some(d));
    }
}

#[test]
fn sensitivity_check_mode_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sens.csv");
    let json = dir.path().join("sens.json");
    let o = mkalloc(&[
        "simulate", "sensitivity", "--n", "20", "--runs", "20", "--levels", "0.05,0.1,0.2", "--out", s(&csv), "--json", s(&json), "--check",
    ]);
    let r = read_json(&json);
    let all_pass = r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == Value::Bool(true));
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 4 }), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);

    let again = dir.path().join("again.json");
    mkalloc(&[
        "simulate", "sensitivity", "--n", "20", "--runs", "20", "--levels", "0.05,0.1,0.2", "--json", s(&again),
    ]);
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(mkalloc(&["--help"]).status.code(), Some(0));
    assert_eq!(mkalloc(&["--version"]).status.code(), Some(0));
    assert_eq!(mkalloc(&["allocate"]).status.code(), Some(1));
    assert_eq!(mkalloc(&["bogus"]).status.code(), Some(1));
}
