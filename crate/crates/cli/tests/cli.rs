use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mebn::script::{emit_mtheory, parse_mtheory};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn manifest(name: &str) -> String {
    fixtures().join(name).join("manifest.txt").display().to_string()
}

fn rules(name: &str) -> String {
    fixtures().join(name).join("rules.txt").display().to_string()
}

fn mebn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mebn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = mebn(args);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

/// Exit status 1 and a single `CODE: detail` line on stderr.
fn fails_with(args: &[&str], code: &str) {
    let o = mebn(args);
    assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stdout(&o));
    let err = stderr(&o);
    assert!(err.starts_with(&format!("{code}: ")), "{err}");
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn blocks(script: &str) -> BTreeSet<String> {
    script.split("\n\n").map(|b| b.trim().to_string()).collect()
}

#[test]
fn ingest_lists_relations() {
    let out = ok(&["ingest", "--manifest", &manifest("vehicles_raw")]);
    assert!(out.lines().any(|l| l.starts_with("VehicleType") && l.contains("attribute")));
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn ingest_rejects_nulls() {
    let dir = tempfile::tempdir().unwrap();
    let src = fixtures().join("vehicles_raw");
    for e in fs::read_dir(&src).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    let loc = dir.path().join("Location.csv");
    let text = fs::read_to_string(&loc).unwrap().replacen("v1,t1,rgn1", "v1,t1,", 1);
    fs::write(&loc, text).unwrap();
    fails_with(&["ingest", "--manifest", &p(&dir.path().join("manifest.txt"))], "E_ASSUMPTION1");
}

#[test]
fn map_reproduces_the_initial_theory() {
    let dir = tempfile::tempdir().unwrap();
    let norm = dir.path().join("n");
    ok(&["normalize", "--manifest", &manifest("threat_schema"), "--out", &p(&norm)]);
    let out = ok(&["map", "--manifest", &p(&norm.join("manifest.txt"))]);
    let golden = fs::read_to_string(fixtures().join("scripts/threat_initial.mebn")).unwrap();
    let golden = emit_mtheory(&parse_mtheory(&golden).unwrap());
    // The golden lists signatures only, so value spaces are dropped before comparing.
    let strip = |s: &str| -> BTreeSet<String> {
        let kept: Vec<&str> = s.lines().filter(|l| !l.trim_start().starts_with("[V:")).collect();
        let s = kept.join("\n").replace(")\n  ]", ")]");
        blocks(&s).into_iter().map(|b| b.split_whitespace().collect::<Vec<_>>().join(" ")).collect()
    };
    assert_eq!(strip(&out), strip(&golden));
    assert_eq!(out.matches("[F: ").count(), 9);
}

#[test]
fn map_requires_normalized_data() {
    fails_with(&["map", "--manifest", &manifest("vehicles_raw")], "E_NOT_NORMALIZED");
}

#[test]
fn missing_flags_are_config_errors() {
    fails_with(&["map"], "E_CONFIG");
    fails_with(&["learn", "--manifest", &manifest("threat"), "--rules", &rules("threat"), "--estimator", "bayes"], "E_CONFIG");
}

#[test]
fn rules_apply_dumps_joined_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "rules",
        "apply",
        "--manifest",
        &manifest("threat"),
        "--rules",
        &rules("threat"),
        "--dump-joined",
        &p(dir.path()),
    ]);
    assert!(out.contains("theta("));
    let dump = fs::read_to_string(dir.path().join("joined_1_ThreatLevel.csv")).unwrap();
    let joined = dump.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("")).count();
    assert_eq!(joined, 18);
    assert!(dump.lines().any(|l| l.contains("VehicleType=Tracked")));
}

#[test]
fn pipeline_equals_the_manual_steps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.cfg");
    fs::write(
        &cfg,
        format!("# threat model\nmanifest = {}\nrules = {}\nout = {}\nestimator = dirichlet\n", manifest("threat"), rules("threat"), p(&d.join("auto"))),
    )
    .unwrap();
    ok(&["pipeline", "--config", &p(&cfg)]);

    let norm = d.join("manual/normalized");
    ok(&["normalize", "--manifest", &manifest("threat"), "--out", &p(&norm)]);
    let nm = p(&norm.join("manifest.txt"));
    let initial = p(&d.join("manual/initial.mebn"));
    let model = p(&d.join("manual/model.mebn"));
    let learned = p(&d.join("manual/learned.mebn"));
    ok(&["map", "--manifest", &nm, "--out", &initial]);
    ok(&["rules", "apply", "--manifest", &nm, "--rules", &rules("threat"), "--model", &initial, "--out", &model]);
    ok(&["learn", "--manifest", &nm, "--rules", &rules("threat"), "--model", &model, "--out", &learned]);
    for f in ["initial.mebn", "model.mebn", "learned.mebn"] {
        let a = fs::read(d.join("auto").join(f)).unwrap();
        let b = fs::read(d.join("manual").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let again = d.join("again");
    ok(&["pipeline", "--config", &p(&cfg), "--out", &p(&again)]);
    assert_eq!(fs::read(again.join("learned.mebn")).unwrap(), fs::read(d.join("auto/learned.mebn")).unwrap());
    assert_eq!(fs::read(again.join("report.txt")).unwrap(), fs::read(d.join("auto/report.txt")).unwrap());
}

#[test]
fn learn_with_mle_and_infer() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("learned.mebn");
    let report = ok(&["learn", "--manifest", &manifest("threat"), "--rules", &rules("threat"), "--out", &p(&model)]);
    assert!(report.contains("ThreatLevel"));
    let ev = dir.path().join("ev.csv");
    fs::write(&ev, "node_id,value\nLocation_v1_t1,r1\nVehicleType_v1,Tracked\n").unwrap();
    let csv = dir.path().join("out.csv");
    let out = ok(&["infer", "--model", &p(&model), "--evidence", &p(&ev), "--query", "ThreatLevel_r1_t1", "--csv", &p(&csv)]);
    assert!(out.contains("0.642857143"), "{out}");
    assert_eq!(fs::read_to_string(&csv).unwrap(), "case,state,probability\nThreatLevel_r1_t1,High,0.642857143\nThreatLevel_r1_t1,Low,0.357142857\n");
    let g = ok(&["ground", "--model", &p(&model), "--evidence", &p(&ev), "--query", "ThreatLevel_r1_t1"]);
    assert!(g.contains("ThreatLevel_r1_t1 <- VehicleType_v1"), "{g}");
    fails_with(&["infer", "--model", &p(&model), "--query", "Nope_x"], "E_UNKNOWN_NODE");

    let mle = ok(&["learn", "--manifest", &manifest("threat"), "--rules", &rules("threat"), "--estimator", "mle"]);
    assert!(mle.contains("High = 0.666666667"), "{mle}");
}

#[test]
fn eval_checks_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.csv");
    fs::write(&pred, "case,mean,variance,actual\na,0,1,0\nb,1,0,3\n").unwrap();
    let loose = dir.path().join("loose.txt");
    fs::write(&loose, "avg_crps <= 10\nmae < 5\n").unwrap();
    let out = ok(&["eval", "--predictions", &p(&pred), "--criteria", &p(&loose)]);
    assert!(out.contains("mae       1"), "{out}");
    let strict = dir.path().join("strict.txt");
    fs::write(&strict, "mae < 0.5\n").unwrap();
    fails_with(&["eval", "--predictions", &p(&pred), "--criteria", &p(&strict)], "E_CRITERIA_FAILED");
}

#[test]
fn heater_sim_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let crit = dir.path().join("c.txt");
    fs::write(&crit, "avg_crps <= 1\n").unwrap();
    let run = |out: &Path| {
        ok(&[
            "heater-sim",
            "--n-train",
            "200",
            "--n-test",
            "20",
            "--seed",
            "5",
            "--criteria",
            &p(&crit),
            "--out",
            &p(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let text = run(&a);
    assert_eq!(text, run(&b));
    assert!(text.contains("average CRPS"));
    for f in ["heater_cases.csv", "heater_report.txt", "learned.mebn", "train/Slab.csv", "test/SensedInputTemp.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("heater_cases.csv")).unwrap().lines().count(), 21);
}
