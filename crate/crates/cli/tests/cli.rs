use std::path::Path;
use std::process::{Command, Output};

fn dyntree(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyntree")).args(args).current_dir(cwd).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

const SCHEMA: &str = r#"
[response]
name = "y"

[[inputs]]
name = "a"
kind = "ordinal-real"

[[inputs]]
name = "b"
kind = "ordinal-real"

[[inputs]]
name = "flag"
kind = "categorical-binary"
"#;

fn setup(rows: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,flag,y\n");
    for i in 0..rows {
        let a = (i as f64 * 0.618).fract();
        let b = (i as f64 * 0.414).fract();
        let f = i % 2;
        let y = if a < 0.5 { NA_OR(i, 1.0) } else { format!("{}", 3.0 + 0.1 * b) };
        csv.push_str(&format!("{a},{b},{f},{y}\n"));
    }
    std::fs::write(dir.path().join("d.csv"), csv).unwrap();
    std::fs::write(dir.path().join("s.toml"), SCHEMA).unwrap();
    dir
}

#[allow(non_snake_case)]
fn NA_OR(i: usize, v: f64) -> String {
    // every 13th low-`a` row is missing
    if i.is_multiple_of(13) { "NA".into() } else { format!("{v}") }
}

fn clean(dir: &Path) {
    let mut csv = std::fs::read_to_string(dir.join("d.csv")).unwrap();
    csv = csv.lines().filter(|l| !l.ends_with("NA")).collect::<Vec<_>>().join("\n") + "\n";
    std::fs::write(dir.join("c.csv"), csv).unwrap();
}

#[test]
fn priorsim_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), "[priorsim]\nsizes = [20, 100]\nreps = 50\n").unwrap();
    let o = dyntree(&["priorsim", "--config", "p.toml", "--out-dir", "r"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("p_any_largest"));
    for f in ["priorsim.csv", "priorsim_dims.csv", "summary.toml", "manifest.json"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
    let o = dyntree(&["rerun", "r/manifest.json", "--out-dir", "r2"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("reproduced"));
    assert_eq!(std::fs::read(dir.path().join("r/priorsim.csv")).unwrap(), std::fs::read(dir.path().join("r2/priorsim.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = setup(40);
    // usage
    assert_eq!(dyntree(&["fit", "--bogus"], dir.path()).status.code(), Some(1));
    // configuration
    assert_eq!(dyntree(&["fit", "--data", "d.csv", "--schema", "s.toml", "--particles", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(dyntree(&["fit", "--data", "d.csv", "--schema", "s.toml", "--leaf", "cubic"], dir.path()).status.code(), Some(1));
    // data: missing file, NA response in a regression fit, a short row
    assert_eq!(dyntree(&["fit", "--data", "nope.csv", "--schema", "s.toml"], dir.path()).status.code(), Some(2));
    let o = dyntree(&["fit", "--data", "d.csv", "--schema", "s.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("row 1"), "{}", text(&o));
    std::fs::write(dir.path().join("bad.csv"), "a,b,flag,y\n0.1,0.2,1\n").unwrap();
    let o = dyntree(&["fit", "--data", "bad.csv", "--schema", "s.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("row 1"));
}

#[test]
fn fit_then_predict_and_update() {
    let dir = setup(60);
    clean(dir.path());
    let o = dyntree(&["fit", "--data", "c.csv", "--schema", "s.toml", "--particles", "30", "--snapshot", "cloud.json", "--out-dir", "f"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(dir.path().join("cloud.json").exists());
    std::fs::write(dir.path().join("p.csv"), "a,b,flag\n0.2,0.5,0\n0.8,0.5,1\n").unwrap();
    let o = dyntree(&["predict", "--snapshot", "cloud.json", "--schema", "s.toml", "--points", "p.csv", "--out-dir", "p"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    let pred = std::fs::read_to_string(dir.path().join("p/predictions.csv")).unwrap();
    let means: Vec<f64> = pred.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(means[0] < 2.0 && means[1] > 2.5, "{pred}");
    std::fs::write(dir.path().join("more.csv"), "a,b,flag,y\n0.9,0.1,0,3.01\n0.1,0.9,1,1\n").unwrap();
    let o = dyntree(&["update", "--snapshot", "cloud.json", "--data", "more.csv", "--schema", "s.toml", "--out-dir", "u"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("observations ="));
}

#[test]
fn classify_na_and_relevance_run() {
    let dir = setup(80);
    let o = dyntree(&["classify-na", "--data", "d.csv", "--schema", "s.toml", "--particles", "20", "--repetitions", "2", "--out-dir", "n"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("null_preferred"));
    clean(dir.path());
    let o = dyntree(&["relevance", "--data", "c.csv", "--schema", "s.toml", "--particles", "30", "--repetitions", "2", "--out-dir", "r"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    let rel = std::fs::read_to_string(dir.path().join("r/relevance.csv")).unwrap();
    assert!(rel.starts_with("variable,mean_j,p_positive"));
    assert_eq!(rel.lines().count(), 4);
}

#[test]
fn sensitivity_with_restriction() {
    let dir = setup(60);
    clean(dir.path());
    let o = dyntree(
        &["sensitivity", "--data", "c.csv", "--schema", "s.toml", "--particles", "10", "--repetitions", "1", "--m", "200", "--restrict", "flag=0", "--out-dir", "s"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let s = std::fs::read_to_string(dir.path().join("s/sensitivity.csv")).unwrap();
    let flag = s.lines().find(|l| l.starts_with("0,flag,")).unwrap();
    assert_eq!(flag.split(',').nth(2).unwrap(), "0", "{s}");
    let o = dyntree(&["sensitivity", "--data", "c.csv", "--schema", "s.toml", "--restrict", "a=oops"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn subsample_and_optimize_on_the_tuning_surface() {
    let dir = tempfile::tempdir().unwrap();
    let schema = "[response]\nname = \"time\"\n\n[[inputs]]\nname = \"u1\"\nkind = \"ordinal-real\"\n\n[[inputs]]\nname = \"u2\"\nkind = \"ordinal-real\"\n\n[[inputs]]\nname = \"f1\"\nkind = \"categorical-binary\"\n\n[[inputs]]\nname = \"f2\"\nkind = \"categorical-binary\"\n\n[[inputs]]\nname = \"f3\"\nkind = \"categorical-binary\"\n";
    std::fs::write(dir.path().join("s.toml"), schema).unwrap();
    let mut pool = String::from("u1,u2,f1,f2,f3\n");
    for a in (1..=30).step_by(3) {
        for b in (1..=30).step_by(3) {
            for f in 0..2 {
                pool.push_str(&format!("{a},{b},{f},0,0\n"));
            }
        }
    }
    std::fs::write(dir.path().join("pool.csv"), &pool).unwrap();
    let o = dyntree(&["subsample", "--data", "pool.csv", "--schema", "s.toml", "--size", "30", "--out-dir", "sub"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    let sub = std::fs::read_to_string(dir.path().join("sub/subsample.csv")).unwrap();
    assert_eq!(sub.lines().count(), 31);
    // initial observations from the built-in surface
    let mut init = String::from("u1,u2,f1,f2,f3,time\n");
    for l in sub.lines().skip(1) {
        let x: Vec<f64> = l.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        init.push_str(&format!("{},{},{},{},{},{}\n", x[0], x[1], x[2], x[3], x[4], dyntree::synthetic::tuning_observe(&x, 1, 0)));
    }
    std::fs::write(dir.path().join("init.csv"), init).unwrap();
    let o = dyntree(
        &["optimize", "--data", "init.csv", "--schema", "s.toml", "--points", "pool.csv", "--surface", "tuning", "--particles", "30", "--budget", "5", "--restrict", "u1=1:15", "--out-dir", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let hist = std::fs::read_to_string(dir.path().join("o/optimize.csv")).unwrap();
    assert_eq!(hist.lines().count(), 6);
    assert!(hist.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() <= 15.0));
}
