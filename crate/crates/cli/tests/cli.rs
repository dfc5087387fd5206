use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hybridnas::events::read_ten;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridnas"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FIXTURE: &str = "SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3";

#[test]
fn encode_three_event_shist_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ev.csv");
    fs::write(&input, "t_us,x,y,p\n0,1,1,1\n1,1,1,1\n39999,2,3,-1\n").unwrap();
    let out = dir.path().join("enc");
    let o = run(&[
        "encode",
        "--input",
        s(&input),
        "--format",
        "shist",
        "--bins",
        "5",
        "--window-us",
        "40000",
        "--width",
        "4",
        "--height",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    let t = read_ten(&out.join("window_000000.ten")).unwrap();
    assert_eq!(t.shape(), &[10, 4, 4]);
    let at = |c: usize, y: usize, x: usize| t.data()[(c * 4 + y) * 4 + x];
    assert_eq!(at(5, 1, 1), 2.0);
    assert_eq!(at(4, 3, 2), 1.0);
    assert_eq!(t.data().iter().sum::<f32>(), 3.0);
    assert!(out.join("resolved.cfg").exists());
}

#[test]
fn encode_empty_input_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ev.csv");
    fs::write(&input, "t_us,x,y,p\n").unwrap();
    let out = dir.path().join("enc");
    let o = run(&["encode", "--input", s(&input), "--format", "vtei", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("manifest.csv")).unwrap().lines().count(), 1);
}

#[test]
fn encode_rejects_unknown_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "encode",
        "--input",
        "x.csv",
        "--format",
        "voxel",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn encode_reports_bad_row_as_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ev.csv");
    fs::write(&input, "t_us,x,y,p\n0,1,1,1\n5,1,1,0\n").unwrap();
    let o = run(&[
        "encode",
        "--input",
        s(&input),
        "--format",
        "shist",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn profile_is_deterministic_and_flags_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let genomes = dir.path().join("g.txt");
    fs::write(&genomes, format!("{FIXTURE}\n# comment\nSHIST|Ch99|oops\n")).unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let o = run(&[
            "profile",
            "--genomes",
            s(&genomes),
            "--seed",
            "3",
            "--batch",
            "2",
            "--score-seeds",
            "1",
            "--keep-going",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,") && rows[1].ends_with(','));
    assert!(rows[2].starts_with("3,") && rows[2].contains("parse error"));

    let strict = run(&[
        "profile",
        "--genomes",
        s(&genomes),
        "--batch",
        "2",
        "--score-seeds",
        "1",
        "--out",
        s(&dir.path().join("c.csv")),
    ]);
    assert_eq!(code(&strict), 3);
}

fn search_args<'a>(out: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "search",
        "--set",
        "population=8",
        "--set",
        "iterations=50",
        "--set",
        "max_params=3e6",
        "--set",
        seed,
        "--set",
        "score_batch=2",
        "--set",
        "score_seeds=0",
        "--out",
        out,
    ]
}

#[test]
fn search_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&search_args(s(out), "seed=7"));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "top_k.txt",
        "population.csv",
        "events.csv",
        "history.csv",
        "report.txt",
        "resolved.cfg",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("top_k.txt")).unwrap().lines().count(), 5);

    // The echoed configuration reproduces the run on its own.
    let c = dir.path().join("c");
    let o = run(&["search", "--config", s(&a.join("resolved.cfg")), "--out", s(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.join("top_k.txt")).unwrap(),
        fs::read(c.join("top_k.txt")).unwrap()
    );
}

#[test]
fn search_with_impossible_budget_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "search",
        "--set",
        "max_params=1",
        "--set",
        "init_attempts=3",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible constraint"));
}

#[test]
fn search_config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "population = 8\ngenerations = 10\n").unwrap();
    let o = run(&["search", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("generations"));
}

#[test]
fn sweep_recovers_planted_weight() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bench.csv");
    let o = run(&["synth-benchmark", "--seed", "3", "--out", s(&table)]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep-weights",
        "--benchmark",
        s(&table),
        "--step",
        "0.1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 12);
    let best: Vec<&str> = text.lines().filter(|l| l.ends_with(",true")).collect();
    assert_eq!(best.len(), 1);
    assert!(best[0].starts_with("0.6,"), "{}", best[0]);
}

#[test]
fn correlate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bench.csv");
    run(&[
        "synth-benchmark",
        "--rows",
        "40",
        "--encodings",
        "SHIST,VTEI",
        "--out",
        s(&table),
    ]);
    let out = dir.path().join("corr");
    let o = run(&["correlate", "--benchmark", s(&table), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("proxy_report.csv")).unwrap();
    // Four proxies over two encodings plus the overall group.
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
}

#[test]
fn correlate_rejects_bad_header() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bench.csv");
    fs::write(&table, "genome,encoding,zen,macs,params,map50\n").unwrap();
    let o = run(&["correlate", "--benchmark", s(&table), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn summary_prints_costs() {
    let o = run(&["summary", "--genome", FIXTURE]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("full model params 2774568"));
    assert_eq!(code(&run(&["summary", "--genome", "nonsense"])), 2);
}
