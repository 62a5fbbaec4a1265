use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use propgen_core::dsl::BUILTIN_NAMES;
use serde_json::{json, Value};
use tempfile::TempDir;

fn propgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propgen"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_code(o: &Output, code: i32) {
    assert_eq!(
        o.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(
            f.path("small.json"),
            json!({ "search": { "workers": 2, "train": { "max_epochs": 8, "hidden": 8 } } })
                .to_string(),
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn dataset(&self, name: &str, homophily: &str) -> PathBuf {
        let out = self.path(name);
        let o = propgen(&[
            "gen-data", "--nodes", "90", "--classes", "3", "--features", "6", "--homophily",
            homophily, "--seed", "3", "--output", s(&out),
        ]);
        assert_code(&o, 0);
        out
    }

    fn replay(&self, gens: usize) -> PathBuf {
        let mut lines = String::new();
        for gen in 1..=gens {
            for op in ["E1", "E2", "C1"] {
                for slot in 0..4 {
                    let k = 1 + (gen + slot) % 4;
                    let text = format!(
                        "Mix {k} hops.\n```\nmechanism r-g{gen}-{op}-s{slot} {{\n  consts {{ K = {k}; a = 0.{slot}5; }}\n  graph {{ Ahat = sym_norm(c = 1); }}\n  init {{ Z = X; }}\n  step k in 1..K {{ Z = (1 - a) * spmm(Ahat, Z) + a * X; }}\n  out {{ Y = Z; }}\n}}\n```"
                    );
                    lines.push_str(&json!({ "gen": gen, "op": op, "slot": slot, "text": text }).to_string());
                    lines.push('\n');
                }
            }
        }
        let path = self.path("replay.jsonl");
        std::fs::write(&path, lines).unwrap();
        path
    }
}

#[test]
fn inspect_accepts_every_builtin() {
    for name in BUILTIN_NAMES {
        let o = propgen(&["inspect", "--mechanism", name]);
        assert_code(&o, 0);
        assert!(stdout(&o).starts_with(&format!("mechanism {name} {{")), "{name}");
    }
}

#[test]
fn search_writes_outputs_and_guards_out_dir() {
    let f = Fixture::new();
    let data = f.dataset("d.json", "0.8");
    let replay = f.replay(2);
    let out = f.path("run");
    let args = |out: &Path| -> Vec<String> {
        [
            "search", "--config", s(&f.path("small.json")), "--dataset", s(&data),
            "--replay-file", s(&replay), "--generations", "2", "--seed", "5", "--out-dir", s(out),
        ]
        .map(String::from)
        .to_vec()
    };
    let run = |extra: &[&str], out: &Path| {
        let mut a = args(out);
        a.extend(extra.iter().map(|x| x.to_string()));
        propgen(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let o = run(&[], &out);
    assert_code(&o, 0);
    let summary: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["generations"], 2);
    for file in [
        "run_manifest.json",
        "generations.jsonl",
        "convergence.csv",
        "best_program.txt",
        "archive.json",
    ] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let gens = std::fs::read_to_string(out.join("generations.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 2);

    assert_code(&run(&[], &out), 2);
    assert_code(&run(&["--force"], &out), 0);

    let again = f.path("run2");
    assert_code(&run(&[], &again), 0);
    let csv = |d: &Path| std::fs::read(d.join("convergence.csv")).unwrap();
    assert_eq!(csv(&out), csv(&again));
}

#[test]
fn eval_prints_one_json_line() {
    let f = Fixture::new();
    let data = f.dataset("d.json", "0.8");
    let o = propgen(&[
        "eval", "--config", s(&f.path("small.json")), "--dataset", s(&data), "--mechanism", "gcn",
    ]);
    assert_code(&o, 0);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["status"], "ok");
    let fit = v["fitness"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&fit));
}

#[test]
fn xeval_prints_a_matrix() {
    let f = Fixture::new();
    let a = f.dataset("homo.json", "0.9");
    let b = f.dataset("hetero.json", "0.1");
    let o = propgen(&[
        "xeval", "--config", s(&f.path("small.json")), "--datasets",
        &format!("{},{}", s(&a), s(&b)), "--mechanisms", "gcn,appnp",
    ]);
    assert_code(&o, 0);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "mechanism,homo,hetero");
    assert_eq!(rows.len(), 3);
    for row in &rows[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 3);
        for c in &cells[1..] {
            let acc: f64 = c.parse().unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
}

#[test]
fn bench_covers_the_corpus() {
    let f = Fixture::new();
    let data = f.dataset("d.json", "0.8");
    let o = propgen(&["bench", "--config", s(&f.path("small.json")), "--dataset", s(&data)]);
    assert_code(&o, 0);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 1 + BUILTIN_NAMES.len());
    for (row, name) in rows[1..].iter().zip(BUILTIN_NAMES) {
        assert!(row.starts_with(&format!("{name},ok,")), "{row}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_code(&propgen(&["frobnicate"]), 1);
    assert_code(&propgen(&["eval", "--mechanism", "gcn"]), 1);
    assert_code(&propgen(&["inspect", "--mechanism", "no-such-thing"]), 1);
    assert_code(&propgen(&["inspect", "--mechanism", "gcn", "--dims", "1,2"]), 1);
    assert_code(&propgen(&["--help"]), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let f = Fixture::new();
    let missing = f.path("absent.json");
    assert_code(
        &propgen(&["eval", "--dataset", s(&missing), "--mechanism", "gcn"]),
        2,
    );
}
