use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use propgen_core::dsl::{builtin, check_shapes, parse, print, Dims, BUILTIN_NAMES};
use propgen_core::graph::{
    gen_synthetic, load_dataset, make_split, save_dataset, Graph, Split, SplitRatios,
    SyntheticSpec,
};
use propgen_core::train::{score_batch, score_individual, FitResult};
use propgen_search::bridge::{Backend, LiveClient, ReplayScript};
use propgen_search::evo::run_search;
use serde_json::json;

use crate::config::{BackendSpec, RunConfig, SplitSpec};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Loads a dataset and resolves the split spec against it.
fn load_data(cfg: &RunConfig, path: &Path) -> Result<(Arc<Graph>, Arc<Split>, SplitSpec), CliError> {
    let ds = load_dataset(path).map_err(runtime)?;
    let n = ds.graph.num_nodes();
    let (split, spec) = match (cfg.split, ds.split) {
        (SplitSpec::FromFile, None) => {
            return Err(runtime(format!("{} has no stored split", path.display())))
        }
        (SplitSpec::FromFile | SplitSpec::Auto, Some(s)) => (s, SplitSpec::FromFile),
        (SplitSpec::Auto, None) => {
            let r = SplitRatios::DENSE;
            let s = make_split(n, r, ds.graph.labels(), cfg.seed, cfg.stratified);
            (s.map_err(runtime)?, SplitSpec::Ratios(r))
        }
        (SplitSpec::Ratios(r), _) => {
            let s = make_split(n, r, ds.graph.labels(), cfg.seed, cfg.stratified);
            (s.map_err(runtime)?, SplitSpec::Ratios(r))
        }
    };
    split.validate(n).map_err(runtime)?;
    Ok((Arc::new(ds.graph), Arc::new(split), spec))
}

fn require_dataset(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.dataset
        .clone()
        .ok_or_else(|| CliError::Usage("--dataset (or `dataset` in the config) is required".into()))
}

/// Refuses a non-empty directory unless `force`.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        if entries.next().is_some() && !force {
            return Err(runtime(format!(
                "output directory {} is not empty (use --force to write into it)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "args": extra,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&dir.join("run_manifest.json"), &format!("{text}\n"))
}

/// A builtin name, or a path to a program file.
fn mechanism_text(name: &str) -> Result<String, CliError> {
    let path = Path::new(name);
    if path.is_file() {
        return fs::read_to_string(path).map_err(|e| runtime(format!("{name}: {e}")));
    }
    builtin(name)
        .map(str::to_string)
        .map_err(|_| CliError::Usage(format!("{name:?} is neither a builtin mechanism nor a file")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn search(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let dataset = require_dataset(cfg)?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage("--out-dir is required for search".into()))?;
    let spec = cfg
        .backend
        .clone()
        .ok_or_else(|| CliError::Usage("a backend is required: --replay-file or `backend` in the config".into()))?;
    cfg.search
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let backend = match &spec {
        BackendSpec::Replay { path } => Backend::Replay(ReplayScript::load(path).map_err(runtime)?),
        BackendSpec::Live(live) => Backend::Live(LiveClient::new(live.clone()).map_err(runtime)?),
    };
    let (graph, split, resolved) = load_data(cfg, &dataset)?;
    prepare_out_dir(&out_dir, force)?;
    let mut manifest_cfg = cfg.clone();
    manifest_cfg.split = resolved;
    write_manifest(&out_dir, "search", &manifest_cfg, json!({}))?;

    let report = run_search(&cfg.search, graph, split, &backend, &out_dir).map_err(runtime)?;
    let line = json!({
        "best_id": report.best.id,
        "best_fitness": report.best.fitness,
        "generations": report.generations.len(),
        "archive_size": report.archive.len(),
        "out_dir": out_dir,
    });
    println!("{line}");
    Ok(())
}

pub fn eval(cfg: &RunConfig, mechanism: &str, force: bool) -> Result<(), CliError> {
    let dataset = require_dataset(cfg)?;
    let text = mechanism_text(mechanism)?;
    let (graph, split, resolved) = load_data(cfg, &dataset)?;
    let r = score_individual(&text, graph, split, &cfg.search.train);
    let line = json!({
        "mechanism": mechanism,
        "status": r.status,
        "fitness": r.fitness,
        "test_accuracy": r.test_accuracy,
        "epochs_run": r.epochs_run,
        "wall_seconds": r.wall_seconds,
        "message": r.message,
    });
    println!("{line}");
    if let Some(dir) = &cfg.out_dir {
        prepare_out_dir(dir, force)?;
        let mut m = cfg.clone();
        m.split = resolved;
        write_manifest(dir, "eval", &m, json!({ "mechanism": mechanism }))?;
        write(&dir.join("eval.json"), &format!("{line}\n"))?;
    }
    Ok(())
}

pub fn xeval(
    cfg: &RunConfig,
    datasets: &[PathBuf],
    mechanisms: &[String],
    force: bool,
) -> Result<(), CliError> {
    let texts: Vec<String> = mechanisms
        .iter()
        .map(|m| mechanism_text(m))
        .collect::<Result<_, _>>()?;
    let mut columns = Vec::new();
    for path in datasets {
        let (graph, split, _) = load_data(cfg, path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| graph.name().to_string());
        let results = score_batch(&texts, graph, split, &cfg.search.train, cfg.search.workers);
        columns.push((name, results));
    }
    let mut csv = String::from("mechanism");
    for (name, _) in &columns {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (i, m) in mechanisms.iter().enumerate() {
        csv.push_str(m);
        for (_, results) in &columns {
            let _ = write!(csv, ",{}", fmt_opt(results[i].test_accuracy));
        }
        csv.push('\n');
    }
    print!("{csv}");
    if let Some(dir) = &cfg.out_dir {
        prepare_out_dir(dir, force)?;
        write_manifest(
            dir,
            "xeval",
            cfg,
            json!({ "datasets": datasets, "mechanisms": mechanisms }),
        )?;
        write(&dir.join("xeval.csv"), &csv)?;
    }
    Ok(())
}

pub fn gen_data(
    cfg: &RunConfig,
    spec: &SyntheticSpec,
    split: Option<SplitSpec>,
    output: Option<PathBuf>,
    force: bool,
) -> Result<(), CliError> {
    let path = match (&output, &cfg.out_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => {
            prepare_out_dir(dir, force)?;
            write_manifest(dir, "gen-data", cfg, json!({ "synthetic": spec }))?;
            dir.join("dataset.json")
        }
        (None, None) => return Err(CliError::Usage("--output or --out-dir is required".into())),
    };
    if output.is_some() && path.exists() && !force {
        return Err(runtime(format!(
            "{} exists (use --force to overwrite)",
            path.display()
        )));
    }
    let graph = gen_synthetic(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let stored = match split {
        Some(SplitSpec::Ratios(r)) => Some(
            make_split(graph.num_nodes(), r, graph.labels(), cfg.seed, cfg.stratified)
                .map_err(runtime)?,
        ),
        _ => None,
    };
    save_dataset(&graph, stored.as_ref(), &path).map_err(runtime)?;
    eprintln!(
        "wrote {} ({} nodes, {} edges, edge homophily {:.3})",
        path.display(),
        graph.num_nodes(),
        graph.num_edges(),
        graph.edge_homophily()
    );
    Ok(())
}

fn parse_dims(text: &str) -> Result<Dims, CliError> {
    let v: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--dims {text:?}: {e}")))?;
    match v[..] {
        [n, f, h, c] => Ok(Dims { n, f, h, c }),
        _ => Err(CliError::Usage(format!("--dims expects n,f,h,c, got {text:?}"))),
    }
}

pub fn inspect(cfg: &RunConfig, mechanism: &str, dims: Option<&str>) -> Result<(), CliError> {
    let text = mechanism_text(mechanism)?;
    let h = cfg.search.train.hidden;
    let dims = match (dims, &cfg.dataset) {
        (Some(d), _) => parse_dims(d)?,
        (None, Some(path)) => {
            let g = load_dataset(path).map_err(runtime)?.graph;
            Dims {
                n: g.num_nodes(),
                f: g.num_features(),
                h,
                c: g.num_classes(),
            }
        }
        (None, None) => Dims {
            n: 100,
            f: 16,
            h,
            c: 3,
        },
    };
    let prog = parse(&text).map_err(|e| runtime(format!("parse: {e}")))?;
    let tp = check_shapes(&prog, dims).map_err(|e| runtime(format!("shape: {e}")))?;
    print!("{}", print(&tp.program));
    eprintln!(
        "ok: K = {}, output {}x{} under n={} f={} h={} c={}",
        tp.k, tp.output.0, tp.output.1, dims.n, dims.f, dims.h, dims.c
    );
    for w in &tp.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn bench_csv(results: &[(&str, FitResult)]) -> String {
    let mut csv = String::from("mechanism,status,fitness,test_accuracy,epochs_run\n");
    for (name, r) in results {
        let _ = writeln!(
            csv,
            "{name},{},{},{},{}",
            r.status,
            fmt_opt(r.fitness),
            fmt_opt(r.test_accuracy),
            r.epochs_run
        );
    }
    csv
}

pub fn bench(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let dataset = require_dataset(cfg)?;
    let (graph, split, resolved) = load_data(cfg, &dataset)?;
    let texts: Vec<String> = BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n).expect("builtin").to_string())
        .collect();
    let results = score_batch(&texts, graph, split, &cfg.search.train, cfg.search.workers);
    let rows: Vec<(&str, FitResult)> = BUILTIN_NAMES.iter().copied().zip(results).collect();
    let csv = bench_csv(&rows);
    print!("{csv}");
    if let Some(dir) = &cfg.out_dir {
        prepare_out_dir(dir, force)?;
        let mut m = cfg.clone();
        m.split = resolved;
        write_manifest(dir, "bench", &m, json!({}))?;
        write(&dir.join("bench.csv"), &csv)?;
    }
    Ok(())
}
