use std::sync::atomic::AtomicBool;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{train, DiscardReason, FitResult, FitStatus, ModelAssembly, Precision, TrainConfig};
use super::{TrainError, TrainOutcome};
use crate::autodiff::{Interrupt, Real};
use crate::dsl::{check_shapes, parse, Dims};
use crate::graph::{Graph, Split};

/// How long past the deadline the caller waits for a worker to notice it.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(5);

fn run<T: Real>(
    text: &str,
    graph: &Graph,
    split: &Split,
    cfg: &TrainConfig,
    interrupt: &Interrupt,
) -> Result<TrainOutcome, TrainError> {
    let dims = Dims {
        n: graph.num_nodes(),
        f: graph.num_features(),
        h: cfg.hidden,
        c: graph.num_classes(),
    };
    let tp = check_shapes(&parse(text)?, dims)?;
    interrupt.check()?;
    let mut model = ModelAssembly::<T>::build(&tp, graph, split, cfg)?;
    train(&mut model, split, cfg, interrupt)
}

/// Parses, checks, compiles and trains `text` on the calling thread.
/// The interrupt is the only way this stops early.
pub fn score_program(
    text: &str,
    graph: &Graph,
    split: &Split,
    cfg: &TrainConfig,
    interrupt: &Interrupt,
) -> FitResult {
    let start = Instant::now();
    let outcome = match cfg.precision {
        Precision::F32 => run::<f32>(text, graph, split, cfg, interrupt),
        Precision::F64 => run::<f64>(text, graph, split, cfg, interrupt),
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(o) => FitResult {
            status: FitStatus::Ok,
            fitness: Some(o.val_accuracy),
            test_accuracy: o.test_accuracy,
            epochs_run: o.epochs_run,
            wall_seconds,
            message: None,
        },
        Err(e) => FitResult::discarded(e.discard_reason(), e.to_string(), wall_seconds),
    }
}

/// Scores one candidate on its own thread under `cfg.timeout_seconds`.
///
/// The worker polls a deadline between graph nodes. If it has not answered
/// by the deadline plus [`TIMEOUT_GRACE`], its cancel flag is raised and the
/// candidate is reported as timed out without waiting further.
pub fn score_individual(
    text: &str,
    graph: Arc<Graph>,
    split: Arc<Split>,
    cfg: &TrainConfig,
) -> FitResult {
    let start = Instant::now();
    if let Err(e) = cfg.validate() {
        return FitResult::discarded(DiscardReason::Compile, e.to_string(), 0.0);
    }
    let budget = Duration::from_secs_f64(cfg.timeout_seconds);
    let flag = Arc::new(AtomicBool::new(false));
    let interrupt = Interrupt::new(Some(start + budget), Some(flag.clone()));
    let (tx, rx) = mpsc::channel();
    let text = text.to_string();
    let job_cfg = cfg.clone();
    let spawned = std::thread::Builder::new()
        .name("score".into())
        .spawn(move || {
            let r = score_program(&text, &graph, &split, &job_cfg, &interrupt);
            let _ = tx.send(r);
        });
    if let Err(e) = spawned {
        return FitResult::discarded(DiscardReason::Compile, format!("spawn failed: {e}"), 0.0);
    }
    let waited = rx.recv_timeout(budget + TIMEOUT_GRACE);
    let wall = start.elapsed().as_secs_f64();
    match waited {
        Ok(mut r) => {
            r.wall_seconds = wall;
            r
        }
        Err(mpsc::RecvTimeoutError::Timeout) => {
            flag.store(true, std::sync::atomic::Ordering::Relaxed);
            FitResult::discarded(DiscardReason::Timeout, "worker did not stop in time", wall)
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            FitResult::discarded(DiscardReason::Compile, "worker panicked", wall)
        }
    }
}

/// Scores `texts` on `workers` threads; results keep submission order.
pub fn score_batch(
    texts: &[String],
    graph: Arc<Graph>,
    split: Arc<Split>,
    cfg: &TrainConfig,
    workers: usize,
) -> Vec<FitResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        texts
            .par_iter()
            .map(|t| score_individual(t, graph.clone(), split.clone(), cfg))
            .collect()
    })
}
