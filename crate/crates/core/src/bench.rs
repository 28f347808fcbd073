//! Relatedness-pipeline benchmarks: per-instance eager evaluation versus
//! JIT-batched scopes over a tree-pair corpus.
//!
//! Consecutive corpus records form pairs; a sample is one pair. The JIT
//! method wraps each `batch_size`-pair chunk in one batching scope (training
//! records every pair's backward pass inside the same scope, per-sample, and
//! applies one SGD step per chunk on the mean gradient). Every run
//! cross-checks its outputs against the per-instance eager oracle and reports
//! the largest relative deviation; wall-clock numbers exclude the oracle.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::autodiff::{backward, sgd_step};
use crate::corpus::CorpusRecord;
use crate::counter;
use crate::graph::{BatchingScope, GraphError, LazyTensor};
use crate::scheduler::{ExecStats, PlanCache};
use crate::tensor::{rel_deviation, Tensor};
use crate::treelstm::{eager, TreeLstm, TreeLstmConfig};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("pairing requires an even number of trees, got {0}")]
    OddCorpus(usize),
    #[error("train mode requires a label on record {record} (the first of its pair)")]
    MissingLabel { record: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    PerInstance,
    Jit,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::PerInstance => "per-instance",
            BenchMethod::Jit => "jit",
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per-instance" => Ok(BenchMethod::PerInstance),
            "jit" => Ok(BenchMethod::Jit),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Infer,
    Train,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Infer => "infer",
            BenchMode::Train => "train",
        }
    }
}

impl std::str::FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "infer" => Ok(BenchMode::Infer),
            "train" => Ok(BenchMode::Train),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Pairs per batching scope.
    pub batch_size: usize,
    pub mode: BenchMode,
    pub method: BenchMethod,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub seed: u64,
    /// Learning rate for train mode.
    pub lr: f64,
    /// Collect a plan listing from the first executed scope.
    pub collect_plan: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            mode: BenchMode::Infer,
            method: BenchMethod::Jit,
            hidden_dim: 150,
            input_dim: 300,
            seed: 0,
            lr: 0.05,
            collect_plan: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema: u32,
    pub method: String,
    pub mode: String,
    pub pairs: u64,
    pub trees: u64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub seed: u64,
    pub elapsed_sec: f64,
    pub samples_per_sec: f64,
    /// Main-kernel launches performed by the measured method.
    pub main_launches: u64,
    /// Stack/unstack bookkeeping launches (zero for per-instance).
    pub overhead_launches: u64,
    /// Launches an unbatched per-operation execution would need.
    pub unbatched_launches: u64,
    /// `unbatched_launches / main_launches`.
    pub batching_ratio: f64,
    /// Main launches of the forward pass alone (train mode only).
    pub forward_main_launches: Option<u64>,
    /// Largest relative deviation from the per-instance oracle over all
    /// scores and root hidden states.
    pub max_rel_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: BenchReport,
    /// Plan listing of the first executed scope, when requested.
    pub plan_text: Option<String>,
}

struct Pair<'a> {
    a: &'a CorpusRecord,
    b: &'a CorpusRecord,
    label: Option<f64>,
}

fn make_pairs<'a>(
    records: &'a [CorpusRecord],
    cfg: &BenchConfig,
) -> Result<Vec<Pair<'a>>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    if !records.len().is_multiple_of(2) {
        return Err(BenchError::OddCorpus(records.len()));
    }
    let pairs: Vec<Pair<'a>> = records
        .chunks(2)
        .map(|two| Pair {
            a: &two[0],
            b: &two[1],
            label: two[0].label,
        })
        .collect();
    if matches!(cfg.mode, BenchMode::Train) {
        for (k, pair) in pairs.iter().enumerate() {
            if pair.label.is_none() {
                return Err(BenchError::MissingLabel { record: 2 * k + 1 });
            }
        }
    }
    Ok(pairs)
}

/// Runs the benchmark over the corpus and cross-checks against the oracle.
pub fn run_bench(records: &[CorpusRecord], cfg: &BenchConfig) -> Result<BenchOutcome, BenchError> {
    let pairs = make_pairs(records, cfg)?;
    let vocab = records
        .iter()
        .map(|r| r.tree.max_token())
        .max()
        .map_or(1, |m| (m + 1).max(1)) as usize;
    let config = TreeLstmConfig::new(cfg.input_dim, cfg.hidden_dim, vocab);
    let mut model = TreeLstm::new(config, cfg.seed);

    match cfg.method {
        BenchMethod::PerInstance => per_instance(&mut model, &pairs, cfg),
        BenchMethod::Jit => jit(&mut model, &pairs, cfg),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    cfg: &BenchConfig,
    pairs: u64,
    elapsed: Duration,
    main: u64,
    overhead: u64,
    unbatched: u64,
    forward_main: Option<u64>,
    deviation: f64,
) -> BenchReport {
    let secs = elapsed.as_secs_f64();
    BenchReport {
        schema: 1,
        method: cfg.method.name().to_string(),
        mode: cfg.mode.name().to_string(),
        pairs,
        trees: pairs * 2,
        batch_size: cfg.batch_size,
        hidden_dim: cfg.hidden_dim,
        input_dim: cfg.input_dim,
        seed: cfg.seed,
        elapsed_sec: secs,
        samples_per_sec: if secs > 0.0 { pairs as f64 / secs } else { 0.0 },
        main_launches: main,
        overhead_launches: overhead,
        unbatched_launches: unbatched,
        batching_ratio: if main > 0 {
            unbatched as f64 / main as f64
        } else {
            1.0
        },
        forward_main_launches: forward_main,
        max_rel_deviation: deviation,
    }
}

/// One pair at a time, straight through the eager kernels. This is also the
/// oracle, so its own deviation is zero by construction.
fn per_instance(
    model: &mut TreeLstm,
    pairs: &[Pair<'_>],
    cfg: &BenchConfig,
) -> Result<BenchOutcome, BenchError> {
    let mut elapsed = Duration::ZERO;
    let mut launches = 0u64;
    match cfg.mode {
        BenchMode::Infer => {
            let t0 = Instant::now();
            let (result, n) = counter::counting(|| -> Result<(), GraphError> {
                for pair in pairs {
                    eager::pair_score(model, &pair.a.tree, &pair.b.tree)?;
                }
                Ok(())
            });
            result?;
            elapsed = t0.elapsed();
            launches = n;
        }
        BenchMode::Train => {
            // One scope per sample: forward, backward, and an SGD step each.
            for pair in pairs {
                let label = pair.label.expect("validated");
                let t0 = Instant::now();
                let (step, n) = counter::counting(|| -> Result<(), GraphError> {
                    let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))?;
                    let bound = model.bind(&scope)?;
                    let (ha, _) = bound.encode_tree(&scope, &pair.a.tree)?;
                    let (hb, _) = bound.encode_tree(&scope, &pair.b.tree)?;
                    let score = bound.relatedness(&scope, &ha, &hb)?;
                    let loss = bound.pair_loss(&scope, &score, label)?;
                    let handles = bound.param_handles();
                    let grads = backward(&loss, &handles)?;
                    scope.close()?;
                    let grads: Vec<Tensor> =
                        grads.iter().map(|g| g.value()).collect::<Result<_, _>>()?;
                    for (param, grad) in model.params_mut().into_iter().zip(&grads) {
                        sgd_step(param, grad, cfg.lr).map_err(GraphError::Shape)?;
                    }
                    Ok(())
                });
                step?;
                elapsed += t0.elapsed();
                launches += n;
            }
        }
    }
    let report = finish_report(
        cfg,
        pairs.len() as u64,
        elapsed,
        launches,
        0,
        launches,
        None,
        0.0,
    );
    Ok(BenchOutcome {
        report,
        plan_text: None,
    })
}

fn jit(
    model: &mut TreeLstm,
    pairs: &[Pair<'_>],
    cfg: &BenchConfig,
) -> Result<BenchOutcome, BenchError> {
    let cache = Arc::new(PlanCache::new());
    let mut elapsed = Duration::ZERO;
    let mut stats = ExecStats::default();
    let mut forward_main = 0u64;
    let mut unbatched = 0u64;
    let mut deviation: f64 = 0.0;
    let mut plan_text = None;

    for chunk in pairs.chunks(cfg.batch_size.max(1)) {
        // Oracle pass first (untimed), against the parameters this chunk
        // will see.
        let oracle: Vec<(f64, Tensor, Tensor)> = chunk
            .iter()
            .map(|p| eager::pair_score(model, &p.a.tree, &p.b.tree))
            .collect::<Result<_, _>>()?;

        let t0 = Instant::now();
        let scope = BatchingScope::open_with_cache(Arc::clone(&cache))?;
        let bound = model.bind(&scope)?;
        let mut scored: Vec<(LazyTensor, LazyTensor, LazyTensor)> = Vec::with_capacity(chunk.len());
        let mut losses: Vec<LazyTensor> = Vec::new();
        for pair in chunk {
            let (ha, _) = bound.encode_tree(&scope, &pair.a.tree)?;
            let (hb, _) = bound.encode_tree(&scope, &pair.b.tree)?;
            let score = bound.relatedness(&scope, &ha, &hb)?;
            if matches!(cfg.mode, BenchMode::Train) {
                losses.push(bound.pair_loss(&scope, &score, pair.label.expect("validated"))?);
            }
            scored.push((score, ha, hb));
        }

        if matches!(cfg.mode, BenchMode::Train) {
            // Flush the forward pass, then record every pair's backward in
            // the same scope so gradient kernels batch across samples too.
            losses.last().expect("non-empty chunk").value()?;
            let forward_stats = scope.stats();
            forward_main += forward_stats.main_launches;

            let handles = bound.param_handles();
            let mut per_param: Vec<Vec<LazyTensor>> = vec![Vec::new(); handles.len()];
            for loss in &losses {
                for (slot, grad) in per_param.iter_mut().zip(backward(loss, &handles)?) {
                    slot.push(grad);
                }
            }
            let totals: Vec<LazyTensor> = per_param
                .iter()
                .map(|grads| {
                    let refs: Vec<&LazyTensor> = grads.iter().collect();
                    scope.reduce_sum(&refs)
                })
                .collect::<Result<_, _>>()?;
            scope.close()?;
            let mean_lr = cfg.lr / chunk.len() as f64;
            for (param, total) in model.params_mut().into_iter().zip(&totals) {
                sgd_step(param, &total.value()?, mean_lr).map_err(GraphError::Shape)?;
            }
        } else {
            scope.close()?;
        }

        let values: Vec<(f64, Tensor, Tensor)> = scored
            .iter()
            .map(|(s, ha, hb)| Ok::<_, GraphError>((s.value()?.item(), ha.value()?, hb.value()?)))
            .collect::<Result<_, _>>()?;
        elapsed += t0.elapsed();

        stats += scope.stats();
        unbatched += scope.op_node_count() as u64;
        if cfg.collect_plan && plan_text.is_none() {
            let rendered: Vec<String> = scope.plan_summaries().iter().map(|p| p.render()).collect();
            plan_text = Some(rendered.join("\n"));
        }

        for ((score, ha, hb), (oscore, oha, ohb)) in values.iter().zip(&oracle) {
            let sdev = (score - oscore).abs() / score.abs().max(oscore.abs()).max(1.0);
            deviation = deviation
                .max(sdev)
                .max(rel_deviation(ha, oha))
                .max(rel_deviation(hb, ohb));
        }
    }

    let report = finish_report(
        cfg,
        pairs.len() as u64,
        elapsed,
        stats.main_launches,
        stats.overhead(),
        unbatched,
        matches!(cfg.mode, BenchMode::Train).then_some(forward_main),
        deviation,
    );
    Ok(BenchOutcome { report, plan_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GenConfig};

    fn small_cfg(method: BenchMethod, mode: BenchMode) -> BenchConfig {
        BenchConfig {
            batch_size: 8,
            mode,
            method,
            hidden_dim: 4,
            input_dim: 8,
            seed: 7,
            lr: 0.05,
            collect_plan: false,
        }
    }

    fn corpus(trees: usize, seed: u64) -> Vec<CorpusRecord> {
        generate_corpus(&GenConfig {
            trees,
            max_arity: 3,
            max_depth: 4,
            vocab: 24,
            seed,
            ..GenConfig::default()
        })
    }

    #[test]
    fn jit_inference_matches_oracle_and_batches() {
        let records = corpus(24, 1);
        let out = run_bench(&records, &small_cfg(BenchMethod::Jit, BenchMode::Infer)).unwrap();
        assert!(out.report.max_rel_deviation <= 1e-9);
        assert!(out.report.batching_ratio > 1.0);
        assert_eq!(out.report.pairs, 12);
        assert_eq!(out.report.trees, 24);
        assert!(out.report.main_launches < out.report.unbatched_launches);
    }

    #[test]
    fn per_instance_inference_reports_zero_deviation_and_unit_ratio() {
        let records = corpus(12, 2);
        let out = run_bench(
            &records,
            &small_cfg(BenchMethod::PerInstance, BenchMode::Infer),
        )
        .unwrap();
        assert_eq!(out.report.max_rel_deviation, 0.0);
        assert_eq!(out.report.batching_ratio, 1.0);
        assert_eq!(out.report.main_launches, out.report.unbatched_launches);
        assert_eq!(out.report.overhead_launches, 0);
    }

    #[test]
    fn jit_training_checks_scores_and_splits_launches() {
        let records = corpus(16, 3);
        let out = run_bench(&records, &small_cfg(BenchMethod::Jit, BenchMode::Train)).unwrap();
        assert!(out.report.max_rel_deviation <= 1e-9);
        let forward = out.report.forward_main_launches.unwrap();
        assert!(forward > 0);
        assert!(out.report.main_launches > forward);
    }

    #[test]
    fn training_reduces_loss_over_the_corpus() {
        let records = corpus(32, 4);
        let cfg = BenchConfig {
            lr: 0.5,
            ..small_cfg(BenchMethod::Jit, BenchMode::Train)
        };

        // Mirror run_bench's model to measure before/after loss.
        let vocab = records
            .iter()
            .map(|r| r.tree.max_token())
            .max()
            .map_or(1, |m| (m + 1).max(1)) as usize;
        let model_cfg = TreeLstmConfig::new(cfg.input_dim, cfg.hidden_dim, vocab);
        let mut model = TreeLstm::new(model_cfg, cfg.seed);

        let mean_loss = |model: &TreeLstm| -> f64 {
            let mut total = 0.0;
            for two in records.chunks(2) {
                total += eager::pair_loss(model, &two[0].tree, &two[1].tree, two[0].label.unwrap())
                    .unwrap();
            }
            total / (records.len() / 2) as f64
        };

        let before = mean_loss(&model);
        // Run a few epochs of the jit training path directly.
        for _ in 0..5 {
            let pairs = make_pairs(&records, &cfg).unwrap();
            jit(&mut model, &pairs, &cfg).unwrap();
        }
        let after = mean_loss(&model);
        assert!(after < before, "loss should decrease: {before} -> {after}");
    }

    #[test]
    fn validation_errors() {
        let records = corpus(5, 5);
        assert!(matches!(
            run_bench(&records, &small_cfg(BenchMethod::Jit, BenchMode::Infer)),
            Err(BenchError::OddCorpus(5))
        ));
        assert!(matches!(
            run_bench(&[], &small_cfg(BenchMethod::Jit, BenchMode::Infer)),
            Err(BenchError::EmptyCorpus)
        ));
        let mut unlabeled = corpus(4, 6);
        unlabeled[2].label = None;
        assert!(matches!(
            run_bench(&unlabeled, &small_cfg(BenchMethod::Jit, BenchMode::Train)),
            Err(BenchError::MissingLabel { record: 3 })
        ));
    }

    #[test]
    fn plan_collection_renders_steps() {
        let records = corpus(8, 8);
        let cfg = BenchConfig {
            collect_plan: true,
            ..small_cfg(BenchMethod::Jit, BenchMode::Infer)
        };
        let out = run_bench(&records, &cfg).unwrap();
        let plan = out.plan_text.unwrap();
        assert!(plan.contains("matmul"));
        assert!(plan.contains("broadcast"));
    }

    #[test]
    fn reports_serialize_with_schema_field() {
        let records = corpus(8, 9);
        let out = run_bench(&records, &small_cfg(BenchMethod::Jit, BenchMode::Infer)).unwrap();
        let value = serde_json::to_value(&out.report).unwrap();
        assert_eq!(value["schema"], 1);
        assert_eq!(value["method"], "jit");
        assert!(value["samples_per_sec"].is_number());
    }
}
