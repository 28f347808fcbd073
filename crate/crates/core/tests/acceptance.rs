//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Every tolerance is pinned here, in code. The throughput criterion is the
//! soft gate: wall-clock ratios depend on the build machine, and the test
//! reports the measured numbers either way.

use std::sync::Arc;

use jitbatch::autodiff::{backward, grad_check, sum_to_scalar};
use jitbatch::bench::{run_bench, BenchConfig, BenchMethod, BenchMode};
use jitbatch::corpus::{generate_corpus, ArityDist, GenConfig, TreeNode};
use jitbatch::granularity::{compare, simulate, Granularity};
use jitbatch::tensor::rel_deviation;
use jitbatch::treelstm::{eager, TreeLstm, TreeLstmConfig};
use jitbatch::{BatchingScope, EwiseKind, LazyTensor, NodeKind, Param, PlanCache, Tensor};

const EQUIVALENCE_TOL: f64 = 1e-9;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-5;
const BATCHED_GRAD_TOL: f64 = 1e-9;
const RATIO_GAP_MIN: f64 = 2.0;
const SPEEDUP_MIN: f64 = 2.0;
const LAUNCH_REDUCTION_MIN: f64 = 50.0;

fn criterion(name: &str, run: impl FnOnce() -> Result<String, String>) {
    match run() {
        Ok(detail) => println!("ACCEPTANCE {name}: PASS ({detail})"),
        Err(reason) => {
            println!("ACCEPTANCE {name}: FAIL ({reason})");
            panic!("acceptance criterion `{name}` failed: {reason}");
        }
    }
}

fn scoring_corpus(seed: u64, trees: usize) -> Vec<jitbatch::corpus::CorpusRecord> {
    generate_corpus(&GenConfig {
        trees,
        max_arity: 4,
        max_depth: 6,
        vocab: 48,
        seed,
        dist: ArityDist::Skewed,
    })
}

/// JIT-batched root hidden states and relatedness scores must match the
/// per-instance eager oracle within 1e-9 relative, over 20 random corpora of
/// 64 trees each (depth ≤ 6, arity 0–4, hidden dim 4).
#[test]
fn equivalence_suite() {
    criterion("equivalence-suite", || {
        let mut worst: f64 = 0.0;
        for seed in 0..20u64 {
            let records = scoring_corpus(seed, 64);
            let model = TreeLstm::new(TreeLstmConfig::new(8, 4, 48), seed ^ 0xabcd);

            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            let mut jit: Vec<(LazyTensor, LazyTensor, LazyTensor)> = Vec::new();
            for pair in records.chunks(2) {
                let (ha, _) = bound
                    .encode_tree(&scope, &pair[0].tree)
                    .map_err(|e| e.to_string())?;
                let (hb, _) = bound
                    .encode_tree(&scope, &pair[1].tree)
                    .map_err(|e| e.to_string())?;
                let score = bound
                    .relatedness(&scope, &ha, &hb)
                    .map_err(|e| e.to_string())?;
                jit.push((ha, hb, score));
            }
            scope.close().map_err(|e| e.to_string())?;

            for (pair, (ha, hb, score)) in records.chunks(2).zip(&jit) {
                let (oscore, oha, ohb) = eager::pair_score(&model, &pair[0].tree, &pair[1].tree)
                    .map_err(|e| e.to_string())?;
                let s = score.value().map_err(|e| e.to_string())?.item();
                worst = worst
                    .max((s - oscore).abs() / s.abs().max(oscore.abs()).max(1.0))
                    .max(rel_deviation(&ha.value().map_err(|e| e.to_string())?, &oha))
                    .max(rel_deviation(&hb.value().map_err(|e| e.to_string())?, &ohb));
            }
        }
        if worst <= EQUIVALENCE_TOL {
            Ok(format!("20 corpora, max relative deviation {worst:.2e}"))
        } else {
            Err(format!(
                "max relative deviation {worst:.2e} exceeds {EQUIVALENCE_TOL:.0e}"
            ))
        }
    });
}

/// Analytic gradients of every kernel and of the full tree loss match
/// central finite differences (step 1e-5) within 1e-4 relative; batched and
/// per-instance gradients agree within 1e-9.
#[test]
fn gradient_suite() {
    criterion("gradient-suite", || {
        let mut worst: f64 = 0.0;
        let mut check = |name: &str,
                         params: &mut [Param],
                         build: &dyn Fn(
            &BatchingScope,
            &[Param],
            &[LazyTensor],
        ) -> Result<LazyTensor, jitbatch::GraphError>|
         -> Result<(), String> {
            let err = grad_check(params, build, GRADIENT_STEP).map_err(|e| e.to_string())?;
            worst = worst.max(err);
            if err < GRADIENT_TOL {
                Ok(())
            } else {
                Err(format!(
                    "{name}: rel err {err:.2e} exceeds {GRADIENT_TOL:.0e}"
                ))
            }
        };

        // Every kernel.
        check(
            "matmul",
            &mut [
                Param::new(
                    "a",
                    Tensor::matrix(&[&[0.3, -1.2, 0.7], &[1.1, 0.4, -0.6]]).unwrap(),
                ),
                Param::new(
                    "b",
                    Tensor::matrix(&[&[0.9, -0.2], &[0.1, 0.8], &[-0.5, 0.3]]).unwrap(),
                ),
            ],
            &|_, _, bound| sum_to_scalar(&bound[0].matmul(&bound[1])?),
        )?;
        for kind in [EwiseKind::Add, EwiseKind::Sub, EwiseKind::Mul] {
            check(
                kind.name(),
                &mut [
                    Param::new("a", Tensor::vector(&[0.7, -0.3, 1.4])),
                    Param::new("b", Tensor::vector(&[-1.1, 0.8, 0.2])),
                ],
                &move |scope, _, bound| {
                    let y = scope.record(NodeKind::Ewise(kind), &[&bound[0], &bound[1]])?;
                    sum_to_scalar(&y.mul(&y)?)
                },
            )?;
        }
        for kind in [
            EwiseKind::Sigmoid,
            EwiseKind::Tanh,
            EwiseKind::Abs,
            EwiseKind::Sign,
        ] {
            check(
                kind.name(),
                &mut [Param::new("x", Tensor::vector(&[0.9, -1.3, 0.4]))],
                &move |scope, _, bound| {
                    sum_to_scalar(&scope.record(NodeKind::Ewise(kind), &[&bound[0]])?)
                },
            )?;
        }
        check(
            "stack/slice",
            &mut [
                Param::new("x", Tensor::vector(&[0.5, -0.8])),
                Param::new("y", Tensor::vector(&[1.2, 0.3])),
            ],
            &|scope, _, bound| {
                let s = scope.stack(&[&bound[0], &bound[1]])?;
                let z = s.slice_row(1)?;
                sum_to_scalar(&s)?.add(&sum_to_scalar(&z.mul(&z)?)?)
            },
        )?;
        check(
            "reduce_sum",
            &mut [
                Param::new("x", Tensor::vector(&[0.4, -0.2])),
                Param::new("y", Tensor::vector(&[0.9, 1.1])),
            ],
            &|scope, _, bound| {
                let r = scope.reduce_sum(&[&bound[0], &bound[1], &bound[0]])?;
                sum_to_scalar(&r.mul(&r)?)
            },
        )?;

        // Full tree loss at hidden dim 4.
        let config = TreeLstmConfig::new(6, 4, 8);
        let model = TreeLstm::new(config, 99);
        let tree_a = TreeNode::internal(vec![TreeNode::leaf(1), TreeNode::leaf(5)]);
        let tree_b = TreeNode::internal(vec![
            TreeNode::internal(vec![TreeNode::leaf(2)]),
            TreeNode::leaf(3),
        ]);
        let mut params: Vec<Param> = model.params().into_iter().cloned().collect();
        check("tree-loss", &mut params, &move |scope, params, _| {
            let mut m = TreeLstm::zeroed(config);
            let mut it = params.iter().cloned();
            m.embedding = it.next().unwrap();
            for g in 0..4 {
                m.wx[g] = it.next().unwrap();
            }
            for g in 0..4 {
                m.uh[g] = it.next().unwrap();
            }
            for g in 0..4 {
                m.bias[g] = it.next().unwrap();
            }
            m.head_prod = it.next().unwrap();
            m.head_diff = it.next().unwrap();
            m.head_bias = it.next().unwrap();
            let bound = m.bind(scope)?;
            let (ha, _) = bound.encode_tree(scope, &tree_a)?;
            let (hb, _) = bound.encode_tree(scope, &tree_b)?;
            let score = bound.relatedness(scope, &ha, &hb)?;
            bound.pair_loss(scope, &score, 0.7)
        })?;

        // Batched backward equals one-scope-per-sample backward.
        let model = TreeLstm::new(TreeLstmConfig::new(6, 4, 48), 17);
        let records = scoring_corpus(77, 8);
        let batched: Vec<Vec<Tensor>> = {
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            let handles = bound.param_handles();
            let grads: Vec<Vec<LazyTensor>> = records
                .chunks(2)
                .map(|pair| {
                    let (ha, _) = bound.encode_tree(&scope, &pair[0].tree)?;
                    let (hb, _) = bound.encode_tree(&scope, &pair[1].tree)?;
                    let score = bound.relatedness(&scope, &ha, &hb)?;
                    let loss = bound.pair_loss(&scope, &score, pair[0].label.unwrap())?;
                    backward(&loss, &handles)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            scope.close().map_err(|e| e.to_string())?;
            grads
                .iter()
                .map(|per_param| per_param.iter().map(|g| g.value().unwrap()).collect())
                .collect()
        };
        let mut grad_dev: f64 = 0.0;
        for (pair, batched_grads) in records.chunks(2).zip(&batched) {
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            let handles = bound.param_handles();
            let (ha, _) = bound
                .encode_tree(&scope, &pair[0].tree)
                .map_err(|e| e.to_string())?;
            let (hb, _) = bound
                .encode_tree(&scope, &pair[1].tree)
                .map_err(|e| e.to_string())?;
            let score = bound
                .relatedness(&scope, &ha, &hb)
                .map_err(|e| e.to_string())?;
            let loss = bound
                .pair_loss(&scope, &score, pair[0].label.unwrap())
                .map_err(|e| e.to_string())?;
            let grads = backward(&loss, &handles).map_err(|e| e.to_string())?;
            scope.close().map_err(|e| e.to_string())?;
            for (single, batched_grad) in grads.iter().zip(batched_grads) {
                grad_dev = grad_dev.max(rel_deviation(
                    &single.value().map_err(|e| e.to_string())?,
                    batched_grad,
                ));
            }
        }
        if grad_dev > BATCHED_GRAD_TOL {
            return Err(format!(
                "batched vs per-instance gradients deviate by {grad_dev:.2e}"
            ));
        }

        Ok(format!(
            "worst finite-difference rel err {worst:.2e}; batched-vs-per-instance {grad_dev:.2e}"
        ))
    });
}

/// (a) Main launches are independent of how many structurally identical
/// trees share a scope (B ∈ {1, 8, 64}); (b) main launches always equal the
/// non-empty (depth, signature) slot count; (c) the batching ratio for B
/// identical dependent-add chains is exactly B. All integer assertions.
#[test]
fn launch_count_laws() {
    criterion("launch-count-laws", || {
        // (a) Identical tree structure, varying tokens.
        let model = TreeLstm::new(TreeLstmConfig::small(64), 5);
        let tree_with = |base: i64| {
            TreeNode::internal(vec![
                TreeNode::leaf(base),
                TreeNode::internal(vec![TreeNode::leaf(base + 1), TreeNode::leaf(base + 2)]),
            ])
        };
        let launches_for = |b: usize| -> Result<u64, String> {
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            for i in 0..b {
                bound
                    .encode_tree(&scope, &tree_with((i % 20) as i64))
                    .map_err(|e| e.to_string())?;
            }
            Ok(scope
                .close()
                .map_err(|e| e.to_string())?
                .stats
                .main_launches)
        };
        let one = launches_for(1)?;
        for b in [8usize, 64] {
            let got = launches_for(b)?;
            if got != one {
                return Err(format!("B={b}: {got} main launches, expected {one}"));
            }
        }

        // (b) Main launches equal the op slot count on random corpora.
        for seed in [11u64, 23, 37] {
            let records = scoring_corpus(seed, 12);
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            for r in &records {
                bound
                    .encode_tree(&scope, &r.tree)
                    .map_err(|e| e.to_string())?;
            }
            let slots = scope.op_slot_count() as u64;
            let report = scope.close().map_err(|e| e.to_string())?;
            if report.stats.main_launches != slots {
                return Err(format!(
                    "seed {seed}: {} main launches vs {slots} slots",
                    report.stats.main_launches
                ));
            }
        }

        // (c) B identical chains of L dependent adds: ratio exactly B.
        let chain_len = 12u64;
        for b in [1u64, 4, 16] {
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            for j in 0..b {
                let mut cur = scope
                    .constant(Tensor::vector(&[j as f64, 1.0]))
                    .map_err(|e| e.to_string())?;
                for _ in 0..chain_len {
                    cur = cur.add(&cur).map_err(|e| e.to_string())?;
                }
            }
            let nodes = scope.op_node_count() as u64;
            let report = scope.close().map_err(|e| e.to_string())?;
            let main = report.stats.main_launches;
            if main != chain_len || nodes != b * chain_len || nodes / main != b || nodes % main != 0
            {
                return Err(format!(
                    "B={b}: nodes {nodes}, main launches {main} (expected ratio exactly {b})"
                ));
            }
        }
        Ok(format!(
            "tree launches constant over B, launches == slots, chain ratio exact ({one} main launches per tree)"
        ))
    });
}

/// Kernel-level batching strictly beats subgraph-level batching whenever
/// cells of different arities share a depth, and by more than 2x on the
/// synthetic parse-tree-like corpus (4500 trees, arity 0-9).
#[test]
fn granularity_finding() {
    criterion("granularity-finding", || {
        // Constructed corpus: arity-2 and arity-3 cells at the same depth.
        let mixed = vec![
            TreeNode::internal(vec![TreeNode::leaf(0), TreeNode::leaf(1)]),
            TreeNode::internal(vec![
                TreeNode::leaf(2),
                TreeNode::leaf(3),
                TreeNode::leaf(4),
            ]),
        ];
        let report = compare(&mixed, mixed.len()).map_err(|e| e.to_string())?;
        if report.kernel.ratio <= report.subgraph.ratio {
            return Err(format!(
                "mixed-arity corpus: kernel ratio {:.2} not strictly above subgraph ratio {:.2}",
                report.kernel.ratio, report.subgraph.ratio
            ));
        }

        // Synthetic corpus shaped like parsed sentences.
        let corpus: Vec<TreeNode> = generate_corpus(&GenConfig {
            trees: 4500,
            max_arity: 9,
            max_depth: 7,
            vocab: 64,
            seed: 2024,
            dist: ArityDist::Skewed,
        })
        .into_iter()
        .map(|r| r.tree)
        .collect();
        let report = compare(&corpus, 256).map_err(|e| e.to_string())?;
        if report.kernel.ratio <= report.subgraph.ratio {
            return Err(format!(
                "synthetic corpus: kernel ratio {:.2} not above subgraph ratio {:.2}",
                report.kernel.ratio, report.subgraph.ratio
            ));
        }
        if report.ratio_gap <= RATIO_GAP_MIN {
            return Err(format!(
                "kernel/subgraph ratio gap {:.2}x does not exceed {RATIO_GAP_MIN}x",
                report.ratio_gap
            ));
        }
        Ok(format!(
            "kernel {:.1}x vs subgraph {:.1}x (gap {:.2}x) on 4500 trees",
            report.kernel.ratio, report.subgraph.ratio, report.ratio_gap
        ))
    });
}

/// Recording the same corpus chunk twice reuses the cached plan with zero
/// grouping work; a structurally altered chunk misses.
#[test]
fn plan_cache_behavior() {
    criterion("plan-cache", || {
        let cache = Arc::new(PlanCache::new());
        let model = TreeLstm::new(TreeLstmConfig::small(48), 3);
        let records = scoring_corpus(5, 16);

        let run = |records: &[jitbatch::corpus::CorpusRecord]| -> Result<(), String> {
            let scope =
                BatchingScope::open_with_cache(Arc::clone(&cache)).map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            for r in records {
                bound
                    .encode_tree(&scope, &r.tree)
                    .map_err(|e| e.to_string())?;
            }
            scope.close().map_err(|e| e.to_string())?;
            Ok(())
        };

        run(&records)?;
        if cache.plans_built() != 1 {
            return Err(format!("first flush built {} plans", cache.plans_built()));
        }
        run(&records)?;
        if cache.plans_built() != 1 || cache.hits() != 1 {
            return Err(format!(
                "repeat flush: {} plans built, {} hits (expected 1 and 1)",
                cache.plans_built(),
                cache.hits()
            ));
        }

        // Structural change: one extra tree.
        let mut altered = records.clone();
        altered.push(scoring_corpus(6, 2).remove(0));
        run(&altered)?;
        if cache.plans_built() != 2 {
            return Err(format!(
                "altered chunk should miss: {} plans built",
                cache.plans_built()
            ));
        }
        Ok("repeat hit with zero grouping work; altered chunk missed".to_string())
    });
}

/// Soft throughput gate on the synthetic corpus at batch size 256: JIT
/// inference at least 2x per-instance samples/s, with at least 50x fewer
/// main-kernel launches. Wall-clock behavior depends on the build machine.
#[test]
fn throughput_soft_gate() {
    criterion("throughput-soft-gate", || {
        let records = generate_corpus(&GenConfig {
            trees: 4500,
            max_arity: 9,
            max_depth: 7,
            vocab: 64,
            seed: 2024,
            dist: ArityDist::Skewed,
        });
        let cfg = |method: BenchMethod| BenchConfig {
            batch_size: 256,
            mode: BenchMode::Infer,
            method,
            hidden_dim: 256,
            input_dim: 512,
            seed: 9,
            lr: 0.05,
            collect_plan: false,
        };
        let jit = run_bench(&records, &cfg(BenchMethod::Jit))
            .map_err(|e| e.to_string())?
            .report;
        if jit.max_rel_deviation > EQUIVALENCE_TOL {
            return Err(format!(
                "jit outputs deviate from the oracle by {:.2e}",
                jit.max_rel_deviation
            ));
        }
        let per_instance = run_bench(&records, &cfg(BenchMethod::PerInstance))
            .map_err(|e| e.to_string())?
            .report;

        let reduction = per_instance.main_launches as f64 / jit.main_launches as f64;
        let speedup = jit.samples_per_sec / per_instance.samples_per_sec;
        let detail = format!(
            "speedup {speedup:.2}x (jit {:.1} vs per-instance {:.1} samples/s), launch reduction {reduction:.0}x",
            jit.samples_per_sec, per_instance.samples_per_sec
        );
        if reduction < LAUNCH_REDUCTION_MIN {
            return Err(format!(
                "{detail}; launch reduction below {LAUNCH_REDUCTION_MIN}x"
            ));
        }
        if speedup < SPEEDUP_MIN {
            return Err(format!("{detail}; speedup below {SPEEDUP_MIN}x"));
        }
        Ok(detail)
    });
}

/// Requesting a value mid-scope returns the oracle value and leaves
/// subsequent recordings batchable.
#[test]
fn mid_scope_materialization() {
    criterion("mid-scope-materialization", || {
        let model = TreeLstm::new(TreeLstmConfig::small(32), 8);
        let tree = |base: i64| {
            TreeNode::internal(vec![
                TreeNode::leaf(base),
                TreeNode::internal(vec![TreeNode::leaf(base + 1), TreeNode::leaf(base + 2)]),
            ])
        };

        // Baseline: launches of one tree alone.
        let single = {
            let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
                .map_err(|e| e.to_string())?;
            let bound = model.bind(&scope).map_err(|e| e.to_string())?;
            bound
                .encode_tree(&scope, &tree(0))
                .map_err(|e| e.to_string())?;
            scope
                .close()
                .map_err(|e| e.to_string())?
                .stats
                .main_launches
        };

        let scope = BatchingScope::open_with_cache(Arc::new(PlanCache::new()))
            .map_err(|e| e.to_string())?;
        let bound = model.bind(&scope).map_err(|e| e.to_string())?;
        let (ha, _) = bound
            .encode_tree(&scope, &tree(0))
            .map_err(|e| e.to_string())?;

        // Force a value mid-scope; it must match the eager oracle.
        let mid = ha.value().map_err(|e| e.to_string())?;
        let (oracle_h, _) = eager::encode_tree(&model, &tree(0)).map_err(|e| e.to_string())?;
        let dev = rel_deviation(&mid, &oracle_h);
        if dev > EQUIVALENCE_TOL {
            return Err(format!("mid-scope value deviates by {dev:.2e}"));
        }
        let after_first = scope.stats().main_launches;
        if after_first != single {
            return Err(format!(
                "first wave launched {after_first}, single-tree baseline {single}"
            ));
        }

        // Later recordings still batch among themselves: two structurally
        // identical trees cost one tree's launches.
        bound
            .encode_tree(&scope, &tree(3))
            .map_err(|e| e.to_string())?;
        bound
            .encode_tree(&scope, &tree(6))
            .map_err(|e| e.to_string())?;
        let report = scope.close().map_err(|e| e.to_string())?;
        let second_wave = report.stats.main_launches - after_first;
        if second_wave != single {
            return Err(format!(
                "post-materialization wave launched {second_wave}, expected {single}"
            ));
        }
        if report.flushes != 2 {
            return Err(format!("expected 2 flushes, got {}", report.flushes));
        }
        Ok(format!(
            "mid-scope value exact; both waves at {single} main launches"
        ))
    });
}
