//! Granularity analysis: depth-matched batching simulated at kernel level
//! versus subgraph (cell) level over a tree corpus.
//!
//! The corpus is processed in consecutive chunks of a fixed batch size.
//! Within a chunk, units at the same depth with equal signatures batch into
//! one launch.
//!
//! * Kernel granularity records each chunk into a real batching scope and
//!   counts nodes and (depth, signature) slots — the engine itself is the
//!   single source of truth, so the simulation cannot drift from what
//!   execution would launch.
//! * Subgraph granularity treats a whole cell as the unit with signature
//!   (tree depth, arity): cells with different child counts are not
//!   isomorphic and cannot share a batch.
//!
//! The reported ratio is launches-without-batching over launches-with.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::corpus::TreeNode;
use crate::graph::{BatchingScope, GraphError};
use crate::treelstm::{TreeLstm, TreeLstmConfig};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Kernel,
    Subgraph,
}

impl Granularity {
    pub fn name(self) -> &'static str {
        match self {
            Granularity::Kernel => "kernel",
            Granularity::Subgraph => "subgraph",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kernel" => Ok(Granularity::Kernel),
            "subgraph" => Ok(Granularity::Subgraph),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// Per-depth slice of the simulation: `units` launches without batching,
/// `groups` launches with. Kernel mode buckets by graph depth, subgraph mode
/// by tree depth (distance from the leaves).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepthBucket {
    pub depth: usize,
    pub units: u64,
    pub groups: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub schema: u32,
    pub granularity: String,
    pub batch_size: usize,
    pub chunks: usize,
    /// Launches if nothing batches: one per unit.
    pub no_batch: u64,
    /// Launches with depth-matched batching: one per group.
    pub batch: u64,
    pub ratio: f64,
    pub per_depth: Vec<DepthBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub schema: u32,
    pub kernel: SimReport,
    pub subgraph: SimReport,
    /// Kernel ratio over subgraph ratio.
    pub ratio_gap: f64,
}

/// Simulates depth-matched batching over the corpus in chunks of
/// `batch_size` trees.
pub fn simulate(
    corpus: &[TreeNode],
    granularity: Granularity,
    batch_size: usize,
) -> Result<SimReport, SimError> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(SimError::ZeroBatch);
    }

    let mut no_batch = 0u64;
    let mut batch = 0u64;
    let mut per_depth: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut chunks = 0usize;

    for chunk in corpus.chunks(batch_size) {
        chunks += 1;
        match granularity {
            Granularity::Kernel => kernel_chunk(chunk, &mut no_batch, &mut batch, &mut per_depth)?,
            Granularity::Subgraph => {
                subgraph_chunk(chunk, &mut no_batch, &mut batch, &mut per_depth)
            }
        }
    }

    Ok(SimReport {
        schema: 1,
        granularity: granularity.name().to_string(),
        batch_size,
        chunks,
        no_batch,
        batch,
        ratio: no_batch as f64 / batch as f64,
        per_depth: per_depth
            .into_iter()
            .map(|(depth, (units, groups))| DepthBucket {
                depth,
                units,
                groups,
            })
            .collect(),
    })
}

/// Records the chunk into a fresh scope — recording only, nothing executes —
/// and counts operation nodes and slots.
fn kernel_chunk(
    chunk: &[TreeNode],
    no_batch: &mut u64,
    batch: &mut u64,
    per_depth: &mut BTreeMap<usize, (u64, u64)>,
) -> Result<(), SimError> {
    let vocab = chunk
        .iter()
        .map(|t| t.max_token())
        .max()
        .map_or(1, |m| (m + 1).max(1)) as usize;
    let model = TreeLstm::zeroed(TreeLstmConfig::small(vocab));
    let scope = BatchingScope::open()?;
    let bound = model.bind(&scope)?;
    for tree in chunk {
        bound.encode_tree(&scope, tree)?;
    }
    *no_batch += scope.op_node_count() as u64;
    *batch += scope.op_slot_count() as u64;
    for (depth, nodes, slots) in scope.depth_histogram() {
        let entry = per_depth.entry(depth).or_insert((0, 0));
        entry.0 += nodes as u64;
        entry.1 += slots as u64;
    }
    // The scope is dropped without closing: the pending table was only
    // recorded for counting.
    Ok(())
}

fn subgraph_chunk(
    chunk: &[TreeNode],
    no_batch: &mut u64,
    batch: &mut u64,
    per_depth: &mut BTreeMap<usize, (u64, u64)>,
) {
    let mut groups: HashSet<(usize, usize)> = HashSet::new();
    let mut units_at: BTreeMap<usize, u64> = BTreeMap::new();

    fn walk(
        tree: &TreeNode,
        groups: &mut HashSet<(usize, usize)>,
        units_at: &mut BTreeMap<usize, u64>,
    ) -> usize {
        let depth = tree
            .children
            .iter()
            .map(|c| walk(c, groups, units_at))
            .max()
            .map_or(0, |d| d + 1);
        groups.insert((depth, tree.arity()));
        *units_at.entry(depth).or_insert(0) += 1;
        depth
    }

    for tree in chunk {
        walk(tree, &mut groups, &mut units_at);
    }

    for (depth, units) in &units_at {
        let group_count = groups.iter().filter(|(d, _)| d == depth).count() as u64;
        let entry = per_depth.entry(*depth).or_insert((0, 0));
        entry.0 += units;
        entry.1 += group_count;
    }
    *no_batch += units_at.values().sum::<u64>();
    *batch += groups.len() as u64;
}

/// Runs both granularities and pairs the reports.
pub fn compare(corpus: &[TreeNode], batch_size: usize) -> Result<CompareReport, SimError> {
    let kernel = simulate(corpus, Granularity::Kernel, batch_size)?;
    let subgraph = simulate(corpus, Granularity::Subgraph, batch_size)?;
    let ratio_gap = kernel.ratio / subgraph.ratio;
    Ok(CompareReport {
        schema: 1,
        kernel,
        subgraph,
        ratio_gap,
    })
}

/// Aligned text table with the no-batch/batch/ratio rows side by side.
pub fn render_table(report: &CompareReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>14} {:>14}\n",
        "counts", "kernel", "subgraph"
    ));
    out.push_str(&format!(
        "{:<10} {:>14} {:>14}\n",
        "no-batch", report.kernel.no_batch, report.subgraph.no_batch
    ));
    out.push_str(&format!(
        "{:<10} {:>14} {:>14}\n",
        "batch", report.kernel.batch, report.subgraph.batch
    ));
    out.push_str(&format!(
        "{:<10} {:>13.1}x {:>13.1}x\n",
        "ratio", report.kernel.ratio, report.subgraph.ratio
    ));
    out.push_str(&format!(
        "ratio gap (kernel/subgraph): {:.2}x\n",
        report.ratio_gap
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GenConfig};
    use crate::graph::NodeKind;
    use std::collections::HashMap;

    fn chain(height: usize) -> TreeNode {
        let mut node = TreeNode::leaf(1);
        for _ in 0..height {
            node = TreeNode::internal(vec![node]);
        }
        node
    }

    /// Re-derives the (depth, signature) grouping from raw node facts,
    /// independently of the depth-table bookkeeping.
    fn brute_force_slots(scope: &BatchingScope) -> (usize, usize) {
        use crate::graph::ParamId;
        let dump = scope.node_dump();
        let mut slots: HashMap<(usize, NodeKind, Vec<Option<ParamId>>, Vec<Vec<usize>>), usize> =
            HashMap::new();
        let mut ops = 0;
        for node in &dump {
            if matches!(node.kind, NodeKind::Constant | NodeKind::Parameter(_)) {
                continue;
            }
            ops += 1;
            let param_ids: Vec<Option<ParamId>> = node
                .inputs
                .iter()
                .map(|&i| match dump[i].kind {
                    NodeKind::Parameter(pid) => Some(pid),
                    _ => None,
                })
                .collect();
            let shapes: Vec<Vec<usize>> =
                node.inputs.iter().map(|&i| dump[i].shape.clone()).collect();
            *slots
                .entry((node.depth, node.kind, param_ids, shapes))
                .or_insert(0) += 1;
        }
        (ops, slots.len())
    }

    #[test]
    fn kernel_counts_match_engine_and_brute_force() {
        let corpus: Vec<TreeNode> = generate_corpus(&GenConfig {
            trees: 12,
            max_arity: 3,
            max_depth: 4,
            vocab: 16,
            seed: 5,
            ..GenConfig::default()
        })
        .into_iter()
        .map(|r| r.tree)
        .collect();

        let report = simulate(&corpus, Granularity::Kernel, corpus.len()).unwrap();

        // Independent recount of nodes and slots.
        let vocab = 16;
        let model = TreeLstm::zeroed(TreeLstmConfig::small(vocab));
        let scope = BatchingScope::open().unwrap();
        let bound = model.bind(&scope).unwrap();
        for tree in &corpus {
            bound.encode_tree(&scope, tree).unwrap();
        }
        let (ops, slots) = brute_force_slots(&scope);
        assert_eq!(report.no_batch, ops as u64);
        assert_eq!(report.batch, slots as u64);

        // And consistency with what execution would launch.
        let report_close = scope.close().unwrap();
        assert_eq!(report_close.stats.main_launches, report.batch);
    }

    #[test]
    fn identical_chains_batch_to_single_chain_cost() {
        let one: Vec<TreeNode> = vec![chain(4)];
        let many: Vec<TreeNode> = (0..8).map(|_| chain(4)).collect();

        let single = simulate(&one, Granularity::Kernel, 8).unwrap();
        let batched = simulate(&many, Granularity::Kernel, 8).unwrap();

        assert_eq!(batched.batch, single.batch);
        assert_eq!(batched.no_batch, 8 * single.no_batch);
        let expected_ratio = batched.no_batch as f64 / single.batch as f64;
        assert!((batched.ratio - expected_ratio).abs() < 1e-12);
        assert!(batched.ratio >= 8.0);
    }

    #[test]
    fn single_cell_tree_has_subgraph_ratio_one() {
        let corpus = vec![TreeNode::leaf(0)];
        let sub = simulate(&corpus, Granularity::Subgraph, 4).unwrap();
        assert_eq!(sub.no_batch, 1);
        assert_eq!(sub.batch, 1);
        assert_eq!(sub.ratio, 1.0);
        let kernel = simulate(&corpus, Granularity::Kernel, 4).unwrap();
        assert!(kernel.ratio >= 1.0);
    }

    #[test]
    fn subgraph_counts_units_and_arity_groups() {
        // Two trees: (leaf leaf) and (leaf leaf leaf) — at tree depth 0 all
        // five leaves share one group; at depth 1 the arity-2 and arity-3
        // roots cannot batch.
        let corpus = vec![
            TreeNode::internal(vec![TreeNode::leaf(0), TreeNode::leaf(1)]),
            TreeNode::internal(vec![
                TreeNode::leaf(2),
                TreeNode::leaf(3),
                TreeNode::leaf(4),
            ]),
        ];
        let sub = simulate(&corpus, Granularity::Subgraph, 2).unwrap();
        assert_eq!(sub.no_batch, 7);
        assert_eq!(sub.batch, 3);
        assert_eq!(
            sub.per_depth[0],
            DepthBucket {
                depth: 0,
                units: 5,
                groups: 1
            }
        );
        assert_eq!(
            sub.per_depth[1],
            DepthBucket {
                depth: 1,
                units: 2,
                groups: 2
            }
        );
    }

    #[test]
    fn mixed_arities_favor_kernel_granularity() {
        let corpus = vec![
            TreeNode::internal(vec![TreeNode::leaf(0), TreeNode::leaf(1)]),
            TreeNode::internal(vec![
                TreeNode::leaf(2),
                TreeNode::leaf(3),
                TreeNode::leaf(4),
            ]),
        ];
        let report = compare(&corpus, 2).unwrap();
        assert!(
            report.kernel.ratio > report.subgraph.ratio,
            "kernel {} vs subgraph {}",
            report.kernel.ratio,
            report.subgraph.ratio
        );
        assert!(report.ratio_gap > 1.0);
    }

    #[test]
    fn splitting_a_batch_never_reduces_batch_count() {
        let corpus: Vec<TreeNode> = generate_corpus(&GenConfig {
            trees: 24,
            max_arity: 4,
            max_depth: 4,
            vocab: 8,
            seed: 9,
            ..GenConfig::default()
        })
        .into_iter()
        .map(|r| r.tree)
        .collect();

        for granularity in [Granularity::Kernel, Granularity::Subgraph] {
            let whole = simulate(&corpus, granularity, 24).unwrap();
            let halves = simulate(&corpus, granularity, 12).unwrap();
            let quarters = simulate(&corpus, granularity, 6).unwrap();
            assert!(halves.batch >= whole.batch);
            assert!(quarters.batch >= halves.batch);
            assert_eq!(whole.no_batch, halves.no_batch);
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            simulate(&[], Granularity::Kernel, 4),
            Err(SimError::EmptyCorpus)
        ));
    }

    #[test]
    fn table_renders_all_rows() {
        let corpus = vec![TreeNode::internal(vec![
            TreeNode::leaf(0),
            TreeNode::leaf(1),
        ])];
        let report = compare(&corpus, 1).unwrap();
        let table = render_table(&report);
        assert!(table.contains("no-batch"));
        assert!(table.contains("kernel"));
        assert!(table.contains("subgraph"));
        assert!(table.contains("ratio gap"));
    }
}
