//! Tree corpora: the in-memory tree type, line-oriented JSON ingestion, and
//! a seeded synthetic generator.
//!
//! One tree per line: `{"tokens": [...], "parents": [...], "label": 0.42}`.
//! `parents[i]` is the node's parent index (`-1` for the root); children keep
//! their positional order. Leaves carry vocabulary indices, internal nodes
//! use token `-1`. The optional label is consumed by training benchmarks,
//! which pair consecutive records.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Arity bound applied by the readers and the generator by default.
pub const DEFAULT_MAX_ARITY: usize = 9;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// A rooted ordered tree; arity 0 marks a leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub token: i64,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(token: i64) -> Self {
        Self {
            token,
            children: Vec::new(),
        }
    }

    pub fn internal(children: Vec<TreeNode>) -> Self {
        Self {
            token: -1,
            children,
        }
    }

    pub fn arity(&self) -> usize {
        self.children.len()
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(TreeNode::node_count)
            .sum::<usize>()
    }

    /// Distance from the leaves: 0 for a leaf, `1 + max(children)` otherwise.
    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(TreeNode::depth)
            .max()
            .map_or(0, |d| d + 1)
    }

    pub fn max_arity(&self) -> usize {
        self.children
            .iter()
            .map(TreeNode::max_arity)
            .max()
            .map_or(0, |m| m)
            .max(self.arity())
    }

    pub fn max_token(&self) -> i64 {
        self.children
            .iter()
            .map(TreeNode::max_token)
            .max()
            .map_or(self.token, |m| m.max(self.token))
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            write!(f, "{}", self.token)
        } else {
            write!(f, "(")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub tree: TreeNode,
    pub label: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    tokens: Vec<i64>,
    parents: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<f64>,
}

/// Flattens a tree into preorder token/parent arrays; the inverse of
/// [`tree_from_arrays`].
pub fn tree_to_arrays(tree: &TreeNode) -> (Vec<i64>, Vec<i64>) {
    fn walk(node: &TreeNode, parent: i64, tokens: &mut Vec<i64>, parents: &mut Vec<i64>) {
        let index = tokens.len() as i64;
        tokens.push(node.token);
        parents.push(parent);
        for child in &node.children {
            walk(child, index, tokens, parents);
        }
    }
    let mut tokens = Vec::with_capacity(tree.node_count());
    let mut parents = Vec::with_capacity(tree.node_count());
    walk(tree, -1, &mut tokens, &mut parents);
    (tokens, parents)
}

/// Rebuilds a tree from token/parent arrays, validating that they encode a
/// single rooted tree with in-range indices and bounded arity.
pub fn tree_from_arrays(
    tokens: &[i64],
    parents: &[i64],
    max_arity: usize,
) -> Result<TreeNode, String> {
    let n = tokens.len();
    if n == 0 {
        return Err("empty tree".into());
    }
    if parents.len() != n {
        return Err(format!(
            "tokens and parents lengths differ: {} vs {}",
            n,
            parents.len()
        ));
    }
    let mut root = None;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &p) in parents.iter().enumerate() {
        if p == -1 {
            if root.replace(i).is_some() {
                return Err("more than one root".into());
            }
        } else {
            let p = usize::try_from(p).map_err(|_| format!("negative parent at node {i}"))?;
            if p >= n {
                return Err(format!("parent index {p} out of range at node {i}"));
            }
            if p == i {
                return Err(format!("node {i} is its own parent"));
            }
            children[p].push(i);
        }
    }
    let root = root.ok_or("no root (parent -1) found")?;

    // Reachability from the root rules out cycles among non-root nodes.
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    let mut reached = 0usize;
    while let Some(i) = stack.pop() {
        if seen[i] {
            return Err(format!("cycle detected at node {i}"));
        }
        seen[i] = true;
        reached += 1;
        stack.extend(children[i].iter().copied());
    }
    if reached != n {
        return Err(format!("{} node(s) unreachable from the root", n - reached));
    }

    fn build(
        i: usize,
        tokens: &[i64],
        children: &[Vec<usize>],
        max_arity: usize,
    ) -> Result<TreeNode, String> {
        if children[i].len() > max_arity {
            return Err(format!(
                "node {i} has {} children, limit is {max_arity}",
                children[i].len()
            ));
        }
        Ok(TreeNode {
            token: tokens[i],
            children: children[i]
                .iter()
                .map(|&c| build(c, tokens, children, max_arity))
                .collect::<Result<_, _>>()?,
        })
    }
    build(root, tokens, &children, max_arity)
}

/// Reads a JSONL corpus; parse failures carry their 1-based line number.
pub fn read_corpus(path: &Path, max_arity: usize) -> Result<Vec<CorpusRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Line {
            line: lineno,
            message: e.to_string(),
        })?;
        let tree = tree_from_arrays(&raw.tokens, &raw.parents, max_arity).map_err(|message| {
            CorpusError::Line {
                line: lineno,
                message,
            }
        })?;
        records.push(CorpusRecord {
            tree,
            label: raw.label,
        });
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        let (tokens, parents) = tree_to_arrays(&record.tree);
        let raw = RawRecord {
            tokens,
            parents,
            label: record.label,
        };
        serde_json::to_writer(&mut out, &raw).map_err(|e| CorpusError::Line {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Shape of the arity distribution used by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArityDist {
    /// Arity uniform over `0..=max_arity` at every level. Grows fast; meant
    /// for small bounds.
    Uniform,
    /// Parse-tree-like skew: mostly unary/binary nodes, a thinning tail up
    /// to `max_arity`, and a leaf probability that rises with depth.
    Skewed,
}

impl std::str::FromStr for ArityDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(ArityDist::Uniform),
            "skewed" => Ok(ArityDist::Skewed),
            other => Err(format!("unknown arity distribution `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub trees: usize,
    pub max_arity: usize,
    pub max_depth: usize,
    pub vocab: usize,
    pub seed: u64,
    pub dist: ArityDist,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            trees: 16,
            max_arity: DEFAULT_MAX_ARITY,
            max_depth: 7,
            vocab: 64,
            seed: 0,
            dist: ArityDist::Skewed,
        }
    }
}

// Weights for arities 1..=9 given an internal node (skewed mode).
const SKEW_WEIGHTS: [f64; 9] = [0.30, 0.33, 0.17, 0.08, 0.05, 0.03, 0.02, 0.013, 0.007];

/// Deterministically generates a labeled corpus; the same config yields the
/// same records byte for byte.
pub fn generate_corpus(cfg: &GenConfig) -> Vec<CorpusRecord> {
    assert!(cfg.vocab > 0, "vocabulary must be non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.trees)
        .map(|_| {
            let tree = gen_tree(&mut rng, cfg, 0);
            let label = (rng.random_range(0.0f64..1.0) * 1e6).round() / 1e6;
            CorpusRecord {
                tree,
                label: Some(label),
            }
        })
        .collect()
}

fn gen_tree(rng: &mut ChaCha8Rng, cfg: &GenConfig, depth: usize) -> TreeNode {
    let arity = if depth >= cfg.max_depth {
        0
    } else {
        match cfg.dist {
            ArityDist::Uniform => rng.random_range(0..=cfg.max_arity),
            ArityDist::Skewed => {
                let leaf_prob = (0.25 + 0.12 * depth as f64).min(0.97);
                if rng.random_range(0.0..1.0) < leaf_prob {
                    0
                } else {
                    sample_skewed_arity(rng, cfg.max_arity)
                }
            }
        }
    };
    if arity == 0 {
        TreeNode::leaf(rng.random_range(0..cfg.vocab) as i64)
    } else {
        TreeNode::internal((0..arity).map(|_| gen_tree(rng, cfg, depth + 1)).collect())
    }
}

fn sample_skewed_arity(rng: &mut ChaCha8Rng, max_arity: usize) -> usize {
    let n = max_arity.min(SKEW_WEIGHTS.len());
    let total: f64 = SKEW_WEIGHTS[..n].iter().sum();
    let mut draw = rng.random_range(0.0..total);
    for (i, w) in SKEW_WEIGHTS[..n].iter().enumerate() {
        if draw < *w {
            return i + 1;
        }
        draw -= w;
    }
    n
}
