//! Recorded nodes and their batching-equivalence signatures.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use crate::tensor::EwiseKind;

/// Scope-local node identifier; ids are assigned in recording order, so every
/// input id is smaller than its consumer's id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Process-global parameter identity. Two parameters holding equal values are
/// still distinct; batching never merges nodes fed by different parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u64);

/// Process-global interned shape. Signature keys compare and hash shape ids
/// instead of shape vectors; ids are stable across scopes, so cached plans
/// from one scope match structurally identical tables of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShapeId(u32);

fn interner() -> &'static Mutex<HashMap<Vec<usize>, u32>> {
    static INTERNER: OnceLock<Mutex<HashMap<Vec<usize>, u32>>> = OnceLock::new();
    INTERNER.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn intern_shape(shape: &[usize]) -> ShapeId {
    let mut map = interner().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(&id) = map.get(shape) {
        return ShapeId(id);
    }
    let id = map.len() as u32;
    map.insert(shape.to_vec(), id);
    ShapeId(id)
}

/// Kind tag of a recorded node, attributes included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Constant,
    Parameter(ParamId),
    Matmul {
        transpose_a: bool,
        transpose_b: bool,
    },
    Ewise(EwiseKind),
    Stack,
    SliceRow {
        index: usize,
    },
    ReduceSum,
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Constant | NodeKind::Parameter(_))
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Constant => write!(f, "constant"),
            NodeKind::Parameter(_) => write!(f, "parameter"),
            NodeKind::Matmul {
                transpose_a,
                transpose_b,
            } => match (transpose_a, transpose_b) {
                (false, false) => write!(f, "matmul"),
                (ta, tb) => write!(f, "matmul[ta={ta},tb={tb}]"),
            },
            NodeKind::Ewise(kind) => write!(f, "ewise.{kind}"),
            NodeKind::Stack => write!(f, "stack"),
            NodeKind::SliceRow { index } => write!(f, "slice_row[{index}]"),
            NodeKind::ReduceSum => write!(f, "reduce_sum"),
        }
    }
}

/// Batching-equivalence key. Nodes at the same depth with equal keys execute
/// as one batched kernel and produce, per sample, the same results as
/// separate execution.
///
/// Per input position the key carries the input's shape and, when the input
/// is a parameter, its identity; arity is the length of that list. Leaves get
/// degenerate keys: constants are keyed by shape alone (their values never
/// affect grouping), parameters carry their identity inside the kind tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignatureKey {
    kind: NodeKind,
    inputs: Vec<(Option<ParamId>, ShapeId)>,
}

impl SignatureKey {
    pub(crate) fn new(kind: NodeKind, inputs: Vec<(Option<ParamId>, ShapeId)>) -> Self {
        Self { kind, inputs }
    }

    pub(crate) fn leaf(kind: NodeKind, shape: ShapeId) -> Self {
        Self {
            kind,
            inputs: vec![(None, shape)],
        }
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn arity(&self) -> usize {
        self.inputs.len()
    }
}

/// Identifier of a subgraph block opened with `begin_block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub(crate) u32);

#[derive(Debug, Clone)]
pub(crate) struct BlockInfo {
    pub tag: String,
    /// Structural fingerprint: number of distinct operation nodes created
    /// before the block that nodes inside it consume. For a tree-LSTM cell
    /// this counts the child states, so it separates arities.
    pub fingerprint: u64,
    pub first_node: u32,
    pub node_count: usize,
    pub closed: bool,
}

/// One recorded operation (or leaf entry) in a scope.
#[derive(Debug, Clone)]
pub(crate) struct OpNode {
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
    pub depth: usize,
    pub shape: Vec<usize>,
    pub shape_id: ShapeId,
    pub block: Option<BlockId>,
}
