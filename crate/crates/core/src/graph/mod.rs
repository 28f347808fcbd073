//! Lazy recording of tensor programs into a batching scope.
//!
//! Inside an open [`BatchingScope`], operations on [`LazyTensor`] handles do
//! not execute; each call records a node into a depth-indexed lookup table
//! (depth 0 for constants and parameters, `1 + max(input depths)` otherwise)
//! under a [`SignatureKey`] built from the operation kind, its attributes,
//! the identities of parameter inputs, and the input shapes. Same-depth nodes
//! with equal keys are independent of each other and executable as one
//! batched kernel.
//!
//! Requesting a value ([`LazyTensor::value`]) or closing the scope flushes
//! every pending node through the batch scheduler. Shape inference runs at
//! record time, so signatures are complete before any scheduling happens.

mod node;
mod table;

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::ThreadId;

pub(crate) use node::{intern_shape, BlockInfo, OpNode};
pub use node::{BlockId, NodeId, NodeKind, ParamId, ShapeId, SignatureKey};
pub(crate) use table::DepthTable;

use crate::scheduler::{self, ExecStats, PlanCache, PlanSummary};
use crate::tensor::{
    ewise_shape, reduce_shape, sample_matmul_shape, slice_row_shape, stack_shape, EwiseKind,
    Tensor, TensorError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("a batching scope is already open on this thread")]
    NestedScope,
    #[error("scope is closed")]
    ScopeClosed,
    #[error("input belongs to a different scope")]
    ForeignInput,
    #[error("end_block without a matching begin_block")]
    BlockUnderflow,
    #[error("{0} block(s) still open at scope close")]
    UnclosedBlocks(usize),
    #[error("constants and parameters are not recordable operations")]
    InvalidRecordKind,
    #[error("loss must be scalar-shaped, got {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("gradient through node {node} is unsupported: {reason}")]
    GradUnsupported { node: usize, reason: String },
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: i64, vocab: usize },
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("execution of node {node} ({kind}) failed: {source}")]
    Exec {
        node: usize,
        kind: String,
        source: TensorError,
    },
    #[error("internal invariant violated: {0}")]
    Internal(&'static str),
}

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

/// A named, trainable tensor with a process-global identity.
///
/// Identity — not value — is what the signature machinery compares: binding
/// the same `Param` twice in one scope yields the same depth-0 node, and two
/// params that happen to hold equal values never share batches.
#[derive(Debug, Clone)]
pub struct Param {
    id: ParamId,
    name: String,
    value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            id: ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            value,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Replaces the value; the shape is fixed at construction.
    pub fn set_value(&mut self, value: Tensor) -> Result<(), TensorError> {
        if value.shape() != self.value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set_value",
                lhs: self.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.value = value;
        Ok(())
    }
}

thread_local! {
    static SCOPE_OPEN: Cell<bool> = const { Cell::new(false) };
}

#[derive(Default)]
pub struct ScopeOptions {
    /// Plan cache to use; `None` selects the process-wide default cache.
    pub cache: Option<Arc<PlanCache>>,
    /// Diagnostic mode: stack shared operands instead of broadcasting them.
    /// Results must be identical either way.
    pub force_stack_broadcast: bool,
}

pub(crate) struct ScopeState {
    pub nodes: Vec<OpNode>,
    pub results: Vec<Option<Tensor>>,
    pub table: DepthTable,
    pub pending: Vec<NodeId>,
    pub open: bool,
    owner: ThreadId,
    blocks: Vec<BlockInfo>,
    block_stack: Vec<BlockId>,
    params: HashMap<ParamId, NodeId>,
    zero_consts: HashMap<Vec<usize>, NodeId>,
    ones_consts: HashMap<Vec<usize>, NodeId>,
    op_nodes: usize,
    pub cache: Arc<PlanCache>,
    pub force_stack_broadcast: bool,
    pub stats: ExecStats,
    pub flushes: u32,
    pub plans: Vec<PlanSummary>,
}

pub(crate) struct ScopeShared {
    state: Mutex<ScopeState>,
}

impl ScopeShared {
    pub(crate) fn lock(&self) -> MutexGuard<'_, ScopeState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Handle to a not-yet-computed tensor recorded in a scope.
///
/// Forcing it with [`LazyTensor::value`] flushes all pending work in the
/// owning scope; afterwards the handle returns its cached value without
/// launching anything.
#[derive(Clone)]
pub struct LazyTensor {
    scope: Arc<ScopeShared>,
    id: NodeId,
    shape: Vec<usize>,
    depth: usize,
}

impl std::fmt::Debug for LazyTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "LazyTensor(node {}, shape {:?}, depth {})",
            self.id.index(),
            self.shape,
            self.depth
        )
    }
}

/// A dynamic-batching scope: owns the depth table, defers every recorded
/// computation, and flushes through the batch scheduler at materialization
/// points and on [`close`](BatchingScope::close).
///
/// Scopes do not nest: one open scope per thread.
pub struct BatchingScope {
    shared: Arc<ScopeShared>,
}

/// Returned by [`BatchingScope::close`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloseReport {
    pub stats: ExecStats,
    pub flushes: u32,
}

impl BatchingScope {
    /// Opens a scope with the process-default plan cache.
    pub fn open() -> Result<Self, GraphError> {
        Self::open_with(ScopeOptions::default())
    }

    pub fn open_with_cache(cache: Arc<PlanCache>) -> Result<Self, GraphError> {
        Self::open_with(ScopeOptions {
            cache: Some(cache),
            ..ScopeOptions::default()
        })
    }

    pub fn open_with(options: ScopeOptions) -> Result<Self, GraphError> {
        SCOPE_OPEN.with(|flag| {
            if flag.get() {
                Err(GraphError::NestedScope)
            } else {
                flag.set(true);
                Ok(())
            }
        })?;
        let state = ScopeState {
            nodes: Vec::new(),
            results: Vec::new(),
            table: DepthTable::default(),
            pending: Vec::new(),
            open: true,
            owner: std::thread::current().id(),
            blocks: Vec::new(),
            block_stack: Vec::new(),
            params: HashMap::new(),
            zero_consts: HashMap::new(),
            ones_consts: HashMap::new(),
            op_nodes: 0,
            cache: options.cache.unwrap_or_else(scheduler::default_cache),
            force_stack_broadcast: options.force_stack_broadcast,
            stats: ExecStats::default(),
            flushes: 0,
            plans: Vec::new(),
        };
        Ok(Self {
            shared: Arc::new(ScopeShared {
                state: Mutex::new(state),
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, ScopeState> {
        self.shared.lock()
    }

    /// Records a constant leaf; its value is available immediately and no
    /// kernel ever launches for it.
    pub fn constant(&self, value: Tensor) -> Result<LazyTensor, GraphError> {
        let mut state = self.lock();
        if !state.open {
            return Err(GraphError::ScopeClosed);
        }
        let id = insert_leaf(&mut state, NodeKind::Constant, value);
        Ok(lazy_for(&self.shared, &state, id))
    }

    pub fn scalar(&self, value: f64) -> Result<LazyTensor, GraphError> {
        self.constant(Tensor::scalar(value))
    }

    /// Binds a parameter into the scope. Repeated binds of the same `Param`
    /// return the same node, which is what lets every cell of a model share
    /// one depth-0 entry per weight.
    pub fn parameter(&self, param: &Param) -> Result<LazyTensor, GraphError> {
        let mut state = self.lock();
        if !state.open {
            return Err(GraphError::ScopeClosed);
        }
        if let Some(&id) = state.params.get(&param.id()) {
            return Ok(lazy_for(&self.shared, &state, id));
        }
        let id = insert_leaf(
            &mut state,
            NodeKind::Parameter(param.id()),
            param.value().clone(),
        );
        state.params.insert(param.id(), id);
        Ok(lazy_for(&self.shared, &state, id))
    }

    /// A scope-shared all-zeros constant of the given shape.
    pub fn zero_const(&self, shape: &[usize]) -> Result<LazyTensor, GraphError> {
        zero_const_on(&self.shared, shape)
    }

    /// A scope-shared all-ones constant of the given shape.
    pub fn ones_const(&self, shape: &[usize]) -> Result<LazyTensor, GraphError> {
        ones_const_on(&self.shared, shape)
    }

    /// Records one operation node: infers the output shape, assigns
    /// `depth = 1 + max(input depths)`, files the node in the depth table
    /// under its signature, and launches nothing.
    pub fn record(&self, kind: NodeKind, inputs: &[&LazyTensor]) -> Result<LazyTensor, GraphError> {
        record_on(&self.shared, kind, inputs)
    }

    /// Stacks same-shaped handles on a new leading axis.
    pub fn stack(&self, parts: &[&LazyTensor]) -> Result<LazyTensor, GraphError> {
        self.record(NodeKind::Stack, parts)
    }

    /// Elementwise sum of any number of same-shaped handles; a single kernel
    /// regardless of arity, with the arity part of the signature.
    pub fn reduce_sum(&self, parts: &[&LazyTensor]) -> Result<LazyTensor, GraphError> {
        self.record(NodeKind::ReduceSum, parts)
    }

    /// Opens a subgraph block; nodes recorded until the matching
    /// [`end_block`](Self::end_block) carry the block's tag. Blocks nest.
    pub fn begin_block(&self, tag: &str) -> Result<(), GraphError> {
        let mut state = self.lock();
        if !state.open {
            return Err(GraphError::ScopeClosed);
        }
        let id = BlockId(state.blocks.len() as u32);
        let first_node = state.nodes.len() as u32;
        state.blocks.push(BlockInfo {
            tag: tag.to_string(),
            fingerprint: 0,
            first_node,
            node_count: 0,
            closed: false,
        });
        state.block_stack.push(id);
        Ok(())
    }

    /// Closes the innermost block and computes its structural fingerprint:
    /// the number of distinct earlier operation nodes its contents consume.
    pub fn end_block(&self) -> Result<(), GraphError> {
        let mut state = self.lock();
        if !state.open {
            return Err(GraphError::ScopeClosed);
        }
        let id = state.block_stack.pop().ok_or(GraphError::BlockUnderflow)?;
        let first = state.blocks[id.0 as usize].first_node;
        let end = state.nodes.len() as u32;
        let mut external = std::collections::HashSet::new();
        let mut ops = 0usize;
        for idx in first..end {
            if state.nodes[idx as usize].kind.is_leaf() {
                continue;
            }
            ops += 1;
            for input in &state.nodes[idx as usize].inputs {
                if input.0 < first && !state.nodes[input.index()].kind.is_leaf() {
                    external.insert(*input);
                }
            }
        }
        let info = &mut state.blocks[id.0 as usize];
        info.fingerprint = external.len() as u64;
        info.node_count = ops;
        info.closed = true;
        Ok(())
    }

    /// Flushes all pending nodes through the scheduler and closes the scope.
    /// After this every recorded node has a result.
    pub fn close(&self) -> Result<CloseReport, GraphError> {
        let mut state = self.lock();
        if !state.open {
            return Err(GraphError::ScopeClosed);
        }
        if !state.block_stack.is_empty() {
            return Err(GraphError::UnclosedBlocks(state.block_stack.len()));
        }
        scheduler::flush(&mut state)?;
        state.open = false;
        if state.owner == std::thread::current().id() {
            SCOPE_OPEN.with(|flag| flag.set(false));
        }
        Ok(CloseReport {
            stats: state.stats,
            flushes: state.flushes,
        })
    }

    pub fn is_open(&self) -> bool {
        self.lock().open
    }

    /// Execution statistics accumulated over all flushes so far.
    pub fn stats(&self) -> ExecStats {
        self.lock().stats
    }

    /// Recorded operation nodes (leaves excluded).
    pub fn op_node_count(&self) -> usize {
        self.lock().op_nodes
    }

    /// Non-empty (depth, signature) slots holding operation nodes.
    pub fn op_slot_count(&self) -> usize {
        self.lock().table.op_slot_count()
    }

    /// Per-depth (depth, nodes, slots) histogram over operation depths.
    pub fn depth_histogram(&self) -> Vec<(usize, usize, usize)> {
        let state = self.lock();
        state
            .table
            .rows()
            .filter(|(d, _)| *d > 0)
            .map(|(d, row)| {
                let nodes = row.slots.iter().map(|s| s.nodes.len()).sum();
                (d, nodes, row.slots.len())
            })
            .collect()
    }

    /// The signature key a node was filed under.
    pub fn signature_of(&self, x: &LazyTensor) -> Result<SignatureKey, GraphError> {
        if !Arc::ptr_eq(&x.scope, &self.shared) {
            return Err(GraphError::ForeignInput);
        }
        let state = self.lock();
        let node = &state.nodes[x.id.index()];
        if node.kind.is_leaf() {
            return Ok(SignatureKey::leaf(node.kind, node.shape_id));
        }
        Ok(signature_for(&state, node.kind, &node.inputs))
    }

    /// Hash of the table structure: per depth, the sorted multiset of
    /// (signature, group size). Recording the same program twice yields equal
    /// fingerprints.
    pub fn structure_fingerprint(&self) -> u64 {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let state = self.lock();
        let mut hasher = DefaultHasher::new();
        for (depth, row) in state.table.rows() {
            depth.hash(&mut hasher);
            let mut slots: Vec<(&SignatureKey, usize)> =
                row.slots.iter().map(|s| (&s.key, s.nodes.len())).collect();
            slots.sort();
            slots.hash(&mut hasher);
        }
        hasher.finish()
    }

    /// Summaries of recorded blocks, in creation order.
    pub fn block_summaries(&self) -> Vec<BlockSummary> {
        self.lock()
            .blocks
            .iter()
            .map(|b| BlockSummary {
                tag: b.tag.clone(),
                fingerprint: b.fingerprint,
                node_count: b.node_count,
            })
            .collect()
    }

    /// Step listings of the executed plans, one per flush.
    pub fn plan_summaries(&self) -> Vec<PlanSummary> {
        self.lock().plans.clone()
    }

    /// Raw per-node facts, for diagnostics and for re-deriving the grouping
    /// independently in tests.
    pub fn node_dump(&self) -> Vec<NodeDump> {
        let state = self.lock();
        state
            .nodes
            .iter()
            .enumerate()
            .map(|(index, node)| NodeDump {
                index,
                depth: node.depth,
                kind: node.kind,
                inputs: node.inputs.iter().map(|i| i.index()).collect(),
                shape: node.shape.clone(),
                block: node.block.map(|b| b.0),
            })
            .collect()
    }
}

/// One row of [`BatchingScope::node_dump`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDump {
    pub index: usize,
    pub depth: usize,
    pub kind: NodeKind,
    pub inputs: Vec<usize>,
    pub shape: Vec<usize>,
    /// Innermost block the node was recorded in, if any.
    pub block: Option<u32>,
}

impl Drop for BatchingScope {
    fn drop(&mut self) {
        let mut state = self.lock();
        if state.open {
            // Abandon pending work; an explicit close() is the supported path.
            state.open = false;
            if state.owner == std::thread::current().id() {
                SCOPE_OPEN.with(|flag| flag.set(false));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSummary {
    pub tag: String,
    pub fingerprint: u64,
    pub node_count: usize,
}

fn lazy_for(shared: &Arc<ScopeShared>, state: &ScopeState, id: NodeId) -> LazyTensor {
    let node = &state.nodes[id.index()];
    LazyTensor {
        scope: Arc::clone(shared),
        id,
        shape: node.shape.clone(),
        depth: node.depth,
    }
}

fn insert_leaf(state: &mut ScopeState, kind: NodeKind, value: Tensor) -> NodeId {
    let id = NodeId(state.nodes.len() as u32);
    let shape = value.shape().to_vec();
    let shape_id = intern_shape(&shape);
    state.nodes.push(OpNode {
        kind,
        inputs: Vec::new(),
        depth: 0,
        shape,
        shape_id,
        block: state.block_stack.last().copied(),
    });
    state.results.push(Some(value));
    state
        .table
        .insert(0, SignatureKey::leaf(kind, shape_id), id);
    id
}

pub(crate) fn zero_const_on(
    shared: &Arc<ScopeShared>,
    shape: &[usize],
) -> Result<LazyTensor, GraphError> {
    let mut state = shared.lock();
    if !state.open {
        return Err(GraphError::ScopeClosed);
    }
    if let Some(&id) = state.zero_consts.get(shape) {
        return Ok(lazy_for(shared, &state, id));
    }
    let id = insert_leaf(&mut state, NodeKind::Constant, Tensor::zeros(shape));
    state.zero_consts.insert(shape.to_vec(), id);
    Ok(lazy_for(shared, &state, id))
}

pub(crate) fn ones_const_on(
    shared: &Arc<ScopeShared>,
    shape: &[usize],
) -> Result<LazyTensor, GraphError> {
    let mut state = shared.lock();
    if !state.open {
        return Err(GraphError::ScopeClosed);
    }
    if let Some(&id) = state.ones_consts.get(shape) {
        return Ok(lazy_for(shared, &state, id));
    }
    let id = insert_leaf(&mut state, NodeKind::Constant, Tensor::ones(shape));
    state.ones_consts.insert(shape.to_vec(), id);
    Ok(lazy_for(shared, &state, id))
}

pub(crate) fn record_on(
    shared: &Arc<ScopeShared>,
    kind: NodeKind,
    inputs: &[&LazyTensor],
) -> Result<LazyTensor, GraphError> {
    if kind.is_leaf() {
        return Err(GraphError::InvalidRecordKind);
    }
    let mut state = shared.lock();
    if !state.open {
        return Err(GraphError::ScopeClosed);
    }
    for input in inputs {
        if !Arc::ptr_eq(&input.scope, shared) {
            return Err(GraphError::ForeignInput);
        }
    }
    let input_ids: Vec<NodeId> = inputs.iter().map(|t| t.id).collect();
    let shapes: Vec<&[usize]> = input_ids
        .iter()
        .map(|id| state.nodes[id.index()].shape.as_slice())
        .collect();
    let shape = infer_shape(kind, &shapes)?;
    let depth = 1 + input_ids
        .iter()
        .map(|id| state.nodes[id.index()].depth)
        .max()
        .ok_or(GraphError::Shape(TensorError::OperandCount {
            op: "record",
            expected: "at least 1",
            got: 0,
        }))?;
    debug_assert!(input_ids
        .iter()
        .all(|id| state.nodes[id.index()].depth < depth));

    let key = signature_for(&state, kind, &input_ids);
    let id = NodeId(state.nodes.len() as u32);
    let block = state.block_stack.last().copied();
    let shape_id = intern_shape(&shape);
    state.nodes.push(OpNode {
        kind,
        inputs: input_ids,
        depth,
        shape: shape.clone(),
        shape_id,
        block,
    });
    state.results.push(None);
    state.table.insert(depth, key, id);
    state.pending.push(id);
    state.op_nodes += 1;
    Ok(LazyTensor {
        scope: Arc::clone(shared),
        id,
        shape,
        depth,
    })
}

fn signature_for(state: &ScopeState, kind: NodeKind, inputs: &[NodeId]) -> SignatureKey {
    let inputs = inputs
        .iter()
        .map(|id| {
            let node = &state.nodes[id.index()];
            let param = match node.kind {
                NodeKind::Parameter(pid) => Some(pid),
                _ => None,
            };
            (param, node.shape_id)
        })
        .collect();
    SignatureKey::new(kind, inputs)
}

fn infer_shape(kind: NodeKind, shapes: &[&[usize]]) -> Result<Vec<usize>, GraphError> {
    let shape = match kind {
        NodeKind::Matmul {
            transpose_a,
            transpose_b,
        } => {
            if shapes.len() != 2 {
                return Err(TensorError::OperandCount {
                    op: "matmul",
                    expected: "2",
                    got: shapes.len(),
                }
                .into());
            }
            sample_matmul_shape(shapes[0], shapes[1], transpose_a, transpose_b)?
        }
        NodeKind::Ewise(kind) => ewise_shape(kind, shapes)?,
        NodeKind::Stack => stack_shape(shapes)?,
        NodeKind::SliceRow { index } => {
            if shapes.len() != 1 {
                return Err(TensorError::OperandCount {
                    op: "slice_row",
                    expected: "1",
                    got: shapes.len(),
                }
                .into());
            }
            slice_row_shape(shapes[0], index)?
        }
        NodeKind::ReduceSum => reduce_shape(shapes)?,
        NodeKind::Constant | NodeKind::Parameter(_) => return Err(GraphError::InvalidRecordKind),
    };
    Ok(shape)
}

impl LazyTensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_index(&self) -> usize {
        self.id.index()
    }

    pub(crate) fn id(&self) -> NodeId {
        self.id
    }

    pub(crate) fn scope_shared(&self) -> &Arc<ScopeShared> {
        &self.scope
    }

    pub(crate) fn from_parts(
        scope: Arc<ScopeShared>,
        id: NodeId,
        shape: Vec<usize>,
        depth: usize,
    ) -> Self {
        Self {
            scope,
            id,
            shape,
            depth,
        }
    }

    /// Materializes this handle: flushes every pending node in the scope on
    /// first use, then returns the cached value with no further launches.
    pub fn value(&self) -> Result<Tensor, GraphError> {
        let mut state = self.scope.lock();
        if let Some(t) = &state.results[self.id.index()] {
            return Ok(t.clone());
        }
        scheduler::flush(&mut state)?;
        state.results[self.id.index()]
            .clone()
            .ok_or(GraphError::Internal("flush left a node without a result"))
    }

    fn binary(&self, kind: EwiseKind, rhs: &LazyTensor) -> Result<LazyTensor, GraphError> {
        record_on(&self.scope, NodeKind::Ewise(kind), &[self, rhs])
    }

    fn unary(&self, kind: EwiseKind) -> Result<LazyTensor, GraphError> {
        record_on(&self.scope, NodeKind::Ewise(kind), &[self])
    }

    pub fn add(&self, rhs: &LazyTensor) -> Result<LazyTensor, GraphError> {
        self.binary(EwiseKind::Add, rhs)
    }

    pub fn sub(&self, rhs: &LazyTensor) -> Result<LazyTensor, GraphError> {
        self.binary(EwiseKind::Sub, rhs)
    }

    pub fn mul(&self, rhs: &LazyTensor) -> Result<LazyTensor, GraphError> {
        self.binary(EwiseKind::Mul, rhs)
    }

    pub fn sigmoid(&self) -> Result<LazyTensor, GraphError> {
        self.unary(EwiseKind::Sigmoid)
    }

    pub fn tanh(&self) -> Result<LazyTensor, GraphError> {
        self.unary(EwiseKind::Tanh)
    }

    pub fn abs(&self) -> Result<LazyTensor, GraphError> {
        self.unary(EwiseKind::Abs)
    }

    /// Per-sample matrix product (`[k]`- or `[m, k]`-shaped `self` against a
    /// `[k, n]` matrix).
    pub fn matmul(&self, rhs: &LazyTensor) -> Result<LazyTensor, GraphError> {
        record_on(
            &self.scope,
            NodeKind::Matmul {
                transpose_a: false,
                transpose_b: false,
            },
            &[self, rhs],
        )
    }

    /// Extracts index `i` of the leading axis.
    pub fn slice_row(&self, index: usize) -> Result<LazyTensor, GraphError> {
        record_on(&self.scope, NodeKind::SliceRow { index }, &[self])
    }
}
