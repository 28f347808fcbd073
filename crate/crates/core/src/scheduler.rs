//! Turns a scope's pending depth table into an executable batch plan, caches
//! plans by scope structure, and executes them.
//!
//! One plan step per non-empty (depth, signature) slot, steps ordered by
//! ascending depth then slot recording order. A step stacks its per-sample
//! operands on a new leading batch axis (operand positions fed by one shared
//! node — a parameter, typically — are broadcast instead of stacked), launches
//! the kernel once, and slices the output back into per-sample results.
//!
//! Plans are cached under a structural hash of the flushed table: slot layout,
//! group sizes, and dependency wiring in canonical coordinates. Structurally
//! identical flushes — the same corpus chunk recorded again, or a different
//! chunk with the same multiset of tree shapes — reuse the cached plan and
//! skip all grouping work.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::ops::AddAssign;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crate::graph::{GraphError, NodeId, NodeKind, SignatureKey};
use crate::tensor::{self, Tensor, TensorError};

// The scheduler operates directly on the scope's internals.
use crate::graph::ScopeState;

/// Launch accounting for one scope. Stack and unstack launches are real
/// kernel launches (the global counter sees them) but are reported separately
/// as overhead, so batching ratios stay defined over main kernels.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ExecStats {
    pub main_launches: u64,
    pub stack_launches: u64,
    pub unstack_launches: u64,
}

impl ExecStats {
    pub fn overhead(&self) -> u64 {
        self.stack_launches + self.unstack_launches
    }

    pub fn total(&self) -> u64 {
        self.main_launches + self.overhead()
    }
}

impl AddAssign for ExecStats {
    fn add_assign(&mut self, rhs: Self) {
        self.main_launches += rhs.main_launches;
        self.stack_launches += rhs.stack_launches;
        self.unstack_launches += rhs.unstack_launches;
    }
}

/// Canonical reference to a node within a flush, packed into one word:
/// pending operations set the high bit and pack (depth row, slot, rank) —
/// all in canonical order — while external inputs (leaves and previously
/// materialized nodes) carry their first-use number.
const INTERNAL_BIT: u64 = 1 << 63;

fn pack_internal(depth: u32, slot: u32, rank: u32) -> u64 {
    debug_assert!(depth < (1 << 21) && slot < (1 << 21) && rank < (1 << 21));
    INTERNAL_BIT | ((depth as u64) << 42) | ((slot as u64) << 21) | rank as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CanonSlot {
    key: SignatureKey,
    members: u32,
    arity: u32,
    /// Canonical input refs, member-major: `wiring[m * arity + p]`.
    wiring: Vec<u64>,
}

/// Structure of one flush wave in canonical coordinates. Two flushes with
/// equal forms batch identically and can share a plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CanonicalForm {
    depths: Vec<usize>,
    rows: Vec<Vec<CanonSlot>>,
    external_shapes: Vec<crate::graph::ShapeId>,
}

/// Actual node ids of this scope for every canonical coordinate.
struct Bindings {
    internal: Vec<Vec<Vec<NodeId>>>,
    externals: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum GatherMode {
    /// Every group member reads the same node at this position.
    Broadcast(u64),
    /// Per-sample operands, stacked on a new leading axis.
    Stacked,
}

#[derive(Debug, Clone)]
struct CanonStep {
    depth: u32,
    slot: u32,
    gather: Vec<GatherMode>,
}

pub(crate) struct CachedPlan {
    form: CanonicalForm,
    steps: Vec<CanonStep>,
}

/// Cache of rewritten execution plans, keyed by the structural hash of the
/// flushed table; collisions fall back to full structural comparison.
pub struct PlanCache {
    plans: Mutex<HashMap<u64, Vec<Arc<CachedPlan>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    built: AtomicU64,
}

impl PlanCache {
    pub fn new() -> Self {
        Self {
            plans: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            built: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of plans constructed from scratch; a cache hit leaves this
    /// untouched, which is what "zero grouping work" means operationally.
    pub fn plans_built(&self) -> u64 {
        self.built.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.plans
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(|v| v.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup_or_build(&self, form: CanonicalForm, order: &[(u32, u32)]) -> Arc<CachedPlan> {
        let mut hasher = DefaultHasher::new();
        form.hash(&mut hasher);
        let hash = hasher.finish();

        let mut plans = self.plans.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(candidates) = plans.get(&hash) {
            for plan in candidates {
                if plan.form == form {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Arc::clone(plan);
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.built.fetch_add(1, Ordering::Relaxed);
        let steps = build_steps(&form, order);
        let plan = Arc::new(CachedPlan { form, steps });
        plans.entry(hash).or_default().push(Arc::clone(&plan));
        plan
    }
}

impl Default for PlanCache {
    fn default() -> Self {
        Self::new()
    }
}

/// The process-wide plan cache used by scopes unless one is supplied.
pub fn default_cache() -> Arc<PlanCache> {
    static CACHE: OnceLock<Arc<PlanCache>> = OnceLock::new();
    Arc::clone(CACHE.get_or_init(|| Arc::new(PlanCache::new())))
}

/// Human-readable listing of one executed plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanSummary {
    pub steps: Vec<StepSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSummary {
    pub depth: usize,
    pub kernel: String,
    pub group: usize,
    /// Per input position: true when the operand is broadcast from a shared
    /// node rather than stacked.
    pub broadcast: Vec<bool>,
}

impl PlanSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            let gather: Vec<&str> = step
                .broadcast
                .iter()
                .map(|b| if *b { "broadcast" } else { "stack" })
                .collect();
            let _ = writeln!(
                out,
                "depth {:>3}  {:<24} group {:>5}  [{}]",
                step.depth,
                step.kernel,
                step.group,
                gather.join(", ")
            );
        }
        out
    }
}

/// Executes every pending node of the scope: canonicalize the pending table,
/// fetch or build the plan, run it, fill results.
pub(crate) fn flush(state: &mut ScopeState) -> Result<(), GraphError> {
    if state.pending.is_empty() {
        return Ok(());
    }
    #[cfg(debug_assertions)]
    verify_slot_independence(state);

    let trace = std::env::var_os("JITBATCH_TRACE").is_some();
    let t0 = std::time::Instant::now();
    let (form, bindings, order) = canonicalize(state);
    let t1 = std::time::Instant::now();
    let plan = Arc::clone(&state.cache).lookup_or_build(form, &order);
    let t2 = std::time::Instant::now();
    let (delta, summary) = execute(state, &plan, &bindings)?;
    if trace {
        eprintln!(
            "flush: canonicalize {:?} lookup {:?} execute {:?} ({} nodes, {} steps)",
            t1 - t0,
            t2 - t1,
            t2.elapsed(),
            state.pending.len(),
            plan.steps.len()
        );
    }
    state.stats += delta;
    state.flushes += 1;
    state.plans.push(summary);
    state.pending.clear();
    Ok(())
}

/// Builds the canonical form of the pending table plus the bindings from
/// canonical coordinates back to this scope's node ids. `order` lists the
/// canonical slot coordinates in (depth, slot recording order), which is the
/// execution order of freshly built plans.
fn canonicalize(state: &ScopeState) -> (CanonicalForm, Bindings, Vec<(u32, u32)>) {
    let node_count = state.nodes.len();
    let mut is_pending = vec![false; node_count];
    for id in &state.pending {
        is_pending[id.index()] = true;
    }

    // Collect pending members per depth row, keeping table (recording) order.
    let mut depths = Vec::new();
    let mut per_depth: Vec<Vec<(usize, &SignatureKey, Vec<NodeId>)>> = Vec::new();
    for (depth, row) in state.table.rows() {
        if depth == 0 {
            continue;
        }
        let mut slots = Vec::new();
        for (table_idx, slot) in row.slots.iter().enumerate() {
            let members: Vec<NodeId> = slot
                .nodes
                .iter()
                .copied()
                .filter(|id| is_pending[id.index()])
                .collect();
            if !members.is_empty() {
                slots.push((table_idx, &slot.key, members));
            }
        }
        if !slots.is_empty() {
            depths.push(depth);
            per_depth.push(slots);
        }
    }

    // Canonical slot order within a depth is key order, independent of which
    // sample happened to be recorded first.
    let mut order = Vec::new();
    let mut coord = vec![u64::MAX; node_count];
    let mut internal: Vec<Vec<Vec<NodeId>>> = Vec::new();
    for (d_idx, slots) in per_depth.iter_mut().enumerate() {
        slots.sort_by(|a, b| a.1.cmp(b.1));
        let mut row_bindings = Vec::with_capacity(slots.len());
        let mut row_order: Vec<(usize, u32)> = Vec::with_capacity(slots.len());
        for (s_idx, (table_idx, _, members)) in slots.iter().enumerate() {
            for (rank, id) in members.iter().enumerate() {
                coord[id.index()] = pack_internal(d_idx as u32, s_idx as u32, rank as u32);
            }
            row_bindings.push(members.clone());
            row_order.push((*table_idx, s_idx as u32));
        }
        row_order.sort();
        order.extend(row_order.into_iter().map(|(_, s)| (d_idx as u32, s)));
        internal.push(row_bindings);
    }

    // Wire every member's inputs in canonical refs; external nodes (leaves
    // and previously materialized results) are numbered in first-use order.
    let mut externals: Vec<NodeId> = Vec::new();
    let mut external_idx = vec![u32::MAX; node_count];
    let mut external_shapes = Vec::new();
    let mut rows = Vec::with_capacity(per_depth.len());
    for slots in &per_depth {
        let mut canon_slots = Vec::with_capacity(slots.len());
        for (_, key, members) in slots {
            let arity = state.nodes[members[0].index()].inputs.len();
            let mut wiring = Vec::with_capacity(members.len() * arity);
            for id in members {
                for input in &state.nodes[id.index()].inputs {
                    let c = coord[input.index()];
                    if c != u64::MAX {
                        wiring.push(c);
                    } else {
                        let mut k = external_idx[input.index()];
                        if k == u32::MAX {
                            k = externals.len() as u32;
                            external_idx[input.index()] = k;
                            externals.push(*input);
                            external_shapes.push(state.nodes[input.index()].shape_id);
                        }
                        wiring.push(k as u64);
                    }
                }
            }
            canon_slots.push(CanonSlot {
                key: (*key).clone(),
                members: members.len() as u32,
                arity: arity as u32,
                wiring,
            });
        }
        rows.push(canon_slots);
    }

    (
        CanonicalForm {
            depths,
            rows,
            external_shapes,
        },
        Bindings {
            internal,
            externals,
        },
        order,
    )
}

fn build_steps(form: &CanonicalForm, order: &[(u32, u32)]) -> Vec<CanonStep> {
    order
        .iter()
        .map(|&(depth, slot)| {
            let canon = &form.rows[depth as usize][slot as usize];
            let arity = canon.arity as usize;
            let gather = (0..arity)
                .map(|p| {
                    let first = canon.wiring[p];
                    let uniform = canon
                        .wiring
                        .chunks_exact(arity)
                        .all(|member| member[p] == first);
                    if uniform {
                        GatherMode::Broadcast(first)
                    } else {
                        GatherMode::Stacked
                    }
                })
                .collect();
            CanonStep {
                depth,
                slot,
                gather,
            }
        })
        .collect()
}

fn resolve(bindings: &Bindings, input: u64) -> NodeId {
    if input & INTERNAL_BIT != 0 {
        let depth = ((input >> 42) & 0x1F_FFFF) as usize;
        let slot = ((input >> 21) & 0x1F_FFFF) as usize;
        let rank = (input & 0x1F_FFFF) as usize;
        bindings.internal[depth][slot][rank]
    } else {
        bindings.externals[input as usize]
    }
}

fn result_of(state: &ScopeState, id: NodeId) -> Result<Tensor, GraphError> {
    state.results[id.index()]
        .clone()
        .ok_or(GraphError::Internal("operand executed out of order"))
}

fn execute(
    state: &mut ScopeState,
    plan: &CachedPlan,
    bindings: &Bindings,
) -> Result<(ExecStats, PlanSummary), GraphError> {
    let mut stats = ExecStats::default();
    let mut summary = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let canon = &plan.form.rows[step.depth as usize][step.slot as usize];
        let kind = canon.key.kind();
        let group = &bindings.internal[step.depth as usize][step.slot as usize];
        let group_size = group.len();

        // Assemble operands: broadcast positions pass the shared tensor
        // through, stacked positions launch one stack kernel over the
        // per-sample inputs (skipped for singleton groups).
        let mut operands: Vec<(Tensor, bool)> = Vec::with_capacity(step.gather.len());
        for (p, mode) in step.gather.iter().enumerate() {
            match mode {
                GatherMode::Broadcast(input) => {
                    let tensor = result_of(state, resolve(bindings, *input))?;
                    if state.force_stack_broadcast && group_size > 1 {
                        let refs: Vec<&Tensor> = (0..group_size).map(|_| &tensor).collect();
                        let stacked =
                            tensor::stack(&refs).map_err(|e| exec_err(group[0], kind, e))?;
                        stats.stack_launches += 1;
                        operands.push((stacked, true));
                    } else {
                        operands.push((tensor, false));
                    }
                }
                GatherMode::Stacked => {
                    if group_size == 1 {
                        let input = state.nodes[group[0].index()].inputs[p];
                        operands.push((result_of(state, input)?, false));
                    } else {
                        let tensors: Vec<Tensor> = group
                            .iter()
                            .map(|id| result_of(state, state.nodes[id.index()].inputs[p]))
                            .collect::<Result<_, _>>()?;
                        let refs: Vec<&Tensor> = tensors.iter().collect();
                        let stacked =
                            tensor::stack(&refs).map_err(|e| exec_err(group[0], kind, e))?;
                        stats.stack_launches += 1;
                        operands.push((stacked, true));
                    }
                }
            }
        }

        let any_batched = operands.iter().any(|(_, b)| *b);
        let out = launch(state, kind, &operands, group, group_size, any_batched)
            .map_err(|e| exec_err(group[0], kind, e))?;
        stats.main_launches += 1;

        if !any_batched {
            // Either a singleton group or a group whose inputs are all
            // shared: one per-sample result serves every member.
            for id in group {
                state.results[id.index()] = Some(out.clone());
            }
        } else {
            let slices = tensor::unstack(&out).map_err(|e| exec_err(group[0], kind, e))?;
            stats.unstack_launches += 1;
            for (id, slice) in group.iter().zip(slices) {
                state.results[id.index()] = Some(slice);
            }
        }

        summary.push(StepSummary {
            depth: plan.form.depths[step.depth as usize],
            kernel: kind.to_string(),
            group: group_size,
            broadcast: step
                .gather
                .iter()
                .map(|g| matches!(g, GatherMode::Broadcast(_)))
                .collect(),
        });
    }
    Ok((stats, PlanSummary { steps: summary }))
}

fn launch(
    state: &ScopeState,
    kind: NodeKind,
    operands: &[(Tensor, bool)],
    group: &[NodeId],
    group_size: usize,
    any_batched: bool,
) -> Result<Tensor, TensorError> {
    match kind {
        NodeKind::Matmul {
            transpose_a,
            transpose_b,
        } => tensor::matmul_exec(
            &operands[0].0,
            &operands[1].0,
            transpose_a,
            transpose_b,
            operands[0].1,
            operands[1].1,
        ),
        NodeKind::Ewise(ew) => {
            let refs: Vec<&Tensor> = operands.iter().map(|(t, _)| t).collect();
            if any_batched {
                let mut out_shape =
                    Vec::with_capacity(1 + state.nodes[group[0].index()].shape.len());
                out_shape.push(group_size);
                out_shape.extend_from_slice(&state.nodes[group[0].index()].shape);
                tensor::ewise_batched(ew, &refs, out_shape)
            } else {
                tensor::ewise(ew, &refs)
            }
        }
        NodeKind::ReduceSum => {
            let refs: Vec<&Tensor> = operands.iter().map(|(t, _)| t).collect();
            if any_batched {
                let mut out_shape =
                    Vec::with_capacity(1 + state.nodes[group[0].index()].shape.len());
                out_shape.push(group_size);
                out_shape.extend_from_slice(&state.nodes[group[0].index()].shape);
                tensor::reduce_sum_batched(&refs, out_shape)
            } else {
                tensor::reduce_sum(&refs)
            }
        }
        NodeKind::Stack => {
            if any_batched {
                let parts: Vec<(&Tensor, bool)> = operands.iter().map(|(t, b)| (t, *b)).collect();
                tensor::stack_batched(&parts, group_size)
            } else {
                let refs: Vec<&Tensor> = operands.iter().map(|(t, _)| t).collect();
                tensor::stack(&refs)
            }
        }
        NodeKind::SliceRow { index } => {
            if any_batched {
                tensor::slice_row_batched(&operands[0].0, index)
            } else {
                tensor::slice_row(&operands[0].0, index)
            }
        }
        NodeKind::Constant | NodeKind::Parameter(_) => Err(TensorError::OperandCount {
            op: "launch",
            expected: "an operation node",
            got: 0,
        }),
    }
}

fn exec_err(node: NodeId, kind: NodeKind, source: TensorError) -> GraphError {
    GraphError::Exec {
        node: node.index(),
        kind: kind.to_string(),
        source,
    }
}


/// Debug guard for the same-depth independence invariant: no node in a slot
/// is an ancestor of another node in the same slot. The depth rule makes this
/// impossible by construction; this re-checks it on small flushes.
#[cfg(debug_assertions)]
fn verify_slot_independence(state: &ScopeState) {
    if state.pending.len() > 2000 {
        return;
    }
    let pending: HashSet<NodeId> = state.pending.iter().copied().collect();
    for (depth, row) in state.table.rows() {
        if depth == 0 {
            continue;
        }
        for slot in &row.slots {
            let members: Vec<NodeId> = slot
                .nodes
                .iter()
                .copied()
                .filter(|id| pending.contains(id))
                .collect();
            if members.len() < 2 {
                continue;
            }
            let member_set: HashSet<NodeId> = members.iter().copied().collect();
            for &m in &members {
                let mut stack: Vec<NodeId> = state.nodes[m.index()].inputs.clone();
                let mut seen = HashSet::new();
                while let Some(n) = stack.pop() {
                    if !seen.insert(n) {
                        continue;
                    }
                    assert!(
                        !member_set.contains(&n),
                        "slot members must be mutually independent"
                    );
                    stack.extend(state.nodes[n.index()].inputs.iter().copied());
                }
            }
        }
    }
}
