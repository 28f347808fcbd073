//! Reverse-mode differentiation over recorded graphs.
//!
//! [`backward`] walks the loss cone in reverse recording order and records
//! the gradient computation as ordinary lazy nodes in the same scope, so a
//! backward pass is dynamically batched exactly like the forward pass it
//! mirrors. Gradient accumulation for fan-out uses `reduce_sum` nodes, which
//! makes the accumulation itself batchable across samples.

use std::collections::HashMap;
use std::sync::Arc;

use crate::graph::{
    ones_const_on, record_on, zero_const_on, BatchingScope, GraphError, LazyTensor, NodeId,
    NodeKind, Param, ScopeShared,
};
use crate::tensor::{EwiseKind, Tensor, TensorError};

#[derive(Clone)]
struct ConeNode {
    kind: NodeKind,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    depth: usize,
}

/// Records gradient nodes of `loss` with respect to `params` and returns the
/// gradient handles aligned with `params`. Nothing executes; gradients
/// materialize together with everything else at the next flush.
///
/// `loss` must be scalar-shaped (a single element of any rank). Parameters
/// that do not influence the loss receive an all-zeros gradient of matching
/// shape.
pub fn backward(loss: &LazyTensor, params: &[&LazyTensor]) -> Result<Vec<LazyTensor>, GraphError> {
    if loss.shape().iter().product::<usize>() != 1 {
        return Err(GraphError::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    let shared = Arc::clone(loss.scope_shared());
    for p in params {
        if !Arc::ptr_eq(p.scope_shared(), &shared) {
            return Err(GraphError::ForeignInput);
        }
    }

    // Snapshot the ancestor cone of the loss so recording below does not
    // contend with the scope lock.
    let cone = snapshot_cone(&shared, loss.id());

    // Which cone nodes lie on a path from a parameter to the loss.
    let targets: std::collections::HashSet<NodeId> = params.iter().map(|p| p.id()).collect();
    let mut ids: Vec<NodeId> = cone.keys().copied().collect();
    ids.sort();
    let mut needed: HashMap<NodeId, bool> = HashMap::with_capacity(ids.len());
    for &id in &ids {
        let node = &cone[&id];
        let flag =
            targets.contains(&id) || node.inputs.iter().any(|i| *needed.get(i).unwrap_or(&false));
        needed.insert(id, flag);
    }

    let handle = |id: NodeId| -> LazyTensor {
        let node = &cone[&id];
        LazyTensor::from_parts(Arc::clone(&shared), id, node.shape.clone(), node.depth)
    };

    let mut contributions: HashMap<NodeId, Vec<LazyTensor>> = HashMap::new();
    let mut grads: HashMap<NodeId, LazyTensor> = HashMap::new();

    for &id in ids.iter().rev() {
        let grad = if id == loss.id() {
            ones_const_on(&shared, loss.shape())?
        } else {
            match contributions.remove(&id) {
                None => continue,
                Some(terms) if terms.len() == 1 => terms.into_iter().next().unwrap(),
                Some(terms) => {
                    let refs: Vec<&LazyTensor> = terms.iter().collect();
                    record_on(&shared, NodeKind::ReduceSum, &refs)?
                }
            }
        };
        let node = cone[&id].clone();
        if !node.kind.is_leaf() {
            propagate(
                &shared,
                &node,
                id,
                &grad,
                &handle,
                &needed,
                &mut contributions,
            )?;
        }
        grads.insert(id, grad);
    }

    params
        .iter()
        .map(|p| match grads.get(&p.id()) {
            Some(g) => Ok(g.clone()),
            None => zero_const_on(&shared, p.shape()),
        })
        .collect()
}

fn snapshot_cone(shared: &Arc<ScopeShared>, root: NodeId) -> HashMap<NodeId, ConeNode> {
    let state = shared.lock();
    let mut cone = HashMap::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if cone.contains_key(&id) {
            continue;
        }
        let node = &state.nodes[id.index()];
        cone.insert(
            id,
            ConeNode {
                kind: node.kind,
                inputs: node.inputs.clone(),
                shape: node.shape.clone(),
                depth: node.depth,
            },
        );
        stack.extend(node.inputs.iter().copied());
    }
    cone
}

/// Records the vector-Jacobian products of one node into its inputs.
fn propagate(
    shared: &Arc<ScopeShared>,
    node: &ConeNode,
    id: NodeId,
    grad: &LazyTensor,
    handle: &dyn Fn(NodeId) -> LazyTensor,
    needed: &HashMap<NodeId, bool>,
    contributions: &mut HashMap<NodeId, Vec<LazyTensor>>,
) -> Result<(), GraphError> {
    let needs = |i: NodeId| *needed.get(&i).unwrap_or(&false);
    let mut contribute = |i: NodeId, term: LazyTensor| {
        contributions.entry(i).or_default().push(term);
    };
    // Gradient w.r.t. a scalar operand of a broadcast op would need a
    // sum-over-elements reduction; no supported workload records one.
    let broadcast_guard = |input: NodeId, input_shape: &[usize]| -> Result<(), GraphError> {
        if input_shape != grad.shape() {
            return Err(GraphError::GradUnsupported {
                node: input.index(),
                reason: "scalar-broadcast operand of a differentiated op".into(),
            });
        }
        Ok(())
    };

    match node.kind {
        NodeKind::Matmul {
            transpose_a: false,
            transpose_b: false,
        } => {
            let (a, b) = (node.inputs[0], node.inputs[1]);
            if needs(a) {
                // d/dA (A·B) contracted with g: g · Bᵀ.
                let da = record_on(
                    shared,
                    NodeKind::Matmul {
                        transpose_a: false,
                        transpose_b: true,
                    },
                    &[grad, &handle(b)],
                )?;
                contribute(a, da);
            }
            if needs(b) {
                // Aᵀ · g.
                let db = record_on(
                    shared,
                    NodeKind::Matmul {
                        transpose_a: true,
                        transpose_b: false,
                    },
                    &[&handle(a), grad],
                )?;
                contribute(b, db);
            }
        }
        NodeKind::Matmul { .. } => {
            return Err(GraphError::GradUnsupported {
                node: id.index(),
                reason: "transposed matmul nodes are backward-only".into(),
            });
        }
        NodeKind::Ewise(kind) => match kind {
            EwiseKind::Add => {
                for &input in &node.inputs {
                    if needs(input) {
                        broadcast_guard(input, handle(input).shape())?;
                        contribute(input, grad.clone());
                    }
                }
            }
            EwiseKind::Sub => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                if needs(a) {
                    broadcast_guard(a, handle(a).shape())?;
                    contribute(a, grad.clone());
                }
                if needs(b) {
                    broadcast_guard(b, handle(b).shape())?;
                    let zero = zero_const_on(shared, grad.shape())?;
                    let neg = record_on(shared, NodeKind::Ewise(EwiseKind::Sub), &[&zero, grad])?;
                    contribute(b, neg);
                }
            }
            EwiseKind::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                if needs(a) {
                    broadcast_guard(a, handle(a).shape())?;
                    let da =
                        record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[grad, &handle(b)])?;
                    contribute(a, da);
                }
                if needs(b) {
                    broadcast_guard(b, handle(b).shape())?;
                    let db =
                        record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[grad, &handle(a)])?;
                    contribute(b, db);
                }
            }
            EwiseKind::Sigmoid => {
                let x = node.inputs[0];
                if needs(x) {
                    // g · y · (1 − y)
                    let y = handle(id);
                    let ones = ones_const_on(shared, &node.shape)?;
                    let one_minus =
                        record_on(shared, NodeKind::Ewise(EwiseKind::Sub), &[&ones, &y])?;
                    let dy = record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[&y, &one_minus])?;
                    let dx = record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[grad, &dy])?;
                    contribute(x, dx);
                }
            }
            EwiseKind::Tanh => {
                let x = node.inputs[0];
                if needs(x) {
                    // g · (1 − y²)
                    let y = handle(id);
                    let y2 = record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[&y, &y])?;
                    let ones = ones_const_on(shared, &node.shape)?;
                    let dy = record_on(shared, NodeKind::Ewise(EwiseKind::Sub), &[&ones, &y2])?;
                    let dx = record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[grad, &dy])?;
                    contribute(x, dx);
                }
            }
            EwiseKind::Abs => {
                let x = node.inputs[0];
                if needs(x) {
                    // g · sign(x), with subgradient 0 at the kink.
                    let sx = record_on(shared, NodeKind::Ewise(EwiseKind::Sign), &[&handle(x)])?;
                    let dx = record_on(shared, NodeKind::Ewise(EwiseKind::Mul), &[grad, &sx])?;
                    contribute(x, dx);
                }
            }
            EwiseKind::Sign => {
                let x = node.inputs[0];
                if needs(x) {
                    // Zero almost everywhere.
                    let zero = zero_const_on(shared, handle(x).shape())?;
                    contribute(x, zero);
                }
            }
        },
        NodeKind::Stack => {
            for (i, &input) in node.inputs.iter().enumerate() {
                if needs(input) {
                    let slice = record_on(shared, NodeKind::SliceRow { index: i }, &[grad])?;
                    contribute(input, slice);
                }
            }
        }
        NodeKind::SliceRow { index } => {
            let t = node.inputs[0];
            if needs(t) {
                // Scatter g back into an all-zeros stack at the sliced index.
                let t_shape = handle(t).shape().to_vec();
                let zero = zero_const_on(shared, &t_shape[1..])?;
                let parts: Vec<LazyTensor> = (0..t_shape[0])
                    .map(|i| {
                        if i == index {
                            grad.clone()
                        } else {
                            zero.clone()
                        }
                    })
                    .collect();
                let refs: Vec<&LazyTensor> = parts.iter().collect();
                let scattered = record_on(shared, NodeKind::Stack, &refs)?;
                contribute(t, scattered);
            }
        }
        NodeKind::ReduceSum => {
            for &input in &node.inputs {
                if needs(input) {
                    broadcast_guard(input, handle(input).shape())?;
                    contribute(input, grad.clone());
                }
            }
        }
        NodeKind::Constant | NodeKind::Parameter(_) => {}
    }
    Ok(())
}

/// Records the reduction of any handle to a `[1]`-shaped scalar by summing
/// all elements (ones-vector contractions; higher ranks fold first).
pub fn sum_to_scalar(x: &LazyTensor) -> Result<LazyTensor, GraphError> {
    let shared = Arc::clone(x.scope_shared());
    match x.shape().len() {
        0 => {
            // Single element already; give it the canonical [1] shape.
            record_on(&shared, NodeKind::Stack, &[x])
        }
        1 => {
            let n = x.shape()[0];
            let ones = ones_const_on(&shared, &[n, 1])?;
            record_on(
                &shared,
                NodeKind::Matmul {
                    transpose_a: false,
                    transpose_b: false,
                },
                &[x, &ones],
            )
        }
        2 => {
            let m = x.shape()[0];
            let ones_m = ones_const_on(&shared, &[m])?;
            let rows = record_on(
                &shared,
                NodeKind::Matmul {
                    transpose_a: false,
                    transpose_b: false,
                },
                &[&ones_m, x],
            )?;
            sum_to_scalar(&rows)
        }
        _ => {
            let extent = x.shape()[0];
            let parts: Vec<LazyTensor> = (0..extent)
                .map(|i| x.slice_row(i))
                .collect::<Result<_, _>>()?;
            let refs: Vec<&LazyTensor> = parts.iter().collect();
            let folded = record_on(&shared, NodeKind::ReduceSum, &refs)?;
            sum_to_scalar(&folded)
        }
    }
}

/// In-place SGD update `param ← param − lr · grad`, applied on the host after
/// gradients have materialized. Not a kernel; launches nothing.
pub fn sgd_step(param: &mut Param, grad: &Tensor, lr: f64) -> Result<(), TensorError> {
    if grad.shape() != param.value().shape() {
        return Err(TensorError::ShapeMismatch {
            op: "sgd_step",
            lhs: param.value().shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    let shape = param.value().shape().to_vec();
    let data: Vec<f64> = param
        .value()
        .data()
        .iter()
        .zip(grad.data())
        .map(|(p, g)| p - lr * g)
        .collect();
    param.set_value(Tensor::new(shape, data)?)
}

/// Compares analytic gradients against central finite differences.
///
/// `build` records the scalar-shaped loss; it receives the current parameter
/// set (values change between numeric evaluations) and the bound handles,
/// aligned with `params`. Binding any of the same `Param`s again inside
/// `build` reuses those handles. Returns the largest relative error over all
/// parameter elements.
pub fn grad_check<F>(params: &mut [Param], build: F, step: f64) -> Result<f64, GraphError>
where
    F: Fn(&BatchingScope, &[Param], &[LazyTensor]) -> Result<LazyTensor, GraphError>,
{
    let eval = |params: &[Param]| -> Result<f64, GraphError> {
        let scope = BatchingScope::open()?;
        let bound: Vec<LazyTensor> = params
            .iter()
            .map(|p| scope.parameter(p))
            .collect::<Result<_, _>>()?;
        let loss = build(&scope, params, &bound)?;
        scope.close()?;
        Ok(loss.value()?.item())
    };

    // Analytic gradients.
    let analytic: Vec<Tensor> = {
        let scope = BatchingScope::open()?;
        let bound: Vec<LazyTensor> = params
            .iter()
            .map(|p| scope.parameter(p))
            .collect::<Result<_, _>>()?;
        let loss = build(&scope, params, &bound)?;
        let refs: Vec<&LazyTensor> = bound.iter().collect();
        let grads = backward(&loss, &refs)?;
        scope.close()?;
        grads.iter().map(|g| g.value()).collect::<Result<_, _>>()?
    };

    let mut worst: f64 = 0.0;
    for pi in 0..params.len() {
        let len = params[pi].value().len();
        for j in 0..len {
            let original = params[pi].value().data()[j];
            let shape = params[pi].value().shape().to_vec();

            let bump = |v: f64, params: &mut [Param]| -> Result<f64, GraphError> {
                let mut data = params[pi].value().data().to_vec();
                data[j] = v;
                params[pi]
                    .set_value(Tensor::new(shape.clone(), data).map_err(GraphError::Shape)?)
                    .map_err(GraphError::Shape)?;
                eval(params)
            };

            let plus = bump(original + step, params)?;
            let minus = bump(original - step, params)?;
            bump(original, params)?;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[pi].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counter;
    use crate::tensor::rel_deviation;

    #[test]
    fn identity_loss_has_unit_gradient() {
        let p = Param::new("x", Tensor::vector(&[3.0]));
        let scope = BatchingScope::open().unwrap();
        let x = scope.parameter(&p).unwrap();
        let grads = backward(&x, &[&x]).unwrap();
        scope.close().unwrap();
        assert_eq!(grads[0].value().unwrap(), Tensor::vector(&[1.0]));
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let p = Param::new("x", Tensor::vector(&[1.0, 2.0]));
        let scope = BatchingScope::open().unwrap();
        let x = scope.parameter(&p).unwrap();
        let sq = x.mul(&x).unwrap();
        let loss = sum_to_scalar(&sq).unwrap();
        let grads = backward(&loss, &[&x]).unwrap();
        scope.close().unwrap();
        assert_eq!(grads[0].value().unwrap(), Tensor::vector(&[2.0, 4.0]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let p = Param::new("x", Tensor::vector(&[1.0, 2.0]));
        let scope = BatchingScope::open().unwrap();
        let x = scope.parameter(&p).unwrap();
        assert!(matches!(
            backward(&x, &[&x]),
            Err(GraphError::NonScalarLoss { .. })
        ));
        scope.close().unwrap();
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let used = Param::new("a", Tensor::vector(&[1.0]));
        let unused = Param::new("b", Tensor::vector(&[5.0, 6.0]));
        let scope = BatchingScope::open().unwrap();
        let a = scope.parameter(&used).unwrap();
        let b = scope.parameter(&unused).unwrap();
        let loss = a.mul(&a).unwrap();
        let grads = backward(&loss, &[&a, &b]).unwrap();
        scope.close().unwrap();
        assert_eq!(grads[1].value().unwrap(), Tensor::zeros(&[2]));
    }

    #[test]
    fn gradients_accumulate_over_fanout() {
        // loss = sum(x ⊙ x) + sum(x): d/dx = 2x + 1.
        let p = Param::new("x", Tensor::vector(&[1.0, -2.0, 0.5]));
        let scope = BatchingScope::open().unwrap();
        let x = scope.parameter(&p).unwrap();
        let sq = x.mul(&x).unwrap();
        let both = sq.add(&x).unwrap();
        let loss = sum_to_scalar(&both).unwrap();
        let grads = backward(&loss, &[&x]).unwrap();
        scope.close().unwrap();
        assert_eq!(grads[0].value().unwrap(), Tensor::vector(&[3.0, -3.0, 2.0]));
    }

    fn check(
        params: &mut [Param],
        build: impl Fn(&BatchingScope, &[Param], &[LazyTensor]) -> Result<LazyTensor, GraphError>,
    ) {
        let err = grad_check(params, build, 1e-5).unwrap();
        assert!(err < 1e-4, "gradient check failed: max rel err {err}");
    }

    #[test]
    fn grad_check_matmul() {
        let mut params = vec![
            Param::new(
                "a",
                Tensor::matrix(&[&[0.3, -1.2, 0.7], &[1.1, 0.4, -0.6]]).unwrap(),
            ),
            Param::new(
                "b",
                Tensor::matrix(&[&[0.9, -0.2], &[0.1, 0.8], &[-0.5, 0.3]]).unwrap(),
            ),
        ];
        check(&mut params, |_, _, bound| {
            let y = bound[0].matmul(&bound[1])?;
            sum_to_scalar(&y)
        });
    }

    #[test]
    fn grad_check_vector_matmul() {
        let mut params = vec![
            Param::new("x", Tensor::vector(&[0.4, -0.9])),
            Param::new(
                "w",
                Tensor::matrix(&[&[0.2, 0.5, -0.1], &[1.3, -0.7, 0.6]]).unwrap(),
            ),
        ];
        check(&mut params, |_, _, bound| {
            let y = bound[0].matmul(&bound[1])?;
            sum_to_scalar(&y)
        });
    }

    #[test]
    fn grad_check_ewise_binary() {
        for kind in [EwiseKind::Add, EwiseKind::Sub, EwiseKind::Mul] {
            let mut params = vec![
                Param::new("a", Tensor::vector(&[0.7, -0.3, 1.4])),
                Param::new("b", Tensor::vector(&[-1.1, 0.8, 0.2])),
            ];
            check(&mut params, move |scope, _, bound| {
                let y = scope.record(NodeKind::Ewise(kind), &[&bound[0], &bound[1]])?;
                let sq = y.mul(&y)?;
                sum_to_scalar(&sq)
            });
        }
    }

    #[test]
    fn grad_check_ewise_unary() {
        // abs inputs are kept away from the kink; sign has zero gradient
        // everywhere, which finite differences confirm.
        for kind in [
            EwiseKind::Sigmoid,
            EwiseKind::Tanh,
            EwiseKind::Abs,
            EwiseKind::Sign,
        ] {
            let mut params = vec![Param::new("x", Tensor::vector(&[0.9, -1.3, 0.4]))];
            check(&mut params, move |scope, _, bound| {
                let y = scope.record(NodeKind::Ewise(kind), &[&bound[0]])?;
                sum_to_scalar(&y)
            });
        }
    }

    #[test]
    fn grad_check_stack_and_slice() {
        let mut params = vec![
            Param::new("x", Tensor::vector(&[0.5, -0.8])),
            Param::new("y", Tensor::vector(&[1.2, 0.3])),
        ];
        check(&mut params, |scope, _, bound| {
            let s = scope.stack(&[&bound[0], &bound[1]])?;
            let z = s.slice_row(1)?;
            let sq = z.mul(&z)?;
            let total = sum_to_scalar(&s)?;
            let partial = sum_to_scalar(&sq)?;
            total.add(&partial)
        });
    }

    #[test]
    fn grad_check_reduce_sum_with_repeats() {
        let mut params = vec![
            Param::new("x", Tensor::vector(&[0.4, -0.2])),
            Param::new("y", Tensor::vector(&[0.9, 1.1])),
        ];
        check(&mut params, |scope, _, bound| {
            let r = scope.reduce_sum(&[&bound[0], &bound[1], &bound[0]])?;
            let sq = r.mul(&r)?;
            sum_to_scalar(&sq)
        });
    }

    #[test]
    fn batched_and_per_instance_gradients_agree() {
        let samples: Vec<Tensor> = (0..4)
            .map(|i| Tensor::vector(&[0.3 * i as f64 - 0.5, 0.1 + 0.2 * i as f64]))
            .collect();
        let w = Param::new("w", Tensor::matrix(&[&[0.4, -0.3], &[0.7, 0.2]]).unwrap());

        // All samples share one scope; per-sample backward calls.
        let batched: Vec<Tensor> = {
            let scope = BatchingScope::open().unwrap();
            let bw = scope.parameter(&w).unwrap();
            let grads: Vec<LazyTensor> = samples
                .iter()
                .map(|s| {
                    let x = scope.constant(s.clone()).unwrap();
                    let y = x.matmul(&bw).unwrap();
                    let act = y.tanh().unwrap();
                    let loss = sum_to_scalar(&act).unwrap();
                    backward(&loss, &[&bw]).unwrap().remove(0)
                })
                .collect();
            scope.close().unwrap();
            grads.iter().map(|g| g.value().unwrap()).collect()
        };

        // One scope per sample.
        for (sample, batched_grad) in samples.iter().zip(&batched) {
            let scope = BatchingScope::open().unwrap();
            let bw = scope.parameter(&w).unwrap();
            let x = scope.constant(sample.clone()).unwrap();
            let y = x.matmul(&bw).unwrap();
            let act = y.tanh().unwrap();
            let loss = sum_to_scalar(&act).unwrap();
            let grad = backward(&loss, &[&bw]).unwrap().remove(0);
            scope.close().unwrap();
            let single = grad.value().unwrap();
            assert!(rel_deviation(&single, batched_grad) < 1e-9);
        }
    }

    #[test]
    fn backward_launches_are_independent_of_batch_size() {
        let w = Param::new("w", Tensor::matrix(&[&[0.4, -0.3], &[0.7, 0.2]]).unwrap());
        let run = |b: usize| -> u64 {
            let scope = BatchingScope::open_with_cache(Arc::new(crate::PlanCache::new())).unwrap();
            let bw = scope.parameter(&w).unwrap();
            for i in 0..b {
                let x = scope
                    .constant(Tensor::vector(&[i as f64, 1.0 - i as f64]))
                    .unwrap();
                let y = x.matmul(&bw).unwrap();
                let act = y.sigmoid().unwrap();
                let loss = sum_to_scalar(&act).unwrap();
                backward(&loss, &[&bw]).unwrap();
            }
            let report = scope.close().unwrap();
            report.stats.main_launches
        };
        let one = run(1);
        assert_eq!(run(4), one);
        assert_eq!(run(16), one);
    }

    #[test]
    fn gradient_recording_launches_nothing() {
        let p = Param::new("x", Tensor::vector(&[1.0, 2.0]));
        let scope = BatchingScope::open().unwrap();
        let x = scope.parameter(&p).unwrap();
        let loss = sum_to_scalar(&x.mul(&x).unwrap()).unwrap();
        let (_, launches) = counter::counting(|| backward(&loss, &[&x]).unwrap());
        assert_eq!(launches, 0);
        scope.close().unwrap();
    }

    #[test]
    fn sgd_step_trivials() {
        let mut p = Param::new("p", Tensor::vector(&[1.0, -2.0]));
        sgd_step(&mut p, &Tensor::vector(&[5.0, 5.0]), 0.0).unwrap();
        assert_eq!(p.value(), &Tensor::vector(&[1.0, -2.0]));

        let mut p = Param::new("p", Tensor::scalar(1.0));
        sgd_step(&mut p, &Tensor::scalar(2.0), 0.5).unwrap();
        assert_eq!(p.value().item(), 0.0);

        let mut p = Param::new("p", Tensor::vector(&[1.0]));
        assert!(sgd_step(&mut p, &Tensor::vector(&[1.0, 2.0]), 0.1).is_err());
    }

    #[test]
    fn sgd_descends_on_a_tiny_regression() {
        // Fit y = w·x on three points; ten SGD steps must shrink the loss.
        let xs = [0.5, 1.0, -1.5];
        let ys = [1.0, 2.0, -3.0]; // true w = 2
        let mut w = Param::new("w", Tensor::vector(&[0.0]));

        let record_loss = |scope: &BatchingScope, bw: &LazyTensor| -> LazyTensor {
            let mut terms = Vec::new();
            for (x, y) in xs.iter().zip(&ys) {
                let xv = scope.constant(Tensor::vector(&[*x])).unwrap();
                let pred = xv.mul(bw).unwrap();
                let target = scope.constant(Tensor::vector(&[*y])).unwrap();
                let diff = pred.sub(&target).unwrap();
                terms.push(diff.mul(&diff).unwrap());
            }
            let refs: Vec<&LazyTensor> = terms.iter().collect();
            scope.reduce_sum(&refs).unwrap()
        };

        let loss_value = |w: &Param| -> f64 {
            let scope = BatchingScope::open().unwrap();
            let bw = scope.parameter(w).unwrap();
            let loss = record_loss(&scope, &bw);
            scope.close().unwrap();
            loss.value().unwrap().item()
        };

        let initial = loss_value(&w);
        for _ in 0..10 {
            let scope = BatchingScope::open().unwrap();
            let bw = scope.parameter(&w).unwrap();
            let loss = record_loss(&scope, &bw);
            let grad = backward(&loss, &[&bw]).unwrap().remove(0);
            scope.close().unwrap();
            sgd_step(&mut w, &grad.value().unwrap(), 0.05).unwrap();
        }
        let after = loss_value(&w);
        assert!(
            after < initial * 0.2,
            "loss should shrink: {initial} -> {after}"
        );
    }
}
