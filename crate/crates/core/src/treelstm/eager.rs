//! Per-instance eager evaluation of the tree LSTM.
//!
//! This is the reference path batched execution is checked against: it walks
//! one tree at a time and calls the eager kernels directly, never touching
//! scopes, signatures, or plans. It mirrors the recorded decomposition
//! operation for operation, so its launch count per tree equals the recorded
//! node count and the arithmetic matches bit for bit.

use crate::corpus::TreeNode;
use crate::graph::GraphError;
use crate::tensor::{self, EwiseKind, Tensor};

use super::{TreeLstm, GATE_FORGET, GATE_INPUT, GATE_OUTPUT, GATE_UPDATE};

fn ew(kind: EwiseKind, operands: &[&Tensor]) -> Result<Tensor, GraphError> {
    tensor::ewise(kind, operands).map_err(GraphError::Shape)
}

fn mm(a: &Tensor, b: &Tensor) -> Result<Tensor, GraphError> {
    tensor::matmul(a, b).map_err(GraphError::Shape)
}

fn embed(model: &TreeLstm, token: i64) -> Result<Tensor, GraphError> {
    if token == -1 {
        return Ok(Tensor::zeros(&[model.config.input_dim]));
    }
    let vocab = model.config.vocab_size;
    if token < 0 || token as usize >= vocab {
        return Err(GraphError::TokenOutOfRange { token, vocab });
    }
    let mut onehot = vec![0.0; vocab];
    onehot[token as usize] = 1.0;
    let onehot = Tensor::new(vec![vocab], onehot).map_err(GraphError::Shape)?;
    mm(&onehot, model.embedding.value())
}

fn cell(
    model: &TreeLstm,
    x: &Tensor,
    children: &[(Tensor, Tensor)],
) -> Result<(Tensor, Tensor), GraphError> {
    let gate = |gate: usize, h_tilde: Option<&Tensor>| -> Result<Tensor, GraphError> {
        let wx = mm(x, model.wx[gate].value())?;
        let pre = match h_tilde {
            Some(h) => {
                let uh = mm(h, model.uh[gate].value())?;
                let sum = ew(EwiseKind::Add, &[&wx, &uh])?;
                ew(EwiseKind::Add, &[&sum, model.bias[gate].value()])?
            }
            None => ew(EwiseKind::Add, &[&wx, model.bias[gate].value()])?,
        };
        Ok(pre)
    };

    let h_tilde = if children.is_empty() {
        None
    } else {
        let hs: Vec<&Tensor> = children.iter().map(|(h, _)| h).collect();
        Some(tensor::reduce_sum(&hs).map_err(GraphError::Shape)?)
    };

    let i = ew(EwiseKind::Sigmoid, &[&gate(GATE_INPUT, h_tilde.as_ref())?])?;
    let o = ew(EwiseKind::Sigmoid, &[&gate(GATE_OUTPUT, h_tilde.as_ref())?])?;
    let u = ew(EwiseKind::Tanh, &[&gate(GATE_UPDATE, h_tilde.as_ref())?])?;

    let iu = ew(EwiseKind::Mul, &[&i, &u])?;
    let c = if children.is_empty() {
        iu
    } else {
        let wx_f = mm(x, model.wx[GATE_FORGET].value())?;
        let mut fc = Vec::with_capacity(children.len());
        for (h_k, c_k) in children {
            let uh_f = mm(h_k, model.uh[GATE_FORGET].value())?;
            let pre = ew(EwiseKind::Add, &[&wx_f, &uh_f])?;
            let pre = ew(EwiseKind::Add, &[&pre, model.bias[GATE_FORGET].value()])?;
            let f_k = ew(EwiseKind::Sigmoid, &[&pre])?;
            fc.push(ew(EwiseKind::Mul, &[&f_k, c_k])?);
        }
        let refs: Vec<&Tensor> = fc.iter().collect();
        let fc_sum = tensor::reduce_sum(&refs).map_err(GraphError::Shape)?;
        ew(EwiseKind::Add, &[&iu, &fc_sum])?
    };
    let tanh_c = ew(EwiseKind::Tanh, &[&c])?;
    let h = ew(EwiseKind::Mul, &[&o, &tanh_c])?;
    Ok((h, c))
}

/// Evaluates a tree bottom-up, returning the root `(h, c)`.
pub fn encode_tree(model: &TreeLstm, tree: &TreeNode) -> Result<(Tensor, Tensor), GraphError> {
    let children = tree
        .children
        .iter()
        .map(|c| encode_tree(model, c))
        .collect::<Result<Vec<_>, _>>()?;
    let x = embed(model, tree.token)?;
    cell(model, &x, &children)
}

/// Relatedness score over two root hidden states.
pub fn relatedness(model: &TreeLstm, h_a: &Tensor, h_b: &Tensor) -> Result<Tensor, GraphError> {
    let prod = ew(EwiseKind::Mul, &[h_a, h_b])?;
    let diff = ew(EwiseKind::Sub, &[h_a, h_b])?;
    let diff = ew(EwiseKind::Abs, &[&diff])?;
    let z = mm(&prod, model.head_prod.value())?;
    let z2 = mm(&diff, model.head_diff.value())?;
    let z = ew(EwiseKind::Add, &[&z, &z2])?;
    let z = ew(EwiseKind::Add, &[&z, model.head_bias.value()])?;
    ew(EwiseKind::Sigmoid, &[&z])
}

/// Encodes both trees of a pair and returns `(score, h_a, h_b)`.
pub fn pair_score(
    model: &TreeLstm,
    a: &TreeNode,
    b: &TreeNode,
) -> Result<(f64, Tensor, Tensor), GraphError> {
    let (h_a, _) = encode_tree(model, a)?;
    let (h_b, _) = encode_tree(model, b)?;
    let score = relatedness(model, &h_a, &h_b)?;
    Ok((score.item(), h_a, h_b))
}

/// Squared-error loss of a pair against its label.
pub fn pair_loss(
    model: &TreeLstm,
    a: &TreeNode,
    b: &TreeNode,
    label: f64,
) -> Result<f64, GraphError> {
    let (score, _, _) = pair_score(model, a, b)?;
    Ok((score - label) * (score - label))
}
