//! Child-sum tree LSTM workload: the model that drives the batching engine
//! and the granularity analysis.
//!
//! Every cell is recorded inside a `begin_block("cell")`/`end_block` pair.
//! All cells share the same parameters, so cells of equal arity at equal
//! depth land in identical signature slots for all of their operators; only
//! the arity-dependent operators (the two variable-arity `reduce_sum`s and
//! the per-child forget-gate family) split by child count.
//!
//! Cell equations, with `x` the embedded token and `(h_k, c_k)` the child
//! states: `h̃ = Σ h_k`; `i = σ(x·W_i + h̃·U_i + b_i)`; `o`, `u` analogous
//! (`u` uses tanh); per child `f_k = σ(x·W_f + h_k·U_f + b_f)`;
//! `c = i⊙u + Σ f_k⊙c_k`; `h = o⊙tanh(c)`. Leaves use `h̃ = 0` and
//! `c = i⊙u`.

pub mod eager;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TreeNode;
use crate::graph::{BatchingScope, GraphError, LazyTensor, Param};
use crate::tensor::Tensor;

/// Gate order used throughout: input, forget, output, update.
pub(crate) const GATE_INPUT: usize = 0;
pub(crate) const GATE_FORGET: usize = 1;
pub(crate) const GATE_OUTPUT: usize = 2;
pub(crate) const GATE_UPDATE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
}

impl TreeLstmConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, vocab_size: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            vocab_size,
        }
    }

    /// Desk-scale defaults used by tests.
    pub fn small(vocab_size: usize) -> Self {
        Self::new(8, 4, vocab_size)
    }
}

/// Parameters of the tree LSTM plus the relatedness head. All cells of all
/// trees bound into a scope share these, which is what makes cells
/// batch-compatible.
#[derive(Debug, Clone)]
pub struct TreeLstm {
    pub config: TreeLstmConfig,
    /// Token embedding table, one row per vocabulary entry.
    pub embedding: Param,
    /// Input transforms per gate (i, f, o, u), each `[input_dim, hidden_dim]`.
    pub wx: [Param; 4],
    /// Recurrent transforms per gate, each `[hidden_dim, hidden_dim]`.
    pub uh: [Param; 4],
    /// Gate biases, each `[hidden_dim]`.
    pub bias: [Param; 4],
    /// Relatedness head: product feature weights, `[hidden_dim, 1]`.
    pub head_prod: Param,
    /// Relatedness head: absolute-difference feature weights, `[hidden_dim, 1]`.
    pub head_diff: Param,
    /// Relatedness head bias, `[1]`.
    pub head_bias: Param,
}

const GATE_NAMES: [&str; 4] = ["i", "f", "o", "u"];

impl TreeLstm {
    /// Seeded uniform init scaled by fan-in.
    pub fn new(config: TreeLstmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |name: String, shape: &[usize], fan_in: usize| {
            let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len).map(|_| rng.random_range(-scale..scale)).collect();
            Param::new(name, Tensor::new(shape.to_vec(), data).expect("init shape"))
        };
        let d_in = config.input_dim;
        let d_h = config.hidden_dim;
        let v = config.vocab_size;
        Self {
            config,
            embedding: init("embedding".into(), &[v, d_in], d_in),
            wx: std::array::from_fn(|g| init(format!("w_{}", GATE_NAMES[g]), &[d_in, d_h], d_in)),
            uh: std::array::from_fn(|g| init(format!("u_{}", GATE_NAMES[g]), &[d_h, d_h], d_h)),
            bias: std::array::from_fn(|g| init(format!("b_{}", GATE_NAMES[g]), &[d_h], d_h)),
            head_prod: init("head_prod".into(), &[d_h, 1], d_h),
            head_diff: init("head_diff".into(), &[d_h, 1], d_h),
            head_bias: init("head_bias".into(), &[1], 1),
        }
    }

    /// All-zero parameters; useful for analytically forced cases.
    pub fn zeroed(config: TreeLstmConfig) -> Self {
        let d_in = config.input_dim;
        let d_h = config.hidden_dim;
        let v = config.vocab_size;
        let zero = |name: &str, shape: &[usize]| Param::new(name, Tensor::zeros(shape));
        Self {
            config,
            embedding: zero("embedding", &[v, d_in]),
            wx: std::array::from_fn(|g| zero(&format!("w_{}", GATE_NAMES[g]), &[d_in, d_h])),
            uh: std::array::from_fn(|g| zero(&format!("u_{}", GATE_NAMES[g]), &[d_h, d_h])),
            bias: std::array::from_fn(|g| zero(&format!("b_{}", GATE_NAMES[g]), &[d_h])),
            head_prod: zero("head_prod", &[d_h, 1]),
            head_diff: zero("head_diff", &[d_h, 1]),
            head_bias: zero("head_bias", &[1]),
        }
    }

    /// Parameters in a stable order (used for gradient bookkeeping and SGD).
    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.embedding];
        out.extend(self.wx.iter());
        out.extend(self.uh.iter());
        out.extend(self.bias.iter());
        out.push(&self.head_prod);
        out.push(&self.head_diff);
        out.push(&self.head_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = vec![&mut self.embedding];
        out.extend(self.wx.iter_mut());
        out.extend(self.uh.iter_mut());
        out.extend(self.bias.iter_mut());
        out.push(&mut self.head_prod);
        out.push(&mut self.head_diff);
        out.push(&mut self.head_bias);
        out
    }

    /// Binds every parameter into the scope once.
    pub fn bind(&self, scope: &BatchingScope) -> Result<BoundTreeLstm, GraphError> {
        Ok(BoundTreeLstm {
            config: self.config,
            embedding: scope.parameter(&self.embedding)?,
            wx: bind_array(scope, &self.wx)?,
            uh: bind_array(scope, &self.uh)?,
            bias: bind_array(scope, &self.bias)?,
            head_prod: scope.parameter(&self.head_prod)?,
            head_diff: scope.parameter(&self.head_diff)?,
            head_bias: scope.parameter(&self.head_bias)?,
        })
    }
}

fn bind_array(scope: &BatchingScope, params: &[Param; 4]) -> Result<[LazyTensor; 4], GraphError> {
    Ok([
        scope.parameter(&params[0])?,
        scope.parameter(&params[1])?,
        scope.parameter(&params[2])?,
        scope.parameter(&params[3])?,
    ])
}

/// Scope-bound parameter handles plus the recording entry points.
pub struct BoundTreeLstm {
    pub config: TreeLstmConfig,
    embedding: LazyTensor,
    wx: [LazyTensor; 4],
    uh: [LazyTensor; 4],
    bias: [LazyTensor; 4],
    head_prod: LazyTensor,
    head_diff: LazyTensor,
    head_bias: LazyTensor,
}

impl BoundTreeLstm {
    /// Embeds a token as a one-hot row times the embedding table; gradients
    /// flow into the table row. Token `-1` (internal nodes) embeds as the
    /// shared zero vector. Every lookup shares one signature, so lookups
    /// batch across samples regardless of the token value.
    pub fn embed(&self, scope: &BatchingScope, token: i64) -> Result<LazyTensor, GraphError> {
        if token == -1 {
            return scope.zero_const(&[self.config.input_dim]);
        }
        let vocab = self.config.vocab_size;
        if token < 0 || token as usize >= vocab {
            return Err(GraphError::TokenOutOfRange { token, vocab });
        }
        let mut onehot = vec![0.0; vocab];
        onehot[token as usize] = 1.0;
        let onehot =
            scope.constant(Tensor::new(vec![vocab], onehot).map_err(GraphError::Shape)?)?;
        onehot.matmul(&self.embedding)
    }

    /// Records one child-sum cell. The caller wraps it (together with its
    /// embedding) in a `begin_block("cell")`/`end_block` pair; `encode_tree`
    /// does that.
    pub fn cell(
        &self,
        scope: &BatchingScope,
        x: &LazyTensor,
        children: &[(LazyTensor, LazyTensor)],
    ) -> Result<(LazyTensor, LazyTensor), GraphError> {
        let gate_pre = |wx: &LazyTensor,
                        recur: Option<&LazyTensor>,
                        bias: &LazyTensor|
         -> Result<LazyTensor, GraphError> {
            match recur {
                Some(r) => wx.add(r)?.add(bias),
                None => wx.add(bias),
            }
        };

        let wx_i = x.matmul(&self.wx[GATE_INPUT])?;
        let wx_o = x.matmul(&self.wx[GATE_OUTPUT])?;
        let wx_u = x.matmul(&self.wx[GATE_UPDATE])?;

        let h_tilde = if children.is_empty() {
            None
        } else {
            let hs: Vec<&LazyTensor> = children.iter().map(|(h, _)| h).collect();
            Some(scope.reduce_sum(&hs)?)
        };
        let recur = |gate: usize| -> Result<Option<LazyTensor>, GraphError> {
            h_tilde
                .as_ref()
                .map(|h| h.matmul(&self.uh[gate]))
                .transpose()
        };

        let i = gate_pre(&wx_i, recur(GATE_INPUT)?.as_ref(), &self.bias[GATE_INPUT])?.sigmoid()?;
        let o =
            gate_pre(&wx_o, recur(GATE_OUTPUT)?.as_ref(), &self.bias[GATE_OUTPUT])?.sigmoid()?;
        let u = gate_pre(&wx_u, recur(GATE_UPDATE)?.as_ref(), &self.bias[GATE_UPDATE])?.tanh()?;

        let iu = i.mul(&u)?;
        let c = if children.is_empty() {
            iu
        } else {
            // One forget gate per child, sharing the x·W_f term.
            let wx_f = x.matmul(&self.wx[GATE_FORGET])?;
            let mut fc = Vec::with_capacity(children.len());
            for (h_k, c_k) in children {
                let f_k = wx_f
                    .add(&h_k.matmul(&self.uh[GATE_FORGET])?)?
                    .add(&self.bias[GATE_FORGET])?
                    .sigmoid()?;
                fc.push(f_k.mul(c_k)?);
            }
            let refs: Vec<&LazyTensor> = fc.iter().collect();
            iu.add(&scope.reduce_sum(&refs)?)?
        };
        let h = o.mul(&c.tanh()?)?;
        Ok((h, c))
    }

    /// Post-order recursion over [`Self::cell`], one tagged block per tree
    /// node; returns the root state.
    pub fn encode_tree(
        &self,
        scope: &BatchingScope,
        tree: &TreeNode,
    ) -> Result<(LazyTensor, LazyTensor), GraphError> {
        let children = tree
            .children
            .iter()
            .map(|c| self.encode_tree(scope, c))
            .collect::<Result<Vec<_>, _>>()?;
        scope.begin_block("cell")?;
        let state = self
            .embed(scope, tree.token)
            .and_then(|x| self.cell(scope, &x, &children));
        scope.end_block()?;
        state
    }

    /// Relatedness score of two encoded roots: sigmoid over a dense layer on
    /// `[h_a ⊙ h_b, |h_a − h_b|]`, in `(0, 1)`.
    pub fn relatedness(
        &self,
        _scope: &BatchingScope,
        h_a: &LazyTensor,
        h_b: &LazyTensor,
    ) -> Result<LazyTensor, GraphError> {
        let prod = h_a.mul(h_b)?;
        let diff = h_a.sub(h_b)?.abs()?;
        let z = prod
            .matmul(&self.head_prod)?
            .add(&diff.matmul(&self.head_diff)?)?
            .add(&self.head_bias)?;
        z.sigmoid()
    }

    /// Squared-error loss of a pair score against its label, `[1]`-shaped.
    pub fn pair_loss(
        &self,
        scope: &BatchingScope,
        score: &LazyTensor,
        label: f64,
    ) -> Result<LazyTensor, GraphError> {
        let target = scope.constant(Tensor::vector(&[label]))?;
        let diff = score.sub(&target)?;
        diff.mul(&diff)
    }

    /// Gradient targets in the same order as [`TreeLstm::params`].
    pub fn param_handles(&self) -> Vec<&LazyTensor> {
        let mut out = vec![&self.embedding];
        out.extend(self.wx.iter());
        out.extend(self.uh.iter());
        out.extend(self.bias.iter());
        out.push(&self.head_prod);
        out.push(&self.head_diff);
        out.push(&self.head_bias);
        out
    }
}

/// Recorded operations per cell block (embedding included): leaves record a
/// fixed 13 (12 when the token is `-1`), internal cells a fixed 22 plus 5 per
/// child plus the embedding.
pub fn expected_cell_ops(arity: usize, has_token: bool) -> usize {
    let embed = usize::from(has_token);
    if arity == 0 {
        12 + embed
    } else {
        22 + 5 * arity + embed
    }
}
