//! Dense `f64` tensors and the eager kernel set.
//!
//! Tensors are immutable row-major buffers with an explicit shape; kernels
//! always allocate their outputs. Every kernel call increments the global
//! launch counter exactly once, no matter how many samples the call covers —
//! that is the quantity batching ratios are defined over.
//!
//! The batched entry points (`*_batched`, [`matmul_exec`]) are what the
//! scheduler launches after stacking sample operands on a new leading axis.
//! They accumulate in the same element order as the per-sample kernels, so a
//! batched launch reproduces per-sample results bit for bit.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::counter;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected} operand(s), got {got}")]
    OperandCount {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("{op}: rank-{rank} input not supported")]
    BadRank { op: &'static str, rank: usize },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("unknown elementwise kind `{0}`")]
    UnknownKind(String),
}

/// Immutable dense tensor: explicit shape over a flat row-major buffer.
///
/// A zero-dimensional tensor (shape `[]`) holds exactly one element. Clones
/// share the underlying buffer, and slicing kernels hand out views into the
/// batched buffer instead of copying.
#[derive(Clone)]
pub struct Tensor {
    shape: Arc<[usize]>,
    data: Arc<[f64]>,
    offset: usize,
    len: usize,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data() == other.data()
    }
}

impl Tensor {
    fn from_parts(shape: Arc<[usize]>, data: Arc<[f64]>) -> Self {
        let len = data.len();
        Self {
            shape,
            data,
            offset: 0,
            len,
        }
    }

    /// A view into an existing buffer; `shape` must cover exactly `len`
    /// elements starting at `offset`.
    fn view(shape: Arc<[usize]>, data: Arc<[f64]>, offset: usize, len: usize) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), len);
        debug_assert!(offset + len <= data.len());
        Self {
            shape,
            data,
            offset,
            len,
        }
    }

    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self::from_parts(shape.into(), data.into()))
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Arc::from([]), vec![value].into())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape.into(), vec![value; len].into())
    }

    /// Rank-1 tensor from a slice.
    pub fn vector(values: &[f64]) -> Self {
        Self::from_parts(Arc::from([values.len()]), values.to_vec().into())
    }

    /// Rank-2 tensor from rows; rows must have equal length.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "matrix",
                    lhs: vec![cols],
                    rhs: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self::from_parts(Arc::from([rows.len(), cols]), data.into()))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data[self.offset..self.offset + self.len]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The single element of a scalar-shaped tensor.
    ///
    /// Panics if the tensor holds more than one element.
    pub fn item(&self) -> f64 {
        assert!(self.len == 1, "item() on tensor of shape {:?}", self.shape);
        self.data[self.offset]
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        let data = self.data();
        if data.len() <= 8 {
            write!(f, " {data:?}")
        } else {
            write!(f, " [{:?}, ..]", &data[..8])
        }
    }
}

/// Largest elementwise deviation between two same-shaped tensors, relative
/// to `max(|a|, |b|, 1)`.
pub fn rel_deviation(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_deviation shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Elementwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EwiseKind {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Abs,
    Sign,
}

impl EwiseKind {
    pub fn is_unary(self) -> bool {
        matches!(
            self,
            EwiseKind::Sigmoid | EwiseKind::Tanh | EwiseKind::Abs | EwiseKind::Sign
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EwiseKind::Add => "add",
            EwiseKind::Sub => "sub",
            EwiseKind::Mul => "mul",
            EwiseKind::Sigmoid => "sigmoid",
            EwiseKind::Tanh => "tanh",
            EwiseKind::Abs => "abs",
            EwiseKind::Sign => "sign",
        }
    }

    fn apply_unary(self, x: f64) -> f64 {
        match self {
            EwiseKind::Sigmoid => sigmoid(x),
            EwiseKind::Tanh => x.tanh(),
            EwiseKind::Abs => x.abs(),
            EwiseKind::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            _ => unreachable!("binary kind applied as unary"),
        }
    }

    fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            EwiseKind::Add => a + b,
            EwiseKind::Sub => a - b,
            EwiseKind::Mul => a * b,
            _ => unreachable!("unary kind applied as binary"),
        }
    }
}

impl fmt::Display for EwiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EwiseKind {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, TensorError> {
        match s {
            "add" => Ok(EwiseKind::Add),
            "sub" => Ok(EwiseKind::Sub),
            "mul" => Ok(EwiseKind::Mul),
            "sigmoid" => Ok(EwiseKind::Sigmoid),
            "tanh" => Ok(EwiseKind::Tanh),
            "abs" => Ok(EwiseKind::Abs),
            "sign" => Ok(EwiseKind::Sign),
            other => Err(TensorError::UnknownKind(other.to_string())),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Shape rules. Shared with the recording layer, which infers output shapes
// without executing anything; keeping one implementation guarantees the two
// agree.
// ---------------------------------------------------------------------------

/// Promotes a rank-1 shape to a one-row matrix; returns (rows, cols, promoted).
fn promote(shape: &[usize]) -> Result<(usize, usize, bool), usize> {
    match shape.len() {
        1 => Ok((1, shape[0], true)),
        2 => Ok((shape[0], shape[1], false)),
        r => Err(r),
    }
}

/// Output shape of a per-sample matmul. Rank-1 operands are treated as
/// one-row matrices before the transpose flags apply; axes introduced by that
/// promotion are dropped from the output again.
pub(crate) fn sample_matmul_shape(
    a: &[usize],
    b: &[usize],
    ta: bool,
    tb: bool,
) -> Result<Vec<usize>, TensorError> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    let (ra, ca, a_promoted) = promote(a).map_err(|_| mismatch())?;
    let (rb, cb, b_promoted) = promote(b).map_err(|_| mismatch())?;
    let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
    let (k2, n) = if tb { (cb, rb) } else { (rb, cb) };
    if k != k2 {
        return Err(mismatch());
    }
    let mut out = Vec::with_capacity(2);
    if !(a_promoted && !ta) {
        out.push(m);
    }
    if !(b_promoted && tb) {
        out.push(n);
    }
    Ok(out)
}

/// Output shape of the public matmul (`a` may carry one leading batch axis,
/// `b` is a plain matrix, no transposes).
pub(crate) fn matmul_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    if b.len() != 2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    if a.len() == 3 {
        let mut out = vec![a[0]];
        out.extend(sample_matmul_shape(&a[1..], b, false, false)?);
        Ok(out)
    } else {
        sample_matmul_shape(a, b, false, false)
    }
}

/// Output shape of an elementwise op. Binary kinds require identical shapes;
/// the only broadcast is scalar-with-tensor.
pub(crate) fn ewise_shape(kind: EwiseKind, shapes: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
    if kind.is_unary() {
        if shapes.len() != 1 {
            return Err(TensorError::OperandCount {
                op: kind.name(),
                expected: "1",
                got: shapes.len(),
            });
        }
        return Ok(shapes[0].to_vec());
    }
    if shapes.len() != 2 {
        return Err(TensorError::OperandCount {
            op: kind.name(),
            expected: "2",
            got: shapes.len(),
        });
    }
    let (lhs, rhs) = (shapes[0], shapes[1]);
    if lhs == rhs {
        Ok(lhs.to_vec())
    } else if lhs.is_empty() {
        Ok(rhs.to_vec())
    } else if rhs.is_empty() {
        Ok(lhs.to_vec())
    } else {
        Err(TensorError::ShapeMismatch {
            op: kind.name(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        })
    }
}

pub(crate) fn stack_shape(shapes: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
    let first = shapes.first().ok_or(TensorError::OperandCount {
        op: "stack",
        expected: "at least 1",
        got: 0,
    })?;
    for s in &shapes[1..] {
        if s != first {
            return Err(TensorError::ShapeMismatch {
                op: "stack",
                lhs: first.to_vec(),
                rhs: s.to_vec(),
            });
        }
    }
    let mut out = Vec::with_capacity(first.len() + 1);
    out.push(shapes.len());
    out.extend_from_slice(first);
    Ok(out)
}

pub(crate) fn slice_row_shape(shape: &[usize], index: usize) -> Result<Vec<usize>, TensorError> {
    if shape.is_empty() {
        return Err(TensorError::BadRank {
            op: "slice_row",
            rank: 0,
        });
    }
    if index >= shape[0] {
        return Err(TensorError::IndexOutOfRange {
            op: "slice_row",
            index,
            extent: shape[0],
        });
    }
    Ok(shape[1..].to_vec())
}

pub(crate) fn reduce_shape(shapes: &[&[usize]]) -> Result<Vec<usize>, TensorError> {
    let first = shapes.first().ok_or(TensorError::OperandCount {
        op: "reduce_sum",
        expected: "at least 1",
        got: 0,
    })?;
    for s in &shapes[1..] {
        if s != first {
            return Err(TensorError::ShapeMismatch {
                op: "reduce_sum",
                lhs: first.to_vec(),
                rhs: s.to_vec(),
            });
        }
    }
    Ok(first.to_vec())
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Matrix product. `a` is `[m, k]`, `[k]` (one-row), or `[batch, m, k]`;
/// `b` is `[k, n]`. One launch regardless of the batch extent.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    matmul_shape(a.shape(), b.shape())?;
    matmul_exec(a, b, false, false, a.rank() == 3, false)
}

/// Scheduler entry point: optional leading batch axis on either operand,
/// optional transposes of the per-sample matrices. Per-sample accumulation
/// order matches the unbatched kernel exactly.
pub(crate) fn matmul_exec(
    a: &Tensor,
    b: &Tensor,
    ta: bool,
    tb: bool,
    a_batched: bool,
    b_batched: bool,
) -> Result<Tensor, TensorError> {
    let a_sample: &[usize] = if a_batched {
        &a.shape()[1..]
    } else {
        a.shape()
    };
    let b_sample: &[usize] = if b_batched {
        &b.shape()[1..]
    } else {
        b.shape()
    };
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    };
    let batch = match (a_batched, b_batched) {
        (true, true) => {
            if a.shape()[0] != b.shape()[0] {
                return Err(mismatch());
            }
            Some(a.shape()[0])
        }
        (true, false) => Some(a.shape()[0]),
        (false, true) => Some(b.shape()[0]),
        (false, false) => None,
    };
    let sample_out = sample_matmul_shape(a_sample, b_sample, ta, tb)?;
    let (ra, ca, _) = promote(a_sample).map_err(|_| mismatch())?;
    let (rb, cb, _) = promote(b_sample).map_err(|_| mismatch())?;
    let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
    let n = if tb { rb } else { cb };

    counter::bump();

    let batch_n = batch.unwrap_or(1);
    let mut out = vec![0.0; batch_n * m * n];
    let a_len = ra * ca;
    let b_len = rb * cb;
    let fast = !ta && !tb;

    if fast && a_batched && !b_batched {
        // Stacked rows against a shared matrix collapse into one GEMM with
        // M = batch * m; same per-element accumulation order, better reuse
        // of `b` panels.
        gemm_fast(a.data(), b.data(), &mut out, batch_n * m, k, n);
    } else {
        for g in 0..batch_n {
            let a_off = if a_batched { g * a_len } else { 0 };
            let b_off = if b_batched { g * b_len } else { 0 };
            let a_slice = &a.data()[a_off..a_off + a_len];
            let b_slice = &b.data()[b_off..b_off + b_len];
            let out_slice = &mut out[g * m * n..(g + 1) * m * n];
            if fast {
                gemm_fast(a_slice, b_slice, out_slice, m, k, n);
            } else {
                let a_strides = if ta { (1, ca) } else { (ca, 1) };
                let b_strides = if tb { (1, cb) } else { (cb, 1) };
                gemm_general(a_slice, b_slice, out_slice, m, k, n, a_strides, b_strides);
            }
        }
    }

    let shape = match batch {
        Some(bn) => {
            let mut s = Vec::with_capacity(sample_out.len() + 1);
            s.push(bn);
            s.extend(sample_out);
            s
        }
        None => sample_out,
    };
    Tensor::new(shape, out)
}

/// Row-major GEMM, `out += a * b`. Batched launches carry enough rows to
/// split across threads; every output row is still produced by one thread
/// with the same ascending k order, so results do not depend on the thread
/// count.
fn gemm_fast(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    const PAR_FLOPS: usize = 1 << 18;
    let threads = rayon::current_num_threads().max(1);
    if threads > 1 && m >= 2 * threads && m * k * n >= PAR_FLOPS {
        use rayon::prelude::*;
        let rows_per = m.div_ceil(threads);
        out.par_chunks_mut(rows_per * n)
            .enumerate()
            .for_each(|(chunk, out_rows)| {
                let row0 = chunk * rows_per;
                let rows = out_rows.len() / n;
                gemm_rows(&a[row0 * k..(row0 + rows) * k], b, out_rows, rows, k, n);
            });
    } else {
        gemm_rows(a, b, out, m, k, n);
    }
}

fn gemm_rows(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    // Panel over k so the active slab of `b` stays cache-resident across
    // rows; row blocks keep the output rows hot across panels. Sweeping
    // whole `b` rows keeps the accesses prefetch-friendly, and skipping
    // exact zeros makes one-hot rows cheap.
    const ROW_BLOCK: usize = 16;
    let panel = (1usize << 15).checked_div(n).unwrap_or(64).clamp(16, 64);
    let mut i0 = 0;
    while i0 < m {
        let i1 = (i0 + ROW_BLOCK).min(m);
        let mut k0 = 0;
        while k0 < k {
            let k1 = (k0 + panel).min(k);
            for i in i0..i1 {
                let a_row = &a[i * k + k0..i * k + k1];
                let out_row = &mut out[i * n..(i + 1) * n];
                for (kk, &av) in a_row.iter().enumerate() {
                    if av != 0.0 {
                        let b_row = &b[(k0 + kk) * n..(k0 + kk) * n + n];
                        for (o, &bv) in out_row.iter_mut().zip(b_row) {
                            *o += av * bv;
                        }
                    }
                }
            }
            k0 = k1;
        }
        i0 = i1;
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm_general(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    a_strides: (usize, usize),
    b_strides: (usize, usize),
) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for kk in 0..k {
                acc +=
                    a[i * a_strides.0 + kk * a_strides.1] * b[kk * b_strides.0 + j * b_strides.1];
            }
            out[i * n + j] = acc;
        }
    }
}

/// Elementwise kernel. Binary kinds require identical shapes (the only
/// broadcast is scalar-with-tensor); unary kinds take one operand.
pub fn ewise(kind: EwiseKind, operands: &[&Tensor]) -> Result<Tensor, TensorError> {
    let shapes: Vec<&[usize]> = operands.iter().map(|t| t.shape()).collect();
    let out_shape = ewise_shape(kind, &shapes)?;
    counter::bump();
    Ok(ewise_compute(kind, operands, out_shape))
}

/// Batched elementwise launch: stacked operands are `[batch] ++ s`, shared
/// operands are plain `s` (or scalars) and broadcast along the batch axis.
pub(crate) fn ewise_batched(
    kind: EwiseKind,
    operands: &[&Tensor],
    out_shape: Vec<usize>,
) -> Result<Tensor, TensorError> {
    let out_len: usize = out_shape.iter().product();
    for t in operands {
        if t.is_empty() || !out_len.is_multiple_of(t.len()) {
            return Err(TensorError::ShapeMismatch {
                op: kind.name(),
                lhs: out_shape,
                rhs: t.shape().to_vec(),
            });
        }
    }
    counter::bump();
    Ok(ewise_compute(kind, operands, out_shape))
}

/// Supported operand layouts: full output length (one-to-one), a single
/// scalar, or a batch-broadcast operand of `sample_len` elements repeating
/// per sample (exact because the batch axis is leading and row-major).
fn ewise_compute(kind: EwiseKind, operands: &[&Tensor], out_shape: Vec<usize>) -> Tensor {
    let out_len: usize = out_shape.iter().product();
    let data: Vec<f64> = if kind.is_unary() {
        let x = operands[0].data();
        x[..out_len].iter().map(|&v| kind.apply_unary(v)).collect()
    } else {
        let a = operands[0].data();
        let b = operands[1].data();
        let mut out = Vec::with_capacity(out_len);
        if a.len() == out_len && b.len() == out_len {
            out.extend(a.iter().zip(b).map(|(&x, &y)| kind.apply_binary(x, y)));
        } else if b.len() == 1 {
            let y = b[0];
            out.extend(a.iter().map(|&x| kind.apply_binary(x, y)));
        } else if a.len() == 1 {
            let x = a[0];
            out.extend(b.iter().map(|&y| kind.apply_binary(x, y)));
        } else if a.len() == out_len {
            // b broadcasts along the leading batch axis.
            for chunk in a.chunks_exact(b.len()) {
                out.extend(chunk.iter().zip(b).map(|(&x, &y)| kind.apply_binary(x, y)));
            }
        } else {
            for chunk in b.chunks_exact(a.len()) {
                out.extend(a.iter().zip(chunk).map(|(&x, &y)| kind.apply_binary(x, y)));
            }
        }
        out
    };
    Tensor::from_parts(out_shape.into(), data.into())
}

/// Stacks same-shaped tensors on a new leading batch axis; part `i` occupies
/// batch index `i`.
///
/// When the parts are consecutive views of one buffer — typically slices of
/// the previous depth's batched output, in order — the stack reassembles
/// that buffer and returns a view without copying. The launch is still
/// counted either way.
pub fn stack(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
    let shapes: Vec<&[usize]> = parts.iter().map(|t| t.shape()).collect();
    let out_shape = stack_shape(&shapes)?;
    counter::bump();

    let first = parts[0];
    let sample_len = first.len;
    let contiguous = parts.iter().enumerate().all(|(i, p)| {
        Arc::ptr_eq(&p.data, &first.data) && p.offset == first.offset + i * sample_len
    });
    if contiguous {
        return Ok(Tensor::view(
            out_shape.into(),
            Arc::clone(&first.data),
            first.offset,
            parts.len() * sample_len,
        ));
    }

    let mut data = Vec::with_capacity(out_shape.iter().product());
    for part in parts {
        data.extend_from_slice(part.data());
    }
    Ok(Tensor::from_parts(out_shape.into(), data.into()))
}

/// Batched stack: assembles `[batch, parts] ++ s` from per-position operands
/// that are either stacked (`[batch] ++ s`) or shared (`s`).
pub(crate) fn stack_batched(
    parts: &[(&Tensor, bool)],
    batch: usize,
) -> Result<Tensor, TensorError> {
    fn sample_of<'a>(part: &'a (&Tensor, bool)) -> &'a [usize] {
        if part.1 {
            &part.0.shape()[1..]
        } else {
            part.0.shape()
        }
    }
    let first = parts.first().ok_or(TensorError::OperandCount {
        op: "stack",
        expected: "at least 1",
        got: 0,
    })?;
    let sample = sample_of(first).to_vec();
    for p in parts {
        if sample_of(p) != sample.as_slice() {
            return Err(TensorError::ShapeMismatch {
                op: "stack",
                lhs: sample,
                rhs: p.0.shape().to_vec(),
            });
        }
    }
    counter::bump();
    let sample_len: usize = sample.iter().product();
    let mut data = Vec::with_capacity(batch * parts.len() * sample_len);
    for g in 0..batch {
        for (t, batched) in parts {
            let off = if *batched { g * sample_len } else { 0 };
            data.extend_from_slice(&t.data()[off..off + sample_len]);
        }
    }
    let mut shape = Vec::with_capacity(sample.len() + 2);
    shape.push(batch);
    shape.push(parts.len());
    shape.extend(sample);
    Ok(Tensor::from_parts(shape.into(), data.into()))
}

/// Splits the leading axis back into per-sample views; inverse of [`stack`].
/// Zero-copy, counted as a single launch.
pub fn unstack(t: &Tensor) -> Result<Vec<Tensor>, TensorError> {
    if t.rank() == 0 {
        return Err(TensorError::BadRank {
            op: "unstack",
            rank: 0,
        });
    }
    counter::bump();
    let extent = t.shape()[0];
    let rest: Arc<[usize]> = t.shape()[1..].into();
    let sample_len: usize = rest.iter().product();
    Ok((0..extent)
        .map(|i| {
            Tensor::view(
                Arc::clone(&rest),
                Arc::clone(&t.data),
                t.offset + i * sample_len,
                sample_len,
            )
        })
        .collect())
}

/// Extracts a single index of the leading axis (a zero-copy view).
pub fn slice_row(t: &Tensor, index: usize) -> Result<Tensor, TensorError> {
    let out_shape = slice_row_shape(t.shape(), index)?;
    counter::bump();
    let sample_len: usize = out_shape.iter().product();
    Ok(Tensor::view(
        out_shape.into(),
        Arc::clone(&t.data),
        t.offset + index * sample_len,
        sample_len,
    ))
}

/// Batched slice: `[batch, extent] ++ s` → `[batch] ++ s`, picking `index`
/// along axis 1 for every sample.
pub(crate) fn slice_row_batched(t: &Tensor, index: usize) -> Result<Tensor, TensorError> {
    if t.rank() < 2 {
        return Err(TensorError::BadRank {
            op: "slice_row",
            rank: t.rank(),
        });
    }
    let batch = t.shape()[0];
    let extent = t.shape()[1];
    if index >= extent {
        return Err(TensorError::IndexOutOfRange {
            op: "slice_row",
            index,
            extent,
        });
    }
    counter::bump();
    let rest = t.shape()[2..].to_vec();
    let sample_len: usize = rest.iter().product();
    let mut data = Vec::with_capacity(batch * sample_len);
    for g in 0..batch {
        let off = (g * extent + index) * sample_len;
        data.extend_from_slice(&t.data()[off..off + sample_len]);
    }
    let mut shape = Vec::with_capacity(rest.len() + 1);
    shape.push(batch);
    shape.extend(rest);
    Ok(Tensor::from_parts(shape.into(), data.into()))
}

/// Elementwise sum over a non-empty list of same-shaped tensors. One launch
/// regardless of arity.
pub fn reduce_sum(operands: &[&Tensor]) -> Result<Tensor, TensorError> {
    let shapes: Vec<&[usize]> = operands.iter().map(|t| t.shape()).collect();
    let out_shape = reduce_shape(&shapes)?;
    counter::bump();
    Ok(reduce_compute(operands, out_shape))
}

/// Batched reduce: stacked operands are `[batch] ++ s`, shared ones plain `s`.
pub(crate) fn reduce_sum_batched(
    operands: &[&Tensor],
    out_shape: Vec<usize>,
) -> Result<Tensor, TensorError> {
    if operands.is_empty() {
        return Err(TensorError::OperandCount {
            op: "reduce_sum",
            expected: "at least 1",
            got: 0,
        });
    }
    let out_len: usize = out_shape.iter().product();
    for t in operands {
        if t.is_empty() || !out_len.is_multiple_of(t.len()) {
            return Err(TensorError::ShapeMismatch {
                op: "reduce_sum",
                lhs: out_shape,
                rhs: t.shape().to_vec(),
            });
        }
    }
    counter::bump();
    Ok(reduce_compute(operands, out_shape))
}

fn reduce_compute(operands: &[&Tensor], out_shape: Vec<usize>) -> Tensor {
    let out_len: usize = out_shape.iter().product();
    let mut data = vec![0.0; out_len];
    for t in operands {
        let src = t.data();
        if src.len() == out_len {
            for (slot, &v) in data.iter_mut().zip(src) {
                *slot += v;
            }
        } else {
            for chunk in data.chunks_exact_mut(src.len()) {
                for (slot, &v) in chunk.iter_mut().zip(src) {
                    *slot += v;
                }
            }
        }
    }
    Tensor::from_parts(out_shape.into(), data.into())
}
