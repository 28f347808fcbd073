//! Python extension module exposing the lazy-batching runtime: tensors,
//! scopes and lazy handles, reverse-mode gradients, the tree-LSTM workload,
//! and the corpus/simulation/benchmark entry points.
//!
//! Build produces `libjitbatch_py.so`; rename (or symlink) to `jitbatch.so`
//! on the Python path. `python/smoke_test.py` automates that.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use jitbatch::autodiff;
use jitbatch::bench::{run_bench, BenchConfig, BenchMethod, BenchMode};
use jitbatch::corpus;
use jitbatch::counter;
use jitbatch::granularity::{self, Granularity};
use jitbatch::treelstm::{eager, TreeLstm, TreeLstmConfig};
use jitbatch::{BatchingScope, GraphError, LazyTensor, Param, PlanCache};

fn graph_err(err: GraphError) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn runtime_err(err: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

/// Dense 64-bit float tensor with an explicit shape.
#[pyclass(name = "Tensor", from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: jitbatch::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(data: Vec<f64>, shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: jitbatch::Tensor::new(shape, data).map_err(runtime_err)?,
        })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Self {
        Self {
            inner: jitbatch::Tensor::zeros(&shape),
        }
    }

    #[staticmethod]
    fn scalar(value: f64) -> Self {
        Self {
            inner: jitbatch::Tensor::scalar(value),
        }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    /// The single element of a scalar-shaped tensor.
    fn item(&self) -> PyResult<f64> {
        if self.inner.len() != 1 {
            return Err(PyValueError::new_err(format!(
                "item() on tensor of shape {:?}",
                self.inner.shape()
            )));
        }
        Ok(self.inner.data()[0])
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A named trainable tensor with process-global identity.
#[pyclass(name = "Param")]
struct PyParam {
    inner: Param,
}

#[pymethods]
impl PyParam {
    #[new]
    fn new(name: String, value: PyTensor) -> Self {
        Self {
            inner: Param::new(name, value.inner),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn value(&self) -> PyTensor {
        PyTensor {
            inner: self.inner.value().clone(),
        }
    }

    /// In-place SGD update from a materialized gradient.
    fn sgd_step(&mut self, grad: PyTensor, lr: f64) -> PyResult<()> {
        autodiff::sgd_step(&mut self.inner, &grad.inner, lr).map_err(runtime_err)
    }
}

/// Handle to a deferred computation recorded in a scope.
#[pyclass(name = "Lazy", from_py_object)]
#[derive(Clone)]
struct PyLazy {
    inner: LazyTensor,
}

#[pymethods]
impl PyLazy {
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// Materializes the value, flushing pending work in the scope if needed.
    fn value(&self) -> PyResult<PyTensor> {
        Ok(PyTensor {
            inner: self.inner.value().map_err(graph_err)?,
        })
    }

    fn add(&self, rhs: PyRef<'_, PyLazy>) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.add(&rhs.inner).map_err(graph_err)?,
        })
    }

    fn sub(&self, rhs: PyRef<'_, PyLazy>) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.sub(&rhs.inner).map_err(graph_err)?,
        })
    }

    fn mul(&self, rhs: PyRef<'_, PyLazy>) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.mul(&rhs.inner).map_err(graph_err)?,
        })
    }

    fn matmul(&self, rhs: PyRef<'_, PyLazy>) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.matmul(&rhs.inner).map_err(graph_err)?,
        })
    }

    fn sigmoid(&self) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.sigmoid().map_err(graph_err)?,
        })
    }

    fn tanh(&self) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.tanh().map_err(graph_err)?,
        })
    }

    fn abs(&self) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.abs().map_err(graph_err)?,
        })
    }

    fn slice_row(&self, index: usize) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.slice_row(index).map_err(graph_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A dynamic batching scope; use as a context manager. Recording defers all
/// computation; values flush through the batch scheduler on demand or at
/// close.
#[pyclass(name = "Scope")]
struct PyScope {
    inner: BatchingScope,
}

#[pymethods]
impl PyScope {
    #[new]
    fn new() -> PyResult<Self> {
        Ok(Self {
            inner: BatchingScope::open_with_cache(Arc::new(PlanCache::new())).map_err(graph_err)?,
        })
    }

    fn constant(&self, value: PyTensor) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.constant(value.inner).map_err(graph_err)?,
        })
    }

    fn parameter(&self, param: PyRef<'_, PyParam>) -> PyResult<PyLazy> {
        Ok(PyLazy {
            inner: self.inner.parameter(&param.inner).map_err(graph_err)?,
        })
    }

    fn stack(&self, parts: Vec<PyLazy>) -> PyResult<PyLazy> {
        let refs: Vec<&LazyTensor> = parts.iter().map(|p| &p.inner).collect();
        Ok(PyLazy {
            inner: self.inner.stack(&refs).map_err(graph_err)?,
        })
    }

    fn reduce_sum(&self, parts: Vec<PyLazy>) -> PyResult<PyLazy> {
        let refs: Vec<&LazyTensor> = parts.iter().map(|p| &p.inner).collect();
        Ok(PyLazy {
            inner: self.inner.reduce_sum(&refs).map_err(graph_err)?,
        })
    }

    fn begin_block(&self, tag: &str) -> PyResult<()> {
        self.inner.begin_block(tag).map_err(graph_err)
    }

    fn end_block(&self) -> PyResult<()> {
        self.inner.end_block().map_err(graph_err)
    }

    /// Flushes all pending work and closes the scope; returns launch stats.
    fn close(&self) -> PyResult<(u64, u64, u64)> {
        let report = self.inner.close().map_err(graph_err)?;
        Ok((
            report.stats.main_launches,
            report.stats.stack_launches,
            report.stats.unstack_launches,
        ))
    }

    fn op_node_count(&self) -> usize {
        self.inner.op_node_count()
    }

    fn op_slot_count(&self) -> usize {
        self.inner.op_slot_count()
    }

    fn __enter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __exit__(
        &self,
        exc_type: Option<Bound<'_, PyAny>>,
        _exc_value: Option<Bound<'_, PyAny>>,
        _traceback: Option<Bound<'_, PyAny>>,
    ) -> PyResult<bool> {
        if exc_type.is_none() && self.inner.is_open() {
            self.inner.close().map_err(graph_err)?;
        }
        Ok(false)
    }
}

/// Records gradients of a scalar-shaped loss; returns handles aligned with
/// `params`, batched like everything else at the next flush.
#[pyfunction]
fn backward(loss: PyRef<'_, PyLazy>, params: Vec<PyLazy>) -> PyResult<Vec<PyLazy>> {
    let refs: Vec<&LazyTensor> = params.iter().map(|p| &p.inner).collect();
    Ok(autodiff::backward(&loss.inner, &refs)
        .map_err(graph_err)?
        .into_iter()
        .map(|inner| PyLazy { inner })
        .collect())
}

/// Reduces a handle to a `[1]`-shaped scalar by summing all elements.
#[pyfunction]
fn sum_to_scalar(x: PyRef<'_, PyLazy>) -> PyResult<PyLazy> {
    Ok(PyLazy {
        inner: autodiff::sum_to_scalar(&x.inner).map_err(graph_err)?,
    })
}

/// Kernel launches since process start or the last reset.
#[pyfunction]
fn kernel_launches() -> u64 {
    counter::launches()
}

#[pyfunction]
fn reset_kernel_launches() {
    counter::reset()
}

/// Child-sum tree LSTM with a relatedness head; all cells share parameters.
#[pyclass(name = "TreeLstm")]
struct PyTreeLstm {
    inner: TreeLstm,
}

#[pymethods]
impl PyTreeLstm {
    #[new]
    fn new(input_dim: usize, hidden_dim: usize, vocab_size: usize, seed: u64) -> Self {
        Self {
            inner: TreeLstm::new(TreeLstmConfig::new(input_dim, hidden_dim, vocab_size), seed),
        }
    }

    /// Records one tree (token/parent arrays, root parent -1) into the scope
    /// and returns the root (h, c) handles.
    fn encode(
        &self,
        scope: PyRef<'_, PyScope>,
        tokens: Vec<i64>,
        parents: Vec<i64>,
    ) -> PyResult<(PyLazy, PyLazy)> {
        let tree = corpus::tree_from_arrays(&tokens, &parents, corpus::DEFAULT_MAX_ARITY)
            .map_err(PyValueError::new_err)?;
        let bound = self.inner.bind(&scope.inner).map_err(graph_err)?;
        let (h, c) = bound.encode_tree(&scope.inner, &tree).map_err(graph_err)?;
        Ok((PyLazy { inner: h }, PyLazy { inner: c }))
    }

    /// Relatedness score handle over two encoded roots.
    fn relatedness(
        &self,
        scope: PyRef<'_, PyScope>,
        h_a: PyRef<'_, PyLazy>,
        h_b: PyRef<'_, PyLazy>,
    ) -> PyResult<PyLazy> {
        let bound = self.inner.bind(&scope.inner).map_err(graph_err)?;
        Ok(PyLazy {
            inner: bound
                .relatedness(&scope.inner, &h_a.inner, &h_b.inner)
                .map_err(graph_err)?,
        })
    }

    /// Per-instance eager oracle: the relatedness score of one tree pair.
    fn eager_score(
        &self,
        tokens_a: Vec<i64>,
        parents_a: Vec<i64>,
        tokens_b: Vec<i64>,
        parents_b: Vec<i64>,
    ) -> PyResult<f64> {
        let a = corpus::tree_from_arrays(&tokens_a, &parents_a, corpus::DEFAULT_MAX_ARITY)
            .map_err(PyValueError::new_err)?;
        let b = corpus::tree_from_arrays(&tokens_b, &parents_b, corpus::DEFAULT_MAX_ARITY)
            .map_err(PyValueError::new_err)?;
        let (score, _, _) = eager::pair_score(&self.inner, &a, &b).map_err(graph_err)?;
        Ok(score)
    }
}

/// Writes a synthetic labeled corpus (JSONL, one tree per line).
#[pyfunction]
#[pyo3(signature = (path, trees, max_arity=9, max_depth=7, vocab=64, seed=0))]
fn gen_corpus(
    path: PathBuf,
    trees: usize,
    max_arity: usize,
    max_depth: usize,
    vocab: usize,
    seed: u64,
) -> PyResult<()> {
    let records = corpus::generate_corpus(&corpus::GenConfig {
        trees,
        max_arity,
        max_depth,
        vocab,
        seed,
        dist: corpus::ArityDist::Skewed,
    });
    corpus::write_corpus(&path, &records).map_err(runtime_err)
}

/// Granularity simulation over a corpus file; returns the report as JSON
/// (`granularity` is "kernel", "subgraph", or "both").
#[pyfunction]
#[pyo3(signature = (path, batch_size=256, granularity="both"))]
fn simulate_json(path: PathBuf, batch_size: usize, granularity: &str) -> PyResult<String> {
    let records = corpus::read_corpus(&path, corpus::DEFAULT_MAX_ARITY).map_err(runtime_err)?;
    let trees: Vec<_> = records.into_iter().map(|r| r.tree).collect();
    let json = if granularity == "both" {
        serde_json::to_string(&granularity::compare(&trees, batch_size).map_err(runtime_err)?)
    } else {
        let g = Granularity::from_str(granularity).map_err(PyValueError::new_err)?;
        serde_json::to_string(&granularity::simulate(&trees, g, batch_size).map_err(runtime_err)?)
    };
    json.map_err(runtime_err)
}

/// Benchmark over a corpus file; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (path, batch_size=256, mode="infer", method="jit", hidden=32, seed=0, lr=0.05))]
#[allow(clippy::too_many_arguments)]
fn bench_json(
    path: PathBuf,
    batch_size: usize,
    mode: &str,
    method: &str,
    hidden: usize,
    seed: u64,
    lr: f64,
) -> PyResult<String> {
    let records = corpus::read_corpus(&path, corpus::DEFAULT_MAX_ARITY).map_err(runtime_err)?;
    let cfg = BenchConfig {
        batch_size,
        mode: BenchMode::from_str(mode).map_err(PyValueError::new_err)?,
        method: BenchMethod::from_str(method).map_err(PyValueError::new_err)?,
        hidden_dim: hidden,
        input_dim: hidden * 2,
        seed,
        lr,
        collect_plan: false,
    };
    let outcome = run_bench(&records, &cfg).map_err(runtime_err)?;
    serde_json::to_string(&outcome.report).map_err(runtime_err)
}

#[pymodule]
#[pyo3(name = "jitbatch")]
fn jitbatch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyParam>()?;
    m.add_class::<PyLazy>()?;
    m.add_class::<PyScope>()?;
    m.add_class::<PyTreeLstm>()?;
    m.add_function(wrap_pyfunction!(backward, m)?)?;
    m.add_function(wrap_pyfunction!(sum_to_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_launches, m)?)?;
    m.add_function(wrap_pyfunction!(reset_kernel_launches, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_json, m)?)?;
    m.add_function(wrap_pyfunction!(bench_json, m)?)?;
    Ok(())
}
