//! Python bindings exposing the main types and operations: bank
//! construction and persistence, retrieval, the RLE codec, trajectory
//! smoothing, and token merging.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rfv_core::bank::{decode_rle as rle_decode, encode_rle as rle_encode, Bank};
use rfv_core::bank::{HandTrajectory, TrajPoint};
use rfv_core::encoders::{reduce_tokens as core_reduce, Token};
use rfv_core::error::Error;
use rfv_core::midlevel::smooth_trajectory as core_smooth;
use rfv_core::retriever::{
    build_index, embed_text as core_embed, mips_topk, retrieve_per_view, EmbedderConfig,
    EmbeddingVector, RetrievalIndex,
};
use rfv_core::sim::{default_suite, synthesize_human_bank, SimConfig, PALETTE};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A loaded (or synthesized) video bank.
#[pyclass(name = "Bank")]
struct PyBank {
    inner: Bank,
}

#[pymethods]
impl PyBank {
    /// Load a bank directory written by `save` or the CLI.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyBank {
            inner: Bank::load(std::path::Path::new(path)).map_err(to_py_err)?,
        })
    }

    /// Synthesize an annotated human-video bank from the built-in tasks.
    #[staticmethod]
    #[pyo3(signature = (per_task=4, seed=0, dim=64))]
    fn synth(per_task: usize, seed: u64, dim: usize) -> PyResult<Self> {
        let sim = SimConfig::default();
        let mut specs = default_suite(&sim);
        for spec in &mut specs {
            spec.colors = (0..PALETTE.len()).collect();
        }
        let embedder = EmbedderConfig { dim };
        let bank =
            synthesize_human_bank(&specs, per_task, seed, &sim, &embedder).map_err(to_py_err)?;
        Ok(PyBank { inner: bank })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn entry_ids(&self) -> Vec<String> {
        self.inner.entries().iter().map(|e| e.entry_id.clone()).collect()
    }

    /// (text, indoor) for one entry.
    fn narration(&self, entry_id: &str) -> PyResult<(String, bool)> {
        let entry = self
            .inner
            .get_entry(entry_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown entry {entry_id}")))?;
        Ok((entry.narration.text.clone(), entry.narration.indoor))
    }

    /// Decoded affordance mask bitmap for one entry, row-major 0/1.
    fn mask_bitmap(&self, entry_id: &str) -> PyResult<(usize, usize, Vec<u8>)> {
        let entry = self
            .inner
            .get_entry(entry_id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown entry {entry_id}")))?;
        let bitmap = entry.mask.to_bitmap().map_err(to_py_err)?;
        Ok((entry.mask.width, entry.mask.height, bitmap))
    }
}

/// Exact MIPS index over a bank's indoor entries.
#[pyclass(name = "RetrievalIndex")]
struct PyIndex {
    index: RetrievalIndex,
    embedder: EmbedderConfig,
}

#[pymethods]
impl PyIndex {
    #[staticmethod]
    #[pyo3(signature = (bank, dim=64))]
    fn build(bank: &PyBank, dim: usize) -> PyResult<Self> {
        let embedder = EmbedderConfig { dim };
        let view = bank.inner.filter_indoor();
        let index = build_index(view.entries(), &embedder).map_err(to_py_err)?;
        Ok(PyIndex { index, embedder })
    }

    fn __len__(&self) -> usize {
        self.index.len()
    }

    /// Exact top-k by inner product: list of (entry_id, score).
    fn topk(&self, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let q = core_embed(query, &self.embedder).map_err(to_py_err)?;
        let list = mips_topk(&self.index, &q, k).map_err(to_py_err)?;
        Ok(list.items)
    }

    /// Independent top-k per camera view: dict view -> [(id, score)].
    fn topk_per_view(
        &self,
        query: &str,
        views: Vec<String>,
        k: usize,
    ) -> PyResult<std::collections::BTreeMap<String, Vec<(String, f64)>>> {
        let out = retrieve_per_view(&self.index, query, &views, k, &self.embedder)
            .map_err(to_py_err)?;
        Ok(out.into_iter().map(|(view, list)| (view, list.items)).collect())
    }
}

/// Row-major RLE encode; runs start with a background run.
#[pyfunction]
fn encode_rle(bitmap: Vec<u8>) -> Vec<usize> {
    rle_encode(&bitmap)
}

#[pyfunction]
fn decode_rle(runs: Vec<usize>, width: usize, height: usize) -> PyResult<Vec<u8>> {
    rle_decode(&runs, width, height).map_err(to_py_err)
}

/// Cubic smoothing spline over (frame, x, y) points, resampled at every
/// integer frame between the first and last input frame.
#[pyfunction]
fn smooth_trajectory(points: Vec<(usize, f64, f64)>, lam: f64) -> PyResult<Vec<(usize, f64, f64)>> {
    let traj = HandTrajectory {
        points: points
            .into_iter()
            .map(|(frame, x, y)| TrajPoint { frame, x, y })
            .collect(),
        smoothed: false,
    };
    let smoothed = core_smooth(&traj, lam).map_err(to_py_err)?;
    Ok(smoothed.points.into_iter().map(|p| (p.frame, p.x, p.y)).collect())
}

/// Hashed bag-of-words embedding, L2-normalized.
#[pyfunction]
#[pyo3(signature = (text, dim=64))]
fn embed_text(text: &str, dim: usize) -> PyResult<Vec<f64>> {
    Ok(core_embed(text, &EmbedderConfig { dim }).map_err(to_py_err)?.values)
}

/// Bi-encoder relevance: exact dot product.
#[pyfunction]
fn relevance(query: Vec<f64>, memory: Vec<f64>) -> PyResult<f64> {
    rfv_core::retriever::relevance(
        &EmbeddingVector { values: query },
        &EmbeddingVector { values: memory },
    )
    .map_err(to_py_err)
}

/// Token merging: frames of token vectors in, (vectors, sizes) out, with
/// exactly ceil(keep_fraction * N) tokens kept.
#[pyfunction]
fn reduce_tokens(
    frames: Vec<Vec<Vec<f64>>>,
    keep_fraction: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let frames: Vec<Vec<Token>> = frames
        .into_iter()
        .map(|frame| frame.into_iter().map(Token::new).collect())
        .collect();
    let seq = core_reduce(&frames, keep_fraction).map_err(to_py_err)?;
    let sizes = seq.tokens.iter().map(|t| t.size).collect();
    let vectors = seq.tokens.into_iter().map(|t| t.vector).collect();
    Ok((vectors, sizes))
}

#[pymodule]
fn rfv_rust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBank>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(encode_rle, m)?)?;
    m.add_function(wrap_pyfunction!(decode_rle, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(embed_text, m)?)?;
    m.add_function(wrap_pyfunction!(relevance, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_tokens, m)?)?;
    Ok(())
}
