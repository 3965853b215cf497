//! Python bindings: volumes and masks, scribble segmentation, click
//! simulation, the reference model, active-learning scores, the planner and
//! the datastore.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use voxlabel_core::active::{self, Strategy};
use voxlabel_core::datastore::Datastore as CoreDatastore;
use voxlabel_core::graphcut::{segment_scribbles as core_segment, EnergyParams};
use voxlabel_core::guidance::simulate_clicks as core_simulate;
use voxlabel_core::likelihood::DEFAULT_BINS;
use voxlabel_core::model::{self, TrainConfig};
use voxlabel_core::planner;
use voxlabel_core::volume::{self as vol, nifti};
use voxlabel_core::{ClickSet, Dims};

create_exception!(voxlabel, VoxlabelError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    VoxlabelError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

#[pyclass(module = "voxlabel", from_py_object)]
#[derive(Clone)]
pub struct Volume(vol::Volume);

#[pymethods]
impl Volume {
    #[new]
    #[pyo3(signature = (dims, data, spacing = None))]
    fn new(dims: Dims, data: Vec<f32>, spacing: Option<[f64; 3]>) -> PyResult<Self> {
        let v = vol::Volume::with_spacing(dims, spacing.unwrap_or([1.0; 3]), data).map_err(err)?;
        Ok(Self(v))
    }

    /// Parses NIfTI-1 bytes, gzipped or plain.
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        nifti::read(data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(err)?;
        Self::from_bytes(&bytes)
    }

    #[pyo3(signature = (gzip = true))]
    fn to_bytes<'py>(&self, py: Python<'py>, gzip: bool) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &nifti::write(&self.0, gzip))
    }

    fn write(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, nifti::write(&self.0, path.ends_with(".gz"))).map_err(err)
    }

    #[getter]
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    #[getter]
    fn affine(&self) -> [[f64; 4]; 4] {
        *self.0.affine()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Volume(dims={:?}, spacing={:?})", self.0.dims(), self.0.spacing())
    }
}

#[pyclass(module = "voxlabel", from_py_object)]
#[derive(Clone)]
pub struct LabelMask(vol::LabelMask);

#[pymethods]
impl LabelMask {
    #[new]
    fn new(dims: Dims, data: Vec<u8>) -> PyResult<Self> {
        vol::LabelMask::new(dims, data).map(Self).map_err(err)
    }

    /// Binary mask from a label volume (nonzero is foreground).
    #[staticmethod]
    fn from_volume(v: &Volume) -> PyResult<Self> {
        vol::LabelMask::from_volume(&v.0).map(Self).map_err(err)
    }

    /// Gzipped NIfTI on `like`'s grid.
    fn to_bytes<'py>(&self, py: Python<'py>, like: &Volume) -> PyResult<Bound<'py, PyBytes>> {
        let data = self.0.data().iter().map(|&b| f32::from(b)).collect();
        let v = like.0.with_data(data).map_err(err)?;
        Ok(PyBytes::new(py, &nifti::write(&v, true)))
    }

    #[getter]
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    #[getter]
    fn data(&self) -> Vec<u8> {
        self.0.data().to_vec()
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn __repr__(&self) -> String {
        format!("LabelMask(dims={:?}, count={})", self.0.dims(), self.0.count())
    }
}

#[pyfunction]
fn dice(a: &LabelMask, b: &LabelMask) -> PyResult<f64> {
    vol::dice(&a.0, &b.0).map_err(err)
}

/// Graph-cut segmentation from a scribble volume (2 = foreground,
/// 3 = background, 0 = unmarked).
#[pyfunction]
#[pyo3(signature = (volume, scribbles, lambda_pair = None, bins = DEFAULT_BINS))]
fn segment_scribbles(
    py: Python<'_>,
    volume: &Volume,
    scribbles: &Volume,
    lambda_pair: Option<f64>,
    bins: usize,
) -> PyResult<LabelMask> {
    let s = vol::ScribbleMask::from_volume(&scribbles.0).map_err(err)?;
    let mut p = EnergyParams::default();
    if let Some(l) = lambda_pair {
        p.lambda_pair = l;
    }
    let v = &volume.0;
    py.detach(|| core_segment(v, &s, &p, bins)).map(LabelMask).map_err(err)
}

/// Corrective clicks as `{"foreground": [...], "background": [...]}`.
#[pyfunction]
#[pyo3(signature = (pred, gt, max_clicks = 5, seed = 0))]
fn simulate_clicks<'py>(
    py: Python<'py>,
    pred: &LabelMask,
    gt: &LabelMask,
    max_clicks: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let c = core_simulate(&pred.0, &gt.0, max_clicks, seed).map_err(err)?;
    to_py(py, &c)
}

#[pyclass(module = "voxlabel", skip_from_py_object)]
#[derive(Clone)]
pub struct ReferenceModel(model::ReferenceModel);

#[pymethods]
impl ReferenceModel {
    #[staticmethod]
    #[pyo3(signature = (dropout_rate = active::DEFAULT_DROPOUT))]
    fn zeros(dropout_rate: f64) -> Self {
        Self(model::ReferenceModel::zeros(dropout_rate))
    }

    #[staticmethod]
    #[pyo3(signature = (seed, scale = 1.0, dropout_rate = active::DEFAULT_DROPOUT))]
    fn random(seed: u64, scale: f64, dropout_rate: f64) -> Self {
        Self(model::ReferenceModel::random(seed, scale, dropout_rate))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        model::load_checkpoint(Path::new(path)).map(|(m, _)| Self(m)).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model::save_checkpoint(Path::new(path), &self.0, None).map_err(err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    /// Foreground probabilities. `clicks` is a dict with optional
    /// "foreground" and "background" coordinate lists.
    #[pyo3(signature = (volume, clicks = None, stochastic = false, seed = 0))]
    fn predict(
        &self,
        volume: &Volume,
        clicks: Option<&Bound<'_, PyAny>>,
        stochastic: bool,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let clicks: Option<ClickSet> = clicks.map(from_py).transpose()?;
        let p = self.0.predict(&volume.0, clicks.as_ref(), stochastic, seed).map_err(err)?;
        Ok(p.data)
    }

    /// Trains a copy on `(volume, mask)` pairs; returns the new model and
    /// the report as a dict. `config` overrides training settings by name.
    #[pyo3(signature = (data, config = None, val = None))]
    fn train<'py>(
        &self,
        py: Python<'py>,
        data: Vec<(Volume, LabelMask)>,
        config: Option<&Bound<'py, PyDict>>,
        val: Option<Vec<(Volume, LabelMask)>>,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let cfg: TrainConfig = match config {
            Some(c) => from_py(c.as_any())?,
            None => TrainConfig::default(),
        };
        let unwrap = |d: Vec<(Volume, LabelMask)>| d.into_iter().map(|(v, m)| (v.0, m.0)).collect::<Vec<_>>();
        let (train_set, val_set) = (unwrap(data), unwrap(val.unwrap_or_default()));
        let m = &self.0;
        let (trained, report) = py.detach(|| model::train(m, &train_set, &cfg, &val_set)).map_err(err)?;
        Ok((Self(trained), to_py(py, &report)?))
    }

    fn __repr__(&self) -> String {
        format!("ReferenceModel(dropout_rate={})", self.0.dropout_rate)
    }
}

#[pyfunction]
#[pyo3(signature = (model, volume, n_passes = active::DEFAULT_PASSES, dropout_rate = active::DEFAULT_DROPOUT, seed = 0))]
fn epistemic_score(model: &ReferenceModel, volume: &Volume, n_passes: usize, dropout_rate: f64, seed: u64) -> PyResult<f64> {
    active::epistemic_score(&model.0, &volume.0, n_passes, dropout_rate, seed).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (model, volume, n_augment = active::DEFAULT_AUGMENTATIONS, seed = 0))]
fn aleatoric_score(model: &ReferenceModel, volume: &Volume, n_augment: usize, seed: u64) -> PyResult<f64> {
    active::aleatoric_score(&model.0, &volume.0, n_augment, seed).map_err(err)
}

/// Plan as a dict for the given images and memory budget.
#[pyfunction]
fn plan<'py>(py: Python<'py>, images: Vec<Volume>, budget_bytes: u64) -> PyResult<Bound<'py, PyAny>> {
    let stats = planner::dataset_stats(images.iter().map(|v| &v.0)).map_err(err)?;
    to_py(py, &planner::plan(&stats, budget_bytes).map_err(err)?)
}

#[pyclass(module = "voxlabel")]
pub struct Datastore(CoreDatastore);

#[pymethods]
impl Datastore {
    #[new]
    fn open(root: &str) -> PyResult<Self> {
        CoreDatastore::open_or_init(root).map(Self).map_err(err)
    }

    fn ids(&self) -> Vec<String> {
        self.0.ids()
    }

    fn add_image(&mut self, image_id: &str, data: &[u8]) -> PyResult<String> {
        self.0.add_image(image_id, data).map_err(err)
    }

    #[pyo3(signature = (image_id, data, tag = "final"))]
    fn save_label(&mut self, image_id: &str, data: &[u8], tag: &str) -> PyResult<()> {
        self.0.save_label(image_id, tag, data).map(|_| ()).map_err(err)
    }

    fn load(&self, image_id: &str) -> PyResult<Volume> {
        self.0.load(image_id).map(Volume).map_err(err)
    }

    /// `(labeled, unlabeled)` image ids.
    fn partition(&self) -> (Vec<String>, Vec<String>) {
        self.0.partition()
    }

    /// Next unlabeled image under `strategy` ("first", "random",
    /// "epistemic" or "tta"), as a dict.
    #[pyo3(signature = (strategy, model, seed = 0))]
    fn next_sample<'py>(
        &self,
        py: Python<'py>,
        strategy: &str,
        model: &ReferenceModel,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let s = Strategy::from_name(strategy, seed).ok_or_else(|| err(format!("unknown strategy {strategy:?}")))?;
        let (_, pool) = self.0.partition();
        to_py(py, &active::next(&pool, &s, &model.0, &self.0).map_err(err)?)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pymodule]
fn voxlabel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VoxlabelError", m.py().get_type::<VoxlabelError>())?;
    m.add_class::<Volume>()?;
    m.add_class::<LabelMask>()?;
    m.add_class::<ReferenceModel>()?;
    m.add_class::<Datastore>()?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(segment_scribbles, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_clicks, m)?)?;
    m.add_function(wrap_pyfunction!(epistemic_score, m)?)?;
    m.add_function(wrap_pyfunction!(aleatoric_score, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    Ok(())
}
