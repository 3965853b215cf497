//! Inference shared by the HTTP server and the command line, so both
//! produce byte-identical labels for the same inputs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use voxlabel_core::active::DEFAULT_DROPOUT;
use voxlabel_core::graphcut::{refine_prediction, segment_scribbles, EnergyParams};
use voxlabel_core::likelihood::DEFAULT_BINS;
use voxlabel_core::model::{load_checkpoint, ReferenceModel};
use voxlabel_core::volume::nifti;
use voxlabel_core::{ClickSet, Error as CoreError, LabelMask, ScribbleMask, Volume};

use crate::error::{ApiError, ApiResult};
use crate::manifest::{AppManifest, ModelKind};

/// The "params" part of an inference request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferParams {
    pub clicks: ClickSet,
    /// Scribbles model only: refine `base_model`'s prediction instead of
    /// fitting intensity histograms.
    pub refine: bool,
    pub base_model: Option<String>,
    pub energy: Option<EnergyParams>,
}

impl InferParams {
    pub fn from_json(bytes: &[u8]) -> ApiResult<Self> {
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(Self::default());
        }
        serde_json::from_slice(bytes).map_err(|e| ApiError::bad_params(format!("params: {e}")))
    }
}

/// Loaded checkpoints keyed by model name; absent means untrained.
pub type ModelSnapshot = HashMap<String, Arc<ReferenceModel>>;

/// Loads every learned model whose checkpoint file exists.
pub fn load_models(manifest: &AppManifest, root: &Path) -> ApiResult<ModelSnapshot> {
    let mut out = HashMap::new();
    for (name, spec) in &manifest.models {
        if !spec.kind.is_learned() {
            continue;
        }
        let Some(path) = manifest.checkpoint_path(root, name) else {
            continue;
        };
        match load_checkpoint(&path) {
            Ok((m, _)) => {
                out.insert(name.clone(), Arc::new(m));
            }
            Err(CoreError::MissingFile(_)) => {}
            Err(e) => return Err(ApiError::internal(format!("model {name}: {e}"))),
        }
    }
    Ok(out)
}

/// Model used to score images for active learning. Falls back to an
/// all-zero model while the configured one has no checkpoint.
pub fn active_learning_model(manifest: &AppManifest, models: &ModelSnapshot) -> ReferenceModel {
    manifest
        .active_model()
        .and_then(|m| models.get(m))
        .map(|m| (**m).clone())
        .unwrap_or_else(|| ReferenceModel::zeros(DEFAULT_DROPOUT))
}

fn learned<'a>(models: &'a ModelSnapshot, manifest: &AppManifest, name: &str) -> ApiResult<&'a ReferenceModel> {
    let spec = manifest
        .models
        .get(name)
        .ok_or_else(|| ApiError::new(404, "UnknownModel", format!("no model named {name:?}")))?;
    if !spec.kind.is_learned() {
        return Err(ApiError::bad_params(format!("model {name:?} has no learned weights")));
    }
    models
        .get(name)
        .map(Arc::as_ref)
        .ok_or_else(|| ApiError::new(409, "ModelUntrained", format!("model {name:?} has no checkpoint yet")))
}

/// Runs model `name` on `volume`.
pub fn infer(
    manifest: &AppManifest,
    models: &ModelSnapshot,
    name: &str,
    volume: &Volume,
    params: &InferParams,
    scribbles: Option<&ScribbleMask>,
) -> ApiResult<LabelMask> {
    let spec = manifest
        .models
        .get(name)
        .ok_or_else(|| ApiError::new(404, "UnknownModel", format!("no model named {name:?}")))?;
    params.clicks.validate(volume.dims())?;
    let threshold = |m: &ReferenceModel, clicks: Option<&ClickSet>| -> ApiResult<LabelMask> {
        Ok(m.predict(volume, clicks, false, 0)?.threshold(0.5))
    };
    match spec.kind {
        ModelKind::Deepedit => threshold(learned(models, manifest, name)?, Some(&params.clicks)),
        ModelKind::Deepgrow => {
            if params.clicks.positive.is_empty() {
                return Err(ApiError::new(400, "MissingClicks", "deepgrow needs at least one positive click"));
            }
            threshold(learned(models, manifest, name)?, Some(&params.clicks))
        }
        ModelKind::Segmentation => threshold(learned(models, manifest, name)?, None),
        ModelKind::Scribbles => {
            let s = scribbles.ok_or_else(|| {
                ApiError::new(400, "MissingScribbles", format!("model {name:?} needs a scribbles volume"))
            })?;
            let energy = params.energy.or(spec.params.energy).unwrap_or_default();
            if params.refine {
                let base = params
                    .base_model
                    .as_deref()
                    .ok_or_else(|| ApiError::bad_params("refine requires base_model"))?;
                let prob = learned(models, manifest, base)?.predict(volume, Some(&params.clicks), false, 0)?;
                Ok(refine_prediction(&prob, volume, Some(s), &energy)?)
            } else {
                Ok(segment_scribbles(volume, s, &energy, spec.params.bins.unwrap_or(DEFAULT_BINS))?)
            }
        }
    }
}

/// Parses a scribble upload ({0, 2, 3} voxels) and checks it against the
/// image grid.
pub fn parse_scribbles(bytes: &[u8], volume: &Volume) -> ApiResult<ScribbleMask> {
    let v = nifti::read(bytes).map_err(|e| ApiError::new(400, "BadScribbles", e.to_string()))?;
    if v.dims() != volume.dims() {
        return Err(CoreError::DimMismatch {
            expected: volume.dims(),
            found: v.dims(),
        }
        .into());
    }
    ScribbleMask::from_volume(&v).map_err(|e| ApiError::new(400, "BadScribbles", e.to_string()))
}

/// Gzipped NIfTI of `mask` on `source`'s grid and affine.
pub fn encode_label(mask: &LabelMask, source: &Volume) -> Vec<u8> {
    let data = mask.data().iter().map(|&b| f32::from(b)).collect();
    let v = source.with_data(data).expect("mask shares the source grid");
    nifti::write(&v, true)
}
