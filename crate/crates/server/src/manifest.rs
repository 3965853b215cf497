//! Declarative app description: which models exist, where their checkpoints
//! live, and which selection strategies are enabled.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use voxlabel_core::graphcut::EnergyParams;
use voxlabel_core::model::TrainMode;
use voxlabel_core::planner::PlannerConfig;

use crate::error::{ApiError, ApiResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Deepedit,
    Deepgrow,
    Segmentation,
    Scribbles,
}

impl ModelKind {
    /// Training schedule for learned kinds; `None` for scribbles.
    pub fn train_mode(self) -> Option<TrainMode> {
        match self {
            ModelKind::Deepedit => Some(TrainMode::Deepedit),
            ModelKind::Deepgrow => Some(TrainMode::Deepgrow),
            ModelKind::Segmentation => Some(TrainMode::Automatic),
            ModelKind::Scribbles => None,
        }
    }

    pub fn is_learned(self) -> bool {
        self.train_mode().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    /// Relative paths resolve against the datastore root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub energy: Option<EnergyParams>,
    pub bins: Option<usize>,
    pub dropout_rate: Option<f64>,
    /// Overrides applied to every training run of this model.
    pub train: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    pub budget_bytes: Option<u64>,
    #[serde(flatten)]
    pub config: PlannerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppManifest {
    pub name: String,
    pub models: IndexMap<String, ModelSpec>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub planner: PlannerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datastore: Option<PathBuf>,
    /// Model whose snapshot scores images for active learning; defaults to
    /// the first learned model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_learning_model: Option<String>,
}

fn default_strategies() -> Vec<String> {
    ["first", "random", "epistemic", "tta"].map(String::from).to_vec()
}

impl Default for AppManifest {
    fn default() -> Self {
        let spec = |kind, ckpt: Option<&str>| ModelSpec {
            kind,
            checkpoint: ckpt.map(PathBuf::from),
            params: ModelParams::default(),
        };
        let mut models = IndexMap::new();
        models.insert("deepedit".into(), spec(ModelKind::Deepedit, Some("models/deepedit.lfm")));
        models.insert("deepgrow".into(), spec(ModelKind::Deepgrow, Some("models/deepgrow.lfm")));
        models.insert("segmentation".into(), spec(ModelKind::Segmentation, Some("models/segmentation.lfm")));
        models.insert("scribbles".into(), spec(ModelKind::Scribbles, None));
        Self {
            name: "voxlabel".into(),
            models,
            strategies: default_strategies(),
            planner: PlannerSettings::default(),
            datastore: None,
            active_learning_model: None,
        }
    }
}

impl AppManifest {
    pub fn from_json(bytes: &[u8]) -> ApiResult<Self> {
        let m: AppManifest =
            serde_json::from_slice(bytes).map_err(|e| ApiError::bad_params(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    /// Reads `path`, or `root/manifest.json` when present, else the default.
    pub fn load(path: Option<&Path>, root: &Path) -> ApiResult<Self> {
        let candidate = path.map(Path::to_path_buf).unwrap_or_else(|| root.join(MANIFEST_FILE));
        match std::fs::read(&candidate) {
            Ok(b) => Self::from_json(&b),
            Err(_) if path.is_none() => Ok(Self::default()),
            Err(e) => Err(ApiError::bad_params(format!("{}: {e}", candidate.display()))),
        }
    }

    pub fn validate(&self) -> ApiResult<()> {
        for s in &self.strategies {
            if voxlabel_core::active::Strategy::from_name(s, 0).is_none() {
                return Err(ApiError::bad_params(format!("unknown strategy {s:?} in manifest")));
            }
        }
        for (name, spec) in &self.models {
            if spec.kind.is_learned() && spec.checkpoint.is_none() {
                return Err(ApiError::bad_params(format!("model {name:?} needs a checkpoint path")));
            }
        }
        if let Some(m) = &self.active_learning_model {
            match self.models.get(m) {
                Some(spec) if spec.kind.is_learned() => {}
                _ => return Err(ApiError::bad_params(format!("active_learning_model {m:?} is not a learned model"))),
            }
        }
        Ok(())
    }

    pub fn checkpoint_path(&self, root: &Path, model: &str) -> Option<PathBuf> {
        let p = self.models.get(model)?.checkpoint.as_ref()?;
        Some(if p.is_absolute() { p.clone() } else { root.join(p) })
    }

    pub fn active_model(&self) -> Option<&str> {
        self.active_learning_model.as_deref().or_else(|| {
            self.models
                .iter()
                .find(|(_, s)| s.kind.is_learned())
                .map(|(n, _)| n.as_str())
        })
    }
}
