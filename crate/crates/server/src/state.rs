use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use voxlabel_core::active::DEFAULT_DROPOUT;
use voxlabel_core::datastore::Datastore;
use voxlabel_core::model::{save_checkpoint, train_with_progress, ReferenceModel, TrainConfig};
use voxlabel_core::planner::{plan_with, save_plan, Plan, PLAN_FILE};
use voxlabel_core::Volume;

use crate::engine::{load_models, ModelSnapshot};
use crate::error::{ApiError, ApiResult};
use crate::manifest::AppManifest;

pub const DEFAULT_PORT: u16 = 8123;
pub const DEFAULT_MAX_BODY: usize = 512 * 1024 * 1024;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub root: PathBuf,
    pub port: u16,
    pub manifest: Option<PathBuf>,
    pub budget_bytes: Option<u64>,
    pub max_body_bytes: usize,
    pub session_ttl: Duration,
    /// Static web client served under `/ui` when set.
    pub ui_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            port: DEFAULT_PORT,
            manifest: None,
            budget_bytes: None,
            max_body_bytes: DEFAULT_MAX_BODY,
            session_ttl: DEFAULT_SESSION_TTL,
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_active(self) -> bool {
        matches!(self, JobState::Pending | JobState::Running)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: String,
    pub model: String,
    pub state: JobState,
    pub config: TrainConfig,
    pub epoch: usize,
    pub epochs: usize,
    pub loss: Vec<f64>,
    pub val_dice: Vec<f64>,
    pub train_images: usize,
    pub val_images: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    view: JobView,
    cancel: Arc<AtomicBool>,
}

struct Session {
    volume: Arc<Volume>,
    expires_at: SystemTime,
}

/// Shared server state. Inference clones the model snapshot `Arc` at request
/// start; the trainer swaps in a new snapshot only after its checkpoint is on
/// disk.
pub struct AppState {
    pub config: ServerConfig,
    pub manifest: AppManifest,
    pub datastore: RwLock<Datastore>,
    models: RwLock<Arc<ModelSnapshot>>,
    job: Mutex<Option<Job>>,
    sessions: Mutex<HashMap<String, Session>>,
    plan: RwLock<Option<Plan>>,
}

pub fn unix_secs(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn random_id() -> String {
    hex::encode(rand::random::<u128>().to_be_bytes())
}

impl AppState {
    pub fn open(config: ServerConfig) -> ApiResult<Arc<Self>> {
        let manifest = AppManifest::load(config.manifest.as_deref(), &config.root)?;
        // an empty --root defers to the manifest's datastore entry
        let root = if config.root.as_os_str().is_empty() {
            manifest.datastore.clone().unwrap_or_else(|| PathBuf::from("."))
        } else {
            config.root.clone()
        };
        let config = ServerConfig { root, ..config };
        let datastore = Datastore::open_or_init(&config.root)?;
        let models = load_models(&manifest, &config.root)?;
        let state = Arc::new(Self {
            datastore: RwLock::new(datastore),
            models: RwLock::new(Arc::new(models)),
            job: Mutex::new(None),
            sessions: Mutex::new(HashMap::new()),
            plan: RwLock::new(None),
            manifest,
            config,
        });
        state.refresh_plan();
        Ok(state)
    }

    pub fn models(&self) -> Arc<ModelSnapshot> {
        self.models.read().unwrap().clone()
    }

    pub fn plan(&self) -> Option<Plan> {
        self.plan.read().unwrap().clone()
    }

    /// Recomputes the plan when a budget is configured and labeled data
    /// exists; otherwise picks up an existing `plan.json`.
    pub fn refresh_plan(&self) {
        let budget = self.config.budget_bytes.or(self.manifest.planner.budget_bytes);
        let computed = budget.and_then(|b| {
            let stats = self.datastore.read().unwrap().stats().ok()?;
            match plan_with(&stats, b, &self.manifest.planner.config) {
                Ok(p) => {
                    if let Err(e) = save_plan(&self.config.root, &p) {
                        log::warn!("could not write {PLAN_FILE}: {e}");
                    }
                    Some(p)
                }
                Err(e) => {
                    log::warn!("planner: {e}");
                    None
                }
            }
        });
        let plan = computed.or_else(|| {
            let bytes = std::fs::read(self.config.root.join(PLAN_FILE)).ok()?;
            serde_json::from_slice(&bytes).ok()
        });
        *self.plan.write().unwrap() = plan;
    }

    pub fn add_session(&self, volume: Volume) -> (String, u64) {
        let id = random_id();
        let expires_at = SystemTime::now() + self.config.session_ttl;
        let mut sessions = self.sessions.lock().unwrap();
        let now = SystemTime::now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(
            id.clone(),
            Session {
                volume: Arc::new(volume),
                expires_at,
            },
        );
        (id, unix_secs(expires_at))
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Volume>> {
        let sessions = self.sessions.lock().unwrap();
        match sessions.get(id) {
            Some(s) if s.expires_at > SystemTime::now() => Ok(s.volume.clone()),
            _ => Err(ApiError::new(404, "UnknownSession", format!("no live session {id:?}"))),
        }
    }

    pub fn job_view(&self) -> Option<JobView> {
        self.job.lock().unwrap().as_ref().map(|j| j.view.clone())
    }

    pub fn cancel_job(&self) -> ApiResult<JobView> {
        let guard = self.job.lock().unwrap();
        match guard.as_ref() {
            Some(j) if j.view.state.is_active() => {
                j.cancel.store(true, Ordering::SeqCst);
                Ok(j.view.clone())
            }
            _ => Err(ApiError::new(404, "NoActiveJob", "no training job is running")),
        }
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobView)) {
        if let Some(j) = self.job.lock().unwrap().as_mut() {
            if j.view.job_id == id {
                f(&mut j.view);
            }
        }
    }

    /// Registers a training job for `model` and runs it on a blocking
    /// thread. The check and the registration happen under one lock, so
    /// concurrent requests start at most one job.
    pub fn start_training(
        self: &Arc<Self>,
        model: &str,
        overrides: serde_json::Map<String, serde_json::Value>,
    ) -> ApiResult<JobView> {
        let spec = self
            .manifest
            .models
            .get(model)
            .ok_or_else(|| ApiError::new(404, "UnknownModel", format!("no model named {model:?}")))?;
        let mode = spec
            .kind
            .train_mode()
            .ok_or_else(|| ApiError::bad_params(format!("model {model:?} is not trainable")))?;
        let mut cfg_json = serde_json::to_value(TrainConfig {
            mode,
            ..Default::default()
        })
        .expect("config serializes");
        let obj = cfg_json.as_object_mut().expect("config is an object");
        obj.extend(spec.params.train.clone());
        obj.extend(overrides);
        let cfg: TrainConfig =
            serde_json::from_value(cfg_json).map_err(|e| ApiError::bad_params(format!("train config: {e}")))?;
        cfg.validate()?;

        let mut guard = self.job.lock().unwrap();
        if let Some(j) = guard.as_ref() {
            if j.view.state.is_active() {
                return Err(ApiError::new(
                    409,
                    "JobAlreadyRunning",
                    format!("job {} is {:?}", j.view.job_id, j.view.state),
                ));
            }
        }
        let pairs = self.datastore.read().unwrap().labeled_pairs()?;
        if pairs.is_empty() {
            return Err(ApiError::new(400, "NoLabeledData", "no image has a final label"));
        }
        // 80/20 split in insertion order
        let n_val = pairs.len() / 5;
        let data: Vec<(Volume, voxlabel_core::LabelMask)> = pairs.into_iter().map(|(_, v, m)| (v, m)).collect();
        let (train_set, val_set) = data.split_at(data.len() - n_val);
        let (train_set, val_set) = (train_set.to_vec(), val_set.to_vec());

        let view = JobView {
            job_id: random_id(),
            model: model.to_string(),
            state: JobState::Running,
            epoch: 0,
            epochs: cfg.epochs,
            loss: Vec::new(),
            val_dice: Vec::new(),
            train_images: train_set.len(),
            val_images: val_set.len(),
            config: cfg.clone(),
            error: None,
        };
        let cancel = Arc::new(AtomicBool::new(false));
        *guard = Some(Job {
            view: view.clone(),
            cancel: cancel.clone(),
        });
        drop(guard);

        let start = self
            .models()
            .get(model)
            .map(|m| (**m).clone())
            .unwrap_or_else(|| ReferenceModel::zeros(spec.params.dropout_rate.unwrap_or(DEFAULT_DROPOUT)));
        let state = self.clone();
        let (job_id, model) = (view.job_id.clone(), model.to_string());
        std::thread::spawn(move || state.run_job(&job_id, &model, start, &train_set, &val_set, &cfg, &cancel));
        Ok(view)
    }

    #[allow(clippy::too_many_arguments)]
    fn run_job(
        &self,
        job_id: &str,
        model: &str,
        start: ReferenceModel,
        train_set: &[(Volume, voxlabel_core::LabelMask)],
        val_set: &[(Volume, voxlabel_core::LabelMask)],
        cfg: &TrainConfig,
        cancel: &AtomicBool,
    ) {
        log::info!("job {job_id}: training {model} on {} images", train_set.len());
        let result = train_with_progress(&start, train_set, cfg, val_set, |p| {
            self.update_job(job_id, |v| {
                v.epoch = p.epoch;
                v.loss.push(p.loss);
                v.val_dice.push(p.val_dice);
            });
            !cancel.load(Ordering::SeqCst)
        });
        let outcome = result.map_err(|e| e.to_string()).and_then(|(trained, report)| {
            if report.cancelled {
                return Ok(JobState::Cancelled);
            }
            let path = self
                .manifest
                .checkpoint_path(&self.config.root, model)
                .ok_or_else(|| format!("model {model} has no checkpoint path"))?;
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            save_checkpoint(&path, &trained, Some(cfg)).map_err(|e| e.to_string())?;
            let mut models = self.models.write().unwrap();
            let mut next = (**models).clone();
            next.insert(model.to_string(), Arc::new(trained));
            *models = Arc::new(next);
            Ok(JobState::Done)
        });
        match outcome {
            Ok(s) => {
                log::info!("job {job_id}: {s:?}");
                self.update_job(job_id, |v| v.state = s);
                if s == JobState::Done {
                    self.refresh_plan();
                }
            }
            Err(e) => {
                log::error!("job {job_id} failed: {e}");
                self.update_job(job_id, |v| {
                    v.state = JobState::Failed;
                    v.error = Some(e);
                });
            }
        }
    }
}
