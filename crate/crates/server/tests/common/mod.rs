#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::header::CONTENT_TYPE;
use tempfile::TempDir;
use voxlabel_core::synthetic::SpherePhantom;
use voxlabel_core::volume::nifti;
use voxlabel_core::{LabelMask, Volume};
use voxlabel_server::{router, AppState, ServerConfig};

pub struct TestServer {
    pub base: String,
    pub dir: TempDir,
    pub state: Arc<AppState>,
    pub truths: Vec<(String, Volume, LabelMask)>,
}

/// Writes `n` synthetic phantoms into a fresh root, opens the datastore on
/// it and serves on an ephemeral port.
pub async fn start(n: usize, dims: [usize; 3]) -> TestServer {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut truths = Vec::new();
    for k in 0..n {
        let (v, gt) = SpherePhantom::random(dims, &mut rng).render(rng.gen());
        let id = format!("vol{k}");
        std::fs::write(dir.path().join(format!("{id}.nii.gz")), nifti::write(&v, true)).unwrap();
        truths.push((id, v, gt));
    }
    let state = AppState::open(ServerConfig::new(dir.path())).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    TestServer {
        base: format!("http://{addr}"),
        dir,
        state,
        truths,
    }
}

pub fn mask_bytes(m: &LabelMask, like: &Volume) -> Vec<u8> {
    voxlabel_server::encode_label(m, like)
}

/// Splits a multipart response into named parts.
pub async fn parts(resp: reqwest::Response) -> HashMap<String, (Option<String>, Option<String>, Bytes)> {
    let ct = resp.headers()[CONTENT_TYPE].to_str().unwrap().to_string();
    let boundary = multer::parse_boundary(&ct).unwrap();
    let body = resp.bytes().await.unwrap();
    let stream = futures_util::stream::once(async move { Ok::<Bytes, std::io::Error>(body) });
    let mut mp = multer::Multipart::new(stream, boundary);
    let mut out = HashMap::new();
    while let Some(f) = mp.next_field().await.unwrap() {
        let name = f.name().unwrap().to_string();
        let filename = f.file_name().map(str::to_string);
        let ct = f.content_type().map(|m| m.to_string());
        out.insert(name, (filename, ct, f.bytes().await.unwrap()));
    }
    out
}

pub async fn wait_for_job(client: &reqwest::Client, base: &str) -> serde_json::Value {
    loop {
        let job: serde_json::Value = client.get(format!("{base}/train")).send().await.unwrap().json().await.unwrap();
        let state = job["state"].as_str().unwrap_or("");
        if !matches!(state, "pending" | "running") {
            return job;
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
}

pub fn params_part(json: serde_json::Value) -> reqwest::multipart::Part {
    reqwest::multipart::Part::text(json.to_string()).mime_str("application/json").unwrap()
}

pub fn file_part(bytes: Vec<u8>, name: &str) -> reqwest::multipart::Part {
    reqwest::multipart::Part::bytes(bytes)
        .file_name(name.to_string())
        .mime_str("application/octet-stream")
        .unwrap()
}
