use std::path::Path;
use std::process::{Command, Output};

use bytes::Bytes;
use serde_json::Value;
use voxlabel_core::synthetic::{draw_stroke, SpherePhantom};
use voxlabel_core::volume::nifti;
use voxlabel_core::{LabelMask, ScribbleMask, Volume};
use voxlabel_server::{encode_label, router, AppState, ServerConfig};

fn voxlabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxlabel"))
        .args(args)
        .env_remove("LABEL_SERVER_PORT")
        .env_remove("LABEL_SERVER_ROOT")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_phantom(dir: &Path) -> (Volume, LabelMask) {
    let phantom = SpherePhantom {
        noise: 10.0,
        ..SpherePhantom::centered([16, 16, 16], 5.0)
    };
    let (v, gt) = phantom.render(3);
    std::fs::write(dir.join("img.nii.gz"), nifti::write(&v, true)).unwrap();
    std::fs::write(dir.join("gt.nii.gz"), encode_label(&gt, &v)).unwrap();
    let mut s = ScribbleMask::empty(v.dims());
    draw_stroke(&mut s, [6, 8, 8], [10, 8, 8], 0, ScribbleMask::FOREGROUND);
    draw_stroke(&mut s, [0, 0, 0], [15, 0, 15], 0, ScribbleMask::BACKGROUND);
    let sv = v.with_data(s.data().iter().map(|&x| f32::from(x)).collect()).unwrap();
    std::fs::write(dir.join("scribbles.nii.gz"), nifti::write(&sv, true)).unwrap();
    (v, gt)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn eval_of_identical_files_is_one() {
    let dir = tempfile::tempdir().unwrap();
    write_phantom(dir.path());
    let gt = p(dir.path(), "gt.nii.gz");
    let out = voxlabel(&["eval", &gt, &gt]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.0");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(voxlabel(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(voxlabel(&[]).status.code(), Some(2));
    assert_eq!(voxlabel(&["eval", "only-one"]).status.code(), Some(2));
    assert_eq!(voxlabel(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    write_phantom(dir.path());
    let (img, out) = (p(dir.path(), "img.nii.gz"), p(dir.path(), "out.nii.gz"));
    let res = voxlabel(&["infer", "--model", "scribbles", "--image", &img, "--out", &out]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("MissingScribbles") && err.contains("--scribbles"), "{err}");
    assert!(!Path::new(&out).exists());

    let res = voxlabel(&["infer", "--model", "scribbles", "--image", &img, "--out", &out, "--clicks", "{oops"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--clicks"));
    let res = voxlabel(&["rank", "--root", &dir.path().to_string_lossy(), "--strategy", "entropy"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "nope.nii.gz");
    let res = voxlabel(&["eval", &missing, &missing]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.nii.gz"));
    let out = p(dir.path(), "o.nii.gz");
    write_phantom(dir.path());
    let img = p(dir.path(), "img.nii.gz");
    let res = voxlabel(&["infer", "--model", "deepedit", "--image", &img, "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("ModelUntrained"));
}

#[test]
fn operator_commands() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_string_lossy().into_owned();
    let (v, gt) = write_phantom(dir.path());

    let init = voxlabel(&["datastore-init", "--root", &root]);
    assert_eq!(init.status.code(), Some(0));
    let j = stdout_json(&init);
    // gt and scribbles are images too, from the scanner's point of view
    assert_eq!(j["images"], 3);
    assert!(dir.path().join("index.json").is_file());

    let res = voxlabel(&["plan", "--root", &root, "--budget-bytes", "1000000000"]);
    assert_eq!(res.status.code(), Some(1), "no labeled data yet");

    let ranked = voxlabel(&["rank", "--root", &root, "--strategy", "tta", "--seed", "4"]);
    assert_eq!(ranked.status.code(), Some(0));
    let list = stdout_json(&ranked);
    assert_eq!(list.as_array().unwrap().len(), 3);
    assert_eq!(list[0]["strategy"], "tta");
    assert_eq!(stdout_json(&voxlabel(&["rank", "--root", &root, "--strategy", "tta", "--seed", "4"])), list);

    let empty = LabelMask::empty(v.dims());
    std::fs::write(dir.path().join("pred.nii.gz"), encode_label(&empty, &v)).unwrap();
    let (pred, gtp) = (p(dir.path(), "pred.nii.gz"), p(dir.path(), "gt.nii.gz"));
    let clicks = stdout_json(&voxlabel(&["simulate-clicks", "--pred", &pred, "--gt", &gtp, "--max-clicks", "3"]));
    let fg = clicks["foreground"].as_array().unwrap();
    assert_eq!(fg.len(), 1);
    let c: Vec<usize> = fg[0].as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect();
    assert!(gt.get(c[0], c[1], c[2]));
    assert!(clicks["background"].as_array().unwrap().is_empty());

    let res = voxlabel(&["eval", &pred, &gtp]);
    assert_eq!(String::from_utf8_lossy(&res.stdout).trim(), "0.0");
}

async fn server_label(base: &str, image: Vec<u8>, scribbles: Vec<u8>) -> Bytes {
    let c = reqwest::Client::new();
    let s: Value = c.post(format!("{base}/session")).body(image).send().await.unwrap().json().await.unwrap();
    let sid = s["session_id"].as_str().unwrap();
    let part = reqwest::multipart::Part::bytes(scribbles).file_name("s.nii.gz");
    let form = reqwest::multipart::Form::new().part("scribbles", part);
    let resp = c
        .post(format!("{base}/infer/scribbles?session={sid}"))
        .multipart(form)
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    let ct = resp.headers()[reqwest::header::CONTENT_TYPE].to_str().unwrap().to_string();
    let body = resp.bytes().await.unwrap();
    let stream = futures_util::stream::once(async move { Ok::<Bytes, std::io::Error>(body) });
    let mut mp = multer::Multipart::new(stream, multer::parse_boundary(&ct).unwrap());
    while let Some(f) = mp.next_field().await.unwrap() {
        if f.name() == Some("label") {
            return f.bytes().await.unwrap();
        }
    }
    panic!("no label part");
}

#[test]
fn cli_and_server_labels_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_phantom(dir.path());
    let (img, scr, out) = (
        p(dir.path(), "img.nii.gz"),
        p(dir.path(), "scribbles.nii.gz"),
        p(dir.path(), "cli.nii.gz"),
    );
    let res = voxlabel(&["infer", "--model", "scribbles", "--image", &img, "--scribbles", &scr, "--out", &out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let cli_bytes = std::fs::read(&out).unwrap();
    assert!(stdout_json(&res)["label_voxel_count"].as_u64().unwrap() > 0);

    let server_root = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let server_bytes = rt.block_on(async {
        let state = AppState::open(ServerConfig::new(server_root.path())).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
        server_label(&base, std::fs::read(&img).unwrap(), std::fs::read(&scr).unwrap()).await
    });
    assert_eq!(cli_bytes, server_bytes.to_vec());
}
