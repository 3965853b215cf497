//! Multipart request parsing and the fixed-layout inference response.

use std::collections::HashMap;

use axum::http::{header, HeaderMap};
use axum::response::{IntoResponse, Response};
use bytes::Bytes;
use serde_json::Value;

use crate::error::{ApiError, ApiResult};

pub const BOUNDARY: &str = "voxlabel-part-boundary";
pub const LABEL_FILENAME: &str = "label.nii.gz";

#[derive(Debug, Clone)]
pub struct Part {
    pub filename: Option<String>,
    pub content_type: Option<String>,
    pub data: Bytes,
}

fn content_type(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok())
}

pub fn is_multipart(headers: &HeaderMap) -> bool {
    content_type(headers).is_some_and(|c| c.starts_with("multipart/"))
}

/// Named parts of a multipart body. A bare JSON body is read as the
/// "params" part and an empty body as no parts.
pub async fn parse_request(headers: &HeaderMap, body: Bytes) -> ApiResult<HashMap<String, Part>> {
    let mut parts = HashMap::new();
    let ct = content_type(headers).unwrap_or("");
    if !is_multipart(headers) {
        if body.is_empty() {
            return Ok(parts);
        }
        if ct.starts_with("application/json") {
            let part = Part {
                filename: None,
                content_type: Some(ct.to_string()),
                data: body,
            };
            parts.insert("params".to_string(), part);
            return Ok(parts);
        }
        return Err(ApiError::bad_params(format!("unsupported content type {ct:?}")));
    }
    let boundary = multer::parse_boundary(ct).map_err(|e| ApiError::bad_params(e.to_string()))?;
    let stream = futures_util::stream::once(async move { Ok::<Bytes, std::io::Error>(body) });
    let mut mp = multer::Multipart::new(stream, boundary);
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_params(e.to_string()))? {
        let Some(name) = field.name().map(str::to_string) else {
            continue;
        };
        let filename = field.file_name().map(str::to_string);
        let content_type = field.content_type().map(|m| m.to_string());
        let data = field.bytes().await.map_err(|e| ApiError::bad_params(e.to_string()))?;
        parts.insert(
            name,
            Part {
                filename,
                content_type,
                data,
            },
        );
    }
    Ok(parts)
}

/// `params` (application/json) then `label` (application/octet-stream,
/// filename `label.nii.gz`), separated by [`BOUNDARY`].
pub fn encode_label_parts(meta: &Value, label: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(label.len() + 512);
    out.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"params\"\r\n\
             Content-Type: application/json\r\n\r\n{meta}\r\n\
             --{BOUNDARY}\r\nContent-Disposition: form-data; name=\"label\"; filename=\"{LABEL_FILENAME}\"\r\n\
             Content-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    out.extend_from_slice(label);
    out.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub fn label_response(meta: &Value, label: Vec<u8>) -> Response {
    let ct = format!("multipart/form-data; boundary={BOUNDARY}");
    ([(header::CONTENT_TYPE, ct)], encode_label_parts(meta, &label)).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn response_parses_back() {
        let meta = serde_json::json!({"latency_ms": 1.5, "label_voxel_count": 3});
        let label = vec![0x1f, 0x8b, 0, 13, 10, 45, 45, 255];
        let body = Bytes::from(encode_label_parts(&meta, &label));
        let mut headers = HeaderMap::new();
        headers.insert(
            header::CONTENT_TYPE,
            format!("multipart/form-data; boundary={BOUNDARY}").parse().unwrap(),
        );
        let parts = parse_request(&headers, body).await.unwrap();
        assert_eq!(parts["label"].data.as_ref(), &label[..]);
        assert_eq!(parts["label"].filename.as_deref(), Some(LABEL_FILENAME));
        assert_eq!(parts["label"].content_type.as_deref(), Some("application/octet-stream"));
        assert_eq!(parts["params"].content_type.as_deref(), Some("application/json"));
        let back: Value = serde_json::from_slice(&parts["params"].data).unwrap();
        assert_eq!(back, meta);
    }

    #[tokio::test]
    async fn bare_bodies() {
        let mut headers = HeaderMap::new();
        assert!(parse_request(&headers, Bytes::new()).await.unwrap().is_empty());
        headers.insert(header::CONTENT_TYPE, "application/json".parse().unwrap());
        let parts = parse_request(&headers, Bytes::from_static(b"{}")).await.unwrap();
        assert!(parts.contains_key("params"));
    }
}
