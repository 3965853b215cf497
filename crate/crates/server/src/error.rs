use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use voxlabel_core::Error as CoreError;

/// An error with an HTTP status and a stable machine-readable code, sent as
/// `{"error": code, "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_params(message: impl Into<String>) -> Self {
        Self::new(400, "BadParams", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "Internal", message)
    }

    /// Whether the caller (rather than the server) is at fault.
    pub fn is_client_error(&self) -> bool {
        (400..500).contains(&self.status)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            CoreError::UnknownImage(_) => (404, "UnknownImage"),
            CoreError::EmptyPool => (404, "EmptyPool"),
            CoreError::MissingClass(_) => (400, "MissingScribbles"),
            CoreError::DimMismatch { .. } => (400, "DimMismatch"),
            CoreError::BadImage(_) => (400, "BadImage"),
            CoreError::BadLabel(_) => (400, "BadLabel"),
            CoreError::BadTag(_) => (400, "BadTag"),
            CoreError::ClickOutOfBounds(_) => (400, "BadParams"),
            CoreError::InvalidParameter(_) | CoreError::BadProbability(_) | CoreError::BadBins(_) => {
                (400, "BadParams")
            }
            CoreError::BadMagic(_)
            | CoreError::UnsupportedDatatype(_)
            | CoreError::TruncatedFile { .. }
            | CoreError::InvalidHeader(_)
            | CoreError::InvalidVolume(_) => (400, "BadImage"),
            CoreError::EmptyDataset | CoreError::EmptyDatastore => (400, "NoLabeledData"),
            CoreError::InsufficientBudget(_) => (400, "InsufficientBudget"),
            _ => (500, "Internal"),
        };
        Self::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
