use serde_json::{json, Value};

/// Request failure carried back to the caller as `{"code", "message"}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub data: Option<Value>,
}

impl ApiError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), data: None }
    }

    pub fn with_data(mut self, data: Value) -> Self {
        self.data = Some(data);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad-request", message)
    }

    pub fn invalid_state(message: impl Into<String>) -> Self {
        Self::new("invalid-state", message)
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "code": self.code, "message": self.message });
        if let Some(d) = &self.data {
            v["data"] = d.clone();
        }
        v
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<ajtwin_core::TwinError> for ApiError {
    fn from(e: ajtwin_core::TwinError) -> Self {
        use ajtwin_core::TwinError as E;
        let code = match e {
            E::Config { .. } | E::Table(_) | E::InvalidInput(_) | E::UnknownUnit(_) => "bad-request",
            _ => "model-error",
        };
        Self::new(code, e.to_string())
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
