//! Blocking HTTP client for an external text-correction service.
//!
//! Wire format: `POST {endpoint}` with `{"text": ..}`, reply `{"corrected": ..}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use storyguard_core::normalize::{CorrectionService, CorrectionServiceConfig, ServiceError};

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    corrected: String,
}

#[derive(Debug, Clone)]
pub struct HttpCorrectionService {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpCorrectionService {
    pub fn new(config: &CorrectionServiceConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Self {
            endpoint: config.endpoint.clone(),
            agent,
        }
    }
}

impl CorrectionService for HttpCorrectionService {
    fn correct(&self, text: &str) -> Result<String, ServiceError> {
        let resp = self.agent.post(&self.endpoint).send_json(Request { text });
        match resp {
            Ok(r) => r
                .into_json::<Reply>()
                .map(|r| r.corrected)
                .map_err(|e| ServiceError::BadReply(e.to_string())),
            Err(ureq::Error::Status(code, _)) => Err(ServiceError::BadReply(format!("status {code}"))),
            Err(e) => Err(ServiceError::Unreachable(e.to_string())),
        }
    }
}
