use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{ConditionalModel, NextTokenDistribution};
use crate::error::{Error, Result};
use crate::http::{self, ClientOptions};
use crate::text::{TokenId, Vocabulary, BOS};

pub const MODEL_URL_ENV: &str = "MUTARJEM_MODEL_URL";

#[derive(Serialize)]
struct NextTokenRequest<'a> {
    source_ids: &'a [TokenId],
    prefix_ids: &'a [TokenId],
}

#[derive(Deserialize)]
struct NextTokenResponse {
    logprobs: Vec<f64>,
}

/// Client for a served model speaking `POST /v1/next_token`.
///
/// The server returns log-probabilities over the shared vocabulary, which
/// are normalized locally.
pub struct RemoteModel {
    endpoint: String,
    url: String,
    vocab: Vocabulary,
    agent: Agent,
    retries: usize,
}

impl RemoteModel {
    pub fn new(endpoint: &str, vocab: Vocabulary, opts: ClientOptions) -> Self {
        let endpoint = endpoint.trim_end_matches('/').to_owned();
        RemoteModel {
            url: format!("{endpoint}/v1/next_token"),
            endpoint,
            vocab,
            agent: http::agent(&opts),
            retries: opts.retries,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl ConditionalModel for RemoteModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<NextTokenDistribution> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::MissingBos);
        }
        let req = NextTokenRequest {
            source_ids: source,
            prefix_ids: prefix,
        };
        let resp: NextTokenResponse =
            http::post_json(&self.agent, &self.url, &req, self.retries).map_err(|f| f.into_error(&self.endpoint))?;
        if resp.logprobs.len() != self.vocab.len() {
            return Err(Error::Protocol {
                endpoint: self.endpoint.clone(),
                cause: format!(
                    "expected {} log-probabilities, got {}",
                    self.vocab.len(),
                    resp.logprobs.len()
                ),
            });
        }
        NextTokenDistribution::from_logprobs(&resp.logprobs).map_err(|e| Error::Protocol {
            endpoint: self.endpoint.clone(),
            cause: e.to_string(),
        })
    }
}
