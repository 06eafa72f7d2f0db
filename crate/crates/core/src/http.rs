//! Minimal blocking JSON-over-HTTP plumbing shared by the remote model and
//! the remote embedding service.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use crate::error::Error;

#[derive(Clone, Debug)]
pub struct ClientOptions {
    /// Idle connections kept per host.
    pub pool_size: usize,
    pub timeout: Duration,
    /// Extra attempts after a transport failure.
    pub retries: usize,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            pool_size: 4,
            timeout: Duration::from_secs(60),
            retries: 2,
        }
    }
}

pub(crate) enum Failure {
    Status(u16),
    Transport(String),
    Decode(String),
}

pub(crate) fn agent(opts: &ClientOptions) -> Agent {
    Agent::config_builder()
        .max_idle_connections_per_host(opts.pool_size.max(1))
        .timeout_global(Some(opts.timeout))
        .build()
        .into()
}

pub(crate) fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    agent: &Agent,
    url: &str,
    body: &Req,
    retries: usize,
) -> Result<Resp, Failure> {
    let mut attempt = 0;
    loop {
        match agent.post(url).send_json(body) {
            Ok(resp) => {
                return resp
                    .into_body()
                    .read_json::<Resp>()
                    .map_err(|e| Failure::Decode(e.to_string()))
            }
            Err(ureq::Error::StatusCode(code)) if code < 500 => return Err(Failure::Status(code)),
            Err(e) if attempt < retries => {
                log::debug!("retrying {url} after: {e}");
                attempt += 1;
            }
            Err(ureq::Error::StatusCode(code)) => return Err(Failure::Status(code)),
            Err(e) => return Err(Failure::Transport(e.to_string())),
        }
    }
}

impl Failure {
    pub(crate) fn into_error(self, endpoint: &str) -> Error {
        match self {
            Failure::Status(code) => Error::Transport {
                endpoint: endpoint.to_owned(),
                cause: format!("HTTP status {code}"),
            },
            Failure::Transport(cause) => Error::Transport {
                endpoint: endpoint.to_owned(),
                cause,
            },
            Failure::Decode(cause) => Error::Protocol {
                endpoint: endpoint.to_owned(),
                cause,
            },
        }
    }
}
