use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The network itself is malformed (dangling ids, self-loops, unrooted nodes).
    #[error("structural error: {0}")]
    Structural(String),

    /// Input is well-formed but outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An enumeration or search would exceed its configured size limit.
    #[error("resource limit exceeded: {what} (limit {limit}{})", found.map(|f| format!(", reached {f}")).unwrap_or_default())]
    ResourceLimit {
        what: String,
        limit: usize,
        found: Option<u128>,
    },

    /// A policy invariant was broken; always a bug in the forwarding logic.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown scenario `{name}` (registered: {})", known.join(", "))]
    UnknownScenario { name: String, known: Vec<String> },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn limit(what: impl Into<String>, limit: usize, found: Option<u128>) -> Self {
        Error::ResourceLimit {
            what: what.into(),
            limit,
            found,
        }
    }
}
