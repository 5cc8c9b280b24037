use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario has no nodes")]
    NoNodes,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("scenario has no base node to act as gateway")]
    NoGateway,
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElectionError {
    #[error("no intelligent gateway neighbour can become cluster owner")]
    NoCoCandidate,
    #[error("cluster of {co} has no eligible zone owner")]
    NoZoCandidate { co: NodeId },
    #[error("cluster of {co} has no eligible monitor node")]
    NoMnCandidate { co: NodeId },
    #[error("gateway {0} cannot run discovery")]
    GatewayUnavailable(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("node {0} is dead or blocked")]
    Unavailable(NodeId),
    #[error("node {0} is asleep")]
    Asleep(NodeId),
    #[error("node {0} is not deployed")]
    UnknownNode(NodeId),
    #[error("no route: {0}")]
    NoRoute(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: truncated final record")]
    Truncated { line: usize },
}
