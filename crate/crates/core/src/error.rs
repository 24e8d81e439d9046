use thiserror::Error;

use crate::tree::SiteId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid site address {0:?}")]
    InvalidAddress(String),
    #[error("site {0} lies outside the sampled region")]
    SiteOutsideRegion(SiteId),
    #[error("site set is empty")]
    EmptySet,
    #[error("site {0} appears more than once in the site set")]
    DuplicateSite(SiteId),
    #[error("site set is not connected")]
    Disconnected,
    #[error("region is not closed under taking parents (missing parent of {0})")]
    NotAncestorClosed(SiteId),
    #[error("radius must be at least 1")]
    ZeroRadius,
    #[error("boundary freeze time missing at {0}")]
    MissingBoundary(SiteId),
    #[error("realization has not been propagated")]
    NotPropagated,
    #[error("site {site} is not {expected} at time {t}")]
    WrongColour {
        site: SiteId,
        expected: &'static str,
        t: f64,
    },
    #[error("site set reaches the outer boundary at {0}")]
    TouchesBoundary(SiteId),
    #[error("site set needs at least two sites")]
    SetTooSmall,
    #[error("unknown quantity {0:?}")]
    UnknownQuantity(String),
    #[error("report for {0} has no oracle to compare against")]
    NoOracle(String),
    #[error("replica count must be positive")]
    ZeroReplicas,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed realization dump: {0}")]
    MalformedDump(String),
}
