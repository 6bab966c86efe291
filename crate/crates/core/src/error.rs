use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The primary queue (or a relay queue) would be unstable at this arrival rate.
    #[error("unstable: arrival rate {lambda_p} is not below the service bound {bound}")]
    Unstable { lambda_p: f64, bound: f64 },

    /// No choice of secondary parameters keeps the primary queue stable.
    #[error("infeasible primary: arrival rate {lambda_p} is not below mu_p_max = {mu_p_max}")]
    InfeasiblePrimary { lambda_p: f64, mu_p_max: f64 },

    /// Subset enumeration over the secondary nodes is capped.
    #[error("network too large for subset enumeration: N = {n} exceeds {max}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
