use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("argument {0} outside the domain of the lower Lambert W branch [-1/e, 0)")]
    LambertDomain(f64),

    #[error("uniform variate {0} outside (0, 1)")]
    UniformOutOfRange(f64),

    #[error("master {0} has an empty worker set")]
    EmptyWorkerSet(usize),

    #[error("{workers} workers cannot be split evenly across {masters} masters")]
    NotDivisible { masters: usize, workers: usize },

    #[error("brute force over {masters}^{workers} assignments exceeds the limit of {limit}")]
    InstanceTooLarge {
        masters: usize,
        workers: usize,
        limit: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("master {0} has no expected capacity; no finite completion time exists")]
    UnboundedTime(usize),

    #[error("starting point is infeasible: {0}")]
    InfeasibleStart(String),

    #[error("subproblem solve failed at SCA iteration {iteration}: {reason}")]
    Subproblem { iteration: usize, reason: String },

    #[error("all {0} simulated trials were infeasible")]
    AllTrialsInfeasible(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("instance file: {0}")]
    Format(String),
}
