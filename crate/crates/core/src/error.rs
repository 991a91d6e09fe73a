use freshedge_sdp::SdpError;

/// The decision constraint a rejected [`SlotDecision`](crate::env::SlotDecision) breaks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintViolation {
    #[error("storage: cached {used:.6e} bytes exceeds capacity {capacity:.6e}")]
    Storage { used: f64, capacity: f64 },
    #[error("compute: allocated {used:.6e} cycles/s exceeds capacity {capacity:.6e}")]
    Compute { used: f64, capacity: f64 },
    #[error("bandwidth ({link}): allocated {used:.6e} Hz exceeds {capacity:.6e}")]
    Bandwidth {
        link: &'static str,
        used: f64,
        capacity: f64,
    },
    #[error("coupling: service {service} has z_prev={z_prev}, y={y}, z={z}")]
    Coupling {
        service: usize,
        z_prev: bool,
        y: bool,
        z: bool,
    },
    #[error("coupling: user {user} processes service {service} locally but it is not cached")]
    OffloadWithoutCache { user: usize, service: usize },
    #[error("user {user} has no task for service {service} but x is set")]
    AbsentTask { user: usize, service: usize },
    #[error("negative or non-finite allocation for user {user}, service {service}")]
    Allocation { user: usize, service: usize },
    #[error("shape: {0}")]
    Shape(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("infeasible decision: {0}")]
    Constraint(#[from] ConstraintViolation),
    #[error("zero {resource} allocated to a present task")]
    DivisionGuard { resource: &'static str },
    #[error("service {service}: y=1 with z=0 has no age-of-information branch")]
    AoiBranch { service: usize },
    #[error("relaxed value {value} at {what} outside [0, 1]")]
    Extraction { what: &'static str, value: f64 },
    #[error("exhaustive search over {bits} binary variables exceeds the limit of {limit}")]
    SizeGuard { bits: usize, limit: usize },
    #[error("fixed service set does not fit the storage capacity")]
    FixedSetOverflow,
    #[error("horizon of {0} slots exhausted")]
    HorizonExhausted(usize),
    #[error("policy `{name}`: {message}")]
    Policy { name: String, message: String },
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
