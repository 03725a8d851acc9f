use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("unknown intersection {0}")]
    UnknownIntersection(usize),
    #[error("unknown vehicle movement {0}")]
    UnknownMovement(usize),
    #[error("intersection {0} is not a standard four-leg intersection")]
    NotFourWay(usize),
    #[error("turning ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("turning ratios out of a link sum to {0}, expected 1")]
    RatiosDontSum(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("routing system does not drain: closed cycle through {kind} links {cycle:?}")]
    NonDrainingCycle { kind: &'static str, cycle: Vec<usize> },
    #[error("linear system singular or ill-conditioned (residual {0:e})")]
    Singular(f64),
    #[error("series has {0} points, at least 20 required")]
    SeriesTooShort(usize),
    #[error("flow vector length {got} does not match network ({expected})")]
    Shape { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("intersection {0} has no region label")]
    Unlabeled(usize),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("state guard tripped at step {step}: {detail}")]
    StateGuard { step: usize, detail: String },
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl EngineError {
    /// Stable machine-readable category, printed by the command-line tool.
    pub fn category(&self) -> &'static str {
        match self {
            EngineError::Config(ConfigError::Io { .. }) => "config_io",
            EngineError::Config(ConfigError::Parse(_)) => "config_parse",
            EngineError::Config(_) => "config_invalid",
            EngineError::StateGuard { .. } => "state_guard",
            EngineError::Stability(_) => "stability",
            EngineError::Metrics(_) => "metrics",
            EngineError::Output { .. } => "output_io",
            EngineError::Pool(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_) => 2,
            EngineError::StateGuard { .. } => 3,
            EngineError::Stability(_) => 4,
            EngineError::Metrics(_) => 5,
            EngineError::Output { .. } => 6,
            EngineError::Pool(_) => 7,
        }
    }
}
