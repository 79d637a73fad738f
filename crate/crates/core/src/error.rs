use std::fmt;

/// Error type shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("region is empty or degenerate: {0}")]
    DegenerateRegion(String),
    #[error("outside the computational box: {0}")]
    OutOfDomain(String),
    #[error("critical radius bracket too coarse: {0}")]
    BracketTooCoarse(String),
    #[error("degenerate potential: {0}")]
    DegeneratePotential(String),
    #[error("slow-variation fit failed: {0}")]
    FitFailure(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("missing channel {0}")]
    MissingChannel(Channel),
    #[error("threshold search exhausted: {0}")]
    ThresholdExhausted(String),
    #[error("norm vanishes: {0}")]
    DegenerateNorm(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("malformed data file: {0}")]
    Format(String),
    #[error("scenario `{id}`: {source}")]
    Scenario {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error stems from the configuration rather than from a
    /// computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::UnknownScenario(_) | Error::Json(_) => true,
            Error::Scenario { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub fn in_scenario(self, id: &str) -> Error {
        Error::Scenario { id: id.to_string(), source: Box::new(self) }
    }
}

/// Named component of a field on the upper half-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// The extension itself, `u(x, t)`.
    U,
    /// `t * du/dt`.
    TDtU,
    /// `t * du/dx_axis`.
    TGradX(u8),
    /// `t sqrt(L) exp(-t sqrt(L)) f`.
    Square,
    /// Free-form channel supplied by the caller.
    Custom(u8),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::U => write!(f, "u"),
            Channel::TDtU => write!(f, "t_dt_u"),
            Channel::TGradX(a) => write!(f, "t_grad_x{a}"),
            Channel::Square => write!(f, "square"),
            Channel::Custom(k) => write!(f, "custom{k}"),
        }
    }
}
