use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular diffusion coefficient {value} at t={t}, x={x}")]
    SingularDiffusion { t: f64, x: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate integrand: L2 norm is zero")]
    DegenerateIntegrand,

    #[error("unsupported chaos order {order} (supported up to {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("grid alignment: {0}")]
    Alignment(String),

    #[error(
        "empty bandwidth grid for n={n}, order={order}, s_*={s_star_lo}: \
         bracket [{lower:.6}, {upper:.6}] contains no e^-k"
    )]
    EmptyGrid {
        n: usize,
        order: usize,
        s_star_lo: f64,
        lower: f64,
        upper: f64,
    },

    #[error("incomplete input: {0}")]
    IncompleteInput(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("symmetry violated: {0}")]
    Symmetry(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
