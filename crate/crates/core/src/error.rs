use thiserror::Error;

/// Errors raised by grid construction, kernels and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("physics error: {0}")]
    Physics(#[from] PhysicsError),

    #[error("unbounded time step: maximum signal speed is zero")]
    UnboundedTimeStep,

    #[error("structural error: {0}")]
    Structural(String),

    #[error("undefined EOC: errors must be positive (got {0:e}, {1:e})")]
    UndefinedEoc(f64, f64),
}

/// An unphysical state encountered by a flux or limiter, optionally tagged
/// with the cell where it was found.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("unphysical state {state:?}{}", cell_suffix(.cell))]
pub struct PhysicsError {
    pub state: Vec<f64>,
    pub cell: Option<(isize, isize)>,
}

fn cell_suffix(cell: &Option<(isize, isize)>) -> String {
    match cell {
        Some((i, j)) => format!(" at cell ({i}, {j})"),
        None => String::new(),
    }
}

impl PhysicsError {
    pub fn new(state: &[f64]) -> Self {
        Self { state: state.to_vec(), cell: None }
    }

    pub fn at(mut self, i: isize, j: isize) -> Self {
        self.cell.get_or_insert((i, j));
        self
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
