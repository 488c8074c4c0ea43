use crate::cluster::LocationId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid fix: {0}")]
    InvalidFix(String),

    #[error("non-increasing time")]
    NonIncreasingTime,

    #[error("no valid fixes ({skipped} sentences skipped)")]
    NoValidFixes { skipped: usize },

    #[error("{message}, line {line}")]
    Parse { line: u64, message: String },

    #[error("nothing to sweep")]
    NothingToSweep,

    #[error("invalid radius sweep: {0}")]
    InvalidRadii(String),

    #[error("knee selection needs at least 4 radii, got {0}")]
    TooFewRadii(usize),

    #[error("degenerate trip: {0}")]
    DegenerateTrip(String),

    #[error("untrained travel model")]
    UntrainedTravelModel,

    #[error("unknown location {0}")]
    UnknownLocation(LocationId),

    #[error("overlapping events at {0}")]
    OverlappingEvents(i64),

    #[error("segment length {0} must be a positive divisor of 1440 minutes")]
    InvalidSegment(u32),

    #[error("infeasible routine: {0}")]
    InfeasibleRoutine(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
