use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("episode already terminated after {horizon} steps")]
    TerminalState { horizon: usize },

    #[error("payoff entry {0} is outside the canonical set {{0, -1, -2, -3}}")]
    NotCanonicalScale(f64),

    #[error("payoff entries must be finite, got {0}")]
    NonFinitePayoff(f64),

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyper { name: &'static str, reason: String },

    #[error("context required by contextual policy but none was given")]
    MissingContext,

    #[error("context given to a policy that is not contextual")]
    SuperfluousContext,

    #[error("context has {got} answers, expected {expected}")]
    ContextLength { expected: usize, got: usize },

    #[error("observation {obs} out of range for {count} observations")]
    ObservationOutOfRange { obs: usize, count: usize },

    #[error("policy covers {got} observations but the game needs {expected}")]
    PolicyShape { expected: usize, got: usize },

    #[error("oracle configured for {expected:?} memory, game uses {got:?}")]
    MemoryMismatch {
        expected: crate::game::MemoryMode,
        got: crate::game::MemoryMode,
    },

    #[error("reward during initial segment requires an oracle with learning episodes")]
    NoLearningEpisodes,

    #[error("phase bit requested but the leader policy has {got} observations, expected {expected}")]
    PhaseBitShape { expected: usize, got: usize },

    #[error("enumeration bound exceeded: {obs} observations (limit {limit})")]
    EnumerationBound { obs: usize, limit: usize },

    #[error("discount factor 1 makes the divergence limit undefined")]
    UndiscountedLimit,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error("unknown game `{0}`")]
    UnknownGame(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
