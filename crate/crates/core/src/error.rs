use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the protocol can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus mismatch: {left} vs {right}")]
    ModulusMismatch { left: u64, right: u64 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("duplicate evaluation point x = {0}")]
    DuplicatePoint(u64),
    #[error("insufficient shares: need {needed}, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    #[error("invalid candidate index {index} (election has {candidates} candidates)")]
    InvalidCandidate { index: usize, candidates: usize },
    #[error("corrupted tally: residue {residue} does not fit in {bits} bits")]
    CorruptedTally { residue: u64, bits: u32 },
    #[error("implausible count {count} for candidate {candidate} with {voters} voters")]
    ImplausibleCount { candidate: usize, count: u64, voters: u64 },
    #[error("wrong phase: {0}")]
    Phase(String),
    #[error("election {0} is already open")]
    AlreadyOpen(String),
    #[error("duplicate ballot {0}")]
    DuplicateBallot(String),
    #[error("capacity exceeded: center already holds {0} shares")]
    CapacityExceeded(u64),
    #[error("unknown election {0}")]
    UnknownElection(String),
    #[error("journal integrity failure at line {line}: {reason}")]
    JournalIntegrity { line: usize, reason: String },
    #[error("integrity failure for center {center_id}: digest does not match record fields")]
    Integrity { center_id: u32 },
    #[error("authenticity failure for center {center_id}: signature does not verify")]
    Authenticity { center_id: u32 },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("inconsistent reconstructions: {0}")]
    Inconsistent(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error classes; each maps to a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Domain,
    InsufficientShares,
    Candidate,
    Tally,
    Phase,
    Duplicate,
    Integrity,
    Transport,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Domain => 3,
            ErrorClass::InsufficientShares => 4,
            ErrorClass::Candidate => 5,
            ErrorClass::Tally => 6,
            ErrorClass::Phase => 7,
            ErrorClass::Duplicate => 8,
            ErrorClass::Integrity => 9,
            ErrorClass::Transport => 10,
            ErrorClass::Io => 11,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Domain => "domain",
            ErrorClass::InsufficientShares => "insufficient-shares",
            ErrorClass::Candidate => "invalid-candidate",
            ErrorClass::Tally => "tally",
            ErrorClass::Phase => "phase",
            ErrorClass::Duplicate => "duplicate-ballot",
            ErrorClass::Integrity => "integrity",
            ErrorClass::Transport => "transport",
            ErrorClass::Io => "io",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ModulusMismatch { .. }
            | Error::InvalidConfig(_)
            | Error::UnsupportedScale(_)
            | Error::Malformed(_)
            | Error::UnknownElection(_) => ErrorClass::Config,
            Error::ZeroInverse | Error::DuplicatePoint(_) => ErrorClass::Domain,
            Error::InsufficientShares { .. } => ErrorClass::InsufficientShares,
            Error::InvalidCandidate { .. } => ErrorClass::Candidate,
            Error::CorruptedTally { .. }
            | Error::ImplausibleCount { .. }
            | Error::Inconsistent(_) => ErrorClass::Tally,
            Error::Phase(_) | Error::AlreadyOpen(_) | Error::CapacityExceeded(_) => {
                ErrorClass::Phase
            }
            Error::DuplicateBallot(_) => ErrorClass::Duplicate,
            Error::JournalIntegrity { .. }
            | Error::Integrity { .. }
            | Error::Authenticity { .. } => ErrorClass::Integrity,
            Error::Transport(_) => ErrorClass::Transport,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
