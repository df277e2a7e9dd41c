use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("tail family diverges: {0}")]
    NonFinite(String),
    #[error("no common tilt point: per-state solutions {first} and {second} differ")]
    NoCommonTiltPoint { first: f64, second: f64 },
    #[error("transformed displacements do not fit a lattice with step >= {min_step}")]
    LatticeIncompatible { min_step: f64 },
    #[error("step measure is not in the boundary case: total mass {mass}")]
    NotBoundary { mass: f64 },
    #[error("lattice steps differ: {0} vs {1}")]
    LatticeMismatch(f64, f64),
    #[error("horizon {horizon} exceeded; best certified bound {best_bound:e}")]
    HorizonExceeded { horizon: usize, best_bound: f64 },
    #[error("enumeration of {size} configurations exceeds the cap {cap}")]
    EnumerationTooLarge { size: u128, cap: u128 },
    #[error("grid too small: need x up to {needed}, table reaches {available}")]
    GridTooSmall { needed: i64, available: i64 },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("position ceiling {ceiling} reached")]
    CeilingReached { ceiling: i64 },
    #[error("population cap {cap} exceeded ({count} particles)")]
    PopulationCapExceeded { cap: u64, count: u128 },
    #[error("particle count overflow")]
    CountOverflow,
    #[error("size-biased normalizer {got} differs from {expected} beyond tolerance")]
    NormalizerMismatch { got: f64, expected: f64 },
    #[error("numerical contract violated: {0}")]
    Contract(String),
    #[error("too few samples: {got} < {needed}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("unsupported tail family: {0}")]
    UnsupportedTail(String),
}

impl Error {
    /// Budget-type failures map to their own CLI exit code.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::HorizonExceeded { .. }
                | Error::EnumerationTooLarge { .. }
                | Error::BudgetExceeded(_)
                | Error::CeilingReached { .. }
                | Error::PopulationCapExceeded { .. }
                | Error::CountOverflow
        )
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidLaw(_)
                | Error::LatticeMismatch(..)
                | Error::NotBoundary { .. }
                | Error::UnsupportedTail(_)
                | Error::LatticeIncompatible { .. }
                | Error::NoCommonTiltPoint { .. }
        )
    }
}
