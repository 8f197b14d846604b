use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("ill-posed restriction: {distinct} distinct heterogeneity values, need at least {needed}")]
    IllPosedRestriction { distinct: usize, needed: usize },

    #[error("divergence during projective burst {cycle} (t = {time})")]
    BurstDivergence { cycle: usize, time: f64 },

    #[error("projection overshoot in cycle {cycle}: extrapolated coarse state is not finite")]
    ProjectionOvershoot { cycle: usize },

    #[error("coarse map member with realization seed {seed} failed: {source}")]
    MemberFailure {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("Newton did not converge in {iterations} iterations (last residual {residual:e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("singular Newton matrix near z = {z:?}; likely a fold, use pseudo-arclength continuation")]
    SingularNewton { z: Vec<f64> },

    #[error("continuation cannot start: {0}")]
    CannotStart(String),

    #[error("no sign change of the fold test function between the given points")]
    NotAFold,

    #[error("no sign change of the Hopf test function between the given points")]
    NotAHopf,

    #[error("critical eigenvalue pair reached the real axis (theta = {theta}); strong resonance")]
    ResonanceAmbiguity { theta: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
}

impl Error {
    /// Wraps an error raised while evaluating the member map for `seed`.
    pub fn member(seed: u64, source: Error) -> Self {
        Error::MemberFailure {
            seed,
            source: Box::new(source),
        }
    }
}
