//! Error taxonomy for the pipeline; variants map one-to-one onto the failure
//! modes each stage can report.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulus: Im tau must be positive, got {0}")]
    InvalidModulus(f64),
    #[error("kernel precision unachievable: {0}")]
    PrecisionUnachievable(String),
    #[error("evaluation point within pole-exclusion radius of {0}")]
    NearPole(String),
    #[error("loop construction failed: {0}")]
    LoopConstructionFailed(String),
    #[error("gap violation: pole order {m0} must exceed the top gap value {gap}")]
    GapViolation { m0: u32, gap: u32 },
    #[error("root finding failed: {0}")]
    RootFindingFailure(String),
    #[error("degenerate shift: {0}")]
    DegenerateShift(String),
    #[error("inconsistent null data: {0}")]
    InconsistentData(String),
    #[error("planar data: the disk image lies in a plane")]
    PlanarData,
    #[error("normalization failed: {0}")]
    NormalizationFailed(String),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("contour too close to a pole: {0}")]
    ContourTooClose(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("degenerate period matrix: {0}")]
    DegeneratePeriodMatrix(String),
    #[error("domain shrunk: loop leaves the unit level set ({0})")]
    DomainShrunk(String),
    #[error("jacobian model mismatch: {0}")]
    ModelMismatch(String),
    #[error("nondegeneracy failed: {0}")]
    NondegeneracyFailed(String),
    #[error("newton did not converge at c = {c}: {detail}")]
    NoConvergenceAtC { c: f64, detail: String },
    #[error("singular iterate in newton solve: {0}")]
    SingularIterate(String),
    #[error("wrong topology: expected {expected} boundary components, found {found}")]
    WrongTopology { expected: usize, found: usize },
    #[error("branch point on boundary contour: min |dG| = {0}")]
    BoundaryBranchPoint(f64),
    #[error("mesh failure: {0}")]
    MeshFailure(String),
    #[error("no valid annulus radius in scan")]
    NoValidAnnulus,
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),
    #[error("metric certificate failed: {0}")]
    CertificateFailed(String),
    #[error("multivalued realization: residual period {0} above tolerance")]
    MultivaluedRealization(f64),
    #[error("path lifting failed: {0}")]
    LiftFailure(String),
    #[error("boundedness certificate inconsistent: {0}")]
    CertificateInconsistent(String),
    #[error("config validation: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code classification used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
