use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("extent {extent} on axis {axis} is not positive")]
    NonPositiveExtent { axis: usize, extent: f64 },
    #[error("axis {axis} has {cells} cells, at least 2 are required")]
    TooFewCells { axis: usize, cells: usize },
    #[error("grading ratio {0} must lie in (0, 1]")]
    InvalidGrading(f64),
    #[error("unsupported dimension {0}; only 2 and 3 are supported")]
    UnsupportedDimension(usize),
    #[error("magnetic potential requires s = 1/2, got s = {0}")]
    MagneticWithDegenerateWeight(f64),
    #[error("unknown boundary tag or tag rule: {0}")]
    UnknownTag(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero is (numerically) an eigenvalue: lambda = {lambda}, distance to spectrum ~ {distance:e}")]
    ZeroIsEigenvalue { lambda: f64, distance: f64 },
    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigsolverNoConvergence { iterations: usize, residual: f64 },
    #[error("system is near singular (condition estimate {estimate:e})")]
    NearSingular { estimate: f64 },

    #[error("frequency dimension too small: {0}")]
    DimensionTooSmall(String),
    #[error("unresolved oscillation on axis {axis}: {cells_per_wavelength:.2} cells per wavelength, need {required}")]
    UnresolvedOscillation { axis: usize, cells_per_wavelength: f64, required: f64 },
    #[error("test field violates the boundary cutoff (max boundary magnitude {0:e})")]
    CutoffViolation(f64),
    #[error("subdomain touches the boundary where the weight degenerates")]
    SubdomainTouchesBoundary,
    #[error("frequency grid too coarse: k_max = {kmax:.3} below declared bandwidth {bandwidth:.3}")]
    GridTooCoarse { kmax: f64, bandwidth: f64 },
    #[error("vertical frequency band too narrow: leakage {leakage:.3e} exceeds {threshold:.3e}")]
    BandTooNarrow { leakage: f64, threshold: f64 },

    #[error("invalid container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
