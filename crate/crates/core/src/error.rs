use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlError {
    #[error("open boundary: edge ({0}, {1}) has a single incident face")]
    OpenBoundary(usize, usize),
    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifold(usize, usize, usize),
    #[error("inconsistent orientation across edge ({0}, {1})")]
    Orientation(usize, usize),
    #[error("degenerate face {0}")]
    DegenerateFace(usize),
    #[error("non-manifold vertex {0}")]
    NonManifoldVertex(usize),
    #[error("mesh has {0} connected components, expected 1")]
    Disconnected(usize),
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("incompatible right-hand side: total {0:e} should vanish")]
    Incompatible(f64),
    #[error("linear solver failure: {0}")]
    Solver(String),
    #[error("step leaves the trust region: |v| = {len:.4e} > {limit:.4e}")]
    TrustRegion { len: f64, limit: f64 },
    #[error("inadmissible vortex data: {0}")]
    Inadmissible(String),
    #[error("period defect {0:?} exceeds tolerance")]
    PeriodDefect(Vec<f64>),
    #[error("vortices too close: separation {sep:.4e} below {limit:.4e}")]
    TooClose { sep: f64, limit: f64 },
    #[error("homology: {0}")]
    Homology(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("explicit step {dt:.3e} violates the stability bound {bound:.3e}")]
    Stability { dt: f64, bound: f64 },
    #[error("collision: separation {0:.4e}")]
    Collision(f64),
    #[error("config: {0}")]
    Config(String),
}

impl GlError {
    /// Short machine-readable kind tag used by the JSON error reporter.
    pub fn kind(&self) -> &'static str {
        match self {
            GlError::OpenBoundary(..) => "open_boundary",
            GlError::NonManifold(..) => "non_manifold",
            GlError::Orientation(..) => "inconsistent_orientation",
            GlError::DegenerateFace(..) => "degenerate_face",
            GlError::NonManifoldVertex(..) => "non_manifold_vertex",
            GlError::Disconnected(..) => "disconnected",
            GlError::Parse(..) => "parse",
            GlError::Io(..) => "io",
            GlError::Size(..) => "size_mismatch",
            GlError::Incompatible(..) => "incompatible_rhs",
            GlError::Solver(..) => "solver",
            GlError::TrustRegion { .. } => "trust_region",
            GlError::Inadmissible(..) => "inadmissible",
            GlError::PeriodDefect(..) => "period_defect",
            GlError::TooClose { .. } => "too_close",
            GlError::Homology(..) => "homology",
            GlError::NoConvergence(..) => "no_convergence",
            GlError::Stability { .. } => "stability",
            GlError::Collision(..) => "collision",
            GlError::Config(..) => "config",
        }
    }

    /// Which layer raised it.
    pub fn module(&self) -> &'static str {
        match self {
            GlError::OpenBoundary(..)
            | GlError::NonManifold(..)
            | GlError::Orientation(..)
            | GlError::DegenerateFace(..)
            | GlError::NonManifoldVertex(..)
            | GlError::Disconnected(..)
            | GlError::Parse(..)
            | GlError::TrustRegion { .. } => "surface-geometry",
            GlError::Size(..) | GlError::Incompatible(..) | GlError::Solver(..) => "dec-operators",
            GlError::Homology(..) => "dec-operators",
            GlError::Inadmissible(..) | GlError::PeriodDefect(..) | GlError::TooClose { .. } => {
                "renormalized-energy"
            }
            GlError::NoConvergence(..) => "renormalized-energy",
            GlError::Stability { .. } => "gl-flow",
            GlError::Collision(..) => "effective-dynamics",
            GlError::Io(..) | GlError::Config(..) => "cli-harness",
        }
    }
}

pub type Result<T> = std::result::Result<T, GlError>;
