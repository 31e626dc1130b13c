use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no bulk-active elements: the level set never opens a bulk region")]
    EmptyActiveSet,

    #[error("degenerate cut: all vertex level-set values vanish")]
    DegenerateCut,

    #[error("isoparametric mapping degenerate on element {element} (det J = {det:e})")]
    MappingDegenerate { element: usize, det: f64 },

    #[error("trace transfer left the previous active domain at element {element}")]
    TransferOutOfDomain { element: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("Newton diverged on slab {slab} after {iterations} iterations (|w| = {increment:e})")]
    NewtonDiverged {
        slab: usize,
        iterations: usize,
        increment: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
