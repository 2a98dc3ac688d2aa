use thiserror::Error;

/// Errors raised by the library.
///
/// Payloads are owned strings so the type stays `Clone`; lazily computed
/// catalog data caches its failures and hands out copies.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unresolved subfile(s): {}", .0.join(", "))]
    Unresolved(Vec<String>),

    #[error("recursive part definition: {0}")]
    Recursive(String),

    #[error("reference chain deeper than {limit} at {name}")]
    TooDeep { name: String, limit: usize },

    #[error("unknown part: {0}")]
    UnknownPart(String),

    #[error("unknown color code: {0}")]
    UnknownColor(u32),

    #[error("missing connector annotation for part {0}")]
    MissingAnnotation(String),

    #[error("annotation of {part}: {message}")]
    Annotation { part: String, message: String },

    #[error("duplicate connector site in {part} at {origin:?}")]
    DuplicateSite { part: String, origin: [f64; 3] },

    #[error("not a valid pairing: {0}")]
    InvalidPairing(String),

    #[error("invalid parameters for {family}: {message}")]
    InvalidParams { family: String, message: String },

    #[error("node {0} is not in the graph")]
    UnknownNode(u32),

    #[error("data file {name}: {message}")]
    DataFile { name: String, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("{0}")]
    Program(crate::program::ProgramError),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
