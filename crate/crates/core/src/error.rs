use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondence(String),

    #[error("raster frames do not match: {0}")]
    FrameMismatch(String),

    #[error("opening on face {face} lies outside the face polygon")]
    OpeningOutsideFace { face: String },

    #[error("opening on face {face} is closer than one cell to the face boundary")]
    OpeningTouchesBoundary { face: String },

    #[error("unknown face id {0}")]
    UnknownFace(String),

    #[error("invalid CPT: {0}")]
    InvalidCpt(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("scene spec error: {0}")]
    Spec(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// a failing computation. The CLI maps these to exit code 2.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Spec(_)
            | Error::UnknownFace(_)
            | Error::InvalidCpt(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(8).map(|x| x.to_string()).collect();
    if v.len() > shown.len() {
        format!("{} (+{} more)", shown.join("; "), v.len() - shown.len())
    } else {
        shown.join("; ")
    }
}
