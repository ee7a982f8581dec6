use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {msg}")]
    Label {
        line: usize,
        field: &'static str,
        msg: String,
    },

    #[error("calibration: {0}")]
    Calib(String),

    #[error("velodyne buffer length {0} is not a multiple of 16")]
    VelodyneLength(usize),

    #[error("instance masks: {0}")]
    Mask(String),

    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }

    pub(crate) fn in_frame(self, frame: &str) -> Self {
        Error::Frame {
            frame: frame.to_owned(),
            source: Box::new(self),
        }
    }
}
