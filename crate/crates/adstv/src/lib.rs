//! File formats, the `adstv` command-line tool and the benchmark harness
//! built on top of [`adstv_core`].

pub mod bench;
pub mod cli;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use adstv_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] adstv_core::Error),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Exit status: 2 for anything touching the filesystem or a file's
    /// contents, 1 for bad parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(_) | Error::Invalid(_) => 1,
            Error::Io(_) | Error::Csv(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
