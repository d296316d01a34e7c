use std::path::PathBuf;

use thiserror::Error;
use tweetlink::cascade::CascadeError;
use tweetlink::contrast::ContrastError;
use tweetlink::corpus::CorpusError;
use tweetlink::evalx::EvalError;
use tweetlink::linker::LinkError;
use tweetlink::persist::PersistError;
use tweetlink::textprep::TextError;
use tweetlink::vectorize::VectorizeError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("nothing to report")]
    EmptyResults,
    #[error("validation cells overlap the training split: {0}")]
    SplitLeak(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Contrast(#[from] ContrastError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// 1 when the data cannot be evaluated (no positives, nothing labeled),
    /// 2 for configuration, input and I/O problems.
    pub fn exit_code(&self) -> i32 {
        let degenerate = match self {
            CliError::Eval(e) => !matches!(e, EvalError::ShapeMismatch { .. }),
            CliError::Link(
                LinkError::NoPositives | LinkError::NoLabeledCells | LinkError::Eval(_),
            ) => true,
            CliError::Contrast(
                ContrastError::NoPositives | ContrastError::NoNegativesAvailable(_),
            ) => true,
            _ => false,
        };
        if degenerate {
            1
        } else {
            2
        }
    }
}

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
