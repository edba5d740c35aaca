//! Synthetic multi-paradigm EEG-like corpus: electrode superset and
//! region/network group tables, deterministic signal generation, FIR
//! band-pass preprocessing, 1-second patching, and the on-disk corpus
//! format consumed by the training harness.

pub mod corpus;
pub mod filter;
pub mod groups;
pub mod montage;
pub mod patch;
pub mod synth;

pub use corpus::{Corpus, CorpusMeta, Split, SplitData};
pub use filter::fir_bandpass;
pub use groups::{Group, GroupKind, GroupTable};
pub use montage::Montage;
pub use patch::{patch, EegBatch};
pub use synth::{generate_corpus, BandPowers, LabelRule, SynthConfig, SynthParadigmSpec};

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("montage: unknown channel {0:?} (not in the electrode superset)")]
    UnknownChannel(String),
    #[error("montage: duplicate channel {0:?}")]
    DuplicateChannel(String),
    #[error("group table: {0}")]
    BadGroupTable(String),
    #[error("filter: invalid band edges low={low} high={high} at fs={fs}")]
    BadBand { low: f64, high: f64, fs: f64 },
    #[error("patch: stream of {got} samples is shorter than one {patch}-sample patch")]
    StreamTooShort { got: usize, patch: usize },
    #[error("synth: {0}")]
    BadSynthConfig(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] stratum_tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, SignalError>;
