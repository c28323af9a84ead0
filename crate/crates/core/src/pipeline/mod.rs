//! WAV input, dataset layout, tensor storage, synthetic data and the
//! experiment driver.

pub mod dataset;
pub mod experiment;
pub mod synth;
pub mod tensor_io;
pub mod wav;

pub use dataset::{DatasetLayout, DatasetSplit, LoadedDataset, Recording, RunIdent, DATA_ROOT_ENV};
pub use experiment::{
    report, run_experiment, run_experiment_full, run_on_dataset, write_outputs, ExperimentConfig,
    ExperimentOutput, ResultRow, RunArtifacts, Setup, SummaryRow,
};
pub use synth::{synth_nonstationary, synth_stationary, SynthOptions, SynthSet};
pub use tensor_io::{read_tensor, write_tensor};
pub use wav::{load_wav, write_wav, WavEncoding};
