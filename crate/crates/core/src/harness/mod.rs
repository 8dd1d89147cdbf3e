//! Experiment configs, the command implementations behind the `detgas`
//! binary, and their CSV/JSON artifacts.

mod commands;
mod config;
mod output;

pub use commands::{
    cmd_diag, cmd_fekete, cmd_ldp, cmd_sample, describe, exit_code, read_archive, RunContext, SampleManifest,
};
pub use config::{
    BasisConfig, DiagConfig, DictionaryConfig, DomainConfig, ExperimentConfig, ExperimentSection, FeketeConfig,
    LdpConfig, MeasureConfig, ModelKind, OutputConfig, PhiConfig, RegionConfig, SamplerConfig, SamplerKind,
};
pub use output::{RecordEntry, RunRecord, TOOL_VERSION};
