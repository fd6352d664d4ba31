//! Experiment specifications, dispatch and reproducibility manifests.

pub mod run;
pub mod spec;

pub use run::{output_dir, replay, run, run_with_threads, OutputRecord, RunManifest, SeedStream, MANIFEST_FILE};
pub use spec::{BoundCheck, DomainSpec, ExperimentKind, ExperimentSpec, Params, WindowSpec};
