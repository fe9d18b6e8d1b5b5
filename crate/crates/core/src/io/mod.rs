//! Files on disk: tensor containers, checkpoints, manifests, run configs and
//! the synthetic corpus generator.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod corpus;
pub mod manifest;
pub mod synth;

pub use checkpoint::{vit_from_container, vit_to_container, AstCheckpoint, FeatureCache};
pub use config::{DataPaths, InitSource, Preset, RunConfig};
pub use container::Container;
pub use corpus::Corpus;
pub use manifest::{LabelMap, Manifest, ManifestRow};
pub use synth::{synth_dataset, SynthOptions};
