//! File formats and test-data generation: vector bundles (manifest +
//! little-endian f32 payload), the single-file encoder registry container,
//! and the seeded synthetic benchmark generator.

pub mod bundle;
pub mod registry;
pub mod synth;

pub use bundle::{read_bundle, write_bundle, VectorBundle};
pub use registry::{load_registry, save_registry};
pub use synth::{generate_synthetic, LawData, SyntheticData, SyntheticSpec};
