//! Dataset ingestion, filtering, splitting, and synthetic generation.

mod features;
mod interactions;
mod synthetic;

pub use features::{EntityKind, FeatureTable, Modality, FEATURE_MAGIC};
pub use interactions::{
    kcore_filter, leave_one_out_split, load_interactions, sample_negatives, DomainTag,
    InteractionTable, SplitSpec, Vocab,
};
pub use synthetic::{generate_synthetic_cdr, GroundTruth, SyntheticData, SyntheticSpec};
