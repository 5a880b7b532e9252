//! Mesh ingestion, dataset indexing and the refinement engine.

pub mod flat;
pub mod index;
pub mod loader;
pub mod mesh;
pub mod refine;
pub mod synthetic;

pub use flat::{detect_flat, DEFAULT_FLAT_TAU};
pub use index::{dataset_stats, DatasetIndex, DatasetStats, IndexEntry, Split};
pub use loader::{load_batches, read_cloud, Batch, Dataset, EpochPlan, LoadOptions};
pub use mesh::{parse_off, sample_mesh, serialize_off, Mesh};
pub use refine::{apply_manifest, Action, AuditReport, ManifestRecord, RefinementManifest};
pub use synthetic::{shape_mesh, write_shape_dataset, Shape};
