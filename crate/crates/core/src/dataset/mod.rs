//! Shard storage, stratified splitting and mini-batch assembly.

mod batch;
mod manifest;
mod shard;
mod split;

pub use batch::{batches, frames_to_tensor, Batch, BatchIter};
pub use manifest::{load_dir, CellCount, DatasetManifest, FrameSet, ShardEntry, MANIFEST_FILE};
pub use shard::{read_shard, read_shard_header, write_shard, Shard, ShardHeader, SHARD_MAGIC, SHARD_VERSION};
pub use split::{split, SplitSpec, Splits};
