// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary storage: paired activation shards, checkpoints and token streams.
//!
//! # Shard layout
//!
//! All integers little-endian. The header is 24 bytes:
//!
//! ```text
//! 0..4    magic "ACTS"
//! 4..6    version (u16, = 1)
//! 6..10   d_in (u32)
//! 10..14  d_out (u32)
//! 14..22  n_rows (u64)
//! 22      dtype_code (u8, 0 = f32)
//! 23      reserved (0)
//! ```
//!
//! followed by `n_rows` rows, each `d_in` input values then `d_out` target
//! values. A dataset may span several shard files; they are concatenated in
//! lexicographic path order.

mod archive;
mod checkpoint;
mod shard;
mod source;
mod tokens;

pub use archive::TensorArchive;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use shard::{
    read_shard, write_shard, ShardDataset, ShardHeader, ShardReader, ShardRow, ShardWriter,
    HEADER_LEN, SHARD_MAGIC,
};
pub use source::{DatasetCursor, MemoryRows, RowSource, RowView, Viewed};
pub use tokens::{read_tokens, write_tokens};
