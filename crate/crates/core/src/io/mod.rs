//! Gridded signals, volumes on disk, checkpoints, results and images.

mod checkpoint;
mod grid;
mod image;
mod results;
mod volume;

pub use checkpoint::{
    load_model, save_model, Block, Checkpoint, ModelMeta, Payload, DECODER, ENCODER, FORMAT_VERSION, MAGIC,
    MODEL_META,
};
pub use grid::{Channel, GridSignal, NormMeta, MAX_AXES};
pub use image::{grid_slice, model_slice, pgm_bytes, quantize, read_pgm, write_pgm, Slice2};
pub use results::{read_summary, read_trace_csv, write_results, RunRecord, SummaryRow, TraceRow};
pub use volume::{load_volume, save_volume, volume_paths, VolumeDescriptor};
