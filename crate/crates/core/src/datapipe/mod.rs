//! From raw run frames to network-ready input sets: paddle masking, optical
//! flow, set assembly, augmentation and normalisation, plus the on-disk
//! dataset layout.

mod assemble;
mod augment;
mod combination;
mod dataset;
mod flow;
mod grid;
mod led;
mod mask;
mod norm;

use std::path::PathBuf;

use thiserror::Error;

use crate::protocol::ProtocolError;

pub use assemble::{
    assemble_input_sets, count_input_sets, AssembleConfig, Frame, InputSet, RunMeta,
};
pub use augment::{augment, augment_image, AugmentDraw};
pub use combination::Combination;
pub use dataset::{
    encode_frame, frame_path,
    read_frame_file, write_frame_file, ChannelTag, ConcreteInfo, Dataset, RunInfo, FRAME_MAGIC,
};
pub use flow::{flow_between, optical_flow, FlowField, FlowParams, PolyPyramid};
pub use grid::Grid;
pub use led::{
    decode_led, encode_led, paint_led_strip, read_led_strip, verify_sync, SyncCheck, LED_CELLS,
    LED_MODULUS, LED_OFF, LED_ON, LED_ROWS,
};
pub use mask::mask_paddle;
pub use norm::{apply_norm, denorm, fit_norm_stats, Category, MeanStd, NormStats};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("every cell lies above the masking threshold {threshold}")]
    EmptySurface { threshold: f32 },
    #[error("LED cell {cell} is unreadable (intensity {intensity})")]
    LedUnreadable { cell: usize, intensity: f32 },
    #[error("category {0} has zero variance in the training split")]
    ZeroVariance(Category),
    #[error("no statistics for category {0}")]
    MissingCategory(Category),
    #[error("unknown input combination {0:?}; valid names: O+D+m, O+D+m+OF, O+D, O+m, D+m, D+m+OF")]
    UnknownCombination(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
