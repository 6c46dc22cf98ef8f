//! Experiment bookkeeping: mix-design vectors, reference measurements and
//! their combinations, time offsets, and the cross-validation split.

mod folds;
mod mix;
mod references;

use thiserror::Error;

pub use folds::{make_folds, Fold, FoldConcrete, FoldPlan, FoldSpec};
pub use mix::{MixDesign, Materials, GRADING_BINS, MATERIAL_INDICES, MIX_DIM};
pub use references::{
    assign_combination, compute_delta_t, enumerate_combinations, format_references, parse_references,
    Reading, ReferenceCombination, ReferenceMeasurement,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("concrete has no {0} measurement")]
    MissingMeasurement(&'static str),
    #[error("{context}, line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("fold constraints: {0}")]
    Folds(String),
}

/// Parses `key=value` lines, ignoring blanks and `#` comments. Duplicate keys
/// are rejected.
pub fn parse_key_values(text: &str, context: &str) -> Result<Vec<(String, String)>, ProtocolError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ProtocolError::Parse {
            context: context.to_string(),
            line: i + 1,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(err(format!("duplicate key {k}")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
