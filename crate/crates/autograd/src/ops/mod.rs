//! Forward/backward pairs recorded on the graph.

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod scan;
mod shape;

pub use scan::ScanMode;

use crate::{AutogradError, Result};

pub(crate) fn shape_err(op: &str, a: &[usize], b: &[usize]) -> AutogradError {
    AutogradError::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(AutogradError::Shape(msg()))
    }
}
