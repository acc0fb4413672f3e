//! Localized click-based interactive segmentation.
//!
//! Each click runs a coarse prediction on a Target Crop around the object and
//! a detail refinement on a Focus Crop around the region the click changed;
//! Progressive Merge then copies only the clicked difference region onto the
//! previous mask. The crate also ships the automatic click-simulation
//! evaluation protocol (NoC/NoF) and a superpixel-based generator of
//! defective initial masks.

pub mod backend;
pub mod corrupt;
pub mod crop;
pub mod error;
pub mod eval;
pub mod raster;
pub mod seed;
pub mod session;
pub mod synthetic;

pub use error::{BackendError, CorruptError, DatasetError, EvalError, RasterError, SessionError};
pub use crop::{CropSpec, ModelSeries};
pub use raster::{iou, xor_diff, BBox, BinaryMask, Click, ImagePlanes, LabelMap, Polarity, ScalarMap};
pub use backend::Backend;
pub use session::{ClickResult, Session};
