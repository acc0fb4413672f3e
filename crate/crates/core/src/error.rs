use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("buffer of length {len} does not match {width}x{height}")]
    BufferLength { width: usize, height: usize, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("malformed scalar blob: {0}")]
    Blob(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("tensor {tensor:?} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("model file not found: {0}")]
    MissingFile(PathBuf),
    #[error("model has no tensor named {0:?}")]
    MissingTensor(String),
    #[error("invalid io spec: {0}")]
    IoSpec(String),
    #[error("inference runtime error: {0}")]
    Runtime(String),
    #[error("backend {0:?} is not available in this build")]
    Unavailable(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("click ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("mask is {got:?} but the image is {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset directory {0} is missing")]
    MissingDir(PathBuf),
    #[error("sample {id}: image is {image:?} but mask {mask} is {mask_dims:?}")]
    DimensionMismatch { id: String, image: (usize, usize), mask: PathBuf, mask_dims: (usize, usize) },
    #[error("sample {id}: no initial mask at {path}")]
    MissingInitMask { id: String, path: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction already equals the ground truth; no click to simulate")]
    NoError,
    #[error("no sample records to aggregate")]
    EmptyRecords,
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Error)]
pub enum CorruptError {
    #[error("ground truth has {0} pixels; at least 300 are required")]
    TooSmall(usize),
    #[error("image has {pixels} pixels, fewer than the {k} requested superpixels")]
    ImageTooSmall { pixels: usize, k: usize },
    #[error("no mask inside the IOU band after {0} attempts")]
    AttemptsExhausted(usize),
    #[error("invalid defect config: {0}")]
    Config(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
