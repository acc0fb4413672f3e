//! Backend driven by exported models through a tensor runtime.
//!
//! The io spec is a JSON document naming the model's tensors and the image
//! normalization:
//!
//! ```json
//! {
//!   "layout": "NCHW",
//!   "normalization": { "mean": [0.485, 0.456, 0.406], "std": [0.229, 0.224, 0.225] },
//!   "segmentor": {
//!     "inputs": { "image": "image", "prev_mask": "prev_mask", "pos_clicks": "pos", "neg_clicks": "neg" },
//!     "outputs": { "logits": "logits", "feature": "feature" }
//!   },
//!   "refiner": {
//!     "model": "refiner.onnx",
//!     "inputs": { "image": "image", "pos_clicks": "pos", "neg_clicks": "neg",
//!                 "roi_feature": "roi_feature", "roi_logits": "roi_logits" },
//!     "outputs": { "detail": "detail", "boundary": "boundary" }
//!   }
//! }
//! ```
//!
//! Optional input names may be omitted when the model does not take them. The
//! refiner section is optional; without it the gate stays closed and the
//! coarse logits pass through. A relative refiner path resolves against the
//! directory of the io spec file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Backend, CoarseOutput, RefineOutput, RefinerInput, SegmentorInput};
use crate::crop::{CropSpec, ModelSeries};
use crate::error::BackendError;
use crate::raster::{BBox, BinaryMask, ImagePlanes, ScalarMap};

/// Dense `f32` tensor in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    /// Stacks equally sized maps into a `[1, C, H, W]` tensor.
    pub fn from_maps(maps: &[&ScalarMap]) -> Self {
        let (w, h) = maps[0].dims();
        let mut data = Vec::with_capacity(maps.len() * w * h);
        for m in maps {
            data.extend_from_slice(m.as_slice());
        }
        Self::new(vec![1, maps.len(), h, w], data)
    }

    /// Splits a `[1, C, H, W]` tensor into `C` maps.
    pub fn to_maps(&self, name: &str) -> Result<Vec<ScalarMap>, BackendError> {
        let &[1, c, h, w] = self.shape.as_slice() else {
            return Err(BackendError::ShapeMismatch {
                tensor: name.to_string(),
                expected: vec![1, 0, 0, 0],
                got: self.shape.clone(),
            });
        };
        (0..c)
            .map(|i| {
                ScalarMap::from_vec(w, h, self.data[i * w * h..(i + 1) * w * h].to_vec()).map_err(|e| {
                    BackendError::Runtime(format!("output {name:?}: {e}"))
                })
            })
            .collect()
    }
}

/// Executes one exported model on named tensors.
pub trait InferenceRuntime: Send + Sync {
    fn run(&self, inputs: Vec<(String, Tensor)>) -> Result<Vec<(String, Tensor)>, BackendError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentorInputs {
    pub image: String,
    #[serde(default)]
    pub prev_mask: Option<String>,
    #[serde(default)]
    pub pos_clicks: Option<String>,
    #[serde(default)]
    pub neg_clicks: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentorOutputs {
    pub logits: String,
    #[serde(default)]
    pub feature: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentorIo {
    pub inputs: SegmentorInputs,
    pub outputs: SegmentorOutputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerInputs {
    pub image: String,
    #[serde(default)]
    pub pos_clicks: Option<String>,
    #[serde(default)]
    pub neg_clicks: Option<String>,
    #[serde(default)]
    pub roi_feature: Option<String>,
    pub roi_logits: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerOutputs {
    pub detail: String,
    pub boundary: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerIo {
    pub model: PathBuf,
    pub inputs: RefinerInputs,
    pub outputs: RefinerOutputs,
}

fn nchw() -> String {
    "NCHW".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoSpec {
    #[serde(default = "nchw")]
    pub layout: String,
    #[serde(default)]
    pub normalization: Normalization,
    pub segmentor: SegmentorIo,
    #[serde(default)]
    pub refiner: Option<RefinerIo>,
}

impl IoSpec {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let spec: IoSpec = serde_json::from_str(text).map_err(|e| BackendError::IoSpec(e.to_string()))?;
        if spec.layout != "NCHW" {
            return Err(BackendError::IoSpec(format!("unsupported layout {:?}; only NCHW", spec.layout)));
        }
        if spec.normalization.std.iter().any(|&s| s == 0.0) {
            return Err(BackendError::IoSpec("normalization std must be nonzero".into()));
        }
        Ok(spec)
    }
}

/// [`Backend`] over one or two [`InferenceRuntime`]s.
pub struct ExternalBackend {
    spec: IoSpec,
    segmentor: Box<dyn InferenceRuntime>,
    refiner: Option<Box<dyn InferenceRuntime>>,
}

impl std::fmt::Debug for ExternalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalBackend").field("spec", &self.spec).finish_non_exhaustive()
    }
}

fn take_output(outputs: &mut Vec<(String, Tensor)>, name: &str) -> Result<Tensor, BackendError> {
    let i = outputs
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| BackendError::MissingTensor(name.to_string()))?;
    Ok(outputs.swap_remove(i).1)
}

fn expect_single_channel(t: &Tensor, name: &str, (w, h): (usize, usize)) -> Result<ScalarMap, BackendError> {
    let expected = vec![1, 1, h, w];
    if t.shape != expected {
        return Err(BackendError::ShapeMismatch { tensor: name.to_string(), expected, got: t.shape.clone() });
    }
    Ok(t.to_maps(name)?.remove(0))
}

impl ExternalBackend {
    /// Wraps the runtimes and validates them with one dry run on zero inputs
    /// at the series' resolutions.
    pub fn new(
        spec: IoSpec,
        series: ModelSeries,
        segmentor: Box<dyn InferenceRuntime>,
        refiner: Option<Box<dyn InferenceRuntime>>,
    ) -> Result<Self, BackendError> {
        if refiner.is_some() != spec.refiner.is_some() {
            return Err(BackendError::IoSpec("refiner runtime and refiner io section must come together".into()));
        }
        let backend = Self { spec, segmentor, refiner };
        backend.dry_run(series)?;
        Ok(backend)
    }

    fn dry_run(&self, series: ModelSeries) -> Result<(), BackendError> {
        let zeros = |(w, h): (usize, usize)| ScalarMap::new(w, h);
        let planes = |d| ImagePlanes { channels: [zeros(d), zeros(d), zeros(d)] };
        let seg = series.segmentor_input();
        let crop = CropSpec::new(BBox::full(seg.0, seg.1), seg, 1.0);
        let coarse = self.segment(&SegmentorInput {
            image: planes(seg),
            prev_mask: BinaryMask::new(seg.0, seg.1),
            pos_clicks: zeros(seg),
            neg_clicks: zeros(seg),
            crop,
        })?;
        let rf = series.refiner_input();
        let s = coarse.feature_stride.max(1);
        let crop = CropSpec::new(BBox::full(rf.0, rf.1), rf, 1.0);
        self.refine(&RefinerInput {
            image: planes(rf),
            pos_clicks: zeros(rf),
            neg_clicks: zeros(rf),
            roi_feature: coarse.feature.iter().map(|_| zeros((rf.0 / s, rf.1 / s))).collect(),
            roi_logits: zeros(rf),
            crop,
        })?;
        Ok(())
    }

    fn image_tensor(&self, image: &ImagePlanes) -> Tensor {
        let norm = &self.spec.normalization;
        let channels: Vec<ScalarMap> = (0..3)
            .map(|c| {
                let mut m = image.channels[c].clone();
                for v in m.as_mut_slice() {
                    *v = (*v - norm.mean[c]) / norm.std[c];
                }
                m
            })
            .collect();
        Tensor::from_maps(&channels.iter().collect::<Vec<_>>())
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn segment(&self, input: &SegmentorInput) -> Result<CoarseOutput, BackendError> {
        input.validate()?;
        let io = &self.spec.segmentor;
        let mut feed = vec![(io.inputs.image.clone(), self.image_tensor(&input.image))];
        if let Some(name) = &io.inputs.prev_mask {
            let (w, h) = input.prev_mask.dims();
            let m = ScalarMap::from_fn(w, h, |x, y| input.prev_mask.get(x, y) as u8 as f32);
            feed.push((name.clone(), Tensor::from_maps(&[&m])));
        }
        if let Some(name) = &io.inputs.pos_clicks {
            feed.push((name.clone(), Tensor::from_maps(&[&input.pos_clicks])));
        }
        if let Some(name) = &io.inputs.neg_clicks {
            feed.push((name.clone(), Tensor::from_maps(&[&input.neg_clicks])));
        }
        let mut outputs = self.segmentor.run(feed)?;
        let logits = expect_single_channel(&take_output(&mut outputs, &io.outputs.logits)?, &io.outputs.logits, input.crop.out_dims())?;
        let (feature, feature_stride) = match &io.outputs.feature {
            None => (Vec::new(), 1),
            Some(name) => {
                let t = take_output(&mut outputs, name)?;
                let maps = t.to_maps(name)?;
                let (fw, fh) = maps.first().map(|m| m.dims()).unwrap_or((input.crop.out_w, input.crop.out_h));
                let stride = input.crop.out_w / fw;
                if stride == 0 || fw * stride != input.crop.out_w || fh * stride != input.crop.out_h {
                    return Err(BackendError::ShapeMismatch {
                        tensor: name.clone(),
                        expected: vec![1, maps.len(), input.crop.out_h, input.crop.out_w],
                        got: t.shape,
                    });
                }
                (maps, stride)
            }
        };
        let out = CoarseOutput { logits, feature, feature_stride };
        out.validate(&input.crop)?;
        Ok(out)
    }

    fn refine(&self, input: &RefinerInput) -> Result<RefineOutput, BackendError> {
        input.validate()?;
        let (Some(runtime), Some(io)) = (&self.refiner, &self.spec.refiner) else {
            let (w, h) = input.crop.out_dims();
            return Ok(RefineOutput {
                detail: input.roi_logits.clone(),
                boundary: ScalarMap::filled(w, h, -20.0),
            });
        };
        let mut feed = vec![
            (io.inputs.image.clone(), self.image_tensor(&input.image)),
            (io.inputs.roi_logits.clone(), Tensor::from_maps(&[&input.roi_logits])),
        ];
        if let Some(name) = &io.inputs.pos_clicks {
            feed.push((name.clone(), Tensor::from_maps(&[&input.pos_clicks])));
        }
        if let Some(name) = &io.inputs.neg_clicks {
            feed.push((name.clone(), Tensor::from_maps(&[&input.neg_clicks])));
        }
        if let (Some(name), false) = (&io.inputs.roi_feature, input.roi_feature.is_empty()) {
            feed.push((name.clone(), Tensor::from_maps(&input.roi_feature.iter().collect::<Vec<_>>())));
        }
        let mut outputs = runtime.run(feed)?;
        let dims = input.crop.out_dims();
        let detail = expect_single_channel(&take_output(&mut outputs, &io.outputs.detail)?, &io.outputs.detail, dims)?;
        let boundary =
            expect_single_channel(&take_output(&mut outputs, &io.outputs.boundary)?, &io.outputs.boundary, dims)?;
        Ok(RefineOutput { detail, boundary })
    }
}

/// Loads an exported segmentor (and optional refiner) described by the io
/// spec at `io_spec_path` and validates it with a dry run.
pub fn load_external_backend(
    model_path: &Path,
    io_spec_path: &Path,
    series: ModelSeries,
) -> Result<ExternalBackend, BackendError> {
    if !model_path.is_file() {
        return Err(BackendError::MissingFile(model_path.to_path_buf()));
    }
    let text = std::fs::read_to_string(io_spec_path)
        .map_err(|_| BackendError::MissingFile(io_spec_path.to_path_buf()))?;
    let mut spec = IoSpec::from_json(&text)?;
    if let Some(r) = spec.refiner.as_mut() {
        if r.model.is_relative() {
            r.model = io_spec_path.parent().unwrap_or(Path::new(".")).join(&r.model);
        }
        if !r.model.is_file() {
            return Err(BackendError::MissingFile(r.model.clone()));
        }
    }
    open_runtimes(model_path, spec, series)
}

#[cfg(feature = "onnx")]
fn open_runtimes(model_path: &Path, spec: IoSpec, series: ModelSeries) -> Result<ExternalBackend, BackendError> {
    let segmentor = Box::new(super::onnx::OnnxRuntime::load(model_path)?);
    let refiner = match &spec.refiner {
        Some(r) => Some(Box::new(super::onnx::OnnxRuntime::load(&r.model)?) as Box<dyn InferenceRuntime>),
        None => None,
    };
    ExternalBackend::new(spec, series, segmentor, refiner)
}

#[cfg(not(feature = "onnx"))]
fn open_runtimes(_model_path: &Path, _spec: IoSpec, _series: ModelSeries) -> Result<ExternalBackend, BackendError> {
    Err(BackendError::Unavailable("external (rebuild with the `onnx` feature)".into()))
}
