//! ONNX execution through tract. Models must declare static input shapes.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::external::{InferenceRuntime, Tensor};
use crate::error::BackendError;

pub(crate) struct OnnxRuntime {
    model: Arc<TypedRunnableModel>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn runtime_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::Runtime(e.to_string())
}

impl OnnxRuntime {
    pub(crate) fn load(path: &Path) -> Result<Self, BackendError> {
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(runtime_err)?;
        let graph = model.model();
        let inputs = graph
            .input_outlets()
            .map_err(runtime_err)?
            .iter()
            .map(|o| graph.node(o.node).name.clone())
            .collect();
        let outputs = graph
            .output_outlets()
            .map_err(runtime_err)?
            .iter()
            .map(|o| graph.outlet_label(*o).map(str::to_string).unwrap_or_else(|| graph.node(o.node).name.clone()))
            .collect();
        Ok(Self { model, inputs, outputs })
    }
}

impl InferenceRuntime for OnnxRuntime {
    fn run(&self, mut inputs: Vec<(String, Tensor)>) -> Result<Vec<(String, Tensor)>, BackendError> {
        let mut feed = tvec!();
        for name in &self.inputs {
            let i = inputs
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| BackendError::MissingTensor(name.clone()))?;
            let t = inputs.swap_remove(i).1;
            let tensor = tract_onnx::prelude::Tensor::from_shape(&t.shape, &t.data).map_err(runtime_err)?;
            feed.push(TValue::from(tensor));
        }
        let result = self.model.run(feed).map_err(runtime_err)?;
        self.outputs
            .iter()
            .zip(result.iter())
            .map(|(name, value)| {
                let view = value.to_plain_array_view::<f32>().map_err(runtime_err)?;
                Ok((name.clone(), Tensor::new(view.shape().to_vec(), view.iter().copied().collect())))
            })
            .collect()
    }
}
