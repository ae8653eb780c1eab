use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamStore, Tensor};
use crate::graphcore::GraphError;
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "grapht-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

pub fn params_to_json<T: Scalar>(store: &ParamStore<T>) -> String {
    let params = store
        .ids()
        .map(|id| {
            let t = store.get(id);
            Entry { name: store.name(id).to_string(), shape: t.shape().to_vec(), data: t.data().iter().map(|v| v.as_f64()).collect() }
        })
        .collect();
    let doc = Document { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, params };
    serde_json::to_string(&doc).expect("serializable")
}

/// Overwrites every parameter of `store` with the same-named, same-shaped
/// entry of the checkpoint.
pub fn params_from_json<T: Scalar>(store: &mut ParamStore<T>, json: &str) -> Result<(), GraphError> {
    let doc: Document = serde_json::from_str(json)?;
    if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
        return Err(GraphError::Encoding(format!("unsupported checkpoint {} v{}", doc.format, doc.version)));
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let e = doc
            .params
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| GraphError::Encoding(format!("checkpoint lacks parameter {name}")))?;
        if e.shape != store.get(id).shape() {
            return Err(GraphError::Encoding(format!("parameter {name}: shape {:?} != {:?}", e.shape, store.get(id).shape())));
        }
        let requires = store.get(id).requires_grad();
        *store.get_mut(id) = Tensor::new(e.shape.clone(), e.data.iter().map(|&v| T::of(v)).collect())?.with_grad(requires);
    }
    Ok(())
}

pub fn save_params<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<(), GraphError> {
    std::fs::write(path, params_to_json(store))?;
    Ok(())
}

pub fn load_params<T: Scalar>(store: &mut ParamStore<T>, path: &Path) -> Result<(), GraphError> {
    params_from_json(store, &std::fs::read_to_string(path)?)
}
