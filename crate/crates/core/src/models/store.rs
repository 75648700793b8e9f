//! Model files: one JSON header line followed by every parameter as a
//! little-endian f64, blocks in declaration order.
//!
//! ```text
//! {"format":"geoqc-model","format_version":1,"architecture":{"kind":"local",...},"shapes":[[2000,128],...]}\n
//! <raw f64 data>
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GlobalArchitecture, GlobalModel, LocalArchitecture, LocalModel};
use crate::error::{GeoqcError, Result};
use crate::nn::Parameterized;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "geoqc-model";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Architecture {
    Global(GlobalArchitecture),
    Local(LocalArchitecture),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    format_version: u32,
    architecture: Architecture,
    shapes: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Global(GlobalModel),
    Local(LocalModel),
}

#[derive(Clone, Copy, Debug)]
pub enum ModelRef<'a> {
    Global(&'a GlobalModel),
    Local(&'a LocalModel),
}

impl<'a> From<&'a GlobalModel> for ModelRef<'a> {
    fn from(m: &'a GlobalModel) -> Self {
        ModelRef::Global(m)
    }
}

impl<'a> From<&'a LocalModel> for ModelRef<'a> {
    fn from(m: &'a LocalModel) -> Self {
        ModelRef::Local(m)
    }
}

impl<'a> From<&'a Model> for ModelRef<'a> {
    fn from(m: &'a Model) -> Self {
        match m {
            Model::Global(g) => ModelRef::Global(g),
            Model::Local(l) => ModelRef::Local(l),
        }
    }
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Global(_) => "global",
            Model::Local(_) => "local",
        }
    }
}

pub fn save_model<'a>(path: impl AsRef<Path>, model: impl Into<ModelRef<'a>>) -> Result<()> {
    let path = path.as_ref();
    let (architecture, params) = match model.into() {
        ModelRef::Global(m) => (Architecture::Global(m.arch.clone()), m.params()),
        ModelRef::Local(m) => (Architecture::Local(m.arch.clone()), m.params()),
    };
    let header = Header {
        format: MAGIC.into(),
        format_version: MODEL_FORMAT_VERSION,
        architecture,
        shapes: params.iter().map(|p| [p.rows(), p.cols()]).collect(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    let total: usize = params.iter().map(|p| p.as_slice().len()).sum();
    bytes.reserve(total * 8);
    for p in params {
        for v in p.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| GeoqcError::io(path, e))
}

fn fill<M: Parameterized>(mut model: M, shapes: &[[usize; 2]], data: &[u8]) -> Result<M> {
    let mut params = model.params_mut();
    if params.len() != shapes.len() {
        return Err(GeoqcError::ModelMismatch(format!(
            "architecture has {} parameter blocks, file lists {}",
            params.len(),
            shapes.len()
        )));
    }
    let mut expected_len = 0;
    for (k, (p, s)) in params.iter().zip(shapes).enumerate() {
        if [p.rows(), p.cols()] != *s {
            return Err(GeoqcError::ModelMismatch(format!(
                "parameter block {k}: file shape {}x{}, architecture needs {}x{}",
                s[0],
                s[1],
                p.rows(),
                p.cols()
            )));
        }
        expected_len += s[0] * s[1] * 8;
    }
    if data.len() != expected_len {
        return Err(GeoqcError::ModelMismatch(format!(
            "expected {expected_len} bytes of parameters, found {}",
            data.len()
        )));
    }
    let mut words = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for p in params.iter_mut() {
        for v in p.as_mut_slice() {
            *v = words.next().expect("length checked");
        }
    }
    drop(params);
    if !model.params().iter().all(|p| p.is_finite()) {
        return Err(GeoqcError::Numeric("model file contains non-finite parameters".into()));
    }
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| GeoqcError::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| GeoqcError::Parse {
            line: 1,
            message: "missing model header".into(),
        })?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[..split]).map_err(|e| GeoqcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(MAGIC) {
        return Err(GeoqcError::Parse {
            line: 1,
            message: "not a model file".into(),
        });
    }
    let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(GeoqcError::Version {
            found: version,
            expected: u64::from(MODEL_FORMAT_VERSION),
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| GeoqcError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let data = &bytes[split + 1..];
    match header.architecture {
        Architecture::Global(arch) => Ok(Model::Global(fill(GlobalModel::zeros(arch)?, &header.shapes, data)?)),
        Architecture::Local(arch) => Ok(Model::Local(fill(LocalModel::zeros(arch)?, &header.shapes, data)?)),
    }
}

fn mismatch(path: &Path, wanted: &str, found: &str) -> GeoqcError {
    GeoqcError::ModelMismatch(format!(
        "{} holds a {found} model, a {wanted} model was expected",
        path.display()
    ))
}

pub fn load_global_model(path: impl AsRef<Path>) -> Result<GlobalModel> {
    match load_model(path.as_ref())? {
        Model::Global(m) => Ok(m),
        other => Err(mismatch(path.as_ref(), "global", other.kind())),
    }
}

pub fn load_local_model(path: impl AsRef<Path>) -> Result<LocalModel> {
    match load_model(path.as_ref())? {
        Model::Local(m) => Ok(m),
        other => Err(mismatch(path.as_ref(), "local", other.kind())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::global_forward;

    fn small_global() -> GlobalModel {
        GlobalModel::new(
            GlobalArchitecture {
                n: 3,
                segments: 10,
                hidden_size: 6,
                encoder_layers: 2,
                decoder_layers: 3,
            },
            11,
        )
        .unwrap()
    }

    fn small_local() -> LocalModel {
        LocalModel::new(
            LocalArchitecture {
                n: 3,
                hidden: vec![9],
                output_size: 36,
            },
            12,
        )
        .unwrap()
    }

    #[test]
    fn global_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.model");
        let model = small_global();
        save_model(&path, &model).unwrap();
        let loaded = load_global_model(&path).unwrap();
        assert_eq!(loaded, model);
        let u = crate::algebra::mat_exp(&crate::algebra::random_algebra_element(
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1),
            3,
        ))
        .unwrap();
        let a = global_forward(&model, &u).unwrap();
        let b = global_forward(&loaded, &u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
                assert_eq!(p.re.to_bits(), q.re.to_bits());
                assert_eq!(p.im.to_bits(), q.im.to_bits());
            }
        }
    }

    #[test]
    fn local_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.model");
        let model = small_local();
        save_model(&path, &model).unwrap();
        assert_eq!(load_local_model(&path).unwrap(), model);
        assert!(matches!(load_global_model(&path), Err(GeoqcError::ModelMismatch(_))));
    }

    #[test]
    fn missing_file_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_model(dir.path().join("absent.model")),
            Err(GeoqcError::NotFound(_))
        ));
    }

    #[test]
    fn truncated_or_tampered_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.model");
        save_model(&path, &small_local()).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model(&path), Err(GeoqcError::ModelMismatch(_))));

        let text = String::from_utf8_lossy(&bytes).into_owned();
        let header_end = text.find('\n').unwrap();
        let bumped = text[..header_end].replace("\"format_version\":1", "\"format_version\":7");
        let mut tampered = bumped.into_bytes();
        tampered.extend_from_slice(&bytes[header_end..]);
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(load_model(&path), Err(GeoqcError::Version { found: 7, .. })));

        let reshaped = text[..header_end].replacen("[9,128]", "[128,9]", 1);
        let mut tampered = reshaped.into_bytes();
        tampered.extend_from_slice(&bytes[header_end..]);
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(load_model(&path), Err(GeoqcError::ModelMismatch(_))));
    }
}
