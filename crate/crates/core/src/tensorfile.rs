//! Named f32 arrays plus string metadata in a safetensors container.

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, View};

use crate::{Error, Result};

/// One named array held on the host.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HostArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

struct F32View<'a> {
    shape: &'a [usize],
    data: &'a [f32],
}

impl View for F32View<'_> {
    fn dtype(&self) -> Dtype {
        Dtype::F32
    }

    fn shape(&self) -> &[usize] {
        self.shape
    }

    fn data(&self) -> Cow<'_, [u8]> {
        Cow::Owned(self.data.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    fn data_len(&self) -> usize {
        self.data.len() * 4
    }
}

pub(crate) fn serialize(arrays: &[HostArray], metadata: HashMap<String, String>) -> Result<Vec<u8>> {
    let views = arrays.iter().map(|a| {
        (
            a.name.as_str(),
            F32View {
                shape: &a.shape,
                data: &a.data,
            },
        )
    });
    let bytes = safetensors::tensor::serialize(views, &Some(metadata))
        .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
    Ok(canonical_header(bytes))
}

/// Rewrites the JSON header with sorted keys so that equal contents give
/// equal bytes (metadata comes from a `HashMap`). Data offsets are
/// relative to the end of the header and stay valid.
fn canonical_header(bytes: Vec<u8>) -> Vec<u8> {
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8-byte prefix")) as usize;
    let header: serde_json::Value =
        serde_json::from_slice(&bytes[8..8 + n]).expect("header written by safetensors is JSON");
    let mut text = serde_json::to_vec(&header).expect("JSON value serializes");
    while !text.len().is_multiple_of(8) {
        text.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + text.len() + bytes.len() - 8 - n);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[8 + n..]);
    out
}

/// Writes to a sibling temp file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::file(path, e));
    }
    Ok(())
}

/// A parsed container. Tensor payloads are decoded on demand.
pub(crate) struct TensorFile<'a> {
    pub metadata: HashMap<String, String>,
    tensors: SafeTensors<'a>,
}

impl<'a> TensorFile<'a> {
    pub fn parse(bytes: &'a [u8]) -> std::result::Result<Self, String> {
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| e.to_string())?;
        let metadata = meta.metadata().clone().unwrap_or_default();
        let tensors = SafeTensors::deserialize(bytes).map_err(|e| e.to_string())?;
        Ok(Self { metadata, tensors })
    }

    pub fn shape(&self, name: &str) -> Option<Vec<usize>> {
        self.tensors.tensor(name).ok().map(|v| v.shape().to_vec())
    }

    /// Decodes one tensor as f32. F16, BF16 and F64 are converted.
    pub fn read_f32(&self, name: &str) -> std::result::Result<Vec<f32>, String> {
        let view = self.tensors.tensor(name).map_err(|e| e.to_string())?;
        match view.dtype() {
            Dtype::F32 => Ok(view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()),
            Dtype::F64 | Dtype::F16 | Dtype::BF16 => {
                use candle_core::safetensors::Load;
                let t = view
                    .load(&candle_core::Device::Cpu)
                    .and_then(|t| t.to_dtype(candle_core::DType::F32))
                    .and_then(|t| t.flatten_all())
                    .and_then(|t| t.to_vec1::<f32>())
                    .map_err(|e| e.to_string())?;
                Ok(t)
            }
            other => Err(format!("tensor `{name}` has unsupported dtype {other:?}")),
        }
    }
}
