//! Bit-exact named-tensor archive.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "DCTH" (4 bytes)
//! version       u32
//! tensor count  u32
//! per tensor:
//!   name length u16, then UTF-8 name bytes
//!   rank        u8
//!   dims        u64 each
//!   dtype tag   u8 (0 = f32, 1 = f64)
//!   raw values, little-endian
//! ```
//!
//! save -> load -> save is byte-identical (f32 values survive the f64
//! in-memory representation exactly). Format violations report the byte
//! offset at which they were detected. An optional run-config snapshot
//! rides in a `<path>.json` sidecar, since the archive itself carries only
//! tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::Write as _;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DCTH";
pub const VERSION: u32 = 1;

/// Storage precision of one archived tensor. Everything is f64 in memory;
/// F32 halves the on-disk size for weight snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_tag(tag: u8, offset: u64) -> Result<Dtype> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::Format {
                offset,
                message: format!("unknown dtype tag {other}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: Dtype,
    pub tensor: Tensor,
}

/// In-memory checkpoint: versioned named tensors plus an optional config
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub entries: Vec<Entry>,
    pub config_json: Option<String>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint {
            version: VERSION,
            entries: Vec::new(),
            config_json: None,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, dtype: Dtype, tensor: Tensor) {
        self.entries.push(Entry {
            name: name.into(),
            dtype,
            tensor,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.tensor.rank() as u8);
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(e.dtype.tag());
            match e.dtype {
                Dtype::F32 => {
                    for &v in e.tensor.data() {
                        out.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
                Dtype::F64 => {
                    for &v in e.tensor.data() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected {MAGIC:?}"),
            });
        }
        let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let count = u32::from_le_bytes(r.take(4, "tensor count")?.try_into().unwrap());
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len =
                u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
            let name_off = r.pos as u64;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec()).map_err(|_| {
                Error::Format {
                    offset: name_off,
                    message: "tensor name is not UTF-8".into(),
                }
            })?;
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.take(8, "dimension")?.try_into().unwrap());
                shape.push(d as usize);
            }
            let tag_off = r.pos as u64;
            let dtype = Dtype::from_tag(r.take(1, "dtype tag")?[0], tag_off)?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            match dtype {
                Dtype::F32 => {
                    for _ in 0..n {
                        let b = r.take(4, "f32 value")?;
                        data.push(f32::from_le_bytes(b.try_into().unwrap()) as f64);
                    }
                }
                Dtype::F64 => {
                    for _ in 0..n {
                        let b = r.take(8, "f64 value")?;
                        data.push(f64::from_le_bytes(b.try_into().unwrap()));
                    }
                }
            }
            let data_off = r.pos as u64;
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Format {
                offset: data_off,
                message: e.to_string(),
            })?;
            entries.push(Entry {
                name,
                dtype,
                tensor,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes after last tensor", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            version,
            entries,
            config_json: None,
        })
    }

    /// Write the archive (and the config sidecar when present).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        if let Some(cfg) = &self.config_json {
            std::fs::write(sidecar_path(path), cfg)?;
        }
        Ok(())
    }

    /// Read the archive, picking up the config sidecar if one exists.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut ckpt = Checkpoint::from_bytes(&bytes)?;
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            ckpt.config_json = Some(std::fs::read_to_string(sidecar)?);
        }
        Ok(ckpt)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint::new()
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn empty_checkpoint_is_twelve_bytes() {
        let bytes = Checkpoint::new().to_bytes();
        assert_eq!(bytes.len(), 12);
        assert_eq!(&bytes[0..4], b"DCTH");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert!(back.entries.is_empty());
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let mut rng = RngState::new(1);
        let mut ckpt = Checkpoint::new();
        ckpt.push("model.w", Dtype::F64, rng.rand_uniform(&[3, 4], -1.0, 1.0));
        ckpt.push("model.b", Dtype::F32, rng.rand_uniform(&[4], -1.0, 1.0));
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        // f64 payloads survive exactly
        assert_eq!(loaded.get("model.w"), ckpt.get("model.w"));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut ckpt = Checkpoint::new();
        ckpt.push("w", Dtype::F64, Tensor::ones(&[4]));
        let bytes = ckpt.to_bytes();
        let cut = &bytes[..bytes.len() - 5];
        match Checkpoint::from_bytes(cut) {
            Err(Error::Format { offset, message }) => {
                assert!(offset > 0, "offset {offset}");
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected_at_offset_zero() {
        let mut bytes = Checkpoint::new().to_bytes();
        bytes[0] = b'X';
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_on_disk_with_sidecar() {
        let dir = std::env::temp_dir().join(format!("dctconv-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.ckpt");
        let mut ckpt = Checkpoint::new();
        ckpt.push("x", Dtype::F64, Tensor::full(&[2, 2], 0.25));
        ckpt.config_json = Some("{\"seed\":7}".into());
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.get("x"), ckpt.get("x"));
        assert_eq!(loaded.config_json.as_deref(), Some("{\"seed\":7}"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn f32_roundtrip_preserves_bytes() {
        let t = Tensor::new(vec![3], vec![0.1f32 as f64, 2.5, -7.25]).unwrap();
        let mut ckpt = Checkpoint::new();
        ckpt.push("w", Dtype::F32, t);
        let bytes = ckpt.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
    }
}
