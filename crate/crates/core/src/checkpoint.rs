//! Binary parameter checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "IDPT"              magic
//! u32                 version (1)
//! u32                 role (0 backbone, 1 tunables)
//! u64, bytes          config text (UTF-8)
//! u32                 tensor count
//! per tensor:
//!   u32, bytes        name (UTF-8)
//!   u32               dtype (0 f32, 1 f64)
//!   u32               rank
//!   u64 × rank        dims
//!   bytes             data, row-major
//! ```
//!
//! A backbone checkpoint holds exactly the backbone tensors. A tunables
//! checkpoint holds the prompt, generator and head tensors and never a
//! backbone tensor, so one frozen backbone serves many tasks.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{Group, ParamStore};
use crate::tensor::{DType, Scalar};

pub const MAGIC: &[u8; 4] = b"IDPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Backbone,
    Tunables,
}

impl Role {
    fn code(self) -> u32 {
        match self {
            Role::Backbone => 0,
            Role::Tunables => 1,
        }
    }

    /// Whether a parameter of `group` belongs in a checkpoint of this role.
    pub fn holds(self, group: Group) -> bool {
        match self {
            Role::Backbone => group == Group::Backbone,
            Role::Tunables => matches!(group, Group::Prompt | Group::Generator | Group::Head),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Backbone => "backbone",
            Role::Tunables => "tunables",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
    /// Raw little-endian element bytes.
    pub data: Vec<u8>,
}

impl TensorRecord {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    fn encode<T: Scalar>(values: &[T]) -> Vec<u8> {
        let mut out = Vec::with_capacity(values.len() * T::DTYPE.size());
        for v in values {
            match T::DTYPE {
                DType::F32 => out.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.f64().to_le_bytes()),
            }
        }
        out
    }

    fn values<T: Scalar>(&self) -> Vec<T> {
        match self.dtype {
            DType::F32 => self
                .data
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect(),
            DType::F64 => self
                .data
                .chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub role: Role,
    /// Rendered run configuration that produced the tensors.
    pub config: String,
    pub tensors: Vec<TensorRecord>,
}

/// Cursor over a byte slice that reports truncation instead of panicking.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(format!("truncated while reading {what} at byte {}", self.pos));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> std::result::Result<usize, String> {
        usize::try_from(self.u64(what)?).map_err(|_| format!("{what} does not fit in memory"))
    }

    fn string(&mut self, n: usize, what: &str) -> std::result::Result<String, String> {
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| format!("{what} is not UTF-8"))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    /// Collects the store's tensors that belong to `role`, in store order.
    pub fn from_store<T: Scalar>(store: &ParamStore<T>, role: Role, config: &str) -> Self {
        let tensors = store
            .iter()
            .filter(|(_, p)| role.holds(p.group))
            .map(|(_, p)| TensorRecord {
                name: p.name.clone(),
                dtype: T::DTYPE,
                dims: p.shape.clone(),
                data: TensorRecord::encode(&p.value),
            })
            .collect();
        Self {
            role,
            config: config.to_string(),
            tensors,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self.tensors.iter().map(|t| t.data.len() + t.name.len() + 12 + 8 * t.dims.len()).sum();
        let mut out = Vec::with_capacity(24 + self.config.len() + payload);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.role.code());
        put_u64(&mut out, self.config.len() as u64);
        out.extend_from_slice(self.config.as_bytes());
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.dtype.code());
            put_u32(&mut out, t.dims.len() as u32);
            for &d in &t.dims {
                put_u64(&mut out, d as u64);
            }
            out.extend_from_slice(&t.data);
        }
        out
    }

    /// Parses a whole checkpoint; the message of an `Err` describes the
    /// first problem.
    pub fn decode(buf: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err("bad magic, not a checkpoint".into());
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(format!("unsupported version {version}, expected {VERSION}"));
        }
        let role = match r.u32("role")? {
            0 => Role::Backbone,
            1 => Role::Tunables,
            c => return Err(format!("unknown role code {c}")),
        };
        let n = r.len("config length")?;
        let config = r.string(n, "config text")?;
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for i in 0..count {
            let n = r.u32("name length")? as usize;
            let name = r.string(n, "tensor name")?;
            let code = r.u32("dtype")?;
            let dtype = DType::from_code(code).ok_or_else(|| format!("tensor {name}: unknown dtype code {code}"))?;
            let rank = r.u32("rank")? as usize;
            let mut dims = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                dims.push(r.len("dims")?);
            }
            let bytes = dims
                .iter()
                .try_fold(dtype.size(), |a, &d| a.checked_mul(d))
                .ok_or_else(|| format!("tensor {name}: dims overflow"))?;
            let data = r.take(bytes, &format!("data of tensor {i} ({name})"))?.to_vec();
            tensors.push(TensorRecord { name, dtype, dims, data });
        }
        if r.pos != buf.len() {
            return Err(format!("{} trailing bytes after the tensor table", buf.len() - r.pos));
        }
        Ok(Self { role, config, tensors })
    }

    /// Writes every tensor into `store`. Names, shapes and dtypes are checked
    /// against the store first, so a mismatch leaves the store untouched.
    pub fn apply<T: Scalar>(&self, store: &mut ParamStore<T>) -> std::result::Result<(), String> {
        let mut plan = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let Some(id) = store.id(&t.name) else {
                return Err(format!("tensor {} has no counterpart in the model", t.name));
            };
            let p = store.get(id);
            if !self.role.holds(p.group) {
                return Err(format!("tensor {} is a {} parameter, not part of a {} checkpoint", t.name, p.group, self.role));
            }
            if p.shape != t.dims {
                return Err(format!("tensor {} has shape {:?}, the model expects {:?}", t.name, t.dims, p.shape));
            }
            if t.dtype != T::DTYPE {
                return Err(format!("tensor {} is {}, the model uses {}", t.name, t.dtype, T::DTYPE));
            }
            plan.push(id);
        }
        if let Some((_, p)) = store
            .iter()
            .find(|(_, p)| self.role.holds(p.group) && !self.tensors.iter().any(|t| t.name == p.name))
        {
            return Err(format!("tensor {} is missing from the checkpoint", p.name));
        }
        for (id, t) in plan.into_iter().zip(&self.tensors) {
            store.set(id, t.values()).expect("shape checked above");
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Saves the `role` tensors of `store`. Returns the file size in bytes.
pub fn save_checkpoint<T: Scalar>(path: &Path, role: Role, store: &ParamStore<T>, config: &str) -> Result<u64> {
    let bytes = Checkpoint::from_store(store, role, config).encode();
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

/// Loads a checkpoint of `role` into `store`. On any error the store is
/// unchanged.
pub fn load_checkpoint<T: Scalar>(path: &Path, role: Role, store: &mut ParamStore<T>) -> Result<Checkpoint> {
    let ck = Checkpoint::read(path)?;
    let fail = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    if ck.role != role {
        return Err(fail(format!("expected a {role} checkpoint, found {}", ck.role)));
    }
    ck.apply(store).map_err(fail)?;
    Ok(ck)
}
