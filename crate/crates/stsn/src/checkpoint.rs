//! Binary container for named parameter arrays: training checkpoints and
//! standalone weights files share one format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  b"STSNCKPT"
//! version      u32      currently 1
//! elem width   u8       4 = f32 arrays, 8 = f64 arrays
//! digest       32 bytes SHA-256 of the experiment config (zeros if unbound)
//! iteration    u64
//! rng count    u32      then per stream: name (u32 len + UTF-8),
//!                       32-byte seed, 16-byte word position
//! array count  u32      then per array, sorted by name: name (u32 len +
//!                       UTF-8), u32 ndim, ndim × u64 dims, elements
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::mem::size_of;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Param;
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 8] = b"STSNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} is not a valid checkpoint: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("array {name:?} does not fit this model: {reason}")]
    ArrayMismatch { name: String, reason: String },
}

/// Captured state of one deterministic random stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha12Rng) -> Self {
        Self { seed: rng.get_seed(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything one checkpoint holds. Weights-only files use iteration 0, no
/// RNG streams, and an all-zero digest.
#[derive(Debug)]
pub struct Container<T: Element> {
    pub config_digest: [u8; 32],
    pub iteration: u64,
    pub rng_states: Vec<(String, RngState)>,
    pub arrays: Vec<(String, Tensor<T>)>,
}

impl<T: Element> Container<T> {
    /// Wraps bare arrays as an unbound weights file.
    pub fn weights_only(arrays: Vec<(String, Tensor<T>)>) -> Self {
        Self { config_digest: [0; 32], iteration: 0, rng_states: Vec::new(), arrays }
    }

    /// True when this container was saved under a different config than the
    /// given digest (all-zero stored digests never mismatch).
    pub fn digest_mismatch(&self, expected: &[u8; 32]) -> bool {
        self.config_digest != [0; 32] && self.config_digest != *expected
    }
}

/// SHA-256 of the canonical config serialization.
pub fn config_digest(config_toml: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(config_toml.as_bytes());
    h.finalize().into()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt { path: path.to_path_buf(), reason: reason.into() }
}

/// Serializes the container, sorting arrays by name. The write lands through
/// a temporary sibling + rename, so a crash never leaves a half checkpoint.
pub fn save<T: Element>(c: &Container<T>, path: &Path) -> Result<(), CheckpointError> {
    let mut sorted: Vec<&(String, Tensor<T>)> = c.arrays.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for w in sorted.windows(2) {
        assert_ne!(w[0].0, w[1].0, "duplicate array name {:?}", w[0].0);
    }

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        let r = (|| -> io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_u32::<LittleEndian>(VERSION)?;
            w.write_u8(size_of::<T>() as u8)?;
            w.write_all(&c.config_digest)?;
            w.write_u64::<LittleEndian>(c.iteration)?;

            w.write_u32::<LittleEndian>(c.rng_states.len() as u32)?;
            for (name, state) in &c.rng_states {
                write_name(&mut w, name)?;
                w.write_all(&state.seed)?;
                w.write_u128::<LittleEndian>(state.word_pos)?;
            }

            w.write_u32::<LittleEndian>(sorted.len() as u32)?;
            for (name, t) in &sorted {
                write_name(&mut w, name)?;
                w.write_u32::<LittleEndian>(t.shape().len() as u32)?;
                for &d in t.shape() {
                    w.write_u64::<LittleEndian>(d as u64)?;
                }
                match size_of::<T>() {
                    4 => {
                        for v in t.data() {
                            w.write_f32::<LittleEndian>(v.to_f64() as f32)?;
                        }
                    }
                    8 => {
                        for v in t.data() {
                            w.write_f64::<LittleEndian>(v.to_f64())?;
                        }
                    }
                    other => panic!("unsupported element width {other}"),
                }
            }
            w.flush()
        })();
        r.map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| CheckpointError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn write_name<W: Write>(w: &mut W, name: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(name.len() as u32)?;
    w.write_all(name.as_bytes())
}

fn read_name<R: Read>(r: &mut R, path: &Path) -> Result<String, CheckpointError> {
    let len = r.read_u32::<LittleEndian>().map_err(io_err(path))? as usize;
    if len > 1 << 16 {
        return Err(corrupt(path, format!("implausible name length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err(path))?;
    String::from_utf8(buf).map_err(|_| corrupt(path, "name is not UTF-8"))
}

/// Reads a container back, verifying magic, version and element width.
pub fn load<T: Element>(path: &Path) -> Result<Container<T>, CheckpointError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(f);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt(path, "too short for the magic header"))?;
    if &magic != MAGIC {
        return Err(corrupt(path, "bad magic (not a checkpoint/weights file)"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err(path))?;
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let width = r.read_u8().map_err(io_err(path))?;
    if width as usize != size_of::<T>() {
        return Err(corrupt(
            path,
            format!("element width {width} does not match this build ({})", size_of::<T>()),
        ));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(io_err(path))?;
    let iteration = r.read_u64::<LittleEndian>().map_err(io_err(path))?;

    let n_rng = r.read_u32::<LittleEndian>().map_err(io_err(path))?;
    let mut rng_states = Vec::with_capacity(n_rng as usize);
    for _ in 0..n_rng {
        let name = read_name(&mut r, path)?;
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed).map_err(io_err(path))?;
        let word_pos = r.read_u128::<LittleEndian>().map_err(io_err(path))?;
        rng_states.push((name, RngState { seed, word_pos }));
    }

    let n_arrays = r.read_u32::<LittleEndian>().map_err(io_err(path))?;
    let mut arrays = Vec::with_capacity(n_arrays as usize);
    for _ in 0..n_arrays {
        let name = read_name(&mut r, path)?;
        let ndim = r.read_u32::<LittleEndian>().map_err(io_err(path))? as usize;
        if ndim > 8 {
            return Err(corrupt(path, format!("array {name:?} claims {ndim} dimensions")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u64::<LittleEndian>().map_err(io_err(path))? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 30 {
            return Err(corrupt(path, format!("array {name:?} claims {n} elements")));
        }
        let mut data = Vec::with_capacity(n);
        match width {
            4 => {
                for _ in 0..n {
                    let v = r
                        .read_f32::<LittleEndian>()
                        .map_err(|_| corrupt(path, format!("array {name:?} is truncated")))?;
                    data.push(T::from_f64(v as f64));
                }
            }
            8 => {
                for _ in 0..n {
                    let v = r
                        .read_f64::<LittleEndian>()
                        .map_err(|_| corrupt(path, format!("array {name:?} is truncated")))?;
                    data.push(T::from_f64(v));
                }
            }
            _ => unreachable!("width validated above"),
        }
        arrays.push((name, Tensor::from_vec(&shape, data)));
    }

    let mut trailer = [0u8; 1];
    if r.read(&mut trailer).map_err(io_err(path))? != 0 {
        return Err(corrupt(path, "trailing bytes after the last array"));
    }

    Ok(Container { config_digest: digest, iteration, rng_states, arrays })
}

/// Copies container arrays into live parameters, by name. The first problem
/// in lexicographic name order is reported: a missing array, an extra array,
/// or a shape mismatch.
pub fn apply_arrays<T: Element>(
    arrays: &[(String, Tensor<T>)],
    params: &[Param<T>],
) -> Result<(), CheckpointError> {
    let mut by_name: BTreeMap<String, &Tensor<T>> =
        arrays.iter().map(|(n, t)| (n.clone(), t)).collect();
    let mut targets: Vec<&Param<T>> = params.iter().collect();
    targets.sort_by_key(|p| p.name());

    for p in targets {
        let name = p.name();
        let Some(t) = by_name.remove(&name) else {
            return Err(CheckpointError::ArrayMismatch {
                name,
                reason: "missing from the container".into(),
            });
        };
        if t.shape() != p.shape() {
            return Err(CheckpointError::ArrayMismatch {
                name,
                reason: format!("container shape {:?}, model expects {:?}", t.shape(), p.shape()),
            });
        }
        p.set_value(t.clone());
    }
    if let Some((name, _)) = by_name.into_iter().next() {
        return Err(CheckpointError::ArrayMismatch {
            name,
            reason: "not part of this model".into(),
        });
    }
    Ok(())
}

/// Snapshots parameters as (name, value) pairs for saving.
pub fn snapshot_params<T: Element>(params: &[Param<T>]) -> Vec<(String, Tensor<T>)> {
    params.iter().map(|p| (p.name(), p.value())).collect()
}
