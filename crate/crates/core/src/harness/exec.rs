//! Applies trace ops to a mounted file system, optionally mirroring them
//! into the reference model.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{Sync, TraceOp};
use crate::error::Result;
use crate::fs::{FileSystem, ModelFs};

/// Deterministic payload for the `n`-th write of a run.
pub fn payload(seed: u64, n: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

pub struct Executor<'a> {
    fs: &'a FileSystem,
    seed: u64,
    writes: u64,
    inos: HashMap<String, u32>,
    pub app_write_bytes: u64,
    pub app_read_bytes: u64,
    pub model: Option<ModelFs>,
}

impl<'a> Executor<'a> {
    pub fn new(fs: &'a FileSystem, seed: u64) -> Self {
        Self {
            fs,
            seed,
            writes: 0,
            inos: HashMap::new(),
            app_write_bytes: 0,
            app_read_bytes: 0,
            model: None,
        }
    }

    pub fn with_model(mut self) -> Self {
        self.model = Some(ModelFs::new());
        self
    }

    pub fn fs(&self) -> &FileSystem {
        self.fs
    }

    fn ino(&mut self, path: &str) -> Result<u32> {
        if let Some(&i) = self.inos.get(path) {
            return Ok(i);
        }
        let i = self.fs.lookup(path)?;
        self.inos.insert(path.to_string(), i);
        Ok(i)
    }

    fn next_payload(&mut self, len: u64) -> Vec<u8> {
        self.writes += 1;
        payload(self.seed, self.writes, len as usize)
    }

    fn write(&mut self, path: &str, offset: u64, data: &[u8], direct: bool) -> Result<()> {
        let ino = self.ino(path)?;
        if direct {
            self.fs.direct_write(ino, offset, data)?;
        } else {
            self.fs.write(ino, offset, data)?;
        }
        self.app_write_bytes += data.len() as u64;
        if let Some(m) = &mut self.model {
            m.write(path, offset, data)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, op: &TraceOp) -> Result<()> {
        match op {
            TraceOp::Create { path, size } => {
                let ino = self.fs.create(path)?;
                self.inos.insert(path.clone(), ino);
                if let Some(m) = &mut self.model {
                    m.create(path)?;
                }
                if *size > 0 {
                    let data = self.next_payload(*size);
                    self.write(path, 0, &data, false)?;
                }
            }
            TraceOp::Mkdir { path } => {
                let ino = self.fs.mkdir(path)?;
                self.inos.insert(path.clone(), ino);
                if let Some(m) = &mut self.model {
                    m.mkdir(path)?;
                }
            }
            TraceOp::Unlink { path } => {
                self.fs.unlink(path)?;
                self.inos.remove(path);
                if let Some(m) = &mut self.model {
                    m.unlink(path)?;
                }
            }
            TraceOp::Rmdir { path } => {
                self.fs.rmdir(path)?;
                self.inos.remove(path);
                if let Some(m) = &mut self.model {
                    m.rmdir(path)?;
                }
            }
            TraceOp::Rename { from, to } => {
                self.fs.rename(from, to)?;
                self.inos.clear();
                if let Some(m) = &mut self.model {
                    m.rename(from, to)?;
                }
            }
            TraceOp::Write {
                path,
                offset,
                len,
                sync,
            } => {
                let data = self.next_payload(*len);
                self.write(path, *offset, &data, false)?;
                let ino = self.ino(path)?;
                match sync {
                    Sync::None => {}
                    Sync::Fsync => self.fs.fsync(ino)?,
                    Sync::Fdatasync => self.fs.fdatasync(ino)?,
                }
            }
            TraceOp::DirectWrite { path, offset, len } => {
                let data = self.next_payload(*len);
                self.write(path, *offset, &data, true)?;
            }
            TraceOp::Read { path, offset, len } | TraceOp::DirectRead { path, offset, len } => {
                let ino = self.ino(path)?;
                let got = if matches!(op, TraceOp::Read { .. }) {
                    self.fs.read(ino, *offset, *len as usize)?
                } else {
                    self.fs.direct_read(ino, *offset, *len as usize)?.0
                };
                self.app_read_bytes += got.len() as u64;
                if let Some(m) = &mut self.model {
                    let want = m.read(path, *offset, *len as usize)?;
                    if want != got {
                        return Err(crate::Error::State(format!(
                            "{op}: read {} bytes differing from the model",
                            got.len()
                        )));
                    }
                }
            }
            TraceOp::Fsync { path } => {
                let ino = self.ino(path)?;
                self.fs.fsync(ino)?;
            }
            TraceOp::Fdatasync { path } => {
                let ino = self.ino(path)?;
                self.fs.fdatasync(ino)?;
            }
            TraceOp::Stat { path } => {
                self.fs.stat(path)?;
            }
        }
        Ok(())
    }
}
