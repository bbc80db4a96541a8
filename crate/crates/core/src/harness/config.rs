//! Run configuration and its `key = value` file format.
//!
//! Device keys are the [`DeviceConfig`] field names. Other keys: `preset`
//! (`desk` or `default`, applied before any device key), `mode`, `journal`,
//! `cache_bytes`, `conflict_granularity`, `conflict_policy`,
//! `lock_timeout_ms`, `profile` (applied before the workload keys),
//! `file_count`, `file_size`, `threads`, `ops`, `seed`, `io_size`. Unknown
//! keys are errors. Sizes accept `K`/`M`/`G` suffixes.

use std::time::Duration;

use super::workload::{Profile, WorkloadSpec};
use crate::config::{parse_size, DeviceConfig};
use crate::error::{Error, Result};
use crate::fs::{JournalMode, Mode, MountOptions};
use crate::txn::{ConflictGranularity, ConflictPolicy};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub mount: MountOptions,
    pub workload: WorkloadSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            device: DeviceConfig::desk(),
            mount: MountOptions::default(),
            workload: Profile::Create.defaults(),
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidArgument(format!("{key}: bad value {value:?}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = RunConfig::default();
        let first = |name: &str| {
            pairs
                .iter()
                .find(|(_, k, _)| k == name)
                .map(|(_, _, v)| v.clone())
        };
        if let Some(p) = first("preset") {
            cfg.device = match p.as_str() {
                "desk" => DeviceConfig::desk(),
                "default" => DeviceConfig::default(),
                _ => return Err(bad("preset", &p)),
            };
        }
        if let Some(p) = first("profile") {
            cfg.workload = p.parse::<Profile>()?.defaults();
        }
        for (line, k, v) in &pairs {
            cfg.set(k, v).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::Parse {
                    line: *line,
                    message: m,
                },
                e => e,
            })?;
        }
        Ok(cfg)
    }

    /// Sets one key. `preset` and `profile` are only honored by `parse`,
    /// which applies them first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = || parse_size(value).ok_or_else(|| bad(key, value));
        let w = &mut self.workload;
        match key {
            "preset" | "profile" => {}
            "mode" => self.mount.mode = value.parse::<Mode>()?,
            "journal" => self.mount.journal = value.parse::<JournalMode>()?,
            "cache_bytes" => self.mount.cache_bytes = int()?,
            "conflict_granularity" => {
                self.mount.tx.granularity = match value {
                    "cacheline" => ConflictGranularity::Cacheline,
                    "page" => ConflictGranularity::Page,
                    _ => return Err(bad(key, value)),
                }
            }
            "conflict_policy" => {
                self.mount.tx.policy = match value {
                    "block" => ConflictPolicy::Block,
                    "fail" => ConflictPolicy::Fail,
                    _ => return Err(bad(key, value)),
                }
            }
            "lock_timeout_ms" => self.mount.tx.lock_timeout = Duration::from_millis(int()?),
            "file_count" => w.file_count = int()?,
            "file_size" => w.file_size = int()?,
            "threads" => w.threads = u32::try_from(int()?).map_err(|_| bad(key, value))?,
            "ops" => w.ops = int()?,
            "seed" => w.seed = value.parse().map_err(|_| bad(key, value))?,
            "io_size" => w.io_size = int()?,
            _ => {
                if !self.device.set(key, value)? {
                    return Err(Error::InvalidArgument(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Rejects conflicting settings before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.workload.validate()?;
        if self.device.page_size != 4096 {
            return Err(Error::InvalidArgument(
                "the file system needs 4 KiB pages".into(),
            ));
        }
        if self.mount.cache_bytes < self.device.page_size * 4 {
            return Err(Error::InvalidArgument(
                "cache_bytes must hold at least four pages".into(),
            ));
        }
        let room = self.device.capacity_bytes / 4 * 3;
        if self.workload.footprint() > room {
            return Err(Error::InvalidArgument(format!(
                "{} workload needs about {} bytes; the device has {}",
                self.workload.profile,
                self.workload.footprint(),
                self.device.capacity_bytes
            )));
        }
        Ok(())
    }
}
