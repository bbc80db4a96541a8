//! Deterministic workload generation.
//!
//! Micro profiles process `ops` items (files or directories). Macro
//! profiles run one flow per logical worker; workers take turns one step at
//! a time, so the op stream is a fixed interleaving determined by the seed.
//!
//! Desk-scale defaults shrink the evaluation workloads: item counts by 100x
//! for the micro profiles, file counts by 1000x for varmail, fileserver,
//! webproxy and webserver, and oltp to 16 files of 1 MiB with 20 workers.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{Sync, TraceOp};
use crate::config::KIB;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    Create,
    Delete,
    Mkdir,
    Rmdir,
    Varmail,
    Fileserver,
    Webproxy,
    Webserver,
    Oltp,
    Kvstore,
}

impl Profile {
    pub const ALL: [Profile; 10] = [
        Profile::Create,
        Profile::Delete,
        Profile::Mkdir,
        Profile::Rmdir,
        Profile::Varmail,
        Profile::Fileserver,
        Profile::Webproxy,
        Profile::Webserver,
        Profile::Oltp,
        Profile::Kvstore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Create => "create",
            Profile::Delete => "delete",
            Profile::Mkdir => "mkdir",
            Profile::Rmdir => "rmdir",
            Profile::Varmail => "varmail",
            Profile::Fileserver => "fileserver",
            Profile::Webproxy => "webproxy",
            Profile::Webserver => "webserver",
            Profile::Oltp => "oltp",
            Profile::Kvstore => "kvstore",
        }
    }

    /// Desk-scale defaults.
    pub fn defaults(self) -> WorkloadSpec {
        let (file_count, file_size, threads, ops, io_size) = match self {
            Profile::Create | Profile::Delete => (10_000, 4 * KIB, 12, 10_000, 4 * KIB),
            Profile::Mkdir | Profile::Rmdir => (10_000, 0, 12, 10_000, 0),
            Profile::Varmail => (1_000, 16 * KIB, 12, 6_000, 16 * KIB),
            Profile::Fileserver => (100, 128 * KIB, 12, 3_000, 16 * KIB),
            Profile::Webproxy => (1_000, 16 * KIB, 12, 6_000, 16 * KIB),
            Profile::Webserver => (1_000, 16 * KIB, 12, 6_000, 16 * KIB),
            Profile::Oltp => (16, 1024 * KIB, 20, 10_000, 2 * KIB),
            Profile::Kvstore => (0, 1000, 4, 20_000, 64 * KIB),
        };
        WorkloadSpec {
            profile: self,
            file_count,
            file_size,
            threads,
            ops,
            seed: 1,
            io_size,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Profile> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown profile {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub profile: Profile,
    /// Files (or directories) prepared before the measured phase.
    pub file_count: u64,
    /// Initial file size; the record size for `kvstore`.
    pub file_size: u64,
    pub threads: u32,
    /// Measured-phase length: items for micro profiles, flow steps for
    /// macro profiles.
    pub ops: u64,
    pub seed: u64,
    /// Append size (varmail, fileserver, webproxy, webserver), log append
    /// size (oltp), or flush size (kvstore).
    pub io_size: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        let needs_files = matches!(
            self.profile,
            Profile::Varmail
                | Profile::Fileserver
                | Profile::Webproxy
                | Profile::Webserver
                | Profile::Oltp
        );
        if needs_files && self.file_count == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} needs file_count > 0",
                self.profile
            )));
        }
        if self.profile == Profile::Kvstore && self.file_size == 0 {
            return Err(Error::InvalidArgument("kvstore needs a record size".into()));
        }
        Ok(())
    }

    /// Rough upper bound of the bytes the workload keeps on the device.
    pub fn footprint(&self) -> u64 {
        let files = self.file_count.saturating_mul(self.file_size.max(4 * KIB));
        let growth = self.ops.saturating_mul(self.io_size.max(self.file_size));
        match self.profile {
            Profile::Mkdir | Profile::Rmdir => {
                self.file_count.max(self.ops).saturating_mul(4 * KIB)
            }
            Profile::Create | Profile::Delete => self
                .file_count
                .max(self.ops)
                .saturating_mul(self.file_size.max(4 * KIB)),
            Profile::Oltp => files.saturating_add(self.ops.saturating_mul(self.io_size) / 10),
            Profile::Varmail | Profile::Webproxy => files.saturating_add(growth / 4),
            Profile::Kvstore => self.ops.saturating_mul(self.file_size).saturating_mul(2),
            _ => files.saturating_add(growth / 4),
        }
    }
}

/// Generated op stream: `setup` runs before measurement starts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    pub setup: Vec<TraceOp>,
    pub ops: Vec<TraceOp>,
}

struct Files {
    live: Vec<(String, u64)>,
    next: u64,
}

impl Files {
    fn new() -> Self {
        Self {
            live: Vec::new(),
            next: 0,
        }
    }

    fn fresh(&mut self, dir: &str) -> String {
        self.next += 1;
        format!("{dir}/f{}", self.next)
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        (!self.live.is_empty()).then(|| rng.gen_range(0..self.live.len()))
    }
}

fn worker_dir(t: u64) -> String {
    format!("/w{t}")
}

/// Builds the op stream for `spec`.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = Workload::default();
    let threads = spec.threads as u64;
    match spec.profile {
        Profile::Create | Profile::Mkdir => {
            for t in 0..threads {
                w.setup.push(TraceOp::Mkdir {
                    path: worker_dir(t),
                });
            }
            for i in 0..spec.ops {
                let path = format!("{}/x{i}", worker_dir(i % threads));
                w.ops.push(if spec.profile == Profile::Create {
                    TraceOp::Create {
                        path,
                        size: spec.file_size,
                    }
                } else {
                    TraceOp::Mkdir { path }
                });
            }
        }
        Profile::Delete | Profile::Rmdir => {
            for t in 0..threads {
                w.setup.push(TraceOp::Mkdir {
                    path: worker_dir(t),
                });
            }
            let n = spec.file_count.max(spec.ops);
            for i in 0..n {
                let path = format!("{}/x{i}", worker_dir(i % threads));
                w.setup.push(if spec.profile == Profile::Delete {
                    TraceOp::Create {
                        path,
                        size: spec.file_size,
                    }
                } else {
                    TraceOp::Mkdir { path }
                });
            }
            for i in 0..spec.ops {
                let path = format!("{}/x{i}", worker_dir(i % threads));
                w.ops.push(if spec.profile == Profile::Delete {
                    TraceOp::Unlink { path }
                } else {
                    TraceOp::Rmdir { path }
                });
            }
        }
        Profile::Varmail | Profile::Fileserver | Profile::Webproxy | Profile::Webserver => {
            macro_flows(spec, &mut rng, &mut w);
        }
        Profile::Oltp => oltp(spec, &mut rng, &mut w),
        Profile::Kvstore => kvstore(spec, &mut rng, &mut w),
    }
    Ok(w)
}

fn append(path: &str, size: u64, len: u64, sync: Sync) -> TraceOp {
    TraceOp::Write {
        path: path.to_string(),
        offset: size,
        len,
        sync,
    }
}

fn read_whole(path: &str, size: u64) -> TraceOp {
    TraceOp::Read {
        path: path.to_string(),
        offset: 0,
        len: size,
    }
}

/// Filebench-style personalities over one shared file set.
///
/// * varmail: delete, create + append + fsync, append + fsync, read, read
/// * fileserver: create + write whole, append, read whole, delete, stat
/// * webproxy: delete, create + append, five whole-file reads, log append
/// * webserver: ten whole-file reads, log append
fn macro_flows(spec: &WorkloadSpec, rng: &mut ChaCha8Rng, w: &mut Workload) {
    let dir = "/data";
    w.setup.push(TraceOp::Mkdir { path: dir.into() });
    let mut files = Files::new();
    for _ in 0..spec.file_count {
        let p = files.fresh(dir);
        w.setup.push(TraceOp::Create {
            path: p.clone(),
            size: spec.file_size,
        });
        files.live.push((p, spec.file_size));
    }
    let log = "/log";
    let mut log_size = 0;
    if matches!(spec.profile, Profile::Webproxy | Profile::Webserver) {
        w.setup.push(TraceOp::Create {
            path: log.into(),
            size: 0,
        });
    }
    let steps: usize = match spec.profile {
        Profile::Varmail => 6,
        Profile::Fileserver => 6,
        Profile::Webproxy => 9,
        _ => 11,
    };
    let threads = spec.threads as usize;
    let mut step = vec![0usize; threads];
    // File each worker created in the current iteration.
    let mut mine: Vec<Option<String>> = vec![None; threads];
    let append_len = |rng: &mut ChaCha8Rng| rng.gen_range(1..=spec.io_size.max(1));
    let mut i = 0u64;
    while i < spec.ops {
        let t = (i % threads as u64) as usize;
        let s = step[t];
        step[t] = (s + 1) % steps;
        i += 1;
        let op = match (spec.profile, s) {
            (Profile::Varmail, 0) | (Profile::Webproxy, 0) | (Profile::Fileserver, 4) => {
                let pick = match (spec.profile, &mine[t]) {
                    (Profile::Fileserver, Some(p)) => files.live.iter().position(|(q, _)| q == p),
                    _ => files.pick(rng),
                };
                let Some(k) = pick else { continue };
                let (p, _) = files.live.swap_remove(k);
                for m in mine.iter_mut() {
                    if m.as_deref() == Some(p.as_str()) {
                        *m = None;
                    }
                }
                TraceOp::Unlink { path: p }
            }
            (Profile::Varmail, 1) | (Profile::Webproxy, 1) | (Profile::Fileserver, 0) => {
                let p = files.fresh(dir);
                let size = if spec.profile == Profile::Fileserver {
                    spec.file_size
                } else {
                    0
                };
                files.live.push((p.clone(), size));
                mine[t] = Some(p.clone());
                TraceOp::Create { path: p, size }
            }
            (Profile::Varmail, 2) | (Profile::Webproxy, 2) | (Profile::Fileserver, 1) => {
                let Some(p) = mine[t].clone() else { continue };
                let k = files
                    .live
                    .iter()
                    .position(|(q, _)| *q == p)
                    .expect("own file live");
                let len = append_len(rng);
                let size = files.live[k].1;
                files.live[k].1 += len;
                let sync = if spec.profile == Profile::Varmail {
                    Sync::Fsync
                } else {
                    Sync::None
                };
                append(&p, size, len, sync)
            }
            (Profile::Varmail, 3) => {
                let Some(k) = files.pick(rng) else { continue };
                let len = append_len(rng);
                let (p, size) = files.live[k].clone();
                files.live[k].1 += len;
                append(&p, size, len, Sync::Fsync)
            }
            (Profile::Fileserver, 2) => {
                let Some(p) = mine[t].clone() else { continue };
                let size = files
                    .live
                    .iter()
                    .find(|(q, _)| *q == p)
                    .expect("own file live")
                    .1;
                read_whole(&p, size)
            }
            (Profile::Fileserver, 3) => {
                let Some(k) = files.pick(rng) else { continue };
                TraceOp::Stat {
                    path: files.live[k].0.clone(),
                }
            }
            (Profile::Webproxy, 8) | (Profile::Webserver, 10) => {
                let len = append_len(rng);
                let op = append(log, log_size, len, Sync::None);
                log_size += len;
                op
            }
            _ => {
                let Some(k) = files.pick(rng) else { continue };
                let (p, size) = files.live[k].clone();
                read_whole(&p, size)
            }
        };
        w.ops.push(op);
    }
}

/// Database-style mix: worker 0 appends to a log, up to ten workers do
/// small random overwrites of the data files, the rest read. Every write
/// is followed by fdatasync.
fn oltp(spec: &WorkloadSpec, rng: &mut ChaCha8Rng, w: &mut Workload) {
    w.setup.push(TraceOp::Mkdir { path: "/db".into() });
    let files: Vec<String> = (0..spec.file_count).map(|i| format!("/db/d{i}")).collect();
    for f in &files {
        w.setup.push(TraceOp::Create {
            path: f.clone(),
            size: spec.file_size,
        });
    }
    let log = "/db/log";
    w.setup.push(TraceOp::Create {
        path: log.into(),
        size: 0,
    });
    let threads = spec.threads as u64;
    let writers = threads.saturating_sub(1).min(10);
    let mut log_size = 0;
    for i in 0..spec.ops {
        let t = i % threads;
        let op = if t == 0 {
            let op = append(log, log_size, spec.io_size, Sync::Fdatasync);
            log_size += spec.io_size;
            op
        } else {
            let f = &files[rng.gen_range(0..files.len())];
            if t <= writers {
                let len = rng.gen_range(64..=256u64);
                TraceOp::Write {
                    path: f.clone(),
                    offset: rng.gen_range(0..spec.file_size - len),
                    len,
                    sync: Sync::Fdatasync,
                }
            } else {
                let len = 2 * KIB;
                TraceOp::Read {
                    path: f.clone(),
                    offset: rng.gen_range(0..spec.file_size - len),
                    len,
                }
            }
        };
        w.ops.push(op);
    }
}

/// Key-value store I/O shape: record appends to a write-ahead log with
/// periodic flushes into table files (`io_size` each), merges of four
/// tables into one, and point reads from tables. An approximation; no
/// key-value semantics are modeled.
fn kvstore(spec: &WorkloadSpec, rng: &mut ChaCha8Rng, w: &mut Workload) {
    w.setup.push(TraceOp::Mkdir { path: "/kv".into() });
    let rec = spec.file_size;
    let per_table = (spec.io_size / rec).max(1);
    let mut wal_no = 0u64;
    let mut wal = format!("/kv/wal{wal_no}");
    w.setup.push(TraceOp::Create {
        path: wal.clone(),
        size: 0,
    });
    let mut wal_size = 0u64;
    let mut tables: Vec<(String, u64)> = Vec::new();
    let mut next_table = 0u64;
    let mut ops = 0u64;
    let push = |w: &mut Workload, ops: &mut u64, op: TraceOp| {
        w.ops.push(op);
        *ops += 1;
    };
    while ops < spec.ops {
        let put = tables.is_empty() || rng.gen_bool(0.5);
        if !put {
            let (p, size) = tables[rng.gen_range(0..tables.len())].clone();
            let off = rng.gen_range(0..size / rec) * rec;
            push(
                w,
                &mut ops,
                TraceOp::Read {
                    path: p,
                    offset: off,
                    len: rec,
                },
            );
            continue;
        }
        push(w, &mut ops, append(&wal, wal_size, rec, Sync::None));
        wal_size += rec;
        if wal_size / rec < per_table {
            continue;
        }
        let t = format!("/kv/t{next_table}");
        next_table += 1;
        push(
            w,
            &mut ops,
            TraceOp::Create {
                path: t.clone(),
                size: 0,
            },
        );
        push(w, &mut ops, append(&t, 0, wal_size, Sync::Fsync));
        tables.push((t, wal_size));
        push(w, &mut ops, TraceOp::Unlink { path: wal.clone() });
        wal_no += 1;
        wal = format!("/kv/wal{wal_no}");
        push(
            w,
            &mut ops,
            TraceOp::Create {
                path: wal.clone(),
                size: 0,
            },
        );
        wal_size = 0;
        if tables.len() >= 4 {
            let merged: Vec<(String, u64)> = tables.drain(..4).collect();
            let total: u64 = merged.iter().map(|m| m.1).sum();
            for (p, size) in &merged {
                push(w, &mut ops, read_whole(p, *size));
            }
            let t = format!("/kv/t{next_table}");
            next_table += 1;
            push(
                w,
                &mut ops,
                TraceOp::Create {
                    path: t.clone(),
                    size: 0,
                },
            );
            push(w, &mut ops, append(&t, 0, total, Sync::Fsync));
            for (p, _) in merged {
                push(w, &mut ops, TraceOp::Unlink { path: p });
            }
            tables.push((t, total));
        }
    }
    w.ops.truncate(spec.ops as usize);
}
