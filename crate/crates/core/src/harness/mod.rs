//! Workload generation, trace replay, crash injection and reporting.
//!
//! Logical workers are interleaved round-robin on one thread, so a run is a
//! pure function of its configuration and seed.

pub mod config;
pub mod crash;
pub mod exec;
pub mod report;
pub mod sweep;
pub mod trace;
pub mod workload;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use config::RunConfig;
pub use crash::{crash_run, crash_run_image, crash_run_ops, crash_sweep, CrashPoint, CrashVerdict};
pub use exec::Executor;
pub use report::RunReport;
pub use sweep::{sweep, SweepParam};
pub use trace::{Sync, TraceOp};
pub use workload::{generate, Profile, Workload, WorkloadSpec};

use crate::device::Mssd;
use crate::error::{Error, Result};
use crate::fs::{FileSystem, MkfsParams};

/// Formats a fresh device per `cfg` and mounts it.
pub fn format_and_mount(cfg: &RunConfig) -> Result<(Arc<Mssd>, FileSystem)> {
    cfg.validate()?;
    let dev = Arc::new(Mssd::new(cfg.device.clone())?);
    FileSystem::mkfs(
        &dev,
        cfg.mount.mode,
        cfg.mount.journal,
        MkfsParams::default(),
    )?;
    let fs = FileSystem::mount(dev.clone(), cfg.mount)?;
    Ok((dev, fs))
}

fn at_op(i: usize, op: &TraceOp, e: Error) -> Error {
    Error::State(format!("op {i} ({op}): {e}"))
}

/// Runs `setup`, syncs, then measures `ops` followed by a final sync.
pub fn run_ops(
    label: &str,
    cfg: &RunConfig,
    setup: &[TraceOp],
    ops: &[TraceOp],
) -> Result<RunReport> {
    let (dev, fs) = format_and_mount(cfg)?;
    let mut ex = Executor::new(&fs, cfg.workload.seed);
    for (i, op) in setup.iter().enumerate() {
        ex.apply(op)
            .map_err(|e| Error::State(format!("setup op {i} ({op}): {e}")))?;
    }
    fs.sync()?;
    let t0 = dev.traffic_snapshot();
    let c0 = dev.with_image(|d| d.cleaner_stats());
    let f0 = fs.stats();
    let clock0 = dev.now_ns();
    let (w0, r0) = (ex.app_write_bytes, ex.app_read_bytes);
    for (i, op) in ops.iter().enumerate() {
        ex.apply(op).map_err(|e| at_op(i, op, e))?;
    }
    fs.sync()?;
    Ok(RunReport {
        label: label.to_string(),
        mode: Some(cfg.mount.mode),
        ops: ops.len() as u64,
        app_write_bytes: ex.app_write_bytes - w0,
        app_read_bytes: ex.app_read_bytes - r0,
        elapsed_ns: dev.now_ns() - clock0,
        traffic: dev.traffic_snapshot().since(&t0),
        cleaner: report::cleaner_delta(&dev.with_image(|d| d.cleaner_stats()), &c0),
        fs: report::fs_delta(&fs.stats(), &f0),
        recovery: None,
    })
}

/// Generates and runs the configured workload.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let w = generate(&cfg.workload)?;
    run_ops(cfg.workload.profile.name(), cfg, &w.setup, &w.ops)
}

/// Files (and parent directories) a trace reads or writes without
/// creating them itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImplicitCreates {
    /// Runs unmeasured before the trace.
    pub setup: Vec<TraceOp>,
    /// `(i, ops)`: measured, just before trace op `i`. Used when an
    /// ancestor directory only comes into being during the trace.
    pub inline: Vec<(usize, Vec<TraceOp>)>,
}

pub fn implicit_creates(ops: &[TraceOp]) -> ImplicitCreates {
    let mut known: BTreeSet<String> = BTreeSet::new();
    known.insert("/".into());
    let mut made: BTreeSet<String> = BTreeSet::new();
    let mut out = ImplicitCreates::default();
    for (i, op) in ops.iter().enumerate() {
        if op.needs_file() && !known.contains(op.path()) {
            let path = op.path();
            let comps: Vec<&str> = path.split('/').filter(|c| !c.is_empty()).collect();
            let mut prefixes = Vec::new();
            let mut prefix = String::new();
            for c in &comps[..comps.len().saturating_sub(1)] {
                prefix.push('/');
                prefix.push_str(c);
                prefixes.push(prefix.clone());
            }
            let late = prefixes.iter().any(|p| made.contains(p));
            let mut new_ops = Vec::new();
            for p in prefixes {
                if known.insert(p.clone()) {
                    new_ops.push(TraceOp::Mkdir { path: p });
                }
            }
            known.insert(path.to_string());
            new_ops.push(TraceOp::Create {
                path: path.to_string(),
                size: 0,
            });
            if late {
                out.inline.push((i, new_ops));
            } else {
                out.setup.extend(new_ops);
            }
        }
        let target = match op {
            TraceOp::Create { path, .. } | TraceOp::Mkdir { path } => Some(path),
            TraceOp::Rename { to, .. } => Some(to),
            _ => None,
        };
        if let Some(t) = target {
            known.insert(t.clone());
            made.insert(t.clone());
        }
    }
    out
}

/// Replays a text trace. Execution errors name the trace line.
pub fn replay(text: &str, label: &str, cfg: &RunConfig) -> Result<RunReport> {
    let numbered = trace::parse_numbered(text)?;
    let ops: Vec<TraceOp> = numbered.iter().map(|(_, op)| op.clone()).collect();
    let implicit = implicit_creates(&ops);
    let mut inline = implicit.inline.into_iter().peekable();
    let mut run: Vec<TraceOp> = Vec::with_capacity(ops.len());
    let mut lines = Vec::with_capacity(ops.len());
    for (i, (line, op)) in numbered.into_iter().enumerate() {
        if let Some((_, extra)) = inline.next_if(|(j, _)| *j == i) {
            lines.extend(std::iter::repeat_n(line, extra.len()));
            run.extend(extra);
        }
        lines.push(line);
        run.push(op);
    }
    let mut report = run_ops(label, cfg, &implicit.setup, &run).map_err(|e| match e {
        Error::State(m) if m.starts_with("op ") => {
            let idx: usize = m[3..]
                .split(' ')
                .next()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let line = lines.get(idx).copied().unwrap_or(0);
            Error::Parse { line, message: m }
        }
        e => e,
    })?;
    report.ops = ops.len() as u64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fs::Mode;

    #[test]
    fn implicit_creates_make_missing_files_once() {
        let ops =
            trace::parse("write /a/b/f 0 10\nread /a/b/f 0 10\ncreate /g\nwrite /g 0 1\n").unwrap();
        let c = implicit_creates(&ops);
        assert_eq!(
            trace::format(&c.setup),
            "mkdir /a\nmkdir /a/b\ncreate /a/b/f 0 0\n"
        );
        assert!(c.inline.is_empty());
    }

    #[test]
    fn files_under_trace_made_directories_are_created_in_place() {
        let ops = trace::parse("mkdir /d\nwrite /d/e/f 0 10\nwrite /x 0 1\n").unwrap();
        let c = implicit_creates(&ops);
        assert_eq!(trace::format(&c.setup), "create /x 0 0\n");
        assert_eq!(c.inline.len(), 1);
        assert_eq!(c.inline[0].0, 1);
        assert_eq!(
            trace::format(&c.inline[0].1),
            "mkdir /d/e\ncreate /d/e/f 0 0\n"
        );
        let r = replay(
            "mkdir /d\nwrite /d/a 0 5000 fsync\nread /d/a 0 100\n",
            "t",
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!((r.ops, r.app_write_bytes), (3, 5000));
        let e = replay(
            "mkdir /d\nwrite /d/a 0 1\nrmdir /d\n",
            "t",
            &RunConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn replay_counts_one_commit_for_append_and_fsync() {
        let mut cfg = RunConfig::default();
        cfg.mount.mode = Mode::Full;
        let r = replay("write /f 0 100\nfsync /f\n", "t", &cfg).unwrap();
        assert_eq!(r.fs.commits, 1);
        assert_eq!(r.traffic.commits, 1);
        let e = replay("write /f 0 100\n\nunlink /nope\n", "t", &cfg).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }
}
