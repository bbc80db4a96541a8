//! Crash injection with a durable-state oracle.
//!
//! The device snapshots its persistent image right after mutating command
//! `K` (counted from just after mount). The oracle follows the commit
//! events the file system reports: a namespace commit makes the namespace
//! as of that op durable, a file commit makes the file's contents as of
//! that op durable. After the crash the image is recovered, checked with
//! fsck, mounted and compared path by path against the oracle.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::exec::Executor;
use super::format_and_mount;
use super::trace::TraceOp;
use super::workload::{generate, Workload};
use crate::device::Mssd;
use crate::error::{Error, Result};
use crate::fs::model::Node;
use crate::fs::{fsck, CommitEvent, FileKind, FileSystem, FsRecovery};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// After the `K`-th mutating command following mount.
    At(u64),
    /// Uniform over the commands of the run, drawn with this seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashVerdict {
    /// Commands after mount at which the image was taken.
    pub crash_cmd: u64,
    /// Commands the whole run issues, when a dry run measured it.
    pub total_cmds: Option<u64>,
    pub passed: bool,
    pub problems: Vec<String>,
    pub recovery: Option<FsRecovery>,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    ino: u32,
    kind: FileKind,
    inc: u64,
}

#[derive(Debug, Clone)]
enum NsChange {
    Add(String, Entry),
    Remove(String),
    Rename(String, String),
}

fn child_prefix(p: &str) -> String {
    if p == "/" {
        "/".into()
    } else {
        format!("{p}/")
    }
}

fn apply_change(map: &mut BTreeMap<String, Entry>, c: &NsChange) {
    match c {
        NsChange::Add(p, e) => {
            map.insert(p.clone(), *e);
        }
        NsChange::Remove(p) => {
            map.remove(p);
        }
        NsChange::Rename(from, to) => {
            if from == to {
                return;
            }
            let Some(e) = map.remove(from) else { return };
            map.remove(to);
            if e.kind == FileKind::Dir {
                let pre = child_prefix(from);
                let moved: Vec<String> = map
                    .keys()
                    .filter(|k| k.starts_with(&pre))
                    .cloned()
                    .collect();
                for k in moved {
                    let v = map.remove(&k).unwrap();
                    map.insert(format!("{to}/{}", &k[pre.len()..]), v);
                }
            }
            map.insert(to.clone(), e);
        }
    }
}

/// Live namespace plus the log needed to rebuild any durable prefix.
#[derive(Default)]
struct Tracker {
    live: BTreeMap<String, Entry>,
    changes: Vec<NsChange>,
    next_inc: u64,
    /// Number of changes covered by the latest durable namespace commit.
    durable_changes: usize,
    /// Durable contents per file incarnation.
    contents: HashMap<u64, Vec<u8>>,
}

impl Tracker {
    fn change(&mut self, c: NsChange) {
        apply_change(&mut self.live, &c);
        self.changes.push(c);
    }

    fn record_op(&mut self, fs: &FileSystem, op: &TraceOp) -> Result<()> {
        match op {
            TraceOp::Create { path, .. } | TraceOp::Mkdir { path } => {
                let kind = if matches!(op, TraceOp::Mkdir { .. }) {
                    FileKind::Dir
                } else {
                    FileKind::File
                };
                self.next_inc += 1;
                let e = Entry {
                    ino: fs.lookup(path)?,
                    kind,
                    inc: self.next_inc,
                };
                self.change(NsChange::Add(path.clone(), e));
            }
            TraceOp::Unlink { path } | TraceOp::Rmdir { path } => {
                self.change(NsChange::Remove(path.clone()))
            }
            TraceOp::Rename { from, to } => self.change(NsChange::Rename(from.clone(), to.clone())),
            _ => {}
        }
        Ok(())
    }

    fn by_ino(&self, ino: u32) -> Option<(&String, &Entry)> {
        self.live
            .iter()
            .find(|(_, e)| e.ino == ino && e.kind == FileKind::File)
    }

    fn expected(&self) -> BTreeMap<String, Node> {
        let mut map = BTreeMap::new();
        for c in &self.changes[..self.durable_changes] {
            apply_change(&mut map, c);
        }
        map.into_iter()
            .map(|(p, e)| {
                let node = match e.kind {
                    FileKind::Dir => Node::Dir,
                    FileKind::File => {
                        Node::File(self.contents.get(&e.inc).cloned().unwrap_or_default())
                    }
                };
                (p, node)
            })
            .collect()
    }
}

fn file_content(ex: &Executor<'_>, path: &str) -> Vec<u8> {
    match ex.model.as_ref().and_then(|m| m.get(path)) {
        Some(Node::File(d)) => d.clone(),
        _ => Vec::new(),
    }
}

/// Folds durable commit events into the oracle. `pre` is the file's
/// content before a direct write: only its last commit carries the new data.
fn absorb(tr: &mut Tracker, ex: &Executor<'_>, events: &[CommitEvent], pre: Option<&[u8]>) {
    for (i, ev) in events.iter().enumerate() {
        if ev.namespace {
            tr.durable_changes = tr.changes.len();
        }
        for &ino in &ev.files {
            let Some((path, e)) = tr.by_ino(ino) else {
                continue;
            };
            let later = events[i + 1..].iter().any(|x| x.files.contains(&ino));
            let data = match pre {
                Some(p) if later => p.to_vec(),
                _ => file_content(ex, path),
            };
            let inc = e.inc;
            tr.contents.insert(inc, data);
        }
    }
}

/// Mutating commands the workload issues after mount.
pub fn count_commands(cfg: &RunConfig, w: &Workload) -> Result<u64> {
    let (dev, fs) = format_and_mount(cfg)?;
    let start = dev.command_count();
    let mut ex = Executor::new(&fs, cfg.workload.seed);
    for op in w.setup.iter().chain(&w.ops) {
        ex.apply(op)?;
    }
    fs.sync()?;
    Ok(dev.command_count() - start)
}

fn walk(fs: &FileSystem) -> Result<BTreeMap<String, Node>> {
    let mut out = BTreeMap::new();
    let mut stack = vec!["/".to_string()];
    while let Some(dir) = stack.pop() {
        for (name, ino, kind) in fs.readdir(&dir)? {
            let path = format!("{}{name}", child_prefix(&dir));
            match kind {
                FileKind::Dir => {
                    stack.push(path.clone());
                    out.insert(path, Node::Dir);
                }
                FileKind::File => {
                    let size = fs.stat(&path)?.size as usize;
                    out.insert(path, Node::File(fs.read(ino, 0, size)?));
                }
            }
        }
    }
    Ok(out)
}

fn compare(want: &BTreeMap<String, Node>, got: &BTreeMap<String, Node>) -> Vec<String> {
    let mut problems = Vec::new();
    for (p, w) in want {
        match (w, got.get(p)) {
            (_, None) => problems.push(format!("{p}: missing after recovery")),
            (Node::Dir, Some(Node::File(_))) => {
                problems.push(format!("{p}: expected a directory, found a file"))
            }
            (Node::File(_), Some(Node::Dir)) => {
                problems.push(format!("{p}: expected a file, found a directory"))
            }
            (Node::File(a), Some(Node::File(b))) if a != b => {
                let first = a.iter().zip(b).position(|(x, y)| x != y);
                problems.push(format!(
                    "{p}: contents differ (expected {} bytes, found {}, first difference at {:?})",
                    a.len(),
                    b.len(),
                    first
                ));
            }
            _ => {}
        }
    }
    for p in got.keys().filter(|p| !want.contains_key(*p)) {
        problems.push(format!(
            "{p}: present after recovery but never durably created"
        ));
    }
    problems
}

/// Runs the workload, crashes after command `K`, recovers and checks.
pub fn crash_run(cfg: &RunConfig, point: CrashPoint) -> Result<CrashVerdict> {
    let w = generate(&cfg.workload)?;
    crash_run_ops(cfg, &w, point)
}

pub fn crash_run_ops(cfg: &RunConfig, w: &Workload, point: CrashPoint) -> Result<CrashVerdict> {
    Ok(crash_run_image(cfg, w, point)?.0)
}

/// Like [`crash_run_ops`], also returning the crash image as it was before
/// recovery.
pub fn crash_run_image(
    cfg: &RunConfig,
    w: &Workload,
    point: CrashPoint,
) -> Result<(CrashVerdict, Vec<u8>)> {
    let (k, total) = match point {
        CrashPoint::At(k) => (k, None),
        CrashPoint::Random(seed) => {
            let total = count_commands(cfg, w)?;
            (
                ChaCha8Rng::seed_from_u64(seed).gen_range(1..=total.max(1)),
                Some(total),
            )
        }
    };
    let (dev, fs) = format_and_mount(cfg)?;
    let base = dev.command_count();
    fs.take_events();
    dev.arm_crash(k);
    let crash_abs = base + k;
    let mut ex = Executor::new(&fs, cfg.workload.seed).with_model();
    let mut tr = Tracker::default();
    for op in w.setup.iter().chain(&w.ops) {
        if dev.crashed() {
            break;
        }
        let pre = match op {
            TraceOp::DirectWrite { path, .. } => Some(file_content(&ex, path)),
            _ => None,
        };
        ex.apply(op)
            .map_err(|e| Error::State(format!("{op}: {e}")))?;
        tr.record_op(&fs, op)?;
        let events: Vec<_> = fs
            .take_events()
            .into_iter()
            .filter(|e| e.cmd <= crash_abs)
            .collect();
        absorb(&mut tr, &ex, &events, pre.as_deref());
    }
    if !dev.crashed() {
        fs.sync()?;
        let events: Vec<_> = fs
            .take_events()
            .into_iter()
            .filter(|e| e.cmd <= crash_abs)
            .collect();
        absorb(&mut tr, &ex, &events, None);
    }
    let crash_cmd = if dev.crashed() {
        k
    } else {
        let n = dev.command_count() - base;
        dev.arm_crash(0);
        n
    };
    let image = dev
        .take_crash_image()
        .ok_or_else(|| Error::State("crash image missing".into()))?;
    let want = tr.expected();
    drop(ex);
    drop(fs);

    let verdict = check(cfg, &image, &want, crash_cmd, total)?;
    Ok((verdict, image))
}

fn check(
    cfg: &RunConfig,
    image: &[u8],
    want: &BTreeMap<String, Node>,
    crash_cmd: u64,
    total: Option<u64>,
) -> Result<CrashVerdict> {
    let dev = Arc::new(Mssd::load(image)?);
    let mut verdict = CrashVerdict {
        crash_cmd,
        total_cmds: total,
        passed: false,
        problems: Vec::new(),
        recovery: None,
    };
    match FileSystem::recover(&dev) {
        Ok(r) => verdict.recovery = Some(r),
        Err(e) => {
            verdict.problems.push(format!("recovery failed: {e}"));
            return Ok(verdict);
        }
    }
    verdict
        .problems
        .extend(fsck(&dev)?.into_iter().map(|p| format!("fsck: {p}")));
    match FileSystem::mount(dev, cfg.mount).and_then(|fs| walk(&fs)) {
        Ok(got) => verdict.problems.extend(compare(want, &got)),
        Err(e) => verdict.problems.push(format!("mount or walk failed: {e}")),
    }
    verdict.passed = verdict.problems.is_empty();
    Ok(verdict)
}

/// `points` crash runs at command counts drawn uniformly from one dry run.
pub fn crash_sweep(cfg: &RunConfig, points: usize, seed: u64) -> Result<Vec<CrashVerdict>> {
    let w = generate(&cfg.workload)?;
    let total = count_commands(cfg, &w)?.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let k = rng.gen_range(1..=total);
            let mut v = crash_run_ops(cfg, &w, CrashPoint::At(k))?;
            v.total_cmds = Some(total);
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rename_moves_descendants() {
        let mut m = BTreeMap::new();
        let e = |ino, kind| Entry {
            ino,
            kind,
            inc: ino as u64,
        };
        apply_change(&mut m, &NsChange::Add("/a".into(), e(2, FileKind::Dir)));
        apply_change(&mut m, &NsChange::Add("/a/f".into(), e(3, FileKind::File)));
        apply_change(&mut m, &NsChange::Add("/b".into(), e(4, FileKind::Dir)));
        apply_change(&mut m, &NsChange::Rename("/a".into(), "/b".into()));
        let keys: Vec<_> = m.keys().cloned().collect();
        assert_eq!(keys, vec!["/b".to_string(), "/b/f".to_string()]);
        assert_eq!(m["/b/f"].ino, 3);
    }
}
