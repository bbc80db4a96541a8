#![allow(dead_code)]

pub mod shadow;

use std::collections::BTreeMap;
use std::mem::discriminant;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bytefs_core::fs::model::{ModelFs, Node};
use bytefs_core::fs::{fsck, FileKind, MkfsParams};
use bytefs_core::{DeviceConfig, Error, FileSystem, JournalMode, Mode, MountOptions, Mssd, Result};

pub fn fresh(mode: Mode, cache_pages: u64, journal: JournalMode) -> (Arc<Mssd>, FileSystem) {
    let dev = Arc::new(Mssd::new(DeviceConfig::desk()).unwrap());
    FileSystem::mkfs(&dev, mode, journal, MkfsParams::default()).unwrap();
    let opts = MountOptions {
        journal,
        cache_bytes: cache_pages * 4096,
        ..MountOptions::with_mode(mode)
    };
    let fs = FileSystem::mount(dev.clone(), opts).unwrap();
    (dev, fs)
}

const DIRS: [&str; 4] = ["/", "/a", "/b", "/a/c"];

fn random_path(rng: &mut ChaCha8Rng) -> String {
    let d = DIRS[rng.gen_range(0..DIRS.len())];
    let name = match rng.gen_range(0..10) {
        0 => "a".to_string(),
        1 => "b".to_string(),
        2 => "c".to_string(),
        _ => format!("f{}", rng.gen_range(0..6)),
    };
    if d == "/" {
        format!("/{name}")
    } else {
        format!("{d}/{name}")
    }
}

fn same_outcome<T, U>(op: &str, a: &Result<T>, b: &Result<U>) -> std::result::Result<(), String> {
    match (a, b) {
        (Ok(_), Ok(_)) => Ok(()),
        (Err(x), Err(y)) if discriminant(x) == discriminant(y) => Ok(()),
        (Err(x), Err(y)) => Err(format!("{op}: fs says {x}, model says {y}")),
        (Ok(_), Err(y)) => Err(format!("{op}: fs succeeded, model says {y}")),
        (Err(x), Ok(_)) => Err(format!("{op}: fs says {x}, model succeeded")),
    }
}

/// Full observable state: kind, size and contents per path, plus link
/// counts of directories.
pub fn snapshot(fs: &FileSystem) -> Result<BTreeMap<String, (Node, u32)>> {
    let mut out = BTreeMap::new();
    let mut stack = vec!["/".to_string()];
    out.insert("/".to_string(), (Node::Dir, fs.stat("/")?.links));
    while let Some(dir) = stack.pop() {
        for (name, ino, kind) in fs.readdir(&dir)? {
            let path = if dir == "/" {
                format!("/{name}")
            } else {
                format!("{dir}/{name}")
            };
            let st = fs.stat(&path)?;
            if st.ino != ino || st.kind != kind {
                return Err(Error::State(format!("{path}: dentry and inode disagree")));
            }
            let node = match kind {
                FileKind::Dir => {
                    stack.push(path.clone());
                    Node::Dir
                }
                FileKind::File => Node::File(fs.read(ino, 0, st.size as usize)?),
            };
            out.insert(path, (node, st.links));
        }
    }
    Ok(out)
}

pub fn model_snapshot(m: &ModelFs) -> BTreeMap<String, (Node, u32)> {
    m.nodes()
        .iter()
        .map(|(p, n)| {
            let links = match n {
                Node::File(_) => 1,
                Node::Dir => {
                    let pre = if p == "/" {
                        "/".to_string()
                    } else {
                        format!("{p}/")
                    };
                    let subdirs = m
                        .nodes()
                        .iter()
                        .filter(|(k, v)| {
                            **v == Node::Dir
                                && k.starts_with(&pre)
                                && k.len() > pre.len()
                                && !k[pre.len()..].contains('/')
                        })
                        .count();
                    2 + subdirs as u32
                }
            };
            (p.clone(), (n.clone(), links))
        })
        .collect()
}

fn compare_state(fs: &FileSystem, m: &ModelFs) -> std::result::Result<(), String> {
    let got = snapshot(fs).map_err(|e| format!("walk failed: {e}"))?;
    let want = model_snapshot(m);
    if got == want {
        return Ok(());
    }
    for (p, w) in &want {
        match got.get(p) {
            None => return Err(format!("{p}: missing from the file system")),
            Some(g) if g != w => {
                let size = |n: &Node| match n {
                    Node::File(d) => d.len() as i64,
                    Node::Dir => -1,
                };
                return Err(format!(
                    "{p}: fs has size {} links {}, model has size {} links {}",
                    size(&g.0),
                    g.1,
                    size(&w.0),
                    w.1
                ));
            }
            _ => {}
        }
    }
    let extra: Vec<_> = got.keys().filter(|k| !want.contains_key(*k)).collect();
    Err(format!("extra paths in the file system: {extra:?}"))
}

/// Drives `ops` random namespace and data operations against the file
/// system and the model, comparing outcomes, reads and the full tree.
pub fn model_session(
    mode: Mode,
    ops: usize,
    seed: u64,
    cache_pages: u64,
) -> std::result::Result<(), String> {
    let (dev, mut fs) = fresh(mode, cache_pages, JournalMode::Ordered);
    let mut m = ModelFs::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for dir in ["/a", "/b", "/a/c"] {
        fs.mkdir(dir).unwrap();
        m.mkdir(dir).unwrap();
    }
    for i in 0..ops {
        let p = random_path(&mut rng);
        let ctx = |s: &str| format!("op {i} ({s} {p})");
        match rng.gen_range(0..100) {
            0..=11 => same_outcome(&ctx("create"), &fs.create(&p), &m.create(&p))?,
            12..=16 => same_outcome(&ctx("mkdir"), &fs.mkdir(&p), &m.mkdir(&p))?,
            17..=23 => same_outcome(&ctx("unlink"), &fs.unlink(&p), &m.unlink(&p))?,
            24..=27 => same_outcome(&ctx("rmdir"), &fs.rmdir(&p), &m.rmdir(&p))?,
            28..=33 => {
                let to = random_path(&mut rng);
                same_outcome(
                    &ctx(&format!("rename to {to}")),
                    &fs.rename(&p, &to),
                    &m.rename(&p, &to),
                )?
            }
            34..=79 => {
                if !matches!(m.get(&p), Some(Node::File(_))) {
                    let kind = fs.stat(&p).map(|s| s.kind);
                    let want = m.resolve(&p).map(|_| FileKind::Dir);
                    same_outcome(&ctx("stat"), &kind, &want)?;
                    if kind.is_ok() && *kind.as_ref().unwrap() != FileKind::Dir {
                        return Err(format!("{}: expected a directory", ctx("stat")));
                    }
                    continue;
                }
                let ino = fs
                    .lookup(&p)
                    .map_err(|e| format!("{}: {e}", ctx("lookup")))?;
                let big = rng.gen_bool(0.3);
                let off = rng.gen_range(0..if big { 40_000 } else { 9000 });
                let len = if big {
                    rng.gen_range(1..12_000)
                } else {
                    rng.gen_range(1..700)
                };
                match rng.gen_range(0..10) {
                    0..=3 => {
                        let mut data = vec![0u8; len];
                        rng.fill_bytes(&mut data);
                        fs.write(ino, off, &data)
                            .map_err(|e| format!("{}: {e}", ctx("write")))?;
                        m.write(&p, off, &data).unwrap();
                    }
                    4 => {
                        let mut data = vec![0u8; len];
                        rng.fill_bytes(&mut data);
                        fs.direct_write(ino, off, &data)
                            .map_err(|e| format!("{}: {e}", ctx("dwrite")))?;
                        m.write(&p, off, &data).unwrap();
                    }
                    5..=6 => {
                        let got = fs
                            .read(ino, off, len)
                            .map_err(|e| format!("{}: {e}", ctx("read")))?;
                        if got != m.read(&p, off, len).unwrap() {
                            return Err(format!("{}: read {len} at {off} differs", ctx("read")));
                        }
                    }
                    7 => {
                        let (got, _) = fs
                            .direct_read(ino, off, len)
                            .map_err(|e| format!("{}: {e}", ctx("dread")))?;
                        if got != m.read(&p, off, len).unwrap() {
                            return Err(format!(
                                "{}: direct read {len} at {off} differs",
                                ctx("dread")
                            ));
                        }
                    }
                    8 => fs
                        .fsync(ino)
                        .map_err(|e| format!("{}: {e}", ctx("fsync")))?,
                    _ => fs
                        .fdatasync(ino)
                        .map_err(|e| format!("{}: {e}", ctx("fdatasync")))?,
                }
            }
            _ => {
                let got = fs.stat(&p);
                let want = m.resolve(&p).cloned();
                same_outcome(&ctx("stat"), &got, &want)?;
                if let (Ok(s), Ok(Node::File(d))) = (&got, &want) {
                    if s.size != d.len() as u64 {
                        return Err(format!("{}: size {} vs {}", ctx("stat"), s.size, d.len()));
                    }
                }
            }
        }
        if i % 997 == 996 {
            compare_state(&fs, &m).map_err(|e| format!("after op {i}: {e}"))?;
            let opts = fs.options();
            fs.unmount().map_err(|e| format!("unmount: {e}"))?;
            fs = FileSystem::mount(dev.clone(), opts).map_err(|e| format!("mount: {e}"))?;
            compare_state(&fs, &m).map_err(|e| format!("after remount at op {i}: {e}"))?;
        }
    }
    compare_state(&fs, &m)?;
    fs.sync().map_err(|e| e.to_string())?;
    let problems = fsck(&dev).map_err(|e| e.to_string())?;
    if !problems.is_empty() {
        return Err(format!("fsck: {problems:?}"));
    }
    Ok(())
}
