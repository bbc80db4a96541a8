//! Text traces: one `op path offset size [fsync|fdatasync]` record per line.
//!
//! `rename` takes two paths (`rename /a /b`). Namespace ops may omit the
//! offset and size; `create` with a non-zero size writes that many bytes
//! after creating the file. Blank lines and `#` comments are skipped.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sync {
    #[default]
    None,
    Fsync,
    Fdatasync,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOp {
    Create {
        path: String,
        size: u64,
    },
    Mkdir {
        path: String,
    },
    Unlink {
        path: String,
    },
    Rmdir {
        path: String,
    },
    Rename {
        from: String,
        to: String,
    },
    Write {
        path: String,
        offset: u64,
        len: u64,
        sync: Sync,
    },
    Read {
        path: String,
        offset: u64,
        len: u64,
    },
    DirectWrite {
        path: String,
        offset: u64,
        len: u64,
    },
    DirectRead {
        path: String,
        offset: u64,
        len: u64,
    },
    Fsync {
        path: String,
    },
    Fdatasync {
        path: String,
    },
    Stat {
        path: String,
    },
}

impl TraceOp {
    /// The path the op acts on (the source for a rename).
    pub fn path(&self) -> &str {
        match self {
            TraceOp::Create { path, .. }
            | TraceOp::Mkdir { path }
            | TraceOp::Unlink { path }
            | TraceOp::Rmdir { path }
            | TraceOp::Write { path, .. }
            | TraceOp::Read { path, .. }
            | TraceOp::DirectWrite { path, .. }
            | TraceOp::DirectRead { path, .. }
            | TraceOp::Fsync { path }
            | TraceOp::Fdatasync { path }
            | TraceOp::Stat { path } => path,
            TraceOp::Rename { from, .. } => from,
        }
    }

    /// Ops that need the target to exist as a regular file.
    pub fn needs_file(&self) -> bool {
        matches!(
            self,
            TraceOp::Write { .. }
                | TraceOp::Read { .. }
                | TraceOp::DirectWrite { .. }
                | TraceOp::DirectRead { .. }
                | TraceOp::Fsync { .. }
                | TraceOp::Fdatasync { .. }
        )
    }
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceOp::Create { path, size } => write!(f, "create {path} 0 {size}"),
            TraceOp::Mkdir { path } => write!(f, "mkdir {path}"),
            TraceOp::Unlink { path } => write!(f, "unlink {path}"),
            TraceOp::Rmdir { path } => write!(f, "rmdir {path}"),
            TraceOp::Rename { from, to } => write!(f, "rename {from} {to}"),
            TraceOp::Write {
                path,
                offset,
                len,
                sync,
            } => {
                write!(f, "write {path} {offset} {len}")?;
                match sync {
                    Sync::None => Ok(()),
                    Sync::Fsync => f.write_str(" fsync"),
                    Sync::Fdatasync => f.write_str(" fdatasync"),
                }
            }
            TraceOp::Read { path, offset, len } => write!(f, "read {path} {offset} {len}"),
            TraceOp::DirectWrite { path, offset, len } => write!(f, "dwrite {path} {offset} {len}"),
            TraceOp::DirectRead { path, offset, len } => write!(f, "dread {path} {offset} {len}"),
            TraceOp::Fsync { path } => write!(f, "fsync {path}"),
            TraceOp::Fdatasync { path } => write!(f, "fdatasync {path}"),
            TraceOp::Stat { path } => write!(f, "stat {path}"),
        }
    }
}

pub fn parse_line(line: &str, lineno: usize) -> Result<Option<TraceOp>> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let err = |m: String| Error::Parse {
        line: lineno,
        message: m,
    };
    let t: Vec<&str> = line.split_whitespace().collect();
    let op = t[0];
    let path = t
        .get(1)
        .filter(|p| p.starts_with('/'))
        .ok_or_else(|| err(format!("{op}: expected an absolute path")))?
        .to_string();
    let num = |i: usize, default: Option<u64>| -> Result<u64> {
        match t.get(i) {
            Some(s) => s
                .parse()
                .map_err(|_| err(format!("{op}: bad number {s:?}"))),
            None => default.ok_or_else(|| err(format!("{op}: missing field {i}"))),
        }
    };
    let max_fields = |n: usize| -> Result<()> {
        if t.len() > n {
            Err(err(format!("{op}: unexpected field {:?}", t[n])))
        } else {
            Ok(())
        }
    };
    let parsed = match op {
        "create" => {
            max_fields(4)?;
            num(2, Some(0))?;
            TraceOp::Create {
                path,
                size: num(3, Some(0))?,
            }
        }
        "mkdir" | "unlink" | "rmdir" | "fsync" | "fdatasync" | "stat" => {
            max_fields(4)?;
            num(2, Some(0))?;
            num(3, Some(0))?;
            match op {
                "mkdir" => TraceOp::Mkdir { path },
                "unlink" => TraceOp::Unlink { path },
                "rmdir" => TraceOp::Rmdir { path },
                "fsync" => TraceOp::Fsync { path },
                "fdatasync" => TraceOp::Fdatasync { path },
                _ => TraceOp::Stat { path },
            }
        }
        "rename" => {
            max_fields(3)?;
            let to = t
                .get(2)
                .filter(|p| p.starts_with('/'))
                .ok_or_else(|| err("rename: expected a destination path".into()))?;
            TraceOp::Rename {
                from: path,
                to: to.to_string(),
            }
        }
        "write" => {
            max_fields(5)?;
            let sync = match t.get(4) {
                None => Sync::None,
                Some(&"fsync") => Sync::Fsync,
                Some(&"fdatasync") => Sync::Fdatasync,
                Some(s) => return Err(err(format!("write: unknown flag {s:?}"))),
            };
            TraceOp::Write {
                path,
                offset: num(2, None)?,
                len: num(3, None)?,
                sync,
            }
        }
        "read" | "dwrite" | "dread" => {
            max_fields(4)?;
            let (offset, len) = (num(2, None)?, num(3, None)?);
            match op {
                "read" => TraceOp::Read { path, offset, len },
                "dwrite" => TraceOp::DirectWrite { path, offset, len },
                _ => TraceOp::DirectRead { path, offset, len },
            }
        }
        _ => return Err(err(format!("unknown op {op:?}"))),
    };
    Ok(Some(parsed))
}

/// Parses a whole trace; errors name the 1-based line.
pub fn parse(text: &str) -> Result<Vec<TraceOp>> {
    Ok(parse_numbered(text)?
        .into_iter()
        .map(|(_, op)| op)
        .collect())
}

/// Like [`parse`], keeping each op's line number.
pub fn parse_numbered(text: &str) -> Result<Vec<(usize, TraceOp)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(op) = parse_line(line, i + 1)? {
            out.push((i + 1, op));
        }
    }
    Ok(out)
}

pub fn format(ops: &[TraceOp]) -> String {
    let mut s = String::new();
    for op in ops {
        s.push_str(&op.to_string());
        s.push('\n');
    }
    s
}
