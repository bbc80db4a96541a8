//! In-memory reference file system used as a test and crash oracle.

use std::collections::BTreeMap;

use super::ops::components;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Dir,
    File(Vec<u8>),
}

/// Flat path-keyed tree. Paths are normalized to `/a/b` form; the root is
/// `/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFs {
    nodes: BTreeMap<String, Node>,
}

impl Default for ModelFs {
    fn default() -> Self {
        Self::new()
    }
}

fn normalize(path: &str) -> Result<String> {
    let c = components(path)?;
    Ok(format!("/{}", c.join("/")))
}

fn parent_of(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    let i = path.rfind('/').expect("absolute");
    Some(if i == 0 { "/" } else { &path[..i] })
}

fn child_prefix(path: &str) -> String {
    if path == "/" {
        "/".to_string()
    } else {
        format!("{path}/")
    }
}

impl ModelFs {
    pub fn new() -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert("/".to_string(), Node::Dir);
        Self { nodes }
    }

    pub fn nodes(&self) -> &BTreeMap<String, Node> {
        &self.nodes
    }

    pub fn get(&self, path: &str) -> Option<&Node> {
        self.nodes.get(&normalize(path).ok()?)
    }

    /// Resolves a path with the same errors the file system reports.
    pub fn resolve(&self, path: &str) -> Result<&Node> {
        let p = normalize(path)?;
        self.check_parent(&p)?;
        self.nodes.get(&p).ok_or(Error::NotFound(p))
    }

    fn check_parent(&self, p: &str) -> Result<()> {
        // Walk ancestors so a file in the middle reports NotADirectory.
        let mut anc = Vec::new();
        let mut cur = parent_of(p);
        while let Some(a) = cur {
            anc.push(a);
            cur = parent_of(a);
        }
        for a in anc.into_iter().rev() {
            match self.nodes.get(a) {
                None => return Err(Error::NotFound(a.to_string())),
                Some(Node::File(_)) => return Err(Error::NotADirectory(a.to_string())),
                Some(Node::Dir) => {}
            }
        }
        Ok(())
    }

    fn children<'a>(&'a self, p: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        let pre = child_prefix(p);
        let pre2 = pre.clone();
        self.nodes
            .range(pre..)
            .take_while(move |(k, _)| k.starts_with(&pre2))
            .map(|(k, _)| k)
            .filter(move |k| k.len() > 1 && parent_of(k) == Some(p))
    }

    fn insert(&mut self, path: &str, node: Node) -> Result<()> {
        let p = normalize(path)?;
        if p == "/" {
            return Err(Error::AlreadyExists(p));
        }
        self.check_parent(&p)?;
        if self.nodes.contains_key(&p) {
            return Err(Error::AlreadyExists(p));
        }
        self.nodes.insert(p, node);
        Ok(())
    }

    pub fn create(&mut self, path: &str) -> Result<()> {
        self.insert(path, Node::File(Vec::new()))
    }

    pub fn mkdir(&mut self, path: &str) -> Result<()> {
        self.insert(path, Node::Dir)
    }

    pub fn unlink(&mut self, path: &str) -> Result<()> {
        let p = normalize(path)?;
        if p == "/" {
            return Err(Error::InvalidArgument("cannot remove /".into()));
        }
        self.check_parent(&p)?;
        match self.nodes.get(&p) {
            None => Err(Error::NotFound(p)),
            Some(Node::Dir) => Err(Error::IsADirectory(p)),
            Some(Node::File(_)) => {
                self.nodes.remove(&p);
                Ok(())
            }
        }
    }

    pub fn rmdir(&mut self, path: &str) -> Result<()> {
        let p = normalize(path)?;
        if p == "/" {
            return Err(Error::InvalidArgument("cannot remove /".into()));
        }
        self.check_parent(&p)?;
        match self.nodes.get(&p) {
            None => Err(Error::NotFound(p)),
            Some(Node::File(_)) => Err(Error::NotADirectory(p)),
            Some(Node::Dir) => {
                if self.children(&p).next().is_some() {
                    return Err(Error::NotEmpty(p));
                }
                self.nodes.remove(&p);
                Ok(())
            }
        }
    }

    pub fn rename(&mut self, from: &str, to: &str) -> Result<()> {
        let f = normalize(from)?;
        let t = normalize(to)?;
        if f == "/" {
            return Err(Error::InvalidArgument("cannot rename /".into()));
        }
        if t == "/" {
            return Err(Error::InvalidArgument("cannot rename onto /".into()));
        }
        self.check_parent(&f)?;
        let src = self
            .nodes
            .get(&f)
            .cloned()
            .ok_or_else(|| Error::NotFound(f.clone()))?;
        self.check_parent(&t)?;
        if f == t {
            return Ok(());
        }
        let is_dir = src == Node::Dir;
        if is_dir && t.starts_with(&child_prefix(&f)) {
            return Err(Error::InvalidArgument(format!(
                "cannot move {f} into itself"
            )));
        }
        if let Some(d) = self.nodes.get(&t) {
            match (is_dir, d == &Node::Dir) {
                (false, true) => return Err(Error::IsADirectory(t)),
                (true, false) => return Err(Error::NotADirectory(t)),
                (true, true) if self.children(&t).next().is_some() => {
                    return Err(Error::NotEmpty(t))
                }
                _ => {}
            }
        }
        self.nodes.remove(&t);
        let moved: Vec<String> = if is_dir {
            let pre = child_prefix(&f);
            self.nodes
                .keys()
                .filter(|k| k.starts_with(&pre))
                .cloned()
                .collect()
        } else {
            Vec::new()
        };
        self.nodes.remove(&f);
        self.nodes.insert(t.clone(), src);
        for k in moved {
            let n = self.nodes.remove(&k).expect("present");
            self.nodes.insert(format!("{t}{}", &k[f.len()..]), n);
        }
        Ok(())
    }

    fn file_mut(&mut self, path: &str) -> Result<&mut Vec<u8>> {
        let p = normalize(path)?;
        self.check_parent(&p)?;
        match self.nodes.get_mut(&p) {
            None => Err(Error::NotFound(p)),
            Some(Node::Dir) => Err(Error::IsADirectory(p)),
            Some(Node::File(d)) => Ok(d),
        }
    }

    pub fn write(&mut self, path: &str, off: u64, data: &[u8]) -> Result<()> {
        let f = self.file_mut(path)?;
        if data.is_empty() {
            return Ok(());
        }
        let end = off as usize + data.len();
        if f.len() < end {
            f.resize(end, 0);
        }
        f[off as usize..end].copy_from_slice(data);
        Ok(())
    }

    pub fn read(&mut self, path: &str, off: u64, len: usize) -> Result<Vec<u8>> {
        let f = self.file_mut(path)?;
        let s = (off as usize).min(f.len());
        let e = (s + len).min(f.len());
        Ok(f[s..e].to_vec())
    }

    /// Replaces the contents of an existing file.
    pub fn set_contents(&mut self, path: &str, data: Vec<u8>) -> Result<()> {
        *self.file_mut(path)? = data;
        Ok(())
    }

    /// Sorted child names of a directory.
    pub fn list(&self, path: &str) -> Result<Vec<String>> {
        let p = normalize(path)?;
        match self.nodes.get(&p) {
            None => Err(Error::NotFound(p)),
            Some(Node::File(_)) => Err(Error::NotADirectory(p)),
            Some(Node::Dir) => Ok(self
                .children(&p)
                .map(|k| k[k.rfind('/').expect("absolute") + 1..].to_string())
                .collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rename_moves_subtree() {
        let mut m = ModelFs::new();
        m.mkdir("/a").unwrap();
        m.mkdir("/a/b").unwrap();
        m.create("/a/b/f").unwrap();
        m.write("/a/b/f", 2, b"xy").unwrap();
        m.rename("/a", "/c").unwrap();
        assert_eq!(m.read("/c/b/f", 0, 10).unwrap(), vec![0, 0, b'x', b'y']);
        assert!(m.get("/a").is_none());
        assert!(matches!(
            m.rename("/c", "/c/b/z"),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(m.rmdir("/c"), Err(Error::NotEmpty(_))));
        assert_eq!(m.list("/").unwrap(), vec!["c".to_string()]);
    }
}
