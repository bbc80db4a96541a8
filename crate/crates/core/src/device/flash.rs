//! Page-granular flash array and the channel-parallel timing rule.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Physical page address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ppa(pub u64);

/// Logical page address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lpa(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlashOpKind {
    Read,
    Write,
}

/// Flash pages, stored sparsely. Pages never written read as zero.
#[derive(Debug, Clone)]
pub struct FlashArray {
    page_size: usize,
    channels: u64,
    page_count: u64,
    pages: HashMap<u64, Box<[u8]>>,
}

impl FlashArray {
    pub fn new(page_size: u64, channels: u64, page_count: u64) -> Self {
        Self {
            page_size: page_size as usize,
            channels,
            page_count,
            pages: HashMap::new(),
        }
    }

    pub fn page_count(&self) -> u64 {
        self.page_count
    }

    pub fn channel_of(&self, ppa: Ppa) -> u64 {
        ppa.0 % self.channels
    }

    fn check(&self, ppa: Ppa) -> Result<()> {
        if ppa.0 >= self.page_count {
            return Err(Error::AddressFault(format!(
                "ppa {} beyond {} physical pages",
                ppa.0, self.page_count
            )));
        }
        Ok(())
    }

    pub fn read(&self, ppa: Ppa) -> Result<Vec<u8>> {
        self.check(ppa)?;
        Ok(match self.pages.get(&ppa.0) {
            Some(p) => p.to_vec(),
            None => vec![0; self.page_size],
        })
    }

    pub fn read_into(&self, ppa: Ppa, buf: &mut [u8]) -> Result<()> {
        self.check(ppa)?;
        match self.pages.get(&ppa.0) {
            Some(p) => buf.copy_from_slice(p),
            None => buf.fill(0),
        }
        Ok(())
    }

    pub fn write(&mut self, ppa: Ppa, data: &[u8]) -> Result<()> {
        self.check(ppa)?;
        if data.len() != self.page_size {
            return Err(Error::InvalidArgument(format!(
                "flash write of {} bytes, page is {}",
                data.len(),
                self.page_size
            )));
        }
        if data.iter().all(|&b| b == 0) {
            self.pages.remove(&ppa.0);
        } else {
            self.pages.insert(ppa.0, data.into());
        }
        Ok(())
    }

    pub(crate) fn stored_pages(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.pages.iter().map(|(k, v)| (*k, &v[..]))
    }

    /// Pages holding non-zero data.
    pub fn stored_count(&self) -> usize {
        self.pages.len()
    }
}

/// Elapsed time of one batch: requests on distinct channels overlap fully,
/// requests on one channel serialize, so the batch takes the largest
/// per-channel sum.
pub fn batch_elapsed_ns(
    ops: impl IntoIterator<Item = (u64, FlashOpKind)>,
    channels: u64,
    read_ns: u64,
    write_ns: u64,
) -> u64 {
    let mut per_channel = vec![0u64; channels as usize];
    for (ppa, kind) in ops {
        per_channel[(ppa % channels) as usize] += match kind {
            FlashOpKind::Read => read_ns,
            FlashOpKind::Write => write_ns,
        };
    }
    per_channel.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erased_pages_read_zero() {
        let f = FlashArray::new(4096, 8, 16);
        assert!(f.read(Ppa(3)).unwrap().iter().all(|&b| b == 0));
        assert!(matches!(f.read(Ppa(16)), Err(Error::AddressFault(_))));
    }

    #[test]
    fn store_load_identity() {
        let mut f = FlashArray::new(4096, 8, 16);
        let page: Vec<u8> = (0..4096).map(|i| (i % 251) as u8).collect();
        f.write(Ppa(2), &page).unwrap();
        assert_eq!(f.read(Ppa(2)).unwrap(), page);
        assert!(f.write(Ppa(2), &page[..100]).is_err());
    }

    #[test]
    fn channel_max_rule() {
        let ops = (0..8).map(|p| (p, FlashOpKind::Write));
        assert_eq!(batch_elapsed_ns(ops, 8, 40_000, 60_000), 60_000);
        let ops = [
            (0, FlashOpKind::Read),
            (8, FlashOpKind::Write),
            (1, FlashOpKind::Read),
        ];
        assert_eq!(batch_elapsed_ns(ops, 8, 40_000, 60_000), 100_000);
        assert_eq!(batch_elapsed_ns([], 8, 1, 1), 0);
    }
}
