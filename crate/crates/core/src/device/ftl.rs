//! Page-level flash translation.

use super::flash::{Lpa, Ppa};
use crate::error::{Error, Result};

const UNMAPPED: u32 = 0;

/// Logical-to-physical page map with a free list of physical pages.
///
/// Mapping entries hold `ppa + 1` so that a zeroed table means "nothing
/// mapped"; physical pages are handed out in order, then from the free list.
#[derive(Debug, Clone)]
pub struct Ftl {
    map: Vec<u32>,
    free: Vec<u32>,
    next_fresh: u64,
    physical_pages: u64,
    mapped: u64,
}

impl Ftl {
    pub fn new(logical_pages: u64, physical_pages: u64) -> Self {
        Self {
            map: vec![UNMAPPED; logical_pages as usize],
            free: Vec::new(),
            next_fresh: 0,
            physical_pages,
            mapped: 0,
        }
    }

    pub fn logical_pages(&self) -> u64 {
        self.map.len() as u64
    }

    pub fn mapped_count(&self) -> u64 {
        self.mapped
    }

    pub fn free_count(&self) -> u64 {
        self.physical_pages - self.next_fresh + self.free.len() as u64
    }

    fn check(&self, lpa: Lpa) -> Result<()> {
        if lpa.0 >= self.logical_pages() {
            return Err(Error::AddressFault(format!(
                "lpa {} beyond {} logical pages",
                lpa.0,
                self.logical_pages()
            )));
        }
        Ok(())
    }

    pub fn lookup(&self, lpa: Lpa) -> Result<Option<Ppa>> {
        self.check(lpa)?;
        Ok(match self.map[lpa.0 as usize] {
            UNMAPPED => None,
            v => Some(Ppa(v as u64 - 1)),
        })
    }

    /// Returns the mapped page, installing a fresh mapping when absent.
    pub fn translate(&mut self, lpa: Lpa) -> Result<Ppa> {
        if let Some(ppa) = self.lookup(lpa)? {
            return Ok(ppa);
        }
        let ppa = if let Some(p) = self.free.pop() {
            p as u64
        } else if self.next_fresh < self.physical_pages {
            self.next_fresh += 1;
            self.next_fresh - 1
        } else {
            return Err(Error::SpaceExhausted("no free physical page".into()));
        };
        self.map[lpa.0 as usize] = ppa as u32 + 1;
        self.mapped += 1;
        Ok(Ppa(ppa))
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.map
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != UNMAPPED)
            .map(|(l, &v)| (l as u64, v as u64 - 1))
    }

    pub(crate) fn raw_parts(&self) -> (u64, &[u32]) {
        (self.next_fresh, &self.free)
    }

    pub(crate) fn restore(
        logical_pages: u64,
        physical_pages: u64,
        next_fresh: u64,
        free: Vec<u32>,
        entries: &[(u64, u64)],
    ) -> Result<Self> {
        let mut ftl = Ftl::new(logical_pages, physical_pages);
        ftl.next_fresh = next_fresh;
        ftl.free = free;
        for &(l, p) in entries {
            if l >= logical_pages || p >= physical_pages {
                return Err(Error::CorruptImage(format!(
                    "ftl entry {l}->{p} out of range"
                )));
            }
            ftl.map[l as usize] = p as u32 + 1;
            ftl.mapped += 1;
        }
        Ok(ftl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translate_is_stable() {
        let mut f = Ftl::new(16, 17);
        let a = f.translate(Lpa(5)).unwrap();
        assert_eq!(f.translate(Lpa(5)).unwrap(), a);
        assert!(matches!(f.translate(Lpa(16)), Err(Error::AddressFault(_))));
    }

    #[test]
    fn exhaustion_reports_space() {
        let mut f = Ftl::new(4, 2);
        f.translate(Lpa(0)).unwrap();
        f.translate(Lpa(1)).unwrap();
        assert!(matches!(f.translate(Lpa(2)), Err(Error::SpaceExhausted(_))));
    }
}
