//! The circular 64-byte-slot log region and its per-slot sidecar records.

use crate::config::CACHELINE;
use crate::device::Category;

const SLOT: usize = CACHELINE as usize;
pub const SIDECAR_BYTES: usize = 16;

pub const FLAG_VALID: u8 = 0x1;
pub const FLAG_DEAD: u8 = 0x2;
pub const FLAG_FIRST: u8 = 0x4;

/// Descriptor stored beside every 64-byte slot.
///
/// Packed layout (little endian): lpa u32, block_offset u8, length u8,
/// flags u8, start u8, txid u32, generation u32. `start` is the first valid
/// byte inside the cacheline; the category tag lives in the top flag bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sidecar {
    pub lpa: u32,
    pub block_offset: u8,
    pub length: u8,
    pub flags: u8,
    pub start: u8,
    pub txid: u32,
    pub generation: u32,
}

impl Sidecar {
    pub fn encode(&self) -> [u8; SIDECAR_BYTES] {
        let mut b = [0u8; SIDECAR_BYTES];
        b[0..4].copy_from_slice(&self.lpa.to_le_bytes());
        b[4] = self.block_offset;
        b[5] = self.length;
        b[6] = self.flags;
        b[7] = self.start;
        b[8..12].copy_from_slice(&self.txid.to_le_bytes());
        b[12..16].copy_from_slice(&self.generation.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Self {
        Self {
            lpa: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            block_offset: b[4],
            length: b[5],
            flags: b[6],
            start: b[7],
            txid: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            generation: u32::from_le_bytes(b[12..16].try_into().unwrap()),
        }
    }

    pub fn is_live(&self) -> bool {
        self.flags & FLAG_VALID != 0 && self.flags & FLAG_DEAD == 0
    }

    pub fn category(&self) -> Category {
        Category::from_u8(self.flags >> 4)
    }

    pub fn with_category(mut self, cat: Category) -> Self {
        self.flags = (self.flags & 0x0f) | ((cat as u8) << 4);
        self
    }

    /// Byte range inside the page covered by this slot.
    pub fn page_range(&self) -> std::ops::Range<usize> {
        let s = self.block_offset as usize * SLOT + self.start as usize;
        s..s + self.length as usize
    }
}

/// Circular buffer of 64-byte slots with a head and an occupied count.
#[derive(Debug, Clone)]
pub struct LogRegion {
    data: Vec<u8>,
    side: Vec<u8>,
    slots: u64,
    head: u64,
    used: u64,
    generation: u32,
}

impl LogRegion {
    pub fn new(bytes: u64) -> Self {
        let slots = bytes / CACHELINE;
        Self {
            data: vec![0; bytes as usize],
            side: vec![0; slots as usize * SIDECAR_BYTES],
            slots,
            head: 0,
            used: 0,
            generation: 0,
        }
    }

    pub fn slot_count(&self) -> u64 {
        self.slots
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.slots * CACHELINE
    }

    /// Oldest occupied slot. Byte offsets are slot indices times 64.
    pub fn head(&self) -> u64 {
        self.head
    }

    /// Next slot to be written.
    pub fn tail(&self) -> u64 {
        (self.head + self.used) % self.slots
    }

    pub fn used_slots(&self) -> u64 {
        self.used
    }

    pub fn free_slots(&self) -> u64 {
        self.slots - self.used
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Slot distance from the head; larger means newer.
    pub fn age(&self, slot: u64) -> u64 {
        (slot + self.slots - self.head) % self.slots
    }

    pub fn utilization(&self) -> f64 {
        self.used as f64 / self.slots as f64
    }

    /// Appends one slot; the caller checks free space first.
    pub fn append(&mut self, payload: &[u8; SLOT], mut side: Sidecar) -> u64 {
        assert!(self.used < self.slots, "log region overflow");
        let slot = self.tail();
        side.generation = self.generation;
        let off = slot as usize * SLOT;
        self.data[off..off + SLOT].copy_from_slice(payload);
        self.put_sidecar(slot, &side);
        self.used += 1;
        slot
    }

    pub fn payload(&self, slot: u64) -> &[u8] {
        let off = slot as usize * SLOT;
        &self.data[off..off + SLOT]
    }

    pub fn sidecar(&self, slot: u64) -> Sidecar {
        let off = slot as usize * SIDECAR_BYTES;
        Sidecar::decode(&self.side[off..off + SIDECAR_BYTES])
    }

    pub fn put_sidecar(&mut self, slot: u64, side: &Sidecar) {
        let off = slot as usize * SIDECAR_BYTES;
        self.side[off..off + SIDECAR_BYTES].copy_from_slice(&side.encode());
    }

    pub fn mark_dead(&mut self, slot: u64) {
        let mut s = self.sidecar(slot);
        s.flags |= FLAG_DEAD;
        self.put_sidecar(slot, &s);
    }

    pub fn next_slot(&self, slot: u64) -> u64 {
        (slot + 1) % self.slots
    }

    /// Occupied slots from oldest to newest.
    pub fn occupied(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.used).map(move |i| (self.head + i) % self.slots)
    }

    /// Releases every occupied slot and opens a new generation.
    pub fn release_all(&mut self) {
        for slot in (0..self.used).map(|i| (self.head + i) % self.slots) {
            let off = slot as usize * SIDECAR_BYTES;
            self.side[off..off + SIDECAR_BYTES].fill(0);
        }
        self.head = self.tail();
        self.used = 0;
        self.generation = self.generation.wrapping_add(1);
    }

    pub(crate) fn restore_cursor(&mut self, head: u64, used: u64, generation: u32) {
        self.head = head;
        self.used = used;
        self.generation = generation;
    }

    pub(crate) fn write_raw(&mut self, slot: u64, payload: &[u8], side: &[u8]) {
        let off = slot as usize * SLOT;
        self.data[off..off + SLOT].copy_from_slice(payload);
        let so = slot as usize * SIDECAR_BYTES;
        self.side[so..so + SIDECAR_BYTES].copy_from_slice(side);
    }

    pub(crate) fn raw_sidecar(&self, slot: u64) -> &[u8] {
        let so = slot as usize * SIDECAR_BYTES;
        &self.side[so..so + SIDECAR_BYTES]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_roundtrip_and_category() {
        let s = Sidecar {
            lpa: 77,
            block_offset: 3,
            length: 40,
            flags: FLAG_VALID | FLAG_FIRST,
            start: 8,
            txid: 9,
            generation: 2,
        }
        .with_category(Category::Dentry);
        assert_eq!(Sidecar::decode(&s.encode()), s);
        assert_eq!(s.category(), Category::Dentry);
        assert_eq!(s.page_range(), 200..240);
        assert!(s.is_live());
    }

    #[test]
    fn wraps_around() {
        let mut r = LogRegion::new(4 * CACHELINE);
        let side = Sidecar {
            flags: FLAG_VALID,
            ..Default::default()
        };
        for _ in 0..3 {
            r.append(&[1; SLOT], side);
        }
        r.release_all();
        assert_eq!(r.head(), 3);
        assert_eq!(r.generation(), 1);
        let a = r.append(&[2; SLOT], side);
        let b = r.append(&[3; SLOT], side);
        assert_eq!((a, b), (3, 0));
        assert_eq!(r.age(b), 1);
        assert_eq!(r.sidecar(b).generation, 1);
        assert_eq!(r.occupied().collect::<Vec<_>>(), vec![3, 0]);
    }
}
