use std::fmt;

/// Which file-system structure a device request belongs to.
///
/// The device never infers this; callers tag every request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Category {
    Superblock = 0,
    Bitmap = 1,
    Inode = 2,
    Dentry = 3,
    DataPointer = 4,
    Data = 5,
    Journal = 6,
    Untagged = 7,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Superblock,
        Category::Bitmap,
        Category::Inode,
        Category::Dentry,
        Category::DataPointer,
        Category::Data,
        Category::Journal,
        Category::Untagged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Superblock => "superblock",
            Category::Bitmap => "bitmap",
            Category::Inode => "inode",
            Category::Dentry => "dentry",
            Category::DataPointer => "data_pointer",
            Category::Data => "data",
            Category::Journal => "journal",
            Category::Untagged => "untagged",
        }
    }

    pub fn from_u8(v: u8) -> Category {
        Self::ALL
            .get(v as usize)
            .copied()
            .unwrap_or(Category::Untagged)
    }

    /// File-system metadata, journaling included.
    pub fn is_metadata(self) -> bool {
        !matches!(self, Category::Data | Category::Untagged)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Byte counts broken down by [`Category`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryBytes([u64; 8]);

impl CategoryBytes {
    pub fn add(&mut self, cat: Category, bytes: u64) {
        self.0[cat as usize] += bytes;
    }

    pub fn get(&self, cat: Category) -> u64 {
        self.0[cat as usize]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn metadata(&self) -> u64 {
        Category::ALL
            .iter()
            .filter(|c| c.is_metadata())
            .map(|&c| self.get(c))
            .sum()
    }

    pub fn saturating_sub(&self, other: &CategoryBytes) -> CategoryBytes {
        let mut out = CategoryBytes::default();
        for i in 0..8 {
            out.0[i] = self.0[i].saturating_sub(other.0[i]);
        }
        out
    }
}

/// Host/SSD and SSD/flash traffic plus request counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCounters {
    pub host_to_ssd: CategoryBytes,
    pub ssd_to_host: CategoryBytes,
    pub flash_read: CategoryBytes,
    pub flash_write: CategoryBytes,
    pub byte_write_ops: u64,
    pub byte_read_ops: u64,
    pub block_write_ops: u64,
    pub block_read_ops: u64,
    pub commits: u64,
}

impl TrafficCounters {
    /// Counter deltas `self - earlier`.
    pub fn since(&self, earlier: &TrafficCounters) -> TrafficCounters {
        TrafficCounters {
            host_to_ssd: self.host_to_ssd.saturating_sub(&earlier.host_to_ssd),
            ssd_to_host: self.ssd_to_host.saturating_sub(&earlier.ssd_to_host),
            flash_read: self.flash_read.saturating_sub(&earlier.flash_read),
            flash_write: self.flash_write.saturating_sub(&earlier.flash_write),
            byte_write_ops: self.byte_write_ops - earlier.byte_write_ops,
            byte_read_ops: self.byte_read_ops - earlier.byte_read_ops,
            block_write_ops: self.block_write_ops - earlier.block_write_ops,
            block_read_ops: self.block_read_ops - earlier.block_read_ops,
            commits: self.commits - earlier.commits,
        }
    }

    pub fn byte_ops(&self) -> u64 {
        self.byte_write_ops + self.byte_read_ops
    }
}
