//! Emulated device configuration.

use crate::error::{Error, Result};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;
pub const GIB: u64 = 1024 * MIB;

/// Cacheline size of the byte interface.
pub const CACHELINE: u64 = 64;

/// Geometry and timing of the emulated memory-semantic SSD.
///
/// Defaults follow the emulator configuration used for evaluation: a 32 GiB
/// device with 4 KiB pages on 8 channels, 40/60 us flash read/write, 4.8/0.6
/// us cacheline read/write, a 256 MiB write log and a 2 MiB transaction log.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub capacity_bytes: u64,
    pub page_size: u64,
    pub channel_count: u64,
    pub flash_read_latency_ns: u64,
    pub flash_write_latency_ns: u64,
    pub cacheline_read_latency_ns: u64,
    pub cacheline_write_latency_ns: u64,
    pub log_region_bytes: u64,
    pub txlog_bytes: u64,
    pub write_buffer_bytes: u64,
    pub clean_threshold: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            capacity_bytes: 32 * GIB,
            page_size: 4096,
            channel_count: 8,
            flash_read_latency_ns: 40_000,
            flash_write_latency_ns: 60_000,
            cacheline_read_latency_ns: 4_800,
            cacheline_write_latency_ns: 600,
            log_region_bytes: 256 * MIB,
            txlog_bytes: 2 * MIB,
            write_buffer_bytes: 16 * MIB,
            clean_threshold: 0.85,
        }
    }
}

impl DeviceConfig {
    /// Desk-scale preset: same timing, 256 MiB of flash and a 4 MiB log.
    pub fn desk() -> Self {
        Self {
            capacity_bytes: 256 * MIB,
            log_region_bytes: 4 * MIB,
            txlog_bytes: 64 * KIB,
            write_buffer_bytes: MIB,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.page_size == 0 || !self.page_size.is_multiple_of(CACHELINE) {
            return bad("page_size must be a non-zero multiple of 64");
        }
        if self.page_size / CACHELINE > 256 {
            return bad("page_size must hold at most 256 cachelines");
        }
        if self.capacity_bytes == 0 || !self.capacity_bytes.is_multiple_of(self.page_size) {
            return bad("capacity_bytes must be a non-zero multiple of page_size");
        }
        if self.capacity_bytes / self.page_size >= u32::MAX as u64 / 2 {
            return bad("capacity exceeds 32-bit page addressing");
        }
        if self.log_region_bytes < self.page_size
            || !self.log_region_bytes.is_multiple_of(CACHELINE)
        {
            return bad("log_region_bytes must be a multiple of 64 and at least one page");
        }
        if self.log_region_bytes > u32::MAX as u64 {
            return bad("log_region_bytes must fit 32-bit log offsets");
        }
        if self.txlog_bytes < 4 || !self.txlog_bytes.is_multiple_of(4) {
            return bad("txlog_bytes must be a positive multiple of 4");
        }
        if self.write_buffer_bytes < self.page_size {
            return bad("write_buffer_bytes must hold at least one page");
        }
        if self.channel_count == 0 {
            return bad("channel_count must be positive");
        }
        if !(self.clean_threshold > 0.0 && self.clean_threshold <= 1.0) {
            return bad("clean_threshold must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn page_count(&self) -> u64 {
        self.capacity_bytes / self.page_size
    }

    /// Physical pages: logical pages plus 1/16 over-provisioning.
    pub fn physical_page_count(&self) -> u64 {
        self.page_count() + self.page_count() / 16
    }

    pub fn cachelines_per_page(&self) -> u64 {
        self.page_size / CACHELINE
    }

    pub fn log_slots(&self) -> u64 {
        self.log_region_bytes / CACHELINE
    }

    pub fn txlog_capacity(&self) -> u64 {
        self.txlog_bytes / 4
    }

    pub fn write_buffer_pages(&self) -> u64 {
        self.write_buffer_bytes / self.page_size
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let int = || -> Result<u64> {
            parse_size(value)
                .ok_or_else(|| Error::InvalidArgument(format!("{key}: bad value {value:?}")))
        };
        match key {
            "capacity_bytes" => self.capacity_bytes = int()?,
            "page_size" => self.page_size = int()?,
            "channel_count" => self.channel_count = int()?,
            "flash_read_latency_ns" => self.flash_read_latency_ns = int()?,
            "flash_write_latency_ns" => self.flash_write_latency_ns = int()?,
            "cacheline_read_latency_ns" => self.cacheline_read_latency_ns = int()?,
            "cacheline_write_latency_ns" => self.cacheline_write_latency_ns = int()?,
            "log_region_bytes" => self.log_region_bytes = int()?,
            "txlog_bytes" => self.txlog_bytes = int()?,
            "write_buffer_bytes" => self.write_buffer_bytes = int()?,
            "clean_threshold" => {
                self.clean_threshold = value
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{key}: bad value {value:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parses `4096`, `64K`, `16MiB`, `32G` and similar.
pub fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim().replace('_', "");
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num.parse().ok()?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => KIB,
        "m" | "mb" | "mib" => MIB,
        "g" | "gb" | "gib" => GIB,
        _ => return None,
    };
    n.checked_mul(mult)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_emulator_table() {
        let c = DeviceConfig::default();
        assert_eq!(c.flash_read_latency_ns, 40_000);
        assert_eq!(c.flash_write_latency_ns, 60_000);
        assert_eq!(c.cacheline_read_latency_ns, 4_800);
        assert_eq!(c.cacheline_write_latency_ns, 600);
        assert_eq!(c.channel_count, 8);
        assert_eq!(c.page_count(), 8_388_608);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut c = DeviceConfig::desk();
        c.page_size = 100;
        assert!(c.validate().is_err());
        let mut c = DeviceConfig::desk();
        c.clean_threshold = 0.0;
        assert!(c.validate().is_err());
        let mut c = DeviceConfig::desk();
        c.clean_threshold = 1.0;
        assert!(c.validate().is_ok());
        let mut c = DeviceConfig::desk();
        c.capacity_bytes += 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn size_suffixes() {
        assert_eq!(parse_size("64K"), Some(65536));
        assert_eq!(parse_size("16MiB"), Some(16 * MIB));
        assert_eq!(parse_size("32G"), Some(32 * GIB));
        assert_eq!(parse_size("1_000"), Some(1000));
        assert_eq!(parse_size("x"), None);
    }
}
