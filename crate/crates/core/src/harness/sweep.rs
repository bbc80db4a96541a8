//! One-parameter sweeps over the device model.

use std::fmt;
use std::str::FromStr;

use super::config::RunConfig;
use super::report::RunReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Flash page program latency, ns.
    FlashLatency,
    /// Write-log region size, bytes.
    LogRegionBytes,
    /// Cacheline write latency of the byte interface, ns.
    CachelineLatency,
}

impl SweepParam {
    pub const ALL: [SweepParam; 3] = [
        SweepParam::FlashLatency,
        SweepParam::LogRegionBytes,
        SweepParam::CachelineLatency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::FlashLatency => "flash_latency",
            SweepParam::LogRegionBytes => "log_region_bytes",
            SweepParam::CachelineLatency => "cacheline_latency",
        }
    }

    fn device_key(self) -> &'static str {
        match self {
            SweepParam::FlashLatency => "flash_write_latency_ns",
            SweepParam::LogRegionBytes => "log_region_bytes",
            SweepParam::CachelineLatency => "cacheline_write_latency_ns",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep parameter {s:?}")))
    }
}

/// Runs the configured workload once per value.
pub fn sweep(param: SweepParam, values: &[u64], cfg: &RunConfig) -> Result<Vec<(u64, RunReport)>> {
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.device.set(param.device_key(), &v.to_string())?;
            let mut r = super::run(&c)?;
            r.label = format!("{}={v}", param.name());
            Ok((v, r))
        })
        .collect()
}
