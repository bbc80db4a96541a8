//! `bytefs-bench`: runs workloads, replays traces, injects crashes and
//! sweeps device parameters against the emulated device.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bytefs_core::fs::fsck;
use bytefs_core::harness::{
    self, crash, generate, CrashPoint, Profile, RunConfig, RunReport, SweepParam,
};
use bytefs_core::{FileSystem, Mode, Mssd};

#[derive(Parser)]
#[command(
    name = "bytefs-bench",
    version,
    about = "ByteFS workload and crash harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// block_only, dual, dual_log, full, or `all`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Write the machine-readable report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate and run a workload from a fresh file system.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a text trace from a fresh file system.
    Replay {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Crash the device during a workload, recover and check the result.
    Crash {
        #[command(flatten)]
        common: Common,
        /// Crash after this many mutating device commands; random if absent.
        #[arg(long)]
        crash_at: Option<u64>,
        /// Number of random crash points to test.
        #[arg(long, default_value_t = 1)]
        points: usize,
        /// Save the crash image (before recovery) here.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Run the workload once per parameter value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// flash_latency, log_region_bytes or cacheline_latency.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values; sizes accept K/M/G.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check a saved device image for file-system inconsistencies.
    Fsck {
        #[arg(long)]
        image: PathBuf,
    },
    /// Run device and journal recovery on a saved image.
    Recover {
        #[arg(long)]
        image: PathBuf,
        /// Where to write the recovered image; defaults to overwriting it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = c.profile {
        let seed = cfg.workload.seed;
        cfg.workload = p.defaults();
        cfg.workload.seed = seed;
    }
    if let Some(s) = c.seed {
        cfg.workload.seed = s;
    }
    Ok(cfg)
}

fn modes(c: &Common, cfg: &RunConfig) -> Result<Vec<Mode>> {
    Ok(match c.mode.as_deref() {
        None => vec![cfg.mount.mode],
        Some("all") => Mode::ALL.to_vec(),
        Some(m) => vec![m.parse()?],
    })
}

fn emit(reports: &[RunReport], out: Option<&Path>) -> Result<()> {
    let mut kv = String::new();
    for r in reports {
        print!("{}", r.to_table());
        kv.push_str(&r.to_kv());
    }
    if let Some(p) = out {
        fs::write(p, kv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn per_mode(c: &Common, f: impl Fn(&RunConfig) -> bytefs_core::Result<RunReport>) -> Result<()> {
    let cfg = load_config(c)?;
    let mut reports = Vec::new();
    for m in modes(c, &cfg)? {
        let mut mc = cfg.clone();
        mc.mount.mode = m;
        reports.push(f(&mc)?);
    }
    emit(&reports, c.out.as_deref())
}

fn crash_cmd(
    c: &Common,
    crash_at: Option<u64>,
    points: usize,
    image: Option<&Path>,
) -> Result<bool> {
    let cfg = load_config(c)?;
    let w = generate(&cfg.workload)?;
    let mut all_passed = true;
    let mut kv = String::new();
    for m in modes(c, &cfg)? {
        let mut mc = cfg.clone();
        mc.mount.mode = m;
        let verdicts = if points > 1 {
            if crash_at.is_some() || image.is_some() {
                bail!("--crash-at and --image pick a single crash point; drop --points");
            }
            harness::crash_sweep(&mc, points, mc.workload.seed)?
        } else {
            let point = crash_at.map_or(CrashPoint::Random(mc.workload.seed), CrashPoint::At);
            let (v, img) = crash::crash_run_image(&mc, &w, point)?;
            if let Some(p) = image {
                fs::write(p, img).with_context(|| format!("writing {}", p.display()))?;
            }
            vec![v]
        };
        let passed = verdicts.iter().filter(|v| v.passed).count();
        println!(
            "{} [{m}]: {passed}/{} crash points recovered consistently",
            mc.workload.profile,
            verdicts.len()
        );
        for v in &verdicts {
            let total = v.total_cmds.map_or(String::from("?"), |t| t.to_string());
            let state = if v.passed { "pass" } else { "FAIL" };
            println!("  crash after command {}/{total}: {state}", v.crash_cmd);
            for p in v.problems.iter().take(8) {
                println!("    {p}");
            }
            kv.push_str(&format!("crash.{m}.{} {}\n", v.crash_cmd, state));
        }
        kv.push_str(&format!(
            "crash.{m}.passed {passed}\ncrash.{m}.points {}\n",
            verdicts.len()
        ));
        all_passed &= passed == verdicts.len();
    }
    if let Some(p) = &c.out {
        fs::write(p, kv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(all_passed)
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { common } => per_mode(&common, harness::run)?,
        Cmd::Replay { trace, common } => {
            let text = fs::read_to_string(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let label = trace.display().to_string();
            per_mode(&common, |cfg| harness::replay(&text, &label, cfg))?
        }
        Cmd::Crash {
            common,
            crash_at,
            points,
            image,
        } => return crash_cmd(&common, crash_at, points, image.as_deref()),
        Cmd::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = load_config(&common)?;
            let vals = values
                .iter()
                .map(|v| {
                    bytefs_core::config::parse_size(v).with_context(|| format!("bad value {v:?}"))
                })
                .collect::<Result<Vec<u64>>>()?;
            let mut reports = Vec::new();
            for m in modes(&common, &cfg)? {
                let mut mc = cfg.clone();
                mc.mount.mode = m;
                let rows = harness::sweep(param, &vals, &mc)?;
                println!("{param} sweep, {} [{m}]", mc.workload.profile);
                println!(
                    "  {:>14} {:>16} {:>14} {:>16} {:>16}",
                    "value", "elapsed ns", "ops/s", "host write B", "flash write B"
                );
                for (v, r) in &rows {
                    println!(
                        "  {v:>14} {:>16} {:>14.1} {:>16} {:>16}",
                        r.elapsed_ns,
                        r.ops_per_sec(),
                        r.traffic.host_to_ssd.total(),
                        r.traffic.flash_write.total()
                    );
                }
                reports.extend(rows.into_iter().map(|(_, r)| r));
            }
            if let Some(p) = &common.out {
                let kv: String = reports.iter().map(|r| r.to_kv()).collect();
                fs::write(p, kv).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Cmd::Fsck { image } => {
            let bytes = fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let dev = Mssd::load(&bytes)?;
            let problems = fsck(&dev)?;
            if problems.is_empty() {
                println!("{}: clean", image.display());
                return Ok(true);
            }
            for p in &problems {
                println!("{p}");
            }
            println!("{}: {} problems", image.display(), problems.len());
            return Ok(false);
        }
        Cmd::Recover { image, out } => {
            let bytes = fs::read(&image).with_context(|| format!("reading {}", image.display()))?;
            let dev = Arc::new(Mssd::load(&bytes)?);
            let r = FileSystem::recover(&dev)?;
            println!(
                "recovered: {} log entries scanned, {} discarded, {} flushed, {} pages written, {} journal records replayed",
                r.device.entries_scanned,
                r.device.entries_discarded,
                r.device.entries_flushed,
                r.device.pages_written,
                r.journal_replayed
            );
            let dest = out.unwrap_or(image);
            fs::write(&dest, dev.save()).with_context(|| format!("writing {}", dest.display()))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
