//! Run settings assembled in three layers: built-in defaults, then an
//! optional configuration file, then command-line flags.
//!
//! The file format is flat `key = value` lines grouped under `[sections]`.
//! `[scenario]` and `[engine]` configure a single run; the dimension
//! sections `[channels]`, `[tunings]`, `[loads]`, `[shares]` and `[seeds]`
//! replace individual axes of the sweep grid. Defining any dimension
//! section switches the run into sweep mode, as does `--sweep`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ponsim::{
    BitsPerSec, LoadAccounting, ScenarioConfig, SortPolicy, SweepGrid, TimeNs, VirtualTimeline,
};

use crate::RunArgs;

/// Everything `run` needs, after all overrides are applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub channels: (u32, BitsPerSec),
    pub tuning_ns: i64,
    pub load_pct: f64,
    pub share_pct: f64,
    pub frames: u32,
    pub seed: u64,
    pub sweep: bool,
    pub sweep_channels: Vec<(u32, BitsPerSec)>,
    pub sweep_tunings: Vec<i64>,
    pub sweep_loads: Vec<f64>,
    pub sweep_shares: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    pub timeline: VirtualTimeline,
    pub accounting: LoadAccounting,
    pub sort: SortPolicy,
    pub onus_per_vno: Option<u32>,
}

impl Default for Settings {
    fn default() -> Self {
        let full = SweepGrid::full_evaluation(ScenarioConfig::default());
        Settings {
            channels: (8, 25_000_000_000),
            tuning_ns: 0,
            load_pct: 80.0,
            share_pct: 80.0,
            frames: 5000,
            seed: 1,
            sweep: false,
            sweep_channels: full.channel_configs,
            sweep_tunings: full.tuning_times.iter().map(|t| t.ns()).collect(),
            sweep_loads: full.loads.iter().map(|l| l * 100.0).collect(),
            sweep_shares: full.sla_shares.iter().map(|s| s * 100.0).collect(),
            sweep_seeds: full.seeds,
            timeline: VirtualTimeline::FullCapacity,
            accounting: LoadAccounting::Occupied,
            sort: SortPolicy::BreachMargin,
            onus_per_vno: None,
        }
    }
}

impl Settings {
    /// Layers the config file (if any) and the flags over the defaults.
    pub fn resolve(args: &RunArgs) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &args.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            s.apply_file(&text)
                .with_context(|| format!("config {}", path.display()))?;
        }
        if let Some(spec) = &args.channels {
            s.channels = parse_channels(spec)?;
        }
        if let Some(t) = args.tuning {
            s.tuning_ns = t;
        }
        if let Some(l) = args.load {
            s.load_pct = l;
        }
        if let Some(p) = args.sla_share {
            s.share_pct = p;
        }
        if let Some(f) = args.frames {
            s.frames = f;
        }
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        if args.sweep.is_some() {
            s.sweep = true;
        }
        if let Some(spec) = &args.seeds {
            s.sweep_seeds = parse_seeds(spec)?;
        }
        Ok(s)
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        for (section, entries) in parse_sections(text)? {
            match section.as_str() {
                "scenario" => {
                    for (key, value) in entries {
                        match key.as_str() {
                            "channels" => self.channels = parse_channels(&value)?,
                            "tuning" => self.tuning_ns = parse_num(&value, "tuning")?,
                            "load" => self.load_pct = parse_num(&value, "load")?,
                            "sla_share" => self.share_pct = parse_num(&value, "sla_share")?,
                            "frames" => self.frames = parse_num(&value, "frames")?,
                            "seed" => self.seed = parse_num(&value, "seed")?,
                            _ => bail!("unknown key {key:?} in [scenario]"),
                        }
                    }
                }
                "engine" => {
                    for (key, value) in entries {
                        match key.as_str() {
                            "timeline" => {
                                self.timeline = match value.as_str() {
                                    "full-capacity" => VirtualTimeline::FullCapacity,
                                    "single-channel" => VirtualTimeline::SingleChannel,
                                    other => bail!("unknown timeline {other:?}"),
                                }
                            }
                            "accounting" => {
                                self.accounting = match value.as_str() {
                                    "occupied" => LoadAccounting::Occupied,
                                    "payload" => LoadAccounting::Payload,
                                    other => bail!("unknown accounting {other:?}"),
                                }
                            }
                            "sort" => {
                                self.sort = match value.as_str() {
                                    "breach-margin" => SortPolicy::BreachMargin,
                                    "literal-rate-ascending" => SortPolicy::RateAscending,
                                    other => bail!("unknown sort policy {other:?}"),
                                }
                            }
                            "onus_per_vno" => {
                                self.onus_per_vno = Some(parse_num(&value, "onus_per_vno")?)
                            }
                            _ => bail!("unknown key {key:?} in [engine]"),
                        }
                    }
                }
                "channels" => {
                    self.sweep_channels = values_of(&section, entries)?
                        .iter()
                        .map(|v| parse_channels(v))
                        .collect::<Result<_>>()?;
                    self.sweep = true;
                }
                "tunings" => {
                    self.sweep_tunings = parse_list(&values_of(&section, entries)?, "tunings")?;
                    self.sweep = true;
                }
                "loads" => {
                    self.sweep_loads = parse_list(&values_of(&section, entries)?, "loads")?;
                    self.sweep = true;
                }
                "shares" => {
                    self.sweep_shares = parse_list(&values_of(&section, entries)?, "shares")?;
                    self.sweep = true;
                }
                "seeds" => {
                    let values = values_of(&section, entries)?;
                    let joined = values.join(",");
                    self.sweep_seeds = parse_seeds(&joined)?;
                    self.sweep = true;
                }
                other => bail!("unknown section [{other}]"),
            }
        }
        Ok(())
    }

    /// Scenario for a single run, before seed mixing.
    pub fn scenario(&self) -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            channels: self.channels.0,
            channel_rate: self.channels.1,
            tuning_time: TimeNs(self.tuning_ns),
            load: self.load_pct / 100.0,
            sla_share: self.share_pct / 100.0,
            frames: self.frames,
            timeline: self.timeline,
            accounting: self.accounting,
            sort_policy: self.sort,
            ..ScenarioConfig::default()
        };
        if let Some(n) = self.onus_per_vno {
            cfg.onus_per_vno = n;
        }
        cfg
    }

    /// Sweep grid over the configured dimensions.
    pub fn grid(&self) -> SweepGrid {
        let mut base = self.scenario();
        base.seed = 0; // per-point seeds are mixed in by the grid
        SweepGrid {
            channel_configs: self.sweep_channels.clone(),
            tuning_times: self.sweep_tunings.iter().map(|&t| TimeNs(t)).collect(),
            loads: self.sweep_loads.iter().map(|l| l / 100.0).collect(),
            sla_shares: self.sweep_shares.iter().map(|s| s / 100.0).collect(),
            seeds: self.sweep_seeds.clone(),
            base,
        }
    }
}

/// `NxR` with the per-channel rate R in Gbit/s, e.g. `8x25`.
pub fn parse_channels(spec: &str) -> Result<(u32, BitsPerSec)> {
    let parse = || -> Option<(u32, BitsPerSec)> {
        let (n, r) = spec.split_once(['x', 'X'])?;
        let n: u32 = n.trim().parse().ok()?;
        let r: u64 = r.trim().parse().ok()?;
        (n > 0 && r > 0).then_some((n, r * 1_000_000_000))
    };
    parse().with_context(|| format!("invalid channel layout {spec:?}, expected NxR like 8x25"))
}

/// Inclusive `A..B` range or a comma list of seeds.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = parse_num(a.trim(), "seed range start")?;
        let b: u64 = parse_num(b.trim(), "seed range end")?;
        if a > b {
            bail!("empty seed range {spec:?}");
        }
        return Ok((a..=b).collect());
    }
    let seeds = spec
        .split(',')
        .map(|s| parse_num(s.trim(), "seed"))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        bail!("no seeds in {spec:?}");
    }
    Ok(seeds)
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .ok()
        .with_context(|| format!("invalid {what}: {value:?}"))
}

fn parse_list<T: std::str::FromStr>(values: &[String], what: &str) -> Result<Vec<T>> {
    if values.is_empty() {
        bail!("section [{what}] lists no values");
    }
    values.iter().map(|v| parse_num(v, what)).collect()
}

/// Dimension sections hold a single `values = a, b, c` entry.
fn values_of(section: &str, entries: Vec<(String, String)>) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (key, value) in entries {
        if key != "values" {
            bail!("unknown key {key:?} in [{section}] (expected `values`)");
        }
        out.extend(value.split(',').map(|v| v.trim().to_string()));
    }
    if out.is_empty() {
        bail!("section [{section}] lists no values");
    }
    Ok(out)
}

/// Splits the file into sections of `key = value` entries, preserving entry
/// order within each section. Repeated sections merge.
fn parse_sections(text: &str) -> Result<BTreeMap<String, Vec<(String, String)>>> {
    let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got {raw:?}", lineno + 1);
        };
        let Some(section) = &current else {
            bail!("line {}: entry before any [section]", lineno + 1);
        };
        sections
            .get_mut(section)
            .unwrap()
            .push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(sections)
}

/// Resolves an output path: relative paths land under PONSIM_OUT_DIR when
/// that variable is set.
pub fn resolve_out(path: &Path) -> std::path::PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os("PONSIM_OUT_DIR") {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}
