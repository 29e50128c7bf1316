//! Run configuration: a TOML file with one section per component.
//!
//! Every key has a default, so an empty file is the baseline system: two
//! 16 GB/s HBM2 pseudo-channels caching 128 MiB in front of 3 GiB of DDR4,
//! a 128/32/64-entry ORB/CRB/WB and a 20 ns manager round trip.
//!
//! Keys can be overridden from the command line (`--set traffic.read_pct=0.5`)
//! or the environment (`DCSIM_TRAFFIC__READ_PCT=0.5`). Bare keys that name a
//! unique field, such as `far_link_round_trip_ns` or `seed`, are accepted
//! wherever a dotted key is.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{burst_time, DeviceConfig, DeviceKind};
use crate::error::{ConfigError, SimError};
use crate::link::LinkConfig;
use crate::manager::ManagerConfig;
use crate::policy::PolicyKind;
use crate::telemetry::ReportFormat;
use crate::traffic::{Pattern, SyntheticConfig};
use crate::types::{CacheGeometry, Tick, LINE_BYTES};

pub const ENV_PREFIX: &str = "DCSIM_";

const MIB: u64 = 1 << 20;
const GIB: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub policy: PolicyKind,
    pub engine: EngineSection,
    pub manager: ManagerSection,
    pub near: DeviceSection,
    pub far: DeviceSection,
    pub link: LinkSection,
    pub traffic: TrafficSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "run".into(),
            policy: PolicyKind::Baseline,
            engine: EngineSection::default(),
            manager: ManagerSection::default(),
            near: DeviceSection::near(),
            far: DeviceSection::far(),
            link: LinkSection::default(),
            traffic: TrafficSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub seed: u64,
    pub duration_ns: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            seed: 1,
            duration_ns: 1_000_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerSection {
    pub orb_entries: usize,
    pub crb_entries: usize,
    pub wb_entries: usize,
    pub frontend_ns: f64,
    pub backend_ns: f64,
}

impl Default for ManagerSection {
    fn default() -> Self {
        ManagerSection {
            orb_entries: 128,
            crb_entries: 32,
            wb_entries: 64,
            frontend_ns: 10.0,
            backend_ns: 10.0,
        }
    }
}

/// One memory tier. Timing fields left unset take the preset for `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub kind: DeviceKind,
    pub channels: u32,
    /// Total across channels.
    pub capacity_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_gbps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_banks: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows_per_bank: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_burst_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rcd_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rp_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_cl_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_cwl_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_wr_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_rtw_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_wtr_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub read_buffer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub write_buffer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wr_high_watermark: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wr_low_watermark: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_read_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra_write_ns: Option<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection::far()
    }
}

impl DeviceSection {
    fn bare(kind: DeviceKind, channels: u32, capacity_bytes: u64) -> Self {
        DeviceSection {
            kind,
            channels,
            capacity_bytes,
            peak_gbps: None,
            num_banks: None,
            row_bytes: None,
            rows_per_bank: None,
            t_burst_ns: None,
            t_rcd_ns: None,
            t_rp_ns: None,
            t_cl_ns: None,
            t_cwl_ns: None,
            t_wr_ns: None,
            t_rtw_ns: None,
            t_wtr_ns: None,
            read_buffer: None,
            write_buffer: None,
            wr_high_watermark: None,
            wr_low_watermark: None,
            extra_read_ns: None,
            extra_write_ns: None,
        }
    }

    pub fn near() -> Self {
        DeviceSection::bare(DeviceKind::Hbm2, 2, 128 * MIB)
    }

    pub fn far() -> Self {
        DeviceSection::bare(DeviceKind::Ddr4, 1, 3 * GIB)
    }

    /// Device parameters for one channel of this tier.
    pub fn resolve(&self) -> DeviceConfig {
        let per_channel = self.capacity_bytes / self.channels.max(1) as u64;
        let mut d = DeviceConfig::preset(self.kind, per_channel);
        let ns = Tick::from_ns_f64;
        if let Some(v) = self.peak_gbps {
            d.peak_gbps = v;
            d.t_burst = burst_time(v);
        }
        if let Some(v) = self.num_banks {
            d.num_banks = v;
        }
        if let Some(v) = self.row_bytes {
            d.row_bytes = v;
        }
        d.rows_per_bank = self
            .rows_per_bank
            .unwrap_or_else(|| d.default_rows_per_bank());
        let set = |slot: &mut Tick, v: Option<f64>| {
            if let Some(v) = v {
                *slot = ns(v);
            }
        };
        set(&mut d.t_burst, self.t_burst_ns);
        set(&mut d.t_rcd, self.t_rcd_ns);
        set(&mut d.t_rp, self.t_rp_ns);
        set(&mut d.t_cl, self.t_cl_ns);
        set(&mut d.t_cwl, self.t_cwl_ns);
        set(&mut d.t_wr, self.t_wr_ns);
        set(&mut d.t_rtw, self.t_rtw_ns);
        set(&mut d.t_wtr, self.t_wtr_ns);
        set(&mut d.extra_read_lat, self.extra_read_ns);
        set(&mut d.extra_write_lat, self.extra_write_ns);
        if let Some(v) = self.read_buffer {
            d.read_buffer = v;
        }
        if let Some(v) = self.write_buffer {
            d.write_buffer = v;
        }
        if let Some(v) = self.wr_high_watermark {
            d.wr_high_watermark = v;
        }
        if let Some(v) = self.wr_low_watermark {
            d.wr_low_watermark = v;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub far_link_round_trip_ns: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            far_link_round_trip_ns: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    Synthetic,
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub mode: TrafficMode,
    pub pattern: Pattern,
    pub read_pct: f64,
    pub miss_ratio: f64,
    pub dirty_victim_pct: f64,
    /// 0 injects whenever the manager accepts.
    pub inter_arrival_ns: f64,
    pub resident_fraction: f64,
    pub dirty_fraction: f64,
    pub stationary: bool,
    pub footprint_start: u64,
    /// 0 means "from footprint_start to the end of far memory".
    pub footprint_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_demands: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            mode: TrafficMode::Synthetic,
            pattern: Pattern::Random,
            read_pct: 1.0,
            miss_ratio: 0.0,
            dirty_victim_pct: 0.0,
            inter_arrival_ns: 0.0,
            resident_fraction: 1.0,
            dirty_fraction: 0.5,
            stationary: true,
            footprint_start: 0,
            footprint_bytes: 0,
            max_demands: None,
            trace_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    #[default]
    Csv,
    Json,
}

impl From<FormatName> for ReportFormat {
    fn from(f: FormatName) -> Self {
        match f {
            FormatName::Csv => ReportFormat::Csv,
            FormatName::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: FormatName,
}

fn positive_ns(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{v} must be positive")))
    }
}

fn non_negative_ns(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            field,
            format!("{v} must be non-negative"),
        ))
    }
}

impl RunConfig {
    pub fn duration(&self) -> Tick {
        Tick::from_ns_f64(self.engine.duration_ns)
    }

    pub fn geometry(&self) -> Result<CacheGeometry, ConfigError> {
        CacheGeometry::new(self.near.capacity_bytes)
    }

    pub fn manager_config(&self) -> ManagerConfig {
        ManagerConfig {
            orb_entries: self.manager.orb_entries,
            crb_entries: self.manager.crb_entries,
            wb_entries: self.manager.wb_entries,
            frontend_lat: Tick::from_ns_f64(self.manager.frontend_ns),
            backend_lat: Tick::from_ns_f64(self.manager.backend_ns),
        }
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            round_trip: Tick::from_ns_f64(self.link.far_link_round_trip_ns),
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        let t = &self.traffic;
        let footprint_bytes = if t.footprint_bytes == 0 {
            self.far.capacity_bytes.saturating_sub(t.footprint_start)
        } else {
            t.footprint_bytes
        };
        SyntheticConfig {
            pattern: t.pattern,
            read_pct: t.read_pct,
            target_miss_ratio: t.miss_ratio,
            dirty_victim_pct: t.dirty_victim_pct,
            inter_arrival: Tick::from_ns_f64(t.inter_arrival_ns),
            footprint_start: t.footprint_start,
            footprint_bytes,
            resident_fraction: t.resident_fraction,
            dirty_fraction: t.dirty_fraction,
            stationary: t.stationary,
            max_demands: t.max_demands,
        }
    }

    /// Checks everything that can be checked before building the system.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_system()?;
        self.validate_traffic()
    }

    /// Everything except the traffic section.
    pub fn validate_system(&self) -> Result<(), ConfigError> {
        positive_ns("engine.duration_ns", self.engine.duration_ns)?;
        let m = &self.manager;
        if m.orb_entries == 0 {
            return Err(ConfigError::invalid(
                "manager.orb_entries",
                "must be positive",
            ));
        }
        if m.crb_entries == 0 {
            return Err(ConfigError::invalid(
                "manager.crb_entries",
                "must be positive",
            ));
        }
        if m.wb_entries == 0 {
            return Err(ConfigError::invalid(
                "manager.wb_entries",
                "must be positive: the write-back cache needs a WB buffer",
            ));
        }
        non_negative_ns("manager.frontend_ns", m.frontend_ns)?;
        non_negative_ns("manager.backend_ns", m.backend_ns)?;
        non_negative_ns(
            "link.far_link_round_trip_ns",
            self.link.far_link_round_trip_ns,
        )?;

        let geom = self.geometry()?;
        if self.near.channels == 0 || geom.num_lines % self.near.channels as u64 != 0 {
            return Err(ConfigError::invalid(
                "near.channels",
                format!(
                    "{} does not divide {} cache lines",
                    self.near.channels, geom.num_lines
                ),
            ));
        }
        if self.far.channels != 1 {
            return Err(ConfigError::invalid(
                "far.channels",
                "only one far channel is modeled",
            ));
        }
        if self.far.capacity_bytes == 0 || !self.far.capacity_bytes.is_multiple_of(LINE_BYTES) {
            return Err(ConfigError::invalid(
                "far.capacity_bytes",
                "must be a positive multiple of 64",
            ));
        }
        if self.near.capacity_bytes >= self.far.capacity_bytes {
            return Err(ConfigError::invalid(
                "near.capacity_bytes",
                format!(
                    "cache ({}) must be smaller than far memory ({})",
                    self.near.capacity_bytes, self.far.capacity_bytes
                ),
            ));
        }
        self.near.resolve().validate("near")?;
        self.far.resolve().validate("far")
    }

    pub fn validate_traffic(&self) -> Result<(), ConfigError> {
        let geom = self.geometry()?;
        match self.traffic.mode {
            TrafficMode::Synthetic => {
                non_negative_ns("traffic.inter_arrival_ns", self.traffic.inter_arrival_ns)?;
                self.synthetic_config()
                    .validate(&geom, self.far.capacity_bytes)?;
            }
            TrafficMode::Trace => {
                let Some(p) = &self.traffic.trace_path else {
                    return Err(ConfigError::invalid(
                        "traffic.trace_path",
                        "trace mode needs a trace_path",
                    ));
                };
                if !p.is_file() {
                    return Err(ConfigError::invalid(
                        "traffic.trace_path",
                        format!("trace file {} does not exist", p.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration as JSON, device presets expanded.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["near_device"] = serde_json::to_value(self.near.resolve()).expect("device serializes");
        v["far_device"] = serde_json::to_value(self.far.resolve()).expect("device serializes");
        v
    }
}

/// A config document that overrides can be applied to before it is turned
/// into a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct ConfigDoc {
    root: toml::Table,
    base_dir: Option<PathBuf>,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        ConfigDoc {
            root: toml::Table::new(),
            base_dir: None,
        }
    }
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let root: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            ConfigError::invalid("config", e.message().to_string())
        })?;
        Ok(ConfigDoc {
            root,
            base_dir: None,
        })
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory. The run id defaults to the file stem.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut doc = ConfigDoc::parse(&text).map_err(|e| {
            ConfigError::invalid(format!("{}: {}", path.display(), e.field), e.reason)
        })?;
        doc.base_dir = path.parent().map(Path::to_path_buf);
        if !doc.root.contains_key("run_id") {
            if let Some(stem) = path.file_stem() {
                doc.root.insert(
                    "run_id".into(),
                    toml::Value::String(stem.to_string_lossy().into_owned()),
                );
            }
        }
        Ok(doc)
    }

    /// Sets `key` (dotted or a unique bare key) to `raw`, which is read as
    /// a TOML value when it parses as one and as a string otherwise.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let path = resolve_key(key)?;
        let value = parse_scalar(raw);
        let (last, parents) = path.split_last().expect("non-empty key");
        let mut table = &mut self.root;
        for p in parents {
            let entry = table
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| ConfigError::invalid(key, format!("`{p}` is not a section")))?;
        }
        table.insert(last.clone(), value);
        Ok(())
    }

    /// Applies `DCSIM_SECTION__KEY=value` variables from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|rest| (rest.to_ascii_lowercase().replace("__", "."), v))
            })
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        // Sections take their defaults from the full default config, so a
        // partial [near] table keeps the near-tier defaults.
        let mut base = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        merge(&mut base, &self.root);
        let value = toml::Value::Table(base);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::invalid(
                if field == "." {
                    "config".to_string()
                } else {
                    field
                },
                e.into_inner().to_string(),
            )
        })?;
        if let (Some(dir), Some(p)) = (&self.base_dir, cfg.traffic.trace_path.as_mut()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Builds and validates.
    pub fn finish(&self) -> Result<RunConfig, ConfigError> {
        let cfg = self.build()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let raw = raw.trim();
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Every settable key, dotted.
fn known_keys() -> Vec<Vec<String>> {
    let mut cfg = RunConfig::default();
    // fill the optional fields so they appear in the serialized tree
    for d in [&mut cfg.near, &mut cfg.far] {
        d.peak_gbps = Some(0.0);
        d.num_banks = Some(0);
        d.row_bytes = Some(0);
        d.rows_per_bank = Some(0);
        d.t_burst_ns = Some(0.0);
        d.t_rcd_ns = Some(0.0);
        d.t_rp_ns = Some(0.0);
        d.t_cl_ns = Some(0.0);
        d.t_cwl_ns = Some(0.0);
        d.t_wr_ns = Some(0.0);
        d.t_rtw_ns = Some(0.0);
        d.t_wtr_ns = Some(0.0);
        d.read_buffer = Some(0);
        d.write_buffer = Some(0);
        d.wr_high_watermark = Some(0.0);
        d.wr_low_watermark = Some(0.0);
        d.extra_read_ns = Some(0.0);
        d.extra_write_ns = Some(0.0);
    }
    cfg.traffic.max_demands = Some(0);
    cfg.traffic.trace_path = Some(PathBuf::new());
    cfg.output.path = Some(PathBuf::new());
    let value = toml::Value::try_from(&cfg).expect("config serializes");
    let mut out = Vec::new();
    fn walk(prefix: &mut Vec<String>, v: &toml::Value, out: &mut Vec<Vec<String>>) {
        match v {
            toml::Value::Table(t) => {
                for (k, child) in t {
                    prefix.push(k.clone());
                    walk(prefix, child, out);
                    prefix.pop();
                }
            }
            _ => out.push(prefix.clone()),
        }
    }
    walk(&mut Vec::new(), &value, &mut out);
    out
}

/// Maps a dotted or bare key to its full path. Unknown keys are errors.
pub fn resolve_key(key: &str) -> Result<Vec<String>, ConfigError> {
    let keys = known_keys();
    let parts: Vec<String> = key.split('.').map(str::to_string).collect();
    if keys.contains(&parts) {
        return Ok(parts);
    }
    if parts.len() == 1 {
        let matches: Vec<&Vec<String>> = keys
            .iter()
            .filter(|k| k.last() == Some(&parts[0]))
            .collect();
        match matches.len() {
            1 => return Ok(matches[0].clone()),
            0 => {}
            _ => {
                let options: Vec<String> = matches.iter().map(|m| m.join(".")).collect();
                return Err(ConfigError::invalid(
                    key,
                    format!("ambiguous key, use one of {}", options.join(", ")),
                ));
            }
        }
    }
    Err(ConfigError::invalid(key, "unknown config key"))
}
