//! Run configuration, checkpoints, diagnostic series and run manifests.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{energy_budget, s_norm, w_norm, EnergyBudget};
use crate::error::{Error, Result};
use crate::experiments::{NudgingConfig, ParamName};
use crate::model::{Model, ModelConfig};
use crate::par::Exec;
use crate::params::{PhysicalParams, ShortwaveConfig};
use crate::spectral::{Fields, Resolution, State};
use crate::timestepper::{RunState, Scheme, SchemeConfig, Sink};
use crate::tlm::LyapunovConfig;

pub const CHECKPOINT_VERSION: &str = "1";
pub const SERIES_VERSION: &str = "1";
pub const MANIFEST_VERSION: &str = "1";

/// Annotated parameter file holding every default.
pub const DEFAULT_PARAMS: &str = include_str!("../data/default_params.toml");

mod resolution_str {
    use super::Resolution;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Resolution, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Resolution, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// Discretization, stepping and initial-condition controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    #[serde(with = "resolution_str")]
    pub resolution: Resolution,
    pub grid_factor: f64,
    /// Bytes.
    pub tensor_cap: usize,
    pub scheme: Scheme,
    /// s.
    pub dt: f64,
    /// s.
    pub t_end: f64,
    /// Steps between output records.
    pub output_every: u64,
    pub overflow_cap: f64,
    pub exec: Exec,
    pub seed: u64,
    /// Random initial streamfunction amplitude (nondimensional).
    pub init_psi_amp: f64,
    /// Random initial ocean temperature amplitude, K.
    pub init_theta_amp: f64,
    /// Start with a motionless ocean layer.
    pub ocean_at_rest: bool,
    /// Integration applied to the initial state before experiments, s.
    pub spinup: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let m = ModelConfig::default();
        let s = SchemeConfig::default();
        Self {
            resolution: m.resolution,
            grid_factor: m.grid_factor,
            tensor_cap: m.tensor_cap,
            scheme: s.scheme,
            dt: s.dt,
            t_end: 100.0 * 86400.0,
            output_every: s.output_every,
            overflow_cap: s.overflow_cap,
            exec: Exec::Parallel,
            seed: 1,
            init_psi_amp: 0.01,
            init_theta_amp: 0.1,
            ocean_at_rest: true,
            spinup: 0.0,
        }
    }
}

/// Synchronization experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub n_obs: usize,
    /// s^-1.
    pub gamma_nudge: f64,
    pub observe_temperature: bool,
    /// s.
    pub horizon: f64,
    /// The slave starts from the master state this much later, s.
    pub slave_offset: f64,
    /// Search the smallest sufficient n_obs before the main run.
    pub bisect: bool,
    /// Screening run length used by the search, s.
    pub screen_horizon: f64,
    /// Streamfunction differences must fall below this fraction during screening.
    pub screen_tolerance: f64,
    /// Also run the un-nudged control.
    pub control: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            n_obs: 64,
            gamma_nudge: 1e-4,
            observe_temperature: false,
            horizon: 3700.0 * 86400.0,
            slave_offset: 300.0 * 86400.0,
            bisect: false,
            screen_horizon: 150.0 * 86400.0,
            screen_tolerance: 1e-3,
            control: true,
        }
    }
}

impl SyncConfig {
    pub fn nudging(&self) -> NudgingConfig {
        NudgingConfig {
            n_obs: self.n_obs,
            gamma_nudge: self.gamma_nudge,
            observe_temperature: self.observe_temperature,
        }
    }
}

/// Initial-condition continuity experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuityConfig {
    /// Perturbation norm relative to the W-norm of the base state.
    pub relative_size: f64,
    /// s.
    pub horizon: f64,
    pub with_tlm: bool,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self { relative_size: 1e-7, horizon: 30.0 * 86400.0, with_tlm: true }
    }
}

/// Parameter-continuity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSweepConfig {
    pub param: ParamName,
    pub deltas: Vec<f64>,
    /// s.
    pub horizon: f64,
}

impl Default for ParamSweepConfig {
    fn default() -> Self {
        Self { param: ParamName::EpsA, deltas: vec![1e-4, 2e-4, 4e-4, 8e-4], horizon: 8.0 * 86400.0 }
    }
}

/// Galerkin self-convergence ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub ladder: Vec<String>,
    /// s.
    pub horizon: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self { ladder: ["4x4", "6x6", "8x8", "12x12"].map(String::from).to_vec(), horizon: 2.0 * 86400.0 }
    }
}

impl ConvergeConfig {
    pub fn resolutions(&self) -> Result<Vec<Resolution>> {
        self.ladder.iter().map(|s| s.parse()).collect()
    }
}

/// Everything a run reads from the parameter file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub shortwave: ShortwaveConfig,
    pub numerics: Numerics,
    pub tlm: LyapunovConfig,
    pub sync: SyncConfig,
    pub continuity: ContinuityConfig,
    pub param_sweep: ParamSweepConfig,
    pub converge: ConvergeConfig,
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            params: self.physical.clone(),
            shortwave: self.shortwave.clone(),
            resolution: self.numerics.resolution,
            grid_factor: self.numerics.grid_factor,
            tensor_cap: self.numerics.tensor_cap,
            exec: self.numerics.exec,
            ..Default::default()
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let n = &self.numerics;
        SchemeConfig {
            dt: n.dt,
            scheme: n.scheme,
            t_end: n.t_end,
            output_every: n.output_every,
            overflow_cap: n.overflow_cap,
        }
    }

    /// Seeded initial state of `model`.
    pub fn initial_state(&self, model: &Model) -> State {
        let n = &self.numerics;
        let mut s = model.random_state(n.seed, n.init_psi_amp, n.init_theta_amp);
        if n.ocean_at_rest {
            s.fields.psi_o_mut().fill(0.0);
        }
        s
    }

    /// Canonical TOML text of this configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { path: String::new(), message: e.to_string() })
    }
}

/// Parses a parameter file; errors carry the dotted path of the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| Error::Config { path: String::new(), message: one_line(&e.to_string()) })?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path, message: one_line(&e.into_inner().to_string()) }
    })?;
    cfg.physical.validate()?;
    cfg.shortwave.validate()?;
    Ok(cfg)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Hash of the physical and shortwave parameters of a model.
pub fn param_hash(model: &Model) -> String {
    let text = serde_json::to_string(&(&model.params, &model.shortwave)).expect("parameters serialize");
    sha256_hex(text.as_bytes())
}

/// Checkpoint header plus the restart state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub resolution: Resolution,
    pub param_hash: String,
    /// s, the step the state was produced with.
    pub dt: f64,
    pub run: RunState,
}

impl Checkpoint {
    pub fn new(model: &Model, dt: f64, run: &RunState) -> Self {
        Self { resolution: model.resolution(), param_hash: param_hash(model), dt, run: run.clone() }
    }

    /// Rejects checkpoints written for another basis or parameter set.
    pub fn check_compatible(&self, model: &Model) -> Result<()> {
        if self.resolution != model.resolution() {
            return Err(Error::BasisMismatch(format!(
                "checkpoint resolution {} vs model {}",
                self.resolution,
                model.resolution()
            )));
        }
        if self.param_hash != param_hash(model) {
            return Err(Error::Format("checkpoint parameter hash differs from the model's".into()));
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Text checkpoint; every float carries 17 significant digits.
pub fn checkpoint_to_string(c: &Checkpoint) -> String {
    let mut s = String::new();
    let st = &c.run.state;
    let _ = writeln!(s, "# maooam checkpoint");
    let _ = writeln!(s, "format_version = {CHECKPOINT_VERSION}");
    let _ = writeln!(s, "resolution = {}", c.resolution);
    let _ = writeln!(s, "param_hash = {}", c.param_hash);
    let _ = writeln!(s, "time = {}", num(st.time));
    let _ = writeln!(s, "steps = {}", c.run.steps);
    let _ = writeln!(s, "dt = {}", num(c.dt));
    let _ = writeln!(s, "n_atm = {}", st.fields.n_atm);
    let _ = writeln!(s, "n_ocn = {}", st.fields.n_ocn);
    let _ = writeln!(s, "[state]");
    for v in &st.fields.data {
        let _ = writeln!(s, "{}", num(*v));
    }
    let _ = writeln!(s, "[history]");
    match &c.run.history {
        None => {
            let _ = writeln!(s, "none");
        }
        Some(h) => {
            for v in h {
                let _ = writeln!(s, "{}", num(*v));
            }
        }
    }
    let _ = writeln!(s, "[end]");
    s
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut header = std::collections::HashMap::new();
    let mut sections: Vec<(&str, Vec<&str>)> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if line.starts_with('[') {
            sections.push((line, Vec::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(line);
        } else if let Some((k, v)) = line.split_once('=') {
            header.insert(k.trim(), v.trim());
        } else {
            return Err(Error::Format(format!("unexpected header line `{line}`")));
        }
    }
    let field = |k: &str| header.get(k).copied().ok_or_else(|| Error::Format(format!("missing header field `{k}`")));
    let version = field("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::FormatVersion { found: version.into(), expected: CHECKPOINT_VERSION.into() });
    }
    let parse_f = |k: &str, v: &str| v.parse::<f64>().map_err(|_| Error::Format(format!("bad number in `{k}`: {v}")));
    let parse_u = |k: &str| {
        field(k)?.parse::<u64>().map_err(|_| Error::Format(format!("bad integer in `{k}`")))
    };
    let resolution: Resolution = field("resolution")?.parse()?;
    let (n_atm, n_ocn) = (parse_u("n_atm")? as usize, parse_u("n_ocn")? as usize);
    let dim = 2 * n_atm + 2 * n_ocn;
    let section = |name: &str| {
        sections
            .iter()
            .find(|(h, _)| *h == name)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::Format(format!("missing section {name}")))
    };
    let state = section("[state]")?;
    let history = section("[history]")?;
    section("[end]")?;
    let read_vec = |name: &str, body: &[&str]| -> Result<Vec<f64>> {
        if body.len() != dim {
            return Err(Error::Format(format!("section {name} has {} values, expected {dim}", body.len())));
        }
        body.iter().map(|v| parse_f(name, v)).collect()
    };
    let data = read_vec("[state]", state)?;
    let history = if history.as_slice() == ["none"] { None } else { Some(read_vec("[history]", history)?) };
    Ok(Checkpoint {
        resolution,
        param_hash: field("param_hash")?.to_string(),
        dt: parse_f("dt", field("dt")?)?,
        run: RunState {
            state: State { fields: Fields { data, n_atm, n_ocn }, time: parse_f("time", field("time")?)? },
            history,
            steps: parse_u("steps")?,
        },
    })
}

pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(c))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

/// Output encoding of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    #[default]
    Ndjson,
    Csv,
}

impl std::str::FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ndjson" => Ok(Self::Ndjson),
            "csv" => Ok(Self::Csv),
            other => Err(Error::invalid("emit", format!("expected csv or ndjson, got `{other}`"))),
        }
    }
}

impl Emit {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Ndjson => "ndjson",
            Self::Csv => "csv",
        }
    }
}

/// One diagnostic output record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub w_norm: f64,
    pub s_norm: f64,
    #[serde(flatten)]
    pub budget: EnergyBudget,
}

const CSV_COLUMNS: [&str; 18] = [
    "time",
    "w_norm",
    "s_norm",
    "ke_pe",
    "fric_interlayer",
    "fric_internal",
    "fric_bottom",
    "visc",
    "thermal_diff",
    "heat_exch",
    "ir_sink",
    "sw_input",
    "ref_work",
    "omega_work",
    "omega_integral",
    "net",
    "ddt_residual",
    "format_version",
];

impl SeriesRecord {
    pub fn of(model: &Model, run: &RunState) -> Result<Self> {
        let x = &run.state.fields;
        let t = model.tendency(x)?;
        Ok(Self {
            w_norm: w_norm(model, x),
            s_norm: s_norm(model, x),
            budget: energy_budget(model, x, &t, run.state.time * model.scales.time),
        })
    }

    fn csv_row(&self) -> String {
        let b = &self.budget;
        let vals = [
            b.time,
            self.w_norm,
            self.s_norm,
            b.ke_pe,
            b.fric_interlayer,
            b.fric_internal,
            b.fric_bottom,
            b.visc,
            b.thermal_diff,
            b.heat_exch,
            b.ir_sink,
            b.sw_input,
            b.ref_work,
            b.omega_work,
            b.omega_integral,
            b.net,
        ];
        let mut row: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
        row.push(b.ddt_residual.map(|v| format!("{v:e}")).unwrap_or_default());
        row.push(SERIES_VERSION.to_string());
        row.join(",")
    }
}

/// Energy/norm series writer; each record is emitted one output late so
/// its centered `ddt_residual` can be filled.
pub struct SeriesSink<W: Write> {
    out: W,
    emit: Emit,
    /// Last written record.
    prev: Option<SeriesRecord>,
    /// Record waiting for its successor.
    cur: Option<SeriesRecord>,
    written: usize,
}

impl<W: Write> SeriesSink<W> {
    /// Writes the CSV header unless `append` continues an existing file.
    pub fn new(mut out: W, emit: Emit, append: bool) -> std::io::Result<Self> {
        if emit == Emit::Csv && !append {
            writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        }
        Ok(Self { out, emit, prev: None, cur: None, written: 0 })
    }

    pub fn written(&self) -> usize {
        self.written
    }

    fn write(&mut self, r: &SeriesRecord) -> std::io::Result<()> {
        match self.emit {
            Emit::Ndjson => writeln!(self.out, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?,
            Emit::Csv => writeln!(self.out, "{}", r.csv_row())?,
        }
        self.written += 1;
        Ok(())
    }

    pub fn push(&mut self, next: SeriesRecord) -> std::io::Result<()> {
        match (self.prev, self.cur.take()) {
            (None, None) => {
                self.write(&next)?;
                self.prev = Some(next);
            }
            (_, None) => self.cur = Some(next),
            (prev, Some(mut cur)) => {
                let prev = prev.expect("a pending record follows a written one");
                let ddt = (next.budget.ke_pe - prev.budget.ke_pe) / (next.budget.time - prev.budget.time);
                cur.budget.ddt_residual = Some((ddt - cur.budget.net).abs());
                self.write(&cur)?;
                self.prev = Some(cur);
                self.cur = Some(next);
            }
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Sink for SeriesSink<W> {
    fn record(&mut self, model: &Model, run: &RunState) -> std::result::Result<(), String> {
        let r = SeriesRecord::of(model, run).map_err(|e| e.to_string())?;
        self.push(r).map_err(|e| e.to_string())
    }

    fn finish(&mut self) -> std::result::Result<(), String> {
        if let Some(r) = self.cur.take() {
            self.write(&r).map_err(|e| e.to_string())?;
        }
        self.out.flush().map_err(|e| e.to_string())
    }
}

/// Writes serializable records as line-delimited JSON.
pub fn write_ndjson<T: Serialize>(out: &mut impl Write, records: &[T]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?)?;
    }
    Ok(())
}

/// Provenance record of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// Canonical configuration file the hash covers.
    pub config_path: PathBuf,
    pub format_versions: std::collections::BTreeMap<String, String>,
    /// Unix seconds.
    pub start_wall: f64,
    pub end_wall: f64,
    pub revision: String,
    pub seed: u64,
    pub exit_status: i32,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, config_path: PathBuf, seed: u64) -> Self {
        let versions = [("checkpoint", CHECKPOINT_VERSION), ("series", SERIES_VERSION), ("manifest", MANIFEST_VERSION)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            command: command.to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            config_path,
            format_versions: versions,
            start_wall: unix_now(),
            end_wall: 0.0,
            revision: format!("v{}", env!("CARGO_PKG_VERSION")),
            seed,
            exit_status: 0,
            artifacts: Vec::new(),
        }
    }

    /// True when the stored hash matches the config file on disk.
    pub fn verify_config(&self) -> Result<bool> {
        Ok(sha256_hex(&std::fs::read(&self.config_path)?) == self.config_hash)
    }
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
