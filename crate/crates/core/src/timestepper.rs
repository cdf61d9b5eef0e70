//! IMEX Crank-Nicolson / Adams-Bashforth-2 and explicit RK4 stepping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::spectral::{Fields, State};

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImexCnab2,
    Rk4Explicit,
}

/// Stepping controls (SI-facing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Step, s.
    pub dt: f64,
    pub scheme: Scheme,
    /// Absolute end time, s.
    pub t_end: f64,
    /// Sink invocation interval, steps.
    pub output_every: u64,
    /// Largest admissible coefficient magnitude (internal units).
    pub overflow_cap: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: 900.0,
            scheme: Scheme::ImexCnab2,
            t_end: 0.0,
            output_every: 96,
            overflow_cap: 1e6,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::invalid("t_end", "must be >= 0"));
        }
        if self.output_every == 0 {
            return Err(Error::invalid("output_every", "must be >= 1"));
        }
        if !(self.overflow_cap > 0.0) {
            return Err(Error::invalid("overflow_cap", "must be > 0"));
        }
        Ok(())
    }
}

/// Autonomous system split as x' = diag * x + explicit(x).
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn diag(&self) -> &[f64];
    fn explicit(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn full(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut f = self.explicit(x)?;
        for ((o, d), v) in f.iter_mut().zip(self.diag()).zip(x) {
            *o += d * v;
        }
        Ok(f)
    }
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn diag(&self) -> &[f64] {
        &Model::diag(self).data
    }

    fn explicit(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = Fields { data: x.to_vec(), n_atm: self.n_atm(), n_ocn: self.n_ocn() };
        Ok(Model::explicit(self, &f)?.data)
    }
}

/// Advances `x` by one step of size `h` (internal time units).
///
/// `history` holds the explicit term of the previous CNAB2 step; it is
/// cleared by RK4.
pub fn advance<D: Dynamics + ?Sized>(
    dyn_: &D,
    scheme: Scheme,
    h: f64,
    x: &mut [f64],
    history: &mut Option<Vec<f64>>,
) -> Result<()> {
    match scheme {
        Scheme::ImexCnab2 => {
            let n = dyn_.explicit(x)?;
            let d = dyn_.diag();
            match history.as_deref() {
                Some(prev) => {
                    for i in 0..x.len() {
                        let rhs = (1.0 + 0.5 * h * d[i]) * x[i] + h * (1.5 * n[i] - 0.5 * prev[i]);
                        x[i] = rhs / (1.0 - 0.5 * h * d[i]);
                    }
                }
                None => {
                    for i in 0..x.len() {
                        x[i] = (x[i] + h * n[i]) / (1.0 - h * d[i]);
                    }
                }
            }
            *history = Some(n);
        }
        Scheme::Rk4Explicit => {
            let k1 = dyn_.full(x)?;
            let stage = |k: &[f64], a: f64| -> Vec<f64> {
                x.iter().zip(k).map(|(x, k)| x + a * k).collect()
            };
            let k2 = dyn_.full(&stage(&k1, 0.5 * h))?;
            let k3 = dyn_.full(&stage(&k2, 0.5 * h))?;
            let k4 = dyn_.full(&stage(&k3, h))?;
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            *history = None;
        }
    }
    Ok(())
}

/// State plus the multistep history needed for bit-exact continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub state: State,
    /// Explicit term of the previous CNAB2 step.
    pub history: Option<Vec<f64>>,
    /// Steps taken since the run started.
    pub steps: u64,
}

impl RunState {
    pub fn new(state: State) -> Self {
        Self { state, history: None, steps: 0 }
    }
}

/// Receives the run state every `output_every` steps.
pub trait Sink {
    fn record(&mut self, model: &Model, run: &RunState) -> std::result::Result<(), String>;

    fn finish(&mut self) -> std::result::Result<(), String> {
        Ok(())
    }
}

/// Internal step size.
pub fn internal_dt(model: &Model, cfg: &SchemeConfig) -> f64 {
    cfg.dt / model.scales.time
}

/// One step of the configured scheme.
pub fn step(model: &Model, cfg: &SchemeConfig, run: &mut RunState) -> Result<()> {
    let h = internal_dt(model, cfg);
    let before = run.clone();
    advance(model, cfg.scheme, h, &mut run.state.fields.data, &mut run.history)?;
    run.state.time += h;
    run.steps += 1;
    let magnitude = run.state.fields.max_abs();
    if !(magnitude <= cfg.overflow_cap) {
        let step = run.steps;
        *run = before;
        return Err(Error::Overflow { step, magnitude, last_valid: Box::new(run.clone()) });
    }
    Ok(())
}

/// Number of steps from the current time to `cfg.t_end`.
pub fn steps_to_end(model: &Model, cfg: &SchemeConfig, run: &RunState) -> u64 {
    let h = internal_dt(model, cfg);
    let remaining = cfg.t_end / model.scales.time - run.state.time;
    (remaining / h).round().max(0.0) as u64
}

/// Steps to `cfg.t_end`, calling the sinks at every multiple of `output_every`.
pub fn integrate(
    model: &Model,
    cfg: &SchemeConfig,
    mut run: RunState,
    sinks: &mut [&mut dyn Sink],
) -> Result<RunState> {
    cfg.validate()?;
    let emit = |run: &RunState, sinks: &mut [&mut dyn Sink]| -> Result<()> {
        for s in sinks.iter_mut() {
            s.record(model, run).map_err(|message| Error::Sink {
                step: run.steps,
                message,
                last_valid: Box::new(run.clone()),
            })?;
        }
        Ok(())
    };
    if run.steps == 0 {
        emit(&run, sinks)?;
    }
    let n = steps_to_end(model, cfg, &run);
    for _ in 0..n {
        step(model, cfg, &mut run)?;
        if run.steps.is_multiple_of(cfg.output_every) {
            emit(&run, sinks)?;
        }
    }
    Ok(run)
}

/// Convenience: integrate without sinks for a duration in seconds.
pub fn run_for(model: &Model, cfg: &SchemeConfig, run: RunState, duration: f64) -> Result<RunState> {
    let t_end = run.state.time * model.scales.time + duration;
    integrate(model, &SchemeConfig { t_end, ..*cfg }, run, &mut [])
}
