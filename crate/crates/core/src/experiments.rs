//! Twin-run experiments: continuous dependence on initial data and on
//! parameters, synchronization by spectral nudging of the streamfunctions,
//! and self-convergence of the Galerkin truncation.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{w_norm, w_weights};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::par;
use crate::params::shortwave_lipschitz_bound;
use crate::spectral::{Fields, Resolution, State};
use crate::timestepper::{advance, Dynamics, RunState, SchemeConfig};
use crate::tlm;

/// Parameter varied in a Lipschitz-continuity study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    EpsA,
    LambdaHeat,
    /// Relative change of every shortwave field.
    ShortwaveAmplitude,
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps_a" => Ok(Self::EpsA),
            "lambda_heat" => Ok(Self::LambdaHeat),
            "shortwave_amplitude" => Ok(Self::ShortwaveAmplitude),
            other => Err(Error::invalid(
                "param",
                format!("unknown parameter `{other}` (eps_a, lambda_heat, shortwave_amplitude)"),
            )),
        }
    }
}

/// Spectral nudging of the slave toward the master.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NudgingConfig {
    /// Lowest-eigenvalue modes observed per streamfunction.
    pub n_obs: usize,
    /// Relaxation rate, s^-1.
    pub gamma_nudge: f64,
    pub observe_temperature: bool,
}

impl Default for NudgingConfig {
    fn default() -> Self {
        Self { n_obs: 16, gamma_nudge: 1e-4, observe_temperature: false }
    }
}

impl NudgingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_nudge.is_finite() && self.gamma_nudge >= 0.0) {
            return Err(Error::invalid("gamma_nudge", "must be >= 0"));
        }
        Ok(())
    }
}

/// Difference norms per component, square roots of the W-norm contributions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiffs {
    pub psi_t: Vec<f64>,
    pub psi_c: Vec<f64>,
    pub psi_o: Vec<f64>,
    pub theta_o: Vec<f64>,
}

/// Max-over-time difference against parameter increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStudy {
    pub param: ParamName,
    /// (delta, max_t w_norm_diff).
    pub points: Vec<(f64, f64)>,
    /// Least-squares log-log slope over the positive points.
    pub slope: Option<f64>,
}

/// Outcome of a twin experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwinReport {
    /// Output times, s.
    pub times: Vec<f64>,
    /// Square root of the squared W-norm of the twin difference.
    pub w_norm_diff: Vec<f64>,
    /// Smallest rate b with diff(t) <= diff(0) e^{b t} at every output, s^-1.
    pub envelope_rate: Option<f64>,
    /// Same norm of the tangent-linear evolution of the initial difference.
    pub tlm_diff: Option<Vec<f64>>,
    pub param_study: Option<ParamStudy>,
    pub components: Option<ComponentDiffs>,
    pub nudging: Option<NudgingConfig>,
    /// Fitted exponential rate of the theta_o difference over the final half, s^-1.
    pub theta_decay_rate: Option<f64>,
}

impl TwinReport {
    /// Final over initial theta_o difference.
    pub fn theta_ratio(&self) -> Option<f64> {
        let th = &self.components.as_ref()?.theta_o;
        Some(th.last()? / th.first()?)
    }

    /// True when w_norm_diff never increases over the final half of the outputs.
    pub fn decays_over_final_half(&self) -> bool {
        let n = self.w_norm_diff.len();
        self.w_norm_diff[n / 2..].windows(2).all(|w| w[1] <= w[0])
    }
}

/// Two systems advanced in lockstep; the second may be nudged toward the first.
///
/// The relaxation -gamma P_N (x_b - x_a) is applied after every step as its
/// exact solution over the step, so identical states stay bit-identical and the
/// unobserved equations of the slave are those of the free model.
pub struct TwinDynamics<'a> {
    a: &'a Model,
    b: &'a Model,
    diag: Vec<f64>,
    /// Observed slave indices and the rate, s^-1.
    nudge: Option<(Vec<usize>, f64)>,
}

impl<'a> TwinDynamics<'a> {
    pub fn new(a: &'a Model, b: &'a Model) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::BasisMismatch("twin models differ in resolution".into()));
        }
        let mut diag = a.diag().data.clone();
        diag.extend_from_slice(&b.diag().data);
        Ok(Self { a, b, diag, nudge: None })
    }

    /// Master `a`, slave `b = a` nudged on the observed modes.
    pub fn nudged(a: &'a Model, cfg: &NudgingConfig) -> Result<Self> {
        cfg.validate()?;
        let mut t = Self::new(a, a)?;
        t.nudge = Some((observed_indices(a, cfg), cfg.gamma_nudge));
        Ok(t)
    }

    /// Relaxes the observed slave modes toward the master over `dt` seconds.
    pub fn relax(&self, x: &mut [f64], dt: f64) {
        if let Some((idx, g)) = &self.nudge {
            let n = self.a.dim();
            let f = (-g * dt).exp();
            for &i in idx {
                x[n + i] = x[i] + (x[n + i] - x[i]) * f;
            }
        }
    }

    fn split(&self, x: &[f64]) -> (Fields, Fields) {
        let n = self.a.dim();
        let wrap = |d: &[f64], m: &Model| Fields { data: d.to_vec(), n_atm: m.n_atm(), n_ocn: m.n_ocn() };
        (wrap(&x[..n], self.a), wrap(&x[n..], self.b))
    }
}

impl Dynamics for TwinDynamics<'_> {
    fn dim(&self) -> usize {
        2 * self.a.dim()
    }

    fn diag(&self) -> &[f64] {
        &self.diag
    }

    fn explicit(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (xa, xb) = self.split(x);
        let mut out = self.a.explicit(&xa)?.data;
        out.extend_from_slice(&self.b.explicit(&xb)?.data);
        Ok(out)
    }
}

/// Indices (into one state vector) of the modes seen by the nudging.
pub fn observed_indices(model: &Model, cfg: &NudgingConfig) -> Vec<usize> {
    let (na, no) = (model.n_atm(), model.n_ocn());
    let atm: Vec<usize> = model.basis.atm_by_eigenvalue().into_iter().take(cfg.n_obs).collect();
    let ocn: Vec<usize> = model.basis.ocn_by_eigenvalue().into_iter().take(cfg.n_obs).collect();
    let mut idx: Vec<usize> = atm.to_vec();
    idx.extend(atm.iter().map(|i| na + i));
    idx.extend(ocn.iter().map(|j| 2 * na + j));
    if cfg.observe_temperature {
        idx.extend(ocn.iter().map(|j| 2 * na + no + j));
    }
    idx
}

/// Steps a twin system for `horizon` seconds, calling `out` at t = 0, every
/// `output_every` steps and at the last step.
fn run_twin(
    dyn_: &TwinDynamics,
    cfg: &SchemeConfig,
    x0: Vec<f64>,
    horizon: f64,
    mut out: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be >= 0"));
    }
    let time = dyn_.a.scales.time;
    let h = cfg.dt / time;
    let steps = (horizon / cfg.dt).round() as u64;
    let mut x = x0;
    let mut history = None;
    out(0.0, &x)?;
    for k in 1..=steps {
        advance(dyn_, cfg.scheme, h, &mut x, &mut history)?;
        dyn_.relax(&mut x, cfg.dt);
        let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= cfg.overflow_cap) {
            let n = dyn_.b.dim();
            let slave = State {
                fields: Fields { data: x[n..].to_vec(), n_atm: dyn_.b.n_atm(), n_ocn: dyn_.b.n_ocn() },
                time: k as f64 * h,
            };
            return Err(Error::Overflow { step: k, magnitude, last_valid: Box::new(RunState::new(slave)) });
        }
        if k % cfg.output_every == 0 || k == steps {
            out(k as f64 * cfg.dt, &x)?;
        }
    }
    Ok(x)
}

fn stack(a: &Fields, b: &Fields) -> Vec<f64> {
    let mut x = a.data.clone();
    x.extend_from_slice(&b.data);
    x
}

fn diff_fields(model: &Model, x: &[f64]) -> Fields {
    let n = model.dim();
    Fields {
        data: x[n..].iter().zip(&x[..n]).map(|(b, a)| b - a).collect(),
        n_atm: model.n_atm(),
        n_ocn: model.n_ocn(),
    }
}

/// Smallest b such that d_k <= d_0 e^{b t_k} for every output.
pub fn envelope_rate(times: &[f64], diffs: &[f64]) -> Option<f64> {
    let d0 = *diffs.first()?;
    if !(d0 > 0.0) {
        return None;
    }
    let mut b = f64::NEG_INFINITY;
    for (t, d) in times.iter().zip(diffs).skip(1) {
        if *t > 0.0 {
            b = b.max((d.max(f64::MIN_POSITIVE) / d0).ln() / t);
        }
    }
    b.is_finite().then_some(b)
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Twin runs from `base` and `base + perturbation`.
///
/// With `with_tlm`, the perturbation is also propagated by the tangent-linear
/// model along the base trajectory (RK4 at the same step).
pub fn run_continuity(
    model: &Model,
    cfg: &SchemeConfig,
    base: &State,
    perturbation: &Fields,
    horizon: f64,
    with_tlm: bool,
) -> Result<TwinReport> {
    let mut pert = base.fields.clone();
    pert.axpy(1.0, perturbation);
    let dyn_ = TwinDynamics::new(model, model)?;
    let mut rep = TwinReport::default();
    run_twin(&dyn_, cfg, stack(&base.fields, &pert), horizon, |t, x| {
        rep.times.push(t);
        rep.w_norm_diff.push(w_norm(model, &diff_fields(model, x)).sqrt());
        Ok(())
    })?;
    rep.envelope_rate = envelope_rate(&rep.times, &rep.w_norm_diff);
    if with_tlm {
        let mut series = vec![w_norm(model, perturbation).sqrt()];
        let mut s = base.clone();
        let mut v = perturbation.clone();
        for w in rep.times.windows(2) {
            let steps = ((w[1] - w[0]) / cfg.dt).round() as u64;
            let (s2, v2) = tlm::propagate(model, cfg.dt, steps, &s, &v)?;
            s = s2;
            v = v2;
            series.push(w_norm(model, &v).sqrt());
        }
        rep.tlm_diff = Some(series);
    }
    Ok(rep)
}

/// Model with one parameter shifted by `delta`; reference temperatures stay fixed.
pub fn perturbed_model(model: &Model, param: ParamName, delta: f64) -> Result<Model> {
    let mut p = model.params.clone();
    match param {
        ParamName::EpsA => p.eps_a += delta,
        ParamName::LambdaHeat => p.lambda_heat += delta,
        ParamName::ShortwaveAmplitude => return Ok(model.with_shortwave_scale(model.sw_scale * (1.0 + delta))),
    }
    model.with_params(p)
}

/// Pairs of runs from the same state differing only in one parameter.
pub fn run_parameter_continuity(
    model: &Model,
    cfg: &SchemeConfig,
    ic: &State,
    param: ParamName,
    deltas: &[f64],
    horizon: f64,
) -> Result<TwinReport> {
    if deltas.is_empty() || deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid("deltas", "need at least one finite delta >= 0"));
    }
    let cells: Vec<Result<(f64, TwinReport)>> = par::map(model.exec, deltas, |&d| {
        let other = perturbed_model(model, param, d)?;
        let dyn_ = TwinDynamics::new(model, &other)?;
        let mut rep = TwinReport::default();
        run_twin(&dyn_, cfg, stack(&ic.fields, &ic.fields), horizon, |t, x| {
            rep.times.push(t);
            rep.w_norm_diff.push(w_norm(model, &diff_fields(model, x)).sqrt());
            Ok(())
        })?;
        Ok((d, rep))
    });
    let mut points = Vec::new();
    let mut first: Option<TwinReport> = None;
    for c in cells {
        let (d, rep) = c?;
        points.push((d, rep.w_norm_diff.iter().fold(0.0f64, |m, v| m.max(*v))));
        if first.is_none() {
            first = Some(rep);
        }
    }
    let pos: Vec<(f64, f64)> = points.iter().copied().filter(|(d, m)| *d > 0.0 && *m > 0.0).collect();
    let lx: Vec<f64> = pos.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pos.iter().map(|p| p.1.ln()).collect();
    let mut rep = first.unwrap_or_default();
    rep.param_study = Some(ParamStudy { param, points, slope: fit_slope(&lx, &ly) });
    Ok(rep)
}

fn component_norms(model: &Model, w: &Fields, d: &Fields) -> [f64; 4] {
    let part = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(w, x)| w * x * x).sum::<f64>().sqrt();
    [
        part(w.psi_t(), d.psi_t()),
        part(w.psi_c(), d.psi_c()),
        part(w.psi_o(), d.psi_o()),
        part(w.theta_o(), d.theta_o()),
    ]
    .map(|v| if model.dim() > 0 { v } else { 0.0 })
}

/// Master free, slave nudged toward the master's low streamfunction modes.
pub fn run_sync(
    model: &Model,
    cfg: &SchemeConfig,
    master: &State,
    slave: &State,
    nudging: &NudgingConfig,
    horizon: f64,
) -> Result<TwinReport> {
    if shortwave_lipschitz_bound(&model.shortwave) >= model.params.lambda_heat {
        log::warn!("shortwave Lipschitz bound is not below lambda; synchronization is not guaranteed");
    }
    let dyn_ = TwinDynamics::nudged(model, nudging)?;
    let w = w_weights(model);
    let mut rep = TwinReport { nudging: Some(*nudging), ..Default::default() };
    let mut comp = ComponentDiffs::default();
    run_twin(&dyn_, cfg, stack(&master.fields, &slave.fields), horizon, |t, x| {
        let d = diff_fields(model, x);
        let c = component_norms(model, &w, &d);
        rep.times.push(t);
        rep.w_norm_diff.push(w_norm(model, &d).sqrt());
        comp.psi_t.push(c[0]);
        comp.psi_c.push(c[1]);
        comp.psi_o.push(c[2]);
        comp.theta_o.push(c[3]);
        Ok(())
    })?;
    let n = rep.times.len();
    let (tx, ty): (Vec<f64>, Vec<f64>) = rep.times[n / 2..]
        .iter()
        .zip(&comp.theta_o[n / 2..])
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    rep.theta_decay_rate = fit_slope(&tx, &ty);
    rep.components = Some(comp);
    Ok(rep)
}

/// Smallest observation count in `[lo, hi]` for which `ok` holds, assuming
/// monotonicity; `None` when even `hi` fails.
pub fn bisect_n_obs(lo: usize, hi: usize, mut ok: impl FnMut(usize) -> Result<bool>) -> Result<Option<usize>> {
    if !ok(hi)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (lo, hi);
    if ok(lo)? {
        return Ok(Some(lo));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// True when every streamfunction difference fell below `tol` times its
/// initial value by the end of the run.
pub fn streamfunctions_synchronized(rep: &TwinReport, tol: f64) -> bool {
    let Some(c) = &rep.components else { return false };
    [&c.psi_t, &c.psi_c, &c.psi_o].iter().all(|v| match (v.first(), v.last()) {
        (Some(a), Some(b)) => *a == 0.0 || *b <= tol * a,
        _ => false,
    })
}

/// Smallest observation count whose screening run synchronizes the streamfunctions.
pub fn search_n_obs(
    model: &Model,
    cfg: &SchemeConfig,
    master: &State,
    slave: &State,
    nudging: &NudgingConfig,
    horizon: f64,
    tol: f64,
) -> Result<Option<usize>> {
    let hi = model.n_atm().max(model.n_ocn());
    bisect_n_obs(1, hi, |n| {
        let rep = run_sync(model, cfg, master, slave, &NudgingConfig { n_obs: n, ..*nudging }, horizon)?;
        let ok = streamfunctions_synchronized(&rep, tol);
        log::info!("screening n_obs = {n}: {}", if ok { "synchronized" } else { "not synchronized" });
        Ok(ok)
    })
}

/// Master after `spinup` seconds from `ic`, and the slave `offset` seconds
/// further along the same trajectory; both clocks restart at zero.
pub fn twin_pair(model: &Model, cfg: &SchemeConfig, ic: State, spinup: f64, offset: f64) -> Result<(State, State)> {
    let master = crate::timestepper::run_for(model, cfg, RunState::new(ic), spinup)?;
    let slave = crate::timestepper::run_for(model, cfg, master.clone(), offset)?;
    Ok((State { time: 0.0, ..master.state }, State { time: 0.0, ..slave.state }))
}

/// Copies the coefficients of `x` (on `from`'s basis) into `to`'s basis;
/// modes absent from the target are dropped, new ones are zero.
pub fn transfer(from: &Model, to: &Model, x: &Fields) -> Fields {
    let (fb, tb) = (&from.basis, &to.basis);
    let mut y = to.zero_state().fields;
    let (na_f, no_f) = (from.n_atm(), from.n_ocn());
    let (na_t, no_t) = (to.n_atm(), to.n_ocn());
    for (i, m) in fb.atm_modes.iter().enumerate() {
        if let Some(j) = tb.atm_index(m.zonal, m.n) {
            y.data[j] = x.data[i];
            y.data[na_t + j] = x.data[na_f + i];
        }
    }
    for (i, m) in fb.ocn_modes.iter().enumerate() {
        if let Some(j) = tb.ocn_index(m.m, m.n) {
            y.data[2 * na_t + j] = x.data[2 * na_f + i];
            y.data[2 * na_t + no_t + j] = x.data[2 * na_f + no_f + i];
        }
    }
    y
}

/// Self-convergence of the truncation along a resolution ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinReport {
    pub resolutions: Vec<Resolution>,
    /// Horizon, s.
    pub horizon: f64,
    /// Square-root W-norm distance of each run to the finest one, at the horizon.
    pub distance_to_finest: Vec<f64>,
    pub monotone: bool,
}

/// Runs every resolution of `ladder` (coarse to fine) from the truncations of
/// one smooth initial condition and compares with the finest.
pub fn run_galerkin_convergence(
    cfg_model: &ModelConfig,
    cfg: &SchemeConfig,
    ladder: &[Resolution],
    seed: u64,
    horizon: f64,
) -> Result<GalerkinReport> {
    if ladder.len() < 3 {
        return Err(Error::invalid("ladder", "need at least 3 resolutions"));
    }
    let models: Vec<Model> = ladder
        .iter()
        .map(|r| Model::new(&ModelConfig { resolution: *r, ..cfg_model.clone() }))
        .collect::<Result<_>>()?;
    let finest = models.last().expect("non-empty ladder");
    let ic = smooth_state(finest, seed);
    let finals: Vec<Result<Fields>> = par::map(finest.exec, &models, |m| {
        let x0 = State { fields: transfer(finest, m, &ic), time: 0.0 };
        let run = crate::timestepper::run_for(m, cfg, RunState::new(x0), horizon)?;
        Ok(transfer(m, finest, &run.state.fields))
    });
    let finals: Vec<Fields> = finals.into_iter().collect::<Result<_>>()?;
    let reference = finals.last().expect("non-empty ladder");
    let distance_to_finest: Vec<f64> =
        finals[..finals.len() - 1].iter().map(|f| w_norm(finest, &f.sub(reference)).sqrt()).collect();
    let monotone = distance_to_finest.windows(2).all(|w| w[1] < w[0]);
    Ok(GalerkinReport { resolutions: ladder.to_vec(), horizon, distance_to_finest, monotone })
}

/// Random state whose coefficients fall off as 1/lambda beyond the first mode.
pub fn smooth_state(model: &Model, seed: u64) -> Fields {
    let mut x = model.random_state(seed, 0.05, 5.0).fields;
    let b = &model.basis;
    let (na, no) = (model.n_atm(), model.n_ocn());
    for i in 0..na {
        let f = b.lambda_1 / b.eig_atm[i];
        x.data[i] *= f;
        x.data[na + i] *= f;
    }
    for j in 0..no {
        let f = b.lambda_1 / b.eig_ocn[j];
        x.data[2 * na + j] *= f;
        x.data[2 * na + no + j] *= f;
    }
    x
}
