//! Tangent-linear propagation and Lyapunov spectrum estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::par;
use crate::spectral::{Fields, State, TangentState};

/// Inner product used for re-orthonormalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// (D dpsi, dpsi) + (dT, dT) in SI units.
    #[default]
    Weighted,
    /// Plain coefficient dot product.
    Euclidean,
}

/// Per-coefficient weights of a metric.
pub fn metric_weights(model: &Model, metric: Metric) -> Vec<f64> {
    match metric {
        Metric::Euclidean => vec![1.0; model.dim()],
        Metric::Weighted => {
            // Ratio of the SI streamfunction weight (psi^2 D) to the SI temperature weight (l^2).
            let s = &model.scales;
            let psi_w = s.psi * s.psi / (s.length * s.length);
            let n = 2 * model.n_atm() + model.n_ocn();
            model
                .d_op()
                .data
                .iter()
                .enumerate()
                .map(|(i, d)| if i < n { psi_w * d } else { 1.0 })
                .collect()
        }
    }
}

fn dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// One joint RK4 step of the base state and its tangents (internal time `h`).
pub fn tangent_step(model: &Model, h: f64, base: &mut Fields, tangents: &mut [TangentState]) -> Result<()> {
    let f1 = model.tendency(base)?;
    let x2 = Fields::lincomb(1.0, base, 0.5 * h, &f1);
    let f2 = model.tendency(&x2)?;
    let x3 = Fields::lincomb(1.0, base, 0.5 * h, &f2);
    let f3 = model.tendency(&x3)?;
    let x4 = Fields::lincomb(1.0, base, h, &f3);
    let f4 = model.tendency(&x4)?;

    if !tangents.is_empty() {
        let l1 = model.linearize(base)?;
        let l2 = model.linearize(&x2)?;
        let l3 = model.linearize(&x3)?;
        let l4 = model.linearize(&x4)?;
        par::for_each_mut(model.exec, tangents, |_, v| {
            let k1 = l1.apply(v);
            let k2 = l2.apply(&Fields::lincomb(1.0, v, 0.5 * h, &k1));
            let k3 = l3.apply(&Fields::lincomb(1.0, v, 0.5 * h, &k2));
            let k4 = l4.apply(&Fields::lincomb(1.0, v, h, &k3));
            for i in 0..v.data.len() {
                v.data[i] += h / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
            }
        });
        if tangents.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite { equation: "tangent" });
        }
    }
    for i in 0..base.data.len() {
        base.data[i] += h / 6.0 * (f1.data[i] + 2.0 * f2.data[i] + 2.0 * f3.data[i] + f4.data[i]);
    }
    Ok(())
}

/// Propagates `tangent` along the trajectory from `base` for `steps` RK4
/// steps of `dt` seconds. Returns the final base state and tangent.
pub fn propagate(
    model: &Model,
    dt: f64,
    steps: u64,
    base: &State,
    tangent: &TangentState,
) -> Result<(State, TangentState)> {
    let h = dt / model.scales.time;
    let mut x = base.fields.clone();
    let mut v = vec![tangent.clone()];
    for _ in 0..steps {
        tangent_step(model, h, &mut x, &mut v)?;
    }
    let time = base.time + steps as f64 * h;
    let v = v.pop().expect("one tangent");
    Ok((State { fields: x, time }, v))
}

/// Lyapunov estimation controls. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub n_vectors: usize,
    pub dt: f64,
    /// Base-state integration before tangents are introduced.
    pub spinup: f64,
    /// Tangent evolution discarded before averaging.
    pub transient: f64,
    /// Averaging window.
    pub horizon: f64,
    /// Steps between re-orthonormalizations.
    pub renorm_every: u64,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            n_vectors: 10,
            dt: 900.0,
            spinup: 0.0,
            transient: 0.0,
            horizon: 86400.0 * 100.0,
            renorm_every: 10,
            metric: Metric::Weighted,
            seed: 0,
        }
    }
}

impl LyapunovConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_vectors > dim {
            return Err(Error::invalid("n_vectors", format!("must be <= state dimension {dim}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if self.renorm_every == 0 {
            return Err(Error::invalid("renorm_every", "must be >= 1"));
        }
        for (name, v) in [("spinup", self.spinup), ("transient", self.transient), ("horizon", self.horizon)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// One re-orthonormalization event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormRecord {
    /// s.
    pub time: f64,
    /// Instantaneous log-stretching rates over the last interval, s^-1.
    pub rates: Vec<f64>,
    /// Running exponent estimates, s^-1 (empty during the transient).
    pub exponents: Vec<f64>,
}

/// Result of [`lyapunov_spectrum`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// Non-increasing, s^-1.
    pub exponents: Vec<f64>,
    pub ky_dimension: f64,
    /// trace_avg[n - 1] is the mean sum of the first n rates, s^-1.
    pub trace_avg: Vec<f64>,
    /// Smallest n with trace_avg(n) < 0.
    pub n_star: Option<usize>,
    pub records: Vec<RenormRecord>,
    /// Tangent vectors re-seeded after collapsing onto earlier ones.
    pub reseeds: usize,
    /// Time average of the full trace along the averaging window, s^-1.
    pub mean_trace: Option<f64>,
}

/// Relative norm below which a vector counts as collapsed.
const COLLAPSE_TOL: f64 = 1e-12;

/// Modified Gram-Schmidt in the weighted metric. Returns log stretch factors and
/// the number of re-seeded vectors.
fn orthonormalize(vs: &mut [Fields], w: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let mut logs = Vec::with_capacity(vs.len());
    let mut reseeds = 0;
    for i in 0..vs.len() {
        let before = dot(w, &vs[i].data, &vs[i].data).sqrt();
        for j in 0..i {
            let (head, tail) = vs.split_at_mut(i);
            let p = dot(w, &tail[0].data, &head[j].data);
            tail[0].axpy(-p, &head[j]);
        }
        let mut norm = dot(w, &vs[i].data, &vs[i].data).sqrt();
        if !(norm > COLLAPSE_TOL * before) || norm == 0.0 {
            log::warn!("tangent vector {i} collapsed; re-seeding");
            reseeds += 1;
            loop {
                let v = &mut vs[i];
                for (k, x) in v.data.iter_mut().enumerate() {
                    *x = rng.gen_range(-1.0..1.0) / w[k].sqrt();
                }
                for j in 0..i {
                    let (head, tail) = vs.split_at_mut(i);
                    let p = dot(w, &tail[0].data, &head[j].data);
                    tail[0].axpy(-p, &head[j]);
                }
                norm = dot(w, &vs[i].data, &vs[i].data).sqrt();
                if norm > 0.0 {
                    break;
                }
            }
            logs.push(0.0);
        } else {
            logs.push(norm.ln());
        }
        vs[i].scale(1.0 / norm);
    }
    (logs, reseeds)
}

/// Trace of the linearized tendency at `base` in internal units.
pub fn full_trace(model: &Model, base: &Fields) -> Result<f64> {
    let lin = model.linearize(base)?;
    let n = model.dim();
    let diag = par::map(model.exec, &(0..n).collect::<Vec<_>>(), |&i| {
        let mut e = Fields::zeros(model.n_atm(), model.n_ocn());
        e.data[i] = 1.0;
        lin.apply(&e).data[i]
    });
    Ok(diag.iter().sum())
}

/// Kaplan-Yorke dimension of a non-increasing spectrum.
pub fn ky_dimension(exponents: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (j, &l) in exponents.iter().enumerate() {
        if sum + l < 0.0 {
            return j as f64 + sum / l.abs();
        }
        sum += l;
    }
    exponents.len() as f64
}

/// Cumulative sums of the spectrum.
pub fn trace_avg(exponents: &[f64]) -> Vec<f64> {
    exponents
        .iter()
        .scan(0.0, |s, l| {
            *s += l;
            Some(*s)
        })
        .collect()
}

/// Smallest n with trace_avg(n) < 0.
pub fn n_star(trace: &[f64]) -> Option<usize> {
    trace.iter().position(|&t| t < 0.0).map(|i| i + 1)
}

fn steps_for(duration: f64, dt: f64) -> u64 {
    (duration / dt).round().max(0.0) as u64
}

/// Repeated-orthonormalization estimate of the leading `n_vectors` exponents.
///
/// With `with_trace`, the full trace is also averaged at every step (costly:
/// one linearized evaluation per state dimension).
pub fn lyapunov_spectrum(model: &Model, state0: &State, cfg: &LyapunovConfig, with_trace: bool) -> Result<LyapunovReport> {
    cfg.validate(model.dim())?;
    let n = cfg.n_vectors;
    let h = cfg.dt / model.scales.time;
    let f0 = 1.0 / model.scales.time;
    let mut x = state0.fields.clone();
    let mut time = state0.time;
    let mut none: Vec<Fields> = Vec::new();
    for _ in 0..steps_for(cfg.spinup, cfg.dt) {
        tangent_step(model, h, &mut x, &mut none)?;
        time += h;
    }
    if n == 0 {
        return Ok(LyapunovReport {
            exponents: vec![],
            ky_dimension: 0.0,
            trace_avg: vec![],
            n_star: None,
            records: vec![],
            reseeds: 0,
            mean_trace: None,
        });
    }
    let w = metric_weights(model, cfg.metric);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vs: Vec<Fields> = (0..n)
        .map(|_| {
            let mut v = Fields::zeros(model.n_atm(), model.n_ocn());
            for (k, x) in v.data.iter_mut().enumerate() {
                *x = rng.gen_range(-1.0..1.0) / w[k].sqrt();
            }
            v
        })
        .collect();
    let (_, mut reseeds) = orthonormalize(&mut vs, &w, &mut rng);

    let transient_steps = steps_for(cfg.transient, cfg.dt);
    let total = transient_steps + steps_for(cfg.horizon, cfg.dt);
    let mut sums = vec![0.0; n];
    let mut averaged_time = 0.0;
    let mut trace_sum = 0.0;
    let mut trace_count = 0usize;
    let mut records = Vec::new();
    let mut since = 0u64;
    for step in 1..=total {
        let averaging = step > transient_steps;
        if with_trace && averaging {
            trace_sum += full_trace(model, &x)?;
            trace_count += 1;
        }
        tangent_step(model, h, &mut x, &mut vs)?;
        time += h;
        since += 1;
        if since == cfg.renorm_every || step == total || step == transient_steps {
            let interval = since as f64 * h;
            let (logs, r) = orthonormalize(&mut vs, &w, &mut rng);
            reseeds += r;
            let rates: Vec<f64> = logs.iter().map(|l| l / interval * f0).collect();
            let exponents = if averaging {
                averaged_time += interval;
                for (s, l) in sums.iter_mut().zip(&logs) {
                    *s += l;
                }
                sums.iter().map(|s| s / averaged_time * f0).collect()
            } else {
                Vec::new()
            };
            records.push(RenormRecord { time: time * model.scales.time, rates, exponents });
            since = 0;
        }
    }
    let mut exponents: Vec<f64> = if averaged_time > 0.0 {
        sums.iter().map(|s| s / averaged_time * f0).collect()
    } else {
        vec![0.0; n]
    };
    exponents.sort_by(|a, b| b.total_cmp(a));
    let trace = trace_avg(&exponents);
    Ok(LyapunovReport {
        ky_dimension: ky_dimension(&exponents),
        n_star: n_star(&trace),
        trace_avg: trace,
        exponents,
        records,
        reseeds,
        mean_trace: (trace_count > 0).then(|| trace_sum / trace_count as f64 * f0),
    })
}
