//! End-to-end acceptance suite. Criteria run in sequence; each prints one
//! PASS/FAIL line with its runtime, and the test fails if any criterion does.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{rel_err, Oracle};
use maooam_core::diagnostics::{fill_ddt_residuals, w_norm};
use maooam_core::experiments::{run_parameter_continuity, run_sync, twin_pair, NudgingConfig, ParamName};
use maooam_core::io::{checkpoint_to_string, parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
use maooam_core::io::{Emit, RunConfig, SeriesRecord, SeriesSink};
use maooam_core::params::{equilibrium_rows, radiative_equilibrium};
use maooam_core::timestepper::{integrate, run_for, Sink};
use maooam_core::tlm::propagate;
use maooam_core::{par, Exec, Fields, Model, ModelConfig, PhysicalParams, Resolution, RunState, Scheme};
use maooam_core::{SchemeConfig, State, Switches};

const DAY: f64 = 86400.0;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Writes past the test harness capture so the lines land in the log.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn default_model() -> Model {
    Model::new(&ModelConfig::default()).unwrap()
}

fn model(n: usize) -> Model {
    Model::new(&ModelConfig { resolution: Resolution::square(n), ..Default::default() }).unwrap()
}

/// Default initial condition integrated for `days`, clock reset.
fn spun(m: &Model, days: f64) -> State {
    let cfg = RunConfig::default();
    let run = run_for(m, &cfg.scheme_config(), RunState::new(cfg.initial_state(m)), days * DAY).unwrap();
    State { time: 0.0, ..run.state }
}

fn norm(x: &Fields) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    maooam_core::experiments::fit_slope(x, y).unwrap_or(f64::NAN)
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target.abs()
}

fn c1_constants() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_maooam")).arg("constants").output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "constants exited with {:?}", out.status.code());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let get = |key: &str| -> Result<f64, String> {
        text.lines()
            .find_map(|l| {
                let (k, rest) = l.split_once('=')?;
                (k.trim() == key).then(|| rest.split('#').next().unwrap_or("").trim().to_string())
            })
            .ok_or_else(|| format!("`{key}` missing"))?
            .parse()
            .map_err(|e| format!("{key}: {e}"))
    };
    let (kappa, ga, go) = (get("kappa")?, get("mu_gamma_a")?, get("mu_gamma_o")?);
    let (lambda0, lip) = (get("Lambda_0")?, get("lipschitz_bound")?);
    ensure!(within(kappa, 15.0, 0.01), "kappa {kappa}");
    ensure!(within(ga, 9.0, 0.01), "mu gamma_a {ga}");
    ensure!(within(go, 500.0, 0.01), "mu gamma_o {go}");
    ensure!((1e-19..=1e-17).contains(&lambda0), "Lambda_0 {lambda0:e}");
    ensure!((18.0..=19.0).contains(&lip), "Lipschitz bound {lip}");
    ensure!(lip < PhysicalParams::default().lambda_heat, "Lipschitz bound {lip} not below lambda");
    Ok(format!("kappa {kappa}, mu*gamma {ga}/{go}, Lambda_0 {lambda0:.3e}, L {lip}"))
}

fn c2_oracles() -> Outcome {
    const CASES: usize = 100;
    let m = model(6);
    let o = Oracle::new(&m, 6, 16);
    let (na, no) = (m.n_atm(), m.n_ocn());
    let mut worst_j: f64 = 0.0;
    for case in 0..CASES {
        let ocean = case % 2 == 1;
        let n = if ocean { no } else { na };
        let (u, v) = if case % 4 < 2 {
            let mut u = vec![0.0; n];
            let mut v = vec![0.0; n];
            u[(7 * case + 1) % n] = 1.0;
            v[(13 * case + 5) % n] = 1.0;
            (u, v)
        } else {
            let a = m.random_state(case as u64, 1.0, 1.0).fields;
            let b = m.random_state(1000 + case as u64, 1.0, 1.0).fields;
            let pick = |f: &Fields| if ocean { f.psi_o().to_vec() } else { f.psi_t().to_vec() };
            (pick(&a), pick(&b))
        };
        let got = m.basis.jacobian(Exec::Sequential, &u, &v).map_err(|e| e.to_string())?;
        let want = o.jacobian(&u, &v, ocean);
        let scale = norm(&Fields { data: want.clone(), n_atm: 0, n_ocn: 0 }).max(1.0);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale;
        worst_j = worst_j.max(err);
    }
    ensure!(worst_j <= 1e-10, "Jacobian relative error {worst_j:e}");

    let (e, sb) = (m.params.eps_a, m.params.sigma_B);
    let q4 = |t: f64| t * t.abs().powi(3);
    let mut worst_l: f64 = 0.0;
    for seed in 0..CASES as u64 {
        let x = m.random_state(seed, 0.05, 8.0).fields;
        let (qa, qo) = m.longwave(&x).map_err(|e| e.to_string())?;
        let dta = o.field(x.psi_c(), false);
        let th = o.field(x.theta_o(), true);
        let mut fa = vec![0.0; o.len()];
        let mut fo = vec![0.0; o.len()];
        for g in 0..o.len() {
            let ta = m.t_a0 - m.coeffs.temp_coeff * dta[g].f;
            let to = m.t_o0 + th[g].f;
            fa[g] = e * sb * q4(to) - 2.0 * e * sb * q4(ta);
            fo[g] = e * sb * q4(ta) - sb * q4(to);
        }
        worst_l = worst_l.max(rel_err(&qa, &o.project(&fa, false))).max(rel_err(&qo, &o.project(&fo, true)));
    }
    ensure!(worst_l <= 1e-9, "longwave relative error {worst_l:e}");
    Ok(format!("{CASES} Jacobian cases max {worst_j:.2e}; {CASES} longwave states max {worst_l:.2e}"))
}

fn c3_conservation() -> Outcome {
    let m = default_model().with_switches(Switches::pure_jacobian());
    let s = m.random_state(3, 3.0, 3.0);
    let e0 = w_norm(&m, &s.fields);
    let unit = m.scales.time;
    let drift = |dt: f64| -> Result<f64, String> {
        let cfg = SchemeConfig { dt: dt * unit, scheme: Scheme::Rk4Explicit, ..Default::default() };
        let r = run_for(&m, &cfg, RunState::new(s.clone()), unit).map_err(|e| e.to_string())?;
        Ok(((w_norm(&m, &r.state.fields) - e0) / e0).abs())
    };
    let (d1, d2) = (drift(1e-3)?, drift(5e-4)?);
    ensure!(d1 < 1e-6, "drift {d1:e}");
    ensure!(d1 / d2 >= 8.0, "halving reduced drift only {:.2}x", d1 / d2);
    Ok(format!("drift {d1:.2e} -> {d2:.2e} ({:.1}x)", d1 / d2))
}

/// ddt residuals of a default run, keyed by record index.
fn residuals(m: &Model, s0: &State, dt: f64, every: u64, days: f64) -> Result<Vec<Option<f64>>, String> {
    let cfg = SchemeConfig { dt, output_every: every, t_end: days * DAY, ..Default::default() };
    let mut sink = SeriesSink::new(Vec::new(), Emit::Ndjson, false).map_err(|e| e.to_string())?;
    integrate(m, &cfg, RunState::new(s0.clone()), &mut [&mut sink]).map_err(|e| e.to_string())?;
    sink.finish()?;
    let text = String::from_utf8(sink.into_inner()).map_err(|e| e.to_string())?;
    let mut budgets = Vec::new();
    for line in text.lines() {
        let r: SeriesRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        budgets.push(r.budget);
    }
    let stored: Vec<Option<f64>> = budgets.iter().map(|b| b.ddt_residual).collect();
    fill_ddt_residuals(&mut budgets);
    ensure!(stored == budgets.iter().map(|b| b.ddt_residual).collect::<Vec<_>>(), "stored residuals differ");
    Ok(stored)
}

fn c4_budget() -> Outcome {
    let m = default_model();
    let s0 = spun(&m, 200.0);
    let mut means = Vec::new();
    for k in 0..3 {
        let dt = 900.0 / f64::powi(2.0, k);
        let res = residuals(&m, &s0, dt, 8, 10.0)?;
        // Compare on the records shared with the coarsest run.
        let stride = 1usize << k;
        let common: Vec<f64> = res.iter().step_by(stride).flatten().copied().collect();
        ensure!(!common.is_empty(), "no interior records");
        means.push(common.iter().sum::<f64>() / common.len() as f64);
    }
    let orders: Vec<f64> = means.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure!(orders.iter().all(|o| *o >= 1.8), "orders {orders:?} (mean residuals {means:?})");
    Ok(format!("mean residual {:.2e} -> {:.2e} -> {:.2e} W m^-2; orders {:.2}, {:.2}", means[0], means[1], means[2], orders[0], orders[1]))
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c5_equilibrium() -> Outcome {
    let p = PhysicalParams { eps_a: 1.0, lambda_heat: 0.0, ..Default::default() };
    let (ra, ro) = (170.0, 170.0);
    let (ta, to) = radiative_equilibrium(&p, ra, ro).map_err(|e| e.to_string())?;
    // With eps_a = 1 and no exchange the rows reduce to two quartic roots.
    let ta_ref = ((ra + ro) / p.sigma_B).powf(0.25);
    let to_ref = ((ra + 2.0 * ro) / p.sigma_B).powf(0.25);
    ensure!((ta - ta_ref).abs() < 1e-9 && (to - to_ref).abs() < 1e-9, "({ta}, {to}) vs ({ta_ref}, {to_ref})");
    ensure!((ta - 278.3).abs() < 0.1 && (to - 308.0).abs() < 0.1, "({ta}, {to})");
    let mut worst: f64 = 0.0;
    for (eps, lam, ra, ro) in [(0.76, 20.0, 120.0, 220.0), (0.6, 5.0, 90.0, 300.0), (0.95, 40.0, 200.0, 150.0)] {
        let p = PhysicalParams { eps_a: eps, lambda_heat: lam, ..Default::default() };
        let (a, o) = radiative_equilibrium(&p, ra, ro).map_err(|e| e.to_string())?;
        let ta_of = |to: f64| bisect(1.0, 1000.0, |ta| equilibrium_rows(&p, ta, to, ra, ro)[0]);
        let oo = bisect(1.0, 1000.0, |to| equilibrium_rows(&p, ta_of(to), to, ra, ro)[1]);
        let oa = ta_of(oo);
        worst = worst.max((a - oa).abs()).max((o - oo).abs());
    }
    ensure!(worst < 1e-6, "generic cases differ from the bisection oracle by {worst:e} K");
    Ok(format!("closed form ({ta:.3}, {to:.3}) K; generic max deviation {worst:.1e} K"))
}

fn c6_tlm() -> Outcome {
    let m = default_model();
    let bases = [spun(&m, 100.0).fields, m.random_state(1, 0.05, 8.0).fields];
    let mut slopes = Vec::new();
    for (k, b) in bases.iter().enumerate() {
        let v = m.random_state(100 + k as u64, 0.05, 8.0).fields;
        let f0 = m.tendency(b).map_err(|e| e.to_string())?;
        let lv = m.linearized_tendency(b, &v).map_err(|e| e.to_string())?;
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for j in 0..9 {
            let e = 1e-6 * 10f64.powf(0.5 * j as f64);
            let mut bp = b.clone();
            bp.axpy(e, &v);
            let mut fd = m.tendency(&bp).map_err(|e| e.to_string())?.sub(&f0);
            fd.scale(1.0 / e);
            lx.push(e.ln());
            ly.push((norm(&fd.sub(&lv)) / norm(&lv)).ln());
        }
        slopes.push(slope(&lx, &ly));
    }
    ensure!(slopes.iter().all(|s| (s - 1.0).abs() <= 0.15), "slopes {slopes:?}");

    let b = &bases[0];
    let u = m.random_state(7, 0.01, 1.0).fields;
    let w = m.random_state(8, 0.01, 1.0).fields;
    let lhs = m.linearized_tendency(b, &Fields::lincomb(0.7, &u, -2.3, &w)).map_err(|e| e.to_string())?;
    let rhs = Fields::lincomb(
        0.7,
        &m.linearized_tendency(b, &u).map_err(|e| e.to_string())?,
        -2.3,
        &m.linearized_tendency(b, &w).map_err(|e| e.to_string())?,
    );
    let lin = norm(&lhs.sub(&rhs)) / norm(&rhs);
    ensure!(lin <= 1e-13, "linearity defect {lin:e}");
    let s = State { fields: b.clone(), time: 0.0 };
    let (_, p1) = propagate(&m, 900.0, 96, &s, &u).map_err(|e| e.to_string())?;
    let mut u3 = u.clone();
    u3.scale(3.0);
    let (_, p3) = propagate(&m, 900.0, 96, &s, &u3).map_err(|e| e.to_string())?;
    let mut p1x3 = p1.clone();
    p1x3.scale(3.0);
    let prop = norm(&p3.sub(&p1x3)) / norm(&p3);
    ensure!(prop <= 1e-12, "propagator linearity defect {prop:e}");
    Ok(format!("slopes {:.3}, {:.3}; linearity {lin:.1e} (tendency), {prop:.1e} (one-day propagator)", slopes[0], slopes[1]))
}

fn c7_dissipativity() -> Outcome {
    const N: usize = 10;
    let horizon = 1200.0;
    let m = default_model();
    let cfg = SchemeConfig { t_end: horizon * DAY, output_every: 960, ..Default::default() };
    // Ocean at rest; the spread comes from the ocean temperature amplitude.
    let ics: Vec<State> = (0..N)
        .map(|k| {
            let theta = 0.4 * 10f64.powf(2.2 * k as f64 / (N - 1) as f64);
            let mut s = m.random_state(10 + k as u64, 0.003, theta);
            s.fields.psi_o_mut().fill(0.0);
            s
        })
        .collect();
    let w0: Vec<f64> = ics.iter().map(|s| w_norm(&m, &s.fields)).collect();
    let span = w0.iter().cloned().fold(0.0, f64::max) / w0.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure!(span >= 1e3, "initial W spans only {span:.0}x");

    struct Trace(Vec<(f64, f64)>);
    impl Sink for Trace {
        fn record(&mut self, m: &Model, r: &RunState) -> Result<(), String> {
            self.0.push((r.state.time * m.scales.time / DAY, w_norm(m, &r.state.fields)));
            Ok(())
        }
    }
    let traces: Vec<Result<Vec<(f64, f64)>, String>> = par::map(Exec::Parallel, &ics, |s| {
        let mut t = Trace(Vec::new());
        integrate(&m, &cfg, RunState::new(s.clone()), &mut [&mut t]).map_err(|e| e.to_string())?;
        Ok(t.0)
    });
    let traces: Vec<Vec<(f64, f64)>> = traces.into_iter().collect::<Result<_, _>>()?;

    // Radius: the largest W over the final quarter, with a 25% margin.
    let radius = 1.25
        * traces
            .iter()
            .flat_map(|t| t.iter().filter(|(d, _)| *d >= 0.75 * horizon).map(|p| p.1))
            .fold(0.0, f64::max);
    let outside = w0.iter().filter(|w| **w > radius).count();
    ensure!(outside > 0 && outside < N, "{outside} of {N} initial conditions start outside the ball");
    let mut entries = Vec::new();
    for (k, t) in traces.iter().enumerate() {
        let last_out = t.iter().rposition(|(_, w)| *w > radius);
        let entry = last_out.map_or(0.0, |i| t.get(i + 1).map_or(f64::INFINITY, |p| p.0));
        ensure!(entry <= 0.5 * horizon, "trajectory {k} (W0 {:.2e}) enters at day {entry}", w0[k]);
        entries.push(entry);
    }
    let latest = entries.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "W0 spans {span:.0}x; radius {radius:.3e} (sqrt {:.3e}); {outside} started outside; all inside by day {latest:.0} of {horizon:.0}",
        radius.sqrt()
    ))
}

fn c8_parameters() -> Outcome {
    let m = default_model();
    let s = spun(&m, 100.0);
    let cfg = SchemeConfig::default();
    let mut out = Vec::new();
    for (p, d) in [(ParamName::EpsA, 1e-4), (ParamName::LambdaHeat, 1e-3)] {
        let ladder = [d, 2.0 * d, 4.0 * d, 8.0 * d];
        let r = run_parameter_continuity(&m, &cfg, &s, p, &ladder, 8.0 * DAY).map_err(|e| e.to_string())?;
        let st = r.param_study.ok_or("no parameter study")?;
        let k = st.slope.ok_or("no slope")?;
        ensure!((k - 1.0).abs() <= 0.2, "{p:?}: slope {k} over {:?}", st.points);
        out.push(format!("{p:?} slope {k:.3}"));
    }
    Ok(out.join(", "))
}

fn c9_sync() -> Outcome {
    let m = default_model();
    let cfg = RunConfig::default();
    let scheme = cfg.scheme_config();
    let s = &cfg.sync;
    let (master, slave) =
        twin_pair(&m, &scheme, cfg.initial_state(&m), 1000.0 * DAY, s.slave_offset).map_err(|e| e.to_string())?;
    let nudging = s.nudging();
    ensure!(!nudging.observe_temperature, "temperature must not be observed");
    let rep = run_sync(&m, &scheme, &master, &slave, &nudging, s.horizon).map_err(|e| e.to_string())?;
    let ratio = rep.theta_ratio().ok_or("no theta series")?;
    ensure!(ratio < 1e-6, "theta_o difference ratio {ratio:e}");
    ensure!(rep.decays_over_final_half(), "W difference not monotone over the final half");
    let free = NudgingConfig { gamma_nudge: 0.0, ..nudging };
    let ctl = run_sync(&m, &scheme, &master, &slave, &free, s.horizon).map_err(|e| e.to_string())?;
    let ctl_ratio = ctl.theta_ratio().ok_or("no control theta series")?;
    ensure!(ctl_ratio > 1e-3, "control decayed too: ratio {ctl_ratio:e}");
    Ok(format!(
        "n_obs {}, gamma {:e} s^-1, {:.0} days: theta ratio {ratio:.2e}; control {ctl_ratio:.2e}",
        nudging.n_obs,
        nudging.gamma_nudge,
        s.horizon / DAY
    ))
}

fn series_bytes(m: &Model, s: &State, days: f64) -> Result<Vec<u8>, String> {
    let cfg = SchemeConfig { t_end: days * DAY, output_every: 24, ..Default::default() };
    let mut sink = SeriesSink::new(Vec::new(), Emit::Ndjson, false).map_err(|e| e.to_string())?;
    integrate(m, &cfg, RunState::new(s.clone()), &mut [&mut sink]).map_err(|e| e.to_string())?;
    sink.finish()?;
    Ok(sink.into_inner())
}

fn c10_persistence() -> Outcome {
    let m = default_model();
    let s = m.random_state(5, 0.05, 3.0);
    let a = series_bytes(&m, &s, 20.0)?;
    ensure!(a == series_bytes(&m, &s, 20.0)?, "reruns differ");
    ensure!(a == series_bytes(&m.with_exec(Exec::Sequential), &s, 20.0)?, "sequential run differs");

    let cfg = SchemeConfig::default();
    let bits = |r: &RunState| r.state.fields.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let whole = run_for(&m, &cfg, RunState::new(s.clone()), 20.0 * DAY).map_err(|e| e.to_string())?;
    let half = run_for(&m, &cfg, RunState::new(s), 10.0 * DAY).map_err(|e| e.to_string())?;
    let c = Checkpoint::new(&m, cfg.dt, &half);
    let back = parse_checkpoint(&checkpoint_to_string(&c)).map_err(|e| e.to_string())?;
    ensure!(bits(&back.run) == bits(&half), "checkpoint text round trip is not bit-exact");
    ensure!(back.run.history == half.history, "history lost in round trip");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("half.ckpt");
    write_checkpoint(&path, &c).map_err(|e| e.to_string())?;
    let disk = read_checkpoint(&path).map_err(|e| e.to_string())?;
    disk.check_compatible(&m).map_err(|e| e.to_string())?;
    let resumed = run_for(&m, &cfg, disk.run, 10.0 * DAY).map_err(|e| e.to_string())?;
    ensure!(bits(&resumed) == bits(&whole), "restart differs from the uninterrupted run");
    ensure!(resumed.steps == whole.steps, "step counters differ");
    Ok(format!("{} series bytes identical (parallel, sequential); restart bit-exact after {} steps", a.len(), whole.steps))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("1 constants", Duration::from_secs(1), c1_constants),
        ("2 Galerkin oracles", Duration::from_secs(60), c2_oracles),
        ("3 conservation", Duration::from_secs(60), c3_conservation),
        ("4 budget closure", Duration::from_secs(300), c4_budget),
        ("5 radiative equilibrium", Duration::from_secs(1), c5_equilibrium),
        ("6 tangent-linear model", Duration::from_secs(120), c6_tlm),
        ("7 dissipativity", Duration::from_secs(600), c7_dissipativity),
        ("8 parameter continuity", Duration::from_secs(600), c8_parameters),
        ("9 synchronization", Duration::from_secs(600), c9_sync),
        ("10 determinism and restart", Duration::from_secs(120), c10_persistence),
    ];
    // ACCEPTANCE_ONLY=4,7 runs a subset.
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let mut failed = Vec::new();
    for (name, budget, f) in criteria {
        let number = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == number)) {
            report(&format!("SKIP criterion {name}"));
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > budget => Err(format!("{msg}; over the {budget:?} budget")),
            other => other,
        };
        match &outcome {
            Ok(msg) => report(&format!("PASS criterion {name} ({:.2?}): {msg}", took)),
            Err(msg) => {
                report(&format!("FAIL criterion {name} ({:.2?}): {msg}", took));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
