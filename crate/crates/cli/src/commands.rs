use std::fs::{self, OpenOptions};
use std::io::BufWriter;

use maooam_core::diagnostics::{absorbing_set, w_norm, EBoundMode};
use maooam_core::experiments::{
    run_continuity, run_galerkin_convergence, run_parameter_continuity, run_sync, search_n_obs, twin_pair,
    NudgingConfig, TwinReport,
};
use maooam_core::io::{read_checkpoint, write_checkpoint, Checkpoint, RunConfig, SeriesSink};
use maooam_core::model::reference_temperatures;
use maooam_core::params::{derive, determining_modes_constants, equilibrium_rows, radiative_equilibrium, Admissibility};
use maooam_core::timestepper::{integrate, run_for, Sink};
use maooam_core::tlm::lyapunov_spectrum;
use maooam_core::{oracle, Error, Model, Resolution, RunState, SpectralBasis, State};
use serde::Serialize;

use crate::setup::{io_error, load, CliError, Outputs, Result};
use crate::{Command, Global};

const DAY: f64 = 86400.0;

pub fn run(g: &Global, cmd: &Command) -> Result<()> {
    let mut cfg = load(g)?;
    match cmd {
        Command::Equilibrium { ra, ro, eps_a, lambda } => {
            if let Some(e) = eps_a {
                cfg.physical.eps_a = *e;
            }
            if let Some(l) = lambda {
                cfg.physical.lambda_heat = *l;
            }
            equilibrium(&cfg, ra.zip(*ro))
        }
        Command::Constants { e_bound, c_rho } => constants(&cfg, *e_bound, *c_rho),
        Command::Validate { cases } => validate(g, &cfg, *cases),
        Command::Simulate { restart } => with_outputs(g, "simulate", &cfg, |out| simulate(g, &cfg, restart.as_deref(), out)),
        Command::Tlm { n_vectors, horizon, trace } => {
            if let Some(n) = n_vectors {
                cfg.tlm.n_vectors = *n;
            }
            if let Some(h) = horizon {
                cfg.tlm.horizon = *h;
            }
            with_outputs(g, "tlm", &cfg, |out| tlm(&cfg, *trace, out))
        }
        Command::Sync { n_obs, gamma, bisect, no_control, horizon } => {
            if let Some(n) = n_obs {
                cfg.sync.n_obs = *n;
            }
            if let Some(x) = gamma {
                cfg.sync.gamma_nudge = *x;
            }
            if let Some(h) = horizon {
                cfg.sync.horizon = *h;
            }
            cfg.sync.bisect |= *bisect;
            cfg.sync.control &= !*no_control;
            with_outputs(g, "sync", &cfg, |out| sync(&cfg, out))
        }
        Command::Continuity { relative_size, horizon } => {
            if let Some(r) = relative_size {
                cfg.continuity.relative_size = *r;
            }
            if let Some(h) = horizon {
                cfg.continuity.horizon = *h;
            }
            with_outputs(g, "continuity", &cfg, |out| continuity(&cfg, out))
        }
        Command::ParamSweep { param, deltas, horizon } => {
            if let Some(p) = param {
                cfg.param_sweep.param = *p;
            }
            if !deltas.is_empty() {
                cfg.param_sweep.deltas = deltas.clone();
            }
            if let Some(h) = horizon {
                cfg.param_sweep.horizon = *h;
            }
            with_outputs(g, "param-sweep", &cfg, |out| param_sweep(&cfg, out))
        }
        Command::Converge { ladder, horizon } => {
            if !ladder.is_empty() {
                cfg.converge.ladder = ladder.clone();
            }
            if let Some(h) = horizon {
                cfg.converge.horizon = *h;
            }
            with_outputs(g, "converge", &cfg, |out| converge(&cfg, out))
        }
    }
}

fn with_outputs(g: &Global, command: &str, cfg: &RunConfig, f: impl FnOnce(&mut Outputs) -> Result<()>) -> Result<()> {
    let mut out = Outputs::create(&g.out, command, cfg)?;
    let result = f(&mut out);
    out.finish(result)
}

fn show(name: &str, value: impl std::fmt::Display, note: &str) {
    let v = value.to_string();
    if note.is_empty() {
        println!("{name:<20} = {v}");
    } else {
        println!("{name:<20} = {v:<24} # {note}");
    }
}

fn model_of(cfg: &RunConfig) -> Result<Model> {
    Ok(Model::new(&cfg.model_config())?)
}

/// Seeded initial condition after the configured spinup, clock reset to zero.
fn spun_up(model: &Model, cfg: &RunConfig) -> Result<State> {
    let ic = cfg.initial_state(model);
    if cfg.numerics.spinup <= 0.0 {
        return Ok(ic);
    }
    let run = run_for(model, &cfg.scheme_config(), RunState::new(ic), cfg.numerics.spinup)?;
    Ok(State { time: 0.0, ..run.state })
}

fn equilibrium(cfg: &RunConfig, scalar: Option<(f64, f64)>) -> Result<()> {
    let p = &cfg.physical;
    derive(p)?;
    match scalar {
        Some((ra, ro)) => {
            let (ta, to) = radiative_equilibrium(p, ra, ro)?;
            let r = equilibrium_rows(p, ta, to, ra, ro);
            show("T_a0", format!("{ta:.6}"), "K");
            show("T_o0", format!("{to:.6}"), "K");
            show("residual_a", format!("{:.3e}", r[0]), "W m^-2");
            show("residual_o", format!("{:.3e}", r[1]), "W m^-2");
        }
        None => {
            let (ta, to) = reference_temperatures(p, &cfg.shortwave)?;
            show("T_a0", format!("{ta:.6}"), "K, configured shortwave");
            show("T_o0", format!("{to:.6}"), "K, configured shortwave");
        }
    }
    Ok(())
}

fn constants(cfg: &RunConfig, e_bound: f64, c_rho: Option<f64>) -> Result<()> {
    let p = &cfg.physical;
    let d = derive(p)?;
    let (ta, to) = reference_temperatures(p, &cfg.shortwave)?;
    let lowest = SpectralBasis::build(Resolution::square(1), p.L, p.alpha, cfg.numerics.tensor_cap)?;
    let lambda_1 = lowest.lambda_1_si();
    let abs = absorbing_set(p, lambda_1, e_bound, EBoundMode::Analytic);
    let c_rho = c_rho.unwrap_or(abs.rho_w_sq);
    let dm = determining_modes_constants(p, &d, &cfg.shortwave, lambda_1, c_rho);
    let e = |v: f64| format!("{v:.6e}");
    show("kappa", format!("{:.4}", d.kappa), "ocean/atmosphere weight ratio");
    show("mu_gamma_a", format!("{:.4}", d.mu * p.gamma_a), "linearized exchange x gamma_a");
    show("mu_gamma_o", format!("{:.4}", d.mu * p.gamma_o), "linearized exchange x gamma_o");
    show("eps_a_tilde", format!("{:.6}", d.eps_a_tilde), "effective emissivity factor");
    show("drag", e(d.drag), "wind-stress drag, s^-1");
    show("T_a0", format!("{ta:.4}"), "K");
    show("T_o0", format!("{to:.4}"), "K");
    show("lambda_1", e(lambda_1), "lowest Laplacian eigenvalue, m^-2");
    show("Lambda_0", e(abs.lambda0), "absorbing decay rate, s^-1");
    show("E", e(e_bound), "forcing-work bound (input)");
    show("rho_W_sq", e(abs.rho_w_sq), "2 E / Lambda_0");
    show("C_rho", e(c_rho), "defaults to rho_W_sq");
    show("varsigma", e(dm.varsigma), "dissipation floor, s^-1");
    show("lipschitz_bound", format!("{:.4}", dm.lipschitz_bound), "|R2_o| max coalbedo slope, W m^-2 K^-1");
    show("lipschitz_ok", dm.lipschitz_ok, "bound below lambda");
    match dm.admissibility {
        Admissibility::Unconditional => show("eps_star", "unconditional", "C_rho <= varsigma"),
        Admissibility::EpsStar(s) => show("eps_star", e(s), "(C_rho - varsigma)^(-1/2)"),
    }
    if let Some(n) = dm.n_order_estimate {
        show("N_modes", e(n), "L^2 / (nu_S eps_star^2)");
    }
    Ok(())
}

fn validate(g: &Global, cfg: &RunConfig, cases: usize) -> Result<()> {
    let checks = oracle::run_suite(cfg.numerics.resolution, cases, cfg.numerics.seed)?;
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<24} value {:.3e} tolerance {:.1e} ({} cases)", c.name, c.value, c.tolerance, c.cases);
    }
    if g.out.exists() {
        let path = g.out.join("validate.json");
        fs::write(&path, serde_json::to_string_pretty(&checks)? + "\n").map_err(|e| io_error(&path, e))?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn simulate(g: &Global, cfg: &RunConfig, restart: Option<&std::path::Path>, out: &mut Outputs) -> Result<()> {
    let model = model_of(cfg)?;
    let scheme = cfg.scheme_config();
    let series = out.artifact(&format!("series.{}", g.emit.extension()));
    let (run, append) = match restart {
        Some(path) => {
            let c = read_checkpoint(path)?;
            c.check_compatible(&model)?;
            (c.run, series.exists())
        }
        None => {
            let run = RunState::new(spun_up(&model, cfg)?);
            write_checkpoint(&out.artifact("initial.ckpt"), &Checkpoint::new(&model, scheme.dt, &run))?;
            (run, false)
        }
    };
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&series)
        .map_err(|e| io_error(&series, e))?;
    let mut sink = SeriesSink::new(BufWriter::new(file), g.emit, append).map_err(|e| io_error(&series, e))?;
    let result = integrate(&model, &scheme, run, &mut [&mut sink]);
    let flushed = sink.finish();
    match result {
        Ok(run) => {
            flushed.map_err(|m| io_error(&series, std::io::Error::other(m)))?;
            write_checkpoint(&out.artifact("final.ckpt"), &Checkpoint::new(&model, scheme.dt, &run))?;
            show("steps", run.steps, "");
            show("time", format!("{:.3}", run.state.time * model.scales.time), "s");
            show("w_norm", format!("{:.6e}", w_norm(&model, &run.state.fields)), "");
            Ok(())
        }
        Err(e) => {
            if let Error::Overflow { last_valid, .. } | Error::Sink { last_valid, .. } = &e {
                write_checkpoint(&out.artifact("abort.ckpt"), &Checkpoint::new(&model, scheme.dt, last_valid))?;
            }
            Err(e.into())
        }
    }
}

fn tlm(cfg: &RunConfig, trace: bool, out: &mut Outputs) -> Result<()> {
    let model = model_of(cfg)?;
    let s0 = spun_up(&model, cfg)?;
    let rep = lyapunov_spectrum(&model, &s0, &cfg.tlm, trace)?;
    out.write_json("lyapunov.json", &rep)?;
    let per_day: Vec<String> = rep.exponents.iter().map(|l| format!("{:.4e}", l * DAY)).collect();
    show("exponents_per_day", per_day.join(" "), "");
    show("ky_dimension", format!("{:.4}", rep.ky_dimension), "");
    show("n_star", rep.n_star.map_or("none".into(), |n| n.to_string()), "");
    Ok(())
}

#[derive(Serialize)]
struct TwinPoint {
    time: f64,
    w_norm_diff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi_o: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_o: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tlm_diff: Option<f64>,
}

fn points(rep: &TwinReport) -> Vec<TwinPoint> {
    let c = rep.components.as_ref();
    let at = |v: Option<&Vec<f64>>, i: usize| v.and_then(|v| v.get(i).copied());
    (0..rep.times.len())
        .map(|i| TwinPoint {
            time: rep.times[i],
            w_norm_diff: rep.w_norm_diff[i],
            psi_t: at(c.map(|c| &c.psi_t), i),
            psi_c: at(c.map(|c| &c.psi_c), i),
            psi_o: at(c.map(|c| &c.psi_o), i),
            theta_o: at(c.map(|c| &c.theta_o), i),
            tlm_diff: at(rep.tlm_diff.as_ref(), i),
        })
        .collect()
}

#[derive(Serialize)]
struct SyncSummary {
    n_obs: usize,
    searched_n_obs: Option<usize>,
    gamma_nudge: f64,
    theta_ratio: Option<f64>,
    theta_decay_rate: Option<f64>,
    decays_over_final_half: bool,
    control_theta_ratio: Option<f64>,
    control_decays_over_final_half: Option<bool>,
}

fn sync(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = model_of(cfg)?;
    let scheme = cfg.scheme_config();
    let s = &cfg.sync;
    let ic = cfg.initial_state(&model);
    let (master, slave) = twin_pair(&model, &scheme, ic, cfg.numerics.spinup, s.slave_offset)?;
    let mut nudging = s.nudging();
    let searched = if s.bisect {
        let found = search_n_obs(&model, &scheme, &master, &slave, &nudging, s.screen_horizon, s.screen_tolerance)?;
        if let Some(n) = found {
            nudging.n_obs = n;
        }
        found
    } else {
        None
    };
    let rep = run_sync(&model, &scheme, &master, &slave, &nudging, s.horizon)?;
    out.write_ndjson("sync.ndjson", &points(&rep))?;
    let control = if s.control {
        let free = NudgingConfig { gamma_nudge: 0.0, ..nudging };
        let c = run_sync(&model, &scheme, &master, &slave, &free, s.horizon)?;
        out.write_ndjson("sync_control.ndjson", &points(&c))?;
        Some(c)
    } else {
        None
    };
    let summary = SyncSummary {
        n_obs: nudging.n_obs,
        searched_n_obs: searched,
        gamma_nudge: nudging.gamma_nudge,
        theta_ratio: rep.theta_ratio(),
        theta_decay_rate: rep.theta_decay_rate,
        decays_over_final_half: rep.decays_over_final_half(),
        control_theta_ratio: control.as_ref().and_then(TwinReport::theta_ratio),
        control_decays_over_final_half: control.as_ref().map(TwinReport::decays_over_final_half),
    };
    out.write_json("sync_summary.json", &summary)?;
    let opt = |v: Option<f64>| v.map_or("none".into(), |v| format!("{v:.4e}"));
    show("n_obs", summary.n_obs, "");
    if s.bisect {
        let found = searched.map_or("none".into(), |n| n.to_string());
        show("searched_n_obs", found, "smallest n_obs passing the screening run");
    }
    show("theta_ratio", opt(summary.theta_ratio), "final / initial theta_o difference");
    show("decays_over_final_half", summary.decays_over_final_half, "");
    if control.is_some() {
        show("control_theta_ratio", opt(summary.control_theta_ratio), "without nudging");
    }
    Ok(())
}

#[derive(Serialize)]
struct ContinuitySummary {
    relative_size: f64,
    horizon: f64,
    initial_distance: f64,
    final_distance: f64,
    envelope_rate: Option<f64>,
}

fn continuity(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = model_of(cfg)?;
    let c = &cfg.continuity;
    let base = spun_up(&model, cfg)?;
    let mut pert = model.random_state(cfg.numerics.seed.wrapping_add(1), 1.0, 1.0).fields;
    let scale = c.relative_size * (w_norm(&model, &base.fields) / w_norm(&model, &pert)).sqrt();
    pert.scale(scale);
    let rep = run_continuity(&model, &cfg.scheme_config(), &base, &pert, c.horizon, c.with_tlm)?;
    out.write_ndjson("continuity.ndjson", &points(&rep))?;
    let summary = ContinuitySummary {
        relative_size: c.relative_size,
        horizon: c.horizon,
        initial_distance: rep.w_norm_diff.first().copied().unwrap_or(0.0),
        final_distance: rep.w_norm_diff.last().copied().unwrap_or(0.0),
        envelope_rate: rep.envelope_rate,
    };
    out.write_json("continuity.json", &summary)?;
    show("initial_distance", format!("{:.4e}", summary.initial_distance), "");
    show("final_distance", format!("{:.4e}", summary.final_distance), "");
    show("envelope_rate", summary.envelope_rate.map_or("none".into(), |r| format!("{r:.4e}")), "s^-1");
    Ok(())
}

#[derive(Serialize)]
struct Cell {
    param: maooam_core::experiments::ParamName,
    delta: f64,
    max_distance: f64,
}

fn param_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = model_of(cfg)?;
    let ps = &cfg.param_sweep;
    let ic = spun_up(&model, cfg)?;
    let rep = run_parameter_continuity(&model, &cfg.scheme_config(), &ic, ps.param, &ps.deltas, ps.horizon)?;
    let study = rep.param_study.as_ref().expect("parameter continuity reports its study");
    for (k, (delta, max_distance)) in study.points.iter().enumerate() {
        let cell = Cell { param: ps.param, delta: *delta, max_distance: *max_distance };
        out.write_json(&format!("cell_{k:03}/cell.json"), &cell)?;
    }
    out.write_json("param_sweep.json", study)?;
    for (d, m) in &study.points {
        show(&format!("delta {d:.3e}"), format!("{m:.4e}"), "max W distance");
    }
    show("slope", study.slope.map_or("none".into(), |s| format!("{s:.4}")), "log-log");
    Ok(())
}

fn converge(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let ladder = cfg.converge.resolutions()?;
    let rep = run_galerkin_convergence(
        &cfg.model_config(),
        &cfg.scheme_config(),
        &ladder,
        cfg.numerics.seed,
        cfg.converge.horizon,
    )?;
    out.write_json("converge.json", &rep)?;
    for (r, d) in rep.resolutions.iter().zip(&rep.distance_to_finest) {
        show(&r.to_string(), format!("{d:.4e}"), "distance to finest");
    }
    show("monotone", rep.monotone, "");
    Ok(())
}
