use std::f64::consts::PI;

use maooam_core::diagnostics::{
    absorbing_set, budget_of, energy_budget, energy_rate, fill_ddt_residuals, s_norm, w_norm, EBoundMode,
};
use maooam_core::{Model, ModelConfig, PhysicalParams, Resolution, ShortwaveConfig, Switches};
use proptest::prelude::*;

fn model(res: Resolution) -> Model {
    Model::new(&ModelConfig { resolution: res, ..Default::default() }).unwrap()
}

fn flat_model() -> Model {
    let sw = ShortwaveConfig { R1_a_pattern: vec![], R1_o_pattern: vec![], ..Default::default() };
    Model::new(&ModelConfig { resolution: Resolution::square(4), shortwave: sw, ..Default::default() }).unwrap()
}

#[test]
fn zero_state_norms_vanish() {
    let m = model(Resolution::square(4));
    let z = m.zero_state();
    assert_eq!(w_norm(&m, &z.fields), 0.0);
    assert_eq!(s_norm(&m, &z.fields), 0.0);
}

#[test]
fn single_ocean_mode_norms_match_hand_values() {
    let m = model(Resolution::square(4));
    let p = &m.params;
    let d = &m.derived;
    let ell = p.L / PI;
    let psi = ell * ell * p.f0;
    for (mm, nn) in [(1u32, 1u32), (2, 3), (4, 1)] {
        let j = m.basis.ocn_index(mm, nn).unwrap();
        let mut x = m.zero_state().fields;
        x.psi_o_mut()[j] = 1.0;
        let lam = PI * PI * ((mm as f64 / p.L).powi(2) + (nn as f64 / (p.alpha * p.L)).powi(2));
        // Unit nondimensional coefficient: field amplitude psi, L2 norm^2 of the mode ell^2.
        let phi_sq = psi * psi * ell * ell;
        let w = d.kappa * (lam + 1.0 / (p.L_R * p.L_R)) * phi_sq;
        let s = d.kappa * lam * lam * phi_sq + d.kappa * lam / (p.L_R * p.L_R) * phi_sq;
        assert!((w_norm(&m, &x) - w).abs() <= 1e-12 * w);
        assert!((s_norm(&m, &x) - s).abs() <= 1e-12 * s);
    }
}

#[test]
fn single_temperature_mode_norms() {
    let m = model(Resolution::square(4));
    let p = &m.params;
    let d = &m.derived;
    let ell = p.L / PI;
    let j = m.basis.ocn_index(2, 1).unwrap();
    let mut x = m.zero_state().fields;
    x.theta_o_mut()[j] = 3.0;
    let lam = PI * PI * ((2.0 / p.L).powi(2) + (1.0 / (p.alpha * p.L)).powi(2));
    let w = d.mu * p.gamma_o * 9.0 * ell * ell;
    let s = d.mu * p.gamma_o * 9.0 * ell * ell * lam;
    assert!((w_norm(&m, &x) - w).abs() <= 1e-12 * w);
    assert!((s_norm(&m, &x) - s).abs() <= 1e-12 * s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_are_quadratic(seed in 0u64..1000, c in -5.0f64..5.0) {
        let m = model(Resolution::square(3));
        let x = m.random_state(seed, 0.1, 2.0).fields;
        let mut y = x.clone();
        y.scale(c);
        let (w, s) = (w_norm(&m, &x), s_norm(&m, &x));
        prop_assert!((w_norm(&m, &y) - c * c * w).abs() <= 1e-12 * w.max(1e-300) * (1.0 + c * c));
        prop_assert!((s_norm(&m, &y) - c * c * s).abs() <= 1e-12 * s.max(1e-300) * (1.0 + c * c));
    }
}

fn budget_scale(b: &maooam_core::EnergyBudget) -> f64 {
    [
        b.fric_interlayer,
        b.fric_internal,
        b.fric_bottom,
        b.visc,
        b.thermal_diff,
        b.heat_exch,
        b.ir_sink,
        b.sw_input,
        b.ref_work,
    ]
    .iter()
    .map(|v| v.abs())
    .sum()
}

#[test]
fn tendency_rate_matches_budget_terms() {
    let m = model(Resolution::square(5));
    for seed in 0..8 {
        let x = m.random_state(seed, 0.05, 3.0).fields;
        let t = m.tendency(&x).unwrap();
        let b = energy_budget(&m, &x, &t, 0.0);
        let rate = energy_rate(&m, &x, &t);
        let rel = (rate - b.net).abs() / budget_scale(&b);
        assert!(rel < 1e-8, "seed {seed}: rate {rate:e} net {:e} rel {rel:e}", b.net);
        for v in [b.fric_interlayer, b.fric_internal, b.fric_bottom, b.visc, b.thermal_diff, b.heat_exch, b.ir_sink] {
            assert!(v >= 0.0);
        }
    }
}

#[test]
fn budget_honors_switches() {
    let base = model(Resolution::square(4));
    let switch_sets = [
        Switches { longwave: false, ..Switches::all() },
        Switches { shortwave: false, heat_exchange: false, ..Switches::all() },
        Switches { interlayer_friction: false, beta: false, ..Switches::all() },
        Switches::diagonal_decay(),
    ];
    for sw in switch_sets {
        let m = base.with_switches(sw);
        let x = m.random_state(11, 0.05, 3.0).fields;
        let t = m.tendency(&x).unwrap();
        let b = energy_budget(&m, &x, &t, 0.0);
        let rate = energy_rate(&m, &x, &t);
        assert!((rate - b.net).abs() <= 1e-8 * budget_scale(&b), "{sw:?}");
    }
}

#[test]
fn jacobian_terms_conserve_energy() {
    let m = model(Resolution::square(5)).with_switches(Switches::pure_jacobian());
    for seed in 0..5 {
        let x = m.random_state(seed, 0.1, 3.0).fields;
        let t = m.tendency(&x).unwrap();
        let w = maooam_core::diagnostics::w_weights(&m);
        let scale: f64 = (0..x.dim()).map(|i| (w.data[i] * x.data[i] * t.data[i]).abs()).sum::<f64>() * m.params.f0;
        let rate = energy_rate(&m, &x, &t);
        assert!(rate.abs() <= 1e-10 * scale, "seed {seed}: {rate:e} vs {scale:e}");
        let b = energy_budget(&m, &x, &t, 0.0);
        assert_eq!(b.net, 0.0);
    }
}

#[test]
fn equilibrium_budget_is_balanced() {
    let m = flat_model();
    let x = m.zero_state().fields;
    let t = m.tendency(&x).unwrap();
    assert!(t.max_abs() < 1e-12, "tendency {:e}", t.max_abs());
    let b = energy_budget(&m, &x, &t, 0.0);
    for v in [b.ke_pe, b.fric_interlayer, b.fric_internal, b.fric_bottom, b.visc, b.thermal_diff, b.heat_exch, b.sw_input] {
        assert_eq!(v, 0.0);
    }
    // The reference-temperature work is exactly the longwave loss of the uniform state.
    assert!((b.ref_work - b.ir_sink).abs() <= 1e-12 * b.ir_sink.abs());
    assert!(b.omega_work.abs() < 1e-30);
}

#[test]
fn ddt_residual_only_interior() {
    let m = model(Resolution::square(3));
    let mut recs: Vec<_> = (0..4)
        .map(|k| budget_of(&m, &m.random_state(k, 0.01, 1.0).fields, k as f64).unwrap())
        .collect();
    fill_ddt_residuals(&mut recs);
    assert!(recs[0].ddt_residual.is_none() && recs[3].ddt_residual.is_none());
    assert!(recs[1].ddt_residual.is_some() && recs[2].ddt_residual.is_some());
}

#[test]
fn absorbing_set_constants() {
    let p = PhysicalParams::default();
    let m = model(Resolution::default());
    let a = absorbing_set(&p, m.basis.lambda_1_si(), 1.0, EBoundMode::Analytic);
    assert!(a.lambda0 >= 1e-19 && a.lambda0 <= 1e-17, "{:e}", a.lambda0);
    let b = absorbing_set(&p, m.basis.lambda_1_si(), 2.0, EBoundMode::Analytic);
    assert!((b.rho_w_sq - 2.0 * a.rho_w_sq).abs() <= 1e-15 * b.rho_w_sq);

    let nu = 3.0;
    let q = PhysicalParams {
        nu_S: nu,
        nu_T_tilde: nu * 1e7,
        gamma_a: 1e7,
        gamma_o: 1e7,
        r: nu / (2e4 * 2e4),
        L_R: 2e4,
        ..p
    };
    let c = absorbing_set(&q, 2.5e-13, 1.0, EBoundMode::Analytic);
    assert!((c.lambda0 - 2.5e-13 * nu).abs() <= 1e-15 * c.lambda0);
    assert_eq!(c.entry_time(0.0), 0.0);
    let t0 = c.entry_time(10.0 / c.lambda0);
    assert!((t0 - 10f64.ln() / c.lambda0).abs() <= 1e-12 * t0);
}
