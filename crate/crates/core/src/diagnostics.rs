//! Norms, energy budget and absorbing-set constants, all in SI units.

use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::params::PhysicalParams;
use crate::spectral::Fields;

fn wsum(v: &[f64], e: &[f64], p: i32) -> f64 {
    v.iter().zip(e).map(|(v, l)| l.powi(p) * v * v).sum()
}

/// Squared weak norm: |grad psi_t|^2 + |grad psi_c|^2 + kappa |grad psi_o|^2
/// + kappa |psi_o|^2 / L_R^2 + mu gamma_a |dT_a|^2 + mu gamma_o |theta_o|^2.
pub fn w_norm(model: &Model, x: &Fields) -> f64 {
    let b = &model.basis;
    let c = &model.coeffs;
    let s = &model.scales;
    let d = &model.derived;
    let p = &model.params;
    let ps2 = s.psi * s.psi;
    let l2 = s.length * s.length;
    ps2 * (wsum(x.psi_t(), &b.eig_atm, 1)
        + wsum(x.psi_c(), &b.eig_atm, 1)
        + d.kappa * (wsum(x.psi_o(), &b.eig_ocn, 1) + c.inv_lr_sq * wsum(x.psi_o(), &b.eig_ocn, 0)))
        + d.mu * p.gamma_a * l2 * c.temp_coeff * c.temp_coeff * wsum(x.psi_c(), &b.eig_atm, 0)
        + d.mu * p.gamma_o * l2 * wsum(x.theta_o(), &b.eig_ocn, 0)
}

/// Squared strong norm: |Δψ|^2 terms + kappa |grad psi_o|^2 / L_R^2
/// + mu (4 gamma_a f0^2 / R*^2 |grad psi_c|^2 + gamma_o |grad T_o|^2).
pub fn s_norm(model: &Model, x: &Fields) -> f64 {
    let b = &model.basis;
    let s = &model.scales;
    let d = &model.derived;
    let p = &model.params;
    let ps2 = s.psi * s.psi;
    let l2 = s.length * s.length;
    ps2 / l2
        * (wsum(x.psi_t(), &b.eig_atm, 2)
            + wsum(x.psi_c(), &b.eig_atm, 2)
            + d.kappa * wsum(x.psi_o(), &b.eig_ocn, 2))
        + d.kappa * ps2 / (p.L_R * p.L_R) * wsum(x.psi_o(), &b.eig_ocn, 1)
        + d.mu
            * (4.0 * p.gamma_a * p.f0 * p.f0 / (p.R_star * p.R_star) * ps2 * wsum(x.psi_c(), &b.eig_atm, 1)
                + p.gamma_o * wsum(x.theta_o(), &b.eig_ocn, 1))
}

/// Per-coefficient weights w such that w_norm = sum w x^2.
pub fn w_weights(model: &Model) -> Fields {
    let s = &model.scales;
    let d = &model.derived;
    let p = &model.params;
    let ps2 = s.psi * s.psi;
    let l2 = s.length * s.length;
    let mut w = Fields::zeros(model.n_atm(), model.n_ocn());
    let dop = model.d_op();
    let (wt, wc, wo, wth) = w.parts_mut();
    for i in 0..wt.len() {
        wt[i] = ps2 * dop.psi_t()[i];
        wc[i] = ps2 * model.basis.eig_atm[i] + d.mu * p.gamma_a * l2 * model.coeffs.temp_coeff.powi(2);
    }
    for j in 0..wo.len() {
        wo[j] = ps2 * d.kappa * dop.psi_o()[j];
        wth[j] = d.mu * p.gamma_o * l2;
    }
    w
}

/// d(w_norm / 2)/dt, s^-1 times energy, from a tendency.
pub fn energy_rate(model: &Model, x: &Fields, tendency: &Fields) -> f64 {
    let w = w_weights(model);
    let f0 = model.params.f0;
    f0 * w
        .data
        .iter()
        .zip(&x.data)
        .zip(&tendency.data)
        .map(|((w, x), t)| w * x * t)
        .sum::<f64>()
}

/// Every named term of the energy identity at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// s.
    pub time: f64,
    /// Half the squared weak norm.
    pub ke_pe: f64,
    pub fric_interlayer: f64,
    pub fric_internal: f64,
    pub fric_bottom: f64,
    pub visc: f64,
    pub thermal_diff: f64,
    pub heat_exch: f64,
    pub ir_sink: f64,
    /// Shortwave work on the anomalies.
    pub sw_input: f64,
    /// Work of the longwave and exchange fluxes against the reference temperatures.
    pub ref_work: f64,
    /// (f0 / p_delta) ∫ psi_c ω.
    pub omega_work: f64,
    /// ∫ ω, reported only.
    pub omega_integral: f64,
    /// Sources minus sinks.
    pub net: f64,
    /// |d ke_pe/dt - net| from centered differences; absent at the ends of a series.
    pub ddt_residual: Option<f64>,
}

impl EnergyBudget {
    pub fn sinks(&self) -> f64 {
        self.fric_interlayer
            + self.fric_internal
            + self.fric_bottom
            + self.visc
            + self.thermal_diff
            + self.heat_exch
            + self.ir_sink
    }
}

/// Energy budget at state `x`, honoring the model's term switches.
pub fn energy_budget(model: &Model, x: &Fields, tendency: &Fields, time: f64) -> EnergyBudget {
    let b = &model.basis;
    let c = &model.coeffs;
    let s = &model.scales;
    let d = &model.derived;
    let p = &model.params;
    let sw = &model.switches;
    let g = &model.grid;
    let ps2 = s.psi * s.psi;
    let l2 = s.length * s.length;
    let on = |f: bool| if f { 1.0 } else { 0.0 };

    let a: Vec<f64> = x.psi_t().iter().zip(x.psi_c()).map(|(t, c)| t + c).collect();
    let mut g_po = vec![0.0; b.n_atm()];
    b.grad_ao.apply(x.psi_o(), &mut g_po);
    let a_g_o: f64 = a.iter().zip(&g_po).map(|(a, g)| a * g).sum();
    let grad_a = wsum(&a, &b.eig_atm, 1);
    let grad_o = wsum(x.psi_o(), &b.eig_ocn, 1);
    let fric_interlayer = on(sw.interlayer_friction)
        * ps2
        * (0.5 * p.k_d * (grad_a - a_g_o) - d.kappa * d.drag * (a_g_o - grad_o));
    let fric_internal = on(sw.internal_friction) * 2.0 * p.k_d_prime * ps2 * wsum(x.psi_c(), &b.eig_atm, 1);
    let fric_bottom = on(sw.bottom_friction) * p.r * d.kappa * ps2 * grad_o;
    let visc = on(sw.viscosity)
        * p.nu_S
        * ps2
        / l2
        * (wsum(x.psi_t(), &b.eig_atm, 2) + wsum(x.psi_c(), &b.eig_atm, 2) + d.kappa * wsum(x.psi_o(), &b.eig_ocn, 2));
    let thermal_diff = on(sw.thermal_diffusion)
        * d.nu_T
        * (c.temp_coeff * c.temp_coeff * wsum(x.psi_c(), &b.eig_atm, 1) + wsum(x.theta_o(), &b.eig_ocn, 1));

    let h = model.heating(x);
    let (dta, th) = model.anomalies_on_grid(x);
    let n = g.len();
    let diff: Vec<f64> = (0..n).map(|k| dta[k] - th[k]).collect();
    let heat_exch = on(sw.heat_exchange) * d.mu * p.lambda_heat * l2 * g.inner(&diff, &diff);
    let (e, sb) = (p.eps_a, p.sigma_B);
    let ir_density: Vec<f64> = (0..n)
        .map(|k| {
            let (ta, to) = (h.ta[k], h.to[k]);
            let a4 = ta.abs().powi(3) * ta;
            let o4 = to.abs().powi(3) * to;
            (1.0 - e) * sb * to.abs().powi(5) + e * sb * ta.abs().powi(5) + e * sb * (a4 - o4) * (ta - to)
        })
        .collect();
    let ir_sink = on(sw.longwave) * d.mu * l2 * g.integrate(&ir_density);
    let ref_work = -d.mu * l2 * (model.t_a0 * g.integrate(&h.qa) + model.t_o0 * g.integrate(&h.qo))
        - on(sw.heat_exchange) * d.mu * p.lambda_heat * (model.t_a0 - model.t_o0) * l2 * g.integrate(&diff);
    let sw_input = d.mu * l2 * (g.inner(&h.ra, &dta) + g.inner(&h.ro, &th));

    let omega = model.omega_diagnostic(x, tendency).unwrap_or_else(|_| vec![0.0; b.n_atm()]);
    let omega_work = p.f0 / p.p_delta
        * s.psi
        * l2
        * x.psi_c().iter().zip(&omega).map(|(a, w)| a * w).sum::<f64>();
    let omega_integral = model.omega_integral(&omega);

    let mut out = EnergyBudget {
        time,
        ke_pe: 0.5 * w_norm(model, x),
        fric_interlayer,
        fric_internal,
        fric_bottom,
        visc,
        thermal_diff,
        heat_exch,
        ir_sink,
        sw_input,
        ref_work,
        omega_work,
        omega_integral,
        net: 0.0,
        ddt_residual: None,
    };
    out.net = sw_input + ref_work - out.sinks();
    out
}

/// Budget of a state, computing its tendency first.
pub fn budget_of(model: &Model, x: &Fields, time: f64) -> crate::Result<EnergyBudget> {
    let t = model.tendency(x)?;
    Ok(energy_budget(model, x, &t, time))
}

/// Fills `ddt_residual` of the interior records by centered differences.
pub fn fill_ddt_residuals(records: &mut [EnergyBudget]) {
    let n = records.len();
    for k in 0..n {
        records[k].ddt_residual = if k == 0 || k + 1 == n {
            None
        } else {
            let (a, b) = (&records[k - 1], &records[k + 1]);
            let ddt = (b.ke_pe - a.ke_pe) / (b.time - a.time);
            Some((ddt - records[k].net).abs())
        };
    }
}

/// Origin of the forcing bound E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EBoundMode {
    /// Supplied analytic bound.
    Analytic,
    /// Measured from forcing work along a run.
    Empirical,
}

/// Absorbing-ball constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorbingSet {
    /// Decay rate, s^-1.
    pub lambda0: f64,
    /// Squared radius 2E / Lambda0.
    pub rho_w_sq: f64,
    pub e_bound: f64,
    pub mode: EBoundMode,
}

impl AbsorbingSet {
    /// Time after which a trajectory with squared weak norm `initial_norm_sq`
    /// is inside the ball, s; zero when already inside.
    pub fn entry_time(&self, initial_norm_sq: f64) -> f64 {
        let arg = self.lambda0 * initial_norm_sq / self.e_bound;
        if arg <= 1.0 {
            0.0
        } else {
            arg.ln() / self.lambda0
        }
    }
}

/// Lambda0 = lambda_1 min{nu_S, nu_T/gamma_o, nu_T/gamma_a, r L_R^2}, with
/// `lambda_1` in m^-2.
pub fn absorbing_set(p: &PhysicalParams, lambda_1: f64, e_bound: f64, mode: EBoundMode) -> AbsorbingSet {
    let rates = [
        p.nu_S,
        p.nu_T_tilde / p.gamma_o,
        p.nu_T_tilde / p.gamma_a,
        p.r * p.L_R * p.L_R,
    ];
    let lambda0 = lambda_1 * rates.into_iter().fold(f64::INFINITY, f64::min);
    AbsorbingSet { lambda0, rho_w_sq: 2.0 * e_bound / lambda0, e_bound, mode }
}
