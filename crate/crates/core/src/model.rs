//! Coupled tendency with ω eliminated, split into an implicit diagonal part
//! and an explicit remainder.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::params::{
    derive, radiative_equilibrium_with, DerivedParams, NewtonOptions, PhysicalParams,
    ShortwaveConfig, ShortwaveMode,
};
use crate::spectral::{
    Fields, Grid, Resolution, SpectralBasis, State, Zonal, DEFAULT_TENSOR_CAP,
};

/// Conversion between SI and internal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scales {
    /// L / pi, m.
    pub length: f64,
    /// 1 / f0, s.
    pub time: f64,
    /// (L / pi)^2 f0, m^2 s^-1.
    pub psi: f64,
}

/// Term switches, all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Switches {
    pub jacobian: bool,
    pub beta: bool,
    /// Surface friction k_d coupling the layers and the ocean.
    pub interlayer_friction: bool,
    /// Internal atmosphere friction k'_d.
    pub internal_friction: bool,
    /// Ocean bottom friction r.
    pub bottom_friction: bool,
    pub viscosity: bool,
    pub thermal_diffusion: bool,
    pub longwave: bool,
    pub heat_exchange: bool,
    pub shortwave: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self::all()
    }
}

impl Switches {
    pub fn all() -> Self {
        Self {
            jacobian: true,
            beta: true,
            interlayer_friction: true,
            internal_friction: true,
            bottom_friction: true,
            viscosity: true,
            thermal_diffusion: true,
            longwave: true,
            heat_exchange: true,
            shortwave: true,
        }
    }

    pub fn none() -> Self {
        Self {
            jacobian: false,
            beta: false,
            interlayer_friction: false,
            internal_friction: false,
            bottom_friction: false,
            viscosity: false,
            thermal_diffusion: false,
            longwave: false,
            heat_exchange: false,
            shortwave: false,
        }
    }

    /// Only the advective Jacobians.
    pub fn pure_jacobian() -> Self {
        Self { jacobian: true, ..Self::none() }
    }

    /// Dissipation that acts diagonally on each mode.
    pub fn diagonal_decay() -> Self {
        Self {
            internal_friction: true,
            bottom_friction: true,
            viscosity: true,
            thermal_diffusion: true,
            ..Self::none()
        }
    }
}

/// Nondimensional coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub beta: f64,
    pub kd: f64,
    pub kdp: f64,
    pub r: f64,
    pub drag: f64,
    pub nu: f64,
    pub a_sq: f64,
    pub inv_lr_sq: f64,
    pub nu_ta: f64,
    pub nu_to: f64,
    /// K per unit of psi_c.
    pub temp_coeff: f64,
    /// Radiative forcing of the baroclinic row per W m^-2.
    pub rad_c: f64,
    /// Ocean temperature tendency per W m^-2, K.
    pub rad_o: f64,
}

impl Coefficients {
    pub fn new(p: &PhysicalParams, d: &DerivedParams, s: &Scales) -> Self {
        let l2 = s.length * s.length;
        let f0 = p.f0;
        let temp_coeff = d.temp_coeff * s.psi;
        let a_sq = d.a_sq * l2;
        Self {
            beta: p.beta * s.length / f0,
            kd: p.k_d / f0,
            kdp: p.k_d_prime / f0,
            r: p.r / f0,
            drag: d.drag / f0,
            nu: p.nu_S / (f0 * l2),
            a_sq,
            inv_lr_sq: l2 / (p.L_R * p.L_R),
            nu_ta: p.nu_T_tilde / (p.gamma_a * f0 * l2),
            nu_to: p.nu_T_tilde / (p.gamma_o * f0 * l2),
            temp_coeff,
            rad_c: a_sq / (p.gamma_a * temp_coeff * f0),
            rad_o: 1.0 / (p.gamma_o * f0),
        }
    }
}

/// Everything needed to build a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub params: PhysicalParams,
    pub shortwave: ShortwaveConfig,
    pub resolution: Resolution,
    /// Collocation grid size relative to the highest frequency.
    pub grid_factor: f64,
    pub tensor_cap: usize,
    pub switches: Switches,
    pub exec: Exec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            params: PhysicalParams::default(),
            shortwave: ShortwaveConfig::default(),
            resolution: Resolution::default(),
            grid_factor: 3.0,
            tensor_cap: DEFAULT_TENSOR_CAP,
            switches: Switches::all(),
            exec: Exec::default(),
        }
    }
}

/// Grid values of the full temperatures and the heating terms.
#[derive(Debug, Clone)]
pub struct Heating {
    pub ta: Vec<f64>,
    pub to: Vec<f64>,
    pub qa: Vec<f64>,
    pub qo: Vec<f64>,
    pub ra: Vec<f64>,
    pub ro: Vec<f64>,
    /// lambda (T_a - T_o).
    pub exch: Vec<f64>,
}

impl Heating {
    /// Net heating of the atmosphere, H_a = Q_a - lambda (T_a - T_o) + R_a.
    pub fn h_a(&self) -> Vec<f64> {
        (0..self.ta.len()).map(|g| self.qa[g] - self.exch[g] + self.ra[g]).collect()
    }

    /// Net heating of the ocean, H_o = Q_o + lambda (T_a - T_o) + R_o.
    pub fn h_o(&self) -> Vec<f64> {
        (0..self.ta.len()).map(|g| self.qo[g] + self.exch[g] + self.ro[g]).collect()
    }
}

/// Model context: basis, grid, parameters and the implicit diagonal.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: Arc<SpectralBasis>,
    pub grid: Arc<Grid>,
    pub params: PhysicalParams,
    pub derived: DerivedParams,
    pub shortwave: ShortwaveConfig,
    pub coeffs: Coefficients,
    pub scales: Scales,
    pub switches: Switches,
    pub exec: Exec,
    /// Reference temperatures, K.
    pub t_a0: f64,
    pub t_o0: f64,
    /// Multiplier on every shortwave field.
    pub sw_scale: f64,
    /// Grid fields of the temperature-independent shortwave parts.
    r1_a: Vec<f64>,
    r1_o: Vec<f64>,
    /// Per-mode diagonal of the D operator (lambda, lambda + a^2, lambda + 1/L_R^2, 1).
    d_op: Fields,
    /// Implicit per-mode rates.
    diag: Fields,
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let p = &cfg.params;
        let derived = derive(p)?;
        cfg.shortwave.validate()?;
        if !(cfg.grid_factor.is_finite() && cfg.grid_factor >= 2.0) {
            return Err(Error::invalid("grid_factor", "must be >= 2"));
        }
        let basis = Arc::new(SpectralBasis::build(cfg.resolution, p.L, p.alpha, cfg.tensor_cap)?);
        let grid = Arc::new(Grid::new(&basis, cfg.grid_factor));
        Self::assemble(basis, grid, cfg.params.clone(), derived, cfg.shortwave.clone(), cfg.switches, cfg.exec)
    }

    fn assemble(
        basis: Arc<SpectralBasis>,
        grid: Arc<Grid>,
        params: PhysicalParams,
        derived: DerivedParams,
        shortwave: ShortwaveConfig,
        switches: Switches,
        exec: Exec,
    ) -> Result<Self> {
        let length = params.L / PI;
        let scales = Scales { length, time: 1.0 / params.f0, psi: length * length * params.f0 };
        let coeffs = Coefficients::new(&params, &derived, &scales);
        let (t_a0, t_o0) = reference_temperatures(&params, &shortwave)?;
        let (r1_a, r1_o) = shortwave_patterns(&grid, &basis, &shortwave);
        let mut m = Self {
            basis,
            grid,
            params,
            derived,
            shortwave,
            coeffs,
            scales,
            switches,
            exec,
            t_a0,
            t_o0,
            sw_scale: 1.0,
            r1_a,
            r1_o,
            d_op: Fields::zeros(0, 0),
            diag: Fields::zeros(0, 0),
        };
        m.rebuild_diagonal();
        Ok(m)
    }

    fn rebuild_diagonal(&mut self) {
        let b = &self.basis;
        let c = &self.coeffs;
        let s = &self.switches;
        let mut d_op = Fields::zeros(b.n_atm(), b.n_ocn());
        let mut diag = Fields::zeros(b.n_atm(), b.n_ocn());
        let on = |f: bool| if f { 1.0 } else { 0.0 };
        let (kd, kdp, r, drag) = (
            on(s.interlayer_friction) * c.kd,
            on(s.internal_friction) * c.kdp,
            on(s.bottom_friction) * c.r,
            on(s.interlayer_friction) * c.drag,
        );
        let nu = on(s.viscosity) * c.nu;
        let nu_ta = on(s.thermal_diffusion) * c.nu_ta;
        let nu_to = on(s.thermal_diffusion) * c.nu_to;
        {
            let (dt, dc, dso, dth) = d_op.parts_mut();
            for (i, &l) in b.eig_atm.iter().enumerate() {
                dt[i] = l;
                dc[i] = l + c.a_sq;
            }
            for (j, &l) in b.eig_ocn.iter().enumerate() {
                dso[j] = l + c.inv_lr_sq;
                dth[j] = 1.0;
            }
        }
        {
            let (gt, gc, go, gth) = diag.parts_mut();
            for (i, &l) in b.eig_atm.iter().enumerate() {
                gt[i] = -(0.5 * kd + nu * l);
                gc[i] = -l * (0.5 * kd + 2.0 * kdp + nu * l + c.a_sq * nu_ta) / (l + c.a_sq);
            }
            for (j, &l) in b.eig_ocn.iter().enumerate() {
                go[j] = -l * (drag + r + nu * l) / (l + c.inv_lr_sq);
                gth[j] = -nu_to * l;
            }
        }
        self.d_op = d_op;
        self.diag = diag;
    }

    /// Same model with different switches.
    pub fn with_switches(&self, switches: Switches) -> Self {
        let mut m = self.clone();
        m.switches = switches;
        m.rebuild_diagonal();
        m
    }

    /// Same model with a different execution policy.
    pub fn with_exec(&self, exec: Exec) -> Self {
        Self { exec, ..self.clone() }
    }

    /// Same basis and reference temperatures with modified physical parameters.
    pub fn with_params(&self, params: PhysicalParams) -> Result<Self> {
        let derived = derive(&params)?;
        let mut m = self.clone();
        let length = params.L / PI;
        if (length - m.scales.length).abs() > 0.0 || params.alpha != m.params.alpha {
            return Err(Error::BasisMismatch("with_params cannot change L or alpha".into()));
        }
        m.scales = Scales { length, time: 1.0 / params.f0, psi: length * length * params.f0 };
        m.coeffs = Coefficients::new(&params, &derived, &m.scales);
        m.params = params;
        m.derived = derived;
        m.rebuild_diagonal();
        Ok(m)
    }

    /// Same model with every shortwave field multiplied by `scale`.
    pub fn with_shortwave_scale(&self, scale: f64) -> Self {
        Self { sw_scale: scale, ..self.clone() }
    }

    pub fn resolution(&self) -> Resolution {
        self.basis.resolution
    }

    pub fn n_atm(&self) -> usize {
        self.basis.n_atm()
    }

    pub fn n_ocn(&self) -> usize {
        self.basis.n_ocn()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_atm() + 2 * self.n_ocn()
    }

    /// Implicit per-mode rates (nondimensional).
    pub fn diag(&self) -> &Fields {
        &self.diag
    }

    /// Per-mode eigenvalues of the D operator, with 1 for theta_o.
    pub fn d_op(&self) -> &Fields {
        &self.d_op
    }

    pub fn zero_state(&self) -> State {
        State::zeros(self.n_atm(), self.n_ocn())
    }

    fn check(&self, x: &Fields) -> Result<()> {
        if x.n_atm != self.n_atm() || x.n_ocn != self.n_ocn() {
            return Err(Error::BasisMismatch(format!(
                "state has {}/{} modes, model has {}/{}",
                x.n_atm,
                x.n_ocn,
                self.n_atm(),
                self.n_ocn()
            )));
        }
        Ok(())
    }

    /// Grid values of the anomalies delta T_a and theta_o.
    pub fn anomalies_on_grid(&self, x: &Fields) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut dta = vec![0.0; g.len()];
        let mut th = vec![0.0; g.len()];
        g.synth_atm(x.psi_c(), &mut dta);
        dta.iter_mut().for_each(|v| *v *= -self.coeffs.temp_coeff);
        g.synth_ocn(x.theta_o(), &mut th);
        (dta, th)
    }

    /// Grid values of temperatures, fluxes and shortwave, honoring the switches.
    pub fn heating(&self, x: &Fields) -> Heating {
        let (dta, th) = self.anomalies_on_grid(x);
        let n = self.grid.len();
        let p = &self.params;
        let s = &self.switches;
        let sw = &self.shortwave;
        let (e, sb, lam) = (p.eps_a, p.sigma_B, p.lambda_heat);
        let r2_o = sw.r2_o();
        let mut h = Heating {
            ta: vec![0.0; n],
            to: vec![0.0; n],
            qa: vec![0.0; n],
            qo: vec![0.0; n],
            ra: vec![0.0; n],
            ro: vec![0.0; n],
            exch: vec![0.0; n],
        };
        for g in 0..n {
            let ta = self.t_a0 + dta[g];
            let to = self.t_o0 + th[g];
            h.ta[g] = ta;
            h.to[g] = to;
            if s.longwave {
                let a4 = ta * ta.abs().powi(3);
                let o4 = to * to.abs().powi(3);
                h.qa[g] = e * sb * o4 - 2.0 * e * sb * a4;
                h.qo[g] = e * sb * a4 - sb * o4;
            }
            if s.heat_exchange {
                h.exch[g] = lam * (ta - to);
            }
            if s.shortwave {
                let (fa, fo) = if sw.mode == ShortwaveMode::Constant {
                    (0.0, 0.0)
                } else {
                    (sw.R2_a * sw.coalbedo(ta), r2_o * sw.coalbedo(to))
                };
                h.ra[g] = self.sw_scale * (self.r1_a[g] + fa);
                h.ro[g] = self.sw_scale * (self.r1_o[g] + fo);
            }
        }
        h
    }

    /// Galerkin projections of the longwave fluxes (Q_a on the atmosphere
    /// basis, Q_o on the ocean basis), W m^-2.
    pub fn longwave(&self, x: &Fields) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        let h = self.heating(x);
        let mut qa = vec![0.0; self.n_atm()];
        let mut qo = vec![0.0; self.n_ocn()];
        self.grid.project_atm(&h.qa, &mut qa);
        self.grid.project_ocn(&h.qo, &mut qo);
        Ok((qa, qo))
    }

    /// Projected heating (P_a H_a, P_o H_o), W m^-2.
    pub fn projected_heating(&self, x: &Fields) -> (Vec<f64>, Vec<f64>) {
        let h = self.heating(x);
        let mut ha = vec![0.0; self.n_atm()];
        let mut ho = vec![0.0; self.n_ocn()];
        self.grid.project_atm(&h.h_a(), &mut ha);
        self.grid.project_ocn(&h.h_o(), &mut ho);
        (ha, ho)
    }

    /// Explicit part of the tendency: everything except the diagonal rates.
    pub fn explicit(&self, x: &Fields) -> Result<Fields> {
        self.check(x)?;
        let (ha, ho) = self.projected_heating(x);
        self.explicit_with_heating(x, &ha, &ho)
    }

    fn explicit_with_heating(&self, x: &Fields, ha: &[f64], ho: &[f64]) -> Result<Fields> {
        let b = &self.basis;
        let c = &self.coeffs;
        let s = &self.switches;
        let (na, no) = (b.n_atm(), b.n_ocn());
        let (pt, pc, po, th) = (x.psi_t(), x.psi_c(), x.psi_o(), x.theta_o());
        let mut out = Fields::zeros(na, no);
        let (ot, oc, oo, oth) = out.parts_mut();

        if s.jacobian {
            let qt: Vec<f64> = pt.iter().zip(&b.eig_atm).map(|(v, l)| -l * v).collect();
            let qc: Vec<f64> = pc.iter().zip(&b.eig_atm).map(|(v, l)| -l * v).collect();
            let pvc: Vec<f64> = qc.iter().zip(pc).map(|(q, v)| q - c.a_sq * v).collect();
            let qo: Vec<f64> = po.iter().zip(&b.eig_ocn).map(|(v, l)| -l * v).collect();
            b.jac_aaa.contract(self.exec, &[(pt, &qt), (pc, &qc)], ot);
            b.jac_aaa.contract(self.exec, &[(pc, &qt), (pt, &pvc)], oc);
            b.jac_ooo.contract(self.exec, &[(po, &qo)], oo);
            b.jac_ooo.contract(self.exec, &[(po, th)], oth);
            oth.iter_mut().for_each(|v| *v = -*v);
        }
        if s.beta {
            let mut tmp = vec![0.0; na];
            b.dx_atm.apply(pt, &mut tmp);
            ot.iter_mut().zip(&tmp).for_each(|(o, v)| *o += c.beta * v);
            b.dx_atm.apply(pc, &mut tmp);
            oc.iter_mut().zip(&tmp).for_each(|(o, v)| *o += c.beta * v);
            let mut tmo = vec![0.0; no];
            b.dx_ocn.apply(po, &mut tmo);
            oo.iter_mut().zip(&tmo).for_each(|(o, v)| *o += c.beta * v);
        }
        if s.interlayer_friction {
            let mut g_po = vec![0.0; na];
            b.grad_ao.apply(po, &mut g_po);
            for i in 0..na {
                let l = b.eig_atm[i];
                ot[i] -= 0.5 * c.kd * (l * pc[i] - g_po[i]);
                oc[i] -= 0.5 * c.kd * (l * pt[i] - g_po[i]);
            }
            let a: Vec<f64> = pt.iter().zip(pc).map(|(t, c)| t + c).collect();
            let mut gt_a = vec![0.0; no];
            b.grad_ao.apply_t(&a, &mut gt_a);
            oo.iter_mut().zip(&gt_a).for_each(|(o, v)| *o += c.drag * v);
        }
        for (o, h) in oc.iter_mut().zip(ha) {
            *o -= c.rad_c * h;
        }
        for (o, h) in oth.iter_mut().zip(ho) {
            *o += c.rad_o * h;
        }
        for i in 0..na {
            ot[i] /= b.eig_atm[i];
            oc[i] /= b.eig_atm[i] + c.a_sq;
        }
        for (o, l) in oo.iter_mut().zip(&b.eig_ocn) {
            *o /= l + c.inv_lr_sq;
        }
        for (name, v) in [("barotropic", &*ot), ("baroclinic", &*oc), ("ocean", &*oo), ("ocean temperature", &*oth)] {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { equation: name });
            }
        }
        Ok(out)
    }

    /// Full tendency: diag * x + explicit(x).
    pub fn tendency(&self, x: &Fields) -> Result<Fields> {
        let mut f = self.explicit(x)?;
        for ((o, d), v) in f.data.iter_mut().zip(&self.diag.data).zip(&x.data) {
            *o += d * v;
        }
        Ok(f)
    }

    /// Reconstructs ω (Pa s^-1) on the atmosphere basis from the temperature
    /// equation, given the tendency of the same state.
    pub fn omega_diagnostic(&self, x: &Fields, tendency: &Fields) -> Result<Vec<f64>> {
        self.check(x)?;
        self.check(tendency)?;
        let p = &self.params;
        let b = &self.basis;
        let c = &self.coeffs;
        let na = b.n_atm();
        let (ha, _) = self.projected_heating(x);
        // T_a advection by psi_t, in nondimensional units.
        let mut jtc = vec![0.0; na];
        if self.switches.jacobian {
            b.jac_aaa.contract(self.exec, &[(x.psi_t(), x.psi_c())], &mut jtc);
        }
        let nu_ta = if self.switches.thermal_diffusion { c.nu_ta } else { 0.0 };
        // gamma_a dT_a/dt etc. in W m^-2: K per unit time * gamma_a * f0.
        let heat_rate = p.gamma_a * p.f0 * c.temp_coeff;
        let factor = p.R_star / (p.gamma_a * p.sigma_stat * p.p);
        Ok((0..na)
            .map(|i| {
                let dyn_terms = -heat_rate * (tendency.psi_c()[i] + jtc[i])
                    - heat_rate * nu_ta * b.eig_atm[i] * x.psi_c()[i];
                factor * (dyn_terms - ha[i])
            })
            .collect())
    }

    /// Domain integral of ω, Pa m^2 s^-1.
    pub fn omega_integral(&self, omega: &[f64]) -> f64 {
        let mut g = vec![0.0; self.grid.len()];
        self.grid.synth_atm(omega, &mut g);
        self.grid.integrate(&g) * self.scales.length * self.scales.length
    }

    /// Base-state data for repeated linearized evaluations.
    pub fn linearize(&self, base: &Fields) -> Result<Linearization<'_>> {
        self.check(base)?;
        let b = &self.basis;
        let c = &self.coeffs;
        let neg = |v: &[f64], e: &[f64]| v.iter().zip(e).map(|(v, l)| -l * v).collect::<Vec<f64>>();
        let qt = neg(base.psi_t(), &b.eig_atm);
        let qc = neg(base.psi_c(), &b.eig_atm);
        let pvc: Vec<f64> = qc.iter().zip(base.psi_c()).map(|(q, v)| q - c.a_sq * v).collect();
        let qo = neg(base.psi_o(), &b.eig_ocn);
        let h = self.heating(base);
        let p = &self.params;
        let sw = &self.shortwave;
        let s = &self.switches;
        let n = self.grid.len();
        let (e, sb, lam) = (p.eps_a, p.sigma_B, p.lambda_heat);
        let lw = if s.longwave { 1.0 } else { 0.0 };
        let ex = if s.heat_exchange { lam } else { 0.0 };
        let r2_o = sw.r2_o();
        let mut daa = vec![0.0; n];
        let mut dao = vec![0.0; n];
        let mut doa = vec![0.0; n];
        let mut doo = vec![0.0; n];
        for g in 0..n {
            let ca = 4.0 * h.ta[g].abs().powi(3);
            let co = 4.0 * h.to[g].abs().powi(3);
            let (ra, ro) = if s.shortwave {
                (
                    self.sw_scale * sw.R2_a * sw.coalbedo_derivative(h.ta[g]),
                    self.sw_scale * r2_o * sw.coalbedo_derivative(h.to[g]),
                )
            } else {
                (0.0, 0.0)
            };
            daa[g] = -2.0 * e * sb * ca * lw - ex + ra;
            dao[g] = e * sb * co * lw + ex;
            doa[g] = e * sb * ca * lw + ex;
            doo[g] = -sb * co * lw - ex + ro;
        }
        Ok(Linearization {
            model: self,
            base: base.clone(),
            qt,
            qc,
            pvc,
            qo,
            dha_dta: daa,
            dha_dto: dao,
            dho_dta: doa,
            dho_dto: doo,
        })
    }

    /// Fréchet derivative of the tendency at `base` applied to `tangent`.
    pub fn linearized_tendency(&self, base: &Fields, tangent: &Fields) -> Result<Fields> {
        self.check(tangent)?;
        Ok(self.linearize(base)?.apply(tangent))
    }

    /// Seeded random state: streamfunctions with per-mode amplitude
    /// `psi_amp / sqrt(lambda)` and ocean temperature anomalies of `theta_amp` K.
    pub fn random_state(&self, seed: u64, psi_amp: f64, theta_amp: f64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = &self.basis;
        let mut s = self.zero_state();
        let (t, c, o, th) = s.fields.parts_mut();
        for (i, &l) in b.eig_atm.iter().enumerate() {
            t[i] = psi_amp * rng.gen_range(-1.0..1.0) / l.sqrt();
            c[i] = psi_amp * rng.gen_range(-1.0..1.0) / l.sqrt();
        }
        for (j, &l) in b.eig_ocn.iter().enumerate() {
            o[j] = psi_amp * rng.gen_range(-1.0..1.0) / l.sqrt();
            th[j] = theta_amp * rng.gen_range(-1.0..1.0) / (l / b.lambda_1).sqrt();
        }
        s
    }
}

/// Linearization of the tendency around a base state.
pub struct Linearization<'a> {
    model: &'a Model,
    base: Fields,
    qt: Vec<f64>,
    qc: Vec<f64>,
    pvc: Vec<f64>,
    qo: Vec<f64>,
    dha_dta: Vec<f64>,
    dha_dto: Vec<f64>,
    dho_dta: Vec<f64>,
    dho_dto: Vec<f64>,
}

impl Linearization<'_> {
    /// L(base) applied to a tangent vector.
    pub fn apply(&self, d: &Fields) -> Fields {
        let m = self.model;
        let b = &m.basis;
        let c = &m.coeffs;
        let s = &m.switches;
        let (na, no) = (b.n_atm(), b.n_ocn());
        let (bt, bc, bo, bth) = (self.base.psi_t(), self.base.psi_c(), self.base.psi_o(), self.base.theta_o());
        let (dt, dc, dso, dth) = (d.psi_t(), d.psi_c(), d.psi_o(), d.theta_o());
        let mut out = Fields::zeros(na, no);
        let (ot, oc, oo, oth) = out.parts_mut();
        if s.jacobian {
            let neg = |v: &[f64], e: &[f64]| v.iter().zip(e).map(|(v, l)| -l * v).collect::<Vec<f64>>();
            let dqt = neg(dt, &b.eig_atm);
            let dqc = neg(dc, &b.eig_atm);
            let dpvc: Vec<f64> = dqc.iter().zip(dc).map(|(q, v)| q - c.a_sq * v).collect();
            let dqo = neg(dso, &b.eig_ocn);
            b.jac_aaa.contract(
                m.exec,
                &[(dt, &self.qt), (bt, &dqt), (dc, &self.qc), (bc, &dqc)],
                ot,
            );
            b.jac_aaa.contract(
                m.exec,
                &[(dc, &self.qt), (bc, &dqt), (dt, &self.pvc), (bt, &dpvc)],
                oc,
            );
            b.jac_ooo.contract(m.exec, &[(dso, &self.qo), (bo, &dqo)], oo);
            b.jac_ooo.contract(m.exec, &[(dso, bth), (bo, dth)], oth);
            oth.iter_mut().for_each(|v| *v = -*v);
        }
        if s.beta {
            let mut tmp = vec![0.0; na];
            b.dx_atm.apply(dt, &mut tmp);
            ot.iter_mut().zip(&tmp).for_each(|(o, v)| *o += c.beta * v);
            b.dx_atm.apply(dc, &mut tmp);
            oc.iter_mut().zip(&tmp).for_each(|(o, v)| *o += c.beta * v);
            let mut tmo = vec![0.0; no];
            b.dx_ocn.apply(dso, &mut tmo);
            oo.iter_mut().zip(&tmo).for_each(|(o, v)| *o += c.beta * v);
        }
        if s.interlayer_friction {
            let mut g_po = vec![0.0; na];
            b.grad_ao.apply(dso, &mut g_po);
            for i in 0..na {
                let l = b.eig_atm[i];
                ot[i] -= 0.5 * c.kd * (l * dc[i] - g_po[i]);
                oc[i] -= 0.5 * c.kd * (l * dt[i] - g_po[i]);
            }
            let a: Vec<f64> = dt.iter().zip(dc).map(|(t, c)| t + c).collect();
            let mut gt_a = vec![0.0; no];
            b.grad_ao.apply_t(&a, &mut gt_a);
            oo.iter_mut().zip(&gt_a).for_each(|(o, v)| *o += c.drag * v);
        }
        let g = &m.grid;
        let n = g.len();
        let (dta, dto) = m.anomalies_on_grid(d);
        let mut dha = vec![0.0; n];
        let mut dho = vec![0.0; n];
        for k in 0..n {
            dha[k] = self.dha_dta[k] * dta[k] + self.dha_dto[k] * dto[k];
            dho[k] = self.dho_dta[k] * dta[k] + self.dho_dto[k] * dto[k];
        }
        let mut pa = vec![0.0; na];
        let mut po = vec![0.0; no];
        g.project_atm(&dha, &mut pa);
        g.project_ocn(&dho, &mut po);
        for i in 0..na {
            oc[i] -= c.rad_c * pa[i];
        }
        for j in 0..no {
            oth[j] += c.rad_o * po[j];
        }
        for i in 0..na {
            ot[i] /= b.eig_atm[i];
            oc[i] /= b.eig_atm[i] + c.a_sq;
        }
        for (o, l) in oo.iter_mut().zip(&b.eig_ocn) {
            *o /= l + c.inv_lr_sq;
        }
        for ((o, r), v) in out.data.iter_mut().zip(&m.diag.data).zip(&d.data) {
            *o += r * v;
        }
        out
    }
}

/// Reference temperatures: given values, or the uniform equilibrium.
pub fn reference_temperatures(p: &PhysicalParams, sw: &ShortwaveConfig) -> Result<(f64, f64)> {
    match (p.T_a0, p.T_o0) {
        (Some(a), Some(o)) => Ok((a, o)),
        (None, None) => {
            let r2_o = sw.r2_o();
            let modulated = sw.mode != ShortwaveMode::Constant;
            // Start from the black-body temperature of the warm-plateau forcing.
            let warm = sw.R1_a + sw.R1_o + (sw.R2_a + r2_o) * sw.coalbedo(sw.T_plus);
            let initial = if modulated && warm > 0.0 { Some((warm / p.sigma_B).powf(0.25)) } else { None };
            radiative_equilibrium_with(
                p,
                |t| {
                    if modulated {
                        (sw.R1_a + sw.R2_a * sw.coalbedo(t), sw.R2_a * sw.coalbedo_derivative(t))
                    } else {
                        (sw.R1_a, 0.0)
                    }
                },
                |t| {
                    if modulated {
                        (sw.R1_o + r2_o * sw.coalbedo(t), r2_o * sw.coalbedo_derivative(t))
                    } else {
                        (sw.R1_o, 0.0)
                    }
                },
                NewtonOptions { initial, ..Default::default() },
            )
        }
        _ => Err(Error::invalid("T_a0", "T_a0 and T_o0 must be given together")),
    }
}

/// Grid fields of R1 (uniform part plus patterns).
fn shortwave_patterns(grid: &Grid, basis: &SpectralBasis, sw: &ShortwaveConfig) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let mut ra = vec![sw.R1_a; n];
    let mut ro = vec![sw.R1_o; n];
    for pat in &sw.R1_a_pattern {
        let zonal = match (pat.k, pat.sin) {
            (0, _) => Zonal::Const,
            (k, false) => Zonal::Cos(k),
            (k, true) => Zonal::Sin(k),
        };
        let t = zonal.trig();
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                ra[ix * grid.ny + iy] += pat.amp * t.eval(grid.x[ix]) * (pat.n as f64 * grid.y[iy]).sin();
            }
        }
    }
    for pat in &sw.R1_o_pattern {
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                ro[ix * grid.ny + iy] +=
                    pat.amp * (pat.m as f64 * grid.x[ix]).sin() * (pat.n as f64 * grid.y[iy]).sin();
            }
        }
    }
    let _ = basis;
    (ra, ro)
}
