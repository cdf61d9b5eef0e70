//! Physical constants, derived constants, shortwave forcing and the
//! radiative-equilibrium reference state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the ocean energy weight κ is formed from the primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaForm {
    /// κ = ρ h k_d / (2C); makes the interlayer friction a perfect square.
    #[default]
    Half,
    /// κ = ρ h k_d / C.
    Full,
}

/// Primitive physical constants (SI).
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Zonal domain length, m.
    pub L: f64,
    /// Aspect ratio: the meridional extent is alpha * L.
    pub alpha: f64,
    /// Coriolis parameter, s^-1.
    pub f0: f64,
    /// Meridional gradient of the Coriolis parameter, m^-1 s^-1.
    pub beta: f64,
    /// Pressure difference between the two atmosphere levels, Pa.
    pub p_delta: f64,
    /// Reference pressure, Pa.
    pub p: f64,
    /// Gas constant of dry air, J kg^-1 K^-1.
    pub R_star: f64,
    /// Static stability, m^2 s^-2 Pa^-2.
    pub sigma_stat: f64,
    /// Stefan-Boltzmann constant, W m^-2 K^-4.
    pub sigma_B: f64,
    /// Atmosphere emissivity in (0, 1].
    pub eps_a: f64,
    /// Ocean-atmosphere heat exchange coefficient, W m^-2 K^-1.
    pub lambda_heat: f64,
    /// Atmosphere heat capacity, J m^-2 K^-1.
    pub gamma_a: f64,
    /// Ocean heat capacity, J m^-2 K^-1.
    pub gamma_o: f64,
    /// Surface friction, s^-1.
    pub k_d: f64,
    /// Internal friction between the atmosphere layers, s^-1.
    pub k_d_prime: f64,
    /// Ocean bottom friction, s^-1.
    pub r: f64,
    /// Wind-stress curl constant, kg m^-2 s^-1.
    pub C_wind: f64,
    /// Ocean layer density, kg m^-3.
    pub rho_o: f64,
    /// Ocean layer depth, m.
    pub h_o: f64,
    /// Reduced Rossby deformation radius of the ocean, m.
    pub L_R: f64,
    /// Eddy viscosity, m^2 s^-1.
    pub nu_S: f64,
    /// Horizontal heat diffusion, W K^-1.
    pub nu_T_tilde: f64,
    /// Atmosphere reference temperature, K. `None` solves the uniform equilibrium.
    pub T_a0: Option<f64>,
    /// Ocean reference temperature, K. `None` solves the uniform equilibrium.
    pub T_o0: Option<f64>,
    pub kappa_form: KappaForm,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            L: 6.6667e6,
            alpha: 0.75,
            f0: 1.032e-4,
            beta: 1.62e-11,
            p_delta: 5.0e4,
            p: 5.0e4,
            R_star: 287.0,
            sigma_stat: 1.8304e-6,
            sigma_B: 5.67e-8,
            eps_a: 0.76,
            lambda_heat: 20.0,
            gamma_a: 1.0e7,
            gamma_o: 5.5556e8,
            k_d: 1.1352e-6,
            k_d_prime: 1.1352e-6,
            r: 1.0e-7,
            C_wind: 5.165e-3,
            rho_o: 1000.0,
            h_o: 136.5,
            L_R: 2.0e4,
            nu_S: 20.0,
            nu_T_tilde: 1400.0,
            T_a0: None,
            T_o0: None,
            kappa_form: KappaForm::Half,
        }
    }
}

impl PhysicalParams {
    /// Checks the invariants, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L", self.L),
            ("f0", self.f0),
            ("p_delta", self.p_delta),
            ("p", self.p),
            ("R_star", self.R_star),
            ("sigma_stat", self.sigma_stat),
            ("sigma_B", self.sigma_B),
            ("gamma_a", self.gamma_a),
            ("gamma_o", self.gamma_o),
            ("k_d", self.k_d),
            ("k_d_prime", self.k_d_prime),
            ("r", self.r),
            ("C_wind", self.C_wind),
            ("rho_o", self.rho_o),
            ("h_o", self.h_o),
            ("L_R", self.L_R),
            ("nu_S", self.nu_S),
            ("nu_T_tilde", self.nu_T_tilde),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.eps_a > 0.0 && self.eps_a <= 1.0) {
            return Err(Error::invalid("eps_a", format!("must lie in (0,1], got {}", self.eps_a)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", "must be finite and >= 0"));
        }
        if !(self.lambda_heat.is_finite() && self.lambda_heat >= 0.0) {
            return Err(Error::invalid("lambda_heat", "must be finite and >= 0"));
        }
        for (name, t) in [("T_a0", self.T_a0), ("T_o0", self.T_o0)] {
            if let Some(t) = t {
                if !t.is_finite() {
                    return Err(Error::invalid(name, "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Ocean drag coefficient d = C / (rho h), s^-1.
    pub fn drag(&self) -> f64 {
        self.C_wind / (self.rho_o * self.h_o)
    }
}

/// Constants derived in closed form from [`PhysicalParams`].
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Ocean energy weight κ.
    pub kappa: f64,
    /// Thermodynamic scaling μ = R*^2 / (2 p^2 γ_a σ).
    pub mu: f64,
    /// μ ν̃_T.
    pub nu_T: f64,
    /// (7/10) min(ε_a, 1 - ε_a).
    pub eps_a_tilde: f64,
    /// 2 f0^2 / (p_δ^2 σ), m^-2.
    pub a_sq: f64,
    /// 2 p f0 / (R* p_δ): T_a = T_a0 - temp_coeff * ψ_c.
    pub temp_coeff: f64,
    /// Ocean drag d = C / (ρ h), s^-1.
    pub drag: f64,
}

/// Computes the derived constants.
pub fn derive(p: &PhysicalParams) -> Result<DerivedParams> {
    p.validate()?;
    let full = p.rho_o * p.h_o * p.k_d / p.C_wind;
    let kappa = match p.kappa_form {
        KappaForm::Half => 0.5 * full,
        KappaForm::Full => full,
    };
    let mu = p.R_star * p.R_star / (2.0 * p.p * p.p * p.gamma_a * p.sigma_stat);
    Ok(DerivedParams {
        kappa,
        mu,
        nu_T: mu * p.nu_T_tilde,
        eps_a_tilde: 0.7 * p.eps_a.min(1.0 - p.eps_a),
        a_sq: 2.0 * p.f0 * p.f0 / (p.p_delta * p.p_delta * p.sigma_stat),
        temp_coeff: 2.0 * p.p * p.f0 / (p.R_star * p.p_delta),
        drag: p.drag(),
    })
}

/// Temperature dependence of the shortwave term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortwaveMode {
    /// R = R1; no temperature dependence.
    Constant,
    /// R = R1 + R2 F(T) with the clamped coalbedo ramp.
    #[default]
    BudykoSellers,
    /// R = R1 + R2 F(T) with the ramp extended linearly (no clamping).
    CustomLinear,
}

/// One term of an atmosphere forcing pattern: amp * X_k(x) * sin(n pi y / (alpha L)),
/// with X = 1, cos(2 pi k x / L) or sin(2 pi k x / L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmPattern {
    pub k: u32,
    pub n: u32,
    #[serde(default)]
    pub sin: bool,
    /// W m^-2.
    pub amp: f64,
}

/// One term of an ocean forcing pattern: amp * sin(m pi x / L) * sin(n pi y / (alpha L)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcnPattern {
    pub m: u32,
    pub n: u32,
    /// W m^-2.
    pub amp: f64,
}

/// Shortwave forcing R = R1 + R2 F(T).
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShortwaveConfig {
    pub mode: ShortwaveMode,
    /// Uniform part of R1 for the atmosphere, W m^-2.
    pub R1_a: f64,
    /// Uniform part of R1 for the ocean, W m^-2.
    pub R1_o: f64,
    /// Spatial pattern added to R1_a.
    pub R1_a_pattern: Vec<AtmPattern>,
    /// Spatial pattern added to R1_o.
    pub R1_o_pattern: Vec<OcnPattern>,
    /// Modulation amplitude for the atmosphere, W m^-2.
    pub R2_a: f64,
    /// Modulation amplitude for the ocean, W m^-2; defaults to dist_ratio_sq * cosZ * S_const.
    pub R2_o: Option<f64>,
    pub beta_minus: f64,
    pub beta_plus: f64,
    /// K.
    pub T_minus: f64,
    /// K.
    pub T_plus: f64,
    /// W m^-2.
    pub S_const: f64,
    pub dist_ratio_sq: f64,
    pub cosZ: f64,
}

impl Default for ShortwaveConfig {
    fn default() -> Self {
        Self {
            mode: ShortwaveMode::BudykoSellers,
            R1_a: 100.0,
            R1_o: -690.0,
            R1_a_pattern: vec![AtmPattern { k: 0, n: 2, sin: false, amp: 200.0 }],
            R1_o_pattern: vec![OcnPattern { m: 1, n: 2, amp: 150.0 }],
            R2_a: 0.0,
            R2_o: None,
            beta_minus: 0.3,
            beta_plus: 0.7,
            T_minus: 250.0,
            T_plus: 280.0,
            S_const: 1360.0,
            dist_ratio_sq: 1.04,
            cosZ: 1.0,
        }
    }
}

impl ShortwaveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.T_minus < self.T_plus) {
            return Err(Error::invalid("T_minus", "must be < T_plus"));
        }
        if !(0.0 <= self.beta_minus && self.beta_minus <= self.beta_plus && self.beta_plus <= 1.0) {
            return Err(Error::invalid("beta_minus", "need 0 <= beta_minus <= beta_plus <= 1"));
        }
        if !(0.0..=1.0).contains(&self.cosZ) {
            return Err(Error::invalid("cosZ", "must lie in [0,1]"));
        }
        for (name, v) in [
            ("R1_a", self.R1_a),
            ("R1_o", self.R1_o),
            ("R2_a", self.R2_a),
            ("S_const", self.S_const),
            ("dist_ratio_sq", self.dist_ratio_sq),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        for p in &self.R1_a_pattern {
            if p.n == 0 || (p.k == 0 && p.sin) {
                return Err(Error::invalid("R1_a_pattern", "need n >= 1 and no sin term at k = 0"));
            }
        }
        for p in &self.R1_o_pattern {
            if p.m == 0 || p.n == 0 {
                return Err(Error::invalid("R1_o_pattern", "need m, n >= 1"));
            }
        }
        Ok(())
    }

    /// Ramp slope (beta_plus - beta_minus) / (T_plus - T_minus), K^-1.
    pub fn ramp_slope(&self) -> f64 {
        (self.beta_plus - self.beta_minus) / (self.T_plus - self.T_minus)
    }

    /// Effective ocean modulation amplitude, W m^-2.
    pub fn r2_o(&self) -> f64 {
        self.R2_o
            .unwrap_or(self.dist_ratio_sq * self.cosZ * self.S_const)
    }

    /// F(T); zero in constant mode.
    pub fn coalbedo(&self, t: f64) -> f64 {
        match self.mode {
            ShortwaveMode::Constant => 0.0,
            ShortwaveMode::BudykoSellers => {
                if t <= self.T_minus {
                    self.beta_minus
                } else if t >= self.T_plus {
                    self.beta_plus
                } else {
                    self.beta_minus + self.ramp_slope() * (t - self.T_minus)
                }
            }
            ShortwaveMode::CustomLinear => self.beta_minus + self.ramp_slope() * (t - self.T_minus),
        }
    }

    /// dF/dT with corner values taken from the left branch.
    pub fn coalbedo_derivative(&self, t: f64) -> f64 {
        match self.mode {
            ShortwaveMode::Constant => 0.0,
            ShortwaveMode::BudykoSellers => {
                if t > self.T_minus && t <= self.T_plus {
                    self.ramp_slope()
                } else {
                    0.0
                }
            }
            ShortwaveMode::CustomLinear => self.ramp_slope(),
        }
    }
}

/// Lipschitz constant of R_o in T_o, W K^-1 m^-2.
pub fn shortwave_lipschitz_bound(cfg: &ShortwaveConfig) -> f64 {
    match cfg.mode {
        ShortwaveMode::Constant => 0.0,
        _ => cfg.r2_o().abs() * cfg.ramp_slope(),
    }
}

/// Residuals of the two homogeneous stationary temperature rows, W m^-2.
pub fn equilibrium_rows(p: &PhysicalParams, ta: f64, to: f64, ra: f64, ro: f64) -> [f64; 2] {
    let (e, s, l) = (p.eps_a, p.sigma_B, p.lambda_heat);
    let qa4 = ta * ta.abs().powi(3);
    let qo4 = to * to.abs().powi(3);
    [
        e * s * qo4 - 2.0 * e * s * qa4 - l * (ta - to) + ra,
        e * s * qa4 - s * qo4 + l * (ta - to) + ro,
    ]
}

/// Newton controls for [`radiative_equilibrium_with`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Absolute residual tolerance relative to max(1, |Ra| + |Ro|).
    pub rel_tol: f64,
    /// Starting temperature, K; `None` uses the black-body guess.
    pub initial: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iter: 100, rel_tol: 1e-12, initial: None }
    }
}

/// Homogeneous equilibrium for scalar shortwave values.
pub fn radiative_equilibrium(p: &PhysicalParams, ra0: f64, ro0: f64) -> Result<(f64, f64)> {
    radiative_equilibrium_with(p, |_| (ra0, 0.0), |_| (ro0, 0.0), NewtonOptions::default())
}

/// Homogeneous equilibrium with temperature-dependent shortwave.
/// `ra(T)` and `ro(T)` return the value and its derivative.
pub fn radiative_equilibrium_with(
    p: &PhysicalParams,
    ra: impl Fn(f64) -> (f64, f64),
    ro: impl Fn(f64) -> (f64, f64),
    opts: NewtonOptions,
) -> Result<(f64, f64)> {
    let (e, s, l) = (p.eps_a, p.sigma_B, p.lambda_heat);
    let eval = |ta: f64, to: f64| {
        let (ra_v, dra) = ra(ta);
        let (ro_v, dro) = ro(to);
        let f = equilibrium_rows(p, ta, to, ra_v, ro_v);
        let d4a = 4.0 * ta.abs().powi(3);
        let d4o = 4.0 * to.abs().powi(3);
        let jac = [
            [-2.0 * e * s * d4a - l + dra, e * s * d4o + l],
            [e * s * d4a + l, -s * d4o - l + dro],
        ];
        (f, jac, ra_v.abs() + ro_v.abs())
    };
    let guess = opts.initial.unwrap_or_else(|| {
        let (ra_g, _) = ra(0.0);
        let (ro_g, _) = ro(0.0);
        ((ra_g + ro_g).max(0.0) / s).powf(0.25)
    });
    let (mut ta, mut to) = (guess, guess);
    let norm = |f: [f64; 2]| f[0].hypot(f[1]);
    let (mut f, mut jac, mut scale) = eval(ta, to);
    for _ in 0..opts.max_iter {
        if norm(f) <= opts.rel_tol * scale.max(1.0) {
            return Ok((ta, to));
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            // Singular at T = 0: nudge off the origin.
            ta += 1.0;
            to += 1.0;
            (f, jac, scale) = eval(ta, to);
            continue;
        }
        let da = -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let dob = -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;
        let r0 = norm(f);
        let mut step = 1.0;
        loop {
            let (ta1, to1) = (ta + step * da, to + step * dob);
            let trial = eval(ta1, to1);
            if norm(trial.0) < r0 || step < 1e-10 {
                ta = ta1;
                to = to1;
                (f, jac, scale) = trial;
                break;
            }
            step *= 0.5;
        }
    }
    if norm(f) <= opts.rel_tol * scale.max(1.0) {
        return Ok((ta, to));
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: norm(f) })
}

/// Admissibility of the determining-modes smallness condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "eps_star", rename_all = "snake_case")]
pub enum Admissibility {
    /// C(rho) <= varsigma: any number of modes works.
    Unconditional,
    /// Required resolution scale eps* = (C(rho) - varsigma)^(-1/2), m.
    EpsStar(f64),
}

/// Determining-modes constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterminingModes {
    pub varsigma: f64,
    pub lipschitz_bound: f64,
    pub lipschitz_ok: bool,
    pub admissibility: Admissibility,
    /// L^2 / (nu_S eps*^2); `None` when unconditional.
    pub n_order_estimate: Option<f64>,
}

/// Evaluates the determining-modes constants for a given C(rho), s^-1.
pub fn determining_modes_constants(
    p: &PhysicalParams,
    d: &DerivedParams,
    sw: &ShortwaveConfig,
    lambda_1: f64,
    c_rho: f64,
) -> DeterminingModes {
    let candidates = [
        p.k_d / 2.0,
        p.k_d_prime,
        p.k_d_prime * lambda_1 * p.R_star * p.R_star / (4.0 * p.f0 * p.f0 * d.mu * p.gamma_a),
        p.r / 2.0,
        p.r * p.L_R * p.L_R * lambda_1 / 2.0,
    ];
    let varsigma = candidates.into_iter().fold(f64::INFINITY, f64::min);
    let bound = shortwave_lipschitz_bound(sw);
    let (admissibility, n_order_estimate) = if c_rho <= varsigma {
        (Admissibility::Unconditional, None)
    } else {
        let eps_star = (c_rho - varsigma).powf(-0.5);
        (
            Admissibility::EpsStar(eps_star),
            Some(p.L * p.L / (p.nu_S * eps_star * eps_star)),
        )
    };
    DeterminingModes {
        varsigma,
        lipschitz_bound: bound,
        lipschitz_ok: bound < p.lambda_heat,
        admissibility,
        n_order_estimate,
    }
}
