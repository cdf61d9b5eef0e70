//! Runtime self-checks against pointwise references.
//!
//! Basis functions are evaluated from their mode labels on a fine composite
//! Gauss grid, independently of the interaction tensors and the collocation
//! grid used by the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{energy_budget, energy_rate};
use crate::experiments::fit_slope;
use crate::model::{Model, ModelConfig};
use crate::par::Exec;
use crate::spectral::quad::gauss_legendre;
use crate::spectral::{AtmMode, Fields, OcnMode, Resolution, Zonal};
use crate::Result;

/// Value and gradient of a basis function at one node.
#[derive(Debug, Clone, Copy, Default)]
struct Point {
    f: f64,
    fx: f64,
    fy: f64,
}

/// Basis functions tabulated on a fine tensor grid over [0, pi] x [0, alpha pi].
pub struct Reference {
    weights: Vec<f64>,
    atm: Vec<Vec<Point>>,
    ocn: Vec<Vec<Point>>,
}

fn composite(panels: usize, per: usize, len: f64) -> (Vec<f64>, Vec<f64>) {
    let h = len / panels as f64;
    let mut x = Vec::new();
    let mut w = Vec::new();
    for p in 0..panels {
        let (nx, nw) = gauss_legendre(per, p as f64 * h, (p + 1) as f64 * h);
        x.extend(nx);
        w.extend(nw);
    }
    (x, w)
}

fn atm_point(m: AtmMode, alpha: f64, x: f64, y: f64) -> Point {
    let ky = m.n as f64 / alpha;
    let (sy, cy) = (ky * y).sin_cos();
    let (xv, dx) = match m.zonal {
        Zonal::Const => (1.0, 0.0),
        Zonal::Cos(k) => {
            let q = 2.0 * k as f64;
            ((q * x).cos(), -q * (q * x).sin())
        }
        Zonal::Sin(k) => {
            let q = 2.0 * k as f64;
            ((q * x).sin(), q * (q * x).cos())
        }
    };
    Point { f: xv * sy, fx: dx * sy, fy: xv * ky * cy }
}

fn ocn_point(m: OcnMode, alpha: f64, x: f64, y: f64) -> Point {
    let (kx, ky) = (m.m as f64, m.n as f64 / alpha);
    let (sx, cx) = (kx * x).sin_cos();
    let (sy, cy) = (ky * y).sin_cos();
    Point { f: sx * sy, fx: kx * cx * sy, fy: sx * ky * cy }
}

impl Reference {
    /// `panels` Gauss panels of `per` points in each direction.
    pub fn new(model: &Model, panels: usize, per: usize) -> Self {
        let alpha = model.params.alpha;
        let (xs, wx) = composite(panels, per, std::f64::consts::PI);
        let (ys, wy) = composite(panels, per, alpha * std::f64::consts::PI);
        let mut weights = Vec::with_capacity(xs.len() * ys.len());
        let mut nodes = Vec::with_capacity(weights.capacity());
        for (x, a) in xs.iter().zip(&wx) {
            for (y, b) in ys.iter().zip(&wy) {
                weights.push(a * b);
                nodes.push((*x, *y));
            }
        }
        let normalize = |mut tab: Vec<Point>| {
            let s: f64 = tab.iter().zip(&weights).map(|(p, w)| w * p.f * p.f).sum();
            let n = s.sqrt().recip();
            for p in &mut tab {
                p.f *= n;
                p.fx *= n;
                p.fy *= n;
            }
            tab
        };
        let atm = model
            .basis
            .atm_modes
            .iter()
            .map(|m| normalize(nodes.iter().map(|(x, y)| atm_point(*m, alpha, *x, *y)).collect()))
            .collect();
        let ocn = model
            .basis
            .ocn_modes
            .iter()
            .map(|m| normalize(nodes.iter().map(|(x, y)| ocn_point(*m, alpha, *x, *y)).collect()))
            .collect();
        Self { weights, atm, ocn }
    }

    fn tabs(&self, ocean: bool) -> &[Vec<Point>] {
        if ocean {
            &self.ocn
        } else {
            &self.atm
        }
    }

    fn field(&self, coeffs: &[f64], ocean: bool) -> Vec<Point> {
        let mut out = vec![Point::default(); self.weights.len()];
        for (c, tab) in coeffs.iter().zip(self.tabs(ocean)).filter(|(c, _)| **c != 0.0) {
            for (o, p) in out.iter_mut().zip(tab) {
                o.f += c * p.f;
                o.fx += c * p.fx;
                o.fy += c * p.fy;
            }
        }
        out
    }

    fn project(&self, values: &[f64], ocean: bool) -> Vec<f64> {
        self.tabs(ocean)
            .iter()
            .map(|tab| tab.iter().zip(values).zip(&self.weights).map(|((p, v), w)| w * v * p.f).sum())
            .collect()
    }

    /// Projection of u_x v_y - u_y v_x.
    pub fn jacobian(&self, u: &[f64], v: &[f64], ocean: bool) -> Vec<f64> {
        let (fu, fv) = (self.field(u, ocean), self.field(v, ocean));
        let j: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a.fx * b.fy - a.fy * b.fx).collect();
        self.project(&j, ocean)
    }

    /// Projected longwave exchange rows for a state of `model`, W m^-2.
    pub fn longwave(&self, model: &Model, x: &Fields) -> (Vec<f64>, Vec<f64>) {
        let (e, sb) = (model.params.eps_a, model.params.sigma_B);
        let dta = self.field(x.psi_c(), false);
        let th = self.field(x.theta_o(), true);
        let q4 = |t: f64| t * t.abs().powi(3);
        let (mut fa, mut fo) = (Vec::with_capacity(dta.len()), Vec::with_capacity(dta.len()));
        for (a, o) in dta.iter().zip(&th) {
            let ta = model.t_a0 - model.coeffs.temp_coeff * a.f;
            let to = model.t_o0 + o.f;
            fa.push(e * sb * q4(to) - 2.0 * e * sb * q4(ta));
            fo.push(e * sb * q4(ta) - sb * q4(to));
        }
        (self.project(&fa, false), self.project(&fo, true))
    }
}

/// Relative L2 distance of `a` from `b`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Outcome of one self-check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    /// Worst measured value.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, cases: usize, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), cases, value, tolerance, passed: value <= tolerance }
    }
}

/// Jacobian, longwave, tangent-linear and budget checks at `resolution`.
pub fn run_suite(resolution: Resolution, cases: usize, seed: u64) -> Result<Vec<Check>> {
    let m = Model::new(&ModelConfig { resolution, ..Default::default() })?;
    let r = Reference::new(&m, 6, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let ocean = case % 2 == 1;
        let n = if ocean { m.n_ocn() } else { m.n_atm() };
        let mut draw = || -> Vec<f64> {
            if case % 4 < 2 {
                let mut v = vec![0.0; n];
                v[rng.gen_range(0..n)] = 1.0;
                v
            } else {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        };
        let (u, v) = (draw(), draw());
        let got = m.basis.jacobian(Exec::Sequential, &u, &v)?;
        let want = r.jacobian(&u, &v, ocean);
        let scale = want.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale;
        worst = worst.max(err);
    }
    out.push(Check::below("jacobian_quadrature", cases, worst, 1e-10));

    let states = cases.div_ceil(5).max(1);
    let mut worst: f64 = 0.0;
    for k in 0..states {
        let x = m.random_state(seed.wrapping_add(k as u64), 0.05, 8.0).fields;
        let (qa, qo) = m.longwave(&x)?;
        let (ra, ro) = r.longwave(&m, &x);
        worst = worst.max(rel_err(&qa, &ra)).max(rel_err(&qo, &ro));
    }
    out.push(Check::below("longwave_quadrature", states, worst, 1e-9));

    out.push(tlm_slope(&m, seed)?);
    out.push(budget_closure(&m, seed, states)?);
    Ok(out)
}

/// Log-log slope of the finite-difference error of the linearized tendency.
fn tlm_slope(m: &Model, seed: u64) -> Result<Check> {
    let b = m.random_state(seed, 0.05, 8.0).fields;
    let v = m.random_state(seed.wrapping_add(1000), 0.05, 8.0).fields;
    let f0 = m.tendency(&b)?;
    let lv = m.linearized_tendency(&b, &v)?;
    let norm = |x: &Fields| x.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for k in 0..9 {
        let e = 1e-6 * 10f64.powf(0.5 * k as f64);
        let mut bp = b.clone();
        bp.axpy(e, &v);
        let mut fd = m.tendency(&bp)?.sub(&f0);
        fd.scale(1.0 / e);
        lx.push(e.ln());
        ly.push((norm(&fd.sub(&lv)) / norm(&lv)).ln());
    }
    let slope = fit_slope(&lx, &ly).unwrap_or(f64::NAN);
    Ok(Check::below("tlm_fd_slope_deviation", lx.len(), (slope - 1.0).abs(), 0.15))
}

/// The energy rate implied by the tendency equals the budget's net source.
fn budget_closure(m: &Model, seed: u64, states: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for k in 0..states {
        let x = m.random_state(seed.wrapping_add(500 + k as u64), 0.05, 3.0).fields;
        let t = m.tendency(&x)?;
        let b = energy_budget(m, &x, &t, 0.0);
        let scale = [
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
        .sum::<f64>();
        worst = worst.max((energy_rate(m, &x, &t) - b.net).abs() / scale);
    }
    Ok(Check::below("budget_closure", states, worst, 1e-8))
}
