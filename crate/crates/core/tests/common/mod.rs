//! Independent pointwise oracles: basis functions evaluated directly from the
//! mode labels and integrated on a fine composite Gauss grid.
#![allow(dead_code)]

use std::f64::consts::PI;

use maooam_core::spectral::{AtmMode, OcnMode, Zonal};
use maooam_core::Model;

/// n-point Gauss-Legendre rule on [-1, 1] by Newton iteration on the
/// three-term recurrence.
fn gl_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut z = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        loop {
            let mut p = [1.0f64, 0.0];
            for j in 1..=n {
                let p2 = p[1];
                p[1] = p[0];
                p[0] = ((2 * j - 1) as f64 * z * p[1] - (j - 1) as f64 * p2) / j as f64;
            }
            let dp = n as f64 * (z * p[0] - p[1]) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p[0] / dp;
            if (z - z1).abs() < 1e-15 {
                let mut p = [1.0f64, 0.0];
                for j in 1..=n {
                    let p2 = p[1];
                    p[1] = p[0];
                    p[0] = ((2 * j - 1) as f64 * z * p[1] - (j - 1) as f64 * p2) / j as f64;
                }
                let dp = n as f64 * (z * p[0] - p[1]) / (z * z - 1.0);
                out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
                break;
            }
        }
    }
    out
}

/// Composite Gauss rule on [0, pi] with `panels` panels of `per` points.
pub fn composite(panels: usize, per: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gl_unit(per);
    let h = PI / panels as f64;
    let mut x = Vec::new();
    let mut w = Vec::new();
    for p in 0..panels {
        let a = p as f64 * h;
        for &(z, wz) in &rule {
            x.push(a + 0.5 * h * (z + 1.0));
            w.push(0.5 * h * wz);
        }
    }
    (x, w)
}

/// Values of a function and its first derivatives at one point.
#[derive(Clone, Copy, Default)]
pub struct Val {
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
}

/// Fine-grid oracle for one model.
pub struct Oracle {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub wx: Vec<f64>,
    /// Nodes in y itself (not scaled), y in [0, alpha pi].
    pub y: Vec<f64>,
    pub wy: Vec<f64>,
    pub atm: Vec<AtmMode>,
    pub ocn: Vec<OcnMode>,
    /// Tabulated basis values per mode, row-major over (x, y).
    pub atm_tab: Vec<Vec<Val>>,
    pub ocn_tab: Vec<Vec<Val>>,
}

impl Oracle {
    pub fn new(model: &Model, panels: usize, per: usize) -> Self {
        let alpha = model.params.alpha;
        let (x, wx) = composite(panels, per);
        let (ys, wys) = composite(panels, per);
        let y: Vec<f64> = ys.iter().map(|v| alpha * v).collect();
        let wy: Vec<f64> = wys.iter().map(|w| alpha * w).collect();
        let atm = model.basis.atm_modes.clone();
        let ocn = model.basis.ocn_modes.clone();
        let mut o = Self { alpha, x, wx, y, wy, atm, ocn, atm_tab: vec![], ocn_tab: vec![] };
        o.atm_tab = o.atm.iter().map(|m| o.tabulate(|x, y| atm_raw(*m, alpha, x, y))).collect();
        o.ocn_tab = o.ocn.iter().map(|m| o.tabulate(|x, y| ocn_raw(*m, alpha, x, y))).collect();
        // Normalize numerically.
        for tab in o.atm_tab.iter_mut().chain(o.ocn_tab.iter_mut()) {
            let mut s = 0.0;
            for ix in 0..o.x.len() {
                for iy in 0..o.y.len() {
                    s += o.wx[ix] * o.wy[iy] * tab[ix * o.y.len() + iy].f.powi(2);
                }
            }
            let n = 1.0 / s.sqrt();
            for v in tab.iter_mut() {
                v.f *= n;
                v.fx *= n;
                v.fy *= n;
            }
        }
        o
    }

    fn tabulate(&self, f: impl Fn(f64, f64) -> Val) -> Vec<Val> {
        let mut out = Vec::with_capacity(self.x.len() * self.y.len());
        for &x in &self.x {
            for &y in &self.y {
                out.push(f(x, y));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn weight(&self, g: usize) -> f64 {
        let ny = self.y.len();
        self.wx[g / ny] * self.wy[g % ny]
    }

    /// Pointwise field of a coefficient vector on either basis.
    pub fn field(&self, coeffs: &[f64], ocean: bool) -> Vec<Val> {
        let tabs = if ocean { &self.ocn_tab } else { &self.atm_tab };
        let mut out = vec![Val::default(); self.len()];
        for (c, tab) in coeffs.iter().zip(tabs) {
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(tab) {
                o.f += c * v.f;
                o.fx += c * v.fx;
                o.fy += c * v.fy;
            }
        }
        out
    }

    /// Projection of a pointwise scalar onto a basis.
    pub fn project(&self, values: &[f64], ocean: bool) -> Vec<f64> {
        let tabs = if ocean { &self.ocn_tab } else { &self.atm_tab };
        tabs.iter()
            .map(|tab| (0..self.len()).map(|g| self.weight(g) * values[g] * tab[g].f).sum())
            .collect()
    }

    /// Projected J(u, v) with J = u_x v_y - u_y v_x.
    pub fn jacobian(&self, u: &[f64], v: &[f64], ocean: bool) -> Vec<f64> {
        let fu = self.field(u, ocean);
        let fv = self.field(v, ocean);
        let j: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a.fx * b.fy - a.fy * b.fx).collect();
        self.project(&j, ocean)
    }

    /// Quadrature of |grad phi|^2, which equals the -Delta eigenvalue.
    pub fn dirichlet_energy(&self, idx: usize, ocean: bool) -> f64 {
        let tab = if ocean { &self.ocn_tab[idx] } else { &self.atm_tab[idx] };
        (0..self.len()).map(|g| self.weight(g) * (tab[g].fx.powi(2) + tab[g].fy.powi(2))).sum()
    }
}

fn atm_raw(m: AtmMode, alpha: f64, x: f64, y: f64) -> Val {
    let n = m.n as f64;
    let (sy, cy) = ((n * y / alpha).sin(), (n * y / alpha).cos());
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
    Val { f: xv * sy, fx: dx * sy, fy: xv * n / alpha * cy }
}

fn ocn_raw(m: OcnMode, alpha: f64, x: f64, y: f64) -> Val {
    let (mm, n) = (m.m as f64, m.n as f64);
    let (sx, cx) = ((mm * x).sin(), (mm * x).cos());
    let (sy, cy) = ((n * y / alpha).sin(), (n * y / alpha).cos());
    Val { f: sx * sy, fx: mm * cx * sy, fy: sx * n / alpha * cy }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}
