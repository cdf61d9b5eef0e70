use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trig::{double, triple_d1, Trig};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Truncation: atmosphere zonal index 0..=K, meridional 1..=N; ocean 1..=M by 1..=P.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub k_zonal: usize,
    pub n_merid: usize,
    pub m_ocn: usize,
    pub p_ocn: usize,
}

impl Resolution {
    pub fn new(k_zonal: usize, n_merid: usize, m_ocn: usize, p_ocn: usize) -> Self {
        Self { k_zonal, n_merid, m_ocn, p_ocn }
    }

    /// Same truncation `n` in every direction.
    pub fn square(n: usize) -> Self {
        Self::new(n, n, n, n)
    }

    pub fn n_atm(&self) -> usize {
        (2 * self.k_zonal + 1) * self.n_merid
    }

    pub fn n_ocn(&self) -> usize {
        self.m_ocn * self.p_ocn
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_merid == 0 || self.m_ocn == 0 || self.p_ocn == 0 {
            return Err(Error::invalid("resolution", "N, M and P must be >= 1"));
        }
        if self.k_zonal == 0 {
            return Err(Error::invalid("resolution", "K must be >= 1"));
        }
        Ok(())
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Self::square(8)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}/{}x{}", self.k_zonal, self.n_merid, self.m_ocn, self.p_ocn)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    /// Parses `KxN/MxP`, or `KxN` for an identical ocean truncation.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("resolution", format!("expected KxN/MxP, got `{s}`"));
        let pair = |t: &str| -> Result<(usize, usize)> {
            let (a, b) = t.trim().split_once('x').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        let (atm, ocn) = match s.split_once('/') {
            Some((a, o)) => (pair(a)?, pair(o)?),
            None => {
                let a = pair(s)?;
                (a, a)
            }
        };
        let r = Resolution::new(atm.0, atm.1, ocn.0, ocn.1);
        r.validate()?;
        Ok(r)
    }
}

/// Zonal factor of an atmosphere mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Zonal {
    Const,
    Cos(u32),
    Sin(u32),
}

impl Zonal {
    pub fn k(self) -> u32 {
        match self {
            Zonal::Const => 0,
            Zonal::Cos(k) | Zonal::Sin(k) => k,
        }
    }

    /// Factor in nondimensional x in [0, pi].
    pub fn trig(self) -> Trig {
        match self {
            Zonal::Const => Trig::ONE,
            Zonal::Cos(k) => Trig::cos(2 * k as i64),
            Zonal::Sin(k) => Trig::sin(2 * k as i64),
        }
    }

    /// Index of the zonal factor: 0, then (cos k, sin k) pairs.
    pub fn index(self) -> usize {
        match self {
            Zonal::Const => 0,
            Zonal::Cos(k) => 2 * k as usize - 1,
            Zonal::Sin(k) => 2 * k as usize,
        }
    }

    pub fn from_index(f: usize) -> Self {
        if f == 0 {
            Zonal::Const
        } else if f % 2 == 1 {
            Zonal::Cos(f.div_ceil(2) as u32)
        } else {
            Zonal::Sin((f / 2) as u32)
        }
    }
}

/// Atmosphere mode X(x) sin(n pi y / (alpha L)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AtmMode {
    pub zonal: Zonal,
    pub n: u32,
}

/// Ocean mode sin(m pi x / L) sin(n pi y / (alpha L)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OcnMode {
    pub m: u32,
    pub n: u32,
}

/// Sparse interaction tensor, stored per output index.
///
/// For output `k` the entries `(i, j, c)` with `i < j` give
/// `J(u, v)_k = sum c (u_i v_j - u_j v_i)`.
#[derive(Debug, Clone)]
pub struct SparseTensor {
    row_ptr: Vec<usize>,
    idx: Vec<(u32, u32)>,
    val: Vec<f64>,
}

impl SparseTensor {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Coefficient (J(phi_i, phi_j), phi_k).
    pub fn coefficient(&self, i: usize, j: usize, k: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let row = self.row_ptr[k]..self.row_ptr[k + 1];
        self.idx[row.clone()]
            .iter()
            .zip(&self.val[row])
            .find(|((p, q), _)| *p as usize == a && *q as usize == b)
            .map_or(0.0, |(_, c)| sign * c)
    }

    /// Sum over `pairs` of the projected Jacobians J(u, v).
    pub fn contract(&self, exec: Exec, pairs: &[(&[f64], &[f64])], out: &mut [f64]) {
        let row = |k: usize| {
            let r = self.row_ptr[k]..self.row_ptr[k + 1];
            self.idx[r.clone()].iter().zip(&self.val[r])
        };
        match pairs {
            [(u, v)] => par::fill(exec, out, |k| {
                row(k).fold(0.0, |s, (&(i, j), c)| {
                    let (i, j) = (i as usize, j as usize);
                    s + c * (u[i] * v[j] - u[j] * v[i])
                })
            }),
            [(u0, v0), (u1, v1)] => par::fill(exec, out, |k| {
                row(k).fold(0.0, |s, (&(i, j), c)| {
                    let (i, j) = (i as usize, j as usize);
                    s + c * ((u0[i] * v0[j] - u0[j] * v0[i]) + (u1[i] * v1[j] - u1[j] * v1[i]))
                })
            }),
            _ => par::fill(exec, out, |k| {
                row(k).fold(0.0, |s, (&(i, j), c)| {
                    let (i, j) = (i as usize, j as usize);
                    let mut w = 0.0;
                    for (u, v) in pairs {
                        w += u[i] * v[j] - u[j] * v[i];
                    }
                    s + c * w
                })
            }),
        }
    }

    /// Builds from a coefficient function evaluated on candidate triples.
    fn build(n: usize, candidates: impl Fn(usize, usize) -> Vec<(usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                for (k, c) in candidates(i, j) {
                    if c != 0.0 {
                        rows[k].push((i as u32, j as u32, c));
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for (i, j, c) in r {
                idx.push((i, j));
                val.push(c);
            }
            row_ptr.push(val.len());
        }
        Self { row_ptr, idx, val }
    }
}

/// Sparse matrix in compressed rows.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    rows: Vec<Vec<(u32, f64)>>,
    n_cols: usize,
}

impl SparseMatrix {
    fn from_fn(n_rows: usize, n_cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let rows = (0..n_rows)
            .map(|i| {
                (0..n_cols)
                    .filter_map(|j| {
                        let v = f(i, j);
                        (v != 0.0).then_some((j as u32, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|(c, _)| *c as usize == j)
            .map_or(0.0, |(_, v)| *v)
    }

    /// out = A x.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, v)| v * x[j as usize]).sum();
        }
    }

    /// out = A^T x.
    pub fn apply_t(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (xi, row) in x.iter().zip(&self.rows) {
            for &(j, v) in row {
                out[j as usize] += v * xi;
            }
        }
    }
}

/// Default tensor memory cap, bytes.
pub const DEFAULT_TENSOR_CAP: usize = 2 << 30;

/// Galerkin bases, spectra and interaction operators, in nondimensional
/// coordinates x in [0, pi], y in [0, alpha pi].
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub resolution: Resolution,
    pub alpha: f64,
    /// Length scale L / pi, m.
    pub length_scale: f64,
    pub atm_modes: Vec<AtmMode>,
    pub ocn_modes: Vec<OcnMode>,
    /// Eigenvalues of -Delta (nondimensional).
    pub eig_atm: Vec<f64>,
    pub eig_ocn: Vec<f64>,
    /// L2 normalization of each mode.
    pub norm_atm: Vec<f64>,
    pub norm_ocn: Vec<f64>,
    /// Smallest eigenvalue over both bases (nondimensional).
    pub lambda_1: f64,
    pub jac_aaa: SparseTensor,
    pub jac_ooo: SparseTensor,
    /// (grad phi_i^atm, grad phi_j^ocn).
    pub grad_ao: SparseMatrix,
    /// (phi_i, d/dx phi_j) within each basis.
    pub dx_atm: SparseMatrix,
    pub dx_ocn: SparseMatrix,
}

/// Upper bound on tensor storage for a resolution, bytes.
pub fn tensor_memory_estimate(res: &Resolution) -> usize {
    let per_entry = std::mem::size_of::<(u32, u32)>() + std::mem::size_of::<f64>();
    let pairs = |n: usize| n * n.saturating_sub(1) / 2;
    (pairs(res.n_atm()) * 8 + pairs(res.n_ocn()) * 4) * per_entry
}

impl SpectralBasis {
    /// Builds the bases for domain length `l` (m) and aspect ratio `alpha`.
    pub fn build(res: Resolution, l: f64, alpha: f64, tensor_cap: usize) -> Result<Self> {
        res.validate()?;
        let estimate = tensor_memory_estimate(&res);
        if estimate > tensor_cap {
            return Err(Error::ResolutionOverflow { estimate, cap: tensor_cap });
        }
        let (nk, nn) = (2 * res.k_zonal + 1, res.n_merid);
        let mut atm_modes = Vec::with_capacity(res.n_atm());
        for f in 0..nk {
            for n in 1..=nn {
                atm_modes.push(AtmMode { zonal: Zonal::from_index(f), n: n as u32 });
            }
        }
        let mut ocn_modes = Vec::with_capacity(res.n_ocn());
        for m in 1..=res.m_ocn {
            for n in 1..=res.p_ocn {
                ocn_modes.push(OcnMode { m: m as u32, n: n as u32 });
            }
        }
        let a2 = alpha * alpha;
        let eig_atm: Vec<f64> = atm_modes
            .iter()
            .map(|m| {
                let k = 2.0 * m.zonal.k() as f64;
                k * k + (m.n as f64).powi(2) / a2
            })
            .collect();
        let eig_ocn: Vec<f64> = ocn_modes
            .iter()
            .map(|m| (m.m as f64).powi(2) + (m.n as f64).powi(2) / a2)
            .collect();
        let lambda_1 = eig_atm.iter().chain(&eig_ocn).copied().fold(f64::INFINITY, f64::min);

        let xa: Vec<Trig> = atm_modes.iter().map(|m| m.zonal.trig()).collect();
        let ya: Vec<Trig> = atm_modes.iter().map(|m| Trig::sin(m.n as i64)).collect();
        let xo: Vec<Trig> = ocn_modes.iter().map(|m| Trig::sin(m.m as i64)).collect();
        let yo: Vec<Trig> = ocn_modes.iter().map(|m| Trig::sin(m.n as i64)).collect();
        let norm = |x: Trig, y: Trig| 1.0 / (alpha * double(x, x) * double(y, y)).sqrt();
        let norm_atm: Vec<f64> = xa.iter().zip(&ya).map(|(&x, &y)| norm(x, y)).collect();
        let norm_ocn: Vec<f64> = xo.iter().zip(&yo).map(|(&x, &y)| norm(x, y)).collect();

        let jac_aaa = jacobian_tensor(&xa, &ya, &norm_atm);
        let jac_ooo = jacobian_tensor(&xo, &yo, &norm_ocn);

        let grad_ao = SparseMatrix::from_fn(xa.len(), xo.len(), |i, j| {
            let (xi, dxi) = xa[i].deriv();
            let (xj, dxj) = xo[j].deriv();
            let (yi, dyi) = ya[i].deriv();
            let (yj, dyj) = yo[j].deriv();
            let gx = xi * xj * double(dxi, dxj) * double(ya[i], yo[j]);
            let gy = double(xa[i], xo[j]) * yi * yj * double(dyi, dyj) / a2;
            norm_atm[i] * norm_ocn[j] * alpha * (gx + gy)
        });
        let dx = |xs: &[Trig], ys: &[Trig], ns: &[f64]| {
            SparseMatrix::from_fn(xs.len(), xs.len(), |i, j| {
                if ys[i] != ys[j] {
                    return 0.0;
                }
                let (c, d) = xs[j].deriv();
                ns[i] * ns[j] * alpha * c * double(xs[i], d) * double(ys[i], ys[j])
            })
        };
        let dx_atm = dx(&xa, &ya, &norm_atm);
        let dx_ocn = dx(&xo, &yo, &norm_ocn);

        Ok(Self {
            resolution: res,
            alpha,
            length_scale: l / std::f64::consts::PI,
            atm_modes,
            ocn_modes,
            eig_atm,
            eig_ocn,
            norm_atm,
            norm_ocn,
            lambda_1,
            jac_aaa,
            jac_ooo,
            grad_ao,
            dx_atm,
            dx_ocn,
        })
    }

    pub fn n_atm(&self) -> usize {
        self.atm_modes.len()
    }

    pub fn n_ocn(&self) -> usize {
        self.ocn_modes.len()
    }

    /// Smallest eigenvalue of -Delta, m^-2.
    pub fn lambda_1_si(&self) -> f64 {
        self.lambda_1 / (self.length_scale * self.length_scale)
    }

    /// Index of an atmosphere mode, if present.
    pub fn atm_index(&self, zonal: Zonal, n: u32) -> Option<usize> {
        let f = zonal.index();
        let nn = self.resolution.n_merid;
        (f < 2 * self.resolution.k_zonal + 1 && n >= 1 && (n as usize) <= nn)
            .then(|| f * nn + n as usize - 1)
    }

    /// Index of an ocean mode, if present.
    pub fn ocn_index(&self, m: u32, n: u32) -> Option<usize> {
        let (mm, pp) = (self.resolution.m_ocn, self.resolution.p_ocn);
        (m >= 1 && n >= 1 && (m as usize) <= mm && (n as usize) <= pp)
            .then(|| (m as usize - 1) * pp + n as usize - 1)
    }

    /// Projected Jacobian J(u, v) onto the same basis.
    pub fn jacobian(&self, exec: Exec, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let t = if u.len() == self.n_atm() && v.len() == self.n_atm() {
            &self.jac_aaa
        } else if u.len() == self.n_ocn() && v.len() == self.n_ocn() {
            &self.jac_ooo
        } else {
            return Err(Error::BasisMismatch(format!(
                "jacobian operands of length {} and {} match neither basis ({} atm, {} ocn)",
                u.len(),
                v.len(),
                self.n_atm(),
                self.n_ocn()
            )));
        };
        let mut out = vec![0.0; t.dim()];
        t.contract(exec, &[(u, v)], &mut out);
        Ok(out)
    }

    /// Mode indices sorted by increasing eigenvalue (stable).
    pub fn atm_by_eigenvalue(&self) -> Vec<usize> {
        sorted_by(&self.eig_atm)
    }

    pub fn ocn_by_eigenvalue(&self) -> Vec<usize> {
        sorted_by(&self.eig_ocn)
    }
}

fn sorted_by(eig: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eig.len()).collect();
    idx.sort_by(|&a, &b| eig[a].total_cmp(&eig[b]));
    idx
}

/// Exact tensor c_ijk = N_i N_j N_k [X'YY' - XY'Y' ...] from 1-D triple integrals.
fn jacobian_tensor(xs: &[Trig], ys: &[Trig], norms: &[f64]) -> SparseTensor {
    let n = xs.len();
    // Distinct 1-D factors, to tabulate the triple integrals once.
    let uniq = |v: &[Trig]| {
        let mut u: Vec<Trig> = Vec::new();
        let ids: Vec<usize> = v
            .iter()
            .map(|t| match u.iter().position(|s| s == t) {
                Some(p) => p,
                None => {
                    u.push(*t);
                    u.len() - 1
                }
            })
            .collect();
        (u, ids)
    };
    let (ux, ix) = uniq(xs);
    let (uy, iy) = uniq(ys);
    let table = |u: &[Trig]| {
        let m = u.len();
        let mut t = vec![0.0; m * m * m];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    t[(a * m + b) * m + c] = triple_d1(u[a], u[b], u[c]);
                }
            }
        }
        t
    };
    let (tx, ty) = (table(&ux), table(&uy));
    let (mx, my) = (ux.len(), uy.len());
    let tx_at = |a: usize, b: usize, c: usize| tx[(a * mx + b) * mx + c];
    let ty_at = |a: usize, b: usize, c: usize| ty[(a * my + b) * my + c];
    // Modes grouped by (x factor, y factor) for the candidate search.
    let mut by_xy = vec![usize::MAX; mx * my];
    for k in 0..n {
        by_xy[ix[k] * my + iy[k]] = k;
    }
    SparseTensor::build(n, |i, j| {
        let (xi, xj, yi, yj) = (ix[i], ix[j], iy[i], iy[j]);
        let mut out = Vec::new();
        for xk in 0..mx {
            let (ax, bx) = (tx_at(xi, xj, xk), tx_at(xj, xi, xk));
            if ax == 0.0 && bx == 0.0 {
                continue;
            }
            for yk in 0..my {
                let k = by_xy[xk * my + yk];
                if k == usize::MAX {
                    continue;
                }
                let c = ax * ty_at(yj, yi, yk) - bx * ty_at(yi, yj, yk);
                if c != 0.0 {
                    out.push((k, norms[i] * norms[j] * norms[k] * c));
                }
            }
        }
        out
    })
}
