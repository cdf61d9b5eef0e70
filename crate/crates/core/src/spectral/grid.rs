use std::f64::consts::PI;

use super::basis::SpectralBasis;
use super::quad::gauss_legendre;

/// Tensor Gauss-Legendre collocation grid on [0, pi] x [0, alpha pi].
///
/// Fields are stored row-major, `f[ix * ny + iy]`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x: Vec<f64>,
    /// Nodes in the scaled meridional coordinate Y = y / alpha in [0, pi].
    pub y: Vec<f64>,
    /// Area weights w_x w_y alpha.
    pub w: Vec<f64>,
    n_merid: usize,
    n_zonal: usize,
    p_ocn: usize,
    m_ocn: usize,
    /// Normalized zonal factors of the atmosphere basis, `[f * nx + ix]`.
    xa: Vec<f64>,
    /// Normalized zonal factors of the ocean basis, `[(m-1) * nx + ix]`.
    xo: Vec<f64>,
    /// Normalized meridional factors including 1/sqrt(alpha), `[(n-1) * ny + iy]`.
    yt: Vec<f64>,
}

/// Grid points per direction for a given maximum frequency.
pub fn grid_size(max_freq: usize, factor: f64) -> usize {
    (factor * max_freq as f64).ceil() as usize + 16
}

impl Grid {
    /// Builds a grid whose size grows with `factor` times the highest frequency.
    pub fn new(basis: &SpectralBasis, factor: f64) -> Self {
        let r = basis.resolution;
        let nx = grid_size((2 * r.k_zonal).max(r.m_ocn), factor);
        let ny = grid_size(r.n_merid.max(r.p_ocn), factor);
        Self::with_size(basis, nx, ny)
    }

    pub fn with_size(basis: &SpectralBasis, nx: usize, ny: usize) -> Self {
        let r = basis.resolution;
        let alpha = basis.alpha;
        let (x, wx) = gauss_legendre(nx, 0.0, PI);
        let (y, wy) = gauss_legendre(ny, 0.0, PI);
        let mut w = vec![0.0; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                w[ix * ny + iy] = wx[ix] * wy[iy] * alpha;
            }
        }
        let nz = 2 * r.k_zonal + 1;
        let mut xa = vec![0.0; nz * nx];
        for f in 0..nz {
            let z = super::Zonal::from_index(f);
            let t = z.trig();
            let norm = if f == 0 { PI } else { PI / 2.0 };
            for ix in 0..nx {
                xa[f * nx + ix] = t.eval(x[ix]) / norm.sqrt();
            }
        }
        let mut xo = vec![0.0; r.m_ocn * nx];
        for m in 1..=r.m_ocn {
            for ix in 0..nx {
                xo[(m - 1) * nx + ix] = (m as f64 * x[ix]).sin() / (PI / 2.0).sqrt();
            }
        }
        let nmax = r.n_merid.max(r.p_ocn);
        let mut yt = vec![0.0; nmax * ny];
        for n in 1..=nmax {
            for iy in 0..ny {
                yt[(n - 1) * ny + iy] = (n as f64 * y[iy]).sin() / (alpha * PI / 2.0).sqrt();
            }
        }
        Self {
            nx,
            ny,
            x,
            y,
            w,
            n_merid: r.n_merid,
            n_zonal: nz,
            p_ocn: r.p_ocn,
            m_ocn: r.m_ocn,
            xa,
            xo,
            yt,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn synth(&self, xt: &[f64], nf: usize, nn: usize, c: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let mut tmp = vec![0.0; nf * ny];
        for f in 0..nf {
            let row = &mut tmp[f * ny..(f + 1) * ny];
            for n in 0..nn {
                let a = c[f * nn + n];
                if a == 0.0 {
                    continue;
                }
                for (t, y) in row.iter_mut().zip(&self.yt[n * ny..(n + 1) * ny]) {
                    *t += a * y;
                }
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for ix in 0..nx {
            let o = &mut out[ix * ny..(ix + 1) * ny];
            for f in 0..nf {
                let xv = xt[f * nx + ix];
                for (oo, t) in o.iter_mut().zip(&tmp[f * ny..(f + 1) * ny]) {
                    *oo += xv * t;
                }
            }
        }
    }

    fn project(&self, xt: &[f64], nf: usize, nn: usize, field: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let mut tmp = vec![0.0; nf * ny];
        for ix in 0..nx {
            let fr = &field[ix * ny..(ix + 1) * ny];
            let wr = &self.w[ix * ny..(ix + 1) * ny];
            for f in 0..nf {
                let xv = xt[f * nx + ix];
                for ((t, v), w) in tmp[f * ny..(f + 1) * ny].iter_mut().zip(fr).zip(wr) {
                    *t += xv * v * w;
                }
            }
        }
        for f in 0..nf {
            let row = &tmp[f * ny..(f + 1) * ny];
            for n in 0..nn {
                out[f * nn + n] = row
                    .iter()
                    .zip(&self.yt[n * ny..(n + 1) * ny])
                    .map(|(t, y)| t * y)
                    .sum();
            }
        }
    }

    /// Atmosphere coefficients to grid values.
    pub fn synth_atm(&self, c: &[f64], out: &mut [f64]) {
        self.synth(&self.xa, self.n_zonal, self.n_merid, c, out);
    }

    /// Ocean coefficients to grid values.
    pub fn synth_ocn(&self, c: &[f64], out: &mut [f64]) {
        self.synth(&self.xo, self.m_ocn, self.p_ocn, c, out);
    }

    /// Quadrature projection of a grid field onto the atmosphere basis.
    pub fn project_atm(&self, field: &[f64], out: &mut [f64]) {
        self.project(&self.xa, self.n_zonal, self.n_merid, field, out);
    }

    /// Quadrature projection of a grid field onto the ocean basis.
    pub fn project_ocn(&self, field: &[f64], out: &mut [f64]) {
        self.project(&self.xo, self.m_ocn, self.p_ocn, field, out);
    }

    /// Quadrature of a grid field over the nondimensional domain.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().zip(&self.w).map(|(f, w)| f * w).sum()
    }

    /// Quadrature of the product of two grid fields.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.w).map(|((a, b), w)| a * b * w).sum()
    }

    /// Nondimensional domain area alpha pi^2.
    pub fn area(&self) -> f64 {
        self.w.iter().sum()
    }
}
