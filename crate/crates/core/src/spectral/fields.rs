use serde::{Deserialize, Serialize};

/// Coefficient vectors (psi_t, psi_c, psi_o, theta_o), stored contiguously.
///
/// Used for states, tendencies and tangent vectors alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fields {
    pub data: Vec<f64>,
    pub n_atm: usize,
    pub n_ocn: usize,
}

/// Linear tendencies and tangent vectors share the state layout.
pub type Tendency = Fields;
pub type TangentState = Fields;

impl Fields {
    pub fn zeros(n_atm: usize, n_ocn: usize) -> Self {
        Self { data: vec![0.0; 2 * n_atm + 2 * n_ocn], n_atm, n_ocn }
    }

    pub fn zeros_like(other: &Fields) -> Self {
        Self::zeros(other.n_atm, other.n_ocn)
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn same_shape(&self, other: &Fields) -> bool {
        self.n_atm == other.n_atm && self.n_ocn == other.n_ocn
    }

    pub fn psi_t(&self) -> &[f64] {
        &self.data[..self.n_atm]
    }

    pub fn psi_c(&self) -> &[f64] {
        &self.data[self.n_atm..2 * self.n_atm]
    }

    pub fn psi_o(&self) -> &[f64] {
        &self.data[2 * self.n_atm..2 * self.n_atm + self.n_ocn]
    }

    pub fn theta_o(&self) -> &[f64] {
        &self.data[2 * self.n_atm + self.n_ocn..]
    }

    /// Mutable views of the four components.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let (na, no) = (self.n_atm, self.n_ocn);
        let (t, rest) = self.data.split_at_mut(na);
        let (c, rest) = rest.split_at_mut(na);
        let (o, th) = rest.split_at_mut(no);
        (t, c, o, th)
    }

    pub fn psi_t_mut(&mut self) -> &mut [f64] {
        self.parts_mut().0
    }

    pub fn psi_c_mut(&mut self) -> &mut [f64] {
        self.parts_mut().1
    }

    pub fn psi_o_mut(&mut self) -> &mut [f64] {
        self.parts_mut().2
    }

    pub fn theta_o_mut(&mut self) -> &mut [f64] {
        self.parts_mut().3
    }

    /// self += a * x.
    pub fn axpy(&mut self, a: f64, x: &Fields) {
        for (s, x) in self.data.iter_mut().zip(&x.data) {
            *s += a * x;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// a * x + b * y.
    pub fn lincomb(a: f64, x: &Fields, b: f64, y: &Fields) -> Fields {
        let data = x.data.iter().zip(&y.data).map(|(x, y)| a * x + b * y).collect();
        Fields { data, n_atm: x.n_atm, n_ocn: x.n_ocn }
    }

    pub fn sub(&self, other: &Fields) -> Fields {
        Fields::lincomb(1.0, self, -1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Model state in nondimensional units (time in 1/f0, streamfunctions in
/// (L/pi)^2 f0, temperature anomalies in K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub fields: Fields,
    pub time: f64,
}

impl State {
    pub fn zeros(n_atm: usize, n_ocn: usize) -> Self {
        Self { fields: Fields::zeros(n_atm, n_ocn), time: 0.0 }
    }
}
