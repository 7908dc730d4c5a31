use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Symmetric `d×d` tensor, `d ∈ {2, 3}`, storing only the upper triangle.
///
/// Slot layout: 2D `[xx, xy, yy]`, 3D `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    dim: usize,
    data: [f64; 6],
}

const SLOTS_2D: [[usize; 2]; 2] = [[0, 1], [1, 2]];
const SLOTS_3D: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

impl SymTensor {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SymTensor dimension must be 2 or 3");
        SymTensor { dim, data: [0.0; 6] }
    }

    /// Symmetric part `½(G + Gᵀ)` of a full `d×d` matrix given row by row.
    pub fn sym_part(dim: usize, g: &[f64]) -> Self {
        assert_eq!(g.len(), dim * dim);
        let mut out = SymTensor::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = if i == j {
                    g[i * dim + i]
                } else {
                    0.5 * (g[i * dim + j] + g[j * dim + i])
                };
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut out = SymTensor::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            out.set(i, i, v);
        }
        out
    }

    pub fn identity(dim: usize) -> Self {
        SymTensor::diag(&vec![1.0; dim])
    }

    /// Builds from upper-triangle slots in the documented layout.
    pub fn from_slots(dim: usize, slots: &[f64]) -> Self {
        let mut out = SymTensor::zeros(dim);
        out.data[..slots.len()].copy_from_slice(slots);
        assert_eq!(slots.len(), out.n_slots());
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_slots(&self) -> usize {
        if self.dim == 2 {
            3
        } else {
            6
        }
    }

    pub fn slots(&self) -> &[f64] {
        &self.data[..self.n_slots()]
    }

    #[inline]
    fn slot(dim: usize, i: usize, j: usize) -> usize {
        if dim == 2 {
            SLOTS_2D[i][j]
        } else {
            SLOTS_3D[i][j]
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[Self::slot(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[Self::slot(self.dim, i, j)] = v;
    }

    #[inline]
    fn is_diag_slot(&self, k: usize) -> bool {
        if self.dim == 2 {
            k != 1
        } else {
            matches!(k, 0 | 3 | 5)
        }
    }

    /// Frobenius inner product `P·Q = Σ_ij P_ij Q_ij`.
    #[inline]
    pub fn dot(&self, other: &SymTensor) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for k in 0..self.n_slots() {
            let w = if self.is_diag_slot(k) { 1.0 } else { 2.0 };
            s += w * self.data[k] * other.data[k];
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> SymTensor {
        let mut out = *self;
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.slots().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(mut self, rhs: SymTensor) -> SymTensor {
        self += rhs;
        self
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: SymTensor) {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(mut self, rhs: SymTensor) -> SymTensor {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        self.scale(-1.0)
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    fn mul(self, rhs: SymTensor) -> SymTensor {
        rhs.scale(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_counts_off_diagonals_twice() {
        let t = SymTensor::sym_part(2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(t.norm_sq(), 1.0 + 4.0 + 4.0 + 9.0);
        let u = SymTensor::sym_part(3, &[1.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(u.get(0, 2), 2.0);
        assert_eq!(u.get(2, 0), 2.0);
        assert_eq!(u.norm_sq(), 1.0 + 8.0);
    }

    #[test]
    fn skew_part_vanishes() {
        let t = SymTensor::sym_part(2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(t.is_zero());
        assert_eq!(t.norm(), 0.0);
    }
}
