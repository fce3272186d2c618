//! Spectral vertical/horizontal split in the discrete spaces `X = H¹₀`
//! (inner product `uᵀKv`) and `Y = H⁻¹` (inner product `rᵀK⁻¹s`).
//!
//! With `Kψ_j = λ_j Mψ_j` and `ψ_iᵀMψ_j = δ_ij`, the normalized vertical
//! directions are `φ_j^X = ψ_j/√λ_j` and `φ_j^Y = √λ_j Mψ_j`. Both projections
//! then reduce to dot products with `ψ_j` and `Mψ_j`; `K⁻¹` is only needed to
//! evaluate Y-norms. The two projectors are mutual transposes
//! (`Q_Y = Q_Xᵀ`), which keeps the extended Jacobian symmetric.

use std::sync::Arc;

use crate::error::Result;
use crate::linalg::{EigenBasis, SparseMatrix, SpdFactorization};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Vertical,
    Horizontal,
}

/// Zero-based indices `j` with `λ_j ∈ [lo, hi]`. An empty result is legal: the
/// decomposition then degenerates to a plain Newton method on the whole space.
pub fn index_set(eigenvalues: &[f64], interval: [f64; 2]) -> Vec<usize> {
    let [lo, hi] = interval;
    let set: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= lo && l <= hi)
        .map(|(j, _)| j)
        .collect();
    if set.is_empty() {
        log::warn!("empty index set for interval [{lo}, {hi}]");
    }
    set
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Zero-based eigen indices forming `J`.
    pub index_set: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub psi: Vec<Vector>,
    pub mass_psi: Vec<Vector>,
    spd: Arc<SpdFactorization>,
}

impl Decomposition {
    pub fn new(
        basis: &EigenBasis,
        interval: [f64; 2],
        spd: Arc<SpdFactorization>,
        mass: &SparseMatrix,
    ) -> Self {
        let index_set = index_set(&basis.eigenvalues, interval);
        Self::from_indices(basis, index_set, spd, mass)
    }

    pub fn from_indices(
        basis: &EigenBasis,
        index_set: Vec<usize>,
        spd: Arc<SpdFactorization>,
        mass: &SparseMatrix,
    ) -> Self {
        let eigenvalues = index_set.iter().map(|&j| basis.eigenvalues[j]).collect();
        let psi: Vec<Vector> = index_set
            .iter()
            .map(|&j| basis.eigenvectors[j].clone())
            .collect();
        let mass_psi = psi.iter().map(|p| mass.mul_vec(p)).collect();
        Self {
            index_set,
            eigenvalues,
            psi,
            mass_psi,
            spd,
        }
    }

    /// `|J|`.
    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn spd(&self) -> &SpdFactorization {
        &self.spd
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        self.spd.matrix()
    }

    pub fn phi_x(&self, j: usize) -> Vector {
        &self.psi[j] / self.eigenvalues[j].sqrt()
    }

    pub fn phi_y(&self, j: usize) -> Vector {
        &self.mass_psi[j] * self.eigenvalues[j].sqrt()
    }

    pub fn x_inner(&self, u: &Vector, v: &Vector) -> f64 {
        self.stiffness().bilinear(u, v)
    }

    pub fn x_norm(&self, u: &Vector) -> f64 {
        self.x_inner(u, u).max(0.0).sqrt()
    }

    pub fn y_inner(&self, r: &Vector, s: &Vector) -> Result<f64> {
        Ok(r.dot(&self.spd.solve(s)?))
    }

    pub fn y_norm(&self, r: &Vector) -> Result<f64> {
        Ok(self.spd.inverse_quadratic(r)?.max(0.0).sqrt())
    }

    /// `P_X u = Σ_j ⟨u, φ_j^X⟩_X φ_j^X`, or its complement.
    pub fn project_x(&self, u: &Vector, part: Part) -> Vector {
        let mut vertical = Vector::zeros(u.len());
        for (p, mp) in self.psi.iter().zip(&self.mass_psi) {
            vertical.axpy(mp.dot(u), p, 1.0);
        }
        match part {
            Part::Vertical => vertical,
            Part::Horizontal => u - vertical,
        }
    }

    /// `P_Y r = Σ_j ⟨r, φ_j^Y⟩_Y φ_j^Y = Σ_j (ψ_jᵀr) Mψ_j`, or its complement.
    pub fn project_y(&self, r: &Vector, part: Part) -> Vector {
        let mut vertical = Vector::zeros(r.len());
        for (p, mp) in self.psi.iter().zip(&self.mass_psi) {
            vertical.axpy(p.dot(r), mp, 1.0);
        }
        match part {
            Part::Vertical => vertical,
            Part::Horizontal => r - vertical,
        }
    }

    /// `⟨u, φ_j^X⟩_X = √λ_j · ψ_jᵀMu`.
    pub fn heights_x(&self, u: &Vector) -> Vec<f64> {
        self.mass_psi
            .iter()
            .zip(&self.eigenvalues)
            .map(|(mp, l)| l.sqrt() * mp.dot(u))
            .collect()
    }

    /// `⟨r, φ_j^Y⟩_Y = ψ_jᵀr / √λ_j`.
    pub fn heights_y(&self, r: &Vector) -> Vec<f64> {
        self.psi
            .iter()
            .zip(&self.eigenvalues)
            .map(|(p, l)| p.dot(r) / l.sqrt())
            .collect()
    }

    /// `Σ_j h_j φ_j^X`.
    pub fn vertical_x(&self, heights: &[f64]) -> Vector {
        let n = self.spd.dim();
        let mut out = Vector::zeros(n);
        for (j, &h) in heights.iter().enumerate() {
            out.axpy(h / self.eigenvalues[j].sqrt(), &self.psi[j], 1.0);
        }
        out
    }

    /// `Σ_j z_j φ_j^Y`.
    pub fn vertical_y(&self, heights: &[f64]) -> Vector {
        let n = self.spd.dim();
        let mut out = Vector::zeros(n);
        for (j, &z) in heights.iter().enumerate() {
            out.axpy(z * self.eigenvalues[j].sqrt(), &self.mass_psi[j], 1.0);
        }
        out
    }

    /// Moves `u` vertically so that its heights equal `heights`.
    pub fn shift_to_height(&self, u: &Vector, heights: &[f64]) -> Vector {
        let current = self.heights_x(u);
        let delta: Vec<f64> = heights.iter().zip(&current).map(|(h, c)| h - c).collect();
        u + self.vertical_x(&delta)
    }
}
