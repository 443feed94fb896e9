//! Hilbert-space bookkeeping for the composite detector.
//!
//! The total space is M_C (2) x M_H (2) x G (3) x S (2), 24 dimensions.
//! Basis states are ordered lexicographically over (m_c, m_h, g, s) with s
//! fastest, i.e. `index = s + 2*(g + 3*(m_h + 2*m_c))`. This ordering is
//! fixed so that matrix fixtures and file dumps are stable.

use ndarray::linalg::kron;
use ndarray::Array2;

use crate::{CMatrix, C64};

pub const DIM_MC: usize = 2;
pub const DIM_MH: usize = 2;
pub const DIM_G: usize = 3;
pub const DIM_S: usize = 2;

/// Total Hilbert-space dimension.
pub const DIM: usize = DIM_MC * DIM_MH * DIM_G * DIM_S;

/// Dimension of the vectorized (Liouville) space.
pub const DIM2: usize = DIM * DIM;

/// Quantum numbers of one product basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisState {
    pub m_c: usize,
    pub m_h: usize,
    pub g: usize,
    pub s: usize,
}

impl BasisState {
    pub fn index(&self) -> usize {
        self.s + DIM_S * (self.g + DIM_G * (self.m_h + DIM_MH * self.m_c))
    }

    pub fn from_index(idx: usize) -> Self {
        let s = idx % DIM_S;
        let idx = idx / DIM_S;
        let g = idx % DIM_G;
        let idx = idx / DIM_G;
        let m_h = idx % DIM_MH;
        let m_c = idx / DIM_MH;
        BasisState { m_c, m_h, g, s }
    }
}

/// Iterator over all 24 basis states in index order.
pub fn basis_states() -> impl Iterator<Item = BasisState> {
    (0..DIM).map(BasisState::from_index)
}

pub fn identity(dim: usize) -> CMatrix {
    Array2::eye(dim)
}

/// |a><b| on a `dim`-dimensional factor.
pub fn ketbra(dim: usize, a: usize, b: usize) -> CMatrix {
    let mut m = Array2::zeros((dim, dim));
    m[[a, b]] = C64::new(1.0, 0.0);
    m
}

/// Embed per-factor operators into the full space, ordered M_C x M_H x G x S.
pub fn embed(op_mc: &CMatrix, op_mh: &CMatrix, op_g: &CMatrix, op_s: &CMatrix) -> CMatrix {
    kron(&kron(&kron(op_mc, op_mh), op_g), op_s)
}

/// Single-factor embedding helpers, identity on every other factor.
pub fn on_mc(op: &CMatrix) -> CMatrix {
    embed(op, &identity(DIM_MH), &identity(DIM_G), &identity(DIM_S))
}

pub fn on_mh(op: &CMatrix) -> CMatrix {
    embed(&identity(DIM_MC), op, &identity(DIM_G), &identity(DIM_S))
}

pub fn on_g(op: &CMatrix) -> CMatrix {
    embed(&identity(DIM_MC), &identity(DIM_MH), op, &identity(DIM_S))
}

pub fn on_s(op: &CMatrix) -> CMatrix {
    embed(&identity(DIM_MC), &identity(DIM_MH), &identity(DIM_G), op)
}

/// Partial trace over the target system S: 24x24 -> 12x12 detector block.
pub fn partial_trace_s(rho: &CMatrix) -> CMatrix {
    let d = DIM / DIM_S;
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            for s in 0..DIM_S {
                out[[i, j]] += rho[[i * DIM_S + s, j * DIM_S + s]];
            }
        }
    }
    out
}

/// Partial trace down to the gain medium: 24x24 -> 3x3.
pub fn gain_marginal(rho: &CMatrix) -> CMatrix {
    let mut out = Array2::zeros((DIM_G, DIM_G));
    for st in basis_states() {
        for g2 in 0..DIM_G {
            let other = BasisState { g: g2, ..st };
            out[[st.g, g2]] += rho[[st.index(), other.index()]];
        }
    }
    out
}

/// Tensor a 12x12 detector-block operator with a 2x2 operator on S.
pub fn detector_tensor_s(det: &CMatrix, op_s: &CMatrix) -> CMatrix {
    kron(det, op_s)
}

/// Max absolute entry, used for commutator and residual checks.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Commutator [a, b].
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

/// Hermitian conjugate.
pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_and_ordering() {
        for (k, st) in basis_states().enumerate() {
            assert_eq!(st.index(), k);
            assert_eq!(BasisState::from_index(k), st);
        }
        // s is the fastest index
        let a = BasisState { m_c: 0, m_h: 0, g: 0, s: 0 };
        let b = BasisState { m_c: 0, m_h: 0, g: 0, s: 1 };
        assert_eq!(a.index() + 1, b.index());
    }

    #[test]
    fn embed_matches_manual_index() {
        // |1><0| on M_C acts as identity on the other factors
        let op = on_mc(&ketbra(DIM_MC, 1, 0));
        for st in basis_states() {
            let from = st;
            let to = BasisState { m_c: 1, ..st };
            let expect = if st.m_c == 0 { 1.0 } else { 0.0 };
            assert_eq!(op[[to.index(), from.index()]].re, expect);
        }
    }

    #[test]
    fn partial_trace_s_preserves_trace() {
        let mut rho: CMatrix = Array2::zeros((DIM, DIM));
        for k in 0..DIM {
            rho[[k, k]] = C64::new(1.0 / DIM as f64, 0.0);
        }
        let det = partial_trace_s(&rho);
        let tr: C64 = (0..DIM / DIM_S).map(|i| det[[i, i]]).sum();
        assert!((tr.re - 1.0).abs() < 1e-14);
    }
}
