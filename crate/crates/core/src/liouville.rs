//! Vectorized master equation and Liouvillian spectral machinery.
//!
//! Operators are vectorized by column stacking, `vec(rho)[i + d*j] = rho[i,j]`,
//! so that superoperators become ordinary matrices via
//! `vec(A rho C) = (C^T (x) A) vec(rho)`. The Liouvillian of the detector is a
//! 576x576 complex matrix; its biorthogonal eigendecomposition yields the
//! steady state, the slowest relaxation rate, and the Drazin pseudo-inverse
//! `L^+ = sum_{i>0} (1/lambda_i) |x_i>><<y_i|` that turns time integrals of
//! transients into closed forms.
//!
//! The eigendecomposition is a dense non-Hermitian solve. Because every
//! matrix element of the Liouvillian is assembled from elementary tensor
//! factors, its zero pattern is exact; the solver partitions the matrix into
//! the connected components of that pattern (an exact permutation similarity)
//! and decomposes each dense diagonal block, which is much faster than one
//! monolithic solve and bit-compatible with it up to eigenvector phase. The
//! monolithic path is kept available through [`SpectralOptions::use_blocks`]
//! and is cross-checked in the test suite.

use std::cell::OnceCell;
use std::io::Write;
use std::path::Path;

use ndarray::linalg::kron;
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse};

use crate::hilbert::{self, dagger, DIM};
use crate::model::{
    build_hamiltonian, build_jump_operators, build_rates, Channel, DetectorParams, JumpOperator,
    RateSet,
};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Column-stack a square matrix into a vector.
pub fn vectorize(rho: &CMatrix) -> CVector {
    let d = rho.nrows();
    Array1::from_shape_fn(d * d, |k| rho[[k % d, k / d]])
}

/// Inverse of [`vectorize`]; fails unless the length is a perfect square.
pub fn devectorize(v: &CVector) -> Result<CMatrix> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch { expected: d * d, got: n });
    }
    Ok(Array2::from_shape_fn((d, d), |(i, j)| v[i + d * j]))
}

/// Row vector of the vectorized identity, i.e. `<<1|` as a plain row.
pub fn identity_row(d: usize) -> CVector {
    let mut v = Array1::zeros(d * d);
    for i in 0..d {
        v[i * (d + 1)] = C64::new(1.0, 0.0);
    }
    v
}

/// Superoperator counting net quanta emitted into one channel's bath:
/// `J_c = Gamma^- (conj(L^-) (x) L^-) - Gamma^+ (conj(L^+) (x) L^+)`.
///
/// Positive expectation means net emission, so on diagonal states the
/// detection-channel current is `Gamma^-_D P_2 - Gamma^+_D P_0`.
#[derive(Debug, Clone)]
pub struct CurrentSuperop {
    pub channel: Channel,
    hilbert_dim: usize,
    /// Sparse triplets (row, col, value) in the vectorized space.
    entries: Vec<(usize, usize, C64)>,
}

impl CurrentSuperop {
    fn from_jump_pair(channel: Channel, lower: &JumpOperator, raise: &JumpOperator) -> Self {
        let d = lower.matrix.nrows();
        let mut entries = Vec::new();
        let mut add = |l: &CMatrix, weight: f64| {
            if weight == 0.0 {
                return;
            }
            let nz: Vec<(usize, usize, C64)> = l
                .indexed_iter()
                .filter(|(_, z)| z.norm() != 0.0)
                .map(|((i, j), z)| (i, j, *z))
                .collect();
            // conj(L) (x) L with the column index of rho as the slow factor.
            for &(bi, bj, bz) in &nz {
                for &(ai, aj, az) in &nz {
                    let row = ai + d * bi;
                    let col = aj + d * bj;
                    entries.push((row, col, C64::new(weight, 0.0) * bz.conj() * az));
                }
            }
        };
        add(&lower.matrix, lower.rate);
        add(&raise.matrix, -raise.rate);
        CurrentSuperop {
            channel,
            hilbert_dim: d,
            entries,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.hilbert_dim * self.hilbert_dim;
        let mut m = Array2::zeros((n, n));
        for &(i, j, z) in &self.entries {
            m[[i, j]] += z;
        }
        m
    }

    /// The row `<<1| J_c`, enough to evaluate currents `<<1| J_c |rho>>`.
    pub fn expectation_row(&self) -> CVector {
        let d = self.hilbert_dim;
        let mut row = Array1::zeros(d * d);
        for &(i, j, z) in &self.entries {
            // <<1| picks the diagonal positions i = k + d*k.
            if i % d == i / d {
                row[j] += z;
            }
        }
        row
    }

    /// Current through this channel in the given state.
    pub fn current(&self, rho_vec: &CVector) -> C64 {
        self.expectation_row().dot(rho_vec)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        let mut out = Array1::zeros(v.len());
        for &(i, j, z) in &self.entries {
            out[i] += z * v[j];
        }
        out
    }
}

/// The assembled generator of the master equation, together with the model
/// data it was built from and per-channel current superoperators.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    /// Dense 576x576 generator acting on vectorized density matrices.
    pub matrix: CMatrix,
    pub params: DetectorParams,
    pub rates: RateSet,
    /// Total Hamiltonian H = H_0 + H_I (24x24).
    pub hamiltonian: CMatrix,
    pub jumps: Vec<JumpOperator>,
    currents: Vec<CurrentSuperop>,
}

impl Liouvillian {
    pub fn current(&self, channel: Channel) -> &CurrentSuperop {
        self.currents
            .iter()
            .find(|c| c.channel == channel)
            .expect("all channels are populated at assembly")
    }
}

/// Dense current superoperator for one channel, `J_c` as a 576x576 matrix.
pub fn current_superop(channel: Channel, params: &DetectorParams, rates: &RateSet) -> CMatrix {
    let jumps = build_jump_operators(params, rates);
    let lower = jumps
        .iter()
        .find(|j| j.channel == channel && !j.raising)
        .expect("channel exists");
    let raise = jumps
        .iter()
        .find(|j| j.channel == channel && j.raising)
        .expect("channel exists");
    CurrentSuperop::from_jump_pair(channel, lower, raise).to_dense()
}

/// Direct matrix-form right-hand side of the master equation,
/// `-i[H, rho] + sum_k Gamma_k (L rho L^dag - 1/2 {L^dag L, rho})`.
///
/// Used to validate the vectorized generator and as the independent
/// fixed-step integration oracle.
pub fn master_equation_rhs(h: &CMatrix, jumps: &[JumpOperator], rho: &CMatrix) -> CMatrix {
    let mut out = hilbert::commutator(h, rho) * (-C64::i());
    for jump in jumps {
        if jump.rate == 0.0 {
            continue;
        }
        let l = &jump.matrix;
        let ldag = dagger(l);
        let ldag_l = ldag.dot(l);
        let sandwich = l.dot(rho).dot(&ldag);
        let anti = ldag_l.dot(rho) + rho.dot(&ldag_l);
        out = out + (sandwich - anti * C64::new(0.5, 0.0)) * C64::new(jump.rate, 0.0);
    }
    out
}

/// Assemble the vectorized Liouvillian
/// `L = -i(1 (x) H - H^T (x) 1) + sum_k Gamma_k [ (conj(L_k) (x) L_k)
///   - 1/2 (1 (x) L_k^dag L_k) - 1/2 ((L_k^dag L_k)^T (x) 1) ]`.
pub fn assemble_liouvillian(params: &DetectorParams) -> Result<Liouvillian> {
    let rates = build_rates(params)?;
    let h = build_hamiltonian(params);
    let jumps = build_jump_operators(params, &rates);
    let eye = hilbert::identity(DIM);

    let mut l = (kron(&eye, &h) - kron(&h.t().to_owned(), &eye)) * (-C64::i());
    for jump in &jumps {
        if jump.rate == 0.0 {
            continue;
        }
        let lm = &jump.matrix;
        let ldag_l = dagger(lm).dot(lm);
        let rate = C64::new(jump.rate, 0.0);
        let half = C64::new(0.5, 0.0);
        l = l + kron(&lm.mapv(|z| z.conj()), lm) * rate
            - kron(&eye, &ldag_l) * (rate * half)
            - kron(&ldag_l.t().to_owned(), &eye) * (rate * half);
    }

    let currents = Channel::ALL
        .iter()
        .map(|&ch| {
            let lower = jumps.iter().find(|j| j.channel == ch && !j.raising).unwrap();
            let raise = jumps.iter().find(|j| j.channel == ch && j.raising).unwrap();
            CurrentSuperop::from_jump_pair(ch, lower, raise)
        })
        .collect();

    Ok(Liouvillian {
        matrix: l,
        params: *params,
        rates,
        hamiltonian: h,
        jumps,
        currents,
    })
}

/// Options for the spectral decomposition.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Eigenvalues with |lambda| below this are steady-state candidates.
    pub zero_tol: f64,
    /// Drazin conditioning threshold: reject if
    /// `min |lambda_i| < cond_tol * max |lambda_i|` over decaying modes.
    pub cond_tol: f64,
    /// Decompose per connected component of the exact zero pattern.
    pub use_blocks: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            zero_tol: 1e-10,
            cond_tol: 1e-12,
            use_blocks: true,
        }
    }
}

/// Biorthogonal spectral data of a relaxing generator.
///
/// Eigenvalues are sorted with the steady eigenvalue (|lambda| < zero_tol)
/// first, then by descending real part, so `eigenvalues[1]` is the slowest
/// decaying mode. Right eigenvectors are the columns of `right`; left
/// eigenvectors are the rows of `left = right^-1`, paired by the plain
/// (conjugation-free) dot product `y_i . x_j = delta_ij`.
#[derive(Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    pub right: CMatrix,
    pub left: CMatrix,
    /// Steady state as a Hermitian unit-trace density matrix.
    pub steady_state: CMatrix,
    pub options: SpectralOptions,
    drazin: OnceCell<CMatrix>,
}

impl Clone for SpectralData {
    fn clone(&self) -> Self {
        SpectralData {
            eigenvalues: self.eigenvalues.clone(),
            right: self.right.clone(),
            left: self.left.clone(),
            steady_state: self.steady_state.clone(),
            options: self.options,
            drazin: OnceCell::new(),
        }
    }
}

impl SpectralData {
    /// Dimension of the vectorized space.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Dimension of the underlying Hilbert space.
    pub fn hilbert_dim(&self) -> usize {
        self.steady_state.nrows()
    }

    /// Slowest nonzero eigenvalue (largest real part among decaying modes).
    pub fn lambda1(&self) -> C64 {
        self.eigenvalues[1]
    }

    pub fn steady_vec(&self) -> CVector {
        vectorize(&self.steady_state)
    }

    /// Mode weights of a functional row `u`: `w_i = u . x_i`.
    pub fn mode_weights(&self, row: &CVector) -> CVector {
        row.dot(&self.right)
    }

    /// Mode coordinates of a state vector: `c_i = y_i . v`.
    pub fn mode_coords(&self, v: &CVector) -> CVector {
        self.left.dot(v)
    }

    /// Apply the Drazin pseudo-inverse without materializing it:
    /// `L^+ v = X diag(0, 1/lambda_1, ...) Y v`.
    pub fn apply_drazin(&self, v: &CVector) -> CVector {
        let mut c = self.mode_coords(v);
        c[0] = C64::new(0.0, 0.0);
        for i in 1..self.dim() {
            c[i] /= self.eigenvalues[i];
        }
        self.right.dot(&c)
    }

    /// Propagate mode coordinates to time t and return the state vector,
    /// `|rho(t)>> = sum_i e^{lambda_i t} c_i |x_i>>` (the steady mode has
    /// lambda ~ 0 and is included, so completeness gives rho(0) = rho_0).
    pub fn propagate_coords(&self, coords: &CVector, t: f64) -> CVector {
        let mut c = coords.clone();
        for i in 0..self.dim() {
            c[i] *= (self.eigenvalues[i] * t).exp();
        }
        self.right.dot(&c)
    }

    /// Conditioning guard for the Drazin pseudo-inverse.
    pub fn check_drazin_conditioning(&self) -> Result<()> {
        let decaying = &self.eigenvalues[1..];
        let min_abs = decaying.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let max_abs = decaying.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if min_abs < self.options.cond_tol * max_abs {
            return Err(Error::IllConditioned {
                min_abs,
                max_abs,
                cond_tol: self.options.cond_tol,
            });
        }
        Ok(())
    }

    /// Dense Drazin pseudo-inverse, memoized after the first call.
    pub fn drazin(&self) -> Result<&CMatrix> {
        self.check_drazin_conditioning()?;
        Ok(self.drazin.get_or_init(|| {
            let n = self.dim();
            let mut scaled_left = self.left.clone();
            for i in 1..n {
                let inv = C64::new(1.0, 0.0) / self.eigenvalues[i];
                scaled_left.row_mut(i).mapv_inplace(|z| z * inv);
            }
            scaled_left.row_mut(0).fill(C64::new(0.0, 0.0));
            self.right.dot(&scaled_left)
        }))
    }
}

/// Drazin pseudo-inverse of the decomposed Liouvillian.
pub fn drazin_inverse(spectral: &SpectralData) -> Result<CMatrix> {
    spectral.drazin().cloned()
}

/// Connected components of the symmetrized exact zero pattern. Components
/// are invariant subspaces, so the matrix is block-diagonal under this
/// partition; each component lists its indices in ascending order.
fn sparsity_components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && (m[[i, j]].norm() != 0.0 || m[[j, i]].norm() != 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

struct RawDecomposition {
    eigenvalues: Vec<C64>,
    right: CMatrix,
    left: CMatrix,
}

fn eig_and_inverse(sub: CMatrix) -> Result<(CVector, CMatrix, CMatrix)> {
    let (vals, vecs) = sub
        .eig()
        .map_err(|e| Error::NonConvergedEigensolve(e.to_string()))?;
    let inv = vecs
        .inv()
        .map_err(|e| Error::NonConvergedEigensolve(format!("eigenbasis inversion: {e}")))?;
    Ok((vals, vecs, inv))
}

fn decompose_blocks(matrix: &CMatrix, use_blocks: bool) -> Result<RawDecomposition> {
    let n = matrix.nrows();
    let components = if use_blocks {
        sparsity_components(matrix)
    } else {
        vec![(0..n).collect()]
    };

    let mut eigenvalues = vec![C64::new(0.0, 0.0); n];
    let mut right: CMatrix = Array2::zeros((n, n));
    let mut left: CMatrix = Array2::zeros((n, n));
    let mut offset = 0;
    for comp in &components {
        let b = comp.len();
        let sub = Array2::from_shape_fn((b, b), |(i, j)| matrix[[comp[i], comp[j]]]);
        // Large solves need more stack than worker threads guarantee.
        let (vals, vecs, inv) = if b >= 128 {
            std::thread::scope(|scope| {
                std::thread::Builder::new()
                    .stack_size(64 * 1024 * 1024)
                    .spawn_scoped(scope, move || eig_and_inverse(sub))
                    .expect("spawn eigensolver thread")
                    .join()
                    .expect("eigensolver thread panicked")
            })?
        } else {
            eig_and_inverse(sub)?
        };
        for k in 0..b {
            eigenvalues[offset + k] = vals[k];
            for (local, &global) in comp.iter().enumerate() {
                right[[global, offset + k]] = vecs[[local, k]];
                left[[offset + k, global]] = inv[[k, local]];
            }
        }
        offset += b;
    }
    Ok(RawDecomposition { eigenvalues, right, left })
}

/// Spectral decomposition of an arbitrary relaxing generator matrix.
///
/// Enforces a unique steady state: exactly one eigenvalue must satisfy
/// `|lambda| < zero_tol`. The steady right eigenvector is rescaled to unit
/// trace and Hermitized; its left partner is rescaled to keep
/// biorthonormality exact.
pub fn decompose_generator(matrix: &CMatrix, options: SpectralOptions) -> Result<SpectralData> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: matrix.ncols() });
    }
    let raw = decompose_blocks(matrix, options.use_blocks)?;

    let zero_modes: Vec<usize> = (0..n)
        .filter(|&i| raw.eigenvalues[i].norm() < options.zero_tol)
        .collect();
    match zero_modes.len() {
        1 => {}
        0 => {
            let min_abs = raw
                .eigenvalues
                .iter()
                .map(|z| z.norm())
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NoSteadyState { min_abs });
        }
        count => {
            return Err(Error::DegenerateSteadyState {
                count,
                zero_tol: options.zero_tol,
            })
        }
    }
    let zero = zero_modes[0];

    // Order: steady mode first, then descending real part; ties broken by
    // imaginary part and original position to keep the order total.
    let mut order: Vec<usize> = (0..n).filter(|&i| i != zero).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (raw.eigenvalues[a], raw.eigenvalues[b]);
        zb.re
            .partial_cmp(&za.re)
            .unwrap()
            .then(za.im.partial_cmp(&zb.im).unwrap())
            .then(a.cmp(&b))
    });
    let order: Vec<usize> = std::iter::once(zero).chain(order).collect();

    let eigenvalues: Vec<C64> = order.iter().map(|&i| raw.eigenvalues[i]).collect();
    let mut right = Array2::zeros((n, n));
    let mut left = Array2::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        right.column_mut(new).assign(&raw.right.column(old));
        left.row_mut(new).assign(&raw.left.row(old));
    }

    // Normalize the steady mode to unit trace; Hermitize the density matrix.
    let d = (n as f64).sqrt().round() as usize;
    let trace: C64 = (0..d).map(|i| right[[i * (d + 1), 0]]).sum();
    if trace.norm() == 0.0 {
        return Err(Error::NonConvergedEigensolve(
            "steady eigenvector has zero trace".into(),
        ));
    }
    right.column_mut(0).mapv_inplace(|z| z / trace);
    left.row_mut(0).mapv_inplace(|z| z * trace);
    let rho_raw = devectorize(&right.column(0).to_owned())?;
    let steady_state = (&rho_raw + &dagger(&rho_raw)) * C64::new(0.5, 0.0);

    Ok(SpectralData {
        eigenvalues,
        right,
        left,
        steady_state,
        options,
        drazin: OnceCell::new(),
    })
}

/// Spectral decomposition of the detector Liouvillian.
pub fn spectral_decompose(liou: &Liouvillian, options: SpectralOptions) -> Result<SpectralData> {
    decompose_generator(&liou.matrix, options)
}

/// Debug dump: textual header describing the layout, then the matrix as
/// row-major little-endian (re, im) f64 pairs, then the sorted eigenvalues
/// if a decomposition is supplied.
pub fn dump_liouvillian(
    liou: &Liouvillian,
    spectral: Option<&SpectralData>,
    path: &Path,
) -> Result<()> {
    let n = liou.matrix.nrows();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "qdet liouvillian dump v1")?;
    writeln!(f, "dim = {n}")?;
    writeln!(f, "hilbert_dim = {DIM}")?;
    writeln!(
        f,
        "basis = lexicographic (m_c, m_h, g, s) with s fastest; index = s + 2*(g + 3*(m_h + 2*m_c))"
    )?;
    writeln!(f, "vectorization = column-stacking, vec(rho)[i + {DIM}*j] = rho[i,j]")?;
    writeln!(f, "matrix = row-major complex128, little-endian (re, im) pairs")?;
    writeln!(f, "eigenvalues = {}", spectral.map_or(0, |s| s.dim()))?;
    writeln!(f)?;
    for i in 0..n {
        for j in 0..n {
            let z = liou.matrix[[i, j]];
            f.write_all(&z.re.to_le_bytes())?;
            f.write_all(&z.im.to_le_bytes())?;
        }
    }
    if let Some(sp) = spectral {
        for z in &sp.eigenvalues {
            f.write_all(&z.re.to_le_bytes())?;
            f.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Trace-preservation residual `||<<1| L||` of a vectorized generator.
pub fn trace_preservation_residual(matrix: &CMatrix) -> f64 {
    let d = (matrix.nrows() as f64).sqrt().round() as usize;
    let row = identity_row(d);
    let prod = row.dot(matrix);
    prod.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker superoperator `C^T (x) A` realizing `rho -> A rho C`.
pub fn sandwich_superop(a: &CMatrix, c: &CMatrix) -> CMatrix {
    kron(&c.t().to_owned(), a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DetectorParams;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_params() -> DetectorParams {
        DetectorParams {
            e_s: 1.0,
            e_g: 9.0,
            f_ec: 0.2,
            t_c: 0.2,
            t_v: -3.0,
            g_mg: 1.0,
            g_sg: 1.0,
            gamma_m: 1.0,
            gamma_g: 0.7,
            gamma_d: 0.8,
        }
    }

    fn random_density(rng: &mut impl Rng, d: usize) -> CMatrix {
        let a = Array2::from_shape_fn((d, d), |_| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let rho = a.dot(&dagger(&a));
        let tr: C64 = (0..d).map(|i| rho[[i, i]]).sum();
        rho / tr
    }

    #[test]
    fn vectorize_column_stacking_order() {
        let m = array![
            [C64::new(1.0, 0.0), C64::new(3.0, 0.0)],
            [C64::new(2.0, 0.0), C64::new(4.0, 0.0)]
        ];
        let v = vectorize(&m);
        // (a, c, b, d) ordering
        assert_eq!(v[0].re, 1.0);
        assert_eq!(v[1].re, 2.0);
        assert_eq!(v[2].re, 3.0);
        assert_eq!(v[3].re, 4.0);
        let back = devectorize(&v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn vectorized_identity_positions() {
        let eye = hilbert::identity(5);
        let v = vectorize(&eye);
        for (k, z) in v.iter().enumerate() {
            let expect = if k % 6 == 0 { 1.0 } else { 0.0 };
            assert_eq!(z.re, expect);
        }
    }

    #[test]
    fn sandwich_superop_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let d = 3;
            let a = Array2::from_shape_fn((d, d), |_| C64::new(rng.gen(), rng.gen()));
            let c = Array2::from_shape_fn((d, d), |_| C64::new(rng.gen(), rng.gen()));
            let rho = random_density(&mut rng, d);
            let direct = vectorize(&a.dot(&rho).dot(&c));
            let via_kron = sandwich_superop(&a, &c).dot(&vectorize(&rho));
            for (x, y) in direct.iter().zip(via_kron.iter()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn liouvillian_action_matches_matrix_form() {
        let liou = assemble_liouvillian(&test_params()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rho = random_density(&mut rng, DIM);
            let direct = master_equation_rhs(&liou.hamiltonian, &liou.jumps, &rho);
            let via_superop = devectorize(&liou.matrix.dot(&vectorize(&rho))).unwrap();
            let diff = hilbert::max_abs(&(&direct - &via_superop));
            assert!(diff < 1e-12, "superoperator action mismatch: {diff}");
        }
    }

    #[test]
    fn trace_preservation() {
        let liou = assemble_liouvillian(&test_params()).unwrap();
        assert!(trace_preservation_residual(&liou.matrix) < 1e-10);
    }

    #[test]
    fn closed_system_limit_is_purely_imaginary() {
        let params = DetectorParams {
            g_mg: 0.0,
            g_sg: 0.0,
            gamma_m: 0.0,
            gamma_g: 0.0,
            gamma_d: 0.0,
            ..test_params()
        };
        let liou = assemble_liouvillian(&params).unwrap();
        // L = -i(1 (x) H0 - H0^T (x) 1) is diagonal here with entries
        // -i(E_i - E_j); just check the matrix has no real part at all.
        for z in liou.matrix.iter() {
            assert_eq!(z.re, 0.0);
        }
    }

    #[test]
    fn detection_current_superop_on_diagonal_state() {
        let params = test_params();
        let liou = assemble_liouvillian(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = {
            let mut diag: CMatrix = Array2::zeros((DIM, DIM));
            let mut weights: Vec<f64> = (0..DIM).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            for (k, w) in weights.iter().enumerate() {
                diag[[k, k]] = C64::new(*w, 0.0);
            }
            diag
        };
        let g_marg = hilbert::gain_marginal(&rho);
        let expected = liou.rates.detection.minus * g_marg[[2, 2]].re
            - liou.rates.detection.plus * g_marg[[0, 0]].re;
        let current = liou.current(Channel::Detection).current(&vectorize(&rho));
        assert_relative_eq!(current.re, expected, max_relative = 1e-12);
        assert!(current.im.abs() < 1e-14);
    }

    #[test]
    fn zero_detection_prefactor_gives_zero_superop() {
        let params = DetectorParams { gamma_d: 0.0, ..test_params() };
        let rates = build_rates(&params).unwrap();
        let j = current_superop(Channel::Detection, &params, &rates);
        assert_eq!(hilbert::max_abs(&j), 0.0);
    }

    #[test]
    fn block_and_dense_decompositions_agree() {
        let liou = assemble_liouvillian(&test_params()).unwrap();
        let blocked = spectral_decompose(&liou, SpectralOptions::default()).unwrap();
        let dense = spectral_decompose(
            &liou,
            SpectralOptions { use_blocks: false, ..Default::default() },
        )
        .unwrap();

        // Multiset comparison by greedy nearest-neighbor matching; ordering
        // by (re, im) is fragile for near-degenerate real parts.
        let ev_a: Vec<C64> = blocked.eigenvalues.clone();
        let mut ev_b: Vec<C64> = dense.eigenvalues.clone();
        let scale = ev_a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for a in &ev_a {
            let (k, dist) = ev_b
                .iter()
                .enumerate()
                .map(|(k, b)| (k, (a - b).norm()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            assert!(dist < 1e-8 * scale, "{a} unmatched, nearest at {dist}");
            ev_b.swap_remove(k);
        }
        let rho_diff = hilbert::max_abs(&(&blocked.steady_state - &dense.steady_state));
        assert!(rho_diff < 1e-9, "steady states differ by {rho_diff}");
        // The slowest decaying mode agrees between the two paths.
        assert!(
            (blocked.lambda1() - dense.lambda1()).norm() < 1e-9 * scale,
            "lambda1 mismatch: {} vs {}",
            blocked.lambda1(),
            dense.lambda1()
        );
    }

    #[test]
    fn spectral_identities() {
        let liou = assemble_liouvillian(&test_params()).unwrap();
        let sp = spectral_decompose(&liou, SpectralOptions::default()).unwrap();
        let n = sp.dim();

        // spectrum in the closed left half-plane
        for (i, z) in sp.eigenvalues.iter().enumerate() {
            if i > 0 {
                assert!(z.re <= 1e-10, "decaying eigenvalue with Re = {}", z.re);
            }
        }
        assert!(sp.lambda1().re < 0.0);

        // biorthonormality and completeness
        let gram = sp.left.dot(&sp.right);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - C64::new(expect, 0.0)).norm() < 1e-8);
            }
        }
        let complete = sp.right.dot(&sp.left);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((complete[[i, j]] - C64::new(expect, 0.0)).norm() < 1e-8);
            }
        }

        // steady state: Hermitian, unit trace, positive, annihilated by L
        let rho = &sp.steady_state;
        assert!(hilbert::max_abs(&(rho - &dagger(rho))) < 1e-10);
        let tr: C64 = (0..DIM).map(|i| rho[[i, i]]).sum();
        assert!((tr - C64::new(1.0, 0.0)).norm() < 1e-12);
        let residual = liou.matrix.dot(&sp.steady_vec());
        let res_norm = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(res_norm < 1e-10, "L rho_ss residual {res_norm}");

        // Drazin identities
        let dz = sp.drazin().unwrap();
        let l = &liou.matrix;
        let proj = {
            let mut p: CMatrix = Array2::eye(n);
            let rho_v = sp.steady_vec();
            let one = identity_row(DIM);
            for i in 0..n {
                for j in 0..n {
                    p[[i, j]] -= rho_v[i] * one[j];
                }
            }
            p
        };
        let ld = l.dot(dz);
        let dl = dz.dot(l);
        assert!(hilbert::max_abs(&(&ld - &proj)) < 1e-8);
        assert!(hilbert::max_abs(&(&dl - &proj)) < 1e-8);
        assert!(hilbert::max_abs(&(&ld.dot(l) - l)) < 1e-8 * hilbert::max_abs(l).max(1.0));
        assert!(hilbert::max_abs(&(&dl.dot(dz) - dz)) < 1e-8);
        // L^+ annihilates the steady state
        let kernel = dz.dot(&sp.steady_vec());
        assert!(kernel.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-8);
    }

    #[test]
    fn degenerate_steady_state_is_reported() {
        // With g_SG = 0 the target system decouples and carries its own
        // conserved populations, so the zero eigenvalue is twofold.
        let params = DetectorParams { g_sg: 0.0, ..test_params() };
        let liou = assemble_liouvillian(&params).unwrap();
        match spectral_decompose(&liou, SpectralOptions::default()) {
            Err(Error::DegenerateSteadyState { count, .. }) => assert_eq!(count, 2),
            other => panic!("expected degenerate steady state, got {other:?}"),
        }
    }

    #[test]
    fn steady_state_unique_or_flagged_on_random_points() {
        // Deep in the frozen-pump region the target relaxation rate drops
        // below the zero tolerance and the decomposition must report the
        // degeneracy rather than hand back an arbitrary kernel vector.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut unique = 0;
        let total = 12;
        for _ in 0..total {
            let f_ec: f64 = rng.gen_range(0.1..2.0);
            let t_c: f64 = rng.gen_range(0.05..1.0);
            let e_g = 9.0;
            let bound = -t_c * (1.0 + 1.0 / f_ec);
            let t_v = if bound <= -10.0 { bound } else { rng.gen_range(-10.0..bound) };
            let params = DetectorParams {
                e_s: 1.0,
                e_g,
                f_ec,
                t_c,
                t_v,
                g_mg: rng.gen_range(0.1..2.0),
                g_sg: rng.gen_range(0.1..1.0),
                gamma_m: rng.gen_range(0.1..2.0),
                gamma_g: 0.7,
                gamma_d: rng.gen_range(0.1..2.0),
            };
            let liou = assemble_liouvillian(&params).unwrap();
            match spectral_decompose(&liou, SpectralOptions::default()) {
                Ok(sp) => {
                    unique += 1;
                    let zero_like = sp
                        .eigenvalues
                        .iter()
                        .filter(|z| z.norm() < sp.options.zero_tol)
                        .count();
                    assert_eq!(zero_like, 1);
                }
                Err(Error::DegenerateSteadyState { .. }) => {}
                Err(other) => panic!("unexpected decomposition error: {other:?}"),
            }
        }
        assert!(unique >= total / 2, "only {unique}/{total} points were unique");
    }

    #[test]
    fn dump_layout_roundtrip() {
        let dir = std::env::temp_dir().join("qdet_dump_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("liouville.dump");
        let liou = assemble_liouvillian(&test_params()).unwrap();
        dump_liouvillian(&liou, None, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        let payload = &bytes[header_end..];
        assert_eq!(payload.len(), hilbert::DIM2 * hilbert::DIM2 * 16);
        // first stored value is L[0,0]
        let re = f64::from_le_bytes(payload[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(payload[8..16].try_into().unwrap());
        assert_eq!(C64::new(re, im), liou.matrix[[0, 0]]);
        std::fs::remove_file(&path).ok();
    }
}
