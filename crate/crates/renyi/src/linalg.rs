//! Dense Hermitian spectral engine.
//!
//! Everything downstream — divergences, thermal states, certificates — runs on
//! the primitives here: eigendecompositions of Hermitian matrices, spectral
//! matrix functions with a pseudo-inverse convention on the support, partial
//! traces and factor reorderings over an explicit tensor-factor list, Kronecker
//! products, and operator/trace norms.
//!
//! Matrix functions always go through a full eigendecomposition. At the
//! dimensions this crate targets (≤ ~2^10) that is affordable and it gives
//! support projections and pseudo-inverses for free.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default bound on the relative deviation ‖M − M†‖ / max(‖M‖, 1).
pub const DEFAULT_HERM_TOL: f64 = 1e-10;
/// Eigenvalues at or below `SUPPORT_CUTOFF · λ_max` count as outside the support.
pub const SUPPORT_CUTOFF: f64 = 1e-12;
/// Eigenvalues of a density operator may dip this far (relative to λ_max)
/// below zero before construction fails; anything in between is clipped to 0.
pub const PSD_CLIP_TOL: f64 = 1e-10;
/// Tolerance on Tr ρ = 1 at construction.
pub const TRACE_TOL: f64 = 1e-10;

pub(crate) fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub(crate) fn creal(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A Hermitian matrix, symmetrized once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    /// Validate hermiticity within [`DEFAULT_HERM_TOL`] and symmetrize.
    pub fn new(mat: CMatrix) -> Result<Self> {
        Self::with_tol(mat, DEFAULT_HERM_TOL)
    }

    /// Validate hermiticity within `herm_tol` (relative deviation) and symmetrize.
    pub fn with_tol(mat: CMatrix, herm_tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare(mat.nrows(), mat.ncols()));
        }
        let dev = (&mat - mat.adjoint()).norm();
        let scale = mat.norm().max(1.0);
        if dev / scale > herm_tol {
            return Err(Error::NotHermitian {
                dev: dev / scale,
                tol: herm_tol,
            });
        }
        let sym = (&mat + mat.adjoint()) * creal(0.5);
        Ok(Self { mat: sym })
    }

    /// Wrap a matrix that is Hermitian by construction (no check, no copy).
    pub(crate) fn from_symmetrized(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: CMatrix::zeros(dim, dim),
        }
    }

    /// Diagonal matrix from real entries.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| creal(x)));
        Self {
            mat: CMatrix::from_diagonal(&v),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: &self.mat * creal(s),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch(self.dim(), other.dim()));
        }
        Ok(Self {
            mat: &self.mat + &other.mat,
        })
    }

    /// Largest absolute eigenvalue.
    pub fn op_norm(&self) -> f64 {
        spectral_norm(&self.mat)
    }

    /// Sum of absolute eigenvalues.
    pub fn trace_norm(&self) -> Result<f64> {
        let spec = eig_hermitian(self)?;
        Ok(spec.eigenvalues.iter().map(|l| l.abs()).sum())
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Real eigenvalues in ascending order.
    pub eigenvalues: DVector<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    /// `U f(Λ) U†` with `f` applied entrywise to the eigenvalues.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
        self.apply_impl(f, false)
    }

    /// Same as [`apply`](Self::apply) but eigenvalues outside the support
    /// (≤ `SUPPORT_CUTOFF · max|λ|`) map to 0 — the pseudo-inverse convention.
    pub fn apply_on_support(&self, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
        self.apply_impl(f, true)
    }

    fn apply_impl(&self, f: impl Fn(f64) -> f64, support_only: bool) -> Result<CMatrix> {
        let cutoff = self.support_cutoff();
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fx = if support_only && lam.abs() <= cutoff {
                0.0
            } else {
                let v = f(lam);
                if !v.is_finite() {
                    return Err(Error::NonFiniteSpectralFn { eigenvalue: lam });
                }
                v
            };
            for i in 0..n {
                scaled[(i, j)] *= fx;
            }
        }
        Ok(&scaled * self.eigenvectors.adjoint())
    }

    /// Absolute cutoff below which |λ| counts as zero.
    pub fn support_cutoff(&self) -> f64 {
        let lam_max = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        SUPPORT_CUTOFF * lam_max
    }

    /// Indices of in-support eigenvalues.
    pub fn support_indices(&self) -> Vec<usize> {
        let cutoff = self.support_cutoff();
        (0..self.eigenvalues.len())
            .filter(|&i| self.eigenvalues[i].abs() > cutoff)
            .collect()
    }
}

/// Full eigendecomposition with eigenvalues sorted ascending.
pub fn eig_hermitian(m: &HermitianOperator) -> Result<SpectralDecomposition> {
    eig_hermitian_mat(m.matrix())
}

pub(crate) fn eig_hermitian_mat(mat: &CMatrix) -> Result<SpectralDecomposition> {
    let n = mat.nrows();
    if n == 0 {
        return Err(Error::NotSquare(0, 0));
    }
    let eig = mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or(Error::EigFailed {
            dim: n,
            norm: mat.norm(),
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        eigenvectors.set_column(new_col, &eig.eigenvectors.column(old_col));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `U f(Λ) U†`. With `support_only`, `f` is applied only to in-support
/// eigenvalues; the rest map to 0 (pseudo-inverse convention).
pub fn spectral_fn(
    m: &HermitianOperator,
    f: impl Fn(f64) -> f64,
    support_only: bool,
) -> Result<HermitianOperator> {
    let spec = eig_hermitian(m)?;
    let mat = if support_only {
        spec.apply_on_support(f)?
    } else {
        spec.apply(f)?
    };
    Ok(HermitianOperator::from_symmetrized(symmetrize(mat)))
}

fn symmetrize(mat: CMatrix) -> CMatrix {
    (&mat + mat.adjoint()) * creal(0.5)
}

/// Kronecker product of two Hermitian operators.
pub fn kron(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    HermitianOperator::from_symmetrized(a.matrix().kronecker(b.matrix()))
}

/// Largest singular value of an arbitrary complex matrix.
///
/// Exact (full eigendecomposition of the Gram matrix) below dimension 64;
/// power iteration on M†M above. For Hermitian input this equals max |λ|.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let n = m.nrows().max(m.ncols());
    if n == 0 || m.iter().all(|z| z.norm_sqr() == 0.0) {
        return 0.0;
    }
    if n <= 64 {
        let gram = m.adjoint() * m;
        if let Ok(spec) = eig_hermitian_mat(&gram) {
            let lmax = spec.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
            return lmax.max(0.0).sqrt();
        }
    }
    gram_power_iteration(m)
}

fn gram_power_iteration(m: &CMatrix) -> f64 {
    let n = m.ncols();
    // Deterministic start vector with no structure matching generic inputs.
    let mut v = CVector::from_fn(n, |i, _| {
        let t = i as f64;
        cplx(1.0 + (1.7 * t + 0.5).sin() * 0.37, (2.3 * t).cos() * 0.41)
    });
    v /= creal(v.norm());
    let mut sigma = 0.0f64;
    let mut stable = 0;
    for _ in 0..5000 {
        let w = m * &v;
        let s = w.norm();
        if s == 0.0 {
            return 0.0;
        }
        let z = m.adjoint() * w;
        let zn = z.norm();
        if zn == 0.0 {
            return s;
        }
        v = z / creal(zn);
        let rel = (s - sigma).abs() / s.max(f64::MIN_POSITIVE);
        sigma = s;
        if rel < 1e-14 {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
    }
    sigma
}

/// Largest eigenvalue of a Hermitian PSD matrix (power iteration for large
/// dimensions, exact below 64).
pub fn largest_eigenvalue_psd(m: &CMatrix) -> f64 {
    spectral_norm(m)
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets of every multi-index over `sub_dims` placed at `positions`
/// of a larger factor list with the given `strides`.
fn subsystem_offsets(sub_dims: &[usize], positions: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = sub_dims.iter().product();
    let mut offs = vec![0usize; total];
    for (flat, off) in offs.iter_mut().enumerate() {
        let mut rem = flat;
        for p in (0..sub_dims.len()).rev() {
            let digit = rem % sub_dims[p];
            rem /= sub_dims[p];
            *off += digit * strides[positions[p]];
        }
    }
    offs
}

/// A positive semidefinite, unit-trace Hermitian matrix together with its
/// tensor-factor dimensions and a cached eigendecomposition.
///
/// Construction clips eigenvalues in `[-PSD_CLIP_TOL·λ_max, 0)` to zero and
/// renormalizes; anything more negative is rejected.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    op: HermitianOperator,
    dims: Vec<usize>,
    spectral: SpectralDecomposition,
}

impl DensityOperator {
    pub fn new(mat: CMatrix, dims: Vec<usize>) -> Result<Self> {
        let op = HermitianOperator::new(mat)?;
        Self::from_hermitian(op, dims)
    }

    pub fn from_hermitian(op: HermitianOperator, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, op.dim())?;
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace {
                trace: tr,
                tol: TRACE_TOL,
            });
        }
        let spec = eig_hermitian(&op)?;
        let lam_max = spec.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
        let clip = PSD_CLIP_TOL * lam_max.max(0.0);
        let min_eig = spec.eigenvalues.min();
        if min_eig < -clip {
            return Err(Error::NotPsd {
                min_eig,
                tol: clip,
            });
        }
        let clipped: Vec<f64> = spec.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        Self::assemble(spec.eigenvectors, clipped, dims, min_eig < 0.0 || tr != 1.0)
    }

    /// Build from a known eigenbasis and nonnegative weights (they are
    /// normalized to unit sum). Skips the PSD/trace validation that
    /// [`new`](Self::new) performs.
    pub fn from_spectral(basis: CMatrix, weights: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, basis.nrows())?;
        if basis.nrows() != basis.ncols() || basis.nrows() != weights.len() {
            return Err(Error::DimMismatch(basis.nrows(), weights.len()));
        }
        let sanitized: Vec<f64> = weights.iter().map(|&w| w.max(0.0)).collect();
        Self::assemble(basis, sanitized, dims, true)
    }

    fn assemble(
        basis: CMatrix,
        mut weights: Vec<f64>,
        dims: Vec<usize>,
        rebuild: bool,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::BadTrace {
                trace: total,
                tol: TRACE_TOL,
            });
        }
        for w in &mut weights {
            *w /= total;
        }
        // Re-sort ascending so the cached decomposition keeps its invariant.
        let n = weights.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| weights[i]));
        let mut eigenvectors = CMatrix::zeros(n, n);
        for (new_col, &old_col) in order.iter().enumerate() {
            eigenvectors.set_column(new_col, &basis.column(old_col));
        }
        let spectral = SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        };
        let mat = if rebuild {
            symmetrize(spectral.apply(|x| x)?)
        } else {
            // Basis unchanged: reconstruct anyway to stay consistent with the
            // clipped spectrum. Cheap relative to the eigendecomposition.
            symmetrize(spectral.apply(|x| x)?)
        };
        Ok(Self {
            op: HermitianOperator::from_symmetrized(mat),
            dims,
            spectral,
        })
    }

    /// Rank-1 projector onto a normalized state vector.
    pub fn pure_state(psi: &CVector, dims: Vec<usize>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let psi = psi / creal(norm);
        let mat = &psi * psi.adjoint();
        Self::new(mat, dims)
    }

    /// Maximally mixed state over the given factors.
    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if d == 0 {
            return Err(Error::BadFactorDims { dims, dim: 0 });
        }
        let basis = CMatrix::identity(d, d);
        Self::from_spectral(basis, vec![1.0 / d as f64; d], dims)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_factors(&self) -> usize {
        self.dims.len()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    /// Cached eigendecomposition (eigenvalues ascending, all ≥ 0, sum 1).
    pub fn spectral(&self) -> &SpectralDecomposition {
        &self.spectral
    }

    /// Eigenvalues strictly above the support cutoff.
    pub fn rank(&self) -> usize {
        self.spectral.support_indices().len()
    }

    /// Reinterpret the same matrix with a different factor list.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, self.dim())?;
        let mut out = self.clone();
        out.dims = dims;
        Ok(out)
    }

    /// Partial trace keeping the listed factors (any order; result factors
    /// appear in ascending original order). Preserves the trace exactly up to
    /// floating-point summation.
    pub fn reduced(&self, keep: &[usize]) -> Result<Self> {
        let m = self.dims.len();
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let mut keep_sorted: Vec<usize> = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        for &k in &keep_sorted {
            if k >= m {
                return Err(Error::BadFactorIndex { index: k, count: m });
            }
        }
        let traced: Vec<usize> = (0..m).filter(|i| !keep_sorted.contains(i)).collect();
        if traced.is_empty() {
            return Ok(self.clone());
        }
        let st = strides(&self.dims);
        let keep_dims: Vec<usize> = keep_sorted.iter().map(|&i| self.dims[i]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&i| self.dims[i]).collect();
        let keep_offs = subsystem_offsets(&keep_dims, &keep_sorted, &st);
        let traced_offs = subsystem_offsets(&traced_dims, &traced, &st);
        let dk = keep_offs.len();
        let src = self.matrix();
        let mut out = CMatrix::zeros(dk, dk);
        for (a, &ra) in keep_offs.iter().enumerate() {
            for (b, &rb) in keep_offs.iter().enumerate() {
                let mut acc = Complex64::default();
                for &re in &traced_offs {
                    acc += src[(ra + re, rb + re)];
                }
                out[(a, b)] = acc;
            }
        }
        Self::new(out, keep_dims)
    }

    /// Reorder tensor factors: position `p` of the result holds original
    /// factor `order[p]`. `order` must be a permutation of `0..num_factors`.
    pub fn reorder_factors(&self, order: &[usize]) -> Result<Self> {
        let (mat, dims) = reorder_matrix_factors(self.matrix(), &self.dims, order)?;
        // Spectrum is unchanged by a factor permutation; permute the cached
        // eigenvectors instead of re-diagonalizing.
        let map = factor_flat_map(&self.dims, order)?;
        let n = self.dim();
        let mut vecs = CMatrix::zeros(n, n);
        for j in 0..n {
            for (i, &src) in map.iter().enumerate() {
                vecs[(i, j)] = self.spectral.eigenvectors[(src, j)];
            }
        }
        Ok(Self {
            op: HermitianOperator::from_symmetrized(mat),
            dims,
            spectral: SpectralDecomposition {
                eigenvalues: self.spectral.eigenvalues.clone(),
                eigenvectors: vecs,
            },
        })
    }

    /// Projector onto the support (eigenvalues above the cutoff).
    pub fn support_projector(&self) -> HermitianOperator {
        let idx = self.spectral.support_indices();
        let n = self.dim();
        let mut proj = CMatrix::zeros(n, n);
        for &i in &idx {
            let col = self.spectral.eigenvectors.column(i);
            proj += &col * col.adjoint();
        }
        HermitianOperator::from_symmetrized(symmetrize(proj))
    }

    /// Expectation value Tr[ρ M].
    pub fn expectation(&self, observable: &HermitianOperator) -> Result<f64> {
        if observable.dim() != self.dim() {
            return Err(Error::DimMismatch(observable.dim(), self.dim()));
        }
        let mut acc = 0.0;
        let rho = self.matrix();
        let m = observable.matrix();
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                acc += (rho[(i, k)] * m[(k, i)]).re;
            }
        }
        Ok(acc)
    }
}

fn check_dims(dims: &[usize], dim: usize) -> Result<()> {
    let prod: usize = dims.iter().product();
    if dims.is_empty() || prod != dim || dims.iter().any(|&d| d == 0) {
        return Err(Error::BadFactorDims {
            dims: dims.to_vec(),
            dim,
        });
    }
    Ok(())
}

/// Tensor product of two density operators; the factor list is the
/// concatenation. The product spectrum is assembled from the factor spectra,
/// so no fresh eigendecomposition is needed.
pub fn kron_density(a: &DensityOperator, b: &DensityOperator) -> Result<DensityOperator> {
    let mat = a.matrix().kronecker(b.matrix());
    let na = a.dim();
    let nb = b.dim();
    let n = na * nb;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for i in 0..na {
        for j in 0..nb {
            pairs.push((
                a.spectral().eigenvalues[i] * b.spectral().eigenvalues[j],
                i,
                j,
            ));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let eigenvalues = DVector::from_iterator(n, pairs.iter().map(|p| p.0));
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (col, &(_, i, j)) in pairs.iter().enumerate() {
        let ua = a.spectral().eigenvectors.column(i);
        let ub = b.spectral().eigenvectors.column(j);
        for r in 0..na {
            let za = ua[r];
            for s in 0..nb {
                eigenvectors[(r * nb + s, col)] = za * ub[s];
            }
        }
    }
    let mut dims = a.dims().to_vec();
    dims.extend_from_slice(b.dims());
    Ok(DensityOperator {
        op: HermitianOperator::from_symmetrized(mat),
        dims,
        spectral: SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        },
    })
}

/// Flat-index map realizing a factor permutation: entry `i` is the source
/// index of destination index `i`.
pub(crate) fn factor_flat_map(dims: &[usize], order: &[usize]) -> Result<Vec<usize>> {
    let m = dims.len();
    if order.len() != m {
        return Err(Error::BadFactorDims {
            dims: dims.to_vec(),
            dim: order.len(),
        });
    }
    let mut seen = vec![false; m];
    for &o in order {
        if o >= m || seen[o] {
            return Err(Error::BadFactorIndex { index: o, count: m });
        }
        seen[o] = true;
    }
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let st_old = strides(dims);
    let total: usize = dims.iter().product();
    let mut map = vec![0usize; total];
    for (flat, slot) in map.iter_mut().enumerate() {
        let mut rem = flat;
        let mut src = 0usize;
        for p in (0..m).rev() {
            let digit = rem % new_dims[p];
            rem /= new_dims[p];
            src += digit * st_old[order[p]];
        }
        *slot = src;
    }
    Ok(map)
}

/// Apply a factor permutation to a square matrix over `dims`.
pub fn reorder_matrix_factors(
    mat: &CMatrix,
    dims: &[usize],
    order: &[usize],
) -> Result<(CMatrix, Vec<usize>)> {
    let map = factor_flat_map(dims, order)?;
    let n = mat.nrows();
    if n != map.len() {
        return Err(Error::DimMismatch(n, map.len()));
    }
    let mut out = CMatrix::zeros(n, n);
    for (i, &si) in map.iter().enumerate() {
        for (j, &sj) in map.iter().enumerate() {
            out[(i, j)] = mat[(si, sj)];
        }
    }
    let new_dims = order.iter().map(|&o| dims[o]).collect();
    Ok((out, new_dims))
}

/// Trace distance building block ‖X‖₁ for Hermitian X = ρ − σ.
pub fn trace_norm_diff(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimMismatch(rho.dim(), sigma.dim()));
    }
    let diff = HermitianOperator::from_symmetrized(rho.matrix() - sigma.matrix());
    diff.trace_norm()
}
