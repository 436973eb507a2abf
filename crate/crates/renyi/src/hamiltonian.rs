//! Local lattice Hamiltonians: construction from terms, A/B/interaction
//! splitting with term-derived boundaries, Gibbs states, classical Boltzmann
//! enumeration, and the interaction-dressing operators
//! `E_β = e^{−β(H_A+H_B)} e^{βH}` whose norms feed the area-law bounds.
//!
//! The locality constants `J` (interaction strength), `k` (locality) and `l`
//! (1D range) are always recomputed from the term list; the area-law formulas
//! are brittle under inconsistent constants, so declared values are never
//! trusted.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{
    creal, eig_hermitian, spectral_norm, CMatrix, DensityOperator, HermitianOperator,
    SpectralDecomposition,
};
use crate::{Error, Result};

/// Hard cap on the total Hilbert dimension for dense construction.
pub const MAX_DENSE_DIM: usize = 1 << 12;
/// Maximum site count for classical Boltzmann enumeration.
pub const MAX_CLASSICAL_SITES: usize = 20;

/// One local term: a Hermitian matrix acting on an ordered list of sites.
///
/// The matrix rows/columns are indexed by the product basis of the support
/// sites in the order listed.
#[derive(Debug, Clone)]
pub struct LocalTerm {
    support: Vec<usize>,
    matrix: HermitianOperator,
    norm: f64,
}

impl LocalTerm {
    pub fn new(support: Vec<usize>, matrix: HermitianOperator) -> Result<Self> {
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::Hamiltonian(format!(
                "term support {support:?} has repeated sites"
            )));
        }
        let norm = spectral_norm(matrix.matrix());
        Ok(Self {
            support,
            matrix,
            norm,
        })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &HermitianOperator {
        &self.matrix
    }

    /// Cached operator norm ‖h‖.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn touches(&self, sites: &[bool]) -> bool {
        self.support.iter().any(|&s| sites[s])
    }

    fn contained_in(&self, sites: &[bool]) -> bool {
        self.support.iter().all(|&s| sites[s])
    }
}

/// A collection of local terms over sites with integer lattice coordinates.
#[derive(Debug, Clone)]
pub struct LatticeHamiltonian {
    coords: Vec<Vec<i64>>,
    local_dim: usize,
    terms: Vec<LocalTerm>,
}

impl LatticeHamiltonian {
    pub fn new(coords: Vec<Vec<i64>>, local_dim: usize) -> Result<Self> {
        if coords.is_empty() || local_dim < 2 {
            return Err(Error::Hamiltonian(
                "need at least one site and local dimension >= 2".into(),
            ));
        }
        let dim = coords[0].len();
        if dim == 0 || coords.iter().any(|c| c.len() != dim) {
            return Err(Error::Hamiltonian(
                "all site coordinates must share the same dimension".into(),
            ));
        }
        Ok(Self {
            coords,
            local_dim,
            terms: Vec::new(),
        })
    }

    /// 1D chain with coordinates `0..n`.
    pub fn chain(n: usize, local_dim: usize) -> Result<Self> {
        Self::new((0..n as i64).map(|i| vec![i]).collect(), local_dim)
    }

    /// 2D grid in row-major site order; site `r*cols + c` sits at `(r, c)`.
    pub fn grid(rows: usize, cols: usize, local_dim: usize) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows * cols);
        for r in 0..rows as i64 {
            for c in 0..cols as i64 {
                coords.push(vec![r, c]);
            }
        }
        Self::new(coords, local_dim)
    }

    pub fn add_term(&mut self, support: Vec<usize>, matrix: HermitianOperator) -> Result<()> {
        for &s in &support {
            if s >= self.num_sites() {
                return Err(Error::Hamiltonian(format!(
                    "term site {s} out of range for {} sites",
                    self.num_sites()
                )));
            }
        }
        let expected = self.local_dim.pow(support.len() as u32);
        if matrix.dim() != expected {
            return Err(Error::Hamiltonian(format!(
                "term on {} sites must have dimension {expected}, got {}",
                support.len(),
                matrix.dim()
            )));
        }
        self.terms.push(LocalTerm::new(support, matrix)?);
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn coords(&self) -> &[Vec<i64>] {
        &self.coords
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn site_dims(&self) -> Vec<usize> {
        vec![self.local_dim; self.num_sites()]
    }

    pub fn total_dim(&self) -> Result<usize> {
        let mut d: usize = 1;
        for _ in 0..self.num_sites() {
            d = d.checked_mul(self.local_dim).ok_or_else(|| {
                Error::Hamiltonian("total dimension overflows usize".into())
            })?;
        }
        if d > MAX_DENSE_DIM {
            return Err(Error::Hamiltonian(format!(
                "total dimension {d} exceeds dense limit {MAX_DENSE_DIM}"
            )));
        }
        Ok(d)
    }

    /// Locality k: the largest support size among the terms.
    pub fn locality(&self) -> usize {
        self.terms.iter().map(|t| t.support.len()).max().unwrap_or(0)
    }

    /// Interaction strength J = max over sites x of Σ_{supp(h)∋x} ‖h‖.
    pub fn interaction_strength(&self) -> f64 {
        let mut per_site = vec![0.0f64; self.num_sites()];
        for t in &self.terms {
            for &s in &t.support {
                per_site[s] += t.norm;
            }
        }
        per_site.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.coords.iter().all(|c| c.len() == 1)
    }

    /// 1D interaction range l: the widest contiguous coordinate span of a term.
    pub fn range_1d(&self) -> Result<usize> {
        if !self.is_one_dimensional() {
            return Err(Error::Hamiltonian(
                "interaction range is defined for 1D systems only".into(),
            ));
        }
        let mut l = 0usize;
        for t in &self.terms {
            let xs: Vec<i64> = t.support.iter().map(|&s| self.coords[s][0]).collect();
            let span = xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1;
            l = l.max(span as usize);
        }
        Ok(l)
    }

    /// True when every term matrix is diagonal in the computational basis.
    pub fn is_classical(&self) -> bool {
        self.terms.iter().all(|t| is_diagonal(t.matrix.matrix()))
    }

    /// Dense sum of the embedded local terms.
    pub fn build(&self) -> Result<HermitianOperator> {
        let indices: Vec<usize> = (0..self.terms.len()).collect();
        self.embed_terms(&indices)
    }

    /// Dense sum of the selected terms, embedded into the full Hilbert space.
    pub fn embed_terms(&self, indices: &[usize]) -> Result<HermitianOperator> {
        let total = self.total_dim()?;
        let dims = self.site_dims();
        let strides = dim_strides(&dims);
        let mut h = CMatrix::zeros(total, total);
        for &ti in indices {
            let term = self
                .terms
                .get(ti)
                .ok_or_else(|| Error::Hamiltonian(format!("no term with index {ti}")))?;
            let sup = &term.support;
            let sub_dims: Vec<usize> = sup.iter().map(|_| self.local_dim).collect();
            let rest: Vec<usize> = (0..self.num_sites()).filter(|s| !sup.contains(s)).collect();
            let rest_dims: Vec<usize> = rest.iter().map(|_| self.local_dim).collect();
            let sup_offs = offsets(&sub_dims, sup, &strides);
            let rest_offs = offsets(&rest_dims, &rest, &strides);
            let m = term.matrix.matrix();
            for (a, &ra) in sup_offs.iter().enumerate() {
                for (b, &rb) in sup_offs.iter().enumerate() {
                    let v = m[(a, b)];
                    if v.norm_sqr() == 0.0 {
                        continue;
                    }
                    for &re in &rest_offs {
                        h[(ra + re, rb + re)] += v;
                    }
                }
            }
        }
        HermitianOperator::new(h)
    }

    /// Split into bulk pieces and the interaction: `H = H_A + H_B + H_I`.
    pub fn split(&self, cut: &Bipartition) -> Result<SplitHamiltonian> {
        let h_a = self.embed_terms(&cut.a_terms)?;
        let h_b = self.embed_terms(&cut.b_terms)?;
        let h_i = self.embed_terms(&cut.interaction_terms)?;
        let interaction_norm = spectral_norm(h_i.matrix());
        Ok(SplitHamiltonian {
            h_a,
            h_b,
            h_i,
            interaction_norm,
        })
    }

    /// Thermal state and log partition function at inverse temperature β.
    pub fn thermal_state(&self, beta: f64) -> Result<(DensityOperator, f64)> {
        let h = self.build()?;
        gibbs(&h, beta, self.site_dims())
    }

    /// Boltzmann distribution over computational-basis configurations.
    ///
    /// Requires every term to be diagonal and at most [`MAX_CLASSICAL_SITES`]
    /// sites; this enumerates all `d^n` configurations.
    pub fn classical_gibbs(&self, beta: f64) -> Result<Vec<f64>> {
        let energies = self.classical_energies()?;
        let e_min = energies.iter().fold(f64::INFINITY, |m, &e| m.min(e));
        let mut probs: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        Ok(probs)
    }

    /// Diagonal energies over all configurations of a classical Hamiltonian.
    pub fn classical_energies(&self) -> Result<Vec<f64>> {
        if self.num_sites() > MAX_CLASSICAL_SITES {
            return Err(Error::Hamiltonian(format!(
                "classical enumeration limited to {MAX_CLASSICAL_SITES} sites, got {}",
                self.num_sites()
            )));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !is_diagonal(t.matrix.matrix()) {
                return Err(Error::Hamiltonian(format!(
                    "term {i} is not diagonal; classical enumeration needs a classical Hamiltonian"
                )));
            }
        }
        let n = self.num_sites();
        let d = self.local_dim;
        let total = d.checked_pow(n as u32).ok_or_else(|| {
            Error::Hamiltonian("configuration count overflows usize".into())
        })?;
        // Per-term diagonal energies plus the power of d that isolates the
        // support digits of a configuration index.
        struct TermDiag {
            diag: Vec<f64>,
            site_place: Vec<(usize, usize)>, // (power of d for the site, power for the local digit)
        }
        let mut tds = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let k = t.support.len();
            let diag: Vec<f64> = (0..t.matrix.dim()).map(|i| t.matrix.matrix()[(i, i)].re).collect();
            // site j's digit (row-major over sites) contributes with place
            // value d^(k-1-pos) inside the term's local index
            let site_place: Vec<(usize, usize)> = t
                .support
                .iter()
                .enumerate()
                .map(|(pos, &s)| (n - 1 - s, k - 1 - pos))
                .collect();
            tds.push(TermDiag { diag, site_place });
        }
        let mut energies = vec![0.0f64; total];
        for (cfg, e) in energies.iter_mut().enumerate() {
            let mut acc = 0.0;
            for td in &tds {
                let mut local = 0usize;
                for &(site_pow, local_pow) in &td.site_place {
                    let digit = (cfg / d.pow(site_pow as u32)) % d;
                    local += digit * d.pow(local_pow as u32);
                }
                acc += td.diag[local];
            }
            *e = acc;
        }
        Ok(energies)
    }
}

fn is_diagonal(m: &CMatrix) -> bool {
    let scale = m.norm().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)].norm() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

fn dim_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn offsets(sub_dims: &[usize], positions: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = sub_dims.iter().product();
    let mut offs = vec![0usize; total.max(1)];
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

/// The three embedded pieces of a split Hamiltonian.
#[derive(Debug, Clone)]
pub struct SplitHamiltonian {
    pub h_a: HermitianOperator,
    pub h_b: HermitianOperator,
    pub h_i: HermitianOperator,
    interaction_norm: f64,
}

impl SplitHamiltonian {
    /// ‖H_I‖.
    pub fn interaction_norm(&self) -> f64 {
        self.interaction_norm
    }

    /// H_A + H_B.
    pub fn bulk(&self) -> Result<HermitianOperator> {
        self.h_a.add(&self.h_b)
    }
}

/// A cut of the site set into A and its complement, with the term-derived
/// boundary sets: ∂A = {x ∈ A : some term touches both x and B}.
#[derive(Debug, Clone)]
pub struct Bipartition {
    a_sites: Vec<usize>,
    b_sites: Vec<usize>,
    boundary_a: Vec<usize>,
    boundary_b: Vec<usize>,
    a_terms: Vec<usize>,
    b_terms: Vec<usize>,
    interaction_terms: Vec<usize>,
}

impl Bipartition {
    pub fn new(ham: &LatticeHamiltonian, a_sites: &[usize]) -> Result<Self> {
        let n = ham.num_sites();
        let mut in_a = vec![false; n];
        for &s in a_sites {
            if s >= n {
                return Err(Error::BadFactorIndex { index: s, count: n });
            }
            in_a[s] = true;
        }
        let a: Vec<usize> = (0..n).filter(|&i| in_a[i]).collect();
        let b: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
        if a.is_empty() || b.is_empty() {
            return Err(Error::Hamiltonian(
                "bipartition needs non-empty A and B".into(),
            ));
        }
        let in_b: Vec<bool> = in_a.iter().map(|&x| !x).collect();
        let mut a_terms = Vec::new();
        let mut b_terms = Vec::new();
        let mut interaction_terms = Vec::new();
        let mut boundary_a = vec![false; n];
        let mut boundary_b = vec![false; n];
        for (i, t) in ham.terms().iter().enumerate() {
            if t.contained_in(&in_a) {
                a_terms.push(i);
            } else if t.contained_in(&in_b) {
                b_terms.push(i);
            } else {
                interaction_terms.push(i);
            }
            if t.touches(&in_a) && t.touches(&in_b) {
                for &s in t.support() {
                    if in_a[s] {
                        boundary_a[s] = true;
                    } else {
                        boundary_b[s] = true;
                    }
                }
            }
        }
        Ok(Self {
            a_sites: a,
            b_sites: b,
            boundary_a: (0..n).filter(|&i| boundary_a[i]).collect(),
            boundary_b: (0..n).filter(|&i| boundary_b[i]).collect(),
            a_terms,
            b_terms,
            interaction_terms,
        })
    }

    pub fn a_sites(&self) -> &[usize] {
        &self.a_sites
    }

    pub fn b_sites(&self) -> &[usize] {
        &self.b_sites
    }

    pub fn boundary_a(&self) -> &[usize] {
        &self.boundary_a
    }

    pub fn boundary_b(&self) -> &[usize] {
        &self.boundary_b
    }

    pub fn interaction_term_indices(&self) -> &[usize] {
        &self.interaction_terms
    }
}

/// Gibbs state `e^{−βH}/Z` with the log partition function computed by
/// log-sum-exp over the spectrum.
pub fn gibbs(
    h: &HermitianOperator,
    beta: f64,
    dims: Vec<usize>,
) -> Result<(DensityOperator, f64)> {
    if beta < 0.0 {
        return Err(Error::Precondition(format!(
            "inverse temperature must be nonnegative, got {beta}"
        )));
    }
    let spec = eig_hermitian(h)?;
    gibbs_from_spectrum(&spec, beta, dims)
}

/// Same as [`gibbs`] but reusing an existing eigendecomposition.
pub fn gibbs_from_spectrum(
    spec: &SpectralDecomposition,
    beta: f64,
    dims: Vec<usize>,
) -> Result<(DensityOperator, f64)> {
    let e0 = spec.eigenvalues.min();
    let weights: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&e| (-beta * (e - e0)).exp())
        .collect();
    let z_shifted: f64 = weights.iter().sum();
    let log_z = z_shifted.ln() - beta * e0;
    let rho = DensityOperator::from_spectral(spec.eigenvectors.clone(), weights, dims)?;
    Ok((rho, log_z))
}

/// The operator `E_β = e^{−β(H_A+H_B)} e^{βH}` and its inverse
/// `E_β^{−1} = e^{−βH} e^{β(H_A+H_B)}`, with their largest singular values.
#[derive(Debug, Clone)]
pub struct InteractionDressing {
    pub matrix: CMatrix,
    pub inverse: CMatrix,
    pub norm: f64,
    pub norm_inv: f64,
}

/// Compute `E_β` for a Hamiltonian and cut.
pub fn e_beta(ham: &LatticeHamiltonian, cut: &Bipartition, beta: f64) -> Result<InteractionDressing> {
    let h = ham.build()?;
    let split = ham.split(cut)?;
    let bulk = split.bulk()?;
    let spec_h = eig_hermitian(&h)?;
    let spec_bulk = eig_hermitian(&bulk)?;
    e_beta_from_spectra(&spec_h, &spec_bulk, beta)
}

/// `E_β` from precomputed eigendecompositions of H and H_A+H_B.
pub fn e_beta_from_spectra(
    spec_h: &SpectralDecomposition,
    spec_bulk: &SpectralDecomposition,
    beta: f64,
) -> Result<InteractionDressing> {
    if beta < 0.0 {
        return Err(Error::Precondition(format!(
            "inverse temperature must be nonnegative, got {beta}"
        )));
    }
    let exp_h_plus = spec_h.apply(|x| (beta * x).exp())?;
    let exp_h_minus = spec_h.apply(|x| (-beta * x).exp())?;
    let exp_bulk_plus = spec_bulk.apply(|x| (beta * x).exp())?;
    let exp_bulk_minus = spec_bulk.apply(|x| (-beta * x).exp())?;
    let matrix = &exp_bulk_minus * &exp_h_plus;
    let inverse = &exp_h_minus * &exp_bulk_plus;
    let norm = spectral_norm(&matrix);
    let norm_inv = spectral_norm(&inverse);
    Ok(InteractionDressing {
        matrix,
        inverse,
        norm,
        norm_inv,
    })
}

// ---------------------------------------------------------------------------
// Pauli matrices and model presets
// ---------------------------------------------------------------------------

pub fn pauli_x() -> HermitianOperator {
    HermitianOperator::from_symmetrized(CMatrix::from_row_slice(
        2,
        2,
        &[creal(0.0), creal(1.0), creal(1.0), creal(0.0)],
    ))
}

pub fn pauli_y() -> HermitianOperator {
    HermitianOperator::from_symmetrized(CMatrix::from_row_slice(
        2,
        2,
        &[
            creal(0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            creal(0.0),
        ],
    ))
}

pub fn pauli_z() -> HermitianOperator {
    HermitianOperator::from_real_diagonal(&[1.0, -1.0])
}

fn two_site(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    crate::linalg::kron(a, b)
}

impl LatticeHamiltonian {
    /// Classical Ising ring `Σ_i h z_i + J z_i z_{i+1}` encoded as one
    /// diagonal term per bond carrying `J z z + (h/2)(z⊗1 + 1⊗z)`; on the
    /// ring every site belongs to two bonds, so the fields add up to `h z_i`.
    pub fn classical_ising_ring(n: usize, j: f64, h: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Hamiltonian("ring needs at least 3 sites".into()));
        }
        let mut ham = Self::chain(n, 2)?;
        let z = pauli_z();
        let id = HermitianOperator::identity(2);
        let bond = two_site(&z, &z)
            .scale(j)
            .add(&two_site(&z, &id).scale(h / 2.0))?
            .add(&two_site(&id, &z).scale(h / 2.0))?;
        for i in 0..n {
            ham.add_term(vec![i, (i + 1) % n], bond.clone())?;
        }
        Ok(ham)
    }

    /// Open classical Ising chain: bond terms `J z z` plus one field term
    /// `h z` per site.
    pub fn classical_ising_chain(n: usize, j: f64, h: f64) -> Result<Self> {
        let mut ham = Self::chain(n, 2)?;
        let z = pauli_z();
        let zz = two_site(&z, &z).scale(j);
        for i in 0..n.saturating_sub(1) {
            ham.add_term(vec![i, i + 1], zz.clone())?;
        }
        if h != 0.0 {
            for i in 0..n {
                ham.add_term(vec![i], z.scale(h))?;
            }
        }
        Ok(ham)
    }

    /// Transverse-field Ising chain `Σ J z_i z_{i+1} + g x_i`.
    pub fn transverse_ising_chain(n: usize, j: f64, g: f64, periodic: bool) -> Result<Self> {
        let mut ham = Self::chain(n, 2)?;
        let z = pauli_z();
        let zz = two_site(&z, &z).scale(j);
        let bonds = if periodic { n } else { n - 1 };
        for i in 0..bonds {
            ham.add_term(vec![i, (i + 1) % n], zz.clone())?;
        }
        if g != 0.0 {
            let x = pauli_x().scale(g);
            for i in 0..n {
                ham.add_term(vec![i], x.clone())?;
            }
        }
        Ok(ham)
    }

    /// Heisenberg chain `Σ J (x x + y y + z z)` on nearest neighbors.
    pub fn heisenberg_chain(n: usize, j: f64, periodic: bool) -> Result<Self> {
        let mut ham = Self::chain(n, 2)?;
        let bond = two_site(&pauli_x(), &pauli_x())
            .add(&two_site(&pauli_y(), &pauli_y()))?
            .add(&two_site(&pauli_z(), &pauli_z()))?
            .scale(j);
        let bonds = if periodic { n } else { n - 1 };
        for i in 0..bonds {
            ham.add_term(vec![i, (i + 1) % n], bond.clone())?;
        }
        Ok(ham)
    }

    /// Transverse-field Ising model on a 2D grid with nearest-neighbor bonds.
    pub fn transverse_ising_grid(rows: usize, cols: usize, j: f64, g: f64) -> Result<Self> {
        let mut ham = Self::grid(rows, cols, 2)?;
        let z = pauli_z();
        let zz = two_site(&z, &z).scale(j);
        for r in 0..rows {
            for c in 0..cols {
                let s = r * cols + c;
                if c + 1 < cols {
                    ham.add_term(vec![s, s + 1], zz.clone())?;
                }
                if r + 1 < rows {
                    ham.add_term(vec![s, s + cols], zz.clone())?;
                }
            }
        }
        if g != 0.0 {
            let x = pauli_x().scale(g);
            for s in 0..rows * cols {
                ham.add_term(vec![s], x.clone())?;
            }
        }
        Ok(ham)
    }
}

// ---------------------------------------------------------------------------
// Structured-text ingestion (grammar documented in the CLI)
// ---------------------------------------------------------------------------

impl LatticeHamiltonian {
    /// Parse the plain-text Hamiltonian format:
    ///
    /// ```text
    /// sites: 4
    /// local_dim: 2
    /// coords: 0 1 2 3          # optional, n*D integers, D inferred
    /// term: 0 1
    /// 1 0   0 0   0 0   0 0
    /// 0 0  -1 0   0 0   0 0
    /// 0 0   0 0  -1 0   0 0
    /// 0 0   0 0   0 0   1 0
    /// ```
    ///
    /// Term entries are `re im` pairs, row-major, free-form whitespace;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sites: Option<usize> = None;
        let mut local_dim: Option<usize> = None;
        let mut coords: Option<Vec<i64>> = None;
        struct PendingTerm {
            support: Vec<usize>,
            numbers: Vec<f64>,
            line: usize,
        }
        let mut pending: Vec<PendingTerm> = Vec::new();

        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix("sites:") {
                sites = Some(
                    rest.trim()
                        .parse()
                        .map_err(|_| perr(line, format!("invalid site count '{}'", rest.trim())))?,
                );
            } else if let Some(rest) = content.strip_prefix("local_dim:") {
                local_dim = Some(rest.trim().parse().map_err(|_| {
                    perr(line, format!("invalid local dimension '{}'", rest.trim()))
                })?);
            } else if let Some(rest) = content.strip_prefix("coords:") {
                let xs: std::result::Result<Vec<i64>, _> =
                    rest.split_whitespace().map(str::parse).collect();
                coords = Some(xs.map_err(|_| perr(line, "invalid coordinate list".into()))?);
            } else if let Some(rest) = content.strip_prefix("term:") {
                let sup: std::result::Result<Vec<usize>, _> =
                    rest.split_whitespace().map(str::parse).collect();
                let support =
                    sup.map_err(|_| perr(line, "invalid term support list".into()))?;
                if support.is_empty() {
                    return Err(perr(line, "term needs at least one site".into()));
                }
                pending.push(PendingTerm {
                    support,
                    numbers: Vec::new(),
                    line,
                });
            } else {
                let target = pending
                    .last_mut()
                    .ok_or_else(|| perr(line, format!("unexpected data '{content}' before any 'term:' header")))?;
                for tok in content.split_whitespace() {
                    target.numbers.push(tok.parse().map_err(|_| {
                        perr(line, format!("invalid matrix entry '{tok}'"))
                    })?);
                }
            }
        }
        let sites = sites.ok_or_else(|| perr(0, "missing 'sites:' header".into()))?;
        let local_dim = local_dim.ok_or_else(|| perr(0, "missing 'local_dim:' header".into()))?;
        let coords = match coords {
            Some(flat) => {
                if flat.is_empty() || flat.len() % sites != 0 {
                    return Err(perr(0, format!(
                        "coords length {} is not a multiple of the {} sites",
                        flat.len(),
                        sites
                    )));
                }
                let d = flat.len() / sites;
                flat.chunks(d).map(|c| c.to_vec()).collect()
            }
            None => (0..sites as i64).map(|i| vec![i]).collect(),
        };
        let mut ham = Self::new(coords, local_dim)?;
        for t in pending {
            let dim = local_dim.pow(t.support.len() as u32);
            let need = 2 * dim * dim;
            if t.numbers.len() != need {
                return Err(perr(
                    t.line,
                    format!(
                        "term on sites {:?} needs {need} numbers ({dim}x{dim} re/im pairs), got {}",
                        t.support,
                        t.numbers.len()
                    ),
                ));
            }
            let mat = CMatrix::from_fn(dim, dim, |r, c| {
                let k = 2 * (r * dim + c);
                Complex64::new(t.numbers[k], t.numbers[k + 1])
            });
            let herm = HermitianOperator::new(mat).map_err(|e| perr(t.line, e.to_string()))?;
            ham.add_term(t.support, herm)
                .map_err(|e| perr(t.line, e.to_string()))?;
        }
        Ok(ham)
    }

    /// Serialize in the format accepted by [`parse`](Self::parse), with 17
    /// significant digits so a round trip is bit-exact.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "sites: {}", self.num_sites());
        let _ = writeln!(out, "local_dim: {}", self.local_dim);
        let flat: Vec<String> = self
            .coords
            .iter()
            .flat_map(|c| c.iter().map(|x| x.to_string()))
            .collect();
        let _ = writeln!(out, "coords: {}", flat.join(" "));
        for t in &self.terms {
            let sup: Vec<String> = t.support.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "term: {}", sup.join(" "));
            let m = t.matrix.matrix();
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|c| format!("{:.17e} {:.17e}", m[(r, c)].re, m[(r, c)].im))
                    .collect();
                let _ = writeln!(out, "{}", row.join("  "));
            }
        }
        out
    }
}

/// Single-spin configuration probabilities of a diagonal state vector,
/// marginalized onto the given sites (row-major site order, local dim d).
pub fn marginalize(probs: &[f64], n_sites: usize, d: usize, keep: &[usize]) -> Result<Vec<f64>> {
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    for &s in &keep_sorted {
        if s >= n_sites {
            return Err(Error::BadFactorIndex {
                index: s,
                count: n_sites,
            });
        }
    }
    if keep_sorted.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let out_size = d.pow(keep_sorted.len() as u32);
    let mut out = vec![0.0f64; out_size];
    for (cfg, &p) in probs.iter().enumerate() {
        let mut idx = 0usize;
        for &s in &keep_sorted {
            let digit = (cfg / d.pow((n_sites - 1 - s) as u32)) % d;
            idx = idx * d + digit;
        }
        out[idx] += p;
    }
    Ok(out)
}

/// Flat index of the product distribution `P_A ⊗ P_B` matching the joint
/// index convention of [`marginalize`] applied to `A ∪ B`.
pub fn product_distribution(
    p_joint_sites: &[usize],
    a_sites: &[usize],
    p_a: &[f64],
    p_b: &[f64],
    d: usize,
) -> Vec<f64> {
    // p_joint_sites: sorted union of A and B site indices
    let m = p_joint_sites.len();
    let total = d.pow(m as u32);
    let in_a: Vec<bool> = p_joint_sites.iter().map(|s| a_sites.contains(s)).collect();
    let mut out = vec![0.0f64; total];
    for (joint, slot) in out.iter_mut().enumerate() {
        let mut ia = 0usize;
        let mut ib = 0usize;
        let mut rem = joint;
        let mut digits = vec![0usize; m];
        for p in (0..m).rev() {
            digits[p] = rem % d;
            rem /= d;
        }
        for (p, &dig) in digits.iter().enumerate() {
            if in_a[p] {
                ia = ia * d + dig;
            } else {
                ib = ib * d + dig;
            }
        }
        *slot = p_a[ia] * p_b[ib];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;
    use approx::assert_relative_eq;

    #[test]
    fn single_site_field_builds_diagonal() {
        let mut ham = LatticeHamiltonian::chain(1, 2).unwrap();
        ham.add_term(vec![0], pauli_z().scale(0.7)).unwrap();
        let h = ham.build().unwrap();
        assert_relative_eq!(h.matrix()[(0, 0)].re, 0.7, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(1, 1)].re, -0.7, epsilon = 1e-14);
    }

    #[test]
    fn two_site_classical_ising_diagonal_entries() {
        // J z z + h(z1 + 1z) with J=1, h=0.5 -> diag {J+2h, -J, -J, J-2h}
        let (j, h) = (1.0, 0.5);
        let mut ham = LatticeHamiltonian::chain(2, 2).unwrap();
        let z = pauli_z();
        let id = HermitianOperator::identity(2);
        let term = kron(&z, &z)
            .scale(j)
            .add(&kron(&z, &id).scale(h))
            .unwrap()
            .add(&kron(&id, &z).scale(h))
            .unwrap();
        ham.add_term(vec![0, 1], term).unwrap();
        let built = ham.build().unwrap();
        let expect = [j + 2.0 * h, -j, -j, j - 2.0 * h];
        for (i, e) in expect.iter().enumerate() {
            assert_relative_eq!(built.matrix()[(i, i)].re, *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn build_matches_term_by_term_oracle() {
        // independent kron-based embedding for a 6-site transverse Ising chain
        let n = 6;
        let ham = LatticeHamiltonian::transverse_ising_chain(n, 1.0, 0.7, false).unwrap();
        let h = ham.build().unwrap();
        let dim = 1 << n;
        let mut oracle = CMatrix::zeros(dim, dim);
        let eye = |k: usize| CMatrix::identity(1 << k, 1 << k);
        let z = pauli_z();
        let x = pauli_x();
        for i in 0..n - 1 {
            let zz = z.matrix().kronecker(z.matrix());
            let full = eye(i).kronecker(&zz).kronecker(&eye(n - i - 2));
            oracle += full;
        }
        for i in 0..n {
            let full = eye(i).kronecker(x.matrix()).kronecker(&eye(n - i - 1));
            oracle += full * creal(0.7);
        }
        assert!((h.matrix() - oracle).norm() < 1e-12);
        let ground = eig_hermitian(&h).unwrap().eigenvalues[0];
        let ground_oracle = eig_hermitian(&HermitianOperator::new(oracle).unwrap())
            .unwrap()
            .eigenvalues[0];
        assert_relative_eq!(ground, ground_oracle, epsilon = 1e-10);
    }

    #[test]
    fn split_product_hamiltonian_has_zero_interaction() {
        let mut ham = LatticeHamiltonian::chain(4, 2).unwrap();
        for i in 0..4 {
            ham.add_term(vec![i], pauli_z().scale(0.3 + i as f64 * 0.1))
                .unwrap();
        }
        let cut = Bipartition::new(&ham, &[0, 1]).unwrap();
        let split = ham.split(&cut).unwrap();
        assert_eq!(split.interaction_norm(), 0.0);
        assert!(cut.boundary_a().is_empty());
    }

    #[test]
    fn split_middle_cut_single_bond() {
        let ham = LatticeHamiltonian::transverse_ising_chain(6, 1.0, 0.5, false).unwrap();
        let cut = Bipartition::new(&ham, &[0, 1, 2]).unwrap();
        assert_eq!(cut.interaction_term_indices().len(), 1);
        assert_eq!(cut.boundary_a(), &[2]);
        assert_eq!(cut.boundary_b(), &[3]);
        let split = ham.split(&cut).unwrap();
        let h = ham.build().unwrap();
        let sum = split.h_a.add(&split.h_b).unwrap().add(&split.h_i).unwrap();
        assert!((h.matrix() - sum.matrix()).norm() < 1e-12);
    }

    #[test]
    fn grid_column_cut_boundary() {
        let ham = LatticeHamiltonian::transverse_ising_grid(3, 3, 1.0, 0.4).unwrap();
        // A = first column: sites 0, 3, 6
        let cut = Bipartition::new(&ham, &[0, 3, 6]).unwrap();
        assert_eq!(cut.boundary_a().len(), 3);
        assert_eq!(cut.boundary_b().len(), 3);
    }

    #[test]
    fn gibbs_infinite_temperature_is_maximally_mixed() {
        let ham = LatticeHamiltonian::transverse_ising_chain(3, 1.0, 0.3, false).unwrap();
        let (rho, log_z) = ham.thermal_state(0.0).unwrap();
        assert_relative_eq!(log_z, (8.0f64).ln(), epsilon = 1e-12);
        assert!((rho.matrix() - CMatrix::identity(8, 8) * creal(1.0 / 8.0)).norm() < 1e-12);
    }

    #[test]
    fn gibbs_single_qubit_matches_scalar_formula() {
        let h = 0.8f64;
        let beta = 1.0f64;
        let mut ham = LatticeHamiltonian::chain(1, 2).unwrap();
        ham.add_term(vec![0], pauli_z().scale(h)).unwrap();
        let (rho, log_z) = ham.thermal_state(beta).unwrap();
        let z = 2.0 * (beta * h).cosh();
        assert_relative_eq!(rho.matrix()[(0, 0)].re, (-beta * h).exp() / z, epsilon = 1e-12);
        assert_relative_eq!(rho.matrix()[(1, 1)].re, (beta * h).exp() / z, epsilon = 1e-12);
        assert_relative_eq!(log_z, z.ln(), epsilon = 1e-12);
    }

    #[test]
    fn gibbs_commutes_with_hamiltonian() {
        let ham = LatticeHamiltonian::transverse_ising_chain(4, 1.0, 0.6, false).unwrap();
        let h = ham.build().unwrap();
        let (rho, _) = ham.thermal_state(0.7).unwrap();
        let comm = rho.matrix() * h.matrix() - h.matrix() * rho.matrix();
        assert!(comm.norm() < 1e-9 * h.matrix().norm().max(1.0));
    }

    #[test]
    fn classical_gibbs_matches_dense_thermal_state() {
        let ham = LatticeHamiltonian::classical_ising_ring(5, 0.8, 0.4).unwrap();
        let beta = 1.3;
        let probs = ham.classical_gibbs(beta).unwrap();
        let (rho, _) = ham.thermal_state(beta).unwrap();
        for (i, &p) in probs.iter().enumerate() {
            assert_relative_eq!(rho.matrix()[(i, i)].re, p, epsilon = 1e-10);
        }
    }

    #[test]
    fn classical_gibbs_beta_zero_uniform() {
        let ham = LatticeHamiltonian::classical_ising_chain(4, 1.0, 0.5).unwrap();
        let probs = ham.classical_gibbs(0.0).unwrap();
        for &p in &probs {
            assert_relative_eq!(p, 1.0 / 16.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn classical_gibbs_two_spins_boltzmann() {
        let (j, h, beta) = (0.9, 0.3, 1.0);
        let ham = LatticeHamiltonian::classical_ising_chain(2, j, h).unwrap();
        let probs = ham.classical_gibbs(beta).unwrap();
        // configurations 00,01,10,11 -> spins (+,+),(+,-),(-,+),(-,-)
        let z_of = |b: usize| if b == 0 { 1.0 } else { -1.0 };
        let mut expect = [0.0f64; 4];
        for (cfg, e) in expect.iter_mut().enumerate() {
            let (s0, s1) = (z_of(cfg / 2), z_of(cfg % 2));
            *e = (-beta * (j * s0 * s1 + h * (s0 + s1))).exp();
        }
        let z: f64 = expect.iter().sum();
        for (p, e) in probs.iter().zip(expect.iter()) {
            assert_relative_eq!(*p, e / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn classical_gibbs_rejects_transverse_field() {
        let ham = LatticeHamiltonian::transverse_ising_chain(3, 1.0, 0.2, false).unwrap();
        assert!(ham.classical_gibbs(1.0).is_err());
    }

    #[test]
    fn e_beta_zero_interaction_is_identity() {
        let mut ham = LatticeHamiltonian::chain(3, 2).unwrap();
        for i in 0..3 {
            ham.add_term(vec![i], pauli_x().scale(0.5)).unwrap();
        }
        let cut = Bipartition::new(&ham, &[0]).unwrap();
        let dressing = e_beta(&ham, &cut, 0.9).unwrap();
        assert!((&dressing.matrix - CMatrix::identity(8, 8)).norm() < 1e-10);
        assert_relative_eq!(dressing.norm, 1.0, epsilon = 1e-10);
        assert_relative_eq!(dressing.norm_inv, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn e_beta_commuting_equals_exp_interaction_norm() {
        let ham = LatticeHamiltonian::classical_ising_ring(6, 1.0, 0.5).unwrap();
        let cut = Bipartition::new(&ham, &[0, 1, 2]).unwrap();
        let beta = 0.8;
        let dressing = e_beta(&ham, &cut, beta).unwrap();
        let split = ham.split(&cut).unwrap();
        // commuting case: E = e^{β H_I}; ZZ-type interaction has symmetric spectrum
        assert_relative_eq!(
            dressing.norm,
            (beta * split.interaction_norm()).exp(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn recomputed_constants() {
        let ham = LatticeHamiltonian::transverse_ising_chain(5, 1.0, 0.5, false).unwrap();
        assert_eq!(ham.locality(), 2);
        assert_eq!(ham.range_1d().unwrap(), 2);
        // site 1 touches two bonds (norm 1 each) and one field (norm 0.5)
        assert_relative_eq!(ham.interaction_strength(), 2.5, epsilon = 1e-12);
        assert!(!ham.is_classical());
        assert!(LatticeHamiltonian::classical_ising_ring(4, 1.0, 0.1)
            .unwrap()
            .is_classical());
    }

    #[test]
    fn parse_roundtrip() {
        let ham = LatticeHamiltonian::transverse_ising_chain(3, 0.9, 0.35, true).unwrap();
        let text = ham.to_text();
        let back = LatticeHamiltonian::parse(&text).unwrap();
        assert_eq!(back.num_sites(), 3);
        assert_eq!(back.terms().len(), ham.terms().len());
        let h1 = ham.build().unwrap();
        let h2 = back.build().unwrap();
        assert!((h1.matrix() - h2.matrix()).norm() == 0.0);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "sites: 2\nlocal_dim: 2\nterm: 0\n1 0 0 0 0 0 oops\n";
        match LatticeHamiltonian::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn marginalize_product_consistency() {
        let ham = LatticeHamiltonian::classical_ising_ring(6, 0.7, 0.2).unwrap();
        let probs = ham.classical_gibbs(1.0).unwrap();
        let pa = marginalize(&probs, 6, 2, &[0, 1, 2]).unwrap();
        let pb = marginalize(&probs, 6, 2, &[3, 4, 5]).unwrap();
        assert_relative_eq!(pa.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pb.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let q = product_distribution(&[0, 1, 2, 3, 4, 5], &[0, 1, 2], &pa, &pb, 2);
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
