//! Reproducible random generators for states, channels, observables and
//! Hamiltonians.
//!
//! Draws come from counter-based ChaCha12 streams: a `(seed, stream)` pair
//! pins the whole sequence bit-exactly, independent of platform or thread
//! schedule. Parallel consumers derive their own substream instead of sharing
//! a generator.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::hamiltonian::LatticeHamiltonian;
use crate::linalg::{creal, CMatrix, CVector, DensityOperator, HermitianOperator};
use crate::{Error, Result};

/// Deterministic random source identified by a seed and a substream counter.
#[derive(Debug, Clone)]
pub struct SeededGenerator {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl SeededGenerator {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Fresh generator on substream `id` of the same seed.
    pub fn substream(&self, id: u64) -> Self {
        Self::new(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn complex_normal(&mut self) -> Complex64 {
        Complex64::new(self.normal(), self.normal())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn pick(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Complex Gaussian matrix with i.i.d. standard-normal components.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| self.complex_normal())
    }

    /// Hilbert–Schmidt-style random state: `G G† / Tr` with `G` a `d×rank`
    /// complex Gaussian matrix. `rank = None` means full rank.
    pub fn random_density(&mut self, d: usize, rank: Option<usize>) -> Result<DensityOperator> {
        let r = rank.unwrap_or(d);
        if r == 0 || r > d {
            return Err(Error::BadRank { rank: r, dim: d });
        }
        let g = self.gaussian_matrix(d, r);
        let m = &g * g.adjoint();
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        DensityOperator::new(m / creal(tr), vec![d])
    }

    /// GUE-style random observable `(G + G†)/2`.
    pub fn random_observable(&mut self, d: usize) -> Result<HermitianOperator> {
        let g = self.gaussian_matrix(d, d);
        HermitianOperator::new((&g + g.adjoint()) * creal(0.5))
    }

    /// Haar-ish random unitary via QR with phase fixing.
    pub fn random_unitary(&mut self, d: usize) -> Result<CMatrix> {
        let g = self.gaussian_matrix(d, d);
        let qr = g.qr();
        let r_diag: Vec<Complex64> = (0..d).map(|i| qr.r()[(i, i)]).collect();
        let mut q = qr.q();
        for (j, rj) in r_diag.iter().enumerate() {
            let phase = if rj.norm() > 0.0 { rj / rj.norm() } else { creal(1.0) };
            for i in 0..d {
                q[(i, j)] *= phase;
            }
        }
        Ok(q)
    }

    /// Random CPTP map as a Kraus list: Gaussian blocks orthonormalized
    /// through the canonical isometry completion, so `Σ K†K = 1` holds to
    /// machine precision.
    pub fn random_cptp(
        &mut self,
        d_in: usize,
        d_out: usize,
        kraus_count: usize,
    ) -> Result<KrausChannel> {
        if kraus_count == 0 {
            return Err(Error::Precondition("kraus_count must be >= 1".into()));
        }
        if kraus_count * d_out < d_in {
            return Err(Error::Precondition(format!(
                "kraus_count*d_out = {} cannot embed d_in = {d_in}",
                kraus_count * d_out
            )));
        }
        let stacked = self.gaussian_matrix(kraus_count * d_out, d_in);
        let q = stacked.qr().q(); // (kc*d_out) x d_in with orthonormal columns
        let ops = (0..kraus_count)
            .map(|b| q.rows(b * d_out, d_out).into_owned())
            .collect();
        KrausChannel::new(ops)
    }

    /// Random bipartite pure state with exactly the requested Schmidt rank.
    pub fn random_pure(&mut self, d_a: usize, d_b: usize, schmidt_rank: usize) -> Result<CVector> {
        let r = schmidt_rank;
        if r == 0 || r > d_a.min(d_b) {
            return Err(Error::BadRank {
                rank: r,
                dim: d_a.min(d_b),
            });
        }
        let ea = self.orthonormal_set(d_a, r);
        let fb = self.orthonormal_set(d_b, r);
        // weights bounded away from zero keep the rank unambiguous
        let mut weights: Vec<f64> = (0..r).map(|_| self.uniform(0.2, 1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let mut psi = CVector::zeros(d_a * d_b);
        for (k, w) in weights.iter().enumerate() {
            let amp = creal(w.sqrt());
            for i in 0..d_a {
                for j in 0..d_b {
                    psi[i * d_b + j] += amp * ea[(i, k)] * fb[(j, k)];
                }
            }
        }
        Ok(psi)
    }

    fn orthonormal_set(&mut self, d: usize, count: usize) -> CMatrix {
        let g = self.gaussian_matrix(d, count);
        g.qr().q()
    }

    /// Random 1D chain of k-site contiguous Hermitian terms with unit-order
    /// norms.
    pub fn random_local_hamiltonian(
        &mut self,
        sites: usize,
        local_dim: usize,
        k: usize,
    ) -> Result<LatticeHamiltonian> {
        if k == 0 || k > sites {
            return Err(Error::BadRank {
                rank: k,
                dim: sites,
            });
        }
        let mut ham = LatticeHamiltonian::chain(sites, local_dim)?;
        let term_dim = local_dim.pow(k as u32);
        for start in 0..=sites - k {
            let raw = self.random_observable(term_dim)?;
            let norm = raw.op_norm();
            let scale = self.uniform(0.3, 1.0) / norm.max(1e-12);
            ham.add_term((start..start + k).collect(), raw.scale(scale))?;
        }
        Ok(ham)
    }

    /// Random classical (diagonal-term) nearest-neighbor chain or ring.
    pub fn random_classical_chain(
        &mut self,
        sites: usize,
        local_dim: usize,
        periodic: bool,
    ) -> Result<LatticeHamiltonian> {
        if sites < 3 {
            return Err(Error::Precondition("need at least 3 sites".into()));
        }
        let mut ham = LatticeHamiltonian::chain(sites, local_dim)?;
        let d2 = local_dim * local_dim;
        let bonds = if periodic { sites } else { sites - 1 };
        for i in 0..bonds {
            let diag: Vec<f64> = (0..d2).map(|_| self.uniform(-1.0, 1.0)).collect();
            ham.add_term(
                vec![i, (i + 1) % sites],
                HermitianOperator::from_real_diagonal(&diag),
            )?;
        }
        Ok(ham)
    }

    /// Random probability vector from normalized squared Gaussians.
    pub fn random_probability(&mut self, n: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..n).map(|_| self.normal().powi(2) + 1e-8).collect();
        let s: f64 = p.iter().sum();
        for x in &mut p {
            *x /= s;
        }
        p
    }
}

/// A CPTP map in Kraus form.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Precondition("empty Kraus list".into()));
        }
        let d_in = ops[0].ncols();
        let d_out = ops[0].nrows();
        let mut sum = CMatrix::zeros(d_in, d_in);
        for k in &ops {
            if k.ncols() != d_in || k.nrows() != d_out {
                return Err(Error::DimMismatch(k.ncols(), d_in));
            }
            sum += k.adjoint() * k;
        }
        let dev = (&sum - CMatrix::identity(d_in, d_in)).norm();
        if dev > 1e-10 * (d_in as f64).sqrt().max(1.0) {
            return Err(Error::Precondition(format!(
                "Kraus operators not trace preserving: deviation {dev:.3e}"
            )));
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn input_dim(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.ops[0].nrows()
    }

    /// `ρ ↦ Σ K ρ K†`, returned with the given output factor list.
    pub fn apply(&self, rho: &DensityOperator, out_dims: Vec<usize>) -> Result<DensityOperator> {
        if rho.dim() != self.input_dim() {
            return Err(Error::DimMismatch(rho.dim(), self.input_dim()));
        }
        let d_out = self.output_dim();
        let mut out = CMatrix::zeros(d_out, d_out);
        for k in &self.ops {
            out += k * rho.matrix() * k.adjoint();
        }
        DensityOperator::new(out, out_dims)
    }

    /// The channel tracing out factor `discard` of a two-factor system.
    pub fn partial_trace_channel(dims: &[usize; 2], discard: usize) -> Result<Self> {
        let (d_keep, d_drop, drop_second) = match discard {
            0 => (dims[1], dims[0], false),
            1 => (dims[0], dims[1], true),
            _ => {
                return Err(Error::BadFactorIndex {
                    index: discard,
                    count: 2,
                })
            }
        };
        let total = dims[0] * dims[1];
        let mut ops = Vec::with_capacity(d_drop);
        for e in 0..d_drop {
            let mut k = CMatrix::zeros(d_keep, total);
            for i in 0..d_keep {
                let col = if drop_second { i * d_drop + e } else { e * d_keep + i };
                k[(i, col)] = creal(1.0);
            }
            ops.push(k);
        }
        Self::new(ops)
    }
}

/// Random diagonal (commuting) pair of states of dimension `d`.
pub fn random_commuting_pair(
    gen: &mut SeededGenerator,
    d: usize,
) -> Result<(DensityOperator, DensityOperator, Vec<f64>, Vec<f64>)> {
    let p = gen.random_probability(d);
    let q = gen.random_probability(d);
    let rho = DensityOperator::from_spectral(
        CMatrix::identity(d, d),
        p.clone(),
        vec![d],
    )?;
    let sigma = DensityOperator::from_spectral(
        CMatrix::identity(d, d),
        q.clone(),
        vec![d],
    )?;
    Ok((rho, sigma, p, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixed_seed_reproduces_density() {
        let a = SeededGenerator::new(42, 7).random_density(4, None).unwrap();
        let b = SeededGenerator::new(42, 7).random_density(4, None).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let c = SeededGenerator::new(42, 8).random_density(4, None).unwrap();
        assert!((a.matrix() - c.matrix()).norm() > 1e-6);
    }

    #[test]
    fn rank_one_density_is_pure() {
        let mut gen = SeededGenerator::new(1, 0);
        let rho = gen.random_density(5, Some(1)).unwrap();
        assert_eq!(rho.rank(), 1);
        let top = rho.spectral().eigenvalues.max();
        assert_relative_eq!(top, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn full_rank_density_has_positive_spectrum() {
        let mut gen = SeededGenerator::new(2, 0);
        let rho = gen.random_density(6, None).unwrap();
        assert_eq!(rho.rank(), 6);
        assert!(rho.spectral().eigenvalues.min() > 0.0);
    }

    #[test]
    fn rank_exceeding_dim_rejected() {
        let mut gen = SeededGenerator::new(3, 0);
        assert!(matches!(
            gen.random_density(3, Some(4)),
            Err(Error::BadRank { .. })
        ));
    }

    #[test]
    fn cptp_is_trace_preserving() {
        let mut gen = SeededGenerator::new(4, 0);
        let ch = gen.random_cptp(4, 3, 5).unwrap();
        let rho = gen.random_density(4, None).unwrap();
        let out = ch.apply(&rho, vec![3]).unwrap();
        assert_relative_eq!(out.operator().trace(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn single_kraus_is_isometry() {
        let mut gen = SeededGenerator::new(5, 0);
        let ch = gen.random_cptp(3, 4, 1).unwrap();
        let k = &ch.ops()[0];
        assert!((k.adjoint() * k - CMatrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn partial_trace_channel_matches_reduced() {
        let mut gen = SeededGenerator::new(6, 0);
        let rho = gen
            .random_density(6, None)
            .unwrap()
            .with_dims(vec![2, 3])
            .unwrap();
        let ch = KrausChannel::partial_trace_channel(&[2, 3], 1).unwrap();
        let out = ch.apply(&rho, vec![2]).unwrap();
        let direct = rho.reduced(&[0]).unwrap();
        assert!((out.matrix() - direct.matrix()).norm() < 1e-10);
        let ch0 = KrausChannel::partial_trace_channel(&[2, 3], 0).unwrap();
        let out0 = ch0.apply(&rho, vec![3]).unwrap();
        let direct0 = rho.reduced(&[1]).unwrap();
        assert!((out0.matrix() - direct0.matrix()).norm() < 1e-10);
    }

    #[test]
    fn random_pure_schmidt_rank_one_is_product() {
        let mut gen = SeededGenerator::new(7, 0);
        let psi = gen.random_pure(3, 4, 1).unwrap();
        let rho = DensityOperator::pure_state(&psi, vec![3, 4]).unwrap();
        let ra = rho.reduced(&[0]).unwrap();
        assert_eq!(ra.rank(), 1);
    }

    #[test]
    fn random_chain_constants_match_request() {
        let mut gen = SeededGenerator::new(8, 0);
        let ham = gen.random_local_hamiltonian(6, 2, 2).unwrap();
        assert_eq!(ham.locality(), 2);
        assert_eq!(ham.range_1d().unwrap(), 2);
        assert!(ham.interaction_strength() > 0.0);
        assert_eq!(ham.terms().len(), 5);
    }

    #[test]
    fn unitary_is_unitary() {
        let mut gen = SeededGenerator::new(9, 0);
        let u = gen.random_unitary(5).unwrap();
        assert!((u.adjoint() * &u - CMatrix::identity(5, 5)).norm() < 1e-10);
    }

    #[test]
    fn probability_normalized() {
        let mut gen = SeededGenerator::new(10, 0);
        let p = gen.random_probability(7);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}
