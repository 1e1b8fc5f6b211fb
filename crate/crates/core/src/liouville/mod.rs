//! Lindblad generator, stationary state and time evolution of density
//! operators.
//!
//! Superoperators act on column-stacked density matrices: element
//! `rho[(i, j)]` lives at index `i + d * j`, so `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

mod regression;

pub use regression::{
    g15_curve, g2_curve, gtotal_direct, CorrelationCurve, CurveKind, G15Normalization,
    uniform_grid, wrap_phase, PhaseReference, RegressionEngine, SteadyMoments,
};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::atom::AtomModel;
use crate::error::{invalid, Error, Result};
use crate::CMatrix;

const TRACE_TOL: f64 = 1e-9;
const HERMITIAN_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = 1e-9;

/// A validated density matrix: unit trace, Hermitian, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(CMatrix);

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let trace = matrix.trace();
        if (trace - Complex64::from(1.0)).norm() > TRACE_TOL {
            return Err(invalid("rho", format!("trace {trace} differs from 1")));
        }
        let defect = (&matrix - matrix.adjoint()).norm();
        if defect > HERMITIAN_TOL * matrix.norm().max(1.0) {
            return Err(invalid("rho", format!("not Hermitian (defect {defect:.3e})")));
        }
        let herm = hermitian_part(&matrix);
        let min_eig = herm.symmetric_eigenvalues().min();
        if min_eig < -POSITIVITY_TOL {
            return Err(invalid("rho", format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(DensityOperator(herm))
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm_squared();
        if !(norm > 0.0) {
            return Err(invalid("psi", "zero state vector"));
        }
        Ok(DensityOperator(psi * psi.adjoint() / Complex64::from(norm)))
    }

    /// Projector onto basis state `index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(index, index)] = Complex64::from(1.0);
        DensityOperator(m)
    }

    pub(crate) fn from_unchecked(matrix: CMatrix) -> Self {
        DensityOperator(matrix)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `Tr(op rho)`.
    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        trace_product(op, &self.0)
    }

    pub fn population(&self, index: usize) -> f64 {
        self.0[(index, index)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.population(i)).collect()
    }

    pub fn vectorize(&self) -> DVector<Complex64> {
        vectorize(&self.0)
    }
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::from(0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn vectorize(m: &CMatrix) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &DVector<Complex64>, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Row vector `r` with `r · vec(rho) = Tr(op rho)`.
pub(crate) fn trace_functional(op: &CMatrix) -> DVector<Complex64> {
    vectorize(&op.transpose())
}

/// The Lindblad generator of an [`AtomModel`] as a `d² × d²` matrix.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    matrix: CMatrix,
}

impl Liouvillian {
    /// `L rho = -i[H, rho] + Σ_k (C_k rho C_k† - ½{C_k† C_k, rho})`.
    pub fn from_parts(hamiltonian: &CMatrix, collapse: &[CMatrix]) -> Result<Self> {
        let d = hamiltonian.nrows();
        if !hamiltonian.is_square() {
            return Err(Error::Dimension("Hamiltonian must be square".into()));
        }
        if let Some(c) = collapse.iter().find(|c| c.shape() != (d, d)) {
            return Err(Error::Dimension(format!(
                "collapse operator is {:?}, Hamiltonian is {d}x{d}",
                c.shape()
            )));
        }
        let id = CMatrix::identity(d, d);
        let minus_i = Complex64::new(0.0, -1.0);
        let mut l = (id.kronecker(hamiltonian) - hamiltonian.transpose().kronecker(&id)) * minus_i;
        let half = Complex64::from(0.5);
        for c in collapse {
            let cdc = c.adjoint() * c;
            l += c.conjugate().kronecker(c);
            l -= id.kronecker(&cdc) * half;
            l -= cdc.transpose().kronecker(&id) * half;
        }
        Ok(Liouvillian { dim: d, matrix: l })
    }

    pub fn new(model: &AtomModel) -> Result<Self> {
        Self::from_parts(&model.hamiltonian, &model.collapse_operators())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }

    /// Number of singular values of `L` below `rel_tol * max`.
    pub fn nullity(&self, rel_tol: f64) -> usize {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let smax = sv.max();
        sv.iter().filter(|&&s| s <= rel_tol * smax).count()
    }

    /// `exp(L t)`.
    pub fn exponential(&self, t: f64) -> CMatrix {
        (&self.matrix * Complex64::from(t)).exp()
    }

    /// Evolve a vectorized state to each time in `times` (seconds, any
    /// order). See [`Propagator`].
    pub fn evolve_on_grid(&self, initial: &DVector<Complex64>, times: &[f64]) -> Result<Vec<DVector<Complex64>>> {
        self.propagator().evolve(initial, times)
    }

    pub fn propagator(&self) -> Propagator {
        Propagator::new(self)
    }
}

/// Preferred spacing of the time lattice used by [`Propagator`].
pub const LATTICE_STEP: f64 = 100e-12;
const BLOCK_BITS: u32 = 6;
const SUB_BITS: u32 = 4;
const MAX_POWER: usize = 58;

/// `exp(L t) v` evaluated so that the result for each `t` is independent of
/// the other times requested alongside it: bit-identical whether a grid is
/// evaluated whole, in pieces, or in parallel.
///
/// The lattice step `Δ` is [`LATTICE_STEP`], enlarged by decades for slow
/// generators and halved for very fast ones. `t` is rounded to the
/// sub-lattice `m Δ / 16`. The high bits of `m / 16` are reached through
/// the fixed powers `exp(L Δ 2^j)` applied from the most significant bit
/// down, the low [`BLOCK_BITS`] bits by single steps, the sub-lattice offset
/// by one of `exp(L k Δ / 16)`, and the rounding remainder by a Taylor
/// series of the generator.
#[derive(Debug, Clone)]
pub struct Propagator {
    generator: CMatrix,
    norm: f64,
    step: f64,
    /// `exp(L Δ 2^j)`, built on first use.
    powers: Vec<OnceLock<CMatrix>>,
    /// `exp(L k Δ / 16)` for `k = 1..16`, built on first use.
    offsets: Vec<OnceLock<CMatrix>>,
}

impl Propagator {
    pub fn new(l: &Liouvillian) -> Self {
        let norm = (0..l.matrix.ncols())
            .map(|c| l.matrix.column(c).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut step = LATTICE_STEP;
        while norm * step * 10.0 <= 0.1 && step < 1e6 {
            step *= 10.0;
        }
        while norm * step > 2.0 {
            step /= 2.0;
        }
        Propagator {
            generator: l.matrix.clone(),
            norm,
            step,
            powers: (0..=MAX_POWER).map(|_| OnceLock::new()).collect(),
            offsets: (0..1usize << SUB_BITS).map(|_| OnceLock::new()).collect(),
        }
    }

    /// Lattice spacing `Δ` in seconds.
    pub fn step(&self) -> f64 {
        self.step
    }

    fn fine(&self) -> f64 {
        self.step / f64::from(1u32 << SUB_BITS)
    }

    fn power(&self, j: usize) -> &CMatrix {
        self.powers[j].get_or_init(|| {
            if j == 0 {
                (&self.generator * Complex64::from(self.step)).exp()
            } else {
                let p = self.power(j - 1);
                p * p
            }
        })
    }

    fn offset(&self, k: usize) -> &CMatrix {
        self.offsets[k].get_or_init(|| (&self.generator * Complex64::from(k as f64 * self.fine())).exp())
    }

    /// `exp(L r) v` for `|r|` at most half a sub-lattice step.
    fn remainder(&self, r: f64, v: DVector<Complex64>) -> DVector<Complex64> {
        // Below an ulp the first Taylor term cannot change the result.
        if self.norm * r.abs() <= f64::EPSILON / 2.0 {
            return v;
        }
        let substeps = (self.norm * r.abs() / 0.5).ceil().max(1.0) as usize;
        let h = r / substeps as f64;
        let mut v = v;
        for _ in 0..substeps {
            let mut term = v.clone();
            let mut sum = v;
            for k in 1..40 {
                term = &self.generator * term * Complex64::from(h / k as f64);
                sum += &term;
                if term.norm() <= 1e-18 * sum.norm() {
                    break;
                }
            }
            v = sum;
        }
        v
    }

    pub fn evolve(&self, initial: &DVector<Complex64>, times: &[f64]) -> Result<Vec<DVector<Complex64>>> {
        let fine = self.fine();
        let limit = (1u64 << (MAX_POWER as u32 + SUB_BITS)) as f64;
        let mut block: Option<(u64, DVector<Complex64>)> = None;
        let mut cursor: Option<(u64, DVector<Complex64>)> = None;
        let mut scratch = initial.clone();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let ticks = t / fine;
            if !(t >= 0.0) || !(ticks < limit) {
                return Err(invalid("tau", format!("delay {t} outside [0, {:e}) s", fine * limit)));
            }
            let ticks = ticks.round() as u64;
            let m = ticks >> SUB_BITS;
            let sub = (ticks & ((1 << SUB_BITS) - 1)) as usize;
            let base = m >> BLOCK_BITS << BLOCK_BITS;
            if block.as_ref().is_none_or(|(b, _)| *b != base) {
                let mut s = initial.clone();
                for j in (BLOCK_BITS as usize..=MAX_POWER).rev() {
                    if base >> j & 1 == 1 {
                        s = self.power(j) * s;
                    }
                }
                block = Some((base, s));
                cursor = None;
            }
            let (base, anchor) = block.as_ref().unwrap();
            let (mut at, mut state) = match cursor.take() {
                Some((at, state)) if at <= m => (at, state),
                _ => (*base, anchor.clone()),
            };
            if at < m {
                let step = self.power(0);
                while at < m {
                    scratch.gemv(Complex64::ONE, step, &state, Complex64::ZERO);
                    std::mem::swap(&mut state, &mut scratch);
                    at += 1;
                }
            }
            let shifted = if sub == 0 { state.clone() } else { self.offset(sub) * &state };
            out.push(self.remainder(t - ticks as f64 * fine, shifted));
            cursor = Some((at, state));
        }
        Ok(out)
    }
}

pub fn liouvillian(model: &AtomModel) -> Result<Liouvillian> {
    Liouvillian::new(model)
}

/// Relative singular-value threshold used to decide the nullspace dimension.
pub const NULLSPACE_TOL: f64 = 1e-10;

/// Unique stationary state of `L`.
///
/// One population equation is replaced by the trace condition and the
/// resulting system is solved directly. A nullspace of dimension > 1 is
/// reported as [`Error::DegenerateSteadyState`].
pub fn steady_state(l: &Liouvillian) -> Result<DensityOperator> {
    let nullity = l.nullity(NULLSPACE_TOL);
    if nullity != 1 {
        return Err(Error::DegenerateSteadyState { dim: nullity });
    }
    let d = l.dim;
    let n = d * d;
    let mut system = l.matrix.clone();
    for k in 0..n {
        system[(0, k)] = Complex64::from(0.0);
    }
    for i in 0..d {
        system[(0, i + d * i)] = Complex64::from(1.0);
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = Complex64::from(1.0);
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("steady-state system is singular".into()))?;
    let rho = hermitian_part(&unvectorize(&solution, d));
    let rho = &rho / rho.trace();
    let residual = (&l.matrix * vectorize(&rho)).norm();
    let scale = l.matrix.norm();
    if residual > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "steady-state residual {residual:.3e} exceeds tolerance (|L| = {scale:.3e})"
        )));
    }
    DensityOperator::new(rho)
}

/// `exp(L tau) rho0`.
pub fn propagate(l: &Liouvillian, rho0: &DensityOperator, tau: f64) -> Result<DensityOperator> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid("tau", "propagation time must be finite and non-negative"));
    }
    if rho0.dim() != l.dim {
        return Err(Error::Dimension("state and Liouvillian dimensions differ".into()));
    }
    if tau == 0.0 {
        return Ok(rho0.clone());
    }
    let v = l.exponential(tau) * rho0.vectorize();
    Ok(DensityOperator::from_unchecked(hermitian_part(&unvectorize(&v, l.dim))))
}

/// State right after a detection on `sigma`: `σ rho σ† / Tr(σ rho σ†)`.
pub fn conditional_state(rho: &DensityOperator, sigma: &CMatrix) -> Result<DensityOperator> {
    if sigma.shape() != (rho.dim(), rho.dim()) {
        return Err(Error::Dimension("detection operator does not match state".into()));
    }
    let collapsed = sigma * rho.matrix() * sigma.adjoint();
    let p = collapsed.trace().re;
    if !(p > 1e-300) {
        return Err(invalid(
            "rho",
            "detected transition carries no population; nothing to condition on",
        ));
    }
    Ok(DensityOperator::from_unchecked(hermitian_part(&collapsed) / Complex64::from(p)))
}

/// Slowest non-zero relaxation rate `min |Re λ|` over the Liouvillian
/// spectrum, excluding the stationary eigenvalue.
pub fn spectral_gap(l: &Liouvillian) -> Result<f64> {
    let eig = eigenvalues(l)?;
    let scale = l.matrix.norm();
    eig.iter()
        .map(|z| z.re.abs())
        .filter(|&r| r > 1e-9 * scale)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Numerical("Liouvillian has no decaying modes".into()))
}

/// Complex eigenvalues of the generator via a Schur decomposition.
pub fn eigenvalues(l: &Liouvillian) -> Result<Vec<Complex64>> {
    let schur = nalgebra::Schur::try_new(l.matrix.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

pub(crate) fn identity(dim: usize) -> CMatrix {
    DMatrix::identity(dim, dim)
}
