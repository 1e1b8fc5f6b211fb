//! Two-time correlations by the quantum regression theorem.
//!
//! Every curve starts from the conditional state `rho_c = σ rho_ss σ† / n`
//! prepared by a start-channel detection and evolves it with the same
//! Liouvillian that generates the one-time dynamics.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    conditional_state, steady_state, trace_functional, DensityOperator, Liouvillian, Propagator,
};
use crate::atom::AtomModel;
use crate::error::{invalid, Error, Result};
use crate::homodyne::DetectionChain;
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    G2,
    G15,
    GTotal,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::G2 => "g2",
            CurveKind::G15 => "g15",
            CurveKind::GTotal => "gtotal",
        }
    }
}

/// A correlation function sampled on a delay grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub kind: CurveKind,
    /// Delays in seconds, ascending.
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-point standard error; zero for theory curves.
    pub stderr: Vec<f64>,
    /// LO phase relative to the asymptotic dipole phase, when applicable.
    pub phase: Option<f64>,
    /// Constant dividing the unnormalized correlation, when one was used.
    pub normalizer: Option<f64>,
}

impl CorrelationCurve {
    pub fn theory(kind: CurveKind, tau: Vec<f64>, values: Vec<f64>, phase: Option<f64>) -> Self {
        let stderr = vec![0.0; values.len()];
        CorrelationCurve {
            kind,
            tau,
            values,
            stderr,
            phase,
            normalizer: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.values.len() || self.stderr.len() != self.values.len() {
            return Err(Error::Dimension("curve columns differ in length".into()));
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) || self.tau.first().is_some_and(|&t| t < 0.0) {
            return Err(invalid("tau", "grid must be non-negative and strictly ascending"));
        }
        if self.stderr.iter().any(|&s| !(s >= 0.0)) {
            return Err(invalid("stderr", "standard errors must be non-negative"));
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &CorrelationCurve) -> bool {
        self.tau.len() == other.tau.len()
            && self
                .tau
                .iter()
                .zip(&other.tau)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30))
    }

    /// Mean of the values whose delay falls in `[lo, hi)`.
    pub fn window_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let (sum, n) = self
            .tau
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= lo && **t < hi)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Denominator used for the intensity-field correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G15Normalization {
    /// `<σ+ + σ-><σ+σ->`: the excited-state population. Makes the
    /// decomposition of the total stop-channel correlation exact and
    /// `g15_0(∞) = 1`.
    #[default]
    ExcitedPopulation,
    /// `<σ+ + σ-><σ-σ+>` as printed in the original derivation.
    AsPrinted,
}

/// Reference for the LO phase `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// `Φ` is measured from the steady-state dipole phase, so that
    /// `g15_{π/2}(∞) = 0`.
    #[default]
    Dipole,
    /// `Φ` is applied to the bare `sigma_det`.
    Absolute,
}

/// Steady-state moments of the detected transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyMoments {
    /// `<σ+σ->`.
    pub excited: f64,
    /// `<σ-σ+>`.
    pub lower: f64,
    /// `<σ->` of the bare operator.
    pub dipole: Complex64,
}

impl SteadyMoments {
    /// `<σ+ + σ->` after rotating `σ-` onto the real axis: `2|<σ->|`.
    pub fn quadrature_sum(&self) -> f64 {
        2.0 * self.dipole.norm()
    }
}

/// Shared state for all regression curves of one model.
#[derive(Debug, Clone)]
pub struct RegressionEngine {
    liouvillian: Liouvillian,
    propagator: Propagator,
    rho_ss: DensityOperator,
    rho_c: DensityOperator,
    sigma: CMatrix,
    moments: SteadyMoments,
}

/// Delays per parallel work item in [`RegressionEngine`] evaluations.
const CHUNK: usize = 256;

impl RegressionEngine {
    pub fn new(model: &AtomModel) -> Result<Self> {
        let liouvillian = Liouvillian::new(model)?;
        let rho_ss = steady_state(&liouvillian)?;
        let sigma = model.sigma_det.clone();
        let rho_c = conditional_state(&rho_ss, &sigma)?;
        let moments = SteadyMoments {
            excited: rho_ss.expectation(&(sigma.adjoint() * &sigma)).re,
            lower: rho_ss.expectation(&(&sigma * sigma.adjoint())).re,
            dipole: rho_ss.expectation(&sigma),
        };
        Ok(RegressionEngine {
            propagator: liouvillian.propagator(),
            liouvillian,
            rho_ss,
            rho_c,
            sigma,
            moments,
        })
    }

    pub fn liouvillian(&self) -> &Liouvillian {
        &self.liouvillian
    }

    pub fn steady_state(&self) -> &DensityOperator {
        &self.rho_ss
    }

    pub fn conditional(&self) -> &DensityOperator {
        &self.rho_c
    }

    pub fn moments(&self) -> SteadyMoments {
        self.moments
    }

    /// Phase of `<σ->_ss`.
    pub fn dipole_phase(&self) -> f64 {
        self.moments.dipole.arg()
    }

    /// `σ-` rotated so that its steady-state expectation is real and positive.
    pub fn reference_sigma(&self, reference: PhaseReference) -> CMatrix {
        match reference {
            PhaseReference::Dipole => &self.sigma * Complex64::from_polar(1.0, -self.dipole_phase()),
            PhaseReference::Absolute => self.sigma.clone(),
        }
    }

    fn check_dipole(&self) -> Result<()> {
        if !(self.moments.dipole.norm() > 1e-12 * self.moments.excited.sqrt()) {
            return Err(Error::Numerical(
                "steady-state dipole vanishes; LO phase reference undefined".into(),
            ));
        }
        Ok(())
    }

    /// `Tr(op rho_c(tau))` for several operators at once.
    fn regress(&self, ops: &[&CMatrix], taus: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let rows: Vec<_> = ops.iter().map(|op| trace_functional(op)).collect();
        let initial = self.rho_c.vectorize();
        let chunks = taus
            .par_chunks(CHUNK)
            .map(|c| {
                let states = self.propagator.evolve(&initial, c)?;
                Ok(rows
                    .iter()
                    .map(|row| states.iter().map(|s| row.dot(s)).collect::<Vec<_>>())
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((0..rows.len())
            .map(|k| chunks.iter().flat_map(|c| c[k].iter().copied()).collect())
            .collect())
    }

    /// Normalized intensity correlation `g²(τ)`.
    pub fn g2(&self, taus: &[f64]) -> Result<CorrelationCurve> {
        let n_op = self.sigma.adjoint() * &self.sigma;
        let traces = self.regress(&[&n_op], taus)?;
        let values = traces[0].iter().map(|z| z.re / self.moments.excited).collect();
        Ok(CorrelationCurve::theory(CurveKind::G2, taus.to_vec(), values, None))
    }

    /// Complex quadrature `Z(τ) = Tr(σ' rho_c(τ)) / |<σ->|` from which
    /// `g15_Φ(τ) = Re(e^{-iΦ} Z(τ)) · n / d` follows, where `n / d` is the
    /// ratio of excited population to the chosen denominator population.
    pub fn g15_quadrature(&self, reference: PhaseReference, taus: &[f64]) -> Result<Vec<Complex64>> {
        self.check_dipole()?;
        let sigma = self.reference_sigma(reference);
        let traces = self.regress(&[&sigma], taus)?;
        let norm = self.moments.dipole.norm();
        Ok(traces[0].iter().map(|z| z / norm).collect())
    }

    /// Intensity-field correlation `g15_Φ(τ)`.
    pub fn g15(
        &self,
        phi: f64,
        taus: &[f64],
        normalization: G15Normalization,
        reference: PhaseReference,
    ) -> Result<CorrelationCurve> {
        let z = self.g15_quadrature(reference, taus)?;
        // numerator: n · 2 Re(e^{-iΦ} Tr(σ' rho_c)); denominator: 2|<σ>| · pop
        let pop = match normalization {
            G15Normalization::ExcitedPopulation => self.moments.excited,
            G15Normalization::AsPrinted => self.moments.lower,
        };
        let scale = self.moments.excited / pop;
        let rot = Complex64::from_polar(1.0, -phi);
        let values = z.iter().map(|z| (rot * z).re * scale).collect();
        Ok(CorrelationCurve::theory(CurveKind::G15, taus.to_vec(), values, Some(phi)))
    }

    /// Unnormalized `G_total_Φ(τ) = γ1 <σ+(0) X†(τ) X(τ) σ-(0)>` with
    /// `X = E e^{iΦ} + sqrt(γ2) σ'`, evaluated as a single regression of the
    /// operator `X†X`. The returned curve carries `F(1 - V)` as its normalizer.
    pub fn gtotal_direct(&self, detection: &DetectionChain, phi: f64, taus: &[f64]) -> Result<CorrelationCurve> {
        detection.validate()?;
        let d = self.sigma.nrows();
        let sigma = if self.moments.dipole.norm() > 0.0 {
            self.reference_sigma(PhaseReference::Dipole)
        } else {
            self.sigma.clone()
        };
        let lo = Complex64::from_polar(detection.lo_amplitude, phi);
        let x = super::identity(d) * lo + sigma * Complex64::from(detection.gamma2.sqrt());
        let xdx = x.adjoint() * &x;
        let traces = self.regress(&[&xdx], taus)?;
        let n = self.moments.excited;
        let values = traces[0].iter().map(|z| detection.gamma1 * n * z.re).collect();
        let normalizer = detection.gamma1 * n * (detection.lo_amplitude.powi(2) + detection.gamma2 * n);
        let mut curve = CorrelationCurve::theory(CurveKind::GTotal, taus.to_vec(), values, Some(phi));
        curve.normalizer = Some(normalizer);
        Ok(curve)
    }
}

pub fn g2_curve(model: &AtomModel, taus: &[f64]) -> Result<CorrelationCurve> {
    RegressionEngine::new(model)?.g2(taus)
}

pub fn g15_curve(model: &AtomModel, phi: f64, taus: &[f64]) -> Result<CorrelationCurve> {
    RegressionEngine::new(model)?.g15(phi, taus, G15Normalization::default(), PhaseReference::default())
}

pub fn gtotal_direct(model: &AtomModel, detection: &DetectionChain, phi: f64, taus: &[f64]) -> Result<CorrelationCurve> {
    RegressionEngine::new(model)?.gtotal_direct(detection, phi, taus)
}

/// `n` equally spaced delays `0, step, ..., (n-1) step`.
pub fn uniform_grid(step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * step).collect()
}

/// Wrap a phase into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    phi.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{build_ba138, build_two_level, Ba138Config};

    #[test]
    fn g2_vanishes_at_zero_delay() {
        for model in [
            build_two_level(3.0, 0.5, 1.0).unwrap(),
            build_ba138(&Ba138Config::example()).unwrap(),
        ] {
            let g2 = g2_curve(&model, &[0.0, 1e-9]).unwrap();
            assert!(g2.values[0].abs() < 1e-12);
        }
    }

    #[test]
    fn g2_tends_to_one() {
        let model = build_two_level(3.0, 0.0, 1.0).unwrap();
        let g2 = g2_curve(&model, &[0.0, 60.0]).unwrap();
        assert!((g2.values[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn g15_phase_convention() {
        let model = build_two_level(2.0, 0.7, 1.0).unwrap();
        let engine = RegressionEngine::new(&model).unwrap();
        let taus = [0.0, 80.0];
        let quad = engine.g15(PI / 2.0, &taus, Default::default(), Default::default()).unwrap();
        let inph = engine.g15(0.0, &taus, Default::default(), Default::default()).unwrap();
        assert!(quad.values[0].abs() < 1e-12 && inph.values[0].abs() < 1e-12);
        assert!(quad.values[1].abs() < 1e-8);
        assert!((inph.values[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn g15_requires_coherent_dipole() {
        // Driven far off resonance the dipole is tiny but nonzero; an
        // undriven atom has no steady excitation at all.
        let model = build_two_level(0.0, 0.0, 1.0).unwrap();
        assert!(RegressionEngine::new(&model).is_err());
    }

    #[test]
    fn printed_normalization_rescales_by_population_ratio() {
        let model = build_two_level(1.5, 0.2, 1.0).unwrap();
        let engine = RegressionEngine::new(&model).unwrap();
        let taus = [0.5, 1.0, 2.0];
        let a = engine.g15(0.3, &taus, G15Normalization::ExcitedPopulation, PhaseReference::Dipole).unwrap();
        let b = engine.g15(0.3, &taus, G15Normalization::AsPrinted, PhaseReference::Dipole).unwrap();
        let m = engine.moments();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x * m.excited / m.lower - y).abs() < 1e-12);
        }
    }

    #[test]
    fn window_mean_and_validation() {
        let c = CorrelationCurve::theory(CurveKind::G2, vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 3.0], None);
        assert_eq!(c.window_mean(1.0, 3.0), Some(1.5));
        assert_eq!(c.window_mean(10.0, 11.0), None);
        assert!(c.validate().is_ok());
        let bad = CorrelationCurve::theory(CurveKind::G2, vec![1.0, 0.0], vec![0.0, 0.0], None);
        assert!(bad.validate().is_err());
    }
}
