//! Detection-chain arithmetic for the weak-LO homodyne stop channel: the
//! prefactor `F`, the visibility `V` and intensity ratio `r`, composition of
//! the normalized total correlation, and extraction of the in-phase and
//! quadrature intensity-field correlations from three LO phases.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::liouville::{
    CorrelationCurve, CurveKind, DensityOperator, PhaseReference, RegressionEngine,
};
use crate::CMatrix;

/// Rates and amplitudes of the start/stop detection chain. Fields are in
/// photon-flux units: `gamma1`, `gamma2` in s^-1 per unit excited
/// population, `lo_amplitude` in s^-1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    pub gamma1: f64,
    pub gamma2: f64,
    pub lo_amplitude: f64,
    /// LO phase in radians, relative to the asymptotic dipole phase.
    #[serde(default)]
    pub lo_phase: f64,
    #[serde(default)]
    pub dark_rate_start: f64,
    #[serde(default)]
    pub dark_rate_stop: f64,
    /// Standard deviation of the LO phase lock error (radians).
    #[serde(default)]
    pub phase_jitter_sigma: f64,
    /// Non-paralyzable detector dead time in seconds.
    #[serde(default)]
    pub dead_time: f64,
}

impl DetectionChain {
    pub fn new(gamma1: f64, gamma2: f64, lo_amplitude: f64) -> Self {
        DetectionChain {
            gamma1,
            gamma2,
            lo_amplitude,
            lo_phase: 0.0,
            dark_rate_start: 0.0,
            dark_rate_stop: 0.0,
            phase_jitter_sigma: 0.0,
            dead_time: 0.0,
        }
    }

    pub fn with_phase(mut self, phi: f64) -> Self {
        self.lo_phase = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("lo_amplitude", self.lo_amplitude),
            ("dark_rate_start", self.dark_rate_start),
            ("dark_rate_stop", self.dark_rate_stop),
            ("phase_jitter_sigma", self.phase_jitter_sigma),
            ("dead_time", self.dead_time),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        if !self.lo_phase.is_finite() {
            return Err(invalid("lo_phase", "must be finite"));
        }
        Ok(())
    }
}

/// Prefactor, visibility and intensity ratio of the stop channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneDerived {
    /// `F` in s^-2.
    pub prefactor: f64,
    pub visibility: f64,
    pub ratio: f64,
}

impl HomodyneDerived {
    /// `F (1 - V)`, the normalization of the total correlation.
    pub fn normalizer(&self) -> f64 {
        self.prefactor * (1.0 - self.visibility)
    }
}

/// `F`, `V`, `r` from steady-state moments `n = <σ+σ->` and
/// `q = <σ+ + σ->` (the latter taken after rotating the dipole real).
pub fn derive_from_moments(detection: &DetectionChain, excited: f64, quadrature_sum: f64) -> Result<HomodyneDerived> {
    detection.validate()?;
    let e = detection.lo_amplitude;
    let g2 = detection.gamma2;
    if e == 0.0 && g2 == 0.0 {
        return Err(invalid("detection", "LO and fluorescence both blocked at the stop detector"));
    }
    let interference = e * g2.sqrt() * quadrature_sum;
    let total = e * e + interference + g2 * excited;
    let uninterfered = e * e + g2 * excited;
    Ok(HomodyneDerived {
        prefactor: detection.gamma1 * excited * total,
        visibility: if total > 0.0 { interference / total } else { 0.0 },
        ratio: if uninterfered > 0.0 { g2 * excited / uninterfered } else { 0.0 },
    })
}

/// `F`, `V`, `r` for a steady state and detected-transition operator.
pub fn derive(detection: &DetectionChain, rho_ss: &DensityOperator, sigma: &CMatrix) -> Result<HomodyneDerived> {
    let excited = rho_ss.expectation(&(sigma.adjoint() * sigma)).re;
    let dipole = rho_ss.expectation(sigma).norm();
    derive_from_moments(detection, excited, 2.0 * dipole)
}

/// `g_total = (1 - r) + r g² + V/(1 - V) g15`.
pub fn compose_gtotal(g2: &CorrelationCurve, g15: &CorrelationCurve, visibility: f64, ratio: f64) -> Result<CorrelationCurve> {
    if !g2.same_grid(g15) {
        return Err(Error::GridMismatch);
    }
    if !(0.0..1.0).contains(&visibility) {
        return Err(invalid("V", "visibility must lie in [0, 1)"));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(invalid("r", "intensity ratio must lie in [0, 1]"));
    }
    let w = visibility / (1.0 - visibility);
    let values = g2
        .values
        .iter()
        .zip(&g15.values)
        .map(|(a, b)| (1.0 - ratio) + ratio * a + w * b)
        .collect();
    let stderr = g2
        .stderr
        .iter()
        .zip(&g15.stderr)
        .map(|(a, b)| (ratio * a).hypot(w * b))
        .collect();
    Ok(CorrelationCurve {
        kind: CurveKind::GTotal,
        tau: g2.tau.clone(),
        values,
        stderr,
        phase: g15.phase,
        normalizer: None,
    })
}

fn extraction_weight(visibility: f64) -> Result<f64> {
    if !(visibility > 0.0 && visibility < 1.0) {
        return Err(invalid("V", "extraction needs 0 < V < 1"));
    }
    Ok((1.0 - visibility) / (2.0 * visibility))
}

/// In-phase component `g15_0 = (1-V)/(2V) (g_total_0 - g_total_π)`.
pub fn extract_inphase(gt0: &CorrelationCurve, gtpi: &CorrelationCurve, visibility: f64) -> Result<CorrelationCurve> {
    let w = extraction_weight(visibility)?;
    if !gt0.same_grid(gtpi) {
        return Err(Error::GridMismatch);
    }
    let values = gt0.values.iter().zip(&gtpi.values).map(|(a, b)| w * (a - b)).collect();
    let stderr = gt0.stderr.iter().zip(&gtpi.stderr).map(|(a, b)| w * a.hypot(*b)).collect();
    Ok(CorrelationCurve {
        kind: CurveKind::G15,
        tau: gt0.tau.clone(),
        values,
        stderr,
        phase: Some(0.0),
        normalizer: None,
    })
}

/// Quadrature component
/// `g15_{π/2} = (1-V)/(2V) (2 g_total_{π/2} - g_total_0 - g_total_π)`.
pub fn extract_quadrature(
    gt0: &CorrelationCurve,
    gtpi2: &CorrelationCurve,
    gtpi: &CorrelationCurve,
    visibility: f64,
) -> Result<CorrelationCurve> {
    let w = extraction_weight(visibility)?;
    if !gt0.same_grid(gtpi) || !gt0.same_grid(gtpi2) {
        return Err(Error::GridMismatch);
    }
    let values = gt0
        .values
        .iter()
        .zip(&gtpi2.values)
        .zip(&gtpi.values)
        .map(|((a, m), b)| w * (2.0 * m - a - b))
        .collect();
    let stderr = gt0
        .stderr
        .iter()
        .zip(&gtpi2.stderr)
        .zip(&gtpi.stderr)
        .map(|((a, m), b)| w * (a * a + 4.0 * m * m + b * b).sqrt())
        .collect();
    Ok(CorrelationCurve {
        kind: CurveKind::G15,
        tau: gt0.tau.clone(),
        values,
        stderr,
        phase: Some(PI / 2.0),
        normalizer: None,
    })
}

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx`, by
/// Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub const JITTER_NODES: usize = 16;

/// Average a phase-dependent curve over `Φ ~ N(phi, sigma²)`.
pub fn jitter_average<F>(phi: f64, sigma: f64, mut curve_at: F) -> Result<CorrelationCurve>
where
    F: FnMut(f64) -> Result<CorrelationCurve>,
{
    if !(sigma >= 0.0) {
        return Err(invalid("phase_jitter_sigma", "must be non-negative"));
    }
    if sigma == 0.0 {
        return curve_at(phi);
    }
    let (nodes, weights) = gauss_hermite(JITTER_NODES);
    let mut acc: Option<CorrelationCurve> = None;
    for (x, w) in nodes.iter().zip(&weights) {
        let c = curve_at(phi + 2f64.sqrt() * sigma * x)?;
        let w = w / PI.sqrt();
        match acc.as_mut() {
            None => {
                let mut first = c;
                first.values.iter_mut().for_each(|v| *v *= w);
                acc = Some(first);
            }
            Some(a) => {
                for (v, cv) in a.values.iter_mut().zip(&c.values) {
                    *v += w * cv;
                }
            }
        }
    }
    let mut out = acc.expect("at least one node");
    out.phase = Some(phi);
    Ok(out)
}

/// Theory-mode total correlation: `V`, `r` from the model, `g15`
/// averaged over the configured phase jitter, then composed.
pub fn theory_gtotal(
    engine: &RegressionEngine,
    detection: &DetectionChain,
    phi: f64,
    taus: &[f64],
) -> Result<(CorrelationCurve, HomodyneDerived)> {
    let m = engine.moments();
    let derived = derive_from_moments(detection, m.excited, m.quadrature_sum())?;
    let g2 = engine.g2(taus)?;
    let g15 = theory_g15(engine, detection, phi, taus)?;
    let mut gt = compose_gtotal(&g2, &g15, derived.visibility, derived.ratio)?;
    gt.normalizer = Some(derived.normalizer());
    Ok((gt, derived))
}

/// `g15_Φ` averaged over the configured LO phase jitter.
pub fn theory_g15(engine: &RegressionEngine, detection: &DetectionChain, phi: f64, taus: &[f64]) -> Result<CorrelationCurve> {
    // One regression gives the complex quadrature; each jitter node is then
    // just a rotation of it.
    let z = engine.g15_quadrature(PhaseReference::Dipole, taus)?;
    jitter_average(phi, detection.phase_jitter_sigma, |p| {
        let rot = num_complex::Complex64::from_polar(1.0, -p);
        let values = z.iter().map(|z| (rot * z).re).collect();
        Ok(CorrelationCurve::theory(CurveKind::G15, taus.to_vec(), values, Some(p)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::build_two_level;
    use proptest::prelude::*;

    fn curve(values: Vec<f64>) -> CorrelationCurve {
        let tau = (0..values.len()).map(|i| i as f64 * 1e-9).collect();
        CorrelationCurve::theory(CurveKind::G2, tau, values, None)
    }

    #[test]
    fn blocked_lo_and_blocked_fluorescence() {
        let d = derive_from_moments(&DetectionChain::new(1e4, 2e4, 0.0), 0.2, 0.3).unwrap();
        assert_eq!(d.visibility, 0.0);
        assert_eq!(d.ratio, 1.0);
        let d = derive_from_moments(&DetectionChain::new(1e4, 0.0, 50.0), 0.2, 0.3).unwrap();
        assert_eq!(d.visibility, 0.0);
        assert_eq!(d.ratio, 0.0);
        assert!(derive_from_moments(&DetectionChain::new(1e4, 0.0, 0.0), 0.2, 0.3).is_err());
    }

    #[test]
    fn derive_matches_moment_formula() {
        let model = build_two_level(2.0, 0.3, 1.0).unwrap();
        let engine = RegressionEngine::new(&model).unwrap();
        let det = DetectionChain::new(0.1, 0.2, 0.4);
        let a = derive(&det, engine.steady_state(), &model.sigma_det).unwrap();
        let m = engine.moments();
        let b = derive_from_moments(&det, m.excited, m.quadrature_sum()).unwrap();
        assert!((a.visibility - b.visibility).abs() < 1e-15);
        assert!((a.ratio - b.ratio).abs() < 1e-15);
    }

    #[test]
    fn zero_delay_offset() {
        let g2 = curve(vec![0.0, 0.5]);
        let g15 = curve(vec![0.0, 0.7]);
        let gt = compose_gtotal(&g2, &g15, 0.18, 0.31).unwrap();
        assert!((gt.values[0] - 0.69).abs() < 1e-12);
    }

    #[test]
    fn no_visibility_no_phase_dependence() {
        let g2 = curve(vec![0.0, 0.5, 1.2]);
        let gt = compose_gtotal(&g2, &curve(vec![0.0, 3.0, -2.0]), 0.0, 0.4).unwrap();
        for (v, a) in gt.values.iter().zip(&g2.values) {
            assert!((v - (0.6 + 0.4 * a)).abs() < 1e-15);
        }
    }

    #[test]
    fn composition_errors() {
        let a = curve(vec![0.0, 1.0]);
        let b = curve(vec![0.0, 1.0, 2.0]);
        assert!(matches!(compose_gtotal(&a, &b, 0.1, 0.1), Err(Error::GridMismatch)));
        assert!(compose_gtotal(&a, &a, 1.0, 0.1).is_err());
        assert!(extract_inphase(&a, &a, 0.0).is_err());
    }

    #[test]
    fn equal_inputs_extract_to_zero() {
        let a = curve(vec![0.3, 1.0, 1.7]);
        let z = extract_inphase(&a, &a, 0.2).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        let lo = curve(vec![0.1, 0.8, 1.5]);
        let hi = curve(vec![0.5, 1.2, 1.9]);
        let q = extract_quadrature(&lo, &a, &hi, 0.2).unwrap();
        assert!(q.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let (x, w) = gauss_hermite(JITTER_NODES);
        let total: f64 = w.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-12);
        let second: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((second - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn jitter_damps_quadrature_by_gaussian_factor() {
        let model = build_two_level(3.0, 0.4, 1.0).unwrap();
        let engine = RegressionEngine::new(&model).unwrap();
        let taus = [0.0, 0.5, 1.5, 4.0];
        let sigma = 10f64.to_radians();
        let mut det = DetectionChain::new(0.1, 0.1, 0.3);
        let sharp = theory_g15(&engine, &det, 0.8, &taus).unwrap();
        det.phase_jitter_sigma = sigma;
        let blurred = theory_g15(&engine, &det, 0.8, &taus).unwrap();
        let factor = (-sigma * sigma / 2.0).exp();
        for (a, b) in sharp.values.iter().zip(&blurred.values) {
            assert!((a * factor - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn extraction_inverts_composition(
            v in 0.01f64..0.99,
            r in 0.0f64..=1.0,
            g2 in proptest::collection::vec(0.0f64..3.0, 8),
            a in proptest::collection::vec(-2.0f64..2.0, 8),
            b in proptest::collection::vec(-2.0f64..2.0, 8),
        ) {
            let g2 = curve(g2);
            let at = |phi: f64| {
                let vals = a.iter().zip(&b).map(|(x, y)| x * phi.cos() + y * phi.sin()).collect();
                curve(vals)
            };
            let gt0 = compose_gtotal(&g2, &at(0.0), v, r).unwrap();
            let gt2 = compose_gtotal(&g2, &at(PI / 2.0), v, r).unwrap();
            let gtp = compose_gtotal(&g2, &at(PI), v, r).unwrap();
            let i = extract_inphase(&gt0, &gtp, v).unwrap();
            let q = extract_quadrature(&gt0, &gt2, &gtp, v).unwrap();
            for k in 0..8 {
                prop_assert!((i.values[k] - a[k]).abs() < 1e-12);
                prop_assert!((q.values[k] - b[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn visibility_and_ratio_bounded_and_start_independent(
            g1 in 0.0f64..1e7, g2 in 0.0f64..1e7, e in 0.0f64..1e4,
            n in 1e-4f64..0.5, frac in 0.0f64..1.0, c in 0.1f64..10.0,
        ) {
            prop_assume!(g2 > 0.0 || e > 0.0);
            // |<σ>|² <= n (1 - n) bounds the dipole of any state
            let q = 2.0 * frac * (n * (1.0 - n)).sqrt();
            let d = derive_from_moments(&DetectionChain::new(g1, g2, e), n, q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d.visibility));
            prop_assert!((0.0..=1.0).contains(&d.ratio));
            let scaled = derive_from_moments(&DetectionChain::new(c * g1, g2, e), n, q).unwrap();
            prop_assert_eq!(d.visibility, scaled.visibility);
            prop_assert_eq!(d.ratio, scaled.ratio);
        }
    }
}
