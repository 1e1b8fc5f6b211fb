//! End-to-end analysis: theory curve sets and the data reduction from
//! per-phase histograms to extracted `g15_0`, `g15_{π/2}`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::correlator::{
    calibrate_phases, estimate_visibility_with_error, normalize, normalize_with, quantized_bin_expectation,
    transfer_normalizer, Histogram, Layout, PhaseAssignment, TailWindow,
};
use crate::error::{Error, Result};
use crate::homodyne::{derive, extract_inphase, extract_quadrature, theory_g15, theory_gtotal, DetectionChain, HomodyneDerived};
use crate::liouville::{CorrelationCurve, PhaseReference, RegressionEngine};

/// Theory curves for a list of LO phases on one delay grid.
#[derive(Debug, Clone)]
pub struct TheorySet {
    pub derived: HomodyneDerived,
    pub g2: CorrelationCurve,
    /// `(phase, g15_Φ, g_total_Φ)` per requested phase.
    pub phases: Vec<(f64, CorrelationCurve, CorrelationCurve)>,
}

pub fn theory_set(engine: &RegressionEngine, detection: &DetectionChain, phases: &[f64], taus: &[f64]) -> Result<TheorySet> {
    let derived = derive(detection, engine.steady_state(), &engine.reference_sigma(PhaseReference::Dipole))?;
    let g2 = engine.g2(taus)?;
    let phases = phases
        .iter()
        .map(|&phi| {
            let det = detection.with_phase(phi);
            let g15 = theory_g15(engine, &det, phi, taus)?;
            let (gt, _) = theory_gtotal(engine, &det, phi, taus)?;
            Ok((phi, g15, gt))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TheorySet { derived, g2, phases })
}

/// Expected normalized `g_total_Φ` per histogram bin, including the
/// smearing by tag quantization.
pub fn expected_gtotal_bins(
    engine: &RegressionEngine,
    detection: &DetectionChain,
    phi: f64,
    quantum: f64,
    layout: Layout,
) -> Result<Vec<f64>> {
    let det = detection.with_phase(phi);
    quantized_bin_expectation(|t| Ok(theory_gtotal(engine, &det, phi, t)?.0.values), quantum, layout, 8)
}

/// Expected `g15_Φ` per histogram bin, including quantization smearing.
pub fn expected_g15_bins(
    engine: &RegressionEngine,
    detection: &DetectionChain,
    phi: f64,
    quantum: f64,
    layout: Layout,
) -> Result<Vec<f64>> {
    let det = detection.with_phase(phi);
    quantized_bin_expectation(|t| Ok(theory_g15(engine, &det, phi, t)?.values), quantum, layout, 8)
}

/// One acquisition at a nominal LO phase.
#[derive(Debug, Clone)]
pub struct PhaseRun {
    pub label: String,
    pub nominal_phase: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Everything the data reduction produces.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub assignment: PhaseAssignment,
    /// Index of the run closest to `Φ = π/2`, normalized by its own tail.
    pub reference: usize,
    pub reference_normalizer: f64,
    /// Normalized `g_total` per run, in input order, tagged with the
    /// calibrated phase.
    pub gtotal: Vec<CorrelationCurve>,
    pub visibility: VisibilityEstimate,
    pub g15_inphase: CorrelationCurve,
    pub g15_quadrature: CorrelationCurve,
}

/// Indices of the runs calibrated to `0`, `π/2` and `π`.
fn pick_triplet(assignment: &PhaseAssignment) -> Result<(usize, usize, usize)> {
    let i0 = assignment.closest(0.0);
    let ipi = assignment.closest(std::f64::consts::PI);
    let ih = assignment.closest(FRAC_PI_2);
    let off = (assignment.entries[ih].assigned_phase - FRAC_PI_2).abs();
    if ih == i0 || ih == ipi || off > FRAC_PI_4 {
        return Err(Error::Calibration(format!(
            "no acquisition calibrates near π/2 (closest {:.3} rad)",
            assignment.entries[ih].assigned_phase
        )));
    }
    Ok((i0, ih, ipi))
}

fn require_three(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Statistics(format!(
            "missing phases: quadrature extraction needs three LO phase settings, got {n}"
        )));
    }
    Ok(())
}

/// Calibrate phases, normalize, estimate `V` and extract both `g15`
/// components from a set of per-phase histograms.
pub fn analyze_runs(runs: &[PhaseRun], tail: TailWindow) -> Result<AnalysisOutput> {
    require_three(runs.len())?;
    let rates = runs
        .iter()
        .map(|r| Ok((r.label.clone(), r.nominal_phase, r.histogram.per_start_rate()?)))
        .collect::<Result<Vec<_>>>()?;
    let assignment = calibrate_phases(&rates, tail)?;
    let (i0, ih, ipi) = pick_triplet(&assignment)?;

    let (_, ref_norm) = normalize(&runs[ih].histogram, tail)?;
    let reference = &runs[ih].histogram;
    let gtotal: Vec<CorrelationCurve> = runs
        .iter()
        .zip(&assignment.entries)
        .map(|(r, e)| {
            let norm = transfer_normalizer(reference, ref_norm, &r.histogram);
            let mut c = normalize_with(&r.histogram, norm);
            c.phase = Some(e.assigned_phase);
            c
        })
        .collect();

    let a0 = tail.mean(&gtotal[i0])?;
    let api = tail.mean(&gtotal[ipi])?;
    let (v, v_err) = estimate_visibility_with_error(a0, api)?;
    if !(v > 0.0) {
        return Err(Error::Statistics("estimated visibility is zero; extraction undefined".into()));
    }
    let g15_inphase = extract_inphase(&gtotal[i0], &gtotal[ipi], v)?;
    let g15_quadrature = extract_quadrature(&gtotal[i0], &gtotal[ih], &gtotal[ipi], v)?;
    Ok(AnalysisOutput {
        assignment,
        reference: ih,
        reference_normalizer: ref_norm,
        gtotal,
        visibility: VisibilityEstimate { value: v, stderr: v_err },
        g15_inphase,
        g15_quadrature,
    })
}

/// Extraction from already normalized curves (e.g. theory output) with a
/// known visibility. Returns the phase assignment and both components.
pub fn extract_from_curves(
    curves: &[(String, Option<f64>, CorrelationCurve)],
    visibility: f64,
    tail: TailWindow,
) -> Result<(PhaseAssignment, CorrelationCurve, CorrelationCurve)> {
    require_three(curves.len())?;
    let assignment = calibrate_phases(curves, tail)?;
    let (i0, ih, ipi) = pick_triplet(&assignment)?;
    let inphase = extract_inphase(&curves[i0].2, &curves[ipi].2, visibility)?;
    let quadrature = extract_quadrature(&curves[i0].2, &curves[ih].2, &curves[ipi].2, visibility)?;
    Ok((assignment, inphase, quadrature))
}

/// Per-bin comparison of a measured curve with an expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub bins: usize,
    pub chi2: f64,
    pub max_abs_z: f64,
    /// Bins deviating by more than four standard errors.
    pub outliers_4sigma: usize,
}

/// Compare `curve` with `expected`, skipping bins with zero error.
pub fn agreement(curve: &CorrelationCurve, expected: &[f64]) -> Agreement {
    let mut a = Agreement {
        bins: 0,
        chi2: 0.0,
        max_abs_z: 0.0,
        outliers_4sigma: 0,
    };
    for ((v, e), x) in curve.values.iter().zip(&curve.stderr).zip(expected) {
        if *e > 0.0 {
            let z = (v - x) / e;
            a.bins += 1;
            a.chi2 += z * z;
            a.max_abs_z = a.max_abs_z.max(z.abs());
            if z.abs() > 4.0 {
                a.outliers_4sigma += 1;
            }
        }
    }
    a
}
