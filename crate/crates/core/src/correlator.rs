//! Start–stop coincidence histogramming and the analysis steps that turn
//! histograms into normalized correlation curves.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::liouville::{CorrelationCurve, CurveKind};
use crate::trajectory::ClickStream;

/// Delay histogram of stop clicks following start clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub quantization_ps: u32,
    /// Bin width in tag units.
    pub bin_tags: u64,
    pub counts: Vec<u64>,
    pub n_starts: u64,
    pub n_stops: u64,
    /// Acquisition length in seconds.
    pub duration: f64,
}

impl Histogram {
    pub fn empty(quantization_ps: u32, bin_tags: u64, n_bins: usize) -> Self {
        Histogram {
            quantization_ps,
            bin_tags,
            counts: vec![0; n_bins],
            n_starts: 0,
            n_stops: 0,
            duration: 0.0,
        }
    }

    pub fn quantum_seconds(&self) -> f64 {
        f64::from(self.quantization_ps) * 1e-12
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_tags as f64 * self.quantum_seconds()
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn tau_max(&self) -> f64 {
        self.n_bins() as f64 * self.bin_width()
    }

    /// Left bin edges in seconds.
    pub fn tau(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.n_bins()).map(|k| k as f64 * w).collect()
    }

    pub fn stop_rate(&self) -> f64 {
        self.n_stops as f64 / self.duration
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add another partial histogram with the same layout.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.bin_tags != self.bin_tags
            || other.quantization_ps != self.quantization_ps
            || other.counts.len() != self.counts.len()
        {
            return Err(Error::Stream("histogram layouts differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_starts += other.n_starts;
        self.n_stops += other.n_stops;
        self.duration += other.duration;
        Ok(())
    }

    /// Coincidences per start per second of delay, i.e. the conditional
    /// stop rate, with Poisson errors.
    pub fn per_start_rate(&self) -> Result<CorrelationCurve> {
        if self.n_starts == 0 {
            return Err(Error::Statistics("histogram has no start events".into()));
        }
        let scale = self.n_starts as f64 * self.bin_width();
        Ok(self.scaled(scale))
    }

    fn scaled(&self, normalizer: f64) -> CorrelationCurve {
        CorrelationCurve {
            kind: CurveKind::GTotal,
            tau: self.tau(),
            values: self.counts.iter().map(|&c| c as f64 / normalizer).collect(),
            stderr: self.counts.iter().map(|&c| (c as f64).sqrt() / normalizer).collect(),
            phase: None,
            normalizer: Some(normalizer),
        }
    }
}

/// Histogram layout derived from physical bin width and range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub bin_tags: u64,
    pub n_bins: usize,
}

impl Layout {
    pub fn new(quantization_ps: u32, bin_width: f64, tau_max: f64) -> Result<Self> {
        let q = f64::from(quantization_ps) * 1e-12;
        if !(bin_width > 0.0) || !(tau_max > 0.0) {
            return Err(invalid("bin_width", "bin width and tau_max must be positive"));
        }
        let bin_tags = (bin_width / q).round();
        if bin_tags < 1.0 || ((bin_tags * q) - bin_width).abs() > 1e-9 * bin_width {
            return Err(invalid("bin_width", "must be a whole multiple of the tag quantum"));
        }
        let n_bins = (tau_max / bin_width).round();
        if n_bins < 1.0 || (n_bins * bin_width - tau_max).abs() > 1e-9 * tau_max {
            return Err(invalid("tau_max", "must be a whole multiple of the bin width"));
        }
        Ok(Layout {
            bin_tags: bin_tags as u64,
            n_bins: n_bins as usize,
        })
    }

    pub fn window_tags(&self) -> u64 {
        self.bin_tags * self.n_bins as u64
    }
}

fn check_streams(start: &ClickStream, stop: &ClickStream) -> Result<()> {
    if start.quantization_ps != stop.quantization_ps {
        return Err(Error::Stream(format!(
            "quantization differs: start {} ps, stop {} ps",
            start.quantization_ps, stop.quantization_ps
        )));
    }
    start.validate()?;
    stop.validate()
}

/// Multi-stop accumulation of every pair with `0 <= stop - start < window`
/// into `counts`. `stops` must cover `[starts[0], starts[last] + window)`.
fn accumulate(starts: &[u64], stops: &[u64], layout: Layout, counts: &mut [u64]) {
    let window = layout.window_tags();
    let mut lo = 0usize;
    for &t in starts {
        while lo < stops.len() && stops[lo] < t {
            lo += 1;
        }
        for &s in &stops[lo..] {
            let d = s - t;
            if d >= window {
                break;
            }
            counts[(d / layout.bin_tags) as usize] += 1;
        }
    }
}

/// Multi-stop start–stop histogram: every stop in `[t, t + tau_max)` after
/// each start `t` contributes its delay.
pub fn cross_correlate(start: &ClickStream, stop: &ClickStream, bin_width: f64, tau_max: f64) -> Result<Histogram> {
    check_streams(start, stop)?;
    let layout = Layout::new(start.quantization_ps, bin_width, tau_max)?;
    let mut h = Histogram::empty(start.quantization_ps, layout.bin_tags, layout.n_bins);
    accumulate(&start.tags, &stop.tags, layout, &mut h.counts);
    h.n_starts = start.tags.len() as u64;
    h.n_stops = stop.tags.len() as u64;
    h.duration = start.duration_seconds();
    Ok(h)
}

/// Histogram of one time segment `[begin, end)` (tag units). Pairs belong
/// to the segment that holds their start tag; stop tags are read up to
/// `end + window` so segments overlap by the correlation range.
pub fn correlate_segment(start: &[u64], stop: &[u64], begin: u64, end: u64, quantization_ps: u32, layout: Layout) -> Histogram {
    let s0 = start.partition_point(|&t| t < begin);
    let s1 = start.partition_point(|&t| t < end);
    let p0 = stop.partition_point(|&t| t < begin);
    let p1 = stop.partition_point(|&t| t < end.saturating_add(layout.window_tags()));
    let p_own = stop.partition_point(|&t| t < end);
    let mut h = Histogram::empty(quantization_ps, layout.bin_tags, layout.n_bins);
    accumulate(&start[s0..s1], &stop[p0..p1], layout, &mut h.counts);
    h.n_starts = (s1 - s0) as u64;
    h.n_stops = (p_own - p0) as u64;
    h.duration = (end - begin) as f64 * f64::from(quantization_ps) * 1e-12;
    h
}

/// Parallel version of [`cross_correlate`] over `n_segments` equal time
/// slices; the merged result is identical to the single-pass histogram.
pub fn cross_correlate_parallel(
    start: &ClickStream,
    stop: &ClickStream,
    bin_width: f64,
    tau_max: f64,
    n_segments: usize,
) -> Result<Histogram> {
    check_streams(start, stop)?;
    let layout = Layout::new(start.quantization_ps, bin_width, tau_max)?;
    let n = n_segments.max(1) as u64;
    let span = start.duration.div_ceil(n).max(1);
    let parts: Vec<Histogram> = (0..n)
        .into_par_iter()
        .map(|i| {
            let begin = i * span;
            let end = if i + 1 == n { u64::MAX } else { (i + 1) * span };
            correlate_segment(&start.tags, &stop.tags, begin, end, start.quantization_ps, layout)
        })
        .collect();
    let mut h = Histogram::empty(start.quantization_ps, layout.bin_tags, layout.n_bins);
    for p in &parts {
        for (a, b) in h.counts.iter_mut().zip(&p.counts) {
            *a += b;
        }
    }
    h.n_starts = start.tags.len() as u64;
    h.n_stops = stop.tags.len() as u64;
    h.duration = start.duration_seconds();
    Ok(h)
}

/// First-stop (classic TAC) histogram: only the earliest stop after each
/// start counts.
pub fn cross_correlate_first_stop(start: &ClickStream, stop: &ClickStream, bin_width: f64, tau_max: f64) -> Result<Histogram> {
    check_streams(start, stop)?;
    let layout = Layout::new(start.quantization_ps, bin_width, tau_max)?;
    let mut h = Histogram::empty(start.quantization_ps, layout.bin_tags, layout.n_bins);
    let window = layout.window_tags();
    let mut lo = 0usize;
    for &t in &start.tags {
        while lo < stop.tags.len() && stop.tags[lo] < t {
            lo += 1;
        }
        if let Some(&s) = stop.tags.get(lo) {
            if s - t < window {
                h.counts[((s - t) / layout.bin_tags) as usize] += 1;
            }
        }
    }
    h.n_starts = start.tags.len() as u64;
    h.n_stops = stop.tags.len() as u64;
    h.duration = start.duration_seconds();
    Ok(h)
}

/// Delay window used to read off asymptotic values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    pub lo: f64,
    pub hi: f64,
}

impl TailWindow {
    /// Last quarter of `[0, tau_max)`.
    pub fn default_for(tau_max: f64) -> Self {
        TailWindow {
            lo: 0.75 * tau_max,
            hi: tau_max,
        }
    }

    fn bins(&self, curve: &CorrelationCurve) -> Vec<usize> {
        curve
            .tau
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= self.lo && t < self.hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Mean value over the window and its standard error.
    pub fn mean(&self, curve: &CorrelationCurve) -> Result<(f64, f64)> {
        let bins = self.bins(curve);
        if bins.is_empty() {
            return Err(Error::Statistics(format!(
                "tail window [{:.3e}, {:.3e}) s holds no bins",
                self.lo, self.hi
            )));
        }
        let n = bins.len() as f64;
        let mean = bins.iter().map(|&i| curve.values[i]).sum::<f64>() / n;
        let err = bins.iter().map(|&i| curve.stderr[i].powi(2)).sum::<f64>().sqrt() / n;
        Ok((mean, err))
    }
}

/// Divide a histogram by its tail mean so the asymptote is 1. Returns the
/// curve and the normalizer (mean tail count).
pub fn normalize(h: &Histogram, tail: TailWindow) -> Result<(CorrelationCurve, f64)> {
    if tail.lo < 0.0 || tail.hi > h.tau_max() * (1.0 + 1e-12) || tail.hi <= tail.lo {
        return Err(Error::Statistics("tail window outside histogram range".into()));
    }
    let raw = h.scaled(1.0);
    let (mean, _) = tail.mean(&raw)?;
    if !(mean > 0.0) {
        return Err(Error::Statistics("empty tail window: no coincidences to normalize by".into()));
    }
    Ok((normalize_with(h, mean), mean))
}

/// Divide a histogram by an externally determined normalizer.
pub fn normalize_with(h: &Histogram, normalizer: f64) -> CorrelationCurve {
    h.scaled(normalizer)
}

/// Carry a normalizer obtained on `reference` over to `target` by scaling
/// with the number of start events (the uninterfered stop flux being the
/// same in both acquisitions).
pub fn transfer_normalizer(reference: &Histogram, reference_normalizer: f64, target: &Histogram) -> f64 {
    reference_normalizer * target.n_starts as f64 / reference.n_starts as f64
        * target.bin_tags as f64
        / reference.bin_tags as f64
}

/// Outcome of LO phase calibration for one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignmentEntry {
    pub label: String,
    pub labelled_phase: Option<f64>,
    pub asymptote: f64,
    pub asymptote_err: f64,
    pub assigned_phase: f64,
    /// The nominal label disagreed with the calibrated phase by more than π/4.
    pub relabelled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignment {
    pub entries: Vec<PhaseAssignmentEntry>,
}

impl PhaseAssignment {
    /// Index of the entry whose calibrated phase is closest to `phi`.
    pub fn closest(&self, phi: f64) -> usize {
        let dist = |a: f64| (a - phi).abs();
        (0..self.entries.len())
            .min_by(|&a, &b| dist(self.entries[a].assigned_phase).total_cmp(&dist(self.entries[b].assigned_phase)))
            .expect("non-empty assignment")
    }

    pub fn any_relabelled(&self) -> bool {
        self.entries.iter().any(|e| e.relabelled)
    }
}

/// Assign LO phases from asymptotic levels: the largest asymptote is
/// `Φ = 0`, the smallest `Φ = π`, and the others follow from
/// `cos Φ = (2a - a_max - a_min) / (a_max - a_min)`.
///
/// Curves must share a common normalization (e.g. per-start rates).
pub fn calibrate_phases(curves: &[(String, Option<f64>, CorrelationCurve)], tail: TailWindow) -> Result<PhaseAssignment> {
    if curves.len() < 2 {
        return Err(Error::Calibration("need at least two LO phase settings".into()));
    }
    let asymptotes = curves
        .iter()
        .map(|(_, _, c)| tail.mean(c))
        .collect::<Result<Vec<_>>>()?;
    let (imax, &(amax, emax)) = asymptotes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .unwrap();
    let (imin, &(amin, emin)) = asymptotes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .unwrap();
    let spread = amax - amin;
    if imax == imin || spread <= 3.0 * emax.hypot(emin) {
        return Err(Error::Calibration(format!(
            "asymptotes indistinguishable: spread {spread:.4e} vs error {:.4e}",
            emax.hypot(emin)
        )));
    }
    let entries = curves
        .iter()
        .zip(&asymptotes)
        .enumerate()
        .map(|(i, ((label, nominal, _), &(a, e)))| {
            let assigned = if i == imax {
                0.0
            } else if i == imin {
                PI
            } else {
                ((2.0 * a - amax - amin) / spread).clamp(-1.0, 1.0).acos()
            };
            let relabelled = nominal.is_some_and(|p| {
                let folded = crate::trajectory::principal_angle(p).abs();
                (folded - assigned).abs() > PI / 4.0
            });
            PhaseAssignmentEntry {
                label: label.clone(),
                labelled_phase: *nominal,
                asymptote: a,
                asymptote_err: e,
                assigned_phase: assigned,
                relabelled,
            }
        })
        .collect();
    Ok(PhaseAssignment { entries })
}

/// `V = d / (2 + d)` from the difference `d` of normalized asymptotes at
/// `Φ = 0` and `Φ = π`.
pub fn estimate_visibility(asymptote_0: f64, asymptote_pi: f64) -> Result<f64> {
    let d = asymptote_0 - asymptote_pi;
    if !(d >= 0.0) {
        return Err(Error::Statistics(format!(
            "asymptote at phase 0 ({asymptote_0}) below asymptote at phase π ({asymptote_pi})"
        )));
    }
    Ok(d / (2.0 + d))
}

/// Visibility with a propagated standard error.
pub fn estimate_visibility_with_error(a0: (f64, f64), api: (f64, f64)) -> Result<(f64, f64)> {
    let v = estimate_visibility(a0.0, api.0)?;
    let d = a0.0 - api.0;
    let err = 2.0 / (2.0 + d).powi(2) * a0.1.hypot(api.1);
    Ok((v, err))
}

/// Expected normalized histogram values for a continuous correlation
/// function `g(τ)` after floor quantization of both tags.
///
/// Quantizing start and stop times independently turns a true delay `τ`
/// into an integer delay `D` with the triangular kernel
/// `P(D | τ) = max(0, 1 - |τ - D|)` (units of the tag quantum); a bin
/// collects `D = k·b .. k·b + b - 1`. The kernel reaches one quantum into
/// negative delays, where `g(|τ|)` is used. `g` is sampled at
/// `sub` midpoints per quantum.
pub fn quantized_bin_expectation<F>(mut g: F, quantum: f64, layout: Layout, sub: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let sub = sub.max(1);
    let total_quanta = layout.window_tags() as usize + 1;
    let fine: Vec<f64> = (0..total_quanta * sub)
        .map(|m| (m as f64 + 0.5) / sub as f64 * quantum)
        .collect();
    let values = g(&fine)?;
    let b = layout.bin_tags as usize;
    let h = 1.0 / sub as f64;
    let mut out = vec![0.0; layout.n_bins];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for d in k * b..(k + 1) * b {
            // Positive side: τ ∈ (d - 1, d + 1) in quanta.
            let lo = d.saturating_sub(1) * sub;
            for m in lo..(d + 1) * sub {
                let tau = (m as f64 + 0.5) * h;
                acc += (1.0 - (tau - d as f64).abs()).max(0.0) * values[m] * h;
            }
            // Negative side only reaches bin zero's first quantum.
            if d == 0 {
                for m in 0..sub {
                    let tau = -((m as f64 + 0.5) * h);
                    acc += (1.0 - tau.abs()).max(0.0) * values[m] * h;
                }
            }
        }
        *slot = acc / b as f64;
    }
    Ok(out)
}

/// Pearson χ² of observed counts against expected counts, skipping bins
/// with zero expectation. Returns `(chi2, degrees_of_freedom)`.
pub fn poisson_chi_square(observed: &[u64], expected: &[f64]) -> (f64, usize) {
    let mut chi2 = 0.0;
    let mut dof = 0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            chi2 += (o as f64 - e).powi(2) / e;
            dof += 1;
        }
    }
    (chi2, dof)
}
