//! Quantum-jump synthesis of start and homodyne-stop click streams.
//!
//! The atom's detected transition is split into three jump channels: the
//! start detector `sqrt(γ1) σ`, the stop detector `E e^{iΦ} + sqrt(γ2) σ'`
//! (the LO enters as a c-number amplitude) and an unmonitored remainder.
//! All other decay components are unmonitored as well. Mixing the LO into a
//! jump operator would add the commutator `½[E* c - E c†, ρ]` to the
//! unconditional dynamics; the trajectory Hamiltonian carries the opposite
//! term, so the ensemble follows the bare master equation exactly.
//!
//! Time is integer "ticks": one tag quantum divided by `2^TICK_SHIFT`.
//! Waiting times are located by binary search on the (monotone) norm of the
//! unnormalized state, using precomputed propagators for power-of-two tick
//! counts, so a jump time is exact to one tick (~1.5e-18 s at 100 ps tags).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atom::{proportionality, AtomModel};
use crate::error::{invalid, Error, Result};
use crate::homodyne::DetectionChain;
use crate::liouville::{hermitian_part, steady_state, DensityOperator, Liouvillian, RegressionEngine};
use crate::CMatrix;

pub const DEFAULT_QUANTIZATION_PS: u32 = 100;
pub const TICK_SHIFT: u32 = 26;
const TICKS_PER_TAG: u64 = 1 << TICK_SHIFT;
/// Largest propagator covers `2^20` tag quanta (~0.1 ms at 100 ps).
const GALLOP_LEVELS_ABOVE_TAG: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Start = 0,
    Stop = 1,
}

impl Channel {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Start),
            1 => Some(Channel::Stop),
            _ => None,
        }
    }
}

/// Sorted detector time tags in units of `quantization_ps`.
///
/// Tags are non-decreasing: two clicks quantized into the same 100 ps slot
/// are both kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickStream {
    pub channel: Channel,
    pub quantization_ps: u32,
    /// Acquisition length in tag units; every tag is smaller.
    pub duration: u64,
    pub seed: u64,
    pub tags: Vec<u64>,
}

impl ClickStream {
    pub fn quantum_seconds(&self) -> f64 {
        f64::from(self.quantization_ps) * 1e-12
    }

    pub fn duration_seconds(&self) -> f64 {
        self.duration as f64 * self.quantum_seconds()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Mean click rate in s^-1.
    pub fn rate(&self) -> f64 {
        self.tags.len() as f64 / self.duration_seconds()
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantization_ps == 0 {
            return Err(Error::Stream("zero quantization".into()));
        }
        if let Some(i) = self.tags.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Stream(format!("tags not sorted at index {}", i + 1)));
        }
        if self.tags.last().is_some_and(|&t| t >= self.duration) {
            return Err(Error::Stream("tag beyond acquisition duration".into()));
        }
        Ok(())
    }
}

/// What a jump channel corresponds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Start,
    Stop,
    Loss,
}

/// The monitored/unmonitored decomposition of the atom's dissipation.
#[derive(Debug, Clone)]
pub struct UnravelingSpec {
    pub hamiltonian: CMatrix,
    /// `H_comp = (i/2)(α c† - α* c)` with `α = E e^{iΦ}`, `c = sqrt(γ2) σ'`.
    pub compensation: CMatrix,
    pub start: CMatrix,
    pub stop_atom: CMatrix,
    pub lo: Complex64,
    pub losses: Vec<CMatrix>,
}

impl UnravelingSpec {
    /// Build the unraveling for LO phase `phi` (relative to the dipole
    /// phase of the steady state).
    pub fn new(model: &AtomModel, detection: &DetectionChain, dipole_phase: f64, phi: f64) -> Result<Self> {
        detection.validate()?;
        let det_index = model
            .channels
            .iter()
            .position(|ch| proportionality(&ch.lowering, &model.sigma_det).is_some())
            .ok_or_else(|| invalid("sigma_det", "no decay channel radiates on the detected transition"))?;
        let det_channel = &model.channels[det_index];
        let scale = proportionality(&det_channel.lowering, &model.sigma_det).unwrap();
        let available = det_channel.rate * scale.norm_sqr();
        let requested = detection.gamma1 + detection.gamma2;
        if requested > available * (1.0 + 1e-12) {
            return Err(Error::DetectionBudget { requested, available });
        }
        let sigma = &model.sigma_det;
        let c = |x: f64| Complex64::from(x);
        let start = sigma * c(detection.gamma1.sqrt());
        let stop_atom = sigma * Complex64::from_polar(detection.gamma2.sqrt(), -dipole_phase);
        let lo = Complex64::from_polar(detection.lo_amplitude, phi);
        let i_half = Complex64::new(0.0, 0.5);
        let compensation = (stop_atom.adjoint() * lo - &stop_atom * lo.conj()) * i_half;

        let mut losses: Vec<CMatrix> = Vec::new();
        for (k, ch) in model.channels.iter().enumerate() {
            if k == det_index {
                let remaining = (available - requested).max(0.0);
                if remaining > 1e-12 * available {
                    losses.push(sigma * c(remaining.sqrt()));
                }
            } else if ch.rate > 0.0 {
                losses.push(ch.collapse_operator());
            }
        }
        Ok(UnravelingSpec {
            hamiltonian: model.hamiltonian.clone(),
            compensation,
            start,
            stop_atom,
            lo,
            losses,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn stop_operator(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim()) * self.lo + &self.stop_atom
    }

    pub fn jump_operators(&self) -> Vec<(JumpKind, CMatrix)> {
        let mut ops = vec![(JumpKind::Start, self.start.clone()), (JumpKind::Stop, self.stop_operator())];
        ops.extend(self.losses.iter().map(|l| (JumpKind::Loss, l.clone())));
        ops
    }

    pub fn trajectory_hamiltonian(&self) -> CMatrix {
        &self.hamiltonian + &self.compensation
    }

    /// `H_traj - (i/2) Σ J†J`.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        let mut decay = CMatrix::zeros(self.dim(), self.dim());
        for (_, j) in self.jump_operators() {
            decay += j.adjoint() * &j;
        }
        self.trajectory_hamiltonian() - decay * Complex64::new(0.0, 0.5)
    }

    /// Master-equation generator obtained by averaging over trajectories.
    pub fn unconditional_liouvillian(&self) -> Result<Liouvillian> {
        let ops: Vec<CMatrix> = self.jump_operators().into_iter().map(|(_, j)| j).collect();
        Liouvillian::from_parts(&self.trajectory_hamiltonian(), &ops)
    }
}

/// Small dense operator stored column-major for allocation-free
/// matrix-vector products in the trajectory inner loop.
#[derive(Debug, Clone)]
struct DenseOp {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseOp {
    fn from_matrix(m: &CMatrix) -> Self {
        DenseOp {
            dim: m.nrows(),
            // Long-time propagators decay below the normal range; subnormal
            // operands are very slow and carry no information.
            data: m
                .iter()
                .map(|z| Complex64::new(flush(z.re), flush(z.im)))
                .collect(),
        }
    }

    /// `y = A x`, returning `|y|²`.
    #[inline]
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) -> f64 {
        y.fill(Complex64::new(0.0, 0.0));
        for (col, &xj) in self.data.chunks_exact(self.dim).zip(x) {
            if xj.re == 0.0 && xj.im == 0.0 {
                continue;
            }
            for (yi, a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
        y.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Propagators `exp(-i H_eff 2^j tick)` and jump operators ready for
/// simulation.
#[derive(Debug, Clone)]
pub struct CompiledUnraveling {
    jumps: Vec<(JumpKind, DenseOp)>,
    levels: Vec<DenseOp>,
    coarse: usize,
    tick_seconds: f64,
}

impl CompiledUnraveling {
    pub fn new(spec: &UnravelingSpec, quantization_ps: u32) -> Result<Self> {
        if quantization_ps == 0 {
            return Err(invalid("quantization_ps", "must be positive"));
        }
        let tick_seconds = f64::from(quantization_ps) * 1e-12 / TICKS_PER_TAG as f64;
        let jumps = spec.jump_operators();
        let rate_bound: f64 = jumps.iter().map(|(_, j)| j.norm_squared()).sum();
        // Propagation is exact at every level, so the step size only
        // trades search cost: start near a 1-in-4 jump chance per step and
        // gallop upwards while the atom stays dark.
        let target = 0.25 / rate_bound.max(1.0);
        let mut coarse = 0usize;
        while coarse < 62 && (tick_seconds * (1u64 << (coarse + 1)) as f64) <= target {
            coarse += 1;
        }
        let top = coarse.max(TICK_SHIFT as usize + GALLOP_LEVELS_ABOVE_TAG).min(62);
        let h_eff = spec.effective_hamiltonian();
        let minus_i = Complex64::new(0.0, -1.0);
        let levels = (0..=top)
            .map(|j| DenseOp::from_matrix(&(&h_eff * (minus_i * tick_seconds * (1u64 << j) as f64)).exp()))
            .collect();
        Ok(CompiledUnraveling {
            jumps: jumps.iter().map(|(k, m)| (*k, DenseOp::from_matrix(m))).collect(),
            levels,
            coarse,
            tick_seconds,
        })
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_seconds
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim
    }
}

/// One conditional pure-state trajectory.
pub struct Trajectory<'a> {
    compiled: &'a CompiledUnraveling,
    /// Unnormalized state; its squared norm is the survival probability
    /// since the last jump.
    psi: Vec<Complex64>,
    scratch: Vec<Complex64>,
    weights: Vec<f64>,
    threshold: f64,
    ticks: u64,
}

impl<'a> Trajectory<'a> {
    pub fn new<R: Rng>(compiled: &'a CompiledUnraveling, psi0: DVector<Complex64>, rng: &mut R) -> Self {
        let norm = psi0.norm();
        Trajectory {
            compiled,
            psi: psi0.iter().map(|z| z / norm).collect(),
            scratch: vec![Complex64::new(0.0, 0.0); psi0.len()],
            weights: vec![0.0; compiled.jumps.len()],
            threshold: uniform_open(rng),
            ticks: 0,
        }
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Normalized conditional state.
    pub fn state(&self) -> DVector<Complex64> {
        let v = DVector::from_column_slice(&self.psi);
        let n = v.norm();
        v / Complex64::from(n)
    }

    /// Populations of the normalized conditional state.
    pub fn populations(&self) -> Vec<f64> {
        let n: f64 = self.psi.iter().map(|z| z.norm_sqr()).sum();
        self.psi.iter().map(|z| z.norm_sqr() / n).collect()
    }

    #[inline]
    fn try_step(&mut self, level: usize) -> bool {
        let survival = self.compiled.levels[level].apply(&self.psi, &mut self.scratch);
        if survival > self.threshold {
            std::mem::swap(&mut self.psi, &mut self.scratch);
            self.ticks += 1u64 << level;
            true
        } else {
            false
        }
    }

    /// Evolve until `end` ticks, reporting every jump as `(kind, tick)`.
    pub fn run_until<R: Rng, F: FnMut(JumpKind, u64)>(&mut self, end: u64, rng: &mut R, mut on_jump: F) {
        let top = self.compiled.levels.len() - 1;
        let mut level = self.compiled.coarse;
        while self.ticks < end {
            let fit = 63 - (end - self.ticks).leading_zeros() as usize;
            let step = level.min(fit);
            if self.try_step(step) {
                level = (level + 1).min(top);
                continue;
            }
            // The survival crosses the threshold within the next 2^step
            // ticks; binary search for the last tick above it.
            for j in (0..step).rev() {
                self.try_step(j);
            }
            self.compiled.levels[0].apply(&self.psi, &mut self.scratch);
            std::mem::swap(&mut self.psi, &mut self.scratch);
            self.ticks += 1;
            let kind = self.jump(rng);
            on_jump(kind, self.ticks);
            level = self.compiled.coarse;
        }
    }

    fn jump<R: Rng>(&mut self, rng: &mut R) -> JumpKind {
        let mut total = 0.0;
        for ((_, op), w) in self.compiled.jumps.iter().zip(self.weights.iter_mut()) {
            *w = op.apply(&self.psi, &mut self.scratch);
            total += *w;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            if pick < *w {
                chosen = k;
                break;
            }
            pick -= w;
        }
        let (kind, op) = &self.compiled.jumps[chosen];
        let norm = op.apply(&self.psi, &mut self.scratch).sqrt();
        for (p, s) in self.psi.iter_mut().zip(&self.scratch) {
            *p = s / norm;
        }
        self.threshold = uniform_open(rng);
        *kind
    }
}

fn uniform_open<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Samples pure states whose ensemble is a given density operator.
#[derive(Debug, Clone)]
pub struct StateSampler {
    weights: Vec<f64>,
    vectors: Vec<DVector<Complex64>>,
}

impl StateSampler {
    pub fn new(rho: &DensityOperator) -> Self {
        let eig = hermitian_part(rho.matrix()).symmetric_eigen();
        let mut weights = Vec::new();
        let mut vectors = Vec::new();
        for (k, &w) in eig.eigenvalues.iter().enumerate() {
            if w > 0.0 {
                weights.push(w);
                vectors.push(eig.eigenvectors.column(k).into_owned());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        StateSampler { weights, vectors }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<Complex64> {
        let mut u: f64 = rng.random();
        for (w, v) in self.weights.iter().zip(&self.vectors) {
            if u < *w {
                return v.clone();
            }
            u -= w;
        }
        self.vectors.last().expect("non-empty spectrum").clone()
    }
}

/// Knobs of the synthesis that are not physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    #[serde(default = "default_quantization")]
    pub quantization_ps: u32,
    /// Length of the independently seeded segments the acquisition is
    /// split into (seconds). Each segment starts from a state sampled from
    /// the steady state; segments run in parallel.
    #[serde(default = "default_segment")]
    pub segment_seconds: f64,
}

fn default_quantization() -> u32 {
    DEFAULT_QUANTIZATION_PS
}

fn default_segment() -> f64 {
    10e-3
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            quantization_ps: DEFAULT_QUANTIZATION_PS,
            segment_seconds: default_segment(),
        }
    }
}

/// Independent RNG stream `stream` of the master `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const DARK_STREAM_BASE: u64 = u64::MAX - 4;
const ACQUISITION_STREAM_BASE: u64 = 1 << 63;

/// Seed of the `index`-th independent acquisition under a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    rng_stream(master, ACQUISITION_STREAM_BASE + index).random()
}

/// Synthesize start and stop click streams for one LO phase setting
/// (`detection.lo_phase`).
pub fn synthesize(model: &AtomModel, detection: &DetectionChain, duration: f64, seed: u64) -> Result<(ClickStream, ClickStream)> {
    synthesize_with(model, detection, duration, seed, &SynthesisOptions::default())
}

pub fn synthesize_with(
    model: &AtomModel,
    detection: &DetectionChain,
    duration: f64,
    seed: u64,
    options: &SynthesisOptions,
) -> Result<(ClickStream, ClickStream)> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(invalid("duration", "must be positive"));
    }
    if !(options.segment_seconds > 0.0) {
        return Err(invalid("segment_seconds", "must be positive"));
    }
    detection.validate()?;
    let (rho_ss, dipole_phase) = stationary(model)?;
    let sampler = StateSampler::new(&rho_ss);

    let q = options.quantization_ps;
    let quantum = f64::from(q) * 1e-12;
    let total_tags = (duration / quantum).round() as u64;
    if total_tags == 0 {
        return Err(invalid("duration", "shorter than one tag quantum"));
    }
    let seg_tags = ((options.segment_seconds / quantum).round() as u64).clamp(1, 100_000_000_000);
    let n_segments = total_tags.div_ceil(seg_tags);

    // Without jitter every segment shares one set of propagators.
    let shared = if detection.phase_jitter_sigma == 0.0 {
        let spec = UnravelingSpec::new(model, detection, dipole_phase, detection.lo_phase)?;
        Some(Arc::new(CompiledUnraveling::new(&spec, q)?))
    } else {
        // Validate the budget once up front.
        UnravelingSpec::new(model, detection, dipole_phase, detection.lo_phase)?;
        None
    };

    let segments: Vec<Result<(Vec<u64>, Vec<u64>)>> = (0..n_segments)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(seed, i);
            let compiled = match &shared {
                Some(c) => Arc::clone(c),
                None => {
                    let phase = Normal::new(detection.lo_phase, detection.phase_jitter_sigma)
                        .map_err(|e| Error::Numerical(e.to_string()))?
                        .sample(&mut rng);
                    let spec = UnravelingSpec::new(model, detection, dipole_phase, phase)?;
                    Arc::new(CompiledUnraveling::new(&spec, q)?)
                }
            };
            let offset = i * seg_tags;
            let len = seg_tags.min(total_tags - offset);
            let psi0 = sampler.sample(&mut rng);
            let mut traj = Trajectory::new(&compiled, psi0, &mut rng);
            let (mut starts, mut stops) = (Vec::new(), Vec::new());
            traj.run_until(len << TICK_SHIFT, &mut rng, |kind, tick| {
                let tag = offset + (tick >> TICK_SHIFT);
                if tag >= offset + len {
                    return;
                }
                match kind {
                    JumpKind::Start => starts.push(tag),
                    JumpKind::Stop => stops.push(tag),
                    JumpKind::Loss => {}
                }
            });
            Ok((starts, stops))
        })
        .collect();

    let mut start_tags = Vec::new();
    let mut stop_tags = Vec::new();
    for seg in segments {
        let (s, t) = seg?;
        start_tags.extend(s);
        stop_tags.extend(t);
    }

    let dark_start = poisson_tags(detection.dark_rate_start, total_tags, quantum, &mut rng_stream(seed, DARK_STREAM_BASE))?;
    let dark_stop = poisson_tags(detection.dark_rate_stop, total_tags, quantum, &mut rng_stream(seed, DARK_STREAM_BASE + 1))?;
    let dead = (detection.dead_time / quantum).ceil() as u64;
    let finish = |channel, tags: Vec<u64>, dark: Vec<u64>| ClickStream {
        channel,
        quantization_ps: q,
        duration: total_tags,
        seed,
        tags: apply_dead_time(merge_sorted(&tags, &dark), dead),
    };
    Ok((
        finish(Channel::Start, start_tags, dark_start),
        finish(Channel::Stop, stop_tags, dark_stop),
    ))
}

/// Steady state and the phase of the detected dipole (zero when the
/// dipole vanishes, e.g. for an undriven atom).
fn stationary(model: &AtomModel) -> Result<(DensityOperator, f64)> {
    let rho_ss = steady_state(&Liouvillian::new(model)?)?;
    let phase = rho_ss.expectation(&model.sigma_det).arg();
    Ok((rho_ss, phase))
}

/// Homogeneous Poisson process of `rate` over `[0, total_tags)`, quantized.
pub fn poisson_tags<R: Rng>(rate: f64, total_tags: u64, quantum: f64, rng: &mut R) -> Result<Vec<u64>> {
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    let exp = Exp::new(rate).map_err(|e| invalid("rate", e.to_string()))?;
    let end = total_tags as f64 * quantum;
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += exp.sample(rng);
        if t >= end {
            break;
        }
        out.push(((t / quantum).floor() as u64).min(total_tags - 1));
    }
    Ok(out)
}

pub fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Non-paralyzable dead time: drop clicks closer than `dead` tags to the
/// last kept click.
pub fn apply_dead_time(tags: Vec<u64>, dead: u64) -> Vec<u64> {
    if dead == 0 {
        return tags;
    }
    let mut out = Vec::with_capacity(tags.len());
    for t in tags {
        if out.last().is_none_or(|&last: &u64| t - last >= dead) {
            out.push(t);
        }
    }
    out
}

/// Mean and standard error of the conditional-state populations over
/// `n_trajectories` runs started from steady-state samples, at each
/// checkpoint time (seconds).
pub fn ensemble_populations(
    model: &AtomModel,
    spec: &UnravelingSpec,
    checkpoints: &[f64],
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let (rho_ss, _) = stationary(model)?;
    let sampler = StateSampler::new(&rho_ss);
    let compiled = CompiledUnraveling::new(spec, DEFAULT_QUANTIZATION_PS)?;
    let ticks: Vec<u64> = checkpoints
        .iter()
        .map(|t| (t / compiled.tick_seconds()).round() as u64)
        .collect();
    if ticks.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("checkpoints", "must be ascending"));
    }
    let dim = model.dim();
    let runs: Vec<Vec<Vec<f64>>> = (0..n_trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(seed, i);
            let mut traj = Trajectory::new(&compiled, sampler.sample(&mut rng), &mut rng);
            ticks
                .iter()
                .map(|&t| {
                    traj.run_until(t, &mut rng, |_, _| {});
                    traj.populations()
                })
                .collect()
        })
        .collect();
    let n = n_trajectories as f64;
    Ok((0..checkpoints.len())
        .map(|c| {
            (0..dim)
                .map(|k| {
                    let mean = runs.iter().map(|r| r[c][k]).sum::<f64>() / n;
                    let var = runs.iter().map(|r| (r[c][k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    (mean, (var / n).sqrt())
                })
                .collect()
        })
        .collect())
}

/// Expected stop-channel click rate:
/// `E² + E sqrt(γ2) 2|<σ>| cos Φ + γ2 <σ+σ-> + dark`.
pub fn expected_stop_rate(engine: &RegressionEngine, detection: &DetectionChain) -> f64 {
    let m = engine.moments();
    let e = detection.lo_amplitude;
    let jitter = (-detection.phase_jitter_sigma.powi(2) / 2.0).exp();
    e * e
        + e * detection.gamma2.sqrt() * m.quadrature_sum() * detection.lo_phase.cos() * jitter
        + detection.gamma2 * m.excited
        + detection.dark_rate_stop
}

/// Expected start-channel click rate `γ1 <σ+σ-> + dark`.
pub fn expected_start_rate(engine: &RegressionEngine, detection: &DetectionChain) -> f64 {
    detection.gamma1 * engine.moments().excited + detection.dark_rate_start
}

/// Wrap into `(-π, π]`.
pub fn principal_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
