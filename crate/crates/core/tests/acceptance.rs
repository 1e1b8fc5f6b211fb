//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) and exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use fluorcorr::analysis::{agreement, analyze_runs, expected_g15_bins, expected_gtotal_bins, PhaseRun};
use fluorcorr::atom::{build_two_level, AtomModel, Ba138Config};
use fluorcorr::config::{AtomSection, RunConfig};
use fluorcorr::correlator::{
    correlate_segment, cross_correlate, cross_correlate_parallel, normalize, poisson_chi_square, quantized_bin_expectation,
    Histogram, Layout, TailWindow,
};
use fluorcorr::homodyne::{compose_gtotal, derive_from_moments, extract_inphase, extract_quadrature, DetectionChain};
use fluorcorr::liouville::{
    spectral_gap, uniform_grid, CorrelationCurve, CurveKind, G15Normalization, PhaseReference, RegressionEngine,
};
use fluorcorr::trajectory::{
    derive_seed, ensemble_populations, poisson_tags, rng_stream, synthesize_with, Channel, ClickStream, SynthesisOptions,
    UnravelingSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Result<String, String>;

const BIN: f64 = 1e-9;
const TAU_MAX: f64 = 500e-9;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn chi2_p(chi2: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|d| d.sf(chi2)).unwrap_or(0.0)
}

fn two_level_config() -> RunConfig {
    RunConfig::preset("two_level").expect("two-level preset")
}

fn fig_config() -> RunConfig {
    RunConfig::preset("fig2").expect("fig2 preset")
}

fn ba_gamma(cfg: &RunConfig) -> f64 {
    match &cfg.atom {
        AtomSection::Ba138(b) => 2.0 * PI * b.gamma_p_hz,
        AtomSection::TwoLevel(t) => 2.0 * PI * t.gamma_hz,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn opts(cfg: &RunConfig) -> SynthesisOptions {
    cfg.simulation.options()
}

// ---------------------------------------------------------------------------

fn antibunching() -> Check {
    let mut notes = Vec::new();
    let tl = two_level_config();
    let ba = fig_config();
    for (name, cfg) in [("two-level", &tl), ("ba138", &ba)] {
        let engine = RegressionEngine::new(&cfg.atom.build().map_err(err)?).map_err(err)?;
        let g0 = engine.g2(&[0.0]).map_err(err)?.values[0];
        if g0.abs() >= 1e-12 {
            return Err(format!("{name}: theory g2(0) = {g0:e}"));
        }
        notes.push(format!("{name} g2(0)={g0:.1e}"));
    }

    // Intensity correlation with the LO blocked and detector dark counts at
    // 2 % of each signal rate.
    let model = tl.atom.build().map_err(err)?;
    let engine = RegressionEngine::new(&model).map_err(err)?;
    let n = engine.moments().excited;
    let mut det = tl.detection.chain(0.0);
    det.lo_amplitude = 0.0;
    let signal_start = det.gamma1 * n;
    let signal_stop = det.gamma2 * n;
    det.dark_rate_start = 0.02 * signal_start;
    det.dark_rate_stop = 0.02 * signal_stop;
    let starts_wanted = 6.0e6;
    let duration = (starts_wanted / signal_start / 0.01).ceil() * 0.01;
    let (start, stop) = synthesize_with(&model, &det, duration, 11, &opts(&tl)).map_err(err)?;
    let h = cross_correlate(&start, &stop, BIN, TAU_MAX).map_err(err)?;
    let (curve, _) = normalize(&h, TailWindow::default_for(TAU_MAX)).map_err(err)?;

    let layout = Layout::new(h.quantization_ps, BIN, TAU_MAX).map_err(err)?;
    let smeared = quantized_bin_expectation(|t| Ok(engine.g2(t)?.values), h.quantum_seconds(), layout, 8).map_err(err)?[0];
    let (s1, s2, d1, d2) = (signal_start, signal_stop, det.dark_rate_start, det.dark_rate_stop);
    let accidental = (s1 * d2 + d1 * s2 + d1 * d2) / ((s1 + d1) * (s2 + d2));
    let expected = s1 * s2 * smeared / ((s1 + d1) * (s2 + d2)) + accidental;
    let (v, e) = (curve.values[0], curve.stderr[0]);
    let z = (v - expected) / e;
    notes.push(format!(
        "MC {} starts: g2(bin0)={v:.4}±{e:.4}, expected {expected:.4} (darks {accidental:.4}, quantization {:.4}), z={z:.2}",
        h.n_starts,
        expected - accidental
    ));
    ensure(
        h.n_starts as f64 >= starts_wanted && (0.01..=0.10).contains(&v) && z.abs() < 4.0,
        notes.join("; "),
    )
}

fn phase_convention() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("two-level", two_level_config()), ("ba138", fig_config())] {
        let engine = RegressionEngine::new(&cfg.atom.build().map_err(err)?).map_err(err)?;
        let gap = spectral_gap(engine.liouvillian()).map_err(err)?;
        let tau = (20.0 / gap).max(20.0 / ba_gamma(&cfg));
        let g = |phi| -> Result<f64, String> {
            Ok(engine
                .g15(phi, &[tau], G15Normalization::ExcitedPopulation, PhaseReference::Dipole)
                .map_err(err)?
                .values[0])
        };
        let (q, i) = (g(FRAC_PI_2)?, g(0.0)?);
        ok &= q.abs() < 1e-8 && (i - 1.0).abs() <= 1e-6;
        notes.push(format!("{name} at {tau:.2e}s: g15_pi/2={q:.1e}, g15_0-1={:.1e}", i - 1.0));
    }
    ensure(ok, notes.join("; "))
}

fn random_model(rng: &mut ChaCha8Rng, k: usize) -> Result<AtomModel, String> {
    if k % 2 == 0 {
        let gamma = 2.0 * PI * rng.random_range(5e6..25e6);
        build_two_level(gamma * rng.random_range(0.1..5.0), gamma * rng.random_range(-2.0..2.0), gamma).map_err(err)
    } else {
        Ba138Config {
            green_rabi_hz: rng.random_range(3e6..30e6),
            green_detuning_hz: rng.random_range(-30e6..-2e6),
            red_rabi_hz: rng.random_range(3e6..20e6),
            red_detuning_hz: rng.random_range(-20e6..20e6),
            larmor_hz: rng.random_range(0.2e6..1.0e6),
            ..Ba138Config::example()
        }
        .build()
        .map_err(err)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn decomposition_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let taus = uniform_grid(2e-9, 150);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let model = random_model(&mut rng, k)?;
        let engine = RegressionEngine::new(&model).map_err(err)?;
        let det = DetectionChain::new(
            log_uniform(&mut rng, 1e3, 1e7),
            log_uniform(&mut rng, 1e3, 1e7),
            log_uniform(&mut rng, 1e3, 1e8).sqrt(),
        );
        let phi = rng.random_range(0.0..2.0 * PI);
        let direct = engine.gtotal_direct(&det, phi, &taus).map_err(err)?;
        let norm = direct.normalizer.ok_or("direct curve without normalizer")?;
        let direct: Vec<f64> = direct.values.iter().map(|v| v / norm).collect();
        let m = engine.moments();
        let d = derive_from_moments(&det, m.excited, m.quadrature_sum()).map_err(err)?;
        let g2 = engine.g2(&taus).map_err(err)?;
        let g15 = engine
            .g15(phi, &taus, G15Normalization::ExcitedPopulation, PhaseReference::Dipole)
            .map_err(err)?;
        let composed = compose_gtotal(&g2, &g15, d.visibility, d.ratio).map_err(err)?;
        worst = worst.max(max_abs_diff(&direct, &composed.values));
    }
    ensure(worst <= 1e-10, format!("50 parameter sets, max |direct - composed| = {worst:.2e}"))
}

fn zero_delay_offset() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("fig2", fig_config()), ("two-level", two_level_config())] {
        let engine = RegressionEngine::new(&cfg.atom.build().map_err(err)?).map_err(err)?;
        let det = cfg.detection.chain(0.0);
        let m = engine.moments();
        let d = derive_from_moments(&det, m.excited, m.quadrature_sum()).map_err(err)?;
        let g2 = engine.g2(&[0.0]).map_err(err)?;
        for phi in [0.0, FRAC_PI_2, PI] {
            let g15 = engine
                .g15(phi, &[0.0], G15Normalization::ExcitedPopulation, PhaseReference::Dipole)
                .map_err(err)?;
            let gt = compose_gtotal(&g2, &g15, d.visibility, d.ratio).map_err(err)?.values[0];
            ok &= (gt - (1.0 - d.ratio)).abs() <= 1e-12 && (gt - 0.69).abs() <= 1e-12;
        }
        notes.push(format!("{name}: r={:.15}, g_total(0)=1-r", d.ratio));
    }
    ensure(ok, notes.join("; "))
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn short_time_scaling() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("two-level", two_level_config()), ("ba138", fig_config())] {
        let engine = RegressionEngine::new(&cfg.atom.build().map_err(err)?).map_err(err)?;
        let gamma = ba_gamma(&cfg);
        let taus: Vec<f64> = (0..40)
            .map(|k| 1e-3 / gamma * (50f64).powf(k as f64 / 39.0))
            .collect();
        let s2 = slope(&taus, &engine.g2(&taus).map_err(err)?.values);
        let g15 = engine
            .g15(0.0, &taus, G15Normalization::ExcitedPopulation, PhaseReference::Dipole)
            .map_err(err)?;
        let s15 = slope(&taus, &g15.values);
        ok &= (s2 - 2.0).abs() <= 0.05 && (s15 - 1.0).abs() <= 0.05;
        notes.push(format!("{name}: g2 slope {s2:.4}, |g15_0| slope {s15:.4}"));
    }
    ensure(ok, notes.join("; "))
}

/// Conditional Bloch equations of a driven two-level atom in the basis
/// (g, e), integrated with classical RK4.
struct BlochOracle {
    rabi: f64,
    detuning: f64,
    gamma: f64,
}

type Rho = [[Complex64; 2]; 2];

impl BlochOracle {
    fn rhs(&self, r: &Rho) -> Rho {
        let i = Complex64::i();
        let half = Complex64::from(self.rabi / 2.0);
        let h: Rho = [[Complex64::from(0.0), half], [half, Complex64::from(-self.detuning)]];
        let mut out = [[Complex64::from(0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let mut comm = Complex64::from(0.0);
                for c in 0..2 {
                    comm += h[a][c] * r[c][b] - r[a][c] * h[c][b];
                }
                out[a][b] = -i * comm;
            }
        }
        let g = self.gamma;
        out[0][0] += g * r[1][1];
        out[1][1] -= g * r[1][1];
        out[0][1] -= 0.5 * g * r[0][1];
        out[1][0] -= 0.5 * g * r[1][0];
        out
    }

    fn step(&self, r: &Rho, dt: f64) -> Rho {
        let add = |a: &Rho, k: &Rho, s: f64| -> Rho {
            let mut o = *a;
            for x in 0..2 {
                for y in 0..2 {
                    o[x][y] += k[x][y] * s;
                }
            }
            o
        };
        let k1 = self.rhs(r);
        let k2 = self.rhs(&add(r, &k1, dt / 2.0));
        let k3 = self.rhs(&add(r, &k2, dt / 2.0));
        let k4 = self.rhs(&add(r, &k3, dt));
        let mut o = *r;
        for x in 0..2 {
            for y in 0..2 {
                o[x][y] += (k1[x][y] + 2.0 * k2[x][y] + 2.0 * k3[x][y] + k4[x][y]) * (dt / 6.0);
            }
        }
        o
    }

    fn excited_steady(&self) -> f64 {
        let w = self.rabi * self.rabi / 4.0;
        w / (self.detuning * self.detuning + self.gamma * self.gamma / 4.0 + 2.0 * w)
    }

    /// `g2` at multiples of `every · dt`, starting from the ground state.
    fn g2(&self, dt: f64, every: usize, points: usize) -> Vec<f64> {
        let mut r: Rho = [[Complex64::from(0.0); 2]; 2];
        r[0][0] = Complex64::from(1.0);
        let n = self.excited_steady();
        let mut out = vec![0.0];
        for _ in 1..points {
            for _ in 0..every {
                r = self.step(&r, dt);
            }
            out.push(r[1][1].re / n);
        }
        out
    }
}

fn bloch_oracle() -> Check {
    let gamma = 2.0 * PI * 15.1e6;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for ratio in [0.2, 1.0, 3.0, 10.0] {
        for detuning in [0.0, 0.5 * gamma] {
            let oracle = BlochOracle {
                rabi: ratio * gamma,
                detuning,
                gamma,
            };
            let dt = 1e-3 / gamma;
            let every = 50;
            let points = 201;
            let reference = oracle.g2(dt, every, points);
            let taus: Vec<f64> = (0..points).map(|k| (k * every) as f64 * dt).collect();
            let model = build_two_level(ratio * gamma, detuning, gamma).map_err(err)?;
            let g2 = RegressionEngine::new(&model).map_err(err)?.g2(&taus).map_err(err)?;
            let d = max_abs_diff(&reference, &g2.values);
            worst = worst.max(d);
            if detuning == 0.0 {
                notes.push(format!("Ω/Γ={ratio}: {d:.1e}"));
            }
        }
    }
    ensure(worst <= 1e-6, format!("max |engine - RK4| = {worst:.2e} ({})", notes.join(", ")))
}

fn extraction_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let taus = uniform_grid(1e-9, 64);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v = rng.random_range(0.01..0.99);
        let r = rng.random_range(0.0..1.0);
        let random = |rng: &mut ChaCha8Rng, kind, lo: f64, hi: f64| {
            CorrelationCurve::theory(kind, taus.clone(), (0..taus.len()).map(|_| rng.random_range(lo..hi)).collect(), None)
        };
        let g2 = random(&mut rng, CurveKind::G2, 0.0, 2.0);
        let inphase = random(&mut rng, CurveKind::G15, -1.0, 2.0);
        let quad = random(&mut rng, CurveKind::G15, -1.0, 1.0);
        let mut opposite = inphase.clone();
        opposite.values.iter_mut().for_each(|x| *x = -*x);
        let gt0 = compose_gtotal(&g2, &inphase, v, r).map_err(err)?;
        let gth = compose_gtotal(&g2, &quad, v, r).map_err(err)?;
        let gtpi = compose_gtotal(&g2, &opposite, v, r).map_err(err)?;
        let back0 = extract_inphase(&gt0, &gtpi, v).map_err(err)?;
        let backq = extract_quadrature(&gt0, &gth, &gtpi, v).map_err(err)?;
        worst = worst
            .max(max_abs_diff(&back0.values, &inphase.values))
            .max(max_abs_diff(&backq.values, &quad.values));
    }
    ensure(worst <= 1e-12, format!("1000 random (V, r), max error {worst:.2e}"))
}

fn monte_carlo_pipeline() -> Check {
    let cfg = two_level_config();
    let model = cfg.atom.build().map_err(err)?;
    let engine = RegressionEngine::new(&model).map_err(err)?;
    let base = cfg.detection.chain(0.0);
    let phases = [0.0, FRAC_PI_2, PI];
    let mut runs = Vec::new();
    for (k, &phi) in phases.iter().enumerate() {
        let det = base.with_phase(phi);
        let seed = derive_seed(cfg.simulation.seed, k as u64);
        let (start, stop) = synthesize_with(&model, &det, cfg.simulation.duration_s, seed, &opts(&cfg)).map_err(err)?;
        runs.push(PhaseRun {
            label: format!("phi{k}"),
            nominal_phase: Some(phi),
            histogram: cross_correlate(&start, &stop, BIN, TAU_MAX).map_err(err)?,
        });
    }
    let tail = TailWindow::default_for(TAU_MAX);
    let out = analyze_runs(&runs, tail).map_err(err)?;
    let quantum = runs[0].histogram.quantum_seconds();
    let layout = Layout::new(runs[0].histogram.quantization_ps, BIN, TAU_MAX).map_err(err)?;

    let mut notes = Vec::new();
    let mut ok = !out.assignment.any_relabelled();
    let min_starts = runs.iter().map(|r| r.histogram.n_starts).min().unwrap_or(0);
    ok &= min_starts >= 1_000_000;
    notes.push(format!("{min_starts} starts min"));

    // Per-bin 4σ agreement. Among 1500 independent bins a Gaussian
    // deviation beyond 4σ has probability ~0.1, so at most one is allowed
    // and the χ² of each curve must be acceptable.
    let mut outliers = 0;
    for (run, curve) in runs.iter().zip(&out.gtotal) {
        let expected = expected_gtotal_bins(&engine, &base, run.nominal_phase.unwrap(), quantum, layout).map_err(err)?;
        let a = agreement(curve, &expected);
        let p = chi2_p(a.chi2, a.bins);
        outliers += a.outliers_4sigma;
        ok &= p > 1e-3;
        notes.push(format!("{}: max|z|={:.2} p={p:.3}", run.label, a.max_abs_z));
    }
    ok &= outliers <= 1;

    for (name, curve, phi, asymptote) in [
        ("g15_0", &out.g15_inphase, 0.0, 1.0),
        ("g15_pi/2", &out.g15_quadrature, FRAC_PI_2, 0.0),
    ] {
        let expected = expected_g15_bins(&engine, &base, phi, quantum, layout).map_err(err)?;
        let a = agreement(curve, &expected);
        let p = chi2_p(a.chi2, a.bins);
        let (m, e) = tail.mean(curve).map_err(err)?;
        ok &= p > 1e-3 && a.outliers_4sigma <= 1 && (m - asymptote).abs() < 4.0 * e;
        notes.push(format!("{name}: max|z|={:.2} p={p:.3} tail {m:.4}±{e:.4}", a.max_abs_z));
    }

    // Damped oscillation: the in-phase component overshoots its asymptote
    // and later dips below it, both significantly.
    let peak = out.g15_inphase.values.iter().zip(&out.g15_inphase.stderr).position(|(v, e)| v - 1.0 > 5.0 * e);
    let dip = peak.and_then(|p| {
        out.g15_inphase.values[p..]
            .iter()
            .zip(&out.g15_inphase.stderr[p..])
            .position(|(v, e)| 1.0 - v > 5.0 * e)
    });
    ok &= dip.is_some();
    notes.push(format!("V={:.4}±{:.4}, oscillation {}", out.visibility.value, out.visibility.stderr, if dip.is_some() { "seen" } else { "missing" }));
    ensure(ok, notes.join("; "))
}

const TRAJECTORIES: usize = 100_000;

fn unraveling_equivalence() -> Check {
    let cfg = two_level_config();
    let model = cfg.atom.build().map_err(err)?;
    let engine = RegressionEngine::new(&model).map_err(err)?;
    let gamma = ba_gamma(&cfg);
    let target = engine.moments().excited;
    let excited = model.dim() - 1;
    let checkpoints: Vec<f64> = (1..=10).map(|k| 2.0 * k as f64 / gamma).collect();
    // In phase with the dipole the compensation term matters most.
    let det = cfg.detection.chain(0.0);
    let spec = UnravelingSpec::new(&model, &det, engine.dipole_phase(), 0.0).map_err(err)?;
    let worst_z = |spec: &UnravelingSpec| -> Result<f64, String> {
        let pops = ensemble_populations(&model, spec, &checkpoints, TRAJECTORIES, 5).map_err(err)?;
        Ok(pops
            .iter()
            .map(|p| ((p[excited].0 - target) / p[excited].1).abs())
            .fold(0.0, f64::max))
    };
    let z = worst_z(&spec)?;
    let mut uncompensated = spec.clone();
    uncompensated.compensation.fill(Complex64::from(0.0));
    let z_bad = worst_z(&uncompensated)?;
    ensure(
        z < 3.0 && z_bad > 5.0,
        format!("{TRAJECTORIES} trajectories, 10 checkpoints: max |z| = {z:.2} (without compensation {z_bad:.1})"),
    )
}

fn brute_force(start: &[u64], stop: &[u64], layout: Layout) -> Vec<u64> {
    let mut counts = vec![0u64; layout.n_bins];
    for &s in start {
        for &t in stop {
            if t >= s && t - s < layout.window_tags() {
                counts[((t - s) / layout.bin_tags) as usize] += 1;
            }
        }
    }
    counts
}

fn stream(channel: Channel, mut tags: Vec<u64>, duration: u64) -> ClickStream {
    tags.sort_unstable();
    ClickStream {
        channel,
        quantization_ps: 100,
        duration,
        seed: 0,
        tags,
    }
}

fn correlator_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut notes = Vec::new();
    for case in 0..1000 {
        let duration = rng.random_range(10..5000u64);
        let n1 = rng.random_range(0..200);
        let n2 = rng.random_range(0..200);
        let a = stream(Channel::Start, (0..n1).map(|_| rng.random_range(0..duration)).collect(), duration);
        let b = stream(Channel::Stop, (0..n2).map(|_| rng.random_range(0..duration)).collect(), duration);
        let bin_tags = rng.random_range(1..20u64);
        let n_bins = rng.random_range(1..60u64);
        let bw = bin_tags as f64 * 100e-12;
        let h = cross_correlate(&a, &b, bw, bw * n_bins as f64).map_err(err)?;
        let layout = Layout::new(100, bw, bw * n_bins as f64).map_err(err)?;
        if h.counts != brute_force(&a.tags, &b.tags, layout) {
            return Err(format!("case {case}: two-pointer histogram differs from brute force"));
        }
        let cut = rng.random_range(0..duration);
        let mut merged = correlate_segment(&a.tags, &b.tags, 0, cut, 100, layout);
        merged.merge(&correlate_segment(&a.tags, &b.tags, cut, duration, 100, layout)).map_err(err)?;
        let parallel = cross_correlate_parallel(&a, &b, bw, bw * n_bins as f64, rng.random_range(1..9)).map_err(err)?;
        if merged.counts != h.counts || merged.n_starts != h.n_starts || parallel.counts != h.counts {
            return Err(format!("case {case}: segment merge differs from whole stream"));
        }
    }
    notes.push("1000 cases equal to brute force and to segment merge".to_string());

    // Stop detector sees only the LO: undriven atom, fluorescence blocked.
    let model = build_two_level(0.0, 0.0, 2.0 * PI * 15.1e6).map_err(err)?;
    let lo_rate: f64 = 1e7;
    let det = DetectionChain::new(0.0, 0.0, lo_rate.sqrt());
    let duration = 0.1;
    let (_, stop) = synthesize_with(&model, &det, duration, 17, &SynthesisOptions::default()).map_err(err)?;
    let quantum = stop.quantum_seconds();
    let starts = poisson_tags(1e5, stop.duration, quantum, &mut rng_stream(17, 1 << 40)).map_err(err)?;
    let start = stream(Channel::Start, starts, stop.duration);
    let h: Histogram = cross_correlate(&start, &stop, BIN, TAU_MAX).map_err(err)?;
    let flat = h.n_starts as f64 * lo_rate * BIN;
    let (chi_abs, dof_abs) = poisson_chi_square(&h.counts, &vec![flat; h.n_bins()]);
    let p_abs = chi2_p(chi_abs, dof_abs);
    let (curve, _) = normalize(&h, TailWindow::default_for(TAU_MAX)).map_err(err)?;
    let chi_unit: f64 = curve.values.iter().zip(&curve.stderr).map(|(v, e)| ((v - 1.0) / e).powi(2)).sum();
    let p_unit = chi2_p(chi_unit, curve.len() - 1);
    notes.push(format!(
        "LO-only: {} starts, p(flat at LO rate)={p_abs:.3}, p(unit curve)={p_unit:.3}",
        h.n_starts
    ));
    ensure(p_abs > 0.01 && p_unit > 0.01, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("antibunching zero", antibunching),
        ("phase convention", phase_convention),
        ("direct vs composed total correlation", decomposition_consistency),
        ("zero-delay offset", zero_delay_offset),
        ("short-time scaling", short_time_scaling),
        ("two-level ODE oracle", bloch_oracle),
        ("extraction round trip", extraction_round_trip),
        ("Monte Carlo vs regression", monte_carlo_pipeline),
        ("unraveling equivalence", unraveling_equivalence),
        ("correlator exactness", correlator_exactness),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
