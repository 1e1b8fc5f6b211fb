//! Multilevel atom models: rotating-frame Hamiltonians, Zeeman-resolved
//! decay channels and the designated detection transition.
//!
//! Basis ordering is fixed by the order in which manifolds are added to the
//! [`AtomBuilder`], and within a manifold by ascending `m`. The built-in
//! ¹³⁸Ba⁺ scheme therefore uses
//!
//! | index | level            |
//! |-------|------------------|
//! | 0, 1  | S1/2, m = -1/2, +1/2 |
//! | 2, 3  | P1/2, m = -1/2, +1/2 |
//! | 4..=7 | D3/2, m = -3/2 .. +3/2 |
//!
//! Linearly polarized light perpendicular to the quantization axis is
//! represented as the spherical decomposition `e_x = (e_{-1} - e_{+1}) / sqrt(2)`;
//! the `1/sqrt(2)` is absorbed into the Rabi frequency, so every coupled
//! Zeeman component carries `(Ω/2) · s_q · CG` with `s_{+1} = -1`, `s_{-1} = +1`
//! and `s_0 = +1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::{clebsch_gordan, HalfInt};
use crate::error::{invalid, Error, Result};
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub manifold: String,
    pub j: HalfInt,
    pub m: HalfInt,
    /// Zeeman shift in rad/s.
    pub zeeman_shift: f64,
    /// Ordinal of the manifold's bare (lab-frame) energy. Only the ordering
    /// matters; it is used to check that decay never goes upwards.
    pub energy_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserDrive {
    /// Rabi frequency per coupled Zeeman component (rad/s).
    pub rabi_frequency: f64,
    /// Laser minus transition frequency (rad/s).
    pub detuning: f64,
    pub lower: String,
    pub upper: String,
    /// Allowed values of `m_upper - m_lower`.
    pub coupled_dm: Vec<i32>,
}

impl LaserDrive {
    fn polarization_sign(dm: i32) -> f64 {
        if dm == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

/// One dissipative channel `sqrt(rate) * lowering`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayChannel {
    pub label: String,
    /// Rate in s^-1.
    pub rate: f64,
    pub lowering: CMatrix,
}

impl DecayChannel {
    /// The Lindblad collapse operator `sqrt(rate) * lowering`.
    pub fn collapse_operator(&self) -> CMatrix {
        &self.lowering * Complex64::from(self.rate.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomModel {
    pub levels: Vec<Level>,
    pub hamiltonian: CMatrix,
    pub channels: Vec<DecayChannel>,
    /// Lowering operator of the detected transition.
    pub sigma_det: CMatrix,
    pub drives: Vec<LaserDrive>,
}

impl AtomModel {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn collapse_operators(&self) -> Vec<CMatrix> {
        self.channels.iter().map(DecayChannel::collapse_operator).collect()
    }

    pub fn level_index(&self, manifold: &str, m: HalfInt) -> Option<usize> {
        self.levels
            .iter()
            .position(|l| l.manifold == manifold && l.m == m)
    }

    /// Indices of the levels belonging to a manifold.
    pub fn manifold_indices(&self, manifold: &str) -> Vec<usize> {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.manifold == manifold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Basis permutation listing levels from highest to lowest bare energy.
    pub fn descending_energy_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.levels[i].energy_rank));
        order
    }

    /// Rate of the decay channel proportional to `sigma_det`, i.e. the total
    /// photon flux per unit population radiated on the detected transition.
    pub fn detected_transition_rate(&self) -> Option<f64> {
        self.channels.iter().find_map(|ch| {
            proportionality(&ch.lowering, &self.sigma_det).map(|c| ch.rate * c.norm_sqr())
        })
    }

    /// Stable fingerprint of the model matrices, recorded in output metadata.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        let mut feed = |m: &CMatrix| {
            for z in m.iter() {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        };
        feed(&self.hamiltonian);
        feed(&self.sigma_det);
        for ch in &self.channels {
            feed(&ch.collapse_operator());
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// If `a = c * b` for a complex scalar `c`, return `c`.
pub(crate) fn proportionality(a: &CMatrix, b: &CMatrix) -> Option<Complex64> {
    if a.shape() != b.shape() {
        return None;
    }
    let (idx, pivot) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))?;
    if pivot.norm() == 0.0 {
        return None;
    }
    let c = a[idx] / pivot;
    let scale = a.norm().max(b.norm());
    let residual = (a - b * c).norm();
    (residual <= 1e-12 * scale).then_some(c)
}

/// Description of one fine-structure manifold for [`AtomBuilder`].
#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub label: String,
    pub j: HalfInt,
    /// Rotating-frame energy of the manifold centre (rad/s).
    pub frame_energy: f64,
    /// Landé g-factor; the Zeeman shift is `g * m * larmor`.
    pub g_factor: f64,
    pub energy_rank: u32,
}

/// Generic constructor for Zeeman-resolved atoms driven by lasers in the
/// rotating-wave approximation.
#[derive(Debug, Clone, Default)]
pub struct AtomBuilder {
    manifolds: Vec<ManifoldSpec>,
    larmor: f64,
    drives: Vec<LaserDrive>,
    decays: Vec<(String, String, f64)>,
    detected: Option<((String, HalfInt), (String, HalfInt))>,
}

impl AtomBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn manifold(mut self, spec: ManifoldSpec) -> Self {
        self.manifolds.push(spec);
        self
    }

    /// Larmor angular frequency `mu_B B / hbar` (rad/s).
    pub fn larmor(mut self, larmor: f64) -> Self {
        self.larmor = larmor;
        self
    }

    pub fn drive(mut self, drive: LaserDrive) -> Self {
        self.drives.push(drive);
        self
    }

    /// Decay from `upper` to `lower` at total rate `rate` (s^-1), split
    /// over Zeeman components by squared Clebsch–Gordan weights.
    pub fn decay(mut self, upper: &str, lower: &str, rate: f64) -> Self {
        self.decays.push((upper.to_string(), lower.to_string(), rate));
        self
    }

    /// Designate the transition `upper -> lower` as the detected one.
    pub fn detect(mut self, upper: (&str, HalfInt), lower: (&str, HalfInt)) -> Self {
        self.detected = Some(((upper.0.to_string(), upper.1), (lower.0.to_string(), lower.1)));
        self
    }

    pub fn build(self) -> Result<AtomModel> {
        if self.manifolds.is_empty() {
            return Err(invalid("manifolds", "at least one manifold is required"));
        }
        if !(self.larmor >= 0.0) {
            return Err(invalid("larmor", "Zeeman splitting must be non-negative"));
        }
        let mut levels = Vec::new();
        let mut energies = Vec::new();
        for spec in &self.manifolds {
            for m in spec.j.projections() {
                let zeeman = spec.g_factor * m.value() * self.larmor;
                levels.push(Level {
                    label: format!("{}(m={})", spec.label, m),
                    manifold: spec.label.clone(),
                    j: spec.j,
                    m,
                    zeeman_shift: zeeman,
                    energy_rank: spec.energy_rank,
                });
                energies.push(spec.frame_energy + zeeman);
            }
        }
        let dim = levels.len();
        let find = |manifold: &str, m: HalfInt| {
            levels
                .iter()
                .position(|l| l.manifold == manifold && l.m == m)
        };
        let manifold = |label: &str| {
            self.manifolds
                .iter()
                .find(|s| s.label == label)
                .ok_or_else(|| invalid("manifold", format!("unknown manifold `{label}`")))
        };

        let mut h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            dim,
            energies.iter().map(|&e| Complex64::from(e)),
        ));

        for drive in &self.drives {
            if !(drive.rabi_frequency >= 0.0) {
                return Err(invalid("rabi_frequency", "must be non-negative"));
            }
            if drive.coupled_dm.is_empty() || drive.coupled_dm.iter().any(|q| q.abs() > 1) {
                return Err(invalid("coupled_dm", "must be a nonempty subset of {-1, 0, +1}"));
            }
            let lower = manifold(&drive.lower)?;
            let upper = manifold(&drive.upper)?;
            for ml in lower.j.projections() {
                for &q in &drive.coupled_dm {
                    let mu = ml + HalfInt(2 * q);
                    if mu.twice().abs() > upper.j.twice() {
                        continue;
                    }
                    let cg = clebsch_gordan(lower.j, ml, HalfInt::ONE, HalfInt(2 * q), upper.j, mu)?;
                    let (l, u) = (find(&lower.label, ml).unwrap(), find(&upper.label, mu).unwrap());
                    let coupling = 0.5 * drive.rabi_frequency * LaserDrive::polarization_sign(q) * cg;
                    h[(u, l)] += Complex64::from(coupling);
                    h[(l, u)] += Complex64::from(coupling);
                }
            }
        }

        let mut channels = Vec::new();
        for (upper_label, lower_label, rate) in &self.decays {
            if !(*rate >= 0.0) {
                return Err(invalid("decay rate", "must be non-negative"));
            }
            let upper = manifold(upper_label)?;
            let lower = manifold(lower_label)?;
            if upper.energy_rank <= lower.energy_rank {
                return Err(invalid(
                    "decay",
                    format!("`{upper_label}` does not lie above `{lower_label}`"),
                ));
            }
            for mu in upper.j.projections() {
                for ml in lower.j.projections() {
                    let q = (mu - ml).twice() / 2;
                    if q.abs() > 1 {
                        continue;
                    }
                    let cg = clebsch_gordan(lower.j, ml, HalfInt::ONE, HalfInt(2 * q), upper.j, mu)?;
                    let weight = cg * cg;
                    if weight == 0.0 {
                        continue;
                    }
                    let (l, u) = (find(lower_label, ml).unwrap(), find(upper_label, mu).unwrap());
                    let mut lowering = CMatrix::zeros(dim, dim);
                    lowering[(l, u)] = Complex64::from(1.0);
                    channels.push(DecayChannel {
                        label: format!("{} -> {}", levels[u].label, levels[l].label),
                        rate: rate * weight,
                        lowering,
                    });
                }
            }
        }

        let ((um, umj), (lm, lmj)) = self
            .detected
            .ok_or_else(|| invalid("detected", "no detected transition designated"))?;
        let u = find(&um, umj).ok_or_else(|| invalid("detected", "unknown upper level"))?;
        let l = find(&lm, lmj).ok_or_else(|| invalid("detected", "unknown lower level"))?;
        let mut sigma_det = CMatrix::zeros(dim, dim);
        sigma_det[(l, u)] = Complex64::from(1.0);

        Ok(AtomModel {
            levels,
            hamiltonian: h,
            channels,
            sigma_det,
            drives: self.drives,
        })
    }
}

/// Driven two-level atom, basis `(|g>, |e>)`.
///
/// `H = -Δ|e><e| + (Ω/2)(σ+ + σ-)`, one decay channel `sqrt(Γ) σ-`, and
/// `sigma_det = σ-`. All arguments in rad/s.
pub fn build_two_level(rabi: f64, detuning: f64, gamma: f64) -> Result<AtomModel> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "decay rate must be positive"));
    }
    if !(rabi >= 0.0) || !rabi.is_finite() {
        return Err(invalid("rabi", "Rabi frequency must be non-negative"));
    }
    if !detuning.is_finite() {
        return Err(invalid("detuning", "must be finite"));
    }
    let c = |x: f64| Complex64::from(x);
    let hamiltonian = DMatrix::from_row_slice(2, 2, &[c(0.0), c(rabi / 2.0), c(rabi / 2.0), c(-detuning)]);
    let sigma = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    let level = |label: &str, rank| Level {
        label: label.to_string(),
        manifold: label.to_string(),
        j: HalfInt::ZERO,
        m: HalfInt::ZERO,
        zeeman_shift: 0.0,
        energy_rank: rank,
    };
    Ok(AtomModel {
        levels: vec![level("g", 0), level("e", 1)],
        hamiltonian,
        channels: vec![DecayChannel {
            label: "e -> g".to_string(),
            rate: gamma,
            lowering: sigma.clone(),
        }],
        sigma_det: sigma,
        drives: vec![LaserDrive {
            rabi_frequency: rabi,
            detuning,
            lower: "g".to_string(),
            upper: "e".to_string(),
            coupled_dm: vec![0],
        }],
    })
}

/// Two-level parameters as written in a run configuration (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelConfig {
    /// Ω / 2π in Hz.
    pub rabi_hz: f64,
    /// Δ / 2π in Hz.
    pub detuning_hz: f64,
    /// Γ / 2π in Hz.
    pub gamma_hz: f64,
}

impl TwoLevelConfig {
    pub fn build(&self) -> Result<AtomModel> {
        build_two_level(2.0 * PI * self.rabi_hz, 2.0 * PI * self.detuning_hz, 2.0 * PI * self.gamma_hz).map_err(|e| match e {
            // Report the config field, not the angular-unit argument.
            Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                field: format!("{field}_hz"),
                reason,
            },
            other => other,
        })
    }
}

/// Parameters of the ¹³⁸Ba⁺ S1/2–P1/2–D3/2 scheme. Every frequency is
/// given in Hz (`x / 2π`) and converted to rad/s by [`build_ba138`].
///
/// No value here is baked in: [`Ba138Config::example`] is a documented
/// starting point using commonly quoted Ba⁺ numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ba138Config {
    pub green_rabi_hz: f64,
    /// Green (493 nm) laser detuning from S1/2–P1/2.
    pub green_detuning_hz: f64,
    pub red_rabi_hz: f64,
    /// Red (650 nm) laser detuning from D3/2–P1/2.
    pub red_detuning_hz: f64,
    /// Total P1/2 decay rate Γ_P / 2π.
    pub gamma_p_hz: f64,
    /// Fraction of P1/2 decays ending in S1/2.
    pub branching_to_s: f64,
    /// Larmor frequency `mu_B B / h`.
    pub larmor_hz: f64,
    pub g_s: f64,
    pub g_p: f64,
    pub g_d: f64,
}

impl Ba138Config {
    /// Commonly used ¹³⁸Ba⁺ values (Γ_P/2π = 15.1 MHz, P→S branching 0.756,
    /// Landé factors 2, 2/3, 4/5) with a 0.5 MHz Larmor frequency and
    /// moderate drives. Not taken from any measurement in this project.
    pub fn example() -> Self {
        Ba138Config {
            green_rabi_hz: 15.0e6,
            green_detuning_hz: -10.0e6,
            red_rabi_hz: 10.0e6,
            red_detuning_hz: 15.0e6,
            gamma_p_hz: 15.1e6,
            branching_to_s: 0.756,
            larmor_hz: 0.5e6,
            g_s: 2.0,
            g_p: 2.0 / 3.0,
            g_d: 0.8,
        }
    }

    pub fn build(&self) -> Result<AtomModel> {
        build_ba138(self)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            ("green_rabi_hz", self.green_rabi_hz),
            ("green_detuning_hz", self.green_detuning_hz),
            ("red_rabi_hz", self.red_rabi_hz),
            ("red_detuning_hz", self.red_detuning_hz),
            ("gamma_p_hz", self.gamma_p_hz),
            ("branching_to_s", self.branching_to_s),
            ("larmor_hz", self.larmor_hz),
            ("g_s", self.g_s),
            ("g_p", self.g_p),
            ("g_d", self.g_d),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(name, "must be finite"));
        }
        if self.gamma_p_hz <= 0.0 {
            return Err(invalid("gamma_p_hz", "decay rate must be positive"));
        }
        if !(self.branching_to_s > 0.0 && self.branching_to_s < 1.0) {
            return Err(invalid("branching_to_s", "must lie in (0, 1)"));
        }
        if self.larmor_hz < 0.0 {
            return Err(invalid("larmor_hz", "Zeeman splitting must be non-negative"));
        }
        if self.green_rabi_hz < 0.0 {
            return Err(invalid("green_rabi_hz", "must be non-negative"));
        }
        if self.red_rabi_hz < 0.0 {
            return Err(invalid("red_rabi_hz", "must be non-negative"));
        }
        Ok(())
    }
}

pub const S12: &str = "S1/2";
pub const P12: &str = "P1/2";
pub const D32: &str = "D3/2";

/// Eight-level ¹³⁸Ba⁺ model: both lasers couple Δm = ±1, every Zeeman
/// component of P1/2 → S1/2 and P1/2 → D3/2 is its own decay channel, and
/// the detected photon is `|S1/2,+1/2><P1/2,-1/2|`.
pub fn build_ba138(config: &Ba138Config) -> Result<AtomModel> {
    config.validate()?;
    let w = |hz: f64| 2.0 * PI * hz;
    let green_detuning = w(config.green_detuning_hz);
    let red_detuning = w(config.red_detuning_hz);
    let gamma = w(config.gamma_p_hz);
    let manifold = |label: &str, j, frame_energy, g_factor, energy_rank| ManifoldSpec {
        label: label.to_string(),
        j,
        frame_energy,
        g_factor,
        energy_rank,
    };
    AtomBuilder::new()
        .manifold(manifold(S12, HalfInt::HALF, 0.0, config.g_s, 0))
        .manifold(manifold(P12, HalfInt::HALF, -green_detuning, config.g_p, 2))
        .manifold(manifold(D32, HalfInt::THREE_HALVES, red_detuning - green_detuning, config.g_d, 1))
        .larmor(w(config.larmor_hz))
        .drive(LaserDrive {
            rabi_frequency: w(config.green_rabi_hz),
            detuning: green_detuning,
            lower: S12.to_string(),
            upper: P12.to_string(),
            coupled_dm: vec![-1, 1],
        })
        .drive(LaserDrive {
            rabi_frequency: w(config.red_rabi_hz),
            detuning: red_detuning,
            lower: D32.to_string(),
            upper: P12.to_string(),
            coupled_dm: vec![-1, 1],
        })
        .decay(P12, S12, gamma * config.branching_to_s)
        .decay(P12, D32, gamma * (1.0 - config.branching_to_s))
        .detect((P12, -HalfInt::HALF), (S12, HalfInt::HALF))
        .build()
}
