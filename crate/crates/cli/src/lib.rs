//! Subcommands of the `fluorcorr` binary.
//!
//! Every command reads a validated [`RunConfig`] and exchanges data with the
//! others through files in the output directory:
//!
//! * `theory` writes `g2.csv`, `g15_<label>.csv`, `gtotal_<label>.csv` and
//!   `theory.json`.
//! * `simulate` writes `start_<label>.dctag`, `stop_<label>.dctag` and the
//!   manifest `runs.json`.
//! * `correlate` writes `hist_<label>.csv` per run.
//! * `analyze` writes `gtotal_data_<label>.csv`, `g15_0_data.csv`,
//!   `g15_pi2_data.csv` and `analysis.json` (or the `*_extracted` files
//!   and `analysis_theory.json` with `--from-theory`).
//! * `pipeline` runs all four and adds `pipeline.json`.

use std::path::{Path, PathBuf};

use fluorcorr::analysis::{
    agreement, analyze_runs, expected_g15_bins, expected_gtotal_bins, extract_from_curves, theory_set, Agreement,
    PhaseRun, VisibilityEstimate,
};
use fluorcorr::config::RunConfig;
use fluorcorr::correlator::{
    cross_correlate, cross_correlate_first_stop, normalize, Histogram, Layout, PhaseAssignment,
};
use fluorcorr::io::{self, CurveMetadata};
use fluorcorr::liouville::{CorrelationCurve, RegressionEngine};
use fluorcorr::trajectory::{derive_seed, synthesize_with, ClickStream};
use fluorcorr::{tagfile, Error, Result};
use serde::{Deserialize, Serialize};

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::DetectionBudget { .. } | Error::AngularMomentum(_) => 2,
        Error::Numerical(_) | Error::DegenerateSteadyState { .. } | Error::Dimension(_) | Error::GridMismatch => 3,
        Error::Statistics(_) | Error::Calibration(_) => 4,
        Error::Io(_) => 1,
        Error::Format(_) | Error::Stream(_) | Error::Json(_) => 5,
    }
}

/// Resolved configuration and output directory for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// Load `--config` or build `--preset`, then apply `--out` / `--seed`.
    pub fn resolve(config: Option<&Path>, preset: Option<&str>, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match (config, preset) {
            (Some(path), None) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (Some(_), Some(_)) => return Err(Error::Config("--config and --preset are mutually exclusive".into())),
            (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
        };
        if let Some(s) = seed {
            cfg.simulation.seed = s;
        }
        if let Some(dir) = out {
            cfg.output.dir = dir;
        }
        cfg.validate()?;
        Ok(Context {
            out: cfg.output.dir.clone(),
            config: cfg,
        })
    }

    pub fn from_config(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Context {
            out: config.output.dir.clone(),
            config,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.path("config.json"), self.config.to_json() + "\n")?;
        Ok(())
    }
}

/// File label for an LO phase, e.g. `phi1.5708`.
pub fn phase_label(phi: f64) -> String {
    format!("phi{phi:.4}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryCurveEntry {
    pub label: String,
    pub phase: f64,
    pub g15: String,
    pub gtotal: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config_hash: String,
    pub model_hash: String,
    pub visibility: f64,
    pub ratio: f64,
    pub prefactor: f64,
    pub excited_population: f64,
    pub dipole_phase: f64,
    pub g2: String,
    pub curves: Vec<TheoryCurveEntry>,
}

/// Theory curves for every configured LO phase.
pub fn cmd_theory(ctx: &Context) -> Result<TheoryReport> {
    ctx.prepare()?;
    let cfg = &ctx.config;
    let model = cfg.atom.build()?;
    let engine = RegressionEngine::new(&model)?;
    let detection = cfg.detection.chain(0.0);
    let grid = cfg.analysis.grid();
    let set = theory_set(&engine, &detection, &cfg.detection.phases, &grid)?;
    let model_hash = model.fingerprint();
    let config_hash = cfg.hash();

    let meta = |curve: &CorrelationCurve| CurveMetadata {
        visibility: Some(set.derived.visibility),
        ratio: Some(set.derived.ratio),
        prefactor: Some(set.derived.prefactor),
        model_hash: Some(model_hash.clone()),
        config_hash: Some(config_hash.clone()),
        ..CurveMetadata::for_curve(curve, "theory")
    };
    io::write_curve(&ctx.path("g2.csv"), &set.g2, &meta(&set.g2))?;
    let mut curves = Vec::new();
    for (phi, g15, gt) in &set.phases {
        let label = phase_label(*phi);
        let entry = TheoryCurveEntry {
            label: label.clone(),
            phase: *phi,
            g15: format!("g15_{label}.csv"),
            gtotal: format!("gtotal_{label}.csv"),
        };
        io::write_curve(&ctx.path(&entry.g15), g15, &meta(g15))?;
        io::write_curve(&ctx.path(&entry.gtotal), gt, &meta(gt))?;
        curves.push(entry);
    }
    let report = TheoryReport {
        config_hash,
        model_hash,
        visibility: set.derived.visibility,
        ratio: set.derived.ratio,
        prefactor: set.derived.prefactor,
        excited_population: engine.moments().excited,
        dipole_phase: engine.dipole_phase(),
        g2: "g2.csv".into(),
        curves,
    };
    write_json(&ctx.path("theory.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: String,
    pub phase: f64,
    pub seed: u64,
    pub start: String,
    pub stop: String,
    pub n_start: u64,
    pub n_stop: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub model_hash: String,
    pub master_seed: u64,
    pub duration_s: f64,
    pub runs: Vec<RunEntry>,
}

/// One start/stop stream pair per configured LO phase.
pub fn cmd_simulate(ctx: &Context) -> Result<RunManifest> {
    ctx.prepare()?;
    let cfg = &ctx.config;
    let model = cfg.atom.build()?;
    let config_hash = cfg.hash();
    let mut runs = Vec::new();
    for (i, &phi) in cfg.detection.phases.iter().enumerate() {
        let label = phase_label(phi);
        let seed = derive_seed(cfg.simulation.seed, i as u64);
        let (start, stop) = synthesize_with(
            &model,
            &cfg.detection.chain(phi),
            cfg.simulation.duration_s,
            seed,
            &cfg.simulation.options(),
        )?;
        let entry = RunEntry {
            start: format!("start_{label}.dctag"),
            stop: format!("stop_{label}.dctag"),
            label,
            phase: phi,
            seed,
            n_start: start.tags.len() as u64,
            n_stop: stop.tags.len() as u64,
        };
        tagfile::write(&ctx.path(&entry.start), &start, &config_hash)?;
        tagfile::write(&ctx.path(&entry.stop), &stop, &config_hash)?;
        runs.push(entry);
    }
    let manifest = RunManifest {
        config_hash,
        model_hash: model.fingerprint(),
        master_seed: cfg.simulation.seed,
        duration_s: cfg.simulation.duration_s,
        runs,
    };
    write_json(&ctx.path("runs.json"), &manifest)?;
    Ok(manifest)
}

fn correlate_pair(ctx: &Context, start: &ClickStream, stop: &ClickStream) -> Result<Histogram> {
    let a = &ctx.config.analysis;
    if a.first_stop {
        cross_correlate_first_stop(start, stop, a.bin_width_s, a.tau_max_s)
    } else {
        cross_correlate(start, stop, a.bin_width_s, a.tau_max_s)
    }
}

fn histogram_meta(ctx: &Context, h: &Histogram, phase: Option<f64>, model_hash: Option<String>) -> io::HistogramMetadata {
    io::HistogramMetadata {
        model_hash,
        config_hash: Some(ctx.config.hash()),
        ..io::histogram_metadata(h, phase)
    }
}

/// Histogram every run of the manifest in the output directory.
pub fn cmd_correlate(ctx: &Context) -> Result<Vec<Histogram>> {
    let manifest: RunManifest = read_json(&ctx.path("runs.json"))?;
    manifest
        .runs
        .iter()
        .map(|run| {
            let start = tagfile::read(&ctx.path(&run.start))?;
            let stop = tagfile::read(&ctx.path(&run.stop))?;
            let h = correlate_pair(ctx, &start, &stop)?;
            let meta = histogram_meta(ctx, &h, Some(run.phase), Some(manifest.model_hash.clone()));
            io::write_histogram(&ctx.path(&format!("hist_{}.csv", run.label)), &h, &meta)?;
            Ok(h)
        })
        .collect()
}

/// Histogram one explicit start/stop pair; writes `histogram.csv` and the
/// tail-normalized `correlation.csv`.
pub fn cmd_correlate_pair(ctx: &Context, start: &Path, stop: &Path) -> Result<(Histogram, CorrelationCurve)> {
    std::fs::create_dir_all(&ctx.out)?;
    let start = tagfile::read(start)?;
    let stop = tagfile::read(stop)?;
    let h = correlate_pair(ctx, &start, &stop)?;
    io::write_histogram(&ctx.path("histogram.csv"), &h, &histogram_meta(ctx, &h, None, None))?;
    let (curve, _) = normalize(&h, ctx.config.analysis.tail())?;
    let meta = CurveMetadata {
        config_hash: Some(ctx.config.hash()),
        ..CurveMetadata::for_curve(&curve, "correlate")
    };
    io::write_curve(&ctx.path("correlation.csv"), &curve, &meta)?;
    Ok((h, curve))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config_hash: String,
    pub source: String,
    pub assignment: PhaseAssignment,
    pub relabelled: bool,
    pub visibility: VisibilityEstimate,
    pub reference_label: Option<String>,
    pub reference_normalizer: Option<f64>,
    pub gtotal: Vec<String>,
    pub g15_inphase: String,
    pub g15_quadrature: String,
}

fn extracted_meta(ctx: &Context, curve: &CorrelationCurve, source: &str, v: f64) -> CurveMetadata {
    CurveMetadata {
        visibility: Some(v),
        config_hash: Some(ctx.config.hash()),
        ..CurveMetadata::for_curve(curve, source)
    }
}

/// Calibrate, normalize and extract `g15_0`, `g15_{π/2}` from the
/// histograms written by `correlate`.
pub fn cmd_analyze(ctx: &Context) -> Result<AnalysisReport> {
    let manifest: RunManifest = read_json(&ctx.path("runs.json"))?;
    let runs = manifest
        .runs
        .iter()
        .map(|run| {
            let (histogram, meta) = io::read_histogram(&ctx.path(&format!("hist_{}.csv", run.label)))?;
            Ok(PhaseRun {
                label: run.label.clone(),
                nominal_phase: meta.phase_label.or(Some(run.phase)),
                histogram,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = analyze_runs(&runs, ctx.config.analysis.tail())?;
    let v = out.visibility.value;
    let mut gtotal = Vec::new();
    for (run, curve) in runs.iter().zip(&out.gtotal) {
        let name = format!("gtotal_data_{}.csv", run.label);
        io::write_curve(&ctx.path(&name), curve, &extracted_meta(ctx, curve, "data", v))?;
        gtotal.push(name);
    }
    io::write_curve(
        &ctx.path("g15_0_data.csv"),
        &out.g15_inphase,
        &extracted_meta(ctx, &out.g15_inphase, "data", v),
    )?;
    io::write_curve(
        &ctx.path("g15_pi2_data.csv"),
        &out.g15_quadrature,
        &extracted_meta(ctx, &out.g15_quadrature, "data", v),
    )?;
    let report = AnalysisReport {
        config_hash: ctx.config.hash(),
        source: "data".into(),
        relabelled: out.assignment.any_relabelled(),
        assignment: out.assignment,
        visibility: out.visibility,
        reference_label: Some(runs[out.reference].label.clone()),
        reference_normalizer: Some(out.reference_normalizer),
        gtotal,
        g15_inphase: "g15_0_data.csv".into(),
        g15_quadrature: "g15_pi2_data.csv".into(),
    };
    write_json(&ctx.path("analysis.json"), &report)?;
    Ok(report)
}

/// Extraction applied to the noise-free theory curves written by `theory`,
/// with the model visibility.
pub fn cmd_analyze_theory(ctx: &Context) -> Result<AnalysisReport> {
    let theory: TheoryReport = read_json(&ctx.path("theory.json"))?;
    let curves = theory
        .curves
        .iter()
        .map(|c| {
            let (curve, _) = io::read_curve(&ctx.path(&c.gtotal))?;
            Ok((c.label.clone(), Some(c.phase), curve))
        })
        .collect::<Result<Vec<_>>>()?;
    let (assignment, inphase, quadrature) = extract_from_curves(&curves, theory.visibility, ctx.config.analysis.tail())?;
    let v = theory.visibility;
    io::write_curve(&ctx.path("g15_0_extracted.csv"), &inphase, &extracted_meta(ctx, &inphase, "theory", v))?;
    io::write_curve(
        &ctx.path("g15_pi2_extracted.csv"),
        &quadrature,
        &extracted_meta(ctx, &quadrature, "theory", v),
    )?;
    let report = AnalysisReport {
        config_hash: ctx.config.hash(),
        source: "theory".into(),
        relabelled: assignment.any_relabelled(),
        assignment,
        visibility: VisibilityEstimate { value: v, stderr: 0.0 },
        reference_label: None,
        reference_normalizer: None,
        gtotal: theory.curves.iter().map(|c| c.gtotal.clone()).collect(),
        g15_inphase: "g15_0_extracted.csv".into(),
        g15_quadrature: "g15_pi2_extracted.csv".into(),
    };
    write_json(&ctx.path("analysis_theory.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveComparison {
    pub name: String,
    pub agreement: Agreement,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub theory_visibility: f64,
    pub estimated_visibility: VisibilityEstimate,
    pub relabelled: bool,
    pub comparisons: Vec<CurveComparison>,
}

/// Theory, synthesis, correlation and analysis in one go, plus a per-bin
/// comparison of data with the quantization-aware theory expectation.
pub fn cmd_pipeline(ctx: &Context) -> Result<PipelineReport> {
    let theory = cmd_theory(ctx)?;
    cmd_simulate(ctx)?;
    let hists = cmd_correlate(ctx)?;
    let analysis = cmd_analyze(ctx)?;

    let cfg = &ctx.config;
    let engine = RegressionEngine::new(&cfg.atom.build()?)?;
    let detection = cfg.detection.chain(0.0);
    let quantum = hists[0].quantum_seconds();
    let layout = Layout::new(cfg.simulation.quantization_ps, cfg.analysis.bin_width_s, cfg.analysis.tau_max_s)?;
    let mut comparisons = Vec::new();
    for (name, entry) in analysis.gtotal.iter().zip(&theory.curves) {
        let (curve, _) = io::read_curve(&ctx.path(name))?;
        let expected = expected_gtotal_bins(&engine, &detection, entry.phase, quantum, layout)?;
        comparisons.push(CurveComparison {
            name: name.clone(),
            agreement: agreement(&curve, &expected),
        });
    }
    for (name, phi) in [(&analysis.g15_inphase, 0.0), (&analysis.g15_quadrature, std::f64::consts::FRAC_PI_2)] {
        let (curve, _) = io::read_curve(&ctx.path(name))?;
        let expected = expected_g15_bins(&engine, &detection, phi, quantum, layout)?;
        comparisons.push(CurveComparison {
            name: name.clone(),
            agreement: agreement(&curve, &expected),
        });
    }
    let report = PipelineReport {
        theory_visibility: theory.visibility,
        estimated_visibility: analysis.visibility,
        relabelled: analysis.relabelled,
        comparisons,
    };
    write_json(&ctx.path("pipeline.json"), &report)?;
    Ok(report)
}
