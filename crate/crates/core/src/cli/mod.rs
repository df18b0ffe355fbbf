//! `trajvis` command line: synth, fit, export, serve, validate.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 internal
//! invariant violation (such as a diverging fit).

mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{self, load_model, load_report, persist_model, persist_report, ArtifactError};
use crate::cdm::{
    export_cohort, generate_synthetic, ingest_dir, simulate_archetype_cohort, write_labels_csv, ArchetypeMix, CdmError,
    Cohort, CohortFiles, FeatureCatalog, DEFAULT_MAX_SHIFT_DAYS, DEFAULT_SWAP_FRACTION,
};
use crate::embedding::{embed_cohort, EmbedOptions, DEFAULT_LATENT_DIM};
use crate::enrichment::{find_predictors_and_markers, Aggregation, EnrichOptions, EnrichmentReport, DEFAULT_ALPHA_FDR};
use crate::pipeline::trajectory_input;
use crate::service::{indicator_panel, serve, IndicatorPanel, ServiceConfig, CONFIG_ENV};
use crate::trajectory::{
    learn_trajectories, median_pairwise_distance, LabelParams, TrajectoryError, TrajectoryParams, TrajectoryProbability,
    TreeParams, DEFAULT_FLAT_SLOPE, DEFAULT_LAMBDA, DEFAULT_LANDMARKS, DEFAULT_MAX_ITERS, DEFAULT_ROBUST_ITERS,
    DEFAULT_SIGMA_FACTOR, DEFAULT_SPAN, DEFAULT_TOL,
};
use crate::views::{analysis_bundle, patient_series, AnalysisBundle, IndicatorSeries, DEFAULT_AGE_BIN_YEARS, DEFAULT_GLYPH_BIN_YEARS};

pub use manifest::{FileDigest, RunManifest, MANIFEST_FILE};

pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "enrichment.json";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug)]
pub enum CliError {
    /// Bad input or arguments: exit 2.
    Invalid(String),
    /// Internal invariant violated: exit 3.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<CdmError> for CliError {
    fn from(e: CdmError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Divergence { .. } | TrajectoryError::Numerical(_) => CliError::Internal(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "trajvis", version, about = "Disease-progression trajectories from longitudinal clinical records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a cohort: planted archetypes or a de-identifying transform
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Embed, fit the principal tree, label trajectories and run enrichment
    Fit(FitArgs),
    /// Write per-patient JSON bundles for offline review
    Export(ExportArgs),
    /// Run the REST service
    Serve(ServeArgs),
    /// Check artifacts, manifests, catalogs or cohort directories
    Validate(ValidateArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Simulate healthy / late / fast archetype patients with a ground-truth sidecar
    Archetype(ArchetypeArgs),
    /// Date-shift and swap encounters of an existing cohort
    Transform(TransformArgs),
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

#[derive(Debug, Args)]
pub struct ArchetypeArgs {
    /// Number of patients
    #[arg(long, default_value_t = 300)]
    pub patients: usize,
    /// RNG seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Share of healthy patients
    #[arg(long, default_value_t = 1.0 / 3.0, value_parser = unit_fraction)]
    pub healthy: f64,
    /// Share of late progressors
    #[arg(long, default_value_t = 1.0 / 3.0, value_parser = unit_fraction)]
    pub late: f64,
    /// Share of fast progressors
    #[arg(long, default_value_t = 1.0 / 3.0, value_parser = unit_fraction)]
    pub fast: f64,
    /// Append the two scripted case-study patients
    #[arg(long, default_value_t = false)]
    pub case_study: bool,
    /// Output directory
    #[arg(long, default_value = "cohort")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Source cohort directory
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// RNG seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Largest date shift in days, either direction
    #[arg(long, default_value_t = DEFAULT_MAX_SHIFT_DAYS)]
    pub max_shift_days: i64,
    /// Fraction of encounters whose values are swapped
    #[arg(long, default_value_t = DEFAULT_SWAP_FRACTION, value_parser = unit_fraction)]
    pub swap_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum AggregationArg {
    Visit,
    PatientMean,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Cohort directory (patients.csv, observations.csv, catalog.json)
    #[arg(long)]
    pub cohort: PathBuf,
    /// Output directory for model.json, enrichment.json and manifest.json
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Principal-tree landmarks
    #[arg(long, default_value_t = DEFAULT_LANDMARKS)]
    pub landmarks: usize,
    /// Bandwidth as a multiple of the median pairwise map distance
    #[arg(long, default_value_t = DEFAULT_SIGMA_FACTOR, value_parser = positive)]
    pub sigma_factor: f64,
    /// Absolute bandwidth; overrides --sigma-factor
    #[arg(long, value_parser = positive)]
    pub sigma: Option<f64>,
    /// Tree-length penalty
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Iteration cap
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Relative objective change that counts as converged
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive)]
    pub tol: f64,
    /// LOWESS span fraction
    #[arg(long, default_value_t = DEFAULT_SPAN, value_parser = unit_fraction)]
    pub span: f64,
    /// LOWESS robustness iterations
    #[arg(long, default_value_t = DEFAULT_ROBUST_ITERS)]
    pub robust_iters: usize,
    /// Largest |eGFR slope| per year of a healthy trajectory
    #[arg(long, default_value_t = DEFAULT_FLAT_SLOPE, value_parser = positive)]
    pub flat_slope: f64,
    /// Terminal branches with fewer visits stay unlabeled
    #[arg(long, default_value_t = 0)]
    pub min_branch_visits: usize,
    /// Latent dimensions of the baseline embedding
    #[arg(long, default_value_t = DEFAULT_LATENT_DIM)]
    pub latent_dim: usize,
    /// Precomputed latent CSV (patient_id, encounter_id, u1..ud)
    #[arg(long)]
    pub latent_import: Option<PathBuf>,
    /// Precomputed 2-D map CSV (patient_id, encounter_id, x, y)
    #[arg(long)]
    pub coords_import: Option<PathBuf>,
    /// False-discovery-rate threshold
    #[arg(long, default_value_t = DEFAULT_ALPHA_FDR, value_parser = unit_fraction)]
    pub alpha_fdr: f64,
    /// Observation unit of the enrichment tests
    #[arg(long, value_enum, default_value_t = AggregationArg::Visit)]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Model artifact
    #[arg(long)]
    pub model: PathBuf,
    /// Cohort directory
    #[arg(long)]
    pub cohort: PathBuf,
    /// Enrichment report; recomputed when omitted
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Patients to export (repeatable)
    #[arg(long = "patient", required_unless_present = "all")]
    pub patients: Vec<String>,
    /// Export every patient
    #[arg(long, default_value_t = false)]
    pub all: bool,
    /// Indicators of the profile series, comma separated (at most two)
    #[arg(long, default_value = "egfr")]
    pub indicators: String,
    /// Glyph bin width in years
    #[arg(long, default_value_t = DEFAULT_GLYPH_BIN_YEARS, value_parser = positive)]
    pub glyph_bin: f64,
    /// Analysis age bin width in years
    #[arg(long, default_value_t = DEFAULT_AGE_BIN_YEARS, value_parser = positive)]
    pub age_bin: f64,
    /// Output directory
    #[arg(long, default_value = "export")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (TOML)
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Port override
    #[arg(long)]
    pub port: Option<u16>,
    /// Model artifact, when running without a config file
    #[arg(long, requires = "cohort")]
    pub model: Option<PathBuf>,
    /// Cohort directory, when running without a config file
    #[arg(long, requires = "model")]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or cohort directories
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

/// One exported patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientExport {
    pub patient_id: String,
    pub profile: Vec<IndicatorSeries>,
    pub probability: TrajectoryProbability,
    pub indicators: IndicatorPanel,
    pub analysis: AnalysisBundle,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(invalid)?;
    s.push('\n');
    artifact::write_atomic(path, s.as_bytes()).map_err(invalid)
}

fn cmd_synth_archetype(a: &ArchetypeArgs) -> Result<RunManifest, CliError> {
    let mix = ArchetypeMix { healthy: a.healthy, late: a.late, fast: a.fast };
    let sim = if a.case_study {
        if (mix.healthy - mix.late).abs() > 1e-12 || (mix.late - mix.fast).abs() > 1e-12 {
            return Err(invalid("--case-study uses the even mix"));
        }
        crate::fixtures::demo_cohort(a.patients, a.seed)?
    } else {
        simulate_archetype_cohort(a.patients, &mix, a.seed)?
    };
    let files = export_cohort(&sim.cohort, &a.out)?;
    let labels = a.out.join(LABELS_FILE);
    let f = std::fs::File::create(&labels).map_err(invalid)?;
    write_labels_csv(&sim.label_rows(), std::io::BufWriter::new(f))?;
    let mut m = RunManifest::new("synth archetype");
    m.seed = Some(a.seed);
    m.parameters = json!({
        "patients": a.patients,
        "mix": { "healthy": a.healthy, "late": a.late, "fast": a.fast },
        "case_study": a.case_study,
    });
    m.add_outputs(&[&files.patients, &files.observations, &files.catalog, &labels])?;
    Ok(m)
}

fn cmd_synth_transform(a: &TransformArgs) -> Result<RunManifest, CliError> {
    let source_files = CohortFiles::in_dir(&a.input);
    let source = ingest_dir(&a.input)?;
    let out = generate_synthetic(&source, a.max_shift_days, a.swap_fraction, a.seed)?;
    let files = export_cohort(&out.cohort, &a.out)?;
    let mut m = RunManifest::new("synth transform");
    m.seed = Some(a.seed);
    m.parameters = json!({
        "max_shift_days": a.max_shift_days,
        "swap_fraction": a.swap_fraction,
        "report": out.report,
    });
    m.add_inputs(&[&source_files.patients, &source_files.observations, &source_files.catalog])?;
    m.add_outputs(&[&files.patients, &files.observations, &files.catalog])?;
    eprintln!("swapped {} of {} targeted encounters", out.report.swapped, out.report.target_swaps);
    Ok(m)
}

fn check_file(path: &Option<PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) if !p.is_file() => Err(invalid(format!("{} does not exist", p.display()))),
        _ => Ok(()),
    }
}

fn cmd_fit(a: &FitArgs) -> Result<RunManifest, CliError> {
    check_file(&a.latent_import)?;
    check_file(&a.coords_import)?;
    let files = CohortFiles::in_dir(&a.cohort);
    let cohort = ingest_dir(&a.cohort)?;
    let embed = EmbedOptions { dim: a.latent_dim, latent_import: a.latent_import.clone(), coords_import: a.coords_import.clone() };
    let (space, _) = embed_cohort(&cohort, &embed).map_err(invalid)?;
    let input = trajectory_input(&cohort, &space);
    let sigma = match a.sigma {
        Some(s) => s,
        None => a.sigma_factor * median_pairwise_distance(&input.coords2d),
    };
    let params = TrajectoryParams {
        tree: TreeParams {
            landmarks: a.landmarks,
            sigma: Some(sigma),
            lambda: a.lambda,
            max_iters: a.max_iters,
            tol: a.tol,
            keep_responsibilities: false,
        },
        span: a.span,
        robust_iters: a.robust_iters,
        labels: LabelParams { flat_slope: a.flat_slope, min_branch_visits: a.min_branch_visits },
    };
    let model = learn_trajectories(&input, &params)?;
    let enrich = EnrichOptions {
        alpha_fdr: a.alpha_fdr,
        aggregation: match a.aggregation {
            AggregationArg::Visit => Aggregation::Visit,
            AggregationArg::PatientMean => Aggregation::PatientMean,
        },
    };
    let report = find_predictors_and_markers(&model, &cohort, &enrich);

    let model_path = a.out.join(MODEL_FILE);
    let report_path = a.out.join(REPORT_FILE);
    persist_model(&model, &model_path)?;
    persist_report(&report, &report_path)?;

    let final_objective = model.tree.fit_trace.last().copied().unwrap_or(f64::NAN);
    println!("visits            {}", model.visits.len());
    println!("iterations        {} (converged: {})", model.tree.iterations, model.tree.converged);
    println!("final objective   {final_objective:.6}");
    println!("sigma             {:.6}", model.tree.sigma);
    println!("branches          {} ({} terminal)", model.branches.len(), model.branches.iter().filter(|b| b.kind == crate::trajectory::BranchKind::Terminal).count());
    for (id, label) in &model.labels {
        let b = model.branch(*id).expect("labeled branch exists");
        println!(
            "  branch {id:<3} {:<17} r {:>7} slope {:>7}",
            label.as_str(),
            b.ckd_relevance_r.map_or("-".into(), |r| format!("{r:.3}")),
            b.egfr_slope.map_or("-".into(), |s| format!("{s:.2}")),
        );
    }
    println!("significant tests {} of {}", report.significant_count(), report.results.len());
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }

    let mut m = RunManifest::new("fit");
    m.parameters = json!({
        "landmarks": a.landmarks,
        "sigma_factor": a.sigma_factor,
        "sigma": sigma,
        "lambda": a.lambda,
        "max_iters": a.max_iters,
        "tol": a.tol,
        "span": a.span,
        "robust_iters": a.robust_iters,
        "flat_slope": a.flat_slope,
        "min_branch_visits": a.min_branch_visits,
        "latent_dim": a.latent_dim,
        "latent_import": a.latent_import,
        "coords_import": a.coords_import,
        "alpha_fdr": a.alpha_fdr,
        "aggregation": enrich.aggregation,
        "iterations": model.tree.iterations,
        "converged": model.tree.converged,
        "final_objective": final_objective,
    });
    let mut inputs = vec![&files.patients, &files.observations, &files.catalog];
    inputs.extend(a.latent_import.as_ref());
    inputs.extend(a.coords_import.as_ref());
    m.add_inputs(&inputs)?;
    m.add_outputs(&[&model_path, &report_path])?;
    Ok(m)
}

fn load_report_or_compute(path: &Option<PathBuf>, model: &crate::trajectory::TrajectoryModel, cohort: &Cohort) -> Result<EnrichmentReport, CliError> {
    Ok(match path {
        Some(p) => load_report(p)?,
        None => find_predictors_and_markers(model, cohort, &EnrichOptions::default()),
    })
}

pub fn export_patient(
    model: &crate::trajectory::TrajectoryModel,
    cohort: &Cohort,
    report: &EnrichmentReport,
    patient_id: &str,
    indicators: &[&str],
    glyph_bin: f64,
    age_bin: f64,
) -> Result<PatientExport, CliError> {
    let profile = patient_series(cohort, patient_id, indicators).map_err(invalid)?;
    let analysis = analysis_bundle(model, cohort, patient_id, age_bin).map_err(invalid)?;
    Ok(PatientExport {
        patient_id: patient_id.to_string(),
        profile,
        probability: analysis.probability.clone(),
        indicators: indicator_panel(cohort, report, patient_id, glyph_bin).map_err(invalid)?,
        analysis,
    })
}

fn cmd_export(a: &ExportArgs) -> Result<RunManifest, CliError> {
    let model = load_model(&a.model)?;
    let cohort = ingest_dir(&a.cohort)?;
    let report = load_report_or_compute(&a.report, &model, &cohort)?;
    let ids: Vec<String> = if a.all {
        cohort.patients().iter().map(|p| p.patient_id.clone()).collect()
    } else {
        a.patients.clone()
    };
    if let Some(missing) = ids.iter().find(|id| cohort.patient(id).is_none()) {
        return Err(invalid(format!("unknown patient {missing:?}")));
    }
    let indicators: Vec<&str> = a.indicators.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut outputs = Vec::new();
    for id in &ids {
        let bundle = export_patient(&model, &cohort, &report, id, &indicators, a.glyph_bin, a.age_bin)?;
        let path = a.out.join(format!("patient_{id}.json"));
        write_json(&path, &bundle)?;
        outputs.push(path);
    }
    println!("exported {} patient(s) to {}", outputs.len(), a.out.display());
    let files = CohortFiles::in_dir(&a.cohort);
    let mut m = RunManifest::new("export");
    m.parameters = json!({
        "patients": ids,
        "indicators": indicators,
        "glyph_bin": a.glyph_bin,
        "age_bin": a.age_bin,
    });
    let mut inputs = vec![&a.model, &files.patients, &files.observations, &files.catalog];
    inputs.extend(a.report.as_ref());
    m.add_inputs(&inputs)?;
    m.add_outputs(&outputs.iter().collect::<Vec<_>>())?;
    Ok(m)
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut config = match (&a.config, &a.model, &a.cohort) {
        (_, Some(model), Some(cohort)) => ServiceConfig::new(model.clone(), cohort.clone()),
        (Some(path), _, _) => ServiceConfig::load(path).map_err(invalid)?,
        _ => return Err(invalid(format!("pass --config, set {CONFIG_ENV}, or give --model and --cohort"))),
    };
    if let Some(port) = a.port {
        config.port = port;
    }
    let rt = tokio::runtime::Runtime::new().map_err(invalid)?;
    rt.block_on(serve(config)).map_err(invalid)
}

fn validate_path(path: &Path) -> Result<String, CliError> {
    if path.is_dir() {
        let c = ingest_dir(path)?;
        return Ok(format!("cohort ({} patients, {} encounters)", c.patients().len(), c.encounters().len()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        // not JSON at all: let the artifact reader name the problem
        Err(_) => return Ok(artifact::validate_artifact(path)?),
    };
    if value.get("schema_version").is_some() && value.get("payload").is_some() {
        return Ok(artifact::validate_artifact(path)?);
    }
    if value.get("command").is_some() {
        let m: RunManifest = serde_json::from_value(value).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        m.verify(path.parent().unwrap_or(Path::new(".")))?;
        return Ok("run manifest".into());
    }
    if value.is_array() {
        let c = FeatureCatalog::from_json(&text)?;
        return Ok(format!("catalog ({} features)", c.len()));
    }
    Err(invalid(format!("{}: unrecognized file", path.display())))
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let mut failed = 0;
    for p in &a.paths {
        match validate_path(p) {
            Ok(kind) => println!("ok      {}  {kind}", p.display()),
            Err(e) => {
                failed += 1;
                println!("invalid {}  {e}", p.display());
            }
        }
    }
    if failed > 0 {
        Err(invalid(format!("{failed} of {} path(s) failed validation", a.paths.len())))
    } else {
        Ok(())
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let (manifest, out_dir) = match &cli.command {
        Command::Synth(SynthCommand::Archetype(a)) => (cmd_synth_archetype(a)?, &a.out),
        Command::Synth(SynthCommand::Transform(a)) => (cmd_synth_transform(a)?, &a.out),
        Command::Fit(a) => (cmd_fit(a)?, &a.out),
        Command::Export(a) => (cmd_export(a)?, &a.out),
        Command::Serve(a) => return cmd_serve(a),
        Command::Validate(a) => return cmd_validate(a),
    };
    let mut manifest = manifest;
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(out_dir)
}

/// Parses `args` and runs the command, reporting errors on standard error.
/// Returns the exit code.
pub fn run_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    ExitCode::from(run_code(args))
}
