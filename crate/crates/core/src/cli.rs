//! Command-line front end; the binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::em::fit_multi_start;
use crate::error::{Error, Result};
use crate::eval::{compare_variants, cross_validate, heldout_logp, within_cluster_stdev, Variant};
use crate::inference::curve_loglik;
use crate::io::{
    atomic_write, export_alignments, export_cluster_bands, format_float, load_curves_csv,
    load_model, save_model, write_curves_csv, write_latents_csv, RunManifest,
};
use crate::model::{default_grid_length, validate_config, ModelConfig, WarpMixtureModel};
use crate::synth::{make_template_model, sample_dataset, Shape, TemplateSpec};

#[derive(Debug, Parser)]
#[command(
    name = "curvewarp",
    version,
    about = "Cluster and align variable-length curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and save it as JSON.
    Fit(FitArgs),
    /// Held-out log density of a dataset under a saved model.
    Score(ScoreArgs),
    /// Export the most probable alignment of every curve.
    Align(AlignArgs),
    /// Cross-validate one configuration.
    Cv(CvArgs),
    /// Cross-validate shift/warp variants of a configuration on shared folds.
    Compare(CompareArgs),
    /// Sample a synthetic dataset from a template model.
    Simulate(SimulateArgs),
    /// Export cluster means with two-standard-deviation bands.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Number of clusters.
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    /// Number of allowed start positions.
    #[arg(long, default_value_t = 1)]
    pub max_shift: usize,
    /// Largest number of grid positions one step may skip.
    #[arg(long, default_value_t = 0)]
    pub max_skip: usize,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub stay: Switch,
    /// Per-curve measurement offsets.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub offsets: Switch,
    /// Grid length; defaults to the smallest grid every path fits on.
    #[arg(long)]
    pub grid_len: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Dirichlet pseudo-count for weights and tables.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Variance floor as a fraction of the pooled data variance.
    #[arg(long, default_value_t = 1e-3)]
    pub variance_floor: f64,
    /// Learn a separate step distribution at every grid position.
    #[arg(long)]
    pub untied: bool,
    /// Search over grid translations of each cluster template after fitting.
    #[arg(long)]
    pub translation_search: bool,
}

impl ModelFlags {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            components: self.clusters,
            max_shift: self.max_shift,
            max_skip: self.max_skip,
            allow_stay: self.stay.on(),
            grid_len: self.grid_len,
            offsets_enabled: self.offsets.on(),
            dirichlet_alpha: self.alpha,
            variance_floor_frac: self.variance_floor,
            tol: self.tol,
            max_iters: self.max_iters,
            tie_transitions: !self.untied,
            translation_search: self.translation_search,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Random EM restarts; the best final objective is kept.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Optional per-curve score table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub cv: CvArgs,
    /// Variants to compare.
    #[arg(long, value_delimiter = ',', default_value = "none,shift,warp,both")]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output curve table.
    #[arg(long)]
    pub out: PathBuf,
    /// Latent table; defaults to the output path with a `.latents.csv` extension.
    #[arg(long)]
    pub latents: Option<PathBuf>,
    /// Also save the generating model here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 1)]
    pub dims: usize,
    #[arg(long, default_value_t = 1)]
    pub max_shift: usize,
    #[arg(long, default_value_t = 0)]
    pub max_skip: usize,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub stay: Switch,
    /// Marks offsets as enabled in the saved generating model.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub offsets: Switch,
    #[arg(long)]
    pub grid_len: Option<usize>,
    #[arg(long, value_enum, default_value_t = ShapeArg::Bump)]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 100)]
    pub curves: usize,
    #[arg(long, default_value_t = 10)]
    pub min_len: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Standard deviation of the per-curve offset added to every point.
    #[arg(long, default_value_t = 1.0)]
    pub offset_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Bump,
    Ramp,
    Sine,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Shape {
        match s {
            ShapeArg::Bump => Shape::Bump,
            ShapeArg::Ramp => Shape::Ramp,
            ShapeArg::Sine => Shape::Sine,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output band table.
    #[arg(long)]
    pub out: PathBuf,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the text to print on standard output.
pub fn run<I, T>(args: I) -> std::result::Result<String, RunError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(RunError::Usage)?;
    let recorded: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    execute(cli.command, recorded).map_err(RunError::Failed)
}

#[derive(Debug)]
pub enum RunError {
    Usage(clap::Error),
    Failed(Error),
}

#[derive(Serialize)]
struct FitSummary {
    seed: u64,
    iterations: usize,
    converged: bool,
    final_objective: f64,
    objective_trace: Vec<f64>,
    decreases: usize,
    train_logp: f64,
}

fn execute(command: Command, args: Vec<String>) -> Result<String> {
    match command {
        Command::Fit(a) => {
            let mut m = RunManifest::start("fit", args);
            m.input(&a.data)?;
            let data = load_curves_csv(&a.data)?;
            let cfg = validate_config(&a.model.config(), &data)?;
            let result = fit_multi_start(&data, &cfg, a.starts, a.seed)?;
            save_model(&result.model, &a.out)?;
            let train_logp = heldout_logp(&result.model, &data)?;
            let summary = FitSummary {
                seed: result.seed,
                iterations: result.iterations,
                converged: result.converged,
                final_objective: result.final_objective(),
                objective_trace: result.objective_trace.clone(),
                decreases: result.warnings.len(),
                train_logp,
            };
            m.config(cfg.config())
                .seed(a.seed)
                .output(&a.out)?
                .summary(&summary)
                .finish(&a.out)?;
            Ok(format!(
                "objective {} after {} iterations ({}), training logP {}\n",
                format_float(summary.final_objective),
                summary.iterations,
                if summary.converged {
                    "converged"
                } else {
                    "iteration limit"
                },
                format_float(train_logp)
            ))
        }
        Command::Score(a) => {
            let data = load_curves_csv(&a.data)?;
            let model = load_model(&a.model)?;
            let logp = heldout_logp(&model, &data)?;
            if let Some(out) = &a.out {
                let mut m = RunManifest::start("score", args);
                m.input(&a.data)?.input(&a.model)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                let err = |e: csv::Error| Error::format(out, e.to_string());
                w.write_record(["curve_id", "length", "loglik", "logp_per_measurement"])
                    .map_err(err)?;
                for c in data.curves() {
                    let ll = curve_loglik(c, &model)?;
                    let per = ll / (c.len() * c.dims()) as f64;
                    w.write_record([
                        c.id().to_string(),
                        c.len().to_string(),
                        format_float(ll),
                        format_float(per),
                    ])
                    .map_err(err)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::io(out, e.into_error()))?;
                atomic_write(out, &bytes)?;
                m.output(out)?
                    .summary(&serde_json::json!({ "logp": logp }))
                    .finish(out)?;
            }
            Ok(format!("logP {}\n", format_float(logp)))
        }
        Command::Align(a) => {
            let mut m = RunManifest::start("align", args);
            m.input(&a.data)?.input(&a.model)?;
            let data = load_curves_csv(&a.data)?;
            let model = load_model(&a.model)?;
            export_alignments(&model, &data, &a.out)?;
            let stdev = if data.is_empty() {
                0.0
            } else {
                within_cluster_stdev(&model, &data)?
            };
            m.output(&a.out)?
                .summary(&serde_json::json!({ "within_cluster_stdev": stdev }))
                .finish(&a.out)?;
            Ok(format!("within-cluster stdev {}\n", format_float(stdev)))
        }
        Command::Cv(a) => {
            let mut m = RunManifest::start("cv", args);
            m.input(&a.data)?;
            let data = load_curves_csv(&a.data)?;
            let cfg = validate_config(&a.model.config(), &data)?;
            let report = cross_validate(&data, &cfg, a.folds, a.starts, a.seed)?;
            write_json(&a.out, &report)?;
            m.config(cfg.config())
                .seed(a.seed)
                .output(&a.out)?
                .finish(&a.out)?;
            Ok(format!(
                "{} mean logP {}\n",
                report.config_label,
                format_float(report.mean_logp)
            ))
        }
        Command::Compare(a) => {
            let cv = &a.cv;
            let mut m = RunManifest::start("compare", args);
            m.input(&cv.data)?;
            let data = load_curves_csv(&cv.data)?;
            let base = cv.model.config();
            let reports =
                compare_variants(&data, &base, &a.variants, cv.folds, cv.starts, cv.seed)?;
            write_json(&cv.out, &reports)?;
            m.config(&base)
                .seed(cv.seed)
                .output(&cv.out)?
                .finish(&cv.out)?;
            Ok(reports
                .iter()
                .map(|r| {
                    format!(
                        "{} mean logP {}\n",
                        r.config_label,
                        format_float(r.mean_logp)
                    )
                })
                .collect())
        }
        Command::Simulate(a) => {
            let mut m = RunManifest::start("simulate", args);
            let grid_len = a
                .grid_len
                .unwrap_or_else(|| default_grid_length(a.max_shift, a.max_skip, a.max_len));
            let spec = TemplateSpec {
                components: a.clusters,
                dims: a.dims,
                max_shift: a.max_shift,
                max_skip: a.max_skip,
                allow_stay: a.stay.on(),
                grid_len,
                shape: a.shape.into(),
                separation: a.separation,
                noise_var: a.noise_var,
            };
            let mut model = make_template_model(&spec)?;
            if a.offsets.on() {
                let mut parts = model.into_parts();
                parts.topology.offsets_enabled = true;
                model = WarpMixtureModel::from_parts(parts)?;
            }
            if a.min_len == 0 || a.min_len > a.max_len {
                return Err(Error::format(
                    &a.out,
                    format!("invalid length range {}..={}", a.min_len, a.max_len),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let (data, latents) = sample_dataset(
                &model,
                a.curves,
                a.min_len..=a.max_len,
                &mut rng,
                a.offset_sigma,
            )?;
            write_curves_csv(&data, &a.out)?;
            let latent_path = a
                .latents
                .clone()
                .unwrap_or_else(|| a.out.with_extension("latents.csv"));
            write_latents_csv(&data, &latents, &latent_path)?;
            m.config(&spec)
                .seed(a.seed)
                .output(&a.out)?
                .output(&latent_path)?;
            if let Some(p) = &a.model_out {
                save_model(&model, p)?;
                m.output(p)?;
            }
            m.finish(&a.out)?;
            Ok(format!(
                "wrote {} curves to {}\n",
                data.len(),
                a.out.display()
            ))
        }
        Command::Export(a) => {
            let mut m = RunManifest::start("export", args);
            m.input(&a.model)?;
            let model = load_model(&a.model)?;
            export_cluster_bands(&model, &a.out)?;
            m.output(&a.out)?.finish(&a.out)?;
            Ok(format!(
                "wrote bands for {} clusters to {}\n",
                model.components(),
                a.out.display()
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let cli =
            Cli::try_parse_from(["curvewarp", "cv", "--data", "d.csv", "--out", "r.json"]).unwrap();
        let Command::Cv(a) = cli.command else {
            panic!("expected cv")
        };
        assert_eq!((a.starts, a.folds), (5, 10));
        assert_eq!(a.model.config(), ModelConfig::default());
    }

    #[test]
    fn switches_parse() {
        let cli = Cli::try_parse_from([
            "curvewarp",
            "fit",
            "--data",
            "d",
            "--out",
            "m",
            "--stay",
            "on",
            "--offsets",
            "on",
            "--max-skip",
            "2",
            "--clusters",
            "3",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else {
            panic!("expected fit")
        };
        let cfg = a.model.config();
        assert!(cfg.allow_stay && cfg.offsets_enabled);
        assert_eq!((cfg.components, cfg.max_skip), (3, 2));
    }

    #[test]
    fn variants_parse() {
        let cli = Cli::try_parse_from([
            "curvewarp",
            "compare",
            "--data",
            "d",
            "--out",
            "o",
            "--variants",
            "none,both",
        ])
        .unwrap();
        let Command::Compare(a) = cli.command else {
            panic!("expected compare")
        };
        assert_eq!(a.variants, vec![Variant::None, Variant::Both]);
        assert!(Cli::try_parse_from([
            "curvewarp",
            "compare",
            "--data",
            "d",
            "--out",
            "o",
            "--variants",
            "x"
        ])
        .is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let Err(RunError::Failed(e)) = run([
            "curvewarp",
            "export",
            "--model",
            "/nonexistent/m.json",
            "--out",
            "/tmp/x",
        ]) else {
            panic!("expected failure")
        };
        assert_eq!(e.category(), crate::error::ErrorCategory::Io);
    }
}
