//! Run configuration: defaults, then the TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use postcut_core::seeding::UnitSampling;
use postcut_core::Admissibility;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Resident population of the 50 states used for apportionment.
pub const DEFAULT_US_POPULATION: u64 = 334_994_511;

/// Values read from the config file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub units: Option<PathBuf>,
    pub offices: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub reference_plan: Option<PathBuf>,
    pub id_key: Option<String>,
    pub pop_key: Option<String>,
    pub name_key: Option<String>,
    pub percentile: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: Option<f64>,
    pub pp_min_ref: Option<f64>,
    pub iterations: Option<u64>,
    pub burn_in_rate: Option<f64>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub chains: Option<usize>,
    pub districts: Option<usize>,
    pub us_population: Option<u64>,
    pub sampling: Option<UnitSampling>,
    pub k_max: Option<usize>,
}

/// Flags shared by every subcommand; each overrides the file value.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Persistence percentile that sets the network radius.
    #[arg(long, global = true)]
    pub percentile: Option<f64>,
    /// Allowed population deviation, as a fraction.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Allowed relative compactness loss, as a fraction.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub iterations: Option<u64>,
    #[arg(long, global = true)]
    pub burn_in_rate: Option<f64>,
    /// Independent chains to run in parallel.
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    /// Continue an interrupted chain from its last checkpoint.
    #[arg(long, global = true)]
    pub resume: bool,
    /// CSV of unit adjacencies that replaces the computed graph.
    #[arg(long, global = true)]
    pub adjacency: Option<PathBuf>,
    /// Mixture parameters to evaluate instead of fitting the history.
    #[arg(long, global = true)]
    pub model_json: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub units: Option<PathBuf>,
    #[arg(long, global = true)]
    pub offices: Option<PathBuf>,
    /// Plan whose compactness and cut edges serve as the reference.
    #[arg(long, global = true)]
    pub reference_plan: Option<PathBuf>,
    /// Reference cut-edge count, when no reference plan is scored.
    #[arg(long, global = true)]
    pub reference_cut_edges: Option<usize>,
    #[arg(long, global = true)]
    pub pp_min_ref: Option<f64>,
    #[arg(long, global = true)]
    pub districts: Option<usize>,
    /// Stop the chain after this many iterations without finishing (testing aid).
    #[arg(long, global = true, hide = true)]
    pub halt_after: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub units: Option<PathBuf>,
    pub offices: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub out: PathBuf,
    pub reference_plan: Option<PathBuf>,
    pub reference_cut_edges: Option<usize>,
    pub model_json: Option<PathBuf>,
    pub id_key: String,
    pub pop_key: String,
    pub name_key: Option<String>,
    pub percentile: f64,
    pub theta: f64,
    pub kappa: f64,
    pub pp_min_ref: Option<f64>,
    pub iterations: u64,
    pub burn_in_rate: f64,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub chains: usize,
    pub districts: Option<usize>,
    pub us_population: u64,
    pub sampling: UnitSampling,
    pub k_max: usize,
    pub resume: bool,
    #[serde(skip)]
    pub halt_after: Option<u64>,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        // relative paths in the file are relative to the file
        let base = flags
            .config
            .as_ref()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let cfg = RunConfig {
            units: flags.units.clone().or(rel(file.units)),
            offices: flags.offices.clone().or(rel(file.offices)),
            adjacency: flags.adjacency.clone().or(rel(file.adjacency)),
            out: flags
                .out
                .clone()
                .or(rel(file.out))
                .unwrap_or_else(|| PathBuf::from("out")),
            reference_plan: flags.reference_plan.clone().or(rel(file.reference_plan)),
            reference_cut_edges: flags.reference_cut_edges,
            model_json: flags.model_json.clone(),
            id_key: file.id_key.unwrap_or_else(|| "GEOID".into()),
            pop_key: file.pop_key.unwrap_or_else(|| "POP".into()),
            name_key: file.name_key,
            percentile: flags.percentile.or(file.percentile).unwrap_or(100.0),
            theta: flags.theta.or(file.theta).unwrap_or(0.05),
            kappa: flags.kappa.or(file.kappa).unwrap_or(0.05),
            pp_min_ref: flags.pp_min_ref.or(file.pp_min_ref),
            iterations: flags.iterations.or(file.iterations).unwrap_or(50_000),
            burn_in_rate: flags.burn_in_rate.or(file.burn_in_rate).unwrap_or(0.01),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            restarts: file.restarts.unwrap_or(3),
            max_iter: file.max_iter.unwrap_or(1000),
            chains: flags.chains.or(file.chains).unwrap_or(1),
            districts: flags.districts.or(file.districts),
            us_population: file.us_population.unwrap_or(DEFAULT_US_POPULATION),
            sampling: file.sampling.unwrap_or_default(),
            k_max: file.k_max.unwrap_or(8),
            resume: flags.resume,
            halt_after: flags.halt_after,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fraction = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::invalid(format!("{name} must be in [0, 1), got {v}")))
            }
        };
        fraction("theta", self.theta)?;
        fraction("kappa", self.kappa)?;
        fraction("burn_in_rate", self.burn_in_rate)?;
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(CliError::invalid(format!(
                "percentile must be in [0, 100], got {}",
                self.percentile
            )));
        }
        if self.iterations == 0 || self.chains == 0 || self.restarts == 0 || self.max_iter == 0 {
            return Err(CliError::invalid(
                "iterations, chains, restarts and max_iter must be positive",
            ));
        }
        if self.k_max == 0 {
            return Err(CliError::invalid("k_max must be positive"));
        }
        if let Some(p) = self.pp_min_ref {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::invalid(format!("pp_min_ref must be in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn admissibility(&self, pp_min_ref: f64) -> Admissibility {
        Admissibility {
            theta: self.theta,
            kappa: self.kappa,
            pp_min_ref,
        }
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}
