//! Command line harness around the tire and stability control library.
//!
//! Five subcommands cover the full workflow: `synth` generates calibrated
//! slip sweep data, `fit` recovers a coefficient tree from such data,
//! `sim` runs one closed loop maneuver, `compare` runs the adaptive
//! against the fixed controller reference on the same plant, and
//! `thermal-train` fits the surface temperature network. Every command
//! is deterministic: identical inputs and seeds produce byte identical
//! output files. Errors exit nonzero with a single `error: ...` line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use adaptire_core::adapt::AdaptedMfCoefficients;
use adaptire_core::esc::{write_decision_log, EscConfig};
use adaptire_core::fit::{
    fit_sweeps, read_sweep_csv, synth, write_sweep_csv, PipelineOptions, SweepGenerator,
};
use adaptire_core::maneuver::{
    compare_adaptive_vs_fixed, export_results, render_summary, run_maneuver, ManeuverSpec,
};
use adaptire_core::textio::{format_f64, KvFile, KvSection};
use adaptire_core::thermal::rnn::{
    prediction_rms, rnn_train, series_from_samples, write_training_csv, TrainOptions,
};
use adaptire_core::thermal::{synthetic_thermal_series, ThermalParameters};
use adaptire_core::vehicle::plant::TireSetup;
use adaptire_core::vehicle::VehicleParameters;

#[derive(Parser)]
#[command(
    name = "adaptire",
    version,
    about = "Condition-adaptive tire model fitting and yaw stability simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate calibrated synthetic slip sweep data.
    Synth {
        /// Output directory for sweeps.csv and truth_tree.txt.
        #[arg(long)]
        out: PathBuf,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative lateral force noise fraction.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Fit a coefficient tree from slip sweep CSV data.
    Fit {
        /// Slip sweep measurements.
        data: PathBuf,
        /// Output directory for fitted_tree.txt and fit_report.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed loop maneuver.
    Sim {
        /// Output directory for the series, summary, and decision log.
        #[arg(long)]
        out: PathBuf,
        /// Combined [vehicle] / [esc] / [tires] configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Coefficient tree file; the calibrated built-in tree when absent.
        #[arg(long)]
        tire: Option<PathBuf>,
        /// Maneuver definition file; the standard dwell test when absent.
        #[arg(long)]
        maneuver: Option<PathBuf>,
        /// Enable or disable the stability controller.
        #[arg(long, value_enum, default_value_t = Switch::On)]
        esc: Switch,
        /// Override the controller's adaptive reference setting.
        #[arg(long, value_enum)]
        adaptive: Option<Switch>,
    },
    /// Run the adaptive against the fixed controller reference.
    Compare {
        /// Output directory for both runs and the delta report.
        #[arg(long)]
        out: PathBuf,
        /// Combined [vehicle] / [esc] / [tires] configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Coefficient tree file; the calibrated built-in tree when absent.
        #[arg(long)]
        tire: Option<PathBuf>,
        /// Maneuver definition file; the standard dwell test when absent.
        #[arg(long)]
        maneuver: Option<PathBuf>,
    },
    /// Train and evaluate the surface temperature network.
    ThermalTrain {
        /// Output directory for the model, held out data, and report.
        #[arg(long)]
        out: PathBuf,
        /// Session generation and weight initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training epochs.
        #[arg(long, default_value_t = 3000)]
        epochs: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn enabled(self) -> bool {
        self == Switch::On
    }
}

/// Everything a simulation command reads from `--config`.
struct RunConfig {
    params: VehicleParameters,
    esc: EscConfig,
    pressure_kpa: f64,
    tread_depth_mm: f64,
    ambient_c: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reference = synth::reference_conditions();
        Self {
            params: VehicleParameters::default(),
            esc: EscConfig::default(),
            pressure_kpa: reference.pressure_kpa,
            tread_depth_mm: reference.tread_depth_mm,
            ambient_c: reference.surface_temp_c,
        }
    }
}

fn load_run_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::default();
    let Some(path) = path else {
        return Ok(config);
    };
    let file = KvFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(section) = file.section("vehicle") {
        config.params = VehicleParameters::from_kv_section(section)
            .with_context(|| format!("[vehicle] in {}", path.display()))?;
    }
    if let Some(section) = file.section("esc") {
        config.esc = EscConfig::from_kv_section(section)
            .with_context(|| format!("[esc] in {}", path.display()))?;
    }
    if let Some(section) = file.section("tires") {
        config.pressure_kpa = section.f64_or("pressure_kpa", config.pressure_kpa)?;
        config.tread_depth_mm = section.f64_or("tread_depth_mm", config.tread_depth_mm)?;
        config.ambient_c = section.f64_or("ambient_c", config.ambient_c)?;
    }
    Ok(config)
}

fn load_tree(path: Option<&Path>) -> anyhow::Result<AdaptedMfCoefficients> {
    match path {
        None => Ok(synth::table_truth()),
        Some(path) => AdaptedMfCoefficients::load(path)
            .with_context(|| format!("reading {}", path.display())),
    }
}

fn load_maneuver(path: Option<&Path>) -> anyhow::Result<ManeuverSpec> {
    match path {
        None => Ok(ManeuverSpec::default()),
        Some(path) => {
            ManeuverSpec::load(path).with_context(|| format!("reading {}", path.display()))
        }
    }
}

fn ensure_out_dir(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn run_synth(out: &Path, seed: u64, noise: f64) -> anyhow::Result<()> {
    ensure_out_dir(out)?;
    let generator = SweepGenerator::calibrated(noise);
    let observations = generator.generate(seed)?;
    write_sweep_csv(&out.join("sweeps.csv"), &observations)?;
    synth::table_truth().save(&out.join("truth_tree.txt"))?;
    println!("observations = {}", observations.len());
    Ok(())
}

fn run_fit(data: &Path, out: &Path) -> anyhow::Result<()> {
    ensure_out_dir(out)?;
    let observations =
        read_sweep_csv(data).with_context(|| format!("reading {}", data.display()))?;
    let report = fit_sweeps(&observations, &PipelineOptions::default())?;
    report.best_tree().save(&out.join("fitted_tree.txt"))?;
    std::fs::write(out.join("fit_report.txt"), report.render_text())?;
    print!("{}", report.render_text());
    Ok(())
}

fn run_sim(
    out: &Path,
    config: Option<&Path>,
    tire: Option<&Path>,
    maneuver: Option<&Path>,
    esc: Switch,
    adaptive: Option<Switch>,
) -> anyhow::Result<()> {
    ensure_out_dir(out)?;
    let mut config = load_run_config(config)?;
    if let Some(adaptive) = adaptive {
        config.esc.adaptive_reference = adaptive.enabled();
    }
    let tree = load_tree(tire)?;
    let spec = load_maneuver(maneuver)?;
    let setup = TireSetup::uniform(
        tree,
        config.pressure_kpa,
        config.tread_depth_mm,
        config.ambient_c,
    );
    let result = run_maneuver(
        &spec,
        &config.params,
        &setup,
        &config.esc,
        esc.enabled(),
        &setup.tree,
    )?;
    export_results(&result, out, "sim")?;
    write_decision_log(&out.join("sim_decisions.csv"), &result.decisions)?;
    print!("{}", render_summary(&result));
    Ok(())
}

fn run_compare(
    out: &Path,
    config: Option<&Path>,
    tire: Option<&Path>,
    maneuver: Option<&Path>,
) -> anyhow::Result<()> {
    ensure_out_dir(out)?;
    let config = load_run_config(config)?;
    let tree = load_tree(tire)?;
    let spec = load_maneuver(maneuver)?;
    let setup = TireSetup::uniform(
        tree,
        config.pressure_kpa,
        config.tread_depth_mm,
        config.ambient_c,
    );
    let report =
        compare_adaptive_vs_fixed(&spec, &config.params, &setup, &config.esc, &setup.tree)?;
    export_results(&report.adaptive, out, "adaptive")?;
    export_results(&report.fixed, out, "fixed")?;
    std::fs::write(out.join("compare_report.txt"), report.render_text())?;
    print!("{}", report.render_text());
    Ok(())
}

fn run_thermal_train(out: &Path, seed: u64, epochs: usize) -> anyhow::Result<()> {
    ensure_out_dir(out)?;
    let params = ThermalParameters::default();
    let sessions = 6;
    let train: Vec<_> = (0..sessions)
        .map(|i| series_from_samples(&synthetic_thermal_series(&params, seed + i, 600.0, 2.0)))
        .collect();
    let held_out_samples = synthetic_thermal_series(&params, seed + 9, 600.0, 2.0);
    let held_out = series_from_samples(&held_out_samples);
    write_training_csv(&out.join("held_out_series.csv"), &held_out_samples)?;

    let options = TrainOptions {
        epochs,
        seed,
        ..TrainOptions::default()
    };
    let (model, history) = rnn_train(&train, &options)?;
    model.save(&out.join("rnn_model.txt"))?;
    let rms = prediction_rms(&model, &held_out)?;

    let mut section = KvSection::new("training");
    section.set("sessions", sessions.to_string());
    section.set("epochs", epochs.to_string());
    section.set("parameters", model.parameter_count().to_string());
    section.set_f64("final_loss", *history.last().unwrap_or(&f64::NAN));
    section.set_f64("held_out_rms_c", rms);
    let mut file = KvFile::new();
    file.push(section);
    std::fs::write(out.join("thermal_report.txt"), file.render())?;
    println!("held_out_rms_c = {}", format_f64(rms));
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { out, seed, noise } => run_synth(&out, seed, noise),
        Command::Fit { data, out } => run_fit(&data, &out),
        Command::Sim {
            out,
            config,
            tire,
            maneuver,
            esc,
            adaptive,
        } => run_sim(
            &out,
            config.as_deref(),
            tire.as_deref(),
            maneuver.as_deref(),
            esc,
            adaptive,
        ),
        Command::Compare {
            out,
            config,
            tire,
            maneuver,
        } => run_compare(&out, config.as_deref(), tire.as_deref(), maneuver.as_deref()),
        Command::ThermalTrain { out, seed, epochs } => run_thermal_train(&out, seed, epochs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
