//! `ddwave` command-line driver.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when the
//! numbers themselves fail (singular systems, degenerate search grids).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ddwave_core::channel::{Path, PathSet, ScenarioConfig};
use ddwave_core::detection::{Constellation, ConstellationKind};
use ddwave_core::harness::analysis::{
    comparison_csv, comparison_table, diversity_probe, guard_overhead, render_table, ComparisonSettings,
    DiversitySettings, GuardPolicy,
};
use ddwave_core::harness::experiment::{
    ber_csv, manifest_line, run_experiment, sense_summary_csv, trial_seed, write_bundle, Experiment, JsonMirror,
    Manifest, Task,
};
use ddwave_core::harness::viz::{viz_channel, Representation};
use ddwave_core::waveform::WaveformKind;
use ddwave_core::DdError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ddwave", version, about = "OTFS and AFDM simulation over doubly-dispersive channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame length N.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated SNR points in dB; `inf` adds a noiseless point.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// afdm, otfs or both.
    #[arg(long)]
    waveform: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Channel heatmap in one representation.
    VizChannel {
        #[command(flatten)]
        common: Common,
        /// tf, dd, eff-otfs or eff-afdm.
        #[arg(long, default_value = "dd")]
        repr: String,
        /// Also write the phase grid.
        #[arg(long)]
        phase: bool,
    },
    /// Monte Carlo BER sweep with LMMSE detection.
    Ber {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo delay-Doppler estimation sweep.
    Sense {
        #[command(flatten)]
        common: Common,
    },
    /// Five-property waveform comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Empirical diversity order by difference-pattern enumeration.
    DiversityProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bpsk")]
        constellation: String,
        /// Random patterns to check when exhaustive enumeration is too large.
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Pilot guard overhead of both waveforms.
    Overhead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chirp_width: Option<usize>,
        #[arg(long)]
        delay_width: Option<usize>,
        #[arg(long)]
        doppler_width: Option<usize>,
    },
}

fn base_experiment(common: &Common, default: ScenarioConfig) -> anyhow::Result<Experiment> {
    let mut e = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|err| usage(format!("{}: {err}", path.display())))?;
            serde_json::from_str::<Experiment>(&text).map_err(DdError::from)?
        }
        None => Experiment::new(default),
    };
    if let Some(n) = common.n {
        e.scenario.n = n;
        e.otfs_grid = None;
    }
    if let Some(points) = &common.snr {
        e.snr_grid_db.clear();
        e.noiseless = false;
        for p in points {
            if p.eq_ignore_ascii_case("inf") {
                e.noiseless = true;
            } else {
                e.snr_grid_db.push(p.trim().parse().map_err(|_| usage(format!("bad SNR value `{p}`")))?);
            }
        }
    }
    if let Some(t) = common.trials {
        e.trials = t;
    }
    if let Some(s) = common.seed {
        e.seed = s;
    }
    if let Some(w) = &common.waveform {
        e.waveforms = match w.to_ascii_lowercase().as_str() {
            "both" | "all" => vec![WaveformKind::Afdm, WaveformKind::Otfs],
            other => vec![other.parse::<WaveformKind>().map_err(usage)?],
        };
    }
    if let Some(out) = &common.out {
        e.outputs = out.clone();
    }
    e.validate()?;
    Ok(e)
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig::vehicular(64, 3, 2.0)
}

/// The configured channel, or one drawn from the master seed.
fn channel_of(e: &Experiment) -> anyhow::Result<PathSet> {
    Ok(match &e.channel {
        Some(p) => PathSet::new(p.clone())?,
        None => PathSet::random_integer(&mut ChaCha8Rng::seed_from_u64(trial_seed(e.seed, 0)), e.paths, &e.scenario)?,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::VizChannel { common, repr, phase } => {
            let repr: Representation = repr.parse().map_err(usage)?;
            let e = base_experiment(&common, default_scenario())?;
            let paths = channel_of(&e)?;
            let mut manifest = Manifest::with_parameters(
                &e,
                Task::Viz,
                serde_json::json!({ "repr": repr.name(), "phase": phase, "paths": paths }),
            )?;
            let v = viz_channel(&paths, &e.scenario, repr, phase)?;
            let mut outputs = vec![(
                format!("channel_{}.csv", repr.name()),
                v.magnitude.with_meta("manifest", &manifest.hash).to_csv(),
            )];
            if let Some(p) = v.phase {
                outputs.push((format!("channel_{}_phase.csv", repr.name()), p.with_meta("manifest", &manifest.hash).to_csv()));
            }
            for f in write_bundle(&e.outputs, &mut manifest, &outputs)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Ber { common } => {
            let e = base_experiment(&common, default_scenario())?;
            let r = run_experiment(&e, Task::Ber)?;
            print!("{}", ber_csv(&r.ber, &r.manifest.hash));
        }
        Command::Sense { common } => {
            let e = base_experiment(&common, default_scenario())?;
            let r = run_experiment(&e, Task::Sense)?;
            print!("{}", sense_summary_csv(&r.sensing.expect("sensing run").summary, &r.manifest.hash));
        }
        Command::Compare { common } => {
            let e = base_experiment(&common, ScenarioConfig::vehicular(64, 2, 1.0))?;
            let mut settings = ComparisonSettings { scenario: e.scenario.clone(), ..Default::default() };
            if let Some(p) = &e.channel {
                settings.paths = p.clone();
            }
            let rows = comparison_table(&settings)?;
            let mut manifest = Manifest::with_parameters(&e, Task::Compare, serde_json::to_value(&settings)?)?;
            let h = manifest.hash.clone();
            let outputs = vec![
                ("compare.csv".to_string(), format!("{}{}", manifest_line(&h), comparison_csv(&rows))),
                ("compare.json".to_string(), serde_json::to_string_pretty(&JsonMirror { manifest: &h, rows: &rows })?),
            ];
            write_bundle(&e.outputs, &mut manifest, &outputs)?;
            print!("{}", render_table(&rows));
        }
        Command::DiversityProbe { common, constellation, subsample } => {
            let kind: ConstellationKind = constellation.parse().map_err(usage)?;
            let mut e = base_experiment(&common, ScenarioConfig::vehicular(8, 1, 1.0))?;
            e.constellation = kind;
            if e.channel.is_none() {
                e.channel = Some(vec![Path::unit(0, 0.0), Path::unit(1, 0.0)]);
            }
            let paths = channel_of(&e)?;
            let settings = DiversitySettings { subsample, seed: e.seed, ..Default::default() };
            let mut reports = Vec::new();
            for &w in &e.waveforms {
                let r = diversity_probe(&e.waveform(w)?, &e.scenario, &paths, &Constellation::new(kind), &settings)?;
                println!(
                    "{w}: min rank {} of {} over {} patterns ({}); witness {:?}",
                    r.min_rank,
                    r.paths,
                    r.patterns_checked,
                    if r.exhaustive { "exhaustive" } else { "subsampled" },
                    r.witness.iter().map(|d| [d.re, d.im]).collect::<Vec<_>>()
                );
                reports.push(r);
            }
            let mut manifest = Manifest::with_parameters(&e, Task::Diversity, serde_json::to_value(&settings)?)?;
            let h = manifest.hash.clone();
            let body = serde_json::to_string_pretty(&JsonMirror { manifest: &h, rows: &reports })?;
            write_bundle(&e.outputs, &mut manifest, &[("diversity.json".to_string(), body)])?;
        }
        Command::Overhead { common, chirp_width, delay_width, doppler_width } => {
            let e = base_experiment(&common, ScenarioConfig::vehicular(64, 2, 1.0))?;
            let policy = GuardPolicy { chirp_width, delay_width, doppler_width };
            let s = &e.scenario;
            let otfs = match e.waveform(WaveformKind::Otfs)? {
                ddwave_core::WaveformConfig::Otfs(c) => (c.k, c.l),
                _ => unreachable!(),
            };
            let mut csv = String::from("waveform,dimensions,widths,reserved,n,fraction\n");
            for &w in &e.waveforms {
                let g = guard_overhead(w, s.max_delay, s.max_doppler.ceil() as usize, s.n, otfs, &policy)?;
                let widths = g.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x");
                println!("{w}: {}D guard {widths}, {}/{} = {:.6}", g.dimensions, g.reserved, g.n, g.fraction);
                csv.push_str(&format!("{w},{},{widths},{},{},{:.9e}\n", g.dimensions, g.reserved, g.n, g.fraction));
            }
            let mut manifest = Manifest::with_parameters(&e, Task::Overhead, serde_json::to_value(policy)?)?;
            let body = format!("{}{csv}", manifest_line(&manifest.hash));
            write_bundle(&e.outputs, &mut manifest, &[("overhead.csv".to_string(), body)])?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<DdError>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).context("ddwave failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
