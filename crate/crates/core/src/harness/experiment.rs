//! Monte Carlo driver for BER and sensing sweeps.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::afdm::AfdmConfig;
use crate::channel::{apply_channel, NoiseModel, Path, PathSet, ScenarioConfig};
use crate::detection::{count_bit_errors, demap, Constellation, ConstellationKind, DetectionReport, LmmseEqualizer};
use crate::error::{DdError, Result};
use crate::otfs::OtfsConfig;
use crate::sensing::{
    associate, estimate_grid_sic, sensing_metrics_paired, EstimationResult, MetricsConfig, SensingMetrics,
    SensingProblem,
};
use crate::waveform::{WaveformConfig, WaveformKind};
use crate::C64;

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "DDWAVE_THREADS";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Path gain draw for random channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainModel {
    /// i.i.d. `CN(0, 1/P)`.
    #[default]
    Rayleigh,
    /// `|h_p| = 1/√P` with uniform phase.
    EqualPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSettings {
    /// Defaults to the true path count.
    pub p_assumed: Option<usize>,
    pub doppler_step: f64,
    pub refine: bool,
    pub metrics: MetricsConfig,
}

impl Default for SensingSettings {
    fn default() -> Self {
        Self { p_assumed: None, doppler_step: 1.0, refine: false, metrics: MetricsConfig::default() }
    }
}

fn default_waveforms() -> Vec<WaveformKind> {
    vec![WaveformKind::Afdm, WaveformKind::Otfs]
}

fn default_snr() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

fn default_trials() -> usize {
    100
}

fn default_outputs() -> PathBuf {
    PathBuf::from("results")
}

fn default_paths() -> usize {
    3
}

fn default_constellation() -> ConstellationKind {
    ConstellationKind::Qpsk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    #[serde(default = "default_waveforms")]
    pub waveforms: Vec<WaveformKind>,
    /// Es/N0 points; noise variance is `10^(-snr/10)` for unit-energy symbols.
    #[serde(default = "default_snr")]
    pub snr_grid_db: Vec<f64>,
    /// Adds a `σ² = 0` point after the grid.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Paths per random channel.
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub gains: GainModel,
    /// Fixed channel used by every trial instead of a random draw.
    #[serde(default)]
    pub channel: Option<Vec<Path>>,
    #[serde(default = "default_constellation")]
    pub constellation: ConstellationKind,
    #[serde(default)]
    pub afdm_c2: f64,
    /// OTFS `(K, L)`; defaults to the most square factorization.
    #[serde(default)]
    pub otfs_grid: Option<(usize, usize)>,
    #[serde(default)]
    pub sensing: SensingSettings,
}

impl Experiment {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            waveforms: default_waveforms(),
            snr_grid_db: default_snr(),
            noiseless: false,
            trials: default_trials(),
            seed: 0,
            outputs: default_outputs(),
            paths: default_paths(),
            gains: GainModel::default(),
            channel: None,
            constellation: default_constellation(),
            afdm_c2: 0.0,
            otfs_grid: None,
            sensing: SensingSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(text)?;
        e.validate()?;
        Ok(e)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(DdError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() && !self.noiseless {
            return Err(DdError::InvalidConfig("SNR grid is empty".into()));
        }
        if let Some(v) = self.snr_grid_db.iter().find(|v| !v.is_finite()) {
            return Err(DdError::InvalidConfig(format!("SNR {v} is not finite")));
        }
        if self.waveforms.is_empty() {
            return Err(DdError::InvalidConfig("no waveforms selected".into()));
        }
        match &self.channel {
            Some(paths) => PathSet::new(paths.clone())?.validate_against(&self.scenario)?,
            None if self.paths == 0 => return Err(DdError::InvalidConfig("path count must be at least 1".into())),
            None => {}
        }
        for &k in &self.waveforms {
            self.waveform(k)?;
        }
        Ok(())
    }

    pub fn waveform(&self, kind: WaveformKind) -> Result<WaveformConfig> {
        let n = self.scenario.n;
        Ok(match kind {
            WaveformKind::Afdm => WaveformConfig::Afdm(
                AfdmConfig::auto(n, self.scenario.max_doppler.ceil() as u32)?.with_c2(self.afdm_c2),
            ),
            WaveformKind::Otfs => WaveformConfig::Otfs(match self.otfs_grid {
                Some((k, l)) => {
                    if k * l != n {
                        return Err(DdError::InvalidConfig(format!("OTFS grid {k}x{l} does not hold N = {n}")));
                    }
                    OtfsConfig::new(k, l)?
                }
                None => OtfsConfig::square_for(n)?,
            }),
        })
    }

    /// SNR points in sweep order; `None` is the noiseless point.
    pub fn snr_points(&self) -> Vec<Option<f64>> {
        let mut v: Vec<Option<f64>> = self.snr_grid_db.iter().map(|&s| Some(s)).collect();
        if self.noiseless {
            v.push(None);
        }
        v
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|i| trial_seed(self.seed, i)).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `i`: element `i + 1` of the SplitMix64 sequence started at
/// the master seed.
pub fn trial_seed(master: u64, i: u64) -> u64 {
    splitmix64(master.wrapping_add((i + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

pub fn noise_variance(snr_db: Option<f64>) -> f64 {
    snr_db.map_or(0.0, |s| 10f64.powf(-s / 10.0))
}

/// Everything a trial draws, in a fixed order from its seed.
struct TrialDraw {
    paths: PathSet,
    bits: Vec<u8>,
    noise_seeds: Vec<u64>,
}

fn draw_trial(e: &Experiment, seed: u64, bits_per_symbol: usize) -> Result<TrialDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths = match &e.channel {
        Some(p) => PathSet::new(p.clone())?,
        None => {
            let drawn = PathSet::random_integer(&mut rng, e.paths, &e.scenario)?;
            match e.gains {
                GainModel::Rayleigh => drawn,
                GainModel::EqualPower => {
                    let amp = (1.0 / e.paths as f64).sqrt();
                    PathSet::new(
                        drawn
                            .paths()
                            .iter()
                            .map(|p| {
                                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                                Path::new(C64::from_polar(amp, phase), p.delay, p.doppler)
                            })
                            .collect(),
                    )?
                }
            }
        }
    };
    let bits = (0..e.scenario.n * bits_per_symbol).map(|_| rng.random_range(0..2u8)).collect();
    let noise_seeds = e.snr_points().iter().map(|_| rng.random()).collect();
    Ok(TrialDraw { paths, bits, noise_seeds })
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DdError::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn received(w: &WaveformConfig, paths: &PathSet, scenario: &ScenarioConfig, x: &[C64], noise: &NoiseModel) -> Result<(crate::channel::ChannelMatrix, Vec<C64>)> {
    let h = w.channel(paths, scenario)?;
    let r = apply_channel(&h, &w.modulate(x)?, noise)?;
    Ok((h, w.demodulate(&r)?))
}

/// Bit errors per SNR point for one trial and waveform.
fn ber_trial(e: &Experiment, w: &WaveformConfig, c: &Constellation, draw: &TrialDraw) -> Result<Vec<u64>> {
    let x = c.map(&draw.bits)?;
    let h = w.channel(&draw.paths, &e.scenario)?;
    let h_eff = w.effective_channel(&h)?;
    let s = w.modulate(&x)?;
    e.snr_points()
        .iter()
        .zip(&draw.noise_seeds)
        .map(|(&snr, &seed)| {
            let var = noise_variance(snr);
            let r = apply_channel(&h, &s, &NoiseModel::new(var, seed)?)?;
            let y = w.demodulate(&r)?;
            let x_hat = LmmseEqualizer::new(&h_eff, var)?.equalize(&y)?;
            Ok(count_bit_errors(&draw.bits, &demap(&x_hat, c)))
        })
        .collect()
}

/// BER per waveform and SNR point, waveforms in config order.
pub fn simulate_ber(e: &Experiment) -> Result<Vec<DetectionReport>> {
    e.validate()?;
    let c = Constellation::new(e.constellation);
    let seeds = e.trial_seeds();
    let points = e.snr_points();
    let mut out = Vec::new();
    for &kind in &e.waveforms {
        let w = e.waveform(kind)?;
        let per_trial: Vec<Vec<u64>> = with_pool(|| {
            seeds
                .par_iter()
                .map(|&seed| ber_trial(e, &w, &c, &draw_trial(e, seed, c.bits_per_symbol())?))
                .collect::<Result<_>>()
        })??;
        let bits = (e.scenario.n * c.bits_per_symbol()) as u64;
        for (j, &snr) in points.iter().enumerate() {
            let errors = per_trial.iter().map(|t| t[j]).sum();
            out.push(DetectionReport::new(
                kind.name(),
                snr,
                c.bits_per_symbol(),
                e.trials as u64,
                bits * e.trials as u64,
                errors,
            )?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingTrial {
    pub waveform: WaveformKind,
    pub snr_db: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub truth: PathSet,
    pub estimate: EstimationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingSummary {
    pub waveform: WaveformKind,
    pub snr_db: Option<f64>,
    pub metrics: SensingMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingRun {
    pub trials: Vec<SensingTrial>,
    pub summary: Vec<SensingSummary>,
}

pub fn simulate_sensing(e: &Experiment) -> Result<SensingRun> {
    e.validate()?;
    let c = Constellation::new(e.constellation);
    let seeds = e.trial_seeds();
    let points = e.snr_points();
    let settings = &e.sensing;
    let mut trials = Vec::new();
    let mut summary = Vec::new();
    for &kind in &e.waveforms {
        let w = e.waveform(kind)?;
        let per_trial: Vec<Vec<SensingTrial>> = with_pool(|| {
            seeds
                .par_iter()
                .enumerate()
                .map(|(i, &seed)| {
                    let draw = draw_trial(e, seed, c.bits_per_symbol())?;
                    let x = c.map(&draw.bits)?;
                    points
                        .iter()
                        .zip(&draw.noise_seeds)
                        .map(|(&snr, &nseed)| {
                            let noise = NoiseModel::new(noise_variance(snr), nseed)?;
                            let (_, y) = received(&w, &draw.paths, &e.scenario, &x, &noise)?;
                            let p = settings.p_assumed.unwrap_or(draw.paths.len());
                            let problem = SensingProblem::new(y, x.clone(), w.clone(), e.scenario.clone(), p)?
                                .with_doppler_step(settings.doppler_step)?
                                .with_refinement(settings.refine);
                            Ok(SensingTrial {
                                waveform: kind,
                                snr_db: snr,
                                trial: i,
                                seed,
                                truth: draw.paths.clone(),
                                estimate: estimate_grid_sic(&problem)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()
        })??;
        for (j, &snr) in points.iter().enumerate() {
            let at: Vec<&SensingTrial> = per_trial.iter().map(|t| &t[j]).collect();
            let pairs: Vec<(&EstimationResult, &PathSet)> = at.iter().map(|t| (&t.estimate, &t.truth)).collect();
            summary.push(SensingSummary {
                waveform: kind,
                snr_db: snr,
                metrics: sensing_metrics_paired(&pairs, &e.scenario, &settings.metrics),
            });
        }
        for j in 0..points.len() {
            trials.extend(per_trial.iter().map(|t| t[j].clone()));
        }
    }
    Ok(SensingRun { trials, summary })
}

fn db_text(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".into(), |v| format!("{v:.4}"))
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.9e}"))
}

/// Header line tying a result file to its manifest.
pub fn manifest_line(hash: &str) -> String {
    format!("# manifest={hash}\n")
}

pub fn ber_csv(rows: &[DetectionReport], hash: &str) -> String {
    let mut out = manifest_line(hash);
    out.push_str(DetectionReport::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub const SENSE_SUMMARY_HEADER: &str = "waveform,snr_db,trials,true_paths,detected,false_alarms,detection_rate,\
delay_rmse_samples,delay_rmse_m,doppler_rmse_bins,doppler_rmse_mps";

pub fn sense_summary_csv(rows: &[SensingSummary], hash: &str) -> String {
    let mut out = manifest_line(hash);
    out.push_str(SENSE_SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{},{},{},{}\n",
            r.waveform,
            db_text(r.snr_db),
            m.trials,
            m.true_paths,
            m.detected,
            m.false_alarms,
            m.detection_rate,
            opt_text(m.delay_rmse_samples),
            opt_text(m.delay_rmse_m),
            opt_text(m.doppler_rmse_bins),
            opt_text(m.doppler_rmse_mps)
        ));
    }
    out
}

pub const SENSE_TRIALS_HEADER: &str = "waveform,snr_db,trial,seed,true_delay,true_doppler,true_gain_re,true_gain_im,\
est_delay,est_doppler,est_gain_re,est_gain_im,residual,evaluations";

/// One row per true path with its associated estimate (blank when missed),
/// then one row per unassociated estimate (blank truth).
pub fn sense_trials_csv(trials: &[SensingTrial], metrics: &MetricsConfig, hash: &str) -> String {
    let mut out = manifest_line(hash);
    out.push_str(SENSE_TRIALS_HEADER);
    out.push('\n');
    let path_fields = |p: Option<&Path>| match p {
        Some(p) => format!("{},{:.9e},{:.9e},{:.9e}", p.delay, p.doppler, p.gain.re, p.gain.im),
        None => ",,,".into(),
    };
    for t in trials {
        let est = &t.estimate.paths;
        let pairs = associate(t.truth.paths(), est, metrics);
        let prefix = format!("{},{},{},{}", t.waveform, db_text(t.snr_db), t.trial, t.seed);
        let suffix = format!("{:.9e},{}", t.estimate.residual, t.estimate.search_evaluations);
        for (i, p) in t.truth.paths().iter().enumerate() {
            let e = pairs.iter().find(|(ti, _)| *ti == i).map(|&(_, j)| &est[j]);
            out.push_str(&format!("{prefix},{},{},{suffix}\n", path_fields(Some(p)), path_fields(e)));
        }
        for (j, e) in est.iter().enumerate() {
            if !pairs.iter().any(|&(_, ej)| ej == j) {
                out.push_str(&format!("{prefix},{},{},{suffix}\n", path_fields(None), path_fields(Some(e))));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ber,
    Sense,
    Viz,
    Compare,
    Diversity,
    Overhead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub hash: String,
    pub version: String,
    pub task: Task,
    pub config: Experiment,
    pub seed_schedule: String,
    pub trial_seeds: Vec<u64>,
    /// Task options outside the experiment config.
    pub parameters: serde_json::Value,
    pub files: Vec<String>,
    pub complete: bool,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct HashInput<'a> {
    version: &'a str,
    task: Task,
    config: &'a Experiment,
    trial_seeds: &'a [u64],
    parameters: &'a serde_json::Value,
}

impl Manifest {
    pub fn new(e: &Experiment, task: Task) -> Result<Self> {
        Self::with_parameters(e, task, serde_json::Value::Null)
    }

    pub fn with_parameters(e: &Experiment, task: Task, parameters: serde_json::Value) -> Result<Self> {
        let trial_seeds = e.trial_seeds();
        // where results land does not change them
        let hashed = Experiment { outputs: PathBuf::new(), ..e.clone() };
        let input = HashInput { version: VERSION, task, config: &hashed, trial_seeds: &trial_seeds, parameters: &parameters };
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&input)?));
        Ok(Self {
            hash,
            version: VERSION.into(),
            task,
            config: e.clone(),
            seed_schedule: "splitmix64(master + (i + 1) * 0x9e3779b97f4a7c15)".into(),
            trial_seeds,
            parameters,
            files: Vec::new(),
            complete: false,
            error: None,
        })
    }

    pub fn write(&self, dir: &FsPath) -> Result<()> {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Writes `(name, body)` files into `dir` followed by the manifest; on a
/// failed write the manifest is left incomplete.
pub fn write_bundle(dir: &FsPath, manifest: &mut Manifest, outputs: &[(String, String)]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let written = fs::create_dir_all(dir).map_err(DdError::from).and_then(|_| {
        for (name, body) in outputs {
            let path = dir.join(name);
            fs::write(&path, body)?;
            manifest.files.push(name.clone());
            files.push(path);
        }
        Ok(())
    });
    match written {
        Ok(()) => {
            manifest.complete = true;
            manifest.write(dir)?;
            Ok(files)
        }
        Err(err) => {
            manifest.error = Some(err.to_string());
            let _ = manifest.write(dir);
            Err(err)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest: Manifest,
    pub ber: Vec<DetectionReport>,
    pub sensing: Option<SensingRun>,
    pub files: Vec<PathBuf>,
}

/// JSON file body: the manifest hash and the rows of its CSV twin.
#[derive(Serialize)]
pub struct JsonMirror<'a, T: Serialize> {
    pub manifest: &'a str,
    pub rows: &'a T,
}

/// Runs the sweep and writes its CSV and JSON files plus `manifest.json`
/// into `e.outputs`. A failed write leaves a manifest marked incomplete that
/// lists the files written before the failure.
pub fn run_experiment(e: &Experiment, task: Task) -> Result<RunReport> {
    let mut manifest = Manifest::new(e, task)?;
    let (ber, sensing) = match task {
        Task::Ber => (simulate_ber(e)?, None),
        Task::Sense => (Vec::new(), Some(simulate_sensing(e)?)),
        other => return Err(DdError::InvalidConfig(format!("{other:?} is not a Monte Carlo task"))),
    };
    let h = manifest.hash.clone();
    let mut outputs: Vec<(String, String)> = Vec::new();
    match &sensing {
        None => {
            outputs.push(("ber.csv".into(), ber_csv(&ber, &h)));
            outputs.push(("ber.json".into(), serde_json::to_string_pretty(&JsonMirror { manifest: &h, rows: &ber })?));
        }
        Some(run) => {
            outputs.push(("sense_summary.csv".into(), sense_summary_csv(&run.summary, &h)));
            outputs.push(("sense_trials.csv".into(), sense_trials_csv(&run.trials, &e.sensing.metrics, &h)));
            outputs.push(("sense.json".into(), serde_json::to_string_pretty(&JsonMirror { manifest: &h, rows: run })?));
        }
    }
    let files = write_bundle(&e.outputs, &mut manifest, &outputs)?;
    Ok(RunReport { manifest, ber, sensing, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Experiment {
        let mut e = Experiment::new(ScenarioConfig::vehicular(16, 2, 1.0));
        e.trials = 4;
        e.snr_grid_db = vec![10.0];
        e.seed = 11;
        e
    }

    #[test]
    fn seed_schedule_is_fixed() {
        assert_eq!(splitmix64(0x9e37_79b9_7f4a_7c15), 0xe220_a839_7b1d_cdaf);
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    #[test]
    fn identity_channel_noiseless_has_zero_ber() {
        let mut e = small();
        e.trials = 1;
        e.snr_grid_db.clear();
        e.noiseless = true;
        e.channel = Some(vec![Path::unit(0, 0.0)]);
        let rows = simulate_ber(&e).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.bit_errors == 0 && r.snr_db.is_none()));
        assert!(ber_csv(&rows, "x").contains("afdm,inf,inf,1,32,0,"));
    }

    #[test]
    fn config_defaults_and_validation() {
        let e = Experiment::from_json(
            r#"{"scenario": {"n": 16, "carrier_hz": 5.9e9, "bandwidth_hz": 1e7, "max_delay": 2, "max_doppler": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(e.trials, 100);
        assert_eq!(e.waveforms.len(), 2);
        assert!(Experiment::from_json(r#"{"scenario": {"n": 16}}"#).is_err());
        let mut bad = small();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = small();
        bad.snr_grid_db.clear();
        assert!(bad.validate().is_err());
        let mut bad = small();
        bad.otfs_grid = Some((3, 5));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn run_writes_manifest_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = small();
        e.outputs = dir.path().join("out");
        let a = run_experiment(&e, Task::Ber).unwrap();
        let body = fs::read_to_string(e.outputs.join("ber.csv")).unwrap();
        assert!(body.starts_with(&manifest_line(&a.manifest.hash)));
        let m: Manifest = serde_json::from_str(&fs::read_to_string(e.outputs.join("manifest.json")).unwrap()).unwrap();
        assert!(m.complete);
        assert_eq!(m.files, vec!["ber.csv", "ber.json"]);
        let b = run_experiment(&e, Task::Ber).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(body, fs::read_to_string(e.outputs.join("ber.csv")).unwrap());

        let s = run_experiment(&e, Task::Sense).unwrap();
        assert_ne!(s.manifest.hash, a.manifest.hash);
        let run = s.sensing.unwrap();
        assert_eq!(run.trials.len(), 2 * 4);
        assert_eq!(run.summary.len(), 2);
    }

    #[test]
    fn unwritable_output_leaves_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = small();
        e.outputs = dir.path().to_path_buf();
        fs::create_dir(dir.path().join("ber.json")).unwrap();
        assert!(matches!(run_experiment(&e, Task::Ber), Err(DdError::Io(_))));
        let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert!(!m.complete);
        assert_eq!(m.files, vec!["ber.csv"]);
        assert!(m.error.is_some());
    }
}
