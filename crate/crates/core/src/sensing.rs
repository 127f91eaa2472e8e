//! Delay-Doppler parameter estimation from a known transmit frame.
//!
//! The estimator minimizes `‖y − Σ_p H̃(h_p, ℓ_p, α_p) x‖²` path by path:
//! gains are eliminated by per-cell least squares, the `(ℓ, α)` cell with the
//! largest residual reduction is taken, optionally refined in Doppler by a
//! golden-section search, and its contribution is cancelled before the next
//! path is searched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afdm;
use crate::channel::{build_channel_matrix, Path, PathFactors, PathSet, ScenarioConfig, SPEED_OF_LIGHT};
use crate::error::{check_len, DdError, Result};
use crate::waveform::WaveformConfig;
use crate::{CMatrix, C64};

/// Upper bound on the number of paths one problem may ask for.
pub const MAX_ASSUMED_PATHS: usize = 16;

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn energy(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// Single-path effective channel `H̃(h, ℓ, α)` seen through a waveform.
#[derive(Debug, Clone)]
pub struct ConditionalChannel {
    factors: PathFactors,
    waveform: WaveformConfig,
    scenario: ScenarioConfig,
}

pub fn conditional_channel(
    gain: C64,
    delay: f64,
    doppler: f64,
    scenario: &ScenarioConfig,
    waveform: &WaveformConfig,
) -> Result<ConditionalChannel> {
    check_len(scenario.n, waveform.n())?;
    if delay.fract() != 0.0 {
        return Err(DdError::FractionalDelay { index: 0, delay });
    }
    if !(0.0..=scenario.max_delay as f64).contains(&delay) {
        return Err(DdError::DelayOutOfRange { delay, max: scenario.max_delay });
    }
    Ok(ConditionalChannel {
        factors: PathFactors::new(gain, delay as usize, doppler, scenario.n, waveform.prefix()),
        waveform: waveform.clone(),
        scenario: scenario.clone(),
    })
}

impl ConditionalChannel {
    /// `H̃ x` through modulate, path, demodulate.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let s = self.waveform.modulate(x)?;
        self.apply_modulated(&s)
    }

    /// `H̃ x` given the already modulated `s`.
    pub fn apply_modulated(&self, s: &[C64]) -> Result<Vec<C64>> {
        check_len(self.factors.len(), s.len())?;
        let mut t = self.factors.apply_unit(s);
        for v in &mut t {
            *v *= self.factors.gain;
        }
        self.waveform.demodulate(&t)
    }

    /// Dense form, built as the effective channel of a one-path channel.
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let f = &self.factors;
        let paths = PathSet::new(vec![Path::new(f.gain, f.delay as f64, f.doppler)])?;
        let h = build_channel_matrix(&paths, &self.scenario, self.waveform.prefix())?;
        self.waveform.effective_channel(&h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingProblem {
    pub y: Vec<C64>,
    /// Transmit frame known at the sensing receiver.
    pub x: Vec<C64>,
    pub waveform: WaveformConfig,
    pub scenario: ScenarioConfig,
    pub p_assumed: usize,
    pub delay_grid: Vec<usize>,
    pub doppler_grid: Vec<f64>,
    pub doppler_step: f64,
    /// Golden-section Doppler refinement within `±doppler_step`.
    pub refine: bool,
}

/// `{k·step}` covering `[-max, max]`.
pub fn doppler_grid(max_doppler: f64, step: f64) -> Vec<f64> {
    let hi = (max_doppler / step + 1e-9).floor() as i64;
    (-hi..=hi).map(|k| k as f64 * step).collect()
}

impl SensingProblem {
    /// Integer delays `0..=max_delay`, unit Doppler bins over the scenario range,
    /// no refinement.
    pub fn new(
        y: Vec<C64>,
        x: Vec<C64>,
        waveform: WaveformConfig,
        scenario: ScenarioConfig,
        p_assumed: usize,
    ) -> Result<Self> {
        let p = Self {
            delay_grid: (0..=scenario.max_delay).collect(),
            doppler_grid: doppler_grid(scenario.max_doppler, 1.0),
            doppler_step: 1.0,
            refine: false,
            y,
            x,
            waveform,
            scenario,
            p_assumed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_doppler_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(DdError::DegenerateGrid(format!("doppler step {step}")));
        }
        self.doppler_step = step;
        self.doppler_grid = doppler_grid(self.scenario.max_doppler, step);
        self.validate()?;
        Ok(self)
    }

    pub fn with_refinement(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.scenario.n;
        check_len(n, self.waveform.n())?;
        check_len(n, self.y.len())?;
        check_len(n, self.x.len())?;
        if self.p_assumed == 0 || self.p_assumed > MAX_ASSUMED_PATHS {
            return Err(DdError::InvalidConfig(format!(
                "assumed path count {} outside 1..={MAX_ASSUMED_PATHS}",
                self.p_assumed
            )));
        }
        if self.delay_grid.is_empty() || self.doppler_grid.is_empty() {
            return Err(DdError::DegenerateGrid("empty delay or doppler grid".into()));
        }
        if let Some(&d) = self.delay_grid.iter().find(|&&d| d > self.scenario.max_delay) {
            return Err(DdError::DelayOutOfRange { delay: d as f64, max: self.scenario.max_delay });
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, f64)> {
        self.delay_grid
            .iter()
            .flat_map(|&l| self.doppler_grid.iter().map(move |&a| (l, a)))
            .collect()
    }

    /// For AFDM, pairs of grid cells whose predicted band offsets coincide;
    /// the chirp domain cannot tell such cells apart by position alone.
    pub fn ambiguous_cells(&self) -> Vec<((usize, f64), (usize, f64))> {
        let WaveformConfig::Afdm(cfg) = &self.waveform else {
            return Vec::new();
        };
        let cells = self.cells();
        let keyed: Vec<_> = cells
            .iter()
            .map(|&(l, a)| afdm::integer_band_offset(l, a, cfg.c1, cfg.n))
            .collect();
        let mut out = Vec::new();
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                if keyed[i].is_some() && keyed[i] == keyed[j] {
                    out.push((cells[i], cells[j]));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    /// Sorted by gain magnitude, largest first.
    pub paths: Vec<Path>,
    /// Final objective value.
    pub residual: f64,
    /// `‖y_res‖²` after each cancellation step, in detection order.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub search_evaluations: usize,
    pub warnings: Vec<String>,
}

/// Objective `‖y − Σ_p H̃(h_p, ℓ_p, α_p) x‖²`; `theta` must hold exactly
/// `p_assumed` paths.
pub fn ml_objective(theta: &[Path], problem: &SensingProblem) -> Result<f64> {
    check_len(problem.p_assumed, theta.len())?;
    objective(theta, problem)
}

fn objective(theta: &[Path], problem: &SensingProblem) -> Result<f64> {
    let n = problem.scenario.n;
    let s = problem.waveform.modulate(&problem.x)?;
    let mut t = vec![C64::new(0.0, 0.0); n];
    for (index, p) in theta.iter().enumerate() {
        if p.delay.fract() != 0.0 {
            return Err(DdError::FractionalDelay { index, delay: p.delay });
        }
        if !(0.0..n as f64).contains(&p.delay) {
            return Err(DdError::DelayOutOfRange { delay: p.delay, max: n - 1 });
        }
        let f = PathFactors::new(p.gain, p.delay as usize, p.doppler, n, problem.waveform.prefix());
        f.accumulate(&s, p.gain, &mut t);
    }
    let model = problem.waveform.demodulate(&t)?;
    Ok(problem
        .y
        .iter()
        .zip(&model)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum())
}

struct Signature {
    delay: usize,
    doppler: f64,
    g: Vec<C64>,
    energy: f64,
}

fn signature(problem: &SensingProblem, s: &[C64], delay: usize, doppler: f64) -> Result<Signature> {
    let n = problem.scenario.n;
    let f = PathFactors::new(C64::new(1.0, 0.0), delay, doppler, n, problem.waveform.prefix());
    let g = problem.waveform.demodulate(&f.apply_unit(s))?;
    let energy = energy(&g);
    Ok(Signature { delay, doppler, g, energy })
}

/// Residual-energy reduction `|⟨g, r⟩|² / ‖g‖²` and the LS gain.
fn reduction(sig: &Signature, residual: &[C64]) -> (f64, C64) {
    let corr = inner(&sig.g, residual);
    (corr.norm_sqr() / sig.energy, corr / sig.energy)
}

const GOLDEN_ITERATIONS: usize = 60;

/// Maximizes the reduction over Doppler in `[lo, hi]` at fixed delay.
fn refine_doppler(
    problem: &SensingProblem,
    s: &[C64],
    residual: &[C64],
    delay: usize,
    lo: f64,
    hi: f64,
    evaluations: &mut usize,
) -> Result<Signature> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut eval = |a: f64| -> Result<(f64, Signature)> {
        *evaluations += 1;
        let sig = signature(problem, s, delay, a)?;
        let r = if sig.energy > 0.0 { reduction(&sig, residual).0 } else { 0.0 };
        Ok((r, sig))
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..GOLDEN_ITERATIONS {
        if fc.0 >= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(if fc.0 >= fd.0 { fc.1 } else { fd.1 })
}

pub fn estimate_grid_sic(problem: &SensingProblem) -> Result<EstimationResult> {
    problem.validate()?;
    let s = problem.waveform.modulate(&problem.x)?;
    let mut warnings = Vec::new();

    let computed: Vec<Signature> = problem
        .cells()
        .par_iter()
        .map(|&(l, a)| signature(problem, &s, l, a))
        .collect::<Result<_>>()?;
    let bank: Vec<Signature> = computed
        .into_iter()
        .filter(|sig| {
            let keep = sig.energy > 0.0;
            if !keep {
                warnings.push(format!("skipped cell ({}, {}) with zero signature", sig.delay, sig.doppler));
            }
            keep
        })
        .collect();
    if bank.is_empty() {
        return Err(DdError::DegenerateGrid("every grid cell has a zero signature".into()));
    }
    let ambiguous = problem.ambiguous_cells().len();
    if ambiguous > 0 {
        warnings.push(format!("{ambiguous} pairs of grid cells share an AFDM band offset"));
    }

    let mut residual = problem.y.clone();
    let mut found: Vec<Path> = Vec::with_capacity(problem.p_assumed);
    let mut history = Vec::with_capacity(problem.p_assumed);
    let mut evaluations = 0;
    let max_alpha = problem.scenario.max_doppler;

    for _ in 0..problem.p_assumed {
        let mut best = 0;
        let mut best_red = f64::NEG_INFINITY;
        for (i, sig) in bank.iter().enumerate() {
            let (red, _) = reduction(sig, &residual);
            if red > best_red {
                best = i;
                best_red = red;
            }
        }
        evaluations += bank.len();

        let coarse = &bank[best];
        let refined;
        let chosen = if problem.refine {
            let lo = (coarse.doppler - problem.doppler_step).max(-max_alpha);
            let hi = (coarse.doppler + problem.doppler_step).min(max_alpha);
            refined = refine_doppler(problem, &s, &residual, coarse.delay, lo, hi, &mut evaluations)?;
            if refined.energy > 0.0 && reduction(&refined, &residual).0 > best_red {
                &refined
            } else {
                coarse
            }
        } else {
            coarse
        };

        let (_, gain) = reduction(chosen, &residual);
        let before = energy(&residual);
        let updated: Vec<C64> = residual.iter().zip(&chosen.g).map(|(r, g)| r - gain * g).collect();
        let after = energy(&updated);
        if after <= before {
            residual = updated;
            found.push(Path::new(gain, chosen.delay as f64, chosen.doppler));
            history.push(after);
        } else {
            // no numerical gain left; keep the residual unchanged
            found.push(Path::new(C64::new(0.0, 0.0), chosen.delay as f64, chosen.doppler));
            history.push(before);
        }
    }

    found.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    let residual = ml_objective(&found, problem)?;
    Ok(EstimationResult {
        paths: found,
        residual,
        residual_history: history,
        iterations: problem.p_assumed,
        search_evaluations: evaluations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RangeGeometry {
    /// Round trip: range `c·τ/2`, velocity `ν·c/(2 f_c)`.
    #[default]
    Monostatic,
    /// One way: range `c·τ`, velocity `ν·c/f_c`.
    Bistatic,
}

impl RangeGeometry {
    fn factor(self) -> f64 {
        match self {
            RangeGeometry::Monostatic => 0.5,
            RangeGeometry::Bistatic => 1.0,
        }
    }

    /// Meters per delay sample.
    pub fn range_per_sample(self, scenario: &ScenarioConfig) -> f64 {
        SPEED_OF_LIGHT * scenario.delay_resolution() * self.factor()
    }

    /// Meters per second per Doppler bin (one cycle per frame).
    pub fn velocity_per_bin(self, scenario: &ScenarioConfig) -> f64 {
        scenario.doppler_hz(1.0) * SPEED_OF_LIGHT / scenario.carrier_hz * self.factor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Largest |Δℓ| (samples) for an estimate to count as a detection.
    pub gate_delay: f64,
    /// Largest |Δα| (bins) for an estimate to count as a detection.
    pub gate_doppler: f64,
    pub geometry: RangeGeometry,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { gate_delay: 1.0, gate_doppler: 1.0, geometry: RangeGeometry::Monostatic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingMetrics {
    pub trials: usize,
    pub true_paths: usize,
    pub detected: usize,
    pub false_alarms: usize,
    pub detection_rate: f64,
    /// `None` when nothing was associated.
    pub delay_rmse_samples: Option<f64>,
    pub delay_rmse_m: Option<f64>,
    pub doppler_rmse_bins: Option<f64>,
    pub doppler_rmse_mps: Option<f64>,
}

/// Greedy nearest-first association inside the gate; returns `(truth, estimate)`
/// index pairs.
pub fn associate(truth: &[Path], estimates: &[Path], cfg: &MetricsConfig) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            let dl = (t.delay - e.delay).abs();
            let da = (t.doppler - e.doppler).abs();
            if dl <= cfg.gate_delay && da <= cfg.gate_doppler {
                candidates.push((dl * dl + da * da, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimates.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Metrics over trials that share one ground truth.
pub fn sensing_metrics(
    results: &[EstimationResult],
    truth: &PathSet,
    scenario: &ScenarioConfig,
    cfg: &MetricsConfig,
) -> SensingMetrics {
    let pairs: Vec<(&EstimationResult, &PathSet)> = results.iter().map(|r| (r, truth)).collect();
    sensing_metrics_paired(&pairs, scenario, cfg)
}

pub fn sensing_metrics_paired(
    trials: &[(&EstimationResult, &PathSet)],
    scenario: &ScenarioConfig,
    cfg: &MetricsConfig,
) -> SensingMetrics {
    let mut true_paths = 0;
    let mut detected = 0;
    let mut false_alarms = 0;
    let mut se_delay = 0.0;
    let mut se_doppler = 0.0;
    for (result, truth) in trials {
        let pairs = associate(truth.paths(), &result.paths, cfg);
        true_paths += truth.len();
        detected += pairs.len();
        false_alarms += result.paths.len() - pairs.len();
        for (i, j) in pairs {
            let (t, e) = (truth.paths()[i], result.paths[j]);
            se_delay += (t.delay - e.delay).powi(2);
            se_doppler += (t.doppler - e.doppler).powi(2);
        }
    }
    let rmse = |se: f64| (detected > 0).then(|| (se / detected as f64).sqrt());
    let delay = rmse(se_delay);
    let doppler = rmse(se_doppler);
    SensingMetrics {
        trials: trials.len(),
        true_paths,
        detected,
        false_alarms,
        detection_rate: if true_paths > 0 { detected as f64 / true_paths as f64 } else { 0.0 },
        delay_rmse_samples: delay,
        delay_rmse_m: delay.map(|d| d * cfg.geometry.range_per_sample(scenario)),
        doppler_rmse_bins: doppler,
        doppler_rmse_mps: doppler.map(|d| d * cfg.geometry.velocity_per_bin(scenario)),
    }
}
