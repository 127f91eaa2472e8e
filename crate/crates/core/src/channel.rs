//! Doubly-dispersive channel model.
//!
//! A channel is a set of `P` paths, each with a complex gain, an integer
//! sample delay `ℓ` and a Doppler shift `α` in cycles per frame. Sampled over
//! a frame of `N` samples it acts as
//!
//! ```text
//! H = Σ_p h_p · C_p · N_p · Π^ℓ_p
//! ```
//!
//! where `Π` is the forward cyclic shift, `N_p = diag(exp(j2π α_p n / N))`
//! and `C_p` holds the phase the prefix imposes on the wrapped samples.
//! The physical time-delay, time-frequency and delay-Doppler views of the
//! same path set are provided for visualization.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, DdError, Result};
use crate::transforms::unit_phase;
use crate::{CMatrix, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sampling and support limits of a simulated link.
///
/// The delay resolution is pinned to the sample period, `1 / bandwidth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Frame length in samples.
    pub n: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Largest path delay in samples.
    pub max_delay: usize,
    /// Largest absolute Doppler in cycles per frame.
    pub max_doppler: f64,
}

impl ScenarioConfig {
    /// The vehicular setting used throughout the examples: 5.9 GHz carrier and
    /// 10 MHz bandwidth (100 ns samples).
    pub fn vehicular(n: usize, max_delay: usize, max_doppler: f64) -> Self {
        Self {
            n,
            carrier_hz: 5.9e9,
            bandwidth_hz: 10e6,
            max_delay,
            max_doppler,
        }
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn delay_resolution(&self) -> f64 {
        self.sample_period()
    }

    pub fn delay_seconds(&self, delay: f64) -> f64 {
        delay * self.delay_resolution()
    }

    /// Physical Doppler in Hz of a shift of `alpha` cycles per frame.
    pub fn doppler_hz(&self, alpha: f64) -> f64 {
        alpha / (self.n as f64 * self.sample_period())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DdError::InvalidConfig("frame length must be positive".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(DdError::InvalidConfig("bandwidth must be positive".into()));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(DdError::InvalidConfig("carrier frequency must be positive".into()));
        }
        if self.max_delay >= self.n {
            return Err(DdError::InvalidConfig(format!(
                "max delay {} must be below the frame length {}",
                self.max_delay, self.n
            )));
        }
        if !(self.max_doppler >= 0.0 && self.max_doppler.is_finite()) {
            return Err(DdError::InvalidConfig("max doppler must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    /// Delay in samples.
    pub delay: f64,
    /// Doppler in cycles per frame.
    pub doppler: f64,
}

impl Path {
    pub fn new(gain: C64, delay: f64, doppler: f64) -> Self {
        Self { gain, delay, doppler }
    }

    pub fn unit(delay: usize, doppler: f64) -> Self {
        Self::new(C64::new(1.0, 0.0), delay as f64, doppler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(DdError::Empty("path set"));
        }
        for p in &paths {
            if !(p.delay.is_finite() && p.doppler.is_finite() && p.gain.is_finite()) {
                return Err(DdError::InvalidConfig(format!("non-finite path parameters {p:?}")));
            }
            if p.delay < 0.0 {
                return Err(DdError::DelayOutOfRange { delay: p.delay, max: 0 });
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// True when every delay and Doppler is an integer.
    pub fn is_integer(&self) -> bool {
        self.paths
            .iter()
            .all(|p| p.delay.fract() == 0.0 && p.doppler.fract() == 0.0)
    }

    pub fn validate_against(&self, scenario: &ScenarioConfig) -> Result<()> {
        for p in &self.paths {
            if p.delay > scenario.max_delay as f64 {
                return Err(DdError::DelayOutOfRange { delay: p.delay, max: scenario.max_delay });
            }
            if p.doppler.abs() > scenario.max_doppler {
                return Err(DdError::InvalidConfig(format!(
                    "doppler {} exceeds the maximum {}",
                    p.doppler, scenario.max_doppler
                )));
            }
        }
        Ok(())
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    /// Draws `count` paths with distinct integer `(ℓ, α)` cells inside the
    /// scenario limits and i.i.d. `CN(0, 1/count)` gains.
    pub fn random_integer(rng: &mut impl Rng, count: usize, scenario: &ScenarioConfig) -> Result<Self> {
        let max_alpha = scenario.max_doppler.floor() as i64;
        let cells = (scenario.max_delay + 1) * (2 * max_alpha as usize + 1);
        if count == 0 || count > cells {
            return Err(DdError::InvalidConfig(format!(
                "cannot place {count} distinct paths in {cells} delay-Doppler cells"
            )));
        }
        let mut taken: Vec<(usize, i64)> = Vec::with_capacity(count);
        while taken.len() < count {
            let cell = (
                rng.random_range(0..=scenario.max_delay),
                rng.random_range(-max_alpha..=max_alpha),
            );
            if !taken.contains(&cell) {
                taken.push(cell);
            }
        }
        let scale = (0.5 / count as f64).sqrt();
        let paths = taken
            .into_iter()
            .map(|(l, a)| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Path::new(C64::new(re, im) * scale, l as f64, a as f64)
            })
            .collect();
        PathSet::new(paths)
    }
}

/// How the wrapped samples of each path are phased.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prefix {
    /// Plain cyclic prefix; `C_p = I`.
    Cyclic,
    /// Chirp-periodic prefix for chirp parameter `c1`.
    ChirpPeriodic { c1: f64 },
    /// No prefix phases; behaves as [`Prefix::Cyclic`].
    None,
}

impl Prefix {
    /// `C_p` diagonal for a path of integer delay `delay` in a frame of `n`.
    ///
    /// For the chirp-periodic prefix the wrapped samples `i < ℓ` carry
    /// `exp(-j2π c1 (N² - 2N(ℓ - i)))`.
    pub fn phases(&self, n: usize, delay: usize) -> Vec<C64> {
        let one = C64::new(1.0, 0.0);
        match *self {
            Prefix::Cyclic | Prefix::None => vec![one; n],
            Prefix::ChirpPeriodic { c1 } => (0..n)
                .map(|i| {
                    if i < delay {
                        let nf = n as f64;
                        let k = nf * nf - 2.0 * nf * (delay - i) as f64;
                        unit_phase(c1 * k)
                    } else {
                        one
                    }
                })
                .collect(),
        }
    }
}

/// The factored form of one path's term `C_p · N_p · Π^ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFactors {
    pub gain: C64,
    pub delay: usize,
    pub doppler: f64,
    pub cp_phase: Vec<C64>,
    pub doppler_phase: Vec<C64>,
}

impl PathFactors {
    pub fn new(gain: C64, delay: usize, doppler: f64, n: usize, prefix: Prefix) -> Self {
        let doppler_phase = (0..n)
            .map(|i| unit_phase(-doppler * i as f64 / n as f64))
            .collect();
        Self {
            gain,
            delay,
            doppler,
            cp_phase: prefix.phases(n, delay),
            doppler_phase,
        }
    }

    pub fn len(&self) -> usize {
        self.cp_phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cp_phase.is_empty()
    }

    /// Adds `scale · C_p N_p Π^ℓ s` into `out`.
    pub(crate) fn accumulate(&self, s: &[C64], scale: C64, out: &mut [C64]) {
        let n = s.len();
        for (i, o) in out.iter_mut().enumerate() {
            let src = (i + n - self.delay % n) % n;
            *o += scale * self.cp_phase[i] * self.doppler_phase[i] * s[src];
        }
    }

    /// `C_p N_p Π^ℓ s` without the gain.
    pub fn apply_unit(&self, s: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); s.len()];
        self.accumulate(s, C64::new(1.0, 0.0), &mut out);
        out
    }

    /// Dense `C_p · N_p · Π^ℓ` (unit gain).
    pub fn unit_dense(&self) -> CMatrix {
        let n = self.len();
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, (i + n - self.delay % n) % n)] = self.cp_phase[i] * self.doppler_phase[i];
        }
        m
    }

    /// Dense `h_p · C_p · N_p · Π^ℓ`.
    pub fn dense(&self) -> CMatrix {
        self.unit_dense() * self.gain
    }
}

/// The sampled channel `H`, held in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    n: usize,
    prefix: Prefix,
    per_path: Vec<PathFactors>,
    scenario: ScenarioConfig,
}

impl ChannelMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn prefix(&self) -> Prefix {
        self.prefix
    }

    pub fn per_path(&self) -> &[PathFactors] {
        &self.per_path
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    /// `H · s` from the factors, `O(P·N)`.
    pub fn apply(&self, s: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n, s.len())?;
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for f in &self.per_path {
            f.accumulate(s, f.gain, &mut out);
        }
        Ok(out)
    }

    /// Dense `H = Σ_p h_p C_p N_p Π^ℓ_p`.
    pub fn dense(&self) -> Result<CMatrix> {
        if self.n > crate::MAX_DENSE_N {
            return Err(DdError::TooLarge(self.n));
        }
        let mut h = CMatrix::zeros(self.n, self.n);
        for f in &self.per_path {
            h += f.dense();
        }
        Ok(h)
    }
}

pub fn build_channel_matrix(
    paths: &PathSet,
    scenario: &ScenarioConfig,
    prefix: Prefix,
) -> Result<ChannelMatrix> {
    scenario.validate()?;
    let n = scenario.n;
    let mut per_path = Vec::with_capacity(paths.len());
    for (index, p) in paths.paths().iter().enumerate() {
        if p.delay.fract() != 0.0 {
            return Err(DdError::FractionalDelay { index, delay: p.delay });
        }
        if p.delay > scenario.max_delay as f64 {
            return Err(DdError::DelayOutOfRange { delay: p.delay, max: scenario.max_delay });
        }
        per_path.push(PathFactors::new(p.gain, p.delay as usize, p.doppler, n, prefix));
    }
    Ok(ChannelMatrix {
        n,
        prefix,
        per_path,
        scenario: scenario.clone(),
    })
}

/// Circular complex Gaussian noise with total variance `variance` per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(DdError::InvalidConfig(format!("noise variance {variance} must be finite and >= 0")));
        }
        Ok(Self { variance, seed })
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0, seed: 0 }
    }

    /// `n` samples; the same model always yields the same samples.
    pub fn sample(&self, n: usize) -> Vec<C64> {
        if self.variance == 0.0 {
            return vec![C64::new(0.0, 0.0); n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sd = (self.variance / 2.0).sqrt();
        (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re * sd, im * sd)
            })
            .collect()
    }
}

/// `r = H s + w`.
pub fn apply_channel(h: &ChannelMatrix, s: &[C64], noise: &NoiseModel) -> Result<Vec<C64>> {
    let mut r = h.apply(s)?;
    if noise.variance > 0.0 {
        let w = noise.sample(r.len());
        for (v, w) in r.iter_mut().zip(w) {
            *v += w;
        }
    }
    Ok(r)
}

/// Triangular kernel of half-width `width` with unit peak, standing in for
/// the delay impulse when the time-delay response is drawn.
fn delay_kernel(x: f64, width: f64) -> f64 {
    (1.0 - x.abs() / width).max(0.0)
}

/// Time-variant impulse response `g(t, τ)` with the delay impulses rendered
/// by a unit-peak kernel of half-width `kernel_bw` seconds.
pub fn cir_time_delay(paths: &PathSet, scenario: &ScenarioConfig, t: f64, tau: f64, kernel_bw: f64) -> Result<C64> {
    if !(kernel_bw > 0.0) {
        return Err(DdError::InvalidConfig("kernel width must be positive".into()));
    }
    Ok(paths
        .paths()
        .iter()
        .map(|p| {
            let nu = scenario.doppler_hz(p.doppler);
            let k = delay_kernel(tau - scenario.delay_seconds(p.delay), kernel_bw);
            p.gain * C64::from_polar(k, 2.0 * PI * nu * t)
        })
        .sum())
}

/// Time-variant transfer function `g(t, f) = Σ h_p e^{j2πν_p t} e^{-j2πτ_p f}`.
pub fn cir_time_frequency(paths: &PathSet, scenario: &ScenarioConfig, t: f64, f: f64) -> C64 {
    paths
        .paths()
        .iter()
        .map(|p| {
            let nu = scenario.doppler_hz(p.doppler);
            let tau = scenario.delay_seconds(p.delay);
            p.gain * C64::from_polar(1.0, 2.0 * PI * (nu * t - tau * f))
        })
        .sum()
}

/// One impulse of the delay-Doppler spread function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadTap {
    /// Delay in samples and in seconds.
    pub delay: f64,
    pub delay_s: f64,
    /// Doppler in cycles per frame and in Hz.
    pub doppler: f64,
    pub doppler_hz: f64,
    pub gain: C64,
}

/// The impulsive support of the delay-Doppler spread function; taps that
/// share a `(delay, doppler)` cell have their gains summed.
pub fn delay_doppler_spread(paths: &PathSet, scenario: &ScenarioConfig) -> Vec<SpreadTap> {
    let mut taps: Vec<SpreadTap> = Vec::with_capacity(paths.len());
    for p in paths.paths() {
        match taps
            .iter_mut()
            .find(|t| t.delay == p.delay && t.doppler == p.doppler)
        {
            Some(t) => t.gain += p.gain,
            None => taps.push(SpreadTap {
                delay: p.delay,
                delay_s: scenario.delay_seconds(p.delay),
                doppler: p.doppler,
                doppler_hz: scenario.doppler_hz(p.doppler),
                gain: p.gain,
            }),
        }
    }
    taps
}
