//! Channel heatmaps in the four standard representations.

use serde::{Deserialize, Serialize};

use crate::afdm::AfdmConfig;
use crate::channel::{cir_time_frequency, delay_doppler_spread, PathSet, ScenarioConfig};
use crate::error::{DdError, Result};
use crate::heatmap::Heatmap;
use crate::otfs::OtfsConfig;
use crate::waveform::WaveformConfig;
use crate::{CMatrix, MAX_DENSE_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Time-variant transfer function over time samples and subcarriers.
    Tf,
    /// Delay-Doppler spread over integer delay and Doppler bins.
    Dd,
    EffOtfs,
    EffAfdm,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Tf => "tf",
            Representation::Dd => "dd",
            Representation::EffOtfs => "eff-otfs",
            Representation::EffAfdm => "eff-afdm",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tf" => Ok(Self::Tf),
            "dd" => Ok(Self::Dd),
            "eff-otfs" => Ok(Self::EffOtfs),
            "eff-afdm" => Ok(Self::EffAfdm),
            other => Err(format!("unknown representation `{other}` (expected tf, dd, eff-otfs or eff-afdm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizOutput {
    pub magnitude: Heatmap,
    pub phase: Option<Heatmap>,
}

/// Complex grid for a representation, with its axis names.
pub fn channel_grid(paths: &PathSet, scenario: &ScenarioConfig, repr: Representation) -> Result<(CMatrix, &'static str, &'static str)> {
    scenario.validate()?;
    let n = scenario.n;
    match repr {
        Representation::Tf => {
            if n > MAX_DENSE_N {
                return Err(DdError::TooLarge(n));
            }
            let t = scenario.sample_period();
            let df = scenario.bandwidth_hz / n as f64;
            let g = CMatrix::from_fn(n, n, |i, k| cir_time_frequency(paths, scenario, i as f64 * t, k as f64 * df));
            Ok((g, "time", "frequency"))
        }
        Representation::Dd => {
            let rows = scenario.max_delay + 1;
            let a = scenario.max_doppler.ceil() as i64;
            let mut g = CMatrix::zeros(rows, (2 * a + 1) as usize);
            for tap in delay_doppler_spread(paths, scenario) {
                let col = tap.doppler.round() as i64 + a;
                let row = tap.delay as usize;
                if row < rows && (0..=2 * a).contains(&col) {
                    g[(row, col as usize)] += tap.gain;
                }
            }
            Ok((g, "delay", "doppler"))
        }
        Representation::EffOtfs | Representation::EffAfdm => {
            let w = if repr == Representation::EffOtfs {
                WaveformConfig::Otfs(OtfsConfig::square_for(n)?)
            } else {
                WaveformConfig::Afdm(AfdmConfig::auto(n, scenario.max_doppler.ceil() as u32)?)
            };
            let h = w.channel(paths, scenario)?;
            Ok((w.effective_channel(&h)?, "output", "input"))
        }
    }
}

pub fn viz_channel(paths: &PathSet, scenario: &ScenarioConfig, repr: Representation, with_phase: bool) -> Result<VizOutput> {
    let (g, a1, a2) = channel_grid(paths, scenario, repr)?;
    let tag = |h: Heatmap| {
        let h = h.with_meta("repr", repr.name());
        if repr == Representation::Dd {
            h.with_meta("doppler_min", &format!("{}", -(scenario.max_doppler.ceil() as i64)))
        } else {
            h
        }
    };
    let magnitude = tag(Heatmap::magnitude(a1, a2, scenario.n, &g)?);
    let phase = if with_phase { Some(tag(Heatmap::phase(a1, a2, scenario.n, &g)?)) } else { None };
    Ok(VizOutput { magnitude, phase })
}

/// Nonzero cyclic diagonals of a square heatmap.
pub fn band_count(h: &Heatmap, threshold: f64) -> usize {
    let n = h.rows;
    let max = h.values.iter().cloned().fold(0.0, f64::max);
    (0..n)
        .filter(|&d| (0..n).any(|m| h.get(m, (m + d) % n) > threshold * max))
        .count()
}
