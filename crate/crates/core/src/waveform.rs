use serde::{Deserialize, Serialize};

use crate::afdm::{self, AfdmConfig};
use crate::channel::{build_channel_matrix, ChannelMatrix, PathSet, Prefix, ScenarioConfig};
use crate::error::Result;
use crate::otfs::{self, OtfsConfig};
use crate::transforms::OpCounter;
use crate::{CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformKind {
    Afdm,
    Otfs,
}

impl WaveformKind {
    pub fn name(self) -> &'static str {
        match self {
            WaveformKind::Afdm => "afdm",
            WaveformKind::Otfs => "otfs",
        }
    }
}

impl std::fmt::Display for WaveformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WaveformKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "afdm" => Ok(WaveformKind::Afdm),
            "otfs" => Ok(WaveformKind::Otfs),
            other => Err(format!("unknown waveform `{other}` (expected afdm or otfs)")),
        }
    }
}

/// A fully specified transform pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WaveformConfig {
    Afdm(AfdmConfig),
    Otfs(OtfsConfig),
}

impl WaveformConfig {
    pub fn kind(&self) -> WaveformKind {
        match self {
            WaveformConfig::Afdm(_) => WaveformKind::Afdm,
            WaveformConfig::Otfs(_) => WaveformKind::Otfs,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            WaveformConfig::Afdm(c) => c.n,
            WaveformConfig::Otfs(c) => c.n(),
        }
    }

    /// Prefix the channel has to be built with for this waveform.
    pub fn prefix(&self) -> Prefix {
        match self {
            WaveformConfig::Afdm(c) => c.prefix(),
            WaveformConfig::Otfs(c) => c.prefix(),
        }
    }

    pub fn modulate(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.modulate_counted(x, &mut OpCounter::new())
    }

    pub fn modulate_counted(&self, x: &[C64], counter: &mut OpCounter) -> Result<Vec<C64>> {
        match self {
            WaveformConfig::Afdm(c) => afdm::afdm_modulate_counted(x, c, counter),
            WaveformConfig::Otfs(c) => {
                otfs::otfs_modulate_counted(&otfs::OtfsFrame::from_vec(x, c)?, c, counter)
            }
        }
    }

    pub fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        match self {
            WaveformConfig::Afdm(c) => afdm::afdm_demodulate(r, c),
            WaveformConfig::Otfs(c) => otfs::otfs_demodulate(r, c),
        }
    }

    pub fn effective_channel(&self, h: &ChannelMatrix) -> Result<CMatrix> {
        match self {
            WaveformConfig::Afdm(c) => afdm::afdm_effective_channel(h, c),
            WaveformConfig::Otfs(c) => otfs::otfs_effective_channel(h, c),
        }
    }

    /// Builds the physical channel with this waveform's prefix.
    pub fn channel(&self, paths: &PathSet, scenario: &ScenarioConfig) -> Result<ChannelMatrix> {
        build_channel_matrix(paths, scenario, self.prefix())
    }
}
