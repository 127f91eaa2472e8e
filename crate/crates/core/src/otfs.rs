//! OTFS modulation over a `K x L` delay-Doppler grid.
//!
//! Rows of the grid index delay (`K`), columns index Doppler (`L`). The
//! transmit chain `vec(G_tx F_Kᴴ · F_K X F_Lᴴ)` collapses to
//! `vec(G_tx X F_Lᴴ)`, so only an `L`-point inverse DFT per row is computed.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, Prefix};
use crate::error::{check_len, DdError, Result};
use crate::transforms::{self, DftMatrix, OpCounter};
use crate::{CMatrix, C64};

/// Axis names recorded alongside OTFS grids and heatmaps.
pub const GRID_AXES: (&str, &str) = ("delay", "doppler");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtfsConfig {
    pub k: usize,
    pub l: usize,
    /// Transmit pulse diagonal; `None` is rectangular (identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_pulse: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_pulse: Option<Vec<C64>>,
}

impl OtfsConfig {
    pub fn new(k: usize, l: usize) -> Result<Self> {
        let cfg = Self { k, l, tx_pulse: None, rx_pulse: None };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Near-square factorization of `n` with `K >= L`, preferring powers of two.
    pub fn square_for(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DdError::Empty("frame length"));
        }
        let mut l = (n as f64).sqrt().floor() as usize;
        while l > 1 && n % l != 0 {
            l -= 1;
        }
        Self::new(n / l, l)
    }

    /// Windowed pulses. Round-trip and isometry guarantees hold only for
    /// unit-modulus pulses; see [`OtfsConfig::is_unitary`].
    pub fn with_pulses(mut self, tx: Vec<C64>, rx: Vec<C64>) -> Result<Self> {
        self.tx_pulse = Some(tx);
        self.rx_pulse = Some(rx);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.k * self.l
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(DdError::InvalidConfig("OTFS grid dimensions must be positive".into()));
        }
        for p in [&self.tx_pulse, &self.rx_pulse].into_iter().flatten() {
            check_len(self.k, p.len())?;
        }
        Ok(())
    }

    pub fn is_rectangular(&self) -> bool {
        self.tx_pulse.is_none() && self.rx_pulse.is_none()
    }

    pub fn is_unitary(&self) -> bool {
        [&self.tx_pulse, &self.rx_pulse]
            .into_iter()
            .flatten()
            .all(|p| p.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12))
    }

    pub fn prefix(&self) -> Prefix {
        Prefix::Cyclic
    }

    fn pulse_dense(&self, pulse: &Option<Vec<C64>>) -> CMatrix {
        match pulse {
            None => CMatrix::identity(self.k, self.k),
            Some(p) => CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(p)),
        }
    }
}

/// A `K x L` symbol grid; its column-major storage is the vectorized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OtfsFrame {
    grid: CMatrix,
}

impl OtfsFrame {
    pub fn from_grid(grid: CMatrix) -> Self {
        Self { grid }
    }

    pub fn from_vec(x: &[C64], cfg: &OtfsConfig) -> Result<Self> {
        Ok(Self { grid: transforms::devectorize(x, cfg.k, cfg.l)? })
    }

    pub fn grid(&self) -> &CMatrix {
        &self.grid
    }

    pub fn as_vec(&self) -> &[C64] {
        self.grid.as_slice()
    }
}

fn scale_rows(m: &mut CMatrix, pulse: &Option<Vec<C64>>, counter: &mut OpCounter) {
    if let Some(p) = pulse {
        for (r, g) in p.iter().enumerate() {
            for c in 0..m.ncols() {
                m[(r, c)] *= g;
            }
        }
        counter.record_diagonal(m.len());
    }
}

pub fn otfs_modulate(frame: &OtfsFrame, cfg: &OtfsConfig) -> Result<Vec<C64>> {
    otfs_modulate_counted(frame, cfg, &mut OpCounter::new())
}

pub fn otfs_modulate_counted(frame: &OtfsFrame, cfg: &OtfsConfig, counter: &mut OpCounter) -> Result<Vec<C64>> {
    cfg.validate()?;
    let (k, l) = frame.grid.shape();
    check_len(cfg.k, k)?;
    check_len(cfg.l, l)?;
    let mut s = frame.grid.clone();
    transforms::idft_rows(&mut s, counter);
    scale_rows(&mut s, &cfg.tx_pulse, counter);
    Ok(transforms::vectorize(&s))
}

/// Modulates a vectorized frame.
pub fn otfs_modulate_vec(x: &[C64], cfg: &OtfsConfig) -> Result<Vec<C64>> {
    otfs_modulate(&OtfsFrame::from_vec(x, cfg)?, cfg)
}

/// `y = vec(G_rx · R · F_L)` with `R` the devectorized received frame.
pub fn otfs_demodulate(r: &[C64], cfg: &OtfsConfig) -> Result<Vec<C64>> {
    cfg.validate()?;
    let mut grid = transforms::devectorize(r, cfg.k, cfg.l)?;
    let mut counter = OpCounter::new();
    transforms::dft_rows(&mut grid, &mut counter);
    scale_rows(&mut grid, &cfg.rx_pulse, &mut counter);
    Ok(transforms::vectorize(&grid))
}

/// Dense `(F_L ⊗ G_rx) · H · (F_Lᴴ ⊗ G_tx)`, summed path by path.
pub fn otfs_effective_channel(h: &ChannelMatrix, cfg: &OtfsConfig) -> Result<CMatrix> {
    cfg.validate()?;
    check_len(cfg.n(), h.size())?;
    if h.size() > crate::MAX_DENSE_N {
        return Err(DdError::TooLarge(h.size()));
    }
    let fl = DftMatrix::new(cfg.l)?.to_dense()?;
    let rx = fl.kronecker(&cfg.pulse_dense(&cfg.rx_pulse));
    let tx = fl.adjoint().kronecker(&cfg.pulse_dense(&cfg.tx_pulse));
    let n = h.size();
    let mut eff = CMatrix::zeros(n, n);
    for f in h.per_path() {
        eff += &rx * f.dense() * &tx;
    }
    Ok(eff)
}
