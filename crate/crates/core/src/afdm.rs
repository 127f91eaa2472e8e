//! AFDM: symbols on discrete chirps through the inverse DAFT.
//!
//! With `c1 = (2·α_max + 1) / (2N)` every integer path `(ℓ, α)` lands on a
//! single cyclic diagonal of the effective channel, at column offset
//! `(2N·c1·ℓ − α) mod N` from the row index (see [`band_offset`]).

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, Prefix};
use crate::error::{check_len, DdError, Result};
use crate::transforms::{daft_apply_counted, DaftOperator, Direction, OpCounter};
use crate::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfdmConfig {
    pub n: usize,
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    /// Set when `c1` was derived from the Doppler limit.
    #[serde(default)]
    pub auto_c1: bool,
}

impl AfdmConfig {
    /// `c1 = (2·max_doppler + 1) / (2n)`, `c2 = 0`.
    pub fn auto(n: usize, max_doppler: u32) -> Result<Self> {
        if n == 0 {
            return Err(DdError::Empty("frame length"));
        }
        let c1 = (2.0 * f64::from(max_doppler) + 1.0) / (2.0 * n as f64);
        Ok(Self { n, c1, c2: 0.0, auto_c1: true })
    }

    pub fn manual(n: usize, c1: f64, c2: f64) -> Result<Self> {
        let cfg = Self { n, c1, c2, auto_c1: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_c2(mut self, c2: f64) -> Self {
        self.c2 = c2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DdError::Empty("frame length"));
        }
        if !(self.c1.is_finite() && self.c2.is_finite()) {
            return Err(DdError::InvalidConfig("chirp parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn prefix(&self) -> Prefix {
        Prefix::ChirpPeriodic { c1: self.c1 }
    }

    pub fn operator(&self) -> Result<DaftOperator> {
        DaftOperator::new(self.n, self.c1, self.c2)
    }
}

/// Column offset, modulo `n`, of the effective-channel diagonal hit by a
/// path with delay `delay` and Doppler `doppler`. Integer only when
/// `2n·c1·delay − doppler` is an integer.
pub fn band_offset(delay: f64, doppler: f64, c1: f64, n: usize) -> f64 {
    (2.0 * n as f64 * c1 * delay - doppler).rem_euclid(n as f64)
}

/// [`band_offset`] when it is an integer (within `1e-9`), else `None`.
pub fn integer_band_offset(delay: usize, doppler: f64, c1: f64, n: usize) -> Option<usize> {
    let off = band_offset(delay as f64, doppler, c1, n);
    let rounded = off.round();
    ((off - rounded).abs() < 1e-9).then(|| rounded as usize % n)
}

pub fn afdm_modulate(x: &[C64], cfg: &AfdmConfig) -> Result<Vec<C64>> {
    afdm_modulate_counted(x, cfg, &mut OpCounter::new())
}

pub fn afdm_modulate_counted(x: &[C64], cfg: &AfdmConfig, counter: &mut OpCounter) -> Result<Vec<C64>> {
    cfg.validate()?;
    check_len(cfg.n, x.len())?;
    daft_apply_counted(x, &cfg.operator()?, Direction::Inverse, counter)
}

pub fn afdm_demodulate(r: &[C64], cfg: &AfdmConfig) -> Result<Vec<C64>> {
    cfg.validate()?;
    check_len(cfg.n, r.len())?;
    daft_apply_counted(r, &cfg.operator()?, Direction::Forward, &mut OpCounter::new())
}

fn check_prefix(h: &ChannelMatrix, cfg: &AfdmConfig) -> Result<()> {
    match h.prefix() {
        Prefix::ChirpPeriodic { c1 } if c1 == cfg.c1 => Ok(()),
        Prefix::ChirpPeriodic { c1 } => Err(DdError::PrefixMismatch(format!(
            "channel built for c1 = {c1}, waveform uses c1 = {}",
            cfg.c1
        ))),
        other => Err(DdError::PrefixMismatch(format!(
            "AFDM needs a chirp-periodic prefix, channel uses {other:?}"
        ))),
    }
}

/// `Σ_p A (h_p C_p N_p Π^ℓ_p) A⁻¹` from dense factors.
pub fn afdm_effective_channel(h: &ChannelMatrix, cfg: &AfdmConfig) -> Result<CMatrix> {
    cfg.validate()?;
    check_len(cfg.n, h.size())?;
    check_prefix(h, cfg)?;
    if h.size() > crate::MAX_DENSE_N {
        return Err(DdError::TooLarge(h.size()));
    }
    let a = cfg.operator()?.to_dense()?;
    let a_inv = a.adjoint();
    let n = h.size();
    let mut eff = CMatrix::zeros(n, n);
    for f in h.per_path() {
        eff += &a * f.dense() * &a_inv;
    }
    Ok(eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, build_channel_matrix, NoiseModel, Path, PathSet, ScenarioConfig};
    use crate::transforms::{dft_apply, DftMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    fn norm(x: &[C64]) -> f64 {
        x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn auto_rule() {
        let cfg = AfdmConfig::auto(64, 2).unwrap();
        assert_eq!(cfg.c1, 5.0 / 128.0);
        assert!(cfg.auto_c1);
        assert_eq!(cfg.c2, 0.0);
        assert!(!AfdmConfig::manual(16, 0.1, 0.2).unwrap().auto_c1);
        assert!(AfdmConfig::manual(16, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn degenerate_chirps_give_idft_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 32);
        let cfg = AfdmConfig::manual(32, 0.0, 0.0).unwrap();
        assert_eq!(afdm_modulate(&x, &cfg).unwrap(), dft_apply(&x, Direction::Inverse).unwrap());
    }

    #[test]
    fn unitary_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = AfdmConfig::auto(64, 3).unwrap().with_c2(0.0123);
        let x = random_vec(&mut rng, 64);
        let s = afdm_modulate(&x, &cfg).unwrap();
        assert!((norm(&s) - norm(&x)).abs() < 1e-12);
        assert!(max_diff(&afdm_demodulate(&s, &cfg).unwrap(), &x) < 1e-12);
        assert!(afdm_demodulate(&[c(0.0, 0.0); 64], &cfg).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(afdm_modulate(&x[..10], &cfg).is_err());
    }

    #[test]
    fn two_point_hand_value() {
        // Aᴴ = diag(1, e^{jπ/2}) F2ᴴ; Aᴴ(1,0) = (1, j)/√2
        let cfg = AfdmConfig::manual(2, 0.25, 0.0).unwrap();
        let s = afdm_modulate(&[c(1.0, 0.0), c(0.0, 0.0)], &cfg).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(max_diff(&s, &[c(h, 0.0), c(0.0, h)]) < 1e-15);
    }

    fn channel(paths: &PathSet, s: &ScenarioConfig, cfg: &AfdmConfig) -> ChannelMatrix {
        build_channel_matrix(paths, s, cfg.prefix()).unwrap()
    }

    #[test]
    fn identity_and_trace() {
        let s = ScenarioConfig::vehicular(16, 3, 2.0);
        let cfg = AfdmConfig::auto(16, 2).unwrap();
        let id = channel(&PathSet::new(vec![Path::unit(0, 0.0)]).unwrap(), &s, &cfg);
        let eff = afdm_effective_channel(&id, &cfg).unwrap();
        assert!((eff - CMatrix::identity(16, 16)).iter().all(|v| v.norm() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let paths = PathSet::random_integer(&mut rng, 3, &s).unwrap();
        let h = channel(&paths, &s, &cfg);
        let eff = afdm_effective_channel(&h, &cfg).unwrap();
        assert!((eff.trace() - h.dense().unwrap().trace()).norm() < 1e-10);
        let fro = |m: &CMatrix| m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!((fro(&eff) - fro(&h.dense().unwrap())).abs() < 1e-10);
    }

    #[test]
    fn rejects_prefix_mismatch() {
        let s = ScenarioConfig::vehicular(16, 3, 2.0);
        let cfg = AfdmConfig::auto(16, 2).unwrap();
        let paths = PathSet::new(vec![Path::unit(1, 1.0)]).unwrap();
        let wrong = build_channel_matrix(&paths, &s, Prefix::ChirpPeriodic { c1: 0.01 }).unwrap();
        assert!(matches!(afdm_effective_channel(&wrong, &cfg), Err(DdError::PrefixMismatch(_))));
        let cp = build_channel_matrix(&paths, &s, Prefix::Cyclic).unwrap();
        assert!(matches!(afdm_effective_channel(&cp, &cfg), Err(DdError::PrefixMismatch(_))));
    }

    #[test]
    fn pipeline_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // odd N makes the chirp-periodic prefix phases nontrivial
        for n in [16usize, 15] {
            let s = ScenarioConfig::vehicular(n, 3, 2.0);
            let cfg = AfdmConfig::auto(n, 2).unwrap().with_c2(0.01);
            for _ in 0..5 {
                let paths = PathSet::random_integer(&mut rng, 3, &s).unwrap();
                let h = channel(&paths, &s, &cfg);
                let eff = afdm_effective_channel(&h, &cfg).unwrap();
                let x = random_vec(&mut rng, n);
                let r = apply_channel(&h, &afdm_modulate(&x, &cfg).unwrap(), &NoiseModel::noiseless()).unwrap();
                let y = afdm_demodulate(&r, &cfg).unwrap();
                let expected = &eff * nalgebra::DVector::from_column_slice(&x);
                assert!(max_diff(&y, expected.as_slice()) < 1e-10);
            }
        }
    }

    fn diag_energy(m: &CMatrix) -> Vec<f64> {
        let n = m.nrows();
        let mut e = vec![0.0; n];
        for r in 0..n {
            for col in 0..n {
                e[(col + n - r) % n] += m[(r, col)].norm_sqr();
            }
        }
        e
    }

    #[test]
    fn integer_paths_give_shifted_band_at_predicted_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [16usize, 15] {
            let s = ScenarioConfig::vehicular(n, 2, 1.0);
            let cfg = AfdmConfig::auto(n, 1).unwrap();
            for _ in 0..10 {
                let paths = PathSet::random_integer(&mut rng, 3, &s).unwrap();
                let h = channel(&paths, &s, &cfg);
                let mut offsets = Vec::new();
                for f in h.per_path() {
                    let pred = integer_band_offset(f.delay, f.doppler, cfg.c1, n).unwrap();
                    let m = afdm_effective_channel(&single(f, &s, &cfg), &cfg).unwrap();
                    for r in 0..n {
                        let nz: Vec<usize> = (0..n).filter(|&col| m[(r, col)].norm() > 1e-9).collect();
                        assert_eq!(nz, vec![(r + pred) % n]);
                    }
                    offsets.push(pred);
                }
                offsets.sort();
                offsets.dedup();
                assert_eq!(offsets.len(), 3);
            }
        }
    }

    fn single(f: &crate::channel::PathFactors, s: &ScenarioConfig, cfg: &AfdmConfig) -> ChannelMatrix {
        let paths = PathSet::new(vec![Path::new(f.gain, f.delay as f64, f.doppler)]).unwrap();
        channel(&paths, s, cfg)
    }

    #[test]
    fn fractional_doppler_stays_near_prediction() {
        let n = 64;
        let s = ScenarioConfig::vehicular(n, 3, 2.0);
        let cfg = AfdmConfig::auto(n, 2).unwrap();
        for (l, a) in [(0usize, 0.5), (1, -1.5), (3, 1.5), (2, 0.3)] {
            let paths = PathSet::new(vec![Path::new(c(1.0, 0.0), l as f64, a)]).unwrap();
            let eff = afdm_effective_channel(&channel(&paths, &s, &cfg), &cfg).unwrap();
            let pred = band_offset(l as f64, a, cfg.c1, n).round() as usize % n;
            let e = diag_energy(&eff);
            let total: f64 = e.iter().sum();
            let near: f64 = (0..=8).map(|d| e[(pred + n + d - 4) % n]).sum();
            assert!(near / total >= 0.95, "{l} {a}: {}", near / total);
        }
    }

    #[test]
    fn dense_operator_is_afdm_matrix() {
        let cfg = AfdmConfig::auto(8, 1).unwrap();
        let a = cfg.operator().unwrap().to_dense().unwrap();
        let f = DftMatrix::new(8).unwrap().to_dense().unwrap();
        let l1 = crate::transforms::ChirpDiagonal::new(8, cfg.c1).unwrap().to_dense();
        assert!((a - f * l1).iter().all(|v| v.norm() < 1e-15));
    }
}
