use ddwave_core::afdm::{afdm_demodulate, afdm_modulate, AfdmConfig};
use ddwave_core::channel::{build_channel_matrix, Path, PathSet, Prefix, ScenarioConfig};
use ddwave_core::detection::{demap, Constellation, ConstellationKind};
use ddwave_core::harness::analysis::{guard_overhead, GuardPolicy};
use ddwave_core::otfs::{otfs_demodulate, otfs_modulate_vec, OtfsConfig};
use ddwave_core::sensing::{estimate_grid_sic, ml_objective, SensingProblem};
use ddwave_core::transforms::{daft_apply, devectorize, dft_apply, isfft, sfft, vectorize, DaftOperator, Direction};
use ddwave_core::waveform::{WaveformConfig, WaveformKind};
use ddwave_core::{CMatrix, C64};
use nalgebra::DVector;
use proptest::prelude::*;

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
}

fn signal(max_len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_len)
        .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

fn signal_of(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

/// Frame length, integer paths inside a small support, and a frame.
fn channel_case() -> impl Strategy<Value = (ScenarioConfig, Vec<Path>, Vec<C64>)> {
    (8usize..=24, 0usize..=3, 0u32..=2).prop_flat_map(|(n, max_delay, max_doppler)| {
        let a = max_doppler as i32;
        let path = (0..=max_delay, -a..=a, -1.0f64..1.0, -1.0f64..1.0)
            .prop_map(|(l, al, re, im)| Path::new(C64::new(re, im), l as f64, al as f64));
        (
            Just(ScenarioConfig::vehicular(n, max_delay, max_doppler as f64)),
            prop::collection::vec(path, 1..=4),
            signal_of(n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_is_unitary_and_invertible(x in signal(40)) {
        let y = dft_apply(&x, Direction::Forward).unwrap();
        prop_assert!((norm(&y) - norm(&x)).abs() <= 1e-10 * norm(&x).max(1e-300));
        let back = dft_apply(&y, Direction::Inverse).unwrap();
        prop_assert!(close(&back, &x, 1e-12));
    }

    #[test]
    fn daft_is_unitary_and_invertible(x in signal(40), c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let op = DaftOperator::new(x.len(), c1, c2).unwrap();
        let y = daft_apply(&x, &op, Direction::Forward).unwrap();
        prop_assert!((norm(&y) - norm(&x)).abs() <= 1e-10 * norm(&x).max(1e-300));
        prop_assert!(close(&daft_apply(&y, &op, Direction::Inverse).unwrap(), &x, 1e-12));
    }

    #[test]
    fn isfft_round_trip(k in 1usize..8, l in 1usize..8, seed in signal_of(64)) {
        let x = &seed[..k * l];
        let grid = devectorize(x, k, l).unwrap();
        prop_assert_eq!(vectorize(&grid), x.to_vec());
        let tf = isfft(&grid).unwrap();
        prop_assert!((norm(tf.as_slice()) - norm(x)).abs() <= 1e-10 * norm(x).max(1e-300));
        prop_assert!(close(sfft(&tf).unwrap().as_slice(), x, 1e-12));
    }

    #[test]
    fn modems_invert_over_identity_channel(x in signal(48), alpha in 0u32..3) {
        let n = x.len();
        let afdm = AfdmConfig::auto(n, alpha).unwrap();
        prop_assert!(close(&afdm_demodulate(&afdm_modulate(&x, &afdm).unwrap(), &afdm).unwrap(), &x, 1e-12));
        let otfs = OtfsConfig::square_for(n).unwrap();
        prop_assert!(close(&otfs_demodulate(&otfs_modulate_vec(&x, &otfs).unwrap(), &otfs).unwrap(), &x, 1e-12));
    }

    #[test]
    fn channel_is_linear_and_matches_dense((s, paths, x) in channel_case(), k in -2.0f64..2.0) {
        let paths = PathSet::new(paths).unwrap();
        for prefix in [Prefix::Cyclic, Prefix::ChirpPeriodic { c1: 0.1 }] {
            let h = build_channel_matrix(&paths, &s, prefix).unwrap();
            let scaled: Vec<C64> = x.iter().map(|v| v * k).collect();
            let a = h.apply(&scaled).unwrap();
            let b: Vec<C64> = h.apply(&x).unwrap().iter().map(|v| v * k).collect();
            prop_assert!(close(&a, &b, 1e-12));
            let d = h.dense().unwrap() * DVector::from_column_slice(&x);
            prop_assert!(close(d.as_slice(), &h.apply(&x).unwrap(), 1e-12));
        }
    }

    #[test]
    fn effective_channel_matches_pipeline((s, paths, x) in channel_case(), frac in -0.5f64..0.5) {
        let paths = PathSet::new(
            paths.into_iter().map(|p| Path::new(p.gain, p.delay, p.doppler + frac)).collect(),
        ).unwrap();
        for kind in [WaveformKind::Afdm, WaveformKind::Otfs] {
            let w = match kind {
                WaveformKind::Afdm => WaveformConfig::Afdm(AfdmConfig::auto(s.n, 3).unwrap()),
                WaveformKind::Otfs => WaveformConfig::Otfs(OtfsConfig::square_for(s.n).unwrap()),
            };
            let h = w.channel(&paths, &s).unwrap();
            let eff = w.effective_channel(&h).unwrap() * DVector::from_column_slice(&x);
            let pipe = w.demodulate(&h.apply(&w.modulate(&x).unwrap()).unwrap()).unwrap();
            prop_assert!(close(eff.as_slice(), &pipe, 1e-10));
        }
    }

    #[test]
    fn unitary_effective_channel_preserves_frobenius_norm((s, paths, _x) in channel_case()) {
        let paths = PathSet::new(paths).unwrap();
        let otfs = WaveformConfig::Otfs(OtfsConfig::square_for(s.n).unwrap());
        let h = otfs.channel(&paths, &s).unwrap();
        let dense: CMatrix = h.dense().unwrap();
        let eff = otfs.effective_channel(&h).unwrap();
        prop_assert!((eff.norm() - dense.norm()).abs() <= 1e-10 * dense.norm().max(1.0));
    }

    #[test]
    fn constellation_round_trip(bits in prop::collection::vec(0u8..2, 0..64), kind in 0usize..3) {
        let kind = [ConstellationKind::Bpsk, ConstellationKind::Qpsk, ConstellationKind::Qam16][kind];
        let c = Constellation::new(kind);
        let bits: Vec<u8> = bits[..bits.len() / c.bits_per_symbol() * c.bits_per_symbol()].to_vec();
        prop_assert_eq!(demap(&c.map(&bits).unwrap(), &c), bits);
    }

    #[test]
    fn guard_overhead_is_a_fraction(w in 0usize..40, wt in 0usize..5, wv in 0usize..5, n in prop::sample::select(vec![16usize, 64, 256])) {
        let policy = GuardPolicy { chirp_width: Some(w), delay_width: Some(wt), doppler_width: Some(wv) };
        let k = (n as f64).sqrt() as usize;
        for kind in [WaveformKind::Afdm, WaveformKind::Otfs] {
            if let Ok(g) = guard_overhead(kind, 2, 1, n, (k, n / k), &policy) {
                prop_assert!(g.fraction > 0.0 && g.fraction <= 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimator_residual_is_consistent_and_monotone(
        (s, paths, x) in channel_case(),
        noise in signal_of(24),
        p_assumed in 1usize..5,
        afdm in any::<bool>(),
    ) {
        let w = if afdm {
            WaveformConfig::Afdm(AfdmConfig::auto(s.n, s.max_doppler as u32).unwrap())
        } else {
            WaveformConfig::Otfs(OtfsConfig::square_for(s.n).unwrap())
        };
        let paths = PathSet::new(paths).unwrap();
        let mut y = w.demodulate(&w.channel(&paths, &s).unwrap().apply(&w.modulate(&x).unwrap()).unwrap()).unwrap();
        for (v, e) in y.iter_mut().zip(&noise) {
            *v += e * 0.1;
        }
        let problem = SensingProblem::new(y.clone(), x, w, s, p_assumed).unwrap();
        let est = estimate_grid_sic(&problem).unwrap();
        prop_assert_eq!(est.residual, ml_objective(&est.paths, &problem).unwrap());
        prop_assert!(est.residual >= 0.0);
        let start = y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        prop_assert!(est.residual_history[0] <= start);
        prop_assert!(est.residual_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(est.paths.windows(2).all(|w| w[0].gain.norm() >= w[1].gain.norm()));
    }
}
