//! Waveform comparison analyses: modulation cost, effective-channel
//! structure, diversity order and pilot guard overhead.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::afdm::{self, AfdmConfig};
use crate::channel::{Path, PathSet, ScenarioConfig};
use crate::detection::Constellation;
use crate::error::{DdError, Result};
use crate::otfs::OtfsConfig;
use crate::sensing::conditional_channel;
use crate::transforms::OpCounter;
use crate::waveform::{WaveformConfig, WaveformKind};
use crate::{CMatrix, C64};

/// One stage of a modulator, sized as a power of the frame length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CostStage {
    /// `N^(1-e)` transforms of length `N^e`.
    Fft { label: &'static str, exponent: f64 },
    /// One length-`N` elementwise multiply.
    Diagonal { label: &'static str },
}

/// Cost `a·N·log2N + b·N` assembled from the modulator's stages, counting
/// `M·log2M` per length-`M` FFT.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostFormula {
    pub stages: Vec<CostStage>,
    pub nlogn_coefficient: f64,
    pub linear_coefficient: f64,
}

impl CostFormula {
    pub fn from_stages(stages: Vec<CostStage>) -> Self {
        let mut a = 0.0;
        let mut b = 0.0;
        for s in &stages {
            match s {
                CostStage::Fft { exponent, .. } => a += exponent,
                CostStage::Diagonal { .. } => b += 1.0,
            }
        }
        Self { stages, nlogn_coefficient: a, linear_coefficient: b }
    }

    /// IDFT sandwiched between the two chirp diagonals.
    pub fn afdm() -> Self {
        Self::from_stages(vec![
            CostStage::Diagonal { label: "chirp c2" },
            CostStage::Fft { label: "N-point IDFT", exponent: 1.0 },
            CostStage::Diagonal { label: "chirp c1" },
        ])
    }

    /// ISFFT (both axes) followed by the Heisenberg transform on a square
    /// `√N x √N` grid.
    pub fn otfs() -> Self {
        Self::from_stages(vec![
            CostStage::Fft { label: "ISFFT delay axis", exponent: 0.5 },
            CostStage::Fft { label: "ISFFT Doppler axis", exponent: 0.5 },
            CostStage::Fft { label: "Heisenberg IDFT", exponent: 0.5 },
        ])
    }

    pub fn for_kind(kind: WaveformKind) -> Self {
        match kind {
            WaveformKind::Afdm => Self::afdm(),
            WaveformKind::Otfs => Self::otfs(),
        }
    }

    pub fn value(&self, n: usize) -> f64 {
        let n = n as f64;
        self.nlogn_coefficient * n * n.log2() + self.linear_coefficient * n
    }

    /// Same stages with `M²` per length-`M` DFT.
    pub fn direct_value(&self, n: usize) -> f64 {
        let n = n as f64;
        self.stages
            .iter()
            .map(|s| match s {
                CostStage::Fft { exponent, .. } => n.powf(1.0 - exponent) * n.powf(2.0 * exponent),
                CostStage::Diagonal { .. } => n,
            })
            .sum()
    }

    pub fn symbolic(&self) -> String {
        let mut terms = Vec::new();
        if self.nlogn_coefficient != 0.0 {
            terms.push(match rational(self.nlogn_coefficient) {
                (1, 1) => "N·log2N".to_string(),
                (p, 1) => format!("{p}·N·log2N"),
                (p, q) => format!("({p}/{q})·N·log2N"),
            });
        }
        if self.linear_coefficient != 0.0 {
            terms.push(match rational(self.linear_coefficient) {
                (1, 1) => "N".to_string(),
                (p, 1) => format!("{p}N"),
                (p, q) => format!("({p}/{q})N"),
            });
        }
        if terms.is_empty() {
            "0".into()
        } else {
            terms.join(" + ")
        }
    }
}

fn rational(x: f64) -> (i64, i64) {
    for q in 1..=16 {
        let p = x * q as f64;
        if (p - p.round()).abs() < 1e-9 {
            return (p.round() as i64, q);
        }
    }
    ((x * 1e6).round() as i64, 1_000_000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationCost {
    pub waveform: WaveformKind,
    pub n: usize,
    /// Closed form, or `O(N²)` when `N` is not a power of two.
    pub formula: String,
    pub formula_value: f64,
    pub fallback: bool,
    pub measured: OpCounter,
}

impl ModulationCost {
    pub fn measured_diagonal_multiplies(&self) -> u64 {
        self.measured.diagonal_multiplies
    }
}

pub fn modulation_cost(kind: WaveformKind, n: usize) -> Result<ModulationCost> {
    if n == 0 {
        return Err(DdError::Empty("frame"));
    }
    let formula = CostFormula::for_kind(kind);
    let fallback = !n.is_power_of_two();
    let cfg = match kind {
        WaveformKind::Afdm => WaveformConfig::Afdm(AfdmConfig::auto(n, 0)?),
        WaveformKind::Otfs => WaveformConfig::Otfs(OtfsConfig::square_for(n)?),
    };
    let x = vec![C64::new(1.0, 0.0); n];
    let mut measured = OpCounter::new();
    cfg.modulate_counted(&x, &mut measured)?;
    Ok(ModulationCost {
        waveform: kind,
        n,
        formula: if fallback { "O(N²)".into() } else { formula.symbolic() },
        formula_value: if fallback { formula.direct_value(n) } else { formula.value(n) },
        fallback,
        measured,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySettings {
    /// Largest number of difference patterns enumerated exhaustively.
    pub cap: u128,
    /// Draw this many random patterns when the cap is exceeded.
    pub subsample: Option<usize>,
    pub seed: u64,
    /// Singular values below `tolerance · σ_max` count as zero.
    pub tolerance: f64,
}

impl Default for DiversitySettings {
    fn default() -> Self {
        Self { cap: 1 << 20, subsample: None, seed: 0, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub waveform: WaveformKind,
    pub n: usize,
    pub paths: usize,
    pub patterns_total: u128,
    pub patterns_checked: u64,
    pub exhaustive: bool,
    pub min_rank: usize,
    /// First pattern reaching `min_rank`.
    pub witness: Vec<C64>,
    /// Smallest `σ_P / σ_1` over all checked patterns.
    pub min_singular_ratio: f64,
}

/// Distinct values of `a − b` over constellation pairs, zero first.
pub fn difference_set(c: &Constellation) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0)];
    for a in c.points() {
        for b in c.points() {
            let d = a - b;
            if !out.iter().any(|v| (v - d).norm() < 1e-9) {
                out.push(d);
            }
        }
    }
    out
}

fn rank_and_ratio(phi: &CMatrix, tol: f64) -> (usize, f64) {
    let sv = phi.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return (0, 0.0);
    }
    let rank = sv.iter().filter(|&&s| s > tol * max).count();
    (rank, sv.min() / max)
}

/// Minimum rank of `[G_1 δ, …, G_P δ]` over nonzero difference patterns `δ`,
/// with unit-gain single-path effective channels `G_p`.
pub fn diversity_probe(
    waveform: &WaveformConfig,
    scenario: &ScenarioConfig,
    paths: &PathSet,
    constellation: &Constellation,
    settings: &DiversitySettings,
) -> Result<DiversityReport> {
    let n = waveform.n();
    let gs: Vec<CMatrix> = paths
        .paths()
        .iter()
        .map(|p| conditional_channel(C64::new(1.0, 0.0), p.delay, p.doppler, scenario, waveform)?.to_matrix())
        .collect::<Result<_>>()?;
    let diffs = difference_set(constellation);
    let base = diffs.len() as u128;
    let total = base
        .checked_pow(n as u32)
        .map(|t| t - 1)
        .unwrap_or(u128::MAX);

    let mut report = DiversityReport {
        waveform: waveform.kind(),
        n,
        paths: paths.len(),
        patterns_total: total,
        patterns_checked: 0,
        exhaustive: total <= settings.cap,
        min_rank: usize::MAX,
        witness: Vec::new(),
        min_singular_ratio: f64::INFINITY,
    };
    let mut phi = DMatrix::<C64>::zeros(n, paths.len());
    let mut visit = |delta: &[C64], report: &mut DiversityReport| {
        let d = nalgebra::DVector::from_column_slice(delta);
        for (p, g) in gs.iter().enumerate() {
            phi.set_column(p, &(g * &d));
        }
        let (rank, ratio) = rank_and_ratio(&phi, settings.tolerance);
        report.patterns_checked += 1;
        report.min_singular_ratio = report.min_singular_ratio.min(ratio);
        if rank < report.min_rank {
            report.min_rank = rank;
            report.witness = delta.to_vec();
        }
    };

    if report.exhaustive {
        let mut digits = vec![0usize; n];
        let mut delta = vec![C64::new(0.0, 0.0); n];
        for _ in 0..total {
            for (i, d) in digits.iter_mut().enumerate() {
                *d += 1;
                if *d < diffs.len() {
                    delta[i] = diffs[*d];
                    break;
                }
                *d = 0;
                delta[i] = diffs[0];
            }
            visit(&delta, &mut report);
        }
    } else {
        let count = settings
            .subsample
            .ok_or(DdError::CapExceeded { required: total, cap: settings.cap })?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut delta = vec![C64::new(0.0, 0.0); n];
        let mut drawn = 0;
        while drawn < count {
            for d in delta.iter_mut() {
                *d = diffs[rng.random_range(0..diffs.len())];
            }
            if delta.iter().all(|d| d.norm() == 0.0) {
                continue;
            }
            visit(&delta, &mut report);
            drawn += 1;
        }
    }
    if report.patterns_checked == 0 {
        return Err(DdError::Empty("difference patterns"));
    }
    Ok(report)
}

/// Guard widths; `None` selects the default for the channel spread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardPolicy {
    /// AFDM: zero symbols on each side of the chirp-domain pilot.
    pub chirp_width: Option<usize>,
    /// OTFS: zero cells on each side of the pilot along delay.
    pub delay_width: Option<usize>,
    /// OTFS: zero cells on each side of the pilot along Doppler.
    pub doppler_width: Option<usize>,
}

impl GuardPolicy {
    pub fn zero() -> Self {
        Self { chirp_width: Some(0), delay_width: Some(0), doppler_width: Some(0) }
    }
}

/// Default AFDM guard width: the number of chirp-domain offsets a pilot can
/// be spread over, minus the pilot itself.
pub fn default_chirp_width(max_delay: usize, max_doppler: usize) -> usize {
    (max_delay + 1) * (2 * max_doppler + 1) - 1
}

/// Symbols occupied by a pilot with `width` guards on each side, cyclic in a
/// dimension of length `len`.
fn span(width: usize, len: usize, axis: &str) -> Result<usize> {
    if width > len / 2 {
        return Err(DdError::GuardExceedsFrame(format!(
            "{axis} guard of {width} on each side does not fit in {len}"
        )));
    }
    Ok((2 * width + 1).min(len))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardOverhead {
    pub waveform: WaveformKind,
    /// `1` for a chirp-domain guard, `2` for a delay-Doppler block.
    pub dimensions: usize,
    pub widths: Vec<usize>,
    pub reserved: usize,
    pub n: usize,
    pub fraction: f64,
}

pub fn guard_overhead(
    kind: WaveformKind,
    max_delay: usize,
    max_doppler: usize,
    n: usize,
    grid: (usize, usize),
    policy: &GuardPolicy,
) -> Result<GuardOverhead> {
    if n == 0 {
        return Err(DdError::Empty("frame"));
    }
    let (widths, reserved) = match kind {
        WaveformKind::Afdm => {
            let w = policy.chirp_width.unwrap_or(default_chirp_width(max_delay, max_doppler));
            (vec![w], span(w, n, "chirp")?)
        }
        WaveformKind::Otfs => {
            let (k, l) = grid;
            if k * l != n {
                return Err(DdError::InvalidConfig(format!("grid {k}x{l} does not hold {n} symbols")));
            }
            let wt = policy.delay_width.unwrap_or(max_delay);
            let wv = policy.doppler_width.unwrap_or(max_doppler);
            (vec![wt, wv], span(wt, k, "delay")? * span(wv, l, "doppler")?)
        }
    };
    Ok(GuardOverhead {
        waveform: kind,
        dimensions: widths.len(),
        widths,
        reserved,
        n,
        fraction: reserved as f64 / n as f64,
    })
}

/// Support of an effective channel: nonzero cyclic diagonals and the largest
/// nonzero count in any row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStructure {
    /// Offsets `d` with a nonzero at `(m, (m + d) mod N)` for some row `m`.
    pub diagonals: Vec<usize>,
    /// Offsets whose whole cyclic diagonal is nonzero.
    pub full_diagonals: Vec<usize>,
    pub max_row_support: usize,
    pub nonzeros: usize,
}

impl ChannelStructure {
    /// Every nonzero lies on one of `paths` complete cyclic diagonals.
    pub fn is_shifted_band(&self, paths: usize) -> bool {
        self.diagonals.len() == paths && self.full_diagonals.len() == paths
    }

    pub fn describe(&self, paths: usize) -> String {
        if self.is_shifted_band(paths) {
            format!("Shifted band ({} cyclic diagonals)", self.diagonals.len())
        } else if self.max_row_support <= paths {
            format!(
                "Scattered diagonal (≤{} per row over {} diagonals)",
                self.max_row_support,
                self.diagonals.len()
            )
        } else {
            format!("Dense ({} nonzeros)", self.nonzeros)
        }
    }
}

/// Entries below `threshold · max|h|` count as zero.
pub fn channel_structure(h: &CMatrix, threshold: f64) -> ChannelStructure {
    let n = h.nrows();
    let max = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let cut = threshold * max;
    let mut per_diag = vec![0usize; n];
    let mut max_row = 0;
    let mut nonzeros = 0;
    for m in 0..n {
        let mut row = 0;
        for c in 0..h.ncols() {
            if h[(m, c)].norm() > cut {
                per_diag[(c + n - m) % n] += 1;
                row += 1;
            }
        }
        nonzeros += row;
        max_row = max_row.max(row);
    }
    ChannelStructure {
        diagonals: (0..n).filter(|&d| per_diag[d] > 0).collect(),
        full_diagonals: (0..n).filter(|&d| per_diag[d] == n).collect(),
        max_row_support: max_row,
        nonzeros,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub property: String,
    pub afdm: String,
    pub otfs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSettings {
    pub scenario: ScenarioConfig,
    /// Integer paths for the structure row.
    pub paths: Vec<Path>,
    pub probe_n: usize,
    pub probe_max_doppler: f64,
    pub probe_paths: Vec<Path>,
    pub constellation: crate::detection::ConstellationKind,
    pub guard: GuardPolicy,
}

impl Default for ComparisonSettings {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::vehicular(64, 2, 1.0),
            paths: vec![
                Path::new(C64::new(0.8, 0.1), 0.0, 0.0),
                Path::new(C64::new(-0.3, 0.4), 1.0, -1.0),
                Path::new(C64::new(0.2, -0.2), 2.0, 1.0),
            ],
            probe_n: 8,
            probe_max_doppler: 1.0,
            probe_paths: vec![Path::unit(0, 0.0), Path::unit(1, 0.0)],
            constellation: crate::detection::ConstellationKind::Bpsk,
            guard: GuardPolicy::default(),
        }
    }
}

fn fraction_text(num: usize, den: usize) -> String {
    format!("{num}/{den} = {:.4}", num as f64 / den as f64)
}

/// The five-property waveform comparison, every entry computed.
pub fn comparison_table(settings: &ComparisonSettings) -> Result<Vec<ComparisonRow>> {
    let s = &settings.scenario;
    s.validate()?;
    let alpha = s.max_doppler.ceil() as u32;
    let afdm_cfg = AfdmConfig::auto(s.n, alpha)?;
    let otfs_cfg = OtfsConfig::square_for(s.n)?;
    let waves = [WaveformConfig::Afdm(afdm_cfg.clone()), WaveformConfig::Otfs(otfs_cfg.clone())];

    let domain = [
        if chirp_basis(&waves[0])? {
            format!("Multicarrier chirp (c1 = {:.6})", afdm_cfg.c1)
        } else {
            "Multicarrier".into()
        },
        format!("Delay-Doppler ({}x{} grid)", otfs_cfg.k, otfs_cfg.l),
    ];

    let paths = PathSet::new(settings.paths.clone())?;
    let mut structure = Vec::new();
    for w in &waves {
        let h = w.channel(&paths, s)?;
        structure.push(channel_structure(&w.effective_channel(&h)?, 1e-9).describe(paths.len()));
    }

    let cost: Vec<String> = [WaveformKind::Afdm, WaveformKind::Otfs]
        .iter()
        .map(|&k| CostFormula::for_kind(k).symbolic())
        .collect();

    let probe_scenario = ScenarioConfig {
        n: settings.probe_n,
        max_delay: settings.probe_paths.iter().map(|p| p.delay as usize).max().unwrap_or(0),
        max_doppler: settings.probe_paths.iter().map(|p| p.doppler.abs()).fold(settings.probe_max_doppler, f64::max),
        ..s.clone()
    };
    let probe_alpha = probe_scenario.max_doppler.ceil() as u32;
    let probe_paths = PathSet::new(settings.probe_paths.clone())?;
    let constellation = Constellation::new(settings.constellation);
    let mut diversity = Vec::new();
    for w in [
        WaveformConfig::Afdm(AfdmConfig::auto(settings.probe_n, probe_alpha)?),
        WaveformConfig::Otfs(OtfsConfig::square_for(settings.probe_n)?),
    ] {
        let r = diversity_probe(&w, &probe_scenario, &probe_paths, &constellation, &DiversitySettings::default())?;
        diversity.push(if r.min_rank >= r.paths {
            format!("Full diversity (min rank {} of {})", r.min_rank, r.paths)
        } else {
            format!("Order-{} (min rank {} of {})", r.min_rank, r.min_rank, r.paths)
        });
    }

    let mut guard = Vec::new();
    for kind in [WaveformKind::Afdm, WaveformKind::Otfs] {
        let g = guard_overhead(
            kind,
            s.max_delay,
            alpha as usize,
            s.n,
            (otfs_cfg.k, otfs_cfg.l),
            &settings.guard,
        )?;
        guard.push(format!("{}D zero-pad ({})", g.dimensions, fraction_text(g.reserved, g.n)));
    }

    let row = |p: &str, v: &[String]| ComparisonRow { property: p.into(), afdm: v[0].clone(), otfs: v[1].clone() };
    Ok(vec![
        row("Transform Domain", &domain),
        row("Eff. Channel Structure", &structure),
        row("Modulation Complexity", &cost),
        row("Asymptotic Diversity", &diversity),
        row("Pilot Guard Overhead", &guard),
    ])
}

/// Whether every modulation basis vector has a constant nonzero second
/// phase difference (a discrete linear chirp).
fn chirp_basis(w: &WaveformConfig) -> Result<bool> {
    let n = w.n();
    for m in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[m] = C64::new(1.0, 0.0);
        let s = w.modulate(&e)?;
        let d2: Vec<C64> = (0..n - 2).map(|i| s[i + 2] * s[i + 1].conj() * s[i + 1].conj() * s[i]).collect();
        let flat = d2.iter().all(|v| (v - d2[0]).norm() < 1e-9 * d2[0].norm().max(1e-300));
        if !flat || (d2[0].arg()).abs() < 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// AFDM band offsets of integer paths; `None` for a fractional Doppler.
pub fn predicted_offsets(paths: &PathSet, cfg: &AfdmConfig) -> Vec<Option<usize>> {
    paths
        .paths()
        .iter()
        .map(|p| afdm::integer_band_offset(p.delay as usize, p.doppler, cfg.c1, cfg.n))
        .collect()
}

/// Text table with aligned columns.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let w0 = rows.iter().map(|r| r.property.chars().count()).max().unwrap_or(0).max(8);
    let w1 = rows.iter().map(|r| r.afdm.chars().count()).max().unwrap_or(0).max(4);
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut out = format!("{} | {} | OTFS\n", pad("Property", w0), pad("AFDM", w1));
    for r in rows {
        out.push_str(&format!("{} | {} | {}\n", pad(&r.property, w0), pad(&r.afdm, w1), r.otfs));
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut out = String::from("property,afdm,otfs\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", quote(&r.property), quote(&r.afdm), quote(&r.otfs)));
    }
    out
}
