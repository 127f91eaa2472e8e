//! Experiment configuration, Monte Carlo sweeps, waveform comparison
//! analyses and channel visualization.

pub mod analysis;
pub mod experiment;
pub mod viz;

pub use analysis::{
    comparison_table, diversity_probe, guard_overhead, modulation_cost, ComparisonRow, ComparisonSettings,
    CostFormula, DiversityReport, DiversitySettings, GuardPolicy,
};
pub use experiment::{run_experiment, simulate_ber, simulate_sensing, Experiment, RunReport, Task};
pub use viz::{viz_channel, Representation};
