//! Scenario configuration: file schema, defaults, validation.
//!
//! Configuration is read from a TOML file. Every field has a default,
//! so an empty file (or no file at all) runs the reference scenario:
//! one MBS and four UAVs serving 30 MDs in a 1000 x 1000 m area over
//! 600 slots of 100 ms grouped into 1 s epochs.
//!
//! File units are operator-friendly (GHz, MHz, dBm, Mb, W·h); everything
//! is converted to SI (Hz, W, J, bits, m, s) when the world is built.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::orchestrator::StrategyKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Inclusive sampling range `[min, max]`.
pub type Range = [f64; 2];

fn range_valid(r: Range) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    /// Slot duration delta [s].
    pub slot_duration_s: f64,
    /// Slots per epoch.
    pub slots_per_epoch: u32,
    /// Total slot count; must be divisible by `slots_per_epoch`.
    pub total_slots: u32,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { slot_duration_s: 0.1, slots_per_epoch: 10, total_slots: 600 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaSection {
    pub x_max_m: f64,
    pub y_max_m: f64,
}

impl Default for AreaSection {
    fn default() -> Self {
        Self { x_max_m: 1000.0, y_max_m: 1000.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub md_count: u32,
    pub uav_count: u32,
    /// Whether the terrestrial MBS server exists. Disabling it together
    /// with `uav_count = 0` yields a server-free world (used by the
    /// local-only equivalence checks).
    pub include_mbs: bool,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self { md_count: 30, uav_count: 4, include_mbs: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdSection {
    /// CPU frequency range [GHz].
    pub cpu_ghz: Range,
    /// Transmit power range [dBm].
    pub tx_power_dbm: Range,
    /// Energy normalizer [W·h per GHz of own CPU capacity]; converted to
    /// joules at world build and used only to normalize energy costs.
    pub energy_budget_wh_per_ghz: f64,
    /// Payment budget per task [currency].
    pub payment_budget: f64,
    /// Utility weight range; samples are clamped to [0.01, 0.99] because
    /// the closed-form negotiation expressions are singular at 0 and 1.
    pub weight: Range,
    /// Effective switched capacitance of the CPU.
    pub capacitance: f64,
}

impl Default for MdSection {
    fn default() -> Self {
        Self {
            cpu_ghz: [0.5, 1.0],
            tx_power_dbm: [10.0, 25.0],
            energy_budget_wh_per_ghz: 1.0,
            payment_budget: 20.0,
            weight: [0.0, 1.0],
            capacitance: 1e-27,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    /// CPU core count range (sampled per server, integer).
    pub n_core: [u32; 2],
    /// Total CPU frequency range for the MBS [GHz].
    pub mbs_cpu_ghz: Range,
    /// Total CPU frequency range for each UAV [GHz].
    pub uav_cpu_ghz: Range,
    /// MBS energy normalizer [W·h per GHz of total capacity].
    pub mbs_energy_budget_wh_per_ghz: f64,
    /// UAV energy budget [J].
    pub uav_energy_budget_j: f64,
    /// Maximum unit price for computing resources [currency per GHz].
    pub max_unit_price_per_ghz: f64,
    /// Utility weight range; clamped like the MD weights.
    pub weight: Range,
    pub capacitance: f64,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            n_core: [2, 10],
            mbs_cpu_ghz: [20.0, 40.0],
            uav_cpu_ghz: [10.0, 20.0],
            mbs_energy_budget_wh_per_ghz: 1.0,
            uav_energy_budget_j: 360e3,
            max_unit_price_per_ghz: 40.0,
            weight: [0.0, 1.0],
            capacitance: 1e-27,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    /// Gauss-Markov memory degree alpha.
    pub alpha: f64,
    /// Asymptotic mean speed range [m/s]; direction sampled uniformly.
    pub mean_speed: Range,
    /// Asymptotic standard deviation of velocity [m/s].
    pub sigma: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self { alpha: 0.9, mean_speed: [0.0, 1.0], sigma: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavSection {
    /// Fixed flight altitude H [m].
    pub altitude_m: f64,
    /// Maximum speed [m/s].
    pub v_max: f64,
    /// Minimum pairwise separation [m].
    pub d_safe: f64,
    /// Initial positions; must cover `uav_count`.
    pub initial: Vec<[f64; 2]>,
    /// Final positions; must cover `uav_count`.
    pub final_: Vec<[f64; 2]>,
}

impl Default for UavSection {
    fn default() -> Self {
        Self {
            altitude_m: 100.0,
            v_max: 30.0,
            d_safe: 10.0,
            initial: vec![[50.0, 900.0], [900.0, 900.0], [100.0, 100.0], [800.0, 1000.0]],
            final_: vec![[500.0, 0.0], [500.0, 500.0], [500.0, 500.0], [500.0, 500.0]],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbsSection {
    pub position: [f64; 2],
    pub height_m: f64,
}

impl Default for MbsSection {
    fn default() -> Self {
        Self { position: [500.0, 500.0], height_m: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Subchannel bandwidth toward the MBS [MHz].
    pub bandwidth_mbs_mhz: f64,
    /// Subchannel bandwidth toward a UAV [MHz].
    pub bandwidth_uav_mhz: f64,
    /// Noise power [dBm].
    pub noise_dbm: f64,
    /// Carrier frequency [GHz].
    pub carrier_ghz: f64,
    /// Reference distances [m] for terrestrial / aerial links.
    pub d0_terrestrial_m: f64,
    pub d0_aerial_m: f64,
    /// Path-loss exponents.
    pub beta_t_los: f64,
    pub beta_t_nlos: f64,
    pub beta_a: f64,
    /// Extra attenuation of the aerial NLoS branch (gain multiplier < 1).
    pub kappa: f64,
    /// Terrestrial LoS-probability fit parameters [m].
    pub d1_m: f64,
    pub d2_m: f64,
    /// Aerial LoS-probability sigmoid parameters.
    pub p1: f64,
    pub p2: f64,
    /// Nakagami shape parameters (terrestrial/aerial x LoS/NLoS).
    pub m_t_los: f64,
    pub m_t_nlos: f64,
    pub m_a_los: f64,
    pub m_a_nlos: f64,
    /// Shadowing standard deviations [dB] (terrestrial only).
    pub shadowing_los_db: f64,
    pub shadowing_nlos_db: f64,
    /// Mean small-scale fading power (unit-mean by default).
    pub mean_fading_power: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            bandwidth_mbs_mhz: 20.0,
            bandwidth_uav_mhz: 10.0,
            noise_dbm: -98.0,
            carrier_ghz: 2.0,
            d0_terrestrial_m: 1.0,
            d0_aerial_m: 1.0,
            beta_t_los: 2.42,
            beta_t_nlos: 4.28,
            beta_a: 2.0,
            kappa: 0.2,
            d1_m: 18.0,
            d2_m: 36.0,
            p1: 10.0,
            p2: 0.6,
            m_t_los: 4.0,
            m_t_nlos: 2.0,
            m_a_los: 3.0,
            m_a_nlos: 1.0,
            shadowing_los_db: 4.0,
            shadowing_nlos_db: 6.0,
            mean_fading_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropulsionSection {
    /// Blade profile power coefficient [W].
    pub eta1: f64,
    /// Induced power coefficient [W·s/m].
    pub eta2: f64,
    /// Fourth power of the mean rotor induced velocity in hover [m^4/s^4].
    pub eta3: f64,
    /// Parasite power coefficient [W·s^3/m^3].
    pub eta4: f64,
    /// Rotor blade tip speed [m/s].
    pub v_tip: f64,
}

impl Default for PropulsionSection {
    fn default() -> Self {
        // Reference rotary-wing parameters; hover power ~168.5 W.
        Self { eta1: 79.86, eta2: 21.99, eta3: 263.7, eta4: 0.00925, v_tip: 120.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    /// Per-MD per-slot Bernoulli arrival probability.
    pub arrival_prob: f64,
    /// Task size range [Mb].
    pub size_mb: Range,
    /// Computation intensity range [cycles/bit].
    pub intensity: Range,
    /// Deadline range [s].
    pub deadline_s: Range,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            arrival_prob: 0.3,
            size_mb: [1.0, 5.0],
            intensity: [500.0, 1500.0],
            deadline_s: [0.1, 5.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BargainingSection {
    /// Alternating-offer horizon (number of bargaining periods).
    pub horizon: u32,
    /// Iteration cap of the negotiation loop.
    pub max_rounds: u32,
    /// Relative change of (f, p) below which the loop is converged.
    pub convergence_tol: f64,
}

impl Default for BargainingSection {
    fn default() -> Self {
        Self { horizon: 10, max_rounds: 100, convergence_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    /// Objective-change threshold terminating the surrogate iteration.
    pub epsilon: f64,
    /// Surrogate iteration cap.
    pub max_iters: u32,
    /// Stationarity tolerance of the inner convex solver.
    pub kkt_tol: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iters: 50, kkt_tol: 1e-6 }
    }
}

/// Which energy constraint normalizes the upload-energy cost inside the
/// MD QoE's edge branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QoeEnergyNormalizer {
    /// Normalize by the server's energy constraint.
    Server,
    /// Normalize by the MD's own energy constraint.
    Md,
}

/// How one slot of UAV flight energy is attributed to concurrently
/// served tasks when recording realized utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropulsionSharing {
    /// Split the slot's flight energy evenly across concurrent tasks.
    Shared,
    /// Charge the full slot's flight energy to every task.
    PerTask,
}

/// How the homogeneous mean LoS probability entering the epoch
/// subproblem is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanLosMode {
    /// LoS probability at the epoch-start elevation angle, per link.
    EpochStart,
    /// Fixed value 0.5 for every link.
    FixedAverage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionsSection {
    pub qoe_energy_normalizer: QoeEnergyNormalizer,
    pub propulsion_sharing: PropulsionSharing,
    pub mean_los_mode: MeanLosMode,
    /// Price-adjustment baseline: multiplicative step.
    pub pas_rho: f64,
    /// Price-adjustment baseline: utilization threshold.
    pub pas_threshold: f64,
    /// Game-theoretic baseline: best-response round cap.
    pub gcos_max_rounds: u32,
}

impl Default for OptionsSection {
    fn default() -> Self {
        Self {
            qoe_energy_normalizer: QoeEnergyNormalizer::Server,
            propulsion_sharing: PropulsionSharing::Shared,
            mean_los_mode: MeanLosMode::EpochStart,
            pas_rho: 0.1,
            pas_threshold: 0.5,
            gcos_max_rounds: 20,
        }
    }
}

/// Full scenario description. `Default` reproduces the reference scenario.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// RNG seed; a fixed seed makes the whole run bit-reproducible.
    pub seed: u64,
    /// Strategy executed by the orchestrator.
    pub strategy: StrategyKind,
    pub time: TimeSection,
    pub area: AreaSection,
    pub population: PopulationSection,
    pub mds: MdSection,
    pub servers: ServerSection,
    pub mobility: MobilitySection,
    pub uavs: UavSection,
    pub mbs: MbsSection,
    pub channel: ChannelSection,
    pub propulsion: PropulsionSection,
    pub tasks: TaskSection,
    pub bargaining: BargainingSection,
    pub trajectory: TrajectorySection,
    pub options: OptionsSection,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.time.slot_duration_s <= 0.0 {
            return invalid("slot_duration_s must be positive".into());
        }
        if self.time.slots_per_epoch == 0 || self.time.total_slots == 0 {
            return invalid("slot counts must be positive".into());
        }
        if self.time.total_slots % self.time.slots_per_epoch != 0 {
            return invalid(format!(
                "total_slots ({}) must be divisible by slots_per_epoch ({})",
                self.time.total_slots, self.time.slots_per_epoch
            ));
        }
        if self.area.x_max_m <= 0.0 || self.area.y_max_m <= 0.0 {
            return invalid("area bounds must be positive".into());
        }
        for (name, r) in [
            ("mds.cpu_ghz", self.mds.cpu_ghz),
            ("mds.tx_power_dbm", self.mds.tx_power_dbm),
            ("mds.weight", self.mds.weight),
            ("servers.mbs_cpu_ghz", self.servers.mbs_cpu_ghz),
            ("servers.uav_cpu_ghz", self.servers.uav_cpu_ghz),
            ("servers.weight", self.servers.weight),
            ("mobility.mean_speed", self.mobility.mean_speed),
            ("tasks.size_mb", self.tasks.size_mb),
            ("tasks.intensity", self.tasks.intensity),
            ("tasks.deadline_s", self.tasks.deadline_s),
        ] {
            if !range_valid(r) {
                return invalid(format!("range {name} is empty or not finite"));
            }
        }
        if self.servers.n_core[0] == 0 || self.servers.n_core[0] > self.servers.n_core[1] {
            return invalid("servers.n_core range is empty or zero".into());
        }
        if !(0.0..=1.0).contains(&self.mobility.alpha) {
            return invalid("mobility.alpha must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.tasks.arrival_prob) {
            return invalid("tasks.arrival_prob must lie in [0, 1]".into());
        }
        if self.uavs.v_max <= 0.0 || self.uavs.d_safe <= 0.0 || self.uavs.altitude_m <= 0.0 {
            return invalid("uavs.v_max, d_safe and altitude_m must be positive".into());
        }
        let n = self.population.uav_count as usize;
        if self.uavs.initial.len() < n || self.uavs.final_.len() < n {
            return invalid(format!(
                "uav_count = {n} exceeds the number of configured initial/final positions"
            ));
        }
        if self.bargaining.horizon == 0 {
            return invalid("bargaining.horizon must be at least 1".into());
        }
        if self.mds.payment_budget <= 0.0 || self.servers.max_unit_price_per_ghz <= 0.0 {
            return invalid("budgets and price caps must be positive".into());
        }
        Ok(())
    }

    /// Noise power [W].
    pub fn noise_w(&self) -> f64 {
        dbm_to_w(self.channel.noise_dbm)
    }

    /// Maximum unit price [currency per cycle/s].
    pub fn max_unit_price(&self) -> f64 {
        self.servers.max_unit_price_per_ghz / 1e9
    }

    /// Epoch duration [s].
    pub fn epoch_duration_s(&self) -> f64 {
        self.time.slot_duration_s * self.time.slots_per_epoch as f64
    }

    pub fn epoch_count(&self) -> u32 {
        self.time.total_slots / self.time.slots_per_epoch
    }
}

/// dBm to watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Watt-hours to joules.
pub fn wh_to_j(wh: f64) -> f64 {
    wh * 3600.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_scenario() {
        let config = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(config.population.md_count, 30);
        assert_eq!(config.population.uav_count, 4);
        assert_eq!(config.time.total_slots, 600);
        assert_eq!(config.time.slots_per_epoch, 10);
        assert!((config.time.slot_duration_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn partial_overrides_keep_other_defaults() {
        let config = ScenarioConfig::from_toml(
            "seed = 7\n[population]\nmd_count = 10\nuav_count = 2\ninclude_mbs = true\n",
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.population.md_count, 10);
        assert_eq!(config.population.uav_count, 2);
        assert_eq!(config.channel.bandwidth_mbs_mhz, 20.0);
    }

    #[test]
    fn bad_slot_grid_rejected() {
        let err = ScenarioConfig::from_toml("[time]\ntotal_slots = 601\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn inverted_range_rejected() {
        let err = ScenarioConfig::from_toml("[tasks]\nsize_mb = [5.0, 1.0]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml("nonsense = 1\n").is_err());
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_w(-98.0) - 1.5848931924611134e-13).abs() < 1e-25);
        assert!((dbm_to_w(10.0) - 0.01).abs() < 1e-12);
        assert_eq!(wh_to_j(1.0), 3600.0);
    }
}
