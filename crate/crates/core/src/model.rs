//! Domain types: the two-timescale clock, devices, servers, tasks, trade
//! outcomes, and scenario construction.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{wh_to_j, ConfigError, ScenarioConfig};

pub type MdId = usize;
pub type ServerId = usize;
pub type TaskId = usize;

/// Two-timescale clock: `total_slots` slots of `slot_duration_s` seconds,
/// grouped into epochs of `slots_per_epoch` slots.
///
/// Slots and epochs are 0-based internally; logs and CSV output use the
/// 1-based convention (slot 0 here is slot 1 there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub slot_duration_s: f64,
    pub slots_per_epoch: u32,
    pub total_slots: u32,
}

impl TimeGrid {
    pub fn new(slot_duration_s: f64, slots_per_epoch: u32, total_slots: u32) -> Self {
        assert!(slot_duration_s > 0.0 && slots_per_epoch > 0);
        assert_eq!(total_slots % slots_per_epoch, 0);
        Self { slot_duration_s, slots_per_epoch, total_slots }
    }

    /// Epoch containing a 0-based slot.
    pub fn epoch_of(&self, slot: u32) -> Result<u32, ModelError> {
        if slot >= self.total_slots {
            return Err(ModelError::SlotOutOfRange { slot, total: self.total_slots });
        }
        Ok(slot / self.slots_per_epoch)
    }

    /// Epoch containing a 1-based slot, both indices 1-based.
    pub fn epoch_of_1based(&self, slot: u32) -> Result<u32, ModelError> {
        if slot == 0 || slot > self.total_slots {
            return Err(ModelError::SlotOutOfRange { slot, total: self.total_slots });
        }
        Ok((slot + self.slots_per_epoch - 1) / self.slots_per_epoch)
    }

    pub fn epoch_count(&self) -> u32 {
        self.total_slots / self.slots_per_epoch
    }

    pub fn is_epoch_start(&self, slot: u32) -> bool {
        slot % self.slots_per_epoch == 0
    }

    /// Epoch duration [s].
    pub fn epoch_duration_s(&self) -> f64 {
        self.slot_duration_s * self.slots_per_epoch as f64
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("slot {slot} out of range (total {total})")]
    SlotOutOfRange { slot: u32, total: u32 },
    #[error("illegal task status transition: {0}")]
    IllegalTransition(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileDevice {
    pub id: MdId,
    /// Horizontal position [m].
    pub position: Vector2<f64>,
    /// Current velocity [m/s].
    pub velocity: Vector2<f64>,
    /// Asymptotic mean velocity of the mobility process [m/s].
    pub mean_velocity: Vector2<f64>,
    /// CPU frequency [cycles/s]; single core.
    pub f_max: f64,
    /// Transmit power [W].
    pub tx_power: f64,
    /// Energy normalizer [J].
    pub energy_budget: f64,
    /// Payment budget per task [currency].
    pub payment_budget: f64,
    /// Utility weight in [0, 1].
    pub weight: f64,
    /// Effective switched capacitance.
    pub capacitance: f64,
    /// First slot at which the single CPU core is free again.
    pub busy_until: u32,
}

impl MobileDevice {
    pub fn core_free(&self, slot: u32) -> bool {
        slot >= self.busy_until
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerKind {
    Terrestrial,
    Aerial,
}

/// A frequency reservation on a server core. Released at `release_slot`
/// (the core is busy for slots `< release_slot`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commitment {
    pub task: TaskId,
    pub frequency: f64,
    pub release_slot: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MecServer {
    pub id: ServerId,
    pub kind: ServerKind,
    /// Horizontal position [m]; aerial servers move per epoch.
    pub position: Vector2<f64>,
    /// Height above ground [m].
    pub height: f64,
    pub n_core: u32,
    /// Per-core frequency [cycles/s] (homogeneous cores).
    pub f_core_max: f64,
    /// Total frequency across cores [cycles/s].
    pub f_total_max: f64,
    /// Energy normalizer [J].
    pub energy_budget: f64,
    /// Maximum unit price [currency per cycle/s].
    pub max_unit_price: f64,
    pub weight: f64,
    pub capacitance: f64,
    /// Initial/final anchors (aerial only; terrestrial servers are fixed).
    pub initial_pos: Vector2<f64>,
    pub final_pos: Vector2<f64>,
    /// Active frequency reservations.
    pub commitments: Vec<Commitment>,
    /// Speed during the current epoch [m/s] (aerial).
    pub current_speed: f64,
}

impl MecServer {
    pub fn busy_cores(&self) -> u32 {
        self.commitments.len() as u32
    }

    pub fn idle_cores(&self) -> u32 {
        self.n_core - self.busy_cores()
    }

    pub fn committed_frequency(&self) -> f64 {
        self.commitments.iter().map(|c| c.frequency).sum()
    }

    pub fn available_frequency(&self) -> f64 {
        (self.f_total_max - self.committed_frequency()).max(0.0)
    }

    /// Drop reservations whose release slot has been reached.
    pub fn release_due(&mut self, slot: u32) {
        self.commitments.retain(|c| c.release_slot > slot);
    }

    pub fn commit(&mut self, task: TaskId, frequency: f64, release_slot: u32) {
        self.commitments.push(Commitment { task, frequency, release_slot });
    }

    /// 3-D distance to a ground point [m].
    pub fn distance_to(&self, md_position: Vector2<f64>) -> f64 {
        let dxy = (self.position - md_position).norm();
        (dxy * dxy + self.height * self.height).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskStatus {
    Pending,
    /// Executing on the owner's CPU; done at `finish_slot`.
    Local { finish_slot: u32 },
    /// Executing on a server; done at `finish_slot`.
    Offloaded { server: ServerId, finish_slot: u32 },
    Completed { slot: u32 },
    Failed,
}

impl TaskStatus {
    fn rank(&self) -> u8 {
        match self {
            TaskStatus::Pending => 0,
            TaskStatus::Local { .. } | TaskStatus::Offloaded { .. } => 1,
            TaskStatus::Completed { .. } | TaskStatus::Failed => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub owner: MdId,
    /// Slot in which the task was generated (0-based).
    pub gen_slot: u32,
    /// Input size [bits].
    pub size_bits: f64,
    /// Computation intensity [cycles/bit].
    pub intensity: f64,
    /// Deadline [s], counted from generation.
    pub deadline_s: f64,
    pub status: TaskStatus,
}

impl Task {
    /// Total CPU demand [cycles]. The intensity is defined per bit; every
    /// cycle-count formula uses this product.
    pub fn total_cycles(&self) -> f64 {
        self.size_bits * self.intensity
    }

    /// Deadline still available at `slot`, shrunk by the time already
    /// spent waiting since generation [s].
    pub fn remaining_deadline(&self, slot: u32, slot_duration_s: f64) -> f64 {
        self.deadline_s - (slot - self.gen_slot) as f64 * slot_duration_s
    }

    /// Advance the lifecycle; transitions never move backwards.
    pub fn set_status(&mut self, next: TaskStatus) -> Result<(), ModelError> {
        if next.rank() < self.status.rank()
            || (self.status.rank() == 2 && next != self.status)
        {
            return Err(ModelError::IllegalTransition(format!(
                "{:?} -> {:?}",
                self.status, next
            )));
        }
        self.status = next;
        Ok(())
    }
}

/// Outcome of a successful resource negotiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeOutcome {
    /// Allocated frequency [cycles/s].
    pub frequency: f64,
    /// Unit price [currency per cycle/s].
    pub unit_price: f64,
    pub md_utility: f64,
    pub server_utility: f64,
    /// Negotiation rounds used.
    pub rounds: u32,
}

impl TradeOutcome {
    pub fn payment(&self) -> f64 {
        self.frequency * self.unit_price
    }
}

/// Complete mutable simulation state for one run.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub grid: TimeGrid,
    /// Area bounds [m].
    pub area: Vector2<f64>,
    pub mds: Vec<MobileDevice>,
    /// Terrestrial server first (when present), then aerial servers.
    pub servers: Vec<MecServer>,
    pub tasks: Vec<Task>,
}

impl WorldState {
    pub fn aerial_server_ids(&self) -> Vec<ServerId> {
        self.servers
            .iter()
            .filter(|s| s.kind == ServerKind::Aerial)
            .map(|s| s.id)
            .collect()
    }

    /// Ids of tasks still awaiting a processing decision.
    pub fn pending_task_ids(&self) -> Vec<TaskId> {
        self.tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Pending)
            .map(|t| t.id)
            .collect()
    }
}

fn sample_range(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Weights exactly at 0 or 1 make the closed-form negotiation expressions
/// singular; samples are pulled to the interior.
fn sample_weight(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    sample_range(rng, range).clamp(0.01, 0.99)
}

/// Build the initial world from a validated configuration.
///
/// All per-entity parameters are drawn from the configured ranges with a
/// ChaCha stream derived from the scenario seed, so equal seeds yield
/// identical worlds.
pub fn build_scenario(config: &ScenarioConfig) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0xB01D);

    let grid = TimeGrid::new(
        config.time.slot_duration_s,
        config.time.slots_per_epoch,
        config.time.total_slots,
    );
    let area = Vector2::new(config.area.x_max_m, config.area.y_max_m);

    let mut mds = Vec::with_capacity(config.population.md_count as usize);
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");
    for id in 0..config.population.md_count as usize {
        let position = Vector2::new(
            rng.gen_range(0.0..config.area.x_max_m),
            rng.gen_range(0.0..config.area.y_max_m),
        );
        let speed = sample_range(&mut rng, config.mobility.mean_speed);
        let heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let mean_velocity = Vector2::new(speed * heading.cos(), speed * heading.sin());
        // Initial velocity from the stationary marginal of the process.
        let velocity = mean_velocity
            + config.mobility.sigma
                * Vector2::new(unit_normal.sample(&mut rng), unit_normal.sample(&mut rng));
        let f_max_ghz = sample_range(&mut rng, config.mds.cpu_ghz);
        let tx_power_dbm = sample_range(&mut rng, config.mds.tx_power_dbm);
        let weight = sample_weight(&mut rng, config.mds.weight);
        mds.push(MobileDevice {
            id,
            position,
            velocity,
            mean_velocity,
            f_max: f_max_ghz * 1e9,
            tx_power: crate::config::dbm_to_w(tx_power_dbm),
            energy_budget: wh_to_j(config.mds.energy_budget_wh_per_ghz) * f_max_ghz,
            payment_budget: config.mds.payment_budget,
            weight,
            capacitance: config.mds.capacitance,
            busy_until: 0,
        });
    }

    let mut servers = Vec::new();
    if config.population.include_mbs {
        let n_core = rng.gen_range(config.servers.n_core[0]..=config.servers.n_core[1]);
        let f_total_ghz = sample_range(&mut rng, config.servers.mbs_cpu_ghz);
        let weight = sample_weight(&mut rng, config.servers.weight);
        let position = Vector2::new(config.mbs.position[0], config.mbs.position[1]);
        servers.push(MecServer {
            id: 0,
            kind: ServerKind::Terrestrial,
            position,
            height: config.mbs.height_m,
            n_core,
            f_core_max: f_total_ghz * 1e9 / n_core as f64,
            f_total_max: f_total_ghz * 1e9,
            energy_budget: wh_to_j(config.servers.mbs_energy_budget_wh_per_ghz) * f_total_ghz,
            max_unit_price: config.max_unit_price(),
            weight,
            capacitance: config.servers.capacitance,
            initial_pos: position,
            final_pos: position,
            commitments: Vec::new(),
            current_speed: 0.0,
        });
    }
    for u in 0..config.population.uav_count as usize {
        let n_core = rng.gen_range(config.servers.n_core[0]..=config.servers.n_core[1]);
        let f_total_ghz = sample_range(&mut rng, config.servers.uav_cpu_ghz);
        let weight = sample_weight(&mut rng, config.servers.weight);
        let initial = Vector2::new(config.uavs.initial[u][0], config.uavs.initial[u][1]);
        let final_pos = Vector2::new(config.uavs.final_[u][0], config.uavs.final_[u][1]);
        servers.push(MecServer {
            id: servers.len(),
            kind: ServerKind::Aerial,
            position: initial,
            height: config.uavs.altitude_m,
            n_core,
            f_core_max: f_total_ghz * 1e9 / n_core as f64,
            f_total_max: f_total_ghz * 1e9,
            energy_budget: config.servers.uav_energy_budget_j,
            max_unit_price: config.max_unit_price(),
            weight,
            capacitance: config.servers.capacitance,
            initial_pos: initial,
            final_pos,
            commitments: Vec::new(),
            current_speed: 0.0,
        });
    }

    Ok(WorldState { grid, area, mds, servers, tasks: Vec::new() })
}
