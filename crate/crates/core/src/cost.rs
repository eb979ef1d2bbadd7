//! Delay and energy primitives for local computing, edge offloading, and
//! rotary-wing UAV propulsion.

use crate::config::ScenarioConfig;
use crate::model::{MecServer, ServerKind, Task};

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavPowerParams {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub v_tip: f64,
}

impl UavPowerParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let p = &config.propulsion;
        Self { eta1: p.eta1, eta2: p.eta2, eta3: p.eta3, eta4: p.eta4, v_tip: p.v_tip }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CostError {
    #[error("frequency must be positive")]
    ZeroFrequency,
}

/// Computation delay of running a task on a single CPU at `f` [s].
pub fn local_delay(task: &Task, f: f64) -> Result<f64, CostError> {
    if f <= 0.0 {
        return Err(CostError::ZeroFrequency);
    }
    Ok(task.total_cycles() / f)
}

/// Energy of running a task locally [J].
pub fn local_energy(task: &Task, f: f64, capacitance: f64) -> f64 {
    capacitance * f * f * task.total_cycles()
}

/// Upload-plus-compute delay of edge execution [s]. A zero rate makes the
/// link unusable and yields an infinite delay sentinel.
pub fn edge_delay(task: &Task, rate: f64, f_alloc: f64) -> Result<f64, CostError> {
    if f_alloc <= 0.0 {
        return Err(CostError::ZeroFrequency);
    }
    if rate <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(task.size_bits / rate + task.total_cycles() / f_alloc)
}

/// MD-side energy of uploading the task input [J].
pub fn upload_energy(task: &Task, tx_power: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    tx_power * task.size_bits / rate
}

/// Instantaneous propulsion power of a rotary-wing UAV in level flight at
/// speed `v` [W]: blade profile, induced, and parasite components.
pub fn propulsion_power(v: f64, params: &UavPowerParams) -> f64 {
    debug_assert!(v >= 0.0);
    let v2 = v * v;
    let blade = params.eta1 * (1.0 + 3.0 * v2 / (params.v_tip * params.v_tip));
    let induced = params.eta2 * induced_speed_factor(v, params);
    let parasite = params.eta4 * v2 * v;
    blade + induced + parasite
}

/// The square-root factor of the induced-power component.
pub fn induced_speed_factor(v: f64, params: &UavPowerParams) -> f64 {
    let v2 = v * v;
    ((params.eta3 + v2 * v2 / 4.0).sqrt() - v2 / 2.0).sqrt()
}

/// Speed minimizing the propulsion power on `[0, v_max]`, by grid scan
/// plus local refinement.
pub fn min_power_speed(params: &UavPowerParams, v_max: f64) -> f64 {
    let coarse: u32 = 512;
    let mut best_i: u32 = 0;
    let mut best = f64::INFINITY;
    for i in 0..=coarse {
        let v = v_max * i as f64 / coarse as f64;
        let p = propulsion_power(v, params);
        if p < best {
            best = p;
            best_i = i;
        }
    }
    let lo = v_max * best_i.saturating_sub(1) as f64 / coarse as f64;
    let hi = v_max * (best_i + 1).min(coarse) as f64 / coarse as f64;
    let mut best_v = lo;
    let mut best = f64::INFINITY;
    for i in 0..=256 {
        let v = lo + (hi - lo) * i as f64 / 256.0;
        let p = propulsion_power(v, params);
        if p < best {
            best = p;
            best_v = v;
        }
    }
    best_v
}

/// Server-side energy of executing a task [J]. Terrestrial servers pay
/// computation energy only; aerial servers additionally pay one slot of
/// flight energy, split across `concurrency` tasks served in the slot.
pub fn server_task_energy(
    task: &Task,
    f_alloc: f64,
    server: &MecServer,
    power_params: &UavPowerParams,
    slot_duration_s: f64,
    concurrency: u32,
) -> f64 {
    let compute = server.capacitance * f_alloc * f_alloc * task.total_cycles();
    match server.kind {
        ServerKind::Terrestrial => compute,
        ServerKind::Aerial => {
            let flight = propulsion_power(server.current_speed, power_params) * slot_duration_s;
            compute + flight / concurrency.max(1) as f64
        }
    }
}
