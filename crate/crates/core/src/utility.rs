//! Objective primitives: device QoE, server revenue, and per-slot system
//! utility. All downstream optimization (negotiation, matching,
//! trajectory control) maximizes combinations of these.

use crate::config::QoeEnergyNormalizer;

/// Normalizers and weights for one (device, server) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityContext {
    /// Deadline entering the satisfaction term [s].
    pub deadline_s: f64,
    /// Device energy normalizer [J].
    pub md_energy_budget: f64,
    /// Server energy normalizer [J].
    pub server_energy_budget: f64,
    /// Device payment budget [currency].
    pub payment_budget: f64,
    /// Server total frequency [cycles/s].
    pub f_server_max: f64,
    /// Server price cap [currency per cycle/s].
    pub p_server_max: f64,
    pub md_weight: f64,
    pub server_weight: f64,
    /// Which energy constraint normalizes upload energy in the edge branch.
    pub qoe_normalizer: QoeEnergyNormalizer,
}

/// Execution mode of a task for QoE evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Local {
        /// Local computation energy [J].
        compute_energy: f64,
    },
    Edge {
        /// Upload energy [J].
        upload_energy: f64,
        /// Allocated frequency [cycles/s].
        frequency: f64,
        /// Unit price [currency per cycle/s].
        unit_price: f64,
    },
}

/// Normalized log satisfaction of finishing `delay` before `deadline`.
/// Zero at the deadline, one at zero delay.
pub fn satisfaction(delay: f64, deadline: f64) -> f64 {
    (1.0 + deadline - delay).ln() / (1.0 + deadline).ln()
}

/// Device QoE: satisfaction minus normalized costs. Any delay beyond the
/// deadline is inadmissible and maps to the negative-infinity sentinel.
pub fn md_qoe(ctx: &UtilityContext, delay: f64, mode: &Mode) -> f64 {
    if delay > ctx.deadline_s || !delay.is_finite() {
        return f64::NEG_INFINITY;
    }
    let gain = ctx.md_weight * satisfaction(delay, ctx.deadline_s);
    let cost = match *mode {
        Mode::Local { compute_energy } => compute_energy / ctx.md_energy_budget,
        Mode::Edge { upload_energy, frequency, unit_price } => {
            let normalizer = match ctx.qoe_normalizer {
                QoeEnergyNormalizer::Server => ctx.server_energy_budget,
                QoeEnergyNormalizer::Md => ctx.md_energy_budget,
            };
            upload_energy / normalizer
                + frequency * unit_price / ctx.payment_budget
        }
    };
    gain - (1.0 - ctx.md_weight) * cost
}

/// Server revenue: normalized reward minus normalized energy cost.
pub fn server_revenue(ctx: &UtilityContext, frequency: f64, unit_price: f64, energy: f64) -> f64 {
    ctx.server_weight * frequency * unit_price / (ctx.f_server_max * ctx.p_server_max)
        - (1.0 - ctx.server_weight) * energy / ctx.server_energy_budget
}

/// One task's realized utility contribution; local tasks have no server
/// term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityPair {
    pub md: f64,
    pub server: Option<f64>,
}

/// System utility of one slot: the sum of both parties' utilities over
/// the slot's decided tasks.
pub fn system_utility_slot(pairs: &[UtilityPair]) -> f64 {
    pairs.iter().map(|p| p.md + p.server.unwrap_or(0.0)).sum()
}
