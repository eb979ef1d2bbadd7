//! Per-slot task/server assignment: preference lists built from simulated
//! negotiations, a quota-constrained deferred-acceptance loop, and the
//! final slot decision for matched and unmatched tasks.

use std::collections::{BTreeMap, BTreeSet};

use crate::bargaining::{negotiate, BargainConfig, PairContext, TradeFailure};
use crate::config::QoeEnergyNormalizer;
use crate::cost::{self, UavPowerParams};
use crate::model::{ServerId, TaskId, TradeOutcome, WorldState};
use crate::utility::{self, Mode, UtilityContext};

/// Shared read-only inputs for one slot's matching round.
#[derive(Clone, Copy)]
pub struct MatchingInputs<'a> {
    pub world: &'a WorldState,
    pub slot: u32,
    pub power: &'a UavPowerParams,
    pub qoe_normalizer: QoeEnergyNormalizer,
    pub bargain: BargainConfig,
}

impl<'a> MatchingInputs<'a> {
    pub fn pair_context(&self, task: TaskId, server: ServerId, rate: f64) -> PairContext<'a> {
        let t = &self.world.tasks[task];
        PairContext {
            task: t,
            rate,
            md: &self.world.mds[t.owner],
            server: &self.world.servers[server],
            deadline_s: t.remaining_deadline(self.slot, self.world.grid.slot_duration_s),
            power: self.power,
            slot_duration_s: self.world.grid.slot_duration_s,
            qoe_normalizer: self.qoe_normalizer,
        }
    }
}

/// One candidate server for a task, with the trade the pair would sign.
#[derive(Debug, Clone, Copy)]
pub struct PreferenceEntry {
    pub server: ServerId,
    pub trade: TradeOutcome,
}

/// Per-task candidate lists (descending device utility) plus the trade
/// cache for server-side preference lookups.
#[derive(Debug, Default)]
pub struct PreferenceTable {
    /// Keyed by task id; lists sorted by device utility descending,
    /// server id ascending on ties. Only mutually profitable trades.
    pub tasks: BTreeMap<TaskId, Vec<PreferenceEntry>>,
    pub trades: BTreeMap<(TaskId, ServerId), TradeOutcome>,
}

impl PreferenceTable {
    pub fn trade(&self, task: TaskId, server: ServerId) -> Option<&TradeOutcome> {
        self.trades.get(&(task, server))
    }

    pub fn server_value(&self, server: ServerId, task: TaskId) -> f64 {
        self.trades.get(&(task, server)).map_or(f64::NEG_INFINITY, |t| t.server_utility)
    }
}

/// Attempt a negotiation for every (pending task, server) pair and rank
/// the successes. `rate_of` supplies the slot's cached uplink rate;
/// `negotiator` is the trade mechanism (strategies substitute their own).
pub fn build_preferences(
    inputs: &MatchingInputs,
    pending: &[TaskId],
    rate_of: &mut dyn FnMut(TaskId, ServerId) -> f64,
    negotiator: &dyn Fn(&PairContext, f64) -> Result<TradeOutcome, TradeFailure>,
) -> PreferenceTable {
    let mut table = PreferenceTable::default();
    for &task in pending {
        let mut entries = Vec::new();
        for server in &inputs.world.servers {
            if server.idle_cores() == 0 {
                continue;
            }
            let f_available = server.available_frequency();
            if f_available <= 0.0 {
                continue;
            }
            let rate = rate_of(task, server.id);
            let ctx = inputs.pair_context(task, server.id, rate);
            if let Ok(trade) = negotiator(&ctx, f_available) {
                if trade.md_utility > 0.0 {
                    table.trades.insert((task, server.id), trade);
                    entries.push(PreferenceEntry { server: server.id, trade });
                }
            }
        }
        entries.sort_by(|a, b| {
            b.trade
                .md_utility
                .partial_cmp(&a.trade.md_utility)
                .unwrap()
                .then(a.server.cmp(&b.server))
        });
        table.tasks.insert(task, entries);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectionReason {
    /// All cores held by preferred tasks.
    CoreQuota,
    /// Not enough uncommitted frequency at the task's turn.
    FrequencyQuota,
    /// Displaced by a preferred task during stabilization.
    Displaced,
}

#[derive(Debug, Clone, Copy)]
pub struct Rejection {
    pub task: TaskId,
    pub server: ServerId,
    pub reason: RejectionReason,
}

/// Final assignment for one slot.
#[derive(Debug, Default)]
pub struct MatchingResult {
    pub assignments: BTreeMap<TaskId, ServerId>,
    pub per_server: BTreeMap<ServerId, Vec<TaskId>>,
    pub rejections: Vec<Rejection>,
}

impl MatchingResult {
    fn assign(&mut self, task: TaskId, server: ServerId) {
        self.assignments.insert(task, server);
        self.per_server.entry(server).or_default().push(task);
    }

    fn unassign(&mut self, task: TaskId) {
        if let Some(server) = self.assignments.remove(&task) {
            if let Some(list) = self.per_server.get_mut(&server) {
                list.retain(|&t| t != task);
            }
        }
    }
}

/// Available quota of one server for the current slot.
#[derive(Debug, Clone, Copy)]
struct Quota {
    cores: u32,
    frequency: f64,
}

/// Greedy retention in descending server-utility order: keep a task if a
/// core is free and its frequency still fits, otherwise reject it and
/// keep scanning (a smaller later task may still fit).
fn retain_preferred(
    server: ServerId,
    pool: &mut Vec<TaskId>,
    quota: Quota,
    prefs: &PreferenceTable,
) -> Vec<(TaskId, RejectionReason)> {
    pool.sort_by(|&a, &b| {
        prefs
            .server_value(server, b)
            .partial_cmp(&prefs.server_value(server, a))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    let mut used = 0.0;
    let tol = quota.frequency * 1e-12;
    for &task in pool.iter() {
        let f = prefs.trade(task, server).map_or(f64::INFINITY, |t| t.frequency);
        if kept.len() as u32 >= quota.cores {
            rejected.push((task, RejectionReason::CoreQuota));
        } else if used + f > quota.frequency + tol {
            rejected.push((task, RejectionReason::FrequencyQuota));
        } else {
            used += f;
            kept.push(task);
        }
    }
    *pool = kept;
    rejected
}

/// Deferred acceptance under the joint (idle cores, available frequency)
/// quota, followed by a bounded stabilization sweep that inserts or swaps
/// in any task forming a feasible blocking pair left over by the
/// propose/reject rounds.
pub fn run_matching(inputs: &MatchingInputs, prefs: &PreferenceTable) -> MatchingResult {
    let mut result = MatchingResult::default();
    let quotas: BTreeMap<ServerId, Quota> = inputs
        .world
        .servers
        .iter()
        .map(|s| (s.id, Quota { cores: s.idle_cores(), frequency: s.available_frequency() }))
        .collect();

    // Propose/reject rounds. A task's cursor advances only on rejection,
    // so the loop ends after at most (#tasks)x(#servers) rejections.
    let mut cursor: BTreeMap<TaskId, usize> = prefs.tasks.keys().map(|&t| (t, 0)).collect();
    let mut held: BTreeMap<ServerId, Vec<TaskId>> = BTreeMap::new();
    let mut free: BTreeSet<TaskId> = prefs
        .tasks
        .iter()
        .filter(|(_, entries)| !entries.is_empty())
        .map(|(&t, _)| t)
        .collect();
    loop {
        let mut proposals: BTreeMap<ServerId, Vec<TaskId>> = BTreeMap::new();
        for &task in &free {
            let entries = &prefs.tasks[&task];
            if let Some(entry) = entries.get(cursor[&task]) {
                proposals.entry(entry.server).or_default().push(task);
            }
        }
        if proposals.is_empty() {
            break;
        }
        for (server, newcomers) in proposals {
            let pool = held.entry(server).or_default();
            for task in newcomers {
                pool.push(task);
                free.remove(&task);
            }
            for (task, reason) in retain_preferred(server, pool, quotas[&server], prefs) {
                *cursor.get_mut(&task).unwrap() += 1;
                free.insert(task);
                result.rejections.push(Rejection { task, server, reason });
            }
        }
    }
    for (server, tasks) in held {
        for task in tasks {
            result.assign(task, server);
        }
    }

    stabilize(inputs, prefs, &quotas, &mut result);
    result
}

/// Fix residual blocking pairs: a task that strictly prefers a server
/// which either has spare joint quota or holds a strictly less preferred
/// task whose replacement fits. Bounded sweep; displaced tasks re-enter
/// the scan.
fn stabilize(
    inputs: &MatchingInputs,
    prefs: &PreferenceTable,
    quotas: &BTreeMap<ServerId, Quota>,
    result: &mut MatchingResult,
) {
    let n_tasks = prefs.tasks.len();
    let n_servers = inputs.world.servers.len();
    let mut budget = (4 * n_tasks * n_servers).max(16);
    'sweep: loop {
        for (&task, entries) in &prefs.tasks {
            let current = result
                .assignments
                .get(&task)
                .and_then(|&s| prefs.trade(task, s))
                .map_or(f64::NEG_INFINITY, |t| t.md_utility);
            for entry in entries {
                if entry.trade.md_utility <= current {
                    break;
                }
                let server = entry.server;
                let quota = quotas[&server];
                let members = result.per_server.entry(server).or_default().clone();
                let used: f64 = members
                    .iter()
                    .map(|&t| prefs.trade(t, server).map_or(0.0, |tr| tr.frequency))
                    .sum();
                let tol = quota.frequency * 1e-12;
                let fits_freq = used + entry.trade.frequency <= quota.frequency + tol;
                if (members.len() as u32) < quota.cores && fits_freq {
                    result.unassign(task);
                    result.assign(task, server);
                    budget -= 1;
                    if budget == 0 {
                        return;
                    }
                    continue 'sweep;
                }
                let my_value = prefs.server_value(server, task);
                let victim = members
                    .iter()
                    .filter(|&&other| {
                        let other_value = prefs.server_value(server, other);
                        other_value < my_value
                            && used - prefs.trade(other, server).map_or(0.0, |t| t.frequency)
                                + entry.trade.frequency
                                <= quota.frequency + tol
                    })
                    .min_by(|&&a, &&b| {
                        prefs
                            .server_value(server, a)
                            .partial_cmp(&prefs.server_value(server, b))
                            .unwrap()
                            .then(a.cmp(&b))
                    })
                    .copied();
                if let Some(victim) = victim {
                    result.unassign(victim);
                    result.rejections.push(Rejection {
                        task: victim,
                        server,
                        reason: RejectionReason::Displaced,
                    });
                    result.unassign(task);
                    result.assign(task, server);
                    budget -= 1;
                    if budget == 0 {
                        return;
                    }
                    continue 'sweep;
                }
            }
        }
        return;
    }
}

/// What happens to one pending task this slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskDecision {
    Offload { server: ServerId, trade: TradeOutcome },
    Local { delay: f64, energy: f64, utility: f64 },
    StayPending,
    Fail,
}

/// Device-side utility context for local execution (server fields unused).
fn local_context(inputs: &MatchingInputs, task: TaskId, deadline: f64) -> UtilityContext {
    let md = &inputs.world.mds[inputs.world.tasks[task].owner];
    UtilityContext {
        deadline_s: deadline,
        md_energy_budget: md.energy_budget,
        server_energy_budget: 1.0,
        payment_budget: md.payment_budget,
        f_server_max: 1.0,
        p_server_max: 1.0,
        md_weight: md.weight,
        server_weight: 0.5,
        qoe_normalizer: inputs.qoe_normalizer,
    }
}

/// Turn the matching into per-task decisions. Matched tasks offload with
/// their cached trades; unmatched tasks run locally when the device core
/// is free and local QoE is positive, keep waiting while any candidate
/// could still meet the deadline, and fail otherwise.
pub fn finalize_slot_decision(
    inputs: &MatchingInputs,
    pending: &[TaskId],
    matching: &MatchingResult,
    prefs: &PreferenceTable,
    rate_of: &mut dyn FnMut(TaskId, ServerId) -> f64,
) -> BTreeMap<TaskId, TaskDecision> {
    let mut decisions = BTreeMap::new();
    // Device cores claimed by local starts earlier in this same slot.
    let mut claimed: BTreeSet<usize> = BTreeSet::new();
    for &task_id in pending {
        if let Some(&server) = matching.assignments.get(&task_id) {
            let trade = prefs.trade(task_id, server).copied().expect("matched trade");
            decisions.insert(task_id, TaskDecision::Offload { server, trade });
            continue;
        }
        let task = &inputs.world.tasks[task_id];
        let md = &inputs.world.mds[task.owner];
        let remaining = task.remaining_deadline(inputs.slot, inputs.world.grid.slot_duration_s);
        if remaining <= 0.0 {
            decisions.insert(task_id, TaskDecision::Fail);
            continue;
        }
        let local_delay = task.total_cycles() / md.f_max;
        let mut feasible_anywhere = local_delay <= remaining;
        if !feasible_anywhere {
            for server in &inputs.world.servers {
                let rate = rate_of(task_id, server.id);
                if rate <= 0.0 {
                    continue;
                }
                let best = task.size_bits / rate + task.total_cycles() / server.f_total_max;
                if best <= remaining {
                    feasible_anywhere = true;
                    break;
                }
            }
        }
        if !feasible_anywhere {
            decisions.insert(task_id, TaskDecision::Fail);
            continue;
        }
        if md.core_free(inputs.slot) && !claimed.contains(&task.owner) && local_delay <= remaining
        {
            let energy = cost::local_energy(task, md.f_max, md.capacitance);
            let ctx = local_context(inputs, task_id, remaining);
            let u = utility::md_qoe(&ctx, local_delay, &Mode::Local { compute_energy: energy });
            if u > 0.0 {
                claimed.insert(task.owner);
                decisions.insert(
                    task_id,
                    TaskDecision::Local { delay: local_delay, energy, utility: u },
                );
                continue;
            }
        }
        decisions.insert(task_id, TaskDecision::StayPending);
    }
    decisions
}

/// Standard negotiator: the alternating-offers mechanism.
pub fn default_negotiator(
    cfg: BargainConfig,
) -> impl Fn(&PairContext, f64) -> Result<TradeOutcome, TradeFailure> {
    move |ctx, f_available| negotiate(ctx, f_available, &cfg)
}
