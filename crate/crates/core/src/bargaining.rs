//! Per-pair resource trading: closed-form optimal allocation, break-even
//! price bounds, alternating-offer surplus division, and the negotiation
//! loop producing a trade outcome.
//!
//! The device buys computing frequency from a server at a unit price.
//! The admissible price window runs from the server's break-even price to
//! the device's break-even price; the window is split between the two
//! parties according to the subgame-perfect equilibrium of a finite
//! alternating-offers game whose discount factors come from the task's
//! upload and compute delays.

use crate::config::QoeEnergyNormalizer;
use crate::cost::{self, UavPowerParams};
use crate::model::{MecServer, MobileDevice, Task, TradeOutcome};
use crate::utility::{self, Mode, UtilityContext};

/// Everything fixed during one (task, server) negotiation.
#[derive(Debug, Clone, Copy)]
pub struct PairContext<'a> {
    pub task: &'a Task,
    /// Uplink rate for this pair in this slot [bit/s].
    pub rate: f64,
    pub md: &'a MobileDevice,
    pub server: &'a MecServer,
    /// Deadline still available to the task [s].
    pub deadline_s: f64,
    pub power: &'a UavPowerParams,
    pub slot_duration_s: f64,
    pub qoe_normalizer: QoeEnergyNormalizer,
}

impl<'a> PairContext<'a> {
    pub fn utility_context(&self) -> UtilityContext {
        UtilityContext {
            deadline_s: self.deadline_s,
            md_energy_budget: self.md.energy_budget,
            server_energy_budget: self.server.energy_budget,
            payment_budget: self.md.payment_budget,
            f_server_max: self.server.f_total_max,
            p_server_max: self.server.max_unit_price,
            md_weight: self.md.weight,
            server_weight: self.server.weight,
            qoe_normalizer: self.qoe_normalizer,
        }
    }

    /// Upload-plus-compute delay at allocation `f` [s].
    pub fn delay(&self, f: f64) -> f64 {
        self.task.size_bits / self.rate + self.task.total_cycles() / f
    }

    pub fn upload_energy(&self) -> f64 {
        cost::upload_energy(self.task, self.md.tx_power, self.rate)
    }

    /// Server energy for this task at allocation `f`, full flight share.
    pub fn server_energy(&self, f: f64) -> f64 {
        cost::server_task_energy(self.task, f, self.server, self.power, self.slot_duration_s, 1)
    }

    pub fn md_qoe(&self, f: f64, p: f64) -> f64 {
        let ctx = self.utility_context();
        let mode =
            Mode::Edge { upload_energy: self.upload_energy(), frequency: f, unit_price: p };
        utility::md_qoe(&ctx, self.delay(f), &mode)
    }

    pub fn server_revenue(&self, f: f64, p: f64) -> f64 {
        let ctx = self.utility_context();
        utility::server_revenue(&ctx, f, p, self.server_energy(f))
    }
}

/// Why a negotiation produced no trade. Failures are ordinary values;
/// the caller treats the pair as unusable for this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeFailure {
    /// Server has no capacity to offer.
    NoCapacity,
    /// No allocation can meet the deadline on this link.
    DeadlineInfeasible,
    /// The price window is empty: break-even prices cross.
    NoSurplus,
    /// The first-order optimum for the allocation does not exist.
    NoInteriorOptimum,
    /// The alternating loop ran out of rounds without mutual gain.
    NoConsensus,
}

/// Frequency the device requests at unit price `p`: the interior maximum
/// of its QoE in the allocated frequency.
pub fn optimal_allocation(ctx: &PairContext, p: f64) -> Result<f64, TradeFailure> {
    let task = ctx.task;
    let cycles = task.total_cycles();
    let tau = ctx.deadline_s;
    let w = ctx.md.weight;
    let budget = ctx.md.payment_budget;
    let log_term = (1.0 + tau).ln();
    let headroom = 1.0 + tau - task.size_bits / ctx.rate;
    let scaled_price = p * log_term * (1.0 - w);
    let radicand_outer = scaled_price / cycles;
    let radicand_inner = scaled_price * cycles + 4.0 * budget * w * headroom;
    if radicand_inner < 0.0 || radicand_outer <= 0.0 {
        return Err(TradeFailure::NoInteriorOptimum);
    }
    let theta = radicand_outer.sqrt() * radicand_inner.sqrt();
    let denom = theta - scaled_price;
    if denom <= 0.0 {
        return Err(TradeFailure::NoInteriorOptimum);
    }
    Ok(2.0 * w * budget / denom)
}

/// Admissible unit-price window `[lower, upper]` at allocation `f`:
/// the server breaks even at the lower edge, the device at the upper.
pub fn price_bounds(ctx: &PairContext, f: f64) -> Result<(f64, f64), TradeFailure> {
    debug_assert!(f > 0.0);
    let delay = ctx.delay(f);
    if delay > ctx.deadline_s {
        return Err(TradeFailure::DeadlineInfeasible);
    }
    let w_j = ctx.server.weight;
    let server = ctx.server;
    let lower = (1.0 - w_j) * ctx.server_energy(f) * server.max_unit_price * server.f_total_max
        / (w_j * server.energy_budget * f);

    let w_i = ctx.md.weight;
    let tau = ctx.deadline_s;
    let normalizer = match ctx.qoe_normalizer {
        QoeEnergyNormalizer::Server => server.energy_budget,
        QoeEnergyNormalizer::Md => ctx.md.energy_budget,
    };
    let upper = (w_i * (1.0 + tau - delay).ln() / ((1.0 - w_i) * (1.0 + tau).ln())
        - ctx.upload_energy() / normalizer)
        * ctx.md.payment_budget
        / f;
    if lower > upper {
        return Err(TradeFailure::NoSurplus);
    }
    Ok((lower, upper))
}

/// Patience of the two parties with negotiation delay, clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountFactors {
    pub md: f64,
    pub server: f64,
}

pub fn discount_factors(ctx: &PairContext, f: f64) -> DiscountFactors {
    let task = ctx.task;
    let tau = ctx.deadline_s;
    DiscountFactors {
        md: (1.0 - task.size_bits / (ctx.rate * tau)).clamp(0.0, 1.0),
        server: (1.0 - task.total_cycles() / (f * tau)).clamp(0.0, 1.0),
    }
}

/// Which party proposes in the final bargaining period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposer {
    Md,
    Server,
}

/// Equilibrium shares of the price surplus; shares sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub md_share: f64,
    pub server_share: f64,
}

/// Sum of the first `n` powers of `ratio` (exact at ratio one).
fn geometric_sum(ratio: f64, n: u32) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for _ in 0..n {
        sum += term;
        term *= ratio;
    }
    sum
}

/// Unique subgame-perfect split of the surplus for the `horizon`-period
/// alternating-offers game in which `proposer` makes the final offer
/// (and would take the whole surplus there). Agreement happens
/// immediately; these are the period-1 equilibrium shares.
pub fn spe_partition(
    lambda_md: f64,
    lambda_server: f64,
    horizon: u32,
    proposer: Proposer,
) -> Partition {
    debug_assert!(horizon >= 1);
    debug_assert!((0.0..=1.0).contains(&lambda_md) && (0.0..=1.0).contains(&lambda_server));
    let cross = lambda_md * lambda_server;
    let (md_share, server_share) = match proposer {
        Proposer::Md => {
            let opponent_share = if horizon % 2 == 0 {
                (1.0 - lambda_md) * geometric_sum(cross, horizon / 2)
            } else {
                (1.0 - lambda_md) * lambda_server * geometric_sum(cross, (horizon - 1) / 2)
            };
            (1.0 - opponent_share, opponent_share)
        }
        Proposer::Server => {
            let opponent_share = if horizon % 2 == 0 {
                (1.0 - lambda_server) * geometric_sum(cross, horizon / 2)
            } else {
                (1.0 - lambda_server) * lambda_md * geometric_sum(cross, (horizon - 1) / 2)
            };
            (opponent_share, 1.0 - opponent_share)
        }
    };
    Partition { md_share, server_share }
}

/// Price both parties settle on: the device bids the upper bound minus
/// its surplus share; the server asks the lower bound plus its own. The
/// two coincide because the shares sum to one.
pub fn consensus_price(lower: f64, upper: f64, partition: &Partition) -> f64 {
    debug_assert!(upper >= lower);
    let surplus = upper - lower;
    let bid = upper - surplus * partition.md_share;
    let ask = lower + surplus * partition.server_share;
    debug_assert!((bid - ask).abs() <= 1e-9 * bid.abs().max(1.0));
    bid
}

/// Negotiation configuration.
#[derive(Debug, Clone, Copy)]
pub struct BargainConfig {
    pub horizon: u32,
    pub max_rounds: u32,
    pub convergence_tol: f64,
}

impl From<&crate::config::BargainingSection> for BargainConfig {
    fn from(s: &crate::config::BargainingSection) -> Self {
        Self {
            horizon: s.horizon,
            max_rounds: s.max_rounds,
            convergence_tol: s.convergence_tol,
        }
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.abs().max(1e-300)
}

/// Alternate price and allocation updates from the full available
/// frequency until both parties gain and the pair stops moving.
///
/// The requested allocation is capped by the available frequency and by
/// the device budget (`p * f <= budget`). Mixed utility signs pick the
/// next proposer: the gaining side makes the offer; when both lose, the
/// device proposes.
pub fn negotiate(
    ctx: &PairContext,
    f_available: f64,
    cfg: &BargainConfig,
) -> Result<TradeOutcome, TradeFailure> {
    if f_available <= 0.0 {
        return Err(TradeFailure::NoCapacity);
    }
    if ctx.rate <= 0.0 || ctx.task.size_bits / ctx.rate >= ctx.deadline_s {
        return Err(TradeFailure::DeadlineInfeasible);
    }
    let mut f = f_available;
    let mut proposer = Proposer::Md;
    let mut previous: Option<(f64, f64)> = None;
    for round in 1..=cfg.max_rounds {
        let (lower, upper) = price_bounds(ctx, f)?;
        let lambda = discount_factors(ctx, f);
        let partition = spe_partition(lambda.md, lambda.server, cfg.horizon, proposer);
        let price = consensus_price(lower, upper, &partition);
        let mut f_new = optimal_allocation(ctx, price)?.min(f_available);
        if price > 0.0 {
            f_new = f_new.min(ctx.md.payment_budget / price);
        }
        let u_md = ctx.md_qoe(f_new, price);
        let u_server = ctx.server_revenue(f_new, price);
        let converged = previous.map_or(false, |(pf, pp)| {
            relative_change(f_new, pf) < cfg.convergence_tol
                && relative_change(price, pp) < cfg.convergence_tol
        });
        if u_md > 0.0 && u_server > 0.0 && (converged || round == cfg.max_rounds) {
            return Ok(TradeOutcome {
                frequency: f_new,
                unit_price: price,
                md_utility: u_md,
                server_utility: u_server,
                rounds: round,
            });
        }
        if converged {
            return Err(TradeFailure::NoConsensus);
        }
        proposer = match (u_md > 0.0, u_server > 0.0) {
            (true, false) => Proposer::Md,
            (false, true) => Proposer::Server,
            _ => Proposer::Md,
        };
        previous = Some((f_new, price));
        f = f_new;
    }
    Err(TradeFailure::NoConsensus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::model::{build_scenario, TaskStatus, WorldState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn world() -> WorldState {
        build_scenario(&ScenarioConfig::default()).unwrap()
    }

    fn test_task(size_bits: f64, intensity: f64, deadline: f64) -> Task {
        Task {
            id: 0,
            owner: 0,
            gen_slot: 0,
            size_bits,
            intensity,
            deadline_s: deadline,
            status: TaskStatus::Pending,
        }
    }

    fn pair<'a>(
        task: &'a Task,
        rate: f64,
        world: &'a WorldState,
        power: &'a UavPowerParams,
        server: usize,
    ) -> PairContext<'a> {
        PairContext {
            task,
            rate,
            md: &world.mds[task.owner],
            server: &world.servers[server],
            deadline_s: task.deadline_s,
            power,
            slot_duration_s: 0.1,
            qoe_normalizer: QoeEnergyNormalizer::Server,
        }
    }

    fn cfg() -> BargainConfig {
        BargainConfig { horizon: 10, max_rounds: 100, convergence_tol: 1e-6 }
    }

    /// Brute-force maximizer of the device QoE over the allocation.
    fn grid_argmax(ctx: &PairContext, price: f64, f_max: f64, points: usize) -> f64 {
        let mut best_f = f_max / points as f64;
        let mut best_u = f64::NEG_INFINITY;
        for i in 1..=points {
            let f = f_max * i as f64 / points as f64;
            let u = ctx.md_qoe(f, price);
            if u > best_u {
                best_u = u;
                best_f = f;
            }
        }
        best_f
    }

    #[test]
    fn allocation_matches_grid_search() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 10 {
            let task = test_task(
                rng.gen_range(1e6..5e6),
                rng.gen_range(500.0..1500.0),
                rng.gen_range(1.0..5.0),
            );
            let rate = rng.gen_range(20e6..120e6);
            let ctx = pair(&task, rate, &w, &power, 0);
            let price = rng.gen_range(1e-10..2e-9);
            let Ok(f_star) = optimal_allocation(&ctx, price) else { continue };
            let f_cap = ctx.server.f_total_max;
            if !(f_cap / 50.0..f_cap * 0.9).contains(&f_star)
                || ctx.delay(f_star) >= task.deadline_s
            {
                continue;
            }
            let f_grid = grid_argmax(&ctx, price, f_cap, 20_000);
            assert!(
                (f_star - f_grid).abs() <= 2.0 * f_cap / 20_000.0,
                "closed form {f_star:.3e} vs grid {f_grid:.3e}"
            );
            checked += 1;
        }
    }

    #[test]
    fn allocation_shrinks_to_singularity_edge_as_weight_vanishes() {
        // With the satisfaction weight going to zero the payment term
        // dominates and the requested allocation collapses onto the lower
        // edge of the log domain, total_cycles / (1 + tau - l/r).
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 3.0);
        let edge = task.total_cycles() / (1.0 + task.deadline_s - task.size_bits / 50e6);
        let mut world2 = w.clone();
        world2.mds[0].weight = 1e-6;
        let ctx = pair(&task, 50e6, &world2, &power, 0);
        let f = optimal_allocation(&ctx, 1e-9).unwrap();
        assert!(f > edge && f < 1.01 * edge, "f = {f}, edge = {edge}");
        world2.mds[0].weight = 1e-8;
        let ctx2 = pair(&task, 50e6, &world2, &power, 0);
        let f2 = optimal_allocation(&ctx2, 1e-9).unwrap();
        assert!(f2 < f && f2 > edge);
    }

    #[test]
    fn allocation_increases_with_budget() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 3.0);
        let ctx = pair(&task, 50e6, &w, &power, 0);
        let base = optimal_allocation(&ctx, 1e-9).unwrap();
        let mut world2 = w.clone();
        world2.mds[0].payment_budget *= 2.0;
        let ctx2 = pair(&task, 50e6, &world2, &power, 0);
        let doubled = optimal_allocation(&ctx2, 1e-9).unwrap();
        assert!(doubled > base, "{doubled} vs {base}");
    }

    #[test]
    fn bounds_are_break_even_prices() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 25 {
            let task = test_task(
                rng.gen_range(1e6..5e6),
                rng.gen_range(500.0..1500.0),
                rng.gen_range(0.5..5.0),
            );
            let rate = rng.gen_range(20e6..120e6);
            let server = rng.gen_range(0..w.servers.len());
            let ctx = pair(&task, rate, &w, &power, server);
            let f = rng.gen_range(1e9..8e9);
            let Ok((lower, upper)) = price_bounds(&ctx, f) else { continue };
            assert!(ctx.server_revenue(f, lower).abs() < 1e-9);
            assert!(ctx.md_qoe(f, upper).abs() < 1e-9);
            if upper > lower {
                let mid = 0.5 * (lower + upper);
                assert!(ctx.server_revenue(f, mid) > 0.0);
                assert!(ctx.md_qoe(f, mid) > 0.0);
            }
            checked += 1;
        }
    }

    #[test]
    fn discount_factor_limits() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 2.0);
        let ctx = pair(&task, 1e30, &w, &power, 0);
        let lambda = discount_factors(&ctx, 10e9);
        assert!((lambda.md - 1.0).abs() < 1e-9);
        // Compute time beyond the deadline clamps to zero.
        let slow = discount_factors(&ctx, task.total_cycles() / (2.0 * task.deadline_s));
        assert_eq!(slow.server, 0.0);
    }

    #[test]
    fn discount_factors_nondecreasing_in_deadline() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let mut prev = DiscountFactors { md: 0.0, server: 0.0 };
        for i in 1..=20 {
            let task = test_task(2e6, 1000.0, 0.25 * i as f64);
            let ctx = pair(&task, 30e6, &w, &power, 0);
            let lambda = discount_factors(&ctx, 2e9);
            assert!(lambda.md >= prev.md && lambda.server >= prev.server);
            prev = lambda;
        }
    }

    /// Explicit rollback of the alternating-offers game: the final
    /// proposer takes everything in the last period; stepping back one
    /// period, the then-proposer concedes the responder's discounted
    /// next-period share.
    fn rollback(lambda_md: f64, lambda_server: f64, horizon: u32, last: Proposer) -> Partition {
        let (mut md, mut server) = match last {
            Proposer::Md => (1.0, 0.0),
            Proposer::Server => (0.0, 1.0),
        };
        let mut current = last;
        for _ in 1..horizon {
            current = match current {
                Proposer::Md => Proposer::Server,
                Proposer::Server => Proposer::Md,
            };
            match current {
                Proposer::Md => {
                    server *= lambda_server;
                    md = 1.0 - server;
                }
                Proposer::Server => {
                    md *= lambda_md;
                    server = 1.0 - md;
                }
            }
        }
        Partition { md_share: md, server_share: server }
    }

    #[test]
    fn partition_trivial_cases() {
        // Fully patient device proposing last concedes nothing.
        let p = spe_partition(1.0, 0.7, 10, Proposer::Md);
        assert!((p.md_share - 1.0).abs() < 1e-12 && p.server_share.abs() < 1e-12);
        // Two periods, device last: the server proposes first and offers
        // exactly the device's discounted continuation.
        let p = spe_partition(0.6, 0.9, 2, Proposer::Md);
        assert!((p.md_share - 0.6).abs() < 1e-12);
        assert!((p.server_share - 0.4).abs() < 1e-12);
    }

    #[test]
    fn partition_matches_rollback_on_grid() {
        for horizon in [2u32, 4, 6, 8, 3, 5, 7, 1] {
            for i in 0..=20 {
                for j in 0..=20 {
                    let li = i as f64 / 20.0;
                    let lj = j as f64 / 20.0;
                    for proposer in [Proposer::Md, Proposer::Server] {
                        let closed = spe_partition(li, lj, horizon, proposer);
                        let rolled = rollback(li, lj, horizon, proposer);
                        assert!(
                            (closed.md_share - rolled.md_share).abs() < 1e-9,
                            "li={li} lj={lj} h={horizon} {proposer:?}: {closed:?} vs {rolled:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn consensus_price_extremes_and_identity() {
        let p_full = Partition { md_share: 1.0, server_share: 0.0 };
        assert_eq!(consensus_price(2.0, 6.0, &p_full), 2.0);
        let p_none = Partition { md_share: 0.0, server_share: 1.0 };
        assert_eq!(consensus_price(2.0, 6.0, &p_none), 6.0);
        let p = Partition { md_share: 0.37, server_share: 0.63 };
        let bid = 6.0 - 4.0 * p.md_share;
        let ask = 2.0 + 4.0 * p.server_share;
        assert!((bid - ask).abs() < 1e-12);
        assert!((consensus_price(2.0, 6.0, &p) - bid).abs() < 1e-12);
    }

    #[test]
    fn negotiation_reaches_mutual_gain() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 4.0);
        let ctx = pair(&task, 60e6, &w, &power, 0);
        let trade = negotiate(&ctx, ctx.server.f_total_max, &cfg()).unwrap();
        assert!(trade.md_utility > 0.0 && trade.server_utility > 0.0);
        assert!(trade.rounds <= 100);
        assert!(trade.frequency <= ctx.server.f_total_max);
        assert!(trade.payment() <= ctx.md.payment_budget + 1e-9);
        let (lower, upper) = price_bounds(&ctx, trade.frequency).unwrap();
        assert!(trade.unit_price >= lower && trade.unit_price <= upper);
    }

    #[test]
    fn negotiation_fixed_point() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 4.0);
        let ctx = pair(&task, 60e6, &w, &power, 0);
        let trade = negotiate(&ctx, ctx.server.f_total_max, &cfg()).unwrap();
        let f_again = optimal_allocation(&ctx, trade.unit_price).unwrap();
        assert!(
            relative_change(f_again, trade.frequency) < 1e-5,
            "{f_again} vs {}",
            trade.frequency
        );
        let (lower, upper) = price_bounds(&ctx, trade.frequency).unwrap();
        let lambda = discount_factors(&ctx, trade.frequency);
        // Re-derive the proposer from the terminal utilities: both are
        // positive, so the device-led partition of the final round holds.
        let partition = spe_partition(lambda.md, lambda.server, 10, Proposer::Md);
        let p_again = consensus_price(lower, upper, &partition);
        assert!(
            relative_change(p_again, trade.unit_price) < 1e-5,
            "{p_again} vs {}",
            trade.unit_price
        );
    }

    #[test]
    fn hopeless_deadline_fails() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(5e6, 1500.0, 0.01);
        let ctx = pair(&task, 30e6, &w, &power, 0);
        assert_eq!(
            negotiate(&ctx, ctx.server.f_total_max, &cfg()),
            Err(TradeFailure::DeadlineInfeasible)
        );
    }

    #[test]
    fn zero_capacity_fails() {
        let w = world();
        let power = UavPowerParams::from_config(&ScenarioConfig::default());
        let task = test_task(2e6, 1000.0, 4.0);
        let ctx = pair(&task, 60e6, &w, &power, 0);
        assert_eq!(negotiate(&ctx, 0.0, &cfg()), Err(TradeFailure::NoCapacity));
    }

    proptest! {
        #[test]
        fn partition_shares_sum_to_one(
            li in 0.0f64..=1.0,
            lj in 0.0f64..=1.0,
            horizon in 1u32..=12,
            md_last in proptest::bool::ANY,
        ) {
            let proposer = if md_last { Proposer::Md } else { Proposer::Server };
            let p = spe_partition(li, lj, horizon, proposer);
            prop_assert!((p.md_share + p.server_share - 1.0).abs() < 1e-12);
            prop_assert!(p.md_share >= -1e-12 && p.server_share >= -1e-12);
        }
    }
}
