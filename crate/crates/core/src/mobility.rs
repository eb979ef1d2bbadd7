//! Epoch-scale mobility: Gauss-Markov device movement and UAV kinematic
//! constraint checks.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::TimeGrid;

/// Gauss-Markov velocity process parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMarkovParams {
    /// Memory degree in [0, 1]; 1 keeps the previous velocity, 0 forgets it.
    pub alpha: f64,
    /// Asymptotic mean velocity [m/s].
    pub mean_velocity: Vector2<f64>,
    /// Asymptotic standard deviation [m/s].
    pub sigma: f64,
}

/// Shared UAV kinematic limits; per-UAV anchors live on the server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavKinematicLimits {
    pub v_max: f64,
    pub d_safe: f64,
    pub altitude: f64,
    /// Area bounds [m].
    pub area: Vector2<f64>,
}

/// One velocity update: `alpha*v + (1-alpha)*mean + sigma*sqrt(1-alpha^2)*w`
/// with `w` a standard 2-D Gaussian.
pub fn md_velocity_step(
    v_prev: Vector2<f64>,
    params: &GaussMarkovParams,
    rng: &mut impl Rng,
) -> Vector2<f64> {
    debug_assert!((0.0..=1.0).contains(&params.alpha) && params.sigma >= 0.0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let w = Vector2::new(unit.sample(rng), unit.sample(rng));
    params.alpha * v_prev
        + (1.0 - params.alpha) * params.mean_velocity
        + params.sigma * (1.0 - params.alpha * params.alpha).sqrt() * w
}

/// One epoch position update with box clamping. Returns the new position
/// and the (possibly reflected) velocity: a component that would leave
/// the area is negated so devices stay in service.
pub fn md_position_step(
    position: Vector2<f64>,
    velocity: Vector2<f64>,
    area: Vector2<f64>,
    grid: &TimeGrid,
) -> (Vector2<f64>, Vector2<f64>) {
    let raw = position + velocity * grid.epoch_duration_s();
    let mut clamped = raw;
    let mut v = velocity;
    for axis in 0..2 {
        if raw[axis] < 0.0 {
            clamped[axis] = 0.0;
            v[axis] = -v[axis];
        } else if raw[axis] > area[axis] {
            clamped[axis] = area[axis];
            v[axis] = -v[axis];
        }
    }
    (clamped, v)
}

/// One epoch UAV position update (no clamping: the trajectory layer is
/// responsible for producing in-bounds waypoints).
pub fn uav_position_step(
    position: Vector2<f64>,
    velocity: Vector2<f64>,
    grid: &TimeGrid,
) -> Vector2<f64> {
    position + velocity * grid.epoch_duration_s()
}

/// One UAV's per-epoch waypoint list together with its anchors.
#[derive(Debug, Clone)]
pub struct UavTrajectory {
    pub uav: usize,
    /// Position at every epoch boundary, `epoch_count + 1` entries.
    pub waypoints: Vec<Vector2<f64>>,
    pub initial: Vector2<f64>,
    pub final_pos: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintViolation {
    OutOfBounds { uav: usize, epoch: usize },
    StartAnchor { uav: usize },
    /// Final waypoint farther than `tolerance` from the destination.
    FinalAnchor { uav: usize, distance: f64, tolerance: f64 },
    /// Per-epoch displacement above `v_max * epoch_duration`.
    Displacement { uav: usize, epoch: usize, distance: f64, limit: f64 },
    /// Destination no longer reachable from this epoch at `v_max`.
    Unreachable { uav: usize, epoch: usize, distance: f64, limit: f64 },
    SafeDistance { uav_a: usize, uav_b: usize, epoch: usize, distance: f64 },
}

/// Check a set of epoch trajectories against the kinematic constraint
/// family: box bounds, start anchoring, per-epoch displacement,
/// destination reachability, pairwise separation, and final anchoring
/// (within one epoch's travel of the destination). Violations are data,
/// not errors.
pub fn check_uav_constraints(
    trajectories: &[UavTrajectory],
    limits: &UavKinematicLimits,
    grid: &TimeGrid,
) -> Vec<ConstraintViolation> {
    let mut violations = Vec::new();
    let step = limits.v_max * grid.epoch_duration_s();
    let eps = 1e-6;
    for trajectory in trajectories {
        let uav = trajectory.uav;
        let n = trajectory.waypoints.len();
        if n == 0 {
            continue;
        }
        if (trajectory.waypoints[0] - trajectory.initial).norm() > eps {
            violations.push(ConstraintViolation::StartAnchor { uav });
        }
        for (epoch, q) in trajectory.waypoints.iter().enumerate() {
            if q.x < -eps || q.y < -eps || q.x > limits.area.x + eps || q.y > limits.area.y + eps
            {
                violations.push(ConstraintViolation::OutOfBounds { uav, epoch });
            }
            let remaining = (n - 1 - epoch) as f64;
            let reach_limit = limits.v_max * remaining * grid.epoch_duration_s();
            let to_final = (trajectory.final_pos - q).norm();
            // The terminal epoch keeps one epoch's travel of slack so that
            // several UAVs sharing a destination stay jointly separable.
            let reach_limit = reach_limit.max(step);
            if to_final > reach_limit + eps {
                violations.push(ConstraintViolation::Unreachable {
                    uav,
                    epoch,
                    distance: to_final,
                    limit: reach_limit,
                });
            }
        }
        for epoch in 1..n {
            let d = (trajectory.waypoints[epoch] - trajectory.waypoints[epoch - 1]).norm();
            if d > step + eps {
                violations.push(ConstraintViolation::Displacement {
                    uav,
                    epoch,
                    distance: d,
                    limit: step,
                });
            }
        }
        let last = trajectory.waypoints[n - 1];
        let final_gap = (trajectory.final_pos - last).norm();
        if final_gap > step + eps {
            violations.push(ConstraintViolation::FinalAnchor {
                uav,
                distance: final_gap,
                tolerance: step,
            });
        }
    }
    for a in 0..trajectories.len() {
        for b in a + 1..trajectories.len() {
            let n = trajectories[a].waypoints.len().min(trajectories[b].waypoints.len());
            for epoch in 0..n {
                let d =
                    (trajectories[a].waypoints[epoch] - trajectories[b].waypoints[epoch]).norm();
                if d < limits.d_safe - eps {
                    violations.push(ConstraintViolation::SafeDistance {
                        uav_a: trajectories[a].uav,
                        uav_b: trajectories[b].uav,
                        epoch,
                        distance: d,
                    });
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.1, 10, 600)
    }

    #[test]
    fn alpha_one_keeps_velocity() {
        let params = GaussMarkovParams {
            alpha: 1.0,
            mean_velocity: Vector2::new(3.0, -4.0),
            sigma: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Vector2::new(0.7, -0.2);
        assert_eq!(md_velocity_step(v, &params, &mut rng), v);
    }

    #[test]
    fn alpha_zero_sigma_zero_is_mean() {
        let params = GaussMarkovParams {
            alpha: 0.0,
            mean_velocity: Vector2::new(0.5, 0.25),
            sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = md_velocity_step(Vector2::new(9.0, 9.0), &params, &mut rng);
        assert_eq!(v, params.mean_velocity);
    }

    #[test]
    fn one_step_mean_matches_stationary_mean() {
        // Stepping from the stationary mean, the output mean is the
        // asymptotic mean; N independent draws pin it to 3 sigma / sqrt(N).
        let params = GaussMarkovParams {
            alpha: 0.9,
            mean_velocity: Vector2::new(0.5, 0.5),
            sigma: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = Vector2::zeros();
        for _ in 0..n {
            sum += md_velocity_step(params.mean_velocity, &params, &mut rng);
        }
        let mean = sum / n as f64;
        let tol = 3.0 * params.sigma / (n as f64).sqrt();
        assert!((mean - params.mean_velocity).norm() < tol, "mean {mean:?}");
    }

    #[test]
    fn long_run_chain_mean_converges() {
        // Sample mean of the autocorrelated chain; the variance of the
        // mean carries the (1+alpha)/(1-alpha) inflation factor.
        let params = GaussMarkovParams {
            alpha: 0.9,
            mean_velocity: Vector2::new(0.5, 0.5),
            sigma: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut v = params.mean_velocity;
        let mut sum = Vector2::zeros();
        for _ in 0..n {
            v = md_velocity_step(v, &params, &mut rng);
            sum += v;
        }
        let mean = sum / n as f64;
        let inflation = ((1.0 + params.alpha) / (1.0 - params.alpha)).sqrt();
        let tol = 3.0 * params.sigma * inflation / (n as f64).sqrt();
        assert!((mean - params.mean_velocity).norm() < tol, "mean {mean:?}");
    }

    #[test]
    fn zero_velocity_keeps_position() {
        let q = Vector2::new(10.0, 20.0);
        let (q2, _) =
            md_position_step(q, Vector2::zeros(), Vector2::new(1000.0, 1000.0), &grid());
        assert_eq!(q2, q);
    }

    #[test]
    fn position_step_arithmetic() {
        let (q2, _) = md_position_step(
            Vector2::zeros(),
            Vector2::new(1.0, 0.0),
            Vector2::new(1000.0, 1000.0),
            &grid(),
        );
        assert_eq!(q2, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn boundary_clamp_reflects_velocity() {
        let (q2, v2) = md_position_step(
            Vector2::new(999.5, 500.0),
            Vector2::new(2.0, 1.0),
            Vector2::new(1000.0, 1000.0),
            &grid(),
        );
        assert_eq!(q2, Vector2::new(1000.0, 501.0));
        assert_eq!(v2, Vector2::new(-2.0, 1.0));
        let (q3, v3) = md_position_step(
            Vector2::new(0.5, 0.5),
            Vector2::new(-1.0, -1.0),
            Vector2::new(1000.0, 1000.0),
            &grid(),
        );
        assert_eq!(q3, Vector2::new(0.0, 0.0));
        assert_eq!(v3, Vector2::new(1.0, 1.0));
    }

    fn limits() -> UavKinematicLimits {
        UavKinematicLimits {
            v_max: 30.0,
            d_safe: 10.0,
            altitude: 100.0,
            area: Vector2::new(1000.0, 1000.0),
        }
    }

    #[test]
    fn exact_safe_distance_is_allowed() {
        let a = UavTrajectory {
            uav: 0,
            waypoints: vec![Vector2::new(0.0, 0.0)],
            initial: Vector2::new(0.0, 0.0),
            final_pos: Vector2::new(0.0, 0.0),
        };
        let b = UavTrajectory {
            uav: 1,
            waypoints: vec![Vector2::new(10.0, 0.0)],
            initial: Vector2::new(10.0, 0.0),
            final_pos: Vector2::new(10.0, 0.0),
        };
        let violations = check_uav_constraints(&[a, b], &limits(), &grid());
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn oversized_displacement_flagged() {
        let t = UavTrajectory {
            uav: 0,
            waypoints: vec![Vector2::new(0.0, 0.0), Vector2::new(31.0, 0.0)],
            initial: Vector2::new(0.0, 0.0),
            final_pos: Vector2::new(31.0, 0.0),
        };
        let violations = check_uav_constraints(&[t], &limits(), &grid());
        assert!(violations
            .iter()
            .any(|v| matches!(v, ConstraintViolation::Displacement { distance, .. } if *distance > 30.0)));
    }

    #[test]
    fn missed_final_anchor_flagged() {
        let t = UavTrajectory {
            uav: 0,
            waypoints: vec![Vector2::new(0.0, 0.0), Vector2::new(20.0, 0.0)],
            initial: Vector2::new(0.0, 0.0),
            final_pos: Vector2::new(100.0, 0.0),
        };
        let violations = check_uav_constraints(&[t], &limits(), &grid());
        assert!(violations
            .iter()
            .any(|v| matches!(v, ConstraintViolation::FinalAnchor { .. })));
    }
}
