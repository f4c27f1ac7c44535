use crate::prosumer::best_response;
use crate::{Error, Result};

use super::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Prosumers respond one after another in index order and see the bids
    /// already updated in the same round.
    #[default]
    Sequential,
    /// Every prosumer responds to the previous round's profile.
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    pub mode: UpdateMode,
    /// Stop once the sup-norm change of a full round is at most this.
    pub tolerance: f64,
    pub max_rounds: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            mode: UpdateMode::Sequential,
            tolerance: 1e-8,
            max_rounds: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsOutcome {
    /// Bid profile before the first round and after every round.
    pub trajectory: Vec<Vec<f64>>,
    pub converged: bool,
    pub rounds: usize,
    /// Sup-norm change of the last round.
    pub last_change: f64,
}

impl DynamicsOutcome {
    pub fn bids(&self) -> &[f64] {
        self.trajectory
            .last()
            .expect("trajectory holds the initial profile")
    }
}

/// Iterated best responses under the regulated mechanism.
///
/// Running out of rounds is reported through `converged == false`; only a
/// failed market clearing is an error, tagged with the round it occurred in.
pub fn best_response_dynamics(
    scenario: &Scenario,
    initial: &[f64],
    options: &DynamicsOptions,
) -> Result<DynamicsOutcome> {
    scenario.require_sharing()?;
    if initial.len() != scenario.count() {
        return Err(Error::DimensionMismatch {
            what: "initial bids",
            expected: scenario.count(),
            found: initial.len(),
        });
    }
    if options.tolerance.is_nan() || options.tolerance < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be non-negative, got {}",
            options.tolerance
        )));
    }

    let mut trajectory = vec![initial.to_vec()];
    let mut current = initial.to_vec();
    let mut last_change = f64::INFINITY;
    for round in 1..=options.max_rounds {
        let wrap = |source: Error| Error::Dynamics {
            round,
            source: Box::new(source),
        };
        let next = match options.mode {
            UpdateMode::Sequential => {
                let mut bids = current.clone();
                for i in 0..bids.len() {
                    bids[i] = best_response(scenario, i, &bids).map_err(wrap)?.bid;
                }
                bids
            }
            UpdateMode::Simultaneous => (0..current.len())
                .map(|i| best_response(scenario, i, &current).map(|r| r.bid))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?,
        };
        last_change = next
            .iter()
            .zip(&current)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        trajectory.push(next.clone());
        current = next;
        if last_change <= options.tolerance {
            return Ok(DynamicsOutcome {
                trajectory,
                converged: true,
                rounds: round,
                last_change,
            });
        }
    }
    Ok(DynamicsOutcome {
        trajectory,
        converged: false,
        rounds: options.max_rounds,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::equilibrium::solve_gne;
    use approx::assert_abs_diff_eq;

    #[test]
    fn benchmark_from_zero() {
        let s = cases::benchmark(10.0);
        for mode in [UpdateMode::Sequential, UpdateMode::Simultaneous] {
            let options = DynamicsOptions {
                mode,
                ..Default::default()
            };
            let out = best_response_dynamics(&s, &[0.0, 0.0], &options).unwrap();
            assert!(out.converged, "{mode:?}");
            assert_abs_diff_eq!(out.bids()[0], 190.0 / 7.0, epsilon = 1e-5);
            assert_abs_diff_eq!(out.bids()[1], 32.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn fixed_point_does_not_move() {
        let s = cases::benchmark(10.0);
        let gne = solve_gne(&s).unwrap();
        let out = best_response_dynamics(&s, &gne.bids, &DynamicsOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.rounds, 1);
        assert!(out.last_change <= 1e-8);
    }

    #[test]
    fn congested_converges_under_regulation() {
        let s = cases::benchmark(2.0);
        let out = best_response_dynamics(&s, &[0.0, 0.0], &DynamicsOptions::default()).unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.bids()[0], 25.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out.bids()[1], 35.0, epsilon = 1e-5);
    }

    #[test]
    fn round_limit_is_not_an_error() {
        let s = cases::benchmark(10.0);
        let options = DynamicsOptions {
            max_rounds: 1,
            ..Default::default()
        };
        let out = best_response_dynamics(&s, &[0.0, 0.0], &options).unwrap();
        assert!(!out.converged);
        assert_eq!(out.trajectory.len(), 2);
    }

    #[test]
    fn tight_line_still_converges() {
        let net = cases::two_bus(1e-4);
        let prosumers = vec![
            crate::prosumer::Prosumer::new(0, vec![1.0], 1.0).unwrap(),
            crate::prosumer::Prosumer::new(1, vec![1.0], 5.0).unwrap(),
        ];
        let s = Scenario::new(net, prosumers, 1.0).unwrap();
        let out = best_response_dynamics(&s, &[0.0, 0.0], &DynamicsOptions::default()).unwrap();
        assert!(out.converged);
        let gne = solve_gne(&s).unwrap();
        assert_abs_diff_eq!(gne.net_trades[0], -1e-4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.bids()[0], gne.bids[0], epsilon = 1e-5);
        assert!(matches!(
            best_response_dynamics(&s, &[0.0], &DynamicsOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
