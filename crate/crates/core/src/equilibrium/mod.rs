//! Market equilibrium of the bidding game and the social optimum.
//!
//! Under the regulated mechanism the game has a unique equilibrium whose
//! dispatch solves the centralized problem
//!
//! ```text
//!     min  sum_i sum_k c_i^k (p_i^k)^2 + sum_i (D_i - P_i)^2 / (2 a (I - 1))
//!     s.t. sum_i P_i = sum_i D_i                              : kappa
//!          -F_l <= sum_i pi_il (D_i - P_i) <= F_l             : tau_l^-, tau_l^+
//! ```
//!
//! with `P_i = sum_k p_i^k`. Bids are recovered from the dispatch. The social
//! optimum drops the second objective term.

use nalgebra::DMatrix;

use crate::clearing::{self, check_buses};
use crate::network::Network;
use crate::prosumer::{Dispatch, Prosumer};
use crate::qp::{self, QpProblem, QpSolution};
use crate::{Error, Result};

mod continuum;
mod diagnostics;
mod dynamics;
mod partition;
mod sweep;

pub use continuum::{detect_continuum, ContinuumReport, ContinuumSample, ContinuumVerdict};
pub use diagnostics::{verify_equilibrium, EquilibriumDiagnostics, ParetoCheck};
pub use dynamics::{best_response_dynamics, DynamicsOptions, DynamicsOutcome, UpdateMode};
pub use partition::equal_partition;
pub use sweep::{
    count_sweep, flow_sweep, random_scenario, CountSweepConfig, CountSweepRow, DrawRanges,
    FlowSweepRow,
};

/// Tolerance above which a flow multiplier marks a line as congested.
pub const CONGESTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    sensitivity: f64,
    prosumers: Vec<Prosumer>,
    network: Network,
}

impl Scenario {
    pub fn new(network: Network, prosumers: Vec<Prosumer>, sensitivity: f64) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "price sensitivity must be positive, got {sensitivity}"
            )));
        }
        if prosumers.is_empty() {
            return Err(Error::TooFewProsumers { count: 0 });
        }
        let buses: Vec<usize> = prosumers.iter().map(Prosumer::bus).collect();
        check_buses(&network, &buses)?;
        Ok(Scenario {
            sensitivity,
            prosumers,
            network,
        })
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn prosumers(&self) -> &[Prosumer] {
        &self.prosumers
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Number of prosumers `I`.
    pub fn count(&self) -> usize {
        self.prosumers.len()
    }

    pub fn buses(&self) -> Vec<usize> {
        self.prosumers.iter().map(Prosumer::bus).collect()
    }

    pub fn with_network(&self, network: Network) -> Result<Scenario> {
        Scenario::new(network, self.prosumers.clone(), self.sensitivity)
    }

    pub(crate) fn require_sharing(&self) -> Result<()> {
        if self.count() < 2 {
            return Err(Error::TooFewProsumers {
                count: self.count(),
            });
        }
        Ok(())
    }

    fn resource_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.count() + 1);
        let mut acc = 0;
        offsets.push(0);
        for p in &self.prosumers {
            acc += p.resource_count();
            offsets.push(acc);
        }
        offsets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub dispatch: Vec<Dispatch>,
    pub bids: Vec<f64>,
    pub prices: Vec<f64>,
    /// `y_i = D_i - P_i`, the quantity each prosumer buys.
    pub net_trades: Vec<f64>,
    pub kappa: f64,
    pub tau_lower: Vec<f64>,
    pub tau_upper: Vec<f64>,
    /// Total cost of each prosumer at the equilibrium.
    pub costs: Vec<f64>,
    pub total_disutility: f64,
    pub platform_revenue: f64,
    pub iterations: usize,
}

impl EquilibriumResult {
    pub fn is_congested(&self) -> bool {
        self.tau_lower
            .iter()
            .chain(&self.tau_upper)
            .any(|t| *t > CONGESTION_TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialOptimum {
    pub dispatch: Vec<Dispatch>,
    pub total_disutility: f64,
    /// Nodal prices `2 c_i^k p_i^k`, the marginal disutility of each prosumer.
    pub prices: Vec<f64>,
    pub kappa: f64,
    pub tau_lower: Vec<f64>,
    pub tau_upper: Vec<f64>,
    pub iterations: usize,
}

/// Shared structure of both centralized problems. `coupling` is the weight of
/// the `y_i^2` term (absent for the social optimum).
fn centralized_problem(scenario: &Scenario, coupling: Option<f64>) -> QpProblem {
    let count = scenario.count();
    let offsets = scenario.resource_offsets();
    let resources = offsets[count];
    let extra = if coupling.is_some() { count } else { 0 };
    let n = resources + extra;

    let mut hessian = Vec::with_capacity(n);
    for p in scenario.prosumers() {
        hessian.extend(p.costs().iter().map(|c| 2.0 * c));
    }
    if let Some(w) = coupling {
        hessian.extend(std::iter::repeat_n(w, count));
    }

    let total_demand: f64 = scenario.prosumers().iter().map(Prosumer::demand).sum();
    let eq_rows = 1 + extra;
    let mut eq = DMatrix::zeros(eq_rows, n);
    let mut eq_rhs = vec![0.0; eq_rows];
    for k in 0..resources {
        eq[(0, k)] = 1.0;
    }
    eq_rhs[0] = total_demand;
    if coupling.is_some() {
        // P_i + y_i = D_i
        for (i, p) in scenario.prosumers().iter().enumerate() {
            for k in offsets[i]..offsets[i + 1] {
                eq[(1 + i, k)] = 1.0;
            }
            eq[(1 + i, resources + i)] = 1.0;
            eq_rhs[1 + i] = p.demand();
        }
    }

    let network = scenario.network();
    let pi = clearing::prosumer_factors(network, &scenario.buses());
    let lines = network.lines();
    let mut ranges = DMatrix::zeros(lines.len(), n);
    let mut lower = Vec::with_capacity(lines.len());
    let mut upper = Vec::with_capacity(lines.len());
    for (l, line) in lines.iter().enumerate() {
        let mut pd = 0.0;
        for (i, p) in scenario.prosumers().iter().enumerate() {
            pd += pi[(l, i)] * p.demand();
            for k in offsets[i]..offsets[i + 1] {
                ranges[(l, k)] = -pi[(l, i)];
            }
        }
        lower.push(-line.flow_limit - pd);
        upper.push(line.flow_limit - pd);
    }

    QpProblem::new(hessian, vec![0.0; n])
        .with_equalities(eq, eq_rhs)
        .with_ranges(ranges, lower, upper)
}

fn split_solution(scenario: &Scenario, solution: &QpSolution) -> Vec<Dispatch> {
    let offsets = scenario.resource_offsets();
    scenario
        .prosumers()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let outputs = solution.x[offsets[i]..offsets[i + 1]].to_vec();
            let total: f64 = outputs.iter().sum();
            Dispatch {
                outputs,
                total,
                marginal_disutility: 2.0 * p.aggregate_cost() * total,
            }
        })
        .collect()
}

/// Equilibrium of the regulated sharing game.
pub fn solve_gne(scenario: &Scenario) -> Result<EquilibriumResult> {
    scenario.require_sharing()?;
    let count = scenario.count();
    let a = scenario.sensitivity();
    let scale = a * (count - 1) as f64;
    let problem = centralized_problem(scenario, Some(1.0 / scale));
    let solution = qp::solve(&problem)?;
    let dispatch = split_solution(scenario, &solution);

    let mut bids = Vec::with_capacity(count);
    let mut prices = Vec::with_capacity(count);
    let mut net_trades = Vec::with_capacity(count);
    let mut costs = Vec::with_capacity(count);
    for (p, d) in scenario.prosumers().iter().zip(&dispatch) {
        let y = p.demand() - d.total;
        let price = d.marginal_disutility - y / scale;
        bids.push(y + a * price);
        prices.push(price);
        net_trades.push(y);
        costs.push(p.regulated_cost(price, d, a, count)?);
    }
    let total_disutility = scenario
        .prosumers()
        .iter()
        .zip(&dispatch)
        .map(|(p, d)| p.disutility(&d.outputs))
        .sum();
    let platform_revenue = prices.iter().zip(&net_trades).map(|(l, y)| l * y).sum();

    Ok(EquilibriumResult {
        dispatch,
        bids,
        prices,
        net_trades,
        kappa: solution.eq_duals[0],
        tau_lower: solution.lower_duals,
        tau_upper: solution.upper_duals,
        costs,
        total_disutility,
        platform_revenue,
        iterations: solution.iterations,
    })
}

/// Dispatch minimizing total disutility under balance and flow limits.
pub fn solve_social_optimum(scenario: &Scenario) -> Result<SocialOptimum> {
    let problem = centralized_problem(scenario, None);
    let solution = qp::solve(&problem)?;
    let dispatch = split_solution(scenario, &solution);
    let total_disutility = scenario
        .prosumers()
        .iter()
        .zip(&dispatch)
        .map(|(p, d)| p.disutility(&d.outputs))
        .sum();
    let prices = dispatch.iter().map(|d| d.marginal_disutility).collect();
    Ok(SocialOptimum {
        dispatch,
        total_disutility,
        prices,
        kappa: solution.eq_duals[0],
        tau_lower: solution.lower_duals,
        tau_upper: solution.upper_duals,
        iterations: solution.iterations,
    })
}

/// Population variance `(1/n) sum (x - mean)^2`.
pub fn price_variance(prices: &[f64]) -> f64 {
    if prices.is_empty() {
        return 0.0;
    }
    let n = prices.len() as f64;
    let mean = prices.iter().sum::<f64>() / n;
    prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_abs_diff_eq;

    #[test]
    fn benchmark_uncongested() {
        let gne = solve_gne(&cases::benchmark(10.0)).unwrap();
        // 6 p1 - 3 = 8 p2 - 7, p1 + p2 = 10
        assert_abs_diff_eq!(gne.dispatch[0].total, 38.0 / 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gne.dispatch[1].total, 32.0 / 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gne.bids[0], 190.0 / 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.bids[1], 32.0, epsilon = 1e-9);
        assert!(!gne.is_congested());
        assert_abs_diff_eq!(gne.platform_revenue, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.costs[0], 91.0 / 49.0, epsilon = 1e-9);
    }

    #[test]
    fn benchmark_congested() {
        let gne = solve_gne(&cases::benchmark(2.0)).unwrap();
        assert_abs_diff_eq!(gne.dispatch[0].total, 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gne.dispatch[1].total, 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gne.bids[0], 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.bids[1], 35.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.kappa, -33.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.tau_lower[0], 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.platform_revenue, 12.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_pair_does_not_trade() {
        let gne = solve_gne(&cases::symmetric_pair(2.0, 4.0, 10.0)).unwrap();
        for (d, y) in gne.dispatch.iter().zip(&gne.net_trades) {
            assert_abs_diff_eq!(d.total, 4.0, epsilon = 1e-10);
            assert_abs_diff_eq!(*y, 0.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(gne.prices[0], 16.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gne.prices[0], gne.prices[1], epsilon = 1e-12);
    }

    #[test]
    fn social_optimum_benchmark() {
        // equal marginals 5 p1 = 7 p2 with p1 + p2 = 10
        let sco = solve_social_optimum(&cases::benchmark(10.0)).unwrap();
        assert_abs_diff_eq!(sco.dispatch[0].total, 35.0 / 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sco.dispatch[1].total, 25.0 / 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sco.total_disutility, 875.0 / 6.0, epsilon = 1e-9);

        let congested = solve_social_optimum(&cases::benchmark(2.0)).unwrap();
        assert_abs_diff_eq!(congested.dispatch[0].total, 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(congested.total_disutility, 150.0, epsilon = 1e-9);
    }

    #[test]
    fn single_prosumer_social_optimum_is_own_split() {
        let network = cases::two_bus(5.0);
        let p = Prosumer::new(0, vec![1.0, 3.0], 4.0).unwrap();
        let s = Scenario::new(network, vec![p.clone()], 1.0).unwrap();
        let sco = solve_social_optimum(&s).unwrap();
        let own = p.split_dispatch(4.0);
        for (a, b) in sco.dispatch[0].outputs.iter().zip(&own.outputs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert!(matches!(
            solve_gne(&s),
            Err(Error::TooFewProsumers { count: 1 })
        ));
    }

    #[test]
    fn variance() {
        assert_eq!(price_variance(&[]), 0.0);
        assert_abs_diff_eq!(price_variance(&[1.0, 3.0]), 1.0, epsilon = 1e-15);
    }
}
