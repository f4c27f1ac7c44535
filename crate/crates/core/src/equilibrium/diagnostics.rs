use crate::clearing::{self, clear_market, congestion_rent, regulate_prices, settle, BidProfile};
use crate::Result;

use super::{solve_social_optimum, EquilibriumResult, Scenario};

/// Slack allowed when comparing a cost against the no-sharing baseline.
pub const PARETO_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoCheck {
    pub cost: f64,
    /// Cost of covering the demand alone, `c_bar D^2`.
    pub baseline: f64,
}

impl ParetoCheck {
    pub fn holds(&self) -> bool {
        self.cost <= self.baseline + PARETO_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumDiagnostics {
    pub pareto: Vec<ParetoCheck>,
    /// `max_i |lambda_i + kappa + sum_l pi_il (tau_l^- - tau_l^+)|`.
    pub decomposition_residual: f64,
    /// `max_i |q_i - y_i|` after clearing the market at the equilibrium bids.
    pub reclearing_residual: f64,
    /// Largest change the price regulation makes at the equilibrium.
    pub regulation_residual: f64,
    /// Largest spread of `2 c_k p_k` across one prosumer's resources.
    pub split_residual: f64,
    /// Platform revenue after regulation and settlement.
    pub revenue: f64,
    pub congestion_rent: f64,
    pub social_disutility: f64,
    /// `(1/I) (sum f(p*) - sum f(p_bar))`.
    pub per_capita_gap: f64,
    /// `G^D F_hat / (a (I - 1))`.
    pub gap_bound: f64,
}

impl EquilibriumDiagnostics {
    pub fn revenue_residual(&self) -> f64 {
        (self.revenue - self.congestion_rent).abs()
    }

    pub fn pareto_holds(&self) -> bool {
        self.pareto.iter().all(ParetoCheck::holds)
    }
}

/// Re-derives the properties an equilibrium must have from scratch: it
/// re-clears the market at the equilibrium bids, applies regulation and
/// settlement, and solves the social optimum for comparison.
pub fn verify_equilibrium(
    result: &EquilibriumResult,
    scenario: &Scenario,
) -> Result<EquilibriumDiagnostics> {
    let count = scenario.count();
    let a = scenario.sensitivity();
    let network = scenario.network();
    let buses = scenario.buses();
    let pi = clearing::prosumer_factors(network, &buses);

    let pareto = scenario
        .prosumers()
        .iter()
        .zip(&result.costs)
        .map(|(p, &cost)| ParetoCheck {
            cost,
            baseline: p.individual_cost(),
        })
        .collect();

    let decomposition_residual = (0..count)
        .map(|i| {
            let congestion: f64 = (0..network.line_count())
                .map(|l| pi[(l, i)] * (result.tau_lower[l] - result.tau_upper[l]))
                .sum();
            (result.prices[i] + result.kappa + congestion).abs()
        })
        .fold(0.0, f64::max);

    let cleared = clear_market(network, &buses, &BidProfile::new(result.bids.clone(), a)?)?;
    let reclearing_residual = cleared
        .quantities
        .iter()
        .zip(&result.net_trades)
        .map(|(q, y)| (q - y).abs())
        .fold(0.0, f64::max);
    let md: Vec<f64> = result
        .dispatch
        .iter()
        .map(|d| d.marginal_disutility)
        .collect();
    let regulated = regulate_prices(&cleared, &md, a, count)?;
    let regulation_residual = regulated
        .prices
        .iter()
        .zip(&cleared.prices)
        .map(|(r, p)| (r - p).abs())
        .fold(0.0, f64::max);
    let revenue = settle(&regulated, &cleared).revenue;

    let split_residual = scenario
        .prosumers()
        .iter()
        .zip(&result.dispatch)
        .map(|(p, d)| {
            let marginals = p.costs().iter().zip(&d.outputs).map(|(c, x)| 2.0 * c * x);
            let (lo, hi) = marginals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m), hi.max(m))
            });
            hi - lo
        })
        .fold(0.0, f64::max);

    let social = solve_social_optimum(scenario)?;
    let per_capita_gap = (result.total_disutility - social.total_disutility) / count as f64;
    let gap_bound =
        network.max_degree() as f64 * network.max_flow_limit() / (a * (count - 1) as f64);

    Ok(EquilibriumDiagnostics {
        pareto,
        decomposition_residual,
        reclearing_residual,
        regulation_residual,
        split_residual,
        revenue,
        congestion_rent: congestion_rent(network, &result.tau_lower, &result.tau_upper),
        social_disutility: social.total_disutility,
        per_capita_gap,
        gap_bound,
    })
}
