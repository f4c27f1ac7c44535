//! Prosumer economics and best responses.
//!
//! A prosumer owns `K` resources with quadratic disutility
//! `f(p) = sum_k c_k p_k^2` and must cover a demand reduction `D`, either with
//! its own resources or by trading `q = D - sum_k p_k` on the sharing market.
//! For a fixed total output the cheapest split equalises `c_k p_k`, which gives
//! the aggregate coefficient `c_bar = 1 / sum_k (1 / c_k)` and
//! `f = c_bar * total^2`.

use nalgebra::DMatrix;

use crate::clearing::{self, regulated_price, BidProfile, ClearingResult};
use crate::equilibrium::Scenario;
use crate::qp::{self, QpProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prosumer {
    bus: usize,
    costs: Vec<f64>,
    demand: f64,
}

impl Prosumer {
    pub fn new(bus: usize, costs: Vec<f64>, demand: f64) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidParameter(
                "a prosumer needs at least one resource".into(),
            ));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "resource cost coefficients must be positive, got {c}"
            )));
        }
        if !demand.is_finite() {
            return Err(Error::InvalidParameter("demand must be finite".into()));
        }
        Ok(Prosumer { bus, costs, demand })
    }

    pub fn bus(&self) -> usize {
        self.bus
    }

    /// Cost coefficients `c^k`, one per resource.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Required demand reduction `D`; may be negative.
    pub fn demand(&self) -> f64 {
        self.demand
    }

    pub fn resource_count(&self) -> usize {
        self.costs.len()
    }

    /// `c_bar = 1 / sum_k (1 / c^k)`.
    pub fn aggregate_cost(&self) -> f64 {
        1.0 / self.costs.iter().map(|c| 1.0 / c).sum::<f64>()
    }

    /// Cheapest split of `total` across the resources.
    pub fn split_dispatch(&self, total: f64) -> Dispatch {
        let c_bar = self.aggregate_cost();
        Dispatch {
            outputs: self.costs.iter().map(|c| c_bar / c * total).collect(),
            total,
            marginal_disutility: 2.0 * c_bar * total,
        }
    }

    pub fn disutility(&self, outputs: &[f64]) -> f64 {
        self.costs.iter().zip(outputs).map(|(c, p)| c * p * p).sum()
    }

    /// Cost of covering the demand alone, `c_bar * D^2`.
    pub fn individual_cost(&self) -> f64 {
        self.aggregate_cost() * self.demand * self.demand
    }

    /// Total cost under the regulated mechanism: disutility plus
    /// `max(lambda q, (md - q / (a (I - 1))) q)` with `q = D - total`.
    pub fn regulated_cost(
        &self,
        price: f64,
        dispatch: &Dispatch,
        sensitivity: f64,
        count: usize,
    ) -> Result<f64> {
        if count < 2 {
            return Err(Error::TooFewProsumers { count });
        }
        let q = self.demand - dispatch.total;
        let scale = sensitivity * (count - 1) as f64;
        let paid = regulated_price(price, q, dispatch.marginal_disutility, scale);
        Ok(self.disutility(&dispatch.outputs) + paid * q)
    }

    /// Total cost without regulation: disutility plus `lambda q`.
    pub fn unregulated_cost(&self, price: f64, dispatch: &Dispatch) -> f64 {
        let q = self.demand - dispatch.total;
        self.disutility(&dispatch.outputs) + price * q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub outputs: Vec<f64>,
    pub total: f64,
    /// `md = 2 c_bar total`, equal to `2 c^k p^k` for every resource.
    pub marginal_disutility: f64,
}

/// Which pricing rule a prosumer's cost is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Regulated,
    Unregulated,
}

/// Cost of prosumer `index` when the market clears at `bids`.
pub fn cost_at_bids(
    scenario: &Scenario,
    index: usize,
    bids: &[f64],
    mechanism: Mechanism,
) -> Result<f64> {
    let clearing = clear(scenario, bids)?;
    cost_given_clearing(scenario, index, &clearing, mechanism)
}

pub(crate) fn cost_given_clearing(
    scenario: &Scenario,
    index: usize,
    clearing: &ClearingResult,
    mechanism: Mechanism,
) -> Result<f64> {
    let prosumer = &scenario.prosumers()[index];
    let q = clearing.quantities[index];
    let dispatch = prosumer.split_dispatch(prosumer.demand() - q);
    let price = clearing.prices[index];
    match mechanism {
        Mechanism::Regulated => {
            prosumer.regulated_cost(price, &dispatch, scenario.sensitivity(), scenario.count())
        }
        Mechanism::Unregulated => Ok(prosumer.unregulated_cost(price, &dispatch)),
    }
}

fn clear(scenario: &Scenario, bids: &[f64]) -> Result<ClearingResult> {
    let profile = BidProfile::new(bids.to_vec(), scenario.sensitivity())?;
    clearing::clear_market(scenario.network(), &scenario.buses(), &profile)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub bid: f64,
    /// Traded quantity `y_i` the market will clear at this bid.
    pub net_trade: f64,
    pub dispatch: Dispatch,
}

/// Best bid of prosumer `index` against the other entries of `bids` under the
/// regulated mechanism.
///
/// The prosumer's problem reduces to a single clearing-shaped QP in the
/// traded quantities `y`:
///
/// ```text
///     min  (kappa y_i - 2 a c_bar D)^2 / kappa + sum_{j != i} (y_j - b_j)^2
///     s.t. sum_j y_j = 0,  -F_l <= sum_j pi_jl y_j <= F_l
/// ```
///
/// with `kappa = 2 a c_bar + 1 / (I - 1)`, and the bid that makes the platform
/// clear at `y_i` is `b_i = 2 a c_bar (D - y_i) + (I - 2) / (I - 1) y_i`.
pub fn best_response(scenario: &Scenario, index: usize, bids: &[f64]) -> Result<BestResponse> {
    let count = scenario.count();
    if count < 2 {
        return Err(Error::TooFewProsumers { count });
    }
    if bids.len() != count {
        return Err(Error::DimensionMismatch {
            what: "bids",
            expected: count,
            found: bids.len(),
        });
    }
    if index >= count {
        return Err(Error::InvalidParameter(format!(
            "prosumer {index} out of range"
        )));
    }
    let a = scenario.sensitivity();
    let prosumer = &scenario.prosumers()[index];
    let c_bar = prosumer.aggregate_cost();
    let d = prosumer.demand();
    let others = 1.0 / (count - 1) as f64;
    let kappa = 2.0 * a * c_bar + others;

    let mut hessian = vec![2.0; count];
    let mut linear: Vec<f64> = bids.iter().map(|b| -2.0 * b).collect();
    hessian[index] = 2.0 * kappa;
    linear[index] = -4.0 * a * c_bar * d;

    let network = scenario.network();
    let pi = clearing::prosumer_factors(network, &scenario.buses());
    let lines = network.lines();
    let problem = QpProblem::new(hessian, linear)
        .with_equalities(DMatrix::from_element(1, count, 1.0), vec![0.0])
        .with_ranges(
            pi,
            lines.iter().map(|l| -l.flow_limit).collect(),
            lines.iter().map(|l| l.flow_limit).collect(),
        );
    let solution = qp::solve(&problem)?;
    let y = solution.x[index];
    let bid = 2.0 * a * c_bar * (d - y) + (count as f64 - 2.0) * others * y;
    Ok(BestResponse {
        bid,
        net_trade: y,
        dispatch: prosumer.split_dispatch(d - y),
    })
}

/// Result of a one-dimensional search over a prosumer's own bid.
#[derive(Debug, Clone, PartialEq)]
pub struct BidSearch {
    pub bid: f64,
    pub cost: f64,
    /// Smallest and largest scanned bid whose cost is within `1e-6` of the
    /// minimum; a wide interval means the prosumer is indifferent.
    pub near_optimal: (f64, f64),
}

const SCAN_POINTS: usize = 400;
const SCAN_TOL: f64 = 1e-6;

/// Golden-section minimization of the prosumer's cost over its own bid, each
/// evaluation going through a full market clearing. A coarse scan locates
/// the basin first. Used as an independent check of [`best_response`] and,
/// with [`Mechanism::Unregulated`], to test for profitable deviations.
pub fn search_best_bid(
    scenario: &Scenario,
    index: usize,
    bids: &[f64],
    mechanism: Mechanism,
) -> Result<BidSearch> {
    let count = scenario.count();
    if count < 2 {
        return Err(Error::TooFewProsumers { count });
    }
    let prosumer = &scenario.prosumers()[index];
    let a = scenario.sensitivity();
    let scale = 1.0
        + bids.iter().fold(0.0f64, |m, b| m.max(b.abs()))
        + 2.0 * a * prosumer.aggregate_cost() * prosumer.demand().abs()
        + prosumer.demand().abs()
        + a * scenario.network().max_flow_limit() * scenario.network().max_degree() as f64;
    let centre = bids[index];
    let (lo, hi) = (centre - 4.0 * scale, centre + 4.0 * scale);

    let mut trial = bids.to_vec();
    let mut eval = |b: f64| -> Result<f64> {
        trial[index] = b;
        cost_at_bids(scenario, index, &trial, mechanism)
    };

    let step = (hi - lo) / SCAN_POINTS as f64;
    let grid: Vec<f64> = (0..=SCAN_POINTS).map(|k| lo + step * k as f64).collect();
    let values = grid.iter().map(|b| eval(*b)).collect::<Result<Vec<_>>>()?;
    let mut best_k = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best_k] {
            best_k = k;
        }
    }

    // golden section on the bracket around the best grid point
    let mut left = grid[best_k.saturating_sub(1)];
    let mut right = grid[(best_k + 1).min(SCAN_POINTS)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = right - ratio * (right - left);
    let mut x2 = left + ratio * (right - left);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while right - left > 1e-10 * (1.0 + centre.abs()) {
        if f1 <= f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - ratio * (right - left);
            f1 = eval(x1)?;
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + ratio * (right - left);
            f2 = eval(x2)?;
        }
    }
    let (mut bid, mut cost) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if values[best_k] < cost {
        bid = grid[best_k];
        cost = values[best_k];
    }

    let near: Vec<f64> = grid
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v <= cost + SCAN_TOL)
        .map(|(b, _)| *b)
        .chain(std::iter::once(bid))
        .collect();
    let near_optimal = (
        near.iter().copied().fold(f64::INFINITY, f64::min),
        near.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(BidSearch {
        bid,
        cost,
        near_optimal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_abs_diff_eq;

    #[test]
    fn split_dispatch_examples() {
        let single = Prosumer::new(0, vec![2.5], 3.0).unwrap();
        let d = single.split_dispatch(5.4286);
        assert_eq!(d.outputs, vec![5.4286]);
        assert_abs_diff_eq!(d.marginal_disutility, 27.143, epsilon = 1e-9);

        let twin = Prosumer::new(0, vec![2.0, 2.0], 0.0).unwrap();
        let d = twin.split_dispatch(4.0);
        assert_eq!(d.outputs, vec![2.0, 2.0]);
        assert_abs_diff_eq!(d.marginal_disutility, 8.0, epsilon = 1e-12);

        let d = twin.split_dispatch(0.0);
        assert!(d.outputs.iter().all(|p| *p == 0.0));
        assert_eq!(twin.disutility(&d.outputs), 0.0);
    }

    #[test]
    fn disutility_examples() {
        let single = Prosumer::new(0, vec![2.5], 3.0).unwrap();
        assert_abs_diff_eq!(single.disutility(&[5.4286]), 73.6742, epsilon = 1e-3);

        let mixed = Prosumer::new(0, vec![1.0, 4.0], 5.0).unwrap();
        assert_abs_diff_eq!(mixed.aggregate_cost(), 0.8, epsilon = 1e-12);
        let d = mixed.split_dispatch(5.0);
        assert_abs_diff_eq!(d.outputs[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.outputs[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mixed.disutility(&d.outputs), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn individual_cost_examples() {
        assert_abs_diff_eq!(
            Prosumer::new(0, vec![2.5], 3.0).unwrap().individual_cost(),
            22.5,
            epsilon = 1e-12
        );
        assert_eq!(
            Prosumer::new(0, vec![2.5], 0.0).unwrap().individual_cost(),
            0.0
        );
        assert_abs_diff_eq!(
            Prosumer::new(0, vec![3.5], 7.0).unwrap().individual_cost(),
            171.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn regulated_cost_examples() {
        let p = Prosumer::new(0, vec![2.5], 3.0).unwrap();
        // no trade: cost is the individual cost whatever the price
        let own = p.split_dispatch(3.0);
        assert_abs_diff_eq!(
            p.regulated_cost(-40.0, &own, 1.0, 2).unwrap(),
            22.5,
            epsilon = 1e-12
        );

        // benchmark equilibrium: sells 2.4286 at 29.5714
        let total = 38.0 / 7.0;
        let d = p.split_dispatch(total);
        let price = 6.0 * total - 3.0;
        let gamma = p.regulated_cost(price, &d, 1.0, 2).unwrap();
        // 3610/49 - 3519/49
        assert_abs_diff_eq!(gamma, 91.0 / 49.0, epsilon = 1e-10);
        assert!(gamma <= 22.5);

        // buyer undercutting the floor pays md - q/(a(I-1))
        let buyer = Prosumer::new(0, vec![1.0], 5.0).unwrap();
        let d = buyer.split_dispatch(3.0); // q = 2, md = 6
        let cost = buyer.regulated_cost(1.0, &d, 1.0, 3).unwrap();
        assert_abs_diff_eq!(cost, 9.0 + (6.0 - 1.0) * 2.0, epsilon = 1e-12);

        assert!(p.regulated_cost(1.0, &own, 1.0, 1).is_err());
    }

    #[test]
    fn invalid_prosumers() {
        assert!(Prosumer::new(0, vec![], 1.0).is_err());
        assert!(Prosumer::new(0, vec![1.0, -1.0], 1.0).is_err());
        assert!(Prosumer::new(0, vec![1.0], f64::NAN).is_err());
    }

    #[test]
    fn best_response_benchmark() {
        // stationarity 14 y + 34 = 0
        let s = cases::benchmark(10.0);
        let br = best_response(&s, 0, &[0.0, 32.0]).unwrap();
        assert_abs_diff_eq!(br.net_trade, -34.0 / 14.0, epsilon = 1e-10);
        assert_abs_diff_eq!(br.bid, 27.142857142857, epsilon = 1e-9);
    }

    #[test]
    fn best_response_congested() {
        let s = cases::benchmark(2.0);
        let br = best_response(&s, 0, &[0.0, 35.0]).unwrap();
        assert_abs_diff_eq!(br.net_trade, -2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(br.bid, 25.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_fixed_point_is_self_consistent() {
        let s = cases::symmetric_pair(2.0, 4.0, 10.0);
        let b = 2.0 * 2.0 * 4.0; // 2 a c_bar D with zero trade
        let br = best_response(&s, 0, &[b, b]).unwrap();
        assert_abs_diff_eq!(br.bid, b, epsilon = 1e-10);
        assert_abs_diff_eq!(br.net_trade, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn search_agrees_with_qp_path() {
        let s = cases::benchmark(10.0);
        let bids = [0.0, 32.0];
        let br = best_response(&s, 0, &bids).unwrap();
        let search = search_best_bid(&s, 0, &bids, Mechanism::Regulated).unwrap();
        let mut at_qp = bids.to_vec();
        at_qp[0] = br.bid;
        let qp_cost = cost_at_bids(&s, 0, &at_qp, Mechanism::Regulated).unwrap();
        assert_abs_diff_eq!(search.cost, qp_cost, epsilon = 1e-6);
        assert_abs_diff_eq!(search.bid, br.bid, epsilon = 1e-4);
    }
}
