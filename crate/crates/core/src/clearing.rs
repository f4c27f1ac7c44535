//! The sharing platform: clearing, price regulation and settlement.
//!
//! Given bids `b` and the price sensitivity `a`, the platform solves
//!
//! ```text
//!     min (1/I) sum_i lambda_i^2
//!     s.t. sum_i (-a lambda_i + b_i) = 0                          : eta
//!          -F_l <= sum_i pi_il (-a lambda_i + b_i) <= F_l         : alpha_l^-, alpha_l^+
//! ```
//!
//! Minimizing the sum of squares is equivalent to minimizing the price
//! variance, because the balance constraint fixes the mean price.

use nalgebra::DMatrix;

use crate::network::{Network, BINDING_TOL};
use crate::qp::{self, QpProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    pub bids: Vec<f64>,
    /// Price sensitivity factor `a > 0`.
    pub sensitivity: f64,
}

impl BidProfile {
    pub fn new(bids: Vec<f64>, sensitivity: f64) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "price sensitivity must be positive, got {sensitivity}"
            )));
        }
        if bids.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("bids must be finite".into()));
        }
        Ok(BidProfile { bids, sensitivity })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    pub prices: Vec<f64>,
    /// `q_i = -a lambda_i + b_i`, positive for buyers.
    pub quantities: Vec<f64>,
    /// Balance multiplier `eta`.
    pub eta: f64,
    pub alpha_lower: Vec<f64>,
    pub alpha_upper: Vec<f64>,
    /// `sum_i pi_il q_i` for every line.
    pub flows: Vec<f64>,
    pub binding_lines: Vec<usize>,
    pub iterations: usize,
}

/// PTDF columns of the prosumers' buses: an `L x I` matrix.
pub fn prosumer_factors(network: &Network, buses: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(network.line_count(), buses.len(), |l, i| {
        network.factor(l, buses[i])
    })
}

pub(crate) fn check_buses(network: &Network, buses: &[usize]) -> Result<()> {
    match buses.iter().find(|b| **b >= network.bus_count()) {
        Some(b) => Err(Error::InvalidParameter(format!(
            "prosumer bus {b} is not in the network (0..{})",
            network.bus_count()
        ))),
        None => Ok(()),
    }
}

pub fn clear_market(
    network: &Network,
    buses: &[usize],
    profile: &BidProfile,
) -> Result<ClearingResult> {
    let count = buses.len();
    if profile.bids.len() != count {
        return Err(Error::DimensionMismatch {
            what: "bids",
            expected: count,
            found: profile.bids.len(),
        });
    }
    if count == 0 {
        return Err(Error::TooFewProsumers { count });
    }
    check_buses(network, buses)?;
    let a = profile.sensitivity;
    let b = &profile.bids;
    let pi = prosumer_factors(network, buses);
    let lines = network.lines();

    let mut rows = DMatrix::zeros(lines.len(), count);
    let mut lower = Vec::with_capacity(lines.len());
    let mut upper = Vec::with_capacity(lines.len());
    for (l, line) in lines.iter().enumerate() {
        let pb: f64 = (0..count).map(|i| pi[(l, i)] * b[i]).sum();
        for i in 0..count {
            rows[(l, i)] = -a * pi[(l, i)];
        }
        lower.push(-line.flow_limit - pb);
        upper.push(line.flow_limit - pb);
    }
    let problem = QpProblem::new(vec![2.0 / count as f64; count], vec![0.0; count])
        .with_equalities(DMatrix::from_element(1, count, a), vec![b.iter().sum()])
        .with_ranges(rows, lower, upper);
    let solution = qp::solve(&problem)?;

    let prices = solution.x;
    let quantities: Vec<f64> = prices.iter().zip(b).map(|(l, bi)| -a * l + bi).collect();
    let flows: Vec<f64> = (0..lines.len())
        .map(|l| (0..count).map(|i| pi[(l, i)] * quantities[i]).sum())
        .collect();
    let binding_lines = flows
        .iter()
        .zip(lines)
        .enumerate()
        .filter(|(_, (f, line))| line.flow_limit - f.abs() <= BINDING_TOL)
        .map(|(l, _)| l)
        .collect();

    Ok(ClearingResult {
        prices,
        quantities,
        eta: solution.eq_duals[0],
        alpha_lower: solution.lower_duals,
        alpha_upper: solution.upper_duals,
        flows,
        binding_lines,
        iterations: solution.iterations,
    })
}

impl ClearingResult {
    /// Largest residual of the clearing stationarity condition
    /// `(2/I) lambda_i + a eta + a sum_l pi_il (alpha_l^- - alpha_l^+) = 0`.
    pub fn stationarity_residual(
        &self,
        network: &Network,
        buses: &[usize],
        sensitivity: f64,
    ) -> f64 {
        let count = self.prices.len();
        let pi = prosumer_factors(network, buses);
        (0..count)
            .map(|i| {
                let congestion: f64 = (0..network.line_count())
                    .map(|l| pi[(l, i)] * (self.alpha_lower[l] - self.alpha_upper[l]))
                    .sum();
                (2.0 / count as f64 * self.prices[i]
                    + sensitivity * self.eta
                    + sensitivity * congestion)
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatedPrices {
    pub prices: Vec<f64>,
}

/// Caps the gap between each prosumer's price and its marginal disutility:
/// buyers pay at least `md_i - q_i / (a (I - 1))`, sellers receive at most that.
/// At `q_i = 0` the buyer branch is used; the payment is zero either way.
pub fn regulate_prices(
    clearing: &ClearingResult,
    marginal_disutility: &[f64],
    sensitivity: f64,
    count: usize,
) -> Result<RegulatedPrices> {
    if count < 2 {
        return Err(Error::TooFewProsumers { count });
    }
    if marginal_disutility.len() != clearing.prices.len() {
        return Err(Error::DimensionMismatch {
            what: "marginal disutility",
            expected: clearing.prices.len(),
            found: marginal_disutility.len(),
        });
    }
    let scale = sensitivity * (count - 1) as f64;
    let prices = clearing
        .prices
        .iter()
        .zip(&clearing.quantities)
        .zip(marginal_disutility)
        .map(|((&price, &q), &md)| regulated_price(price, q, md, scale))
        .collect();
    Ok(RegulatedPrices { prices })
}

pub(crate) fn regulated_price(price: f64, q: f64, md: f64, scale: f64) -> f64 {
    let cap = md - q / scale;
    if q >= 0.0 {
        price.max(cap)
    } else {
        price.min(cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settlement {
    /// `s_i = lambda_i^c q_i`; positive means prosumer `i` pays.
    pub costs: Vec<f64>,
    /// Sum of all payments, collected by the platform.
    pub revenue: f64,
}

pub fn settle(regulated: &RegulatedPrices, clearing: &ClearingResult) -> Settlement {
    let costs: Vec<f64> = regulated
        .prices
        .iter()
        .zip(&clearing.quantities)
        .map(|(p, q)| p * q)
        .collect();
    let revenue = costs.iter().sum();
    Settlement { costs, revenue }
}

/// `sum_l F_l (tau_l^- + tau_l^+)`.
pub fn congestion_rent(network: &Network, tau_lower: &[f64], tau_upper: &[f64]) -> f64 {
    network
        .lines()
        .iter()
        .zip(tau_lower.iter().zip(tau_upper))
        .map(|(line, (lo, hi))| line.flow_limit * (lo + hi))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Line;
    use approx::assert_abs_diff_eq;

    fn two_bus(limit: f64) -> Network {
        Network::new(2, vec![Line::new(0, 1, 1.0, limit)], 1).unwrap()
    }

    fn clear(limit: f64, bids: &[f64]) -> ClearingResult {
        let profile = BidProfile::new(bids.to_vec(), 1.0).unwrap();
        clear_market(&two_bus(limit), &[0, 1], &profile).unwrap()
    }

    #[test]
    fn uncongested_midpoint() {
        let r = clear(10.0, &[27.143, 32.0]);
        assert_abs_diff_eq!(r.prices[0], 29.5715, epsilon = 1e-9);
        assert_abs_diff_eq!(r.prices[1], 29.5715, epsilon = 1e-9);
        assert_abs_diff_eq!(r.quantities[0], -2.4285, epsilon = 1e-9);
        assert_abs_diff_eq!(r.quantities[1], 2.4285, epsilon = 1e-9);
        assert!(r.binding_lines.is_empty());
    }

    #[test]
    fn congested_two_bus() {
        // lambda_1 limited to [23, 27] by the line
        let r = clear(2.0, &[25.0, 35.0]);
        assert_abs_diff_eq!(r.prices[0], 27.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.prices[1], 33.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.quantities[0], -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.eta, -33.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.alpha_lower[0], 6.0, epsilon = 1e-9);
        assert_eq!(r.alpha_upper[0], 0.0);
        assert_eq!(r.binding_lines, vec![0]);
        let net = two_bus(2.0);
        assert!(r.stationarity_residual(&net, &[0, 1], 1.0) < 1e-9);
    }

    #[test]
    fn symmetric_bids_do_not_trade() {
        let r = clear(10.0, &[10.0, 10.0]);
        assert_abs_diff_eq!(r.prices[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.quantities[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn regulation_branches() {
        let clearing = ClearingResult {
            prices: vec![5.0, 20.0, 7.0],
            quantities: vec![0.0, 1.0, -2.0],
            eta: 0.0,
            alpha_lower: vec![],
            alpha_upper: vec![],
            flows: vec![],
            binding_lines: vec![],
            iterations: 0,
        };
        // a = 1, I = 3 -> scale 2
        let r = regulate_prices(&clearing, &[8.0, 30.0, 4.0], 1.0, 3).unwrap();
        assert_eq!(r.prices[0], 8.0); // q = 0: max(lambda, md)
        assert_eq!(r.prices[1], 29.5); // buyer lifted to md - q/2
        assert_eq!(r.prices[2], 5.0); // seller: min(7, 4 + 1)
        assert!(matches!(
            regulate_prices(&clearing, &[0.0; 3], 1.0, 1),
            Err(Error::TooFewProsumers { count: 1 })
        ));
    }

    #[test]
    fn settlement_of_congested_outcome() {
        let r = clear(2.0, &[25.0, 35.0]);
        let regulated = RegulatedPrices {
            prices: r.prices.clone(),
        };
        let s = settle(&regulated, &r);
        assert_abs_diff_eq!(s.costs[0], -54.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.costs[1], 66.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.revenue, 12.0, epsilon = 1e-9);
        let rent = congestion_rent(&two_bus(2.0), &[6.0], &[0.0]);
        assert_abs_diff_eq!(rent, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_trade_settles_to_zero() {
        let r = clear(10.0, &[4.0, 4.0]);
        let s = settle(
            &RegulatedPrices {
                prices: r.prices.clone(),
            },
            &r,
        );
        assert!(s.costs.iter().all(|c| c.abs() < 1e-12));
        assert!(s.revenue.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BidProfile::new(vec![1.0], 0.0).is_err());
        let profile = BidProfile::new(vec![1.0, 2.0], 1.0).unwrap();
        assert!(clear_market(&two_bus(1.0), &[0], &profile).is_err());
        assert!(clear_market(&two_bus(1.0), &[0, 5], &profile).is_err());
    }
}
