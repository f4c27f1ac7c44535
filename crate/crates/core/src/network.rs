//! DC network model and power transfer distribution factors.
//!
//! Bus ids are contiguous `0..bus_count`. The PTDF entry `ptdf[(l, n)]` is the
//! flow on line `l` (positive in the `from -> to` direction) caused by injecting
//! one unit at bus `n` and withdrawing it at the slack bus.
//!
//! The market works with withdrawal-positive quantities (`q_i > 0` buys), and
//! the line constraint is written on `sum_i ptdf[(l, bus(i))] * q_i`. That
//! expression is the negated physical flow; since limits are symmetric nothing
//! depends on the sign, and all functions here simply apply the matrix to the
//! vector they are given.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Tolerance used when flagging a line as binding.
pub const BINDING_TOL: f64 = 1e-7;

/// Tolerance on the sum of a balanced injection vector.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series reactance in per unit, strictly positive.
    pub reactance: f64,
    /// Symmetric flow limit `F_l`, strictly positive.
    pub flow_limit: f64,
}

impl Line {
    pub fn new(from: usize, to: usize, reactance: f64, flow_limit: f64) -> Self {
        Line {
            from,
            to,
            reactance,
            flow_limit,
        }
    }
}

/// Immutable DC network with its PTDF matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    bus_count: usize,
    lines: Vec<Line>,
    slack_bus: usize,
    ptdf: DMatrix<f64>,
    max_degree: usize,
}

impl Network {
    /// Builds the network and computes its PTDF matrix with the usual
    /// reduced-susceptance construction.
    pub fn new(bus_count: usize, lines: Vec<Line>, slack_bus: usize) -> Result<Self> {
        if bus_count == 0 {
            return Err(Error::InvalidNetwork("network has no buses".into()));
        }
        if slack_bus >= bus_count {
            return Err(Error::InvalidNetwork(format!(
                "slack bus {slack_bus} out of range 0..{bus_count}"
            )));
        }
        for (l, line) in lines.iter().enumerate() {
            if line.from >= bus_count || line.to >= bus_count {
                return Err(Error::InvalidNetwork(format!(
                    "line {l} references a bus outside 0..{bus_count}"
                )));
            }
            if line.from == line.to {
                return Err(Error::InvalidNetwork(format!("line {l} is a self-loop")));
            }
            if !(line.reactance > 0.0 && line.reactance.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "line {l} has non-positive reactance {}",
                    line.reactance
                )));
            }
            if !(line.flow_limit > 0.0 && line.flow_limit.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "line {l} has non-positive flow limit {}",
                    line.flow_limit
                )));
            }
        }
        check_connected(bus_count, &lines)?;

        let ptdf = compute_ptdf(bus_count, &lines, slack_bus)?;
        let mut degree = vec![0usize; bus_count];
        for line in &lines {
            degree[line.from] += 1;
            degree[line.to] += 1;
        }
        let max_degree = degree.into_iter().max().unwrap_or(0);

        Ok(Network {
            bus_count,
            lines,
            slack_bus,
            ptdf,
            max_degree,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn slack_bus(&self) -> usize {
        self.slack_bus
    }

    /// `L x V` matrix of distribution factors.
    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    pub fn factor(&self, line: usize, bus: usize) -> f64 {
        self.ptdf[(line, bus)]
    }

    /// Maximum vertex degree `G^D`.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Largest flow limit `F^` over all lines (zero for a line-free network).
    pub fn max_flow_limit(&self) -> f64 {
        self.lines.iter().map(|l| l.flow_limit).fold(0.0, f64::max)
    }

    /// Copy of the network with every flow limit replaced by `f(line)`.
    pub fn with_flow_limits(&self, f: impl Fn(usize, &Line) -> f64) -> Result<Network> {
        let lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(l, line)| Line {
                flow_limit: f(l, line),
                ..*line
            })
            .collect();
        Network::new(self.bus_count, lines, self.slack_bus)
    }

    /// Line quantities `ptdf * injections` for a balanced per-bus vector.
    pub fn line_flows(&self, injections: &[f64]) -> Result<Vec<f64>> {
        if injections.len() != self.bus_count {
            return Err(Error::DimensionMismatch {
                what: "injections",
                expected: self.bus_count,
                found: injections.len(),
            });
        }
        let sum: f64 = injections.iter().sum();
        if sum.abs() > BALANCE_TOL {
            return Err(Error::UnbalancedInjections { sum });
        }
        Ok(self.apply_ptdf(injections))
    }

    /// Per-line report of flows against limits. Never fails; a vector of the
    /// wrong length is padded or truncated with zeros.
    pub fn check_flow_limits(&self, injections: &[f64]) -> Vec<LineFlowStatus> {
        let mut padded = injections.to_vec();
        padded.resize(self.bus_count, 0.0);
        let flows = self.apply_ptdf(&padded);
        flows
            .into_iter()
            .zip(&self.lines)
            .map(|(flow, line)| LineFlowStatus::new(flow, line.flow_limit))
            .collect()
    }

    fn apply_ptdf(&self, injections: &[f64]) -> Vec<f64> {
        (0..self.lines.len())
            .map(|l| {
                injections
                    .iter()
                    .enumerate()
                    .map(|(n, v)| self.ptdf[(l, n)] * v)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFlowStatus {
    pub flow: f64,
    pub limit: f64,
    /// `flow + limit`; negative when the lower bound is violated.
    pub lower_slack: f64,
    /// `limit - flow`; negative when the upper bound is violated.
    pub upper_slack: f64,
    pub at_lower: bool,
    pub at_upper: bool,
}

impl LineFlowStatus {
    fn new(flow: f64, limit: f64) -> Self {
        let lower_slack = flow + limit;
        let upper_slack = limit - flow;
        LineFlowStatus {
            flow,
            limit,
            lower_slack,
            upper_slack,
            at_lower: lower_slack.abs() <= BINDING_TOL,
            at_upper: upper_slack.abs() <= BINDING_TOL,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.lower_slack >= -BINDING_TOL && self.upper_slack >= -BINDING_TOL
    }

    pub fn is_binding(&self) -> bool {
        self.at_lower || self.at_upper
    }

    /// Amount by which the limit is exceeded, zero if feasible.
    pub fn violation(&self) -> f64 {
        (-self.lower_slack).max(-self.upper_slack).max(0.0)
    }
}

fn check_connected(bus_count: usize, lines: &[Line]) -> Result<()> {
    let mut adjacency = vec![Vec::new(); bus_count];
    for line in lines {
        adjacency[line.from].push(line.to);
        adjacency[line.to].push(line.from);
    }
    let mut seen = vec![false; bus_count];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(bus) = queue.pop_front() {
        for &next in &adjacency[bus] {
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(bus) => Err(Error::Disconnected { bus }),
        None => Ok(()),
    }
}

fn compute_ptdf(bus_count: usize, lines: &[Line], slack_bus: usize) -> Result<DMatrix<f64>> {
    let mut ptdf = DMatrix::zeros(lines.len(), bus_count);
    if bus_count == 1 {
        return Ok(ptdf);
    }
    // reduced index: bus -> row of the reduced susceptance matrix
    let reduced: Vec<Option<usize>> = (0..bus_count)
        .map(|n| match n.cmp(&slack_bus) {
            std::cmp::Ordering::Less => Some(n),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(n - 1),
        })
        .collect();
    let size = bus_count - 1;
    let mut b_red = DMatrix::<f64>::zeros(size, size);
    for line in lines {
        let y = 1.0 / line.reactance;
        let (f, t) = (reduced[line.from], reduced[line.to]);
        if let Some(f) = f {
            b_red[(f, f)] += y;
        }
        if let Some(t) = t {
            b_red[(t, t)] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b_red[(f, t)] -= y;
            b_red[(t, f)] -= y;
        }
    }
    let b_inv = b_red
        .cholesky()
        .ok_or(Error::SingularSusceptance)?
        .inverse();

    for (l, line) in lines.iter().enumerate() {
        let y = 1.0 / line.reactance;
        for n in 0..bus_count {
            let Some(col) = reduced[n] else { continue };
            let from = reduced[line.from].map_or(0.0, |r| b_inv[(r, col)]);
            let to = reduced[line.to].map_or(0.0, |r| b_inv[(r, col)]);
            ptdf[(l, n)] = y * (from - to);
        }
    }
    Ok(ptdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_bus(limit: f64) -> Network {
        Network::new(2, vec![Line::new(0, 1, 1.0, limit)], 1).unwrap()
    }

    fn triangle(slack: usize) -> Network {
        Network::new(
            3,
            vec![
                Line::new(0, 1, 1.0, 5.0),
                Line::new(1, 2, 1.0, 5.0),
                Line::new(0, 2, 1.0, 5.0),
            ],
            slack,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_ptdf_is_indicator_of_non_slack_bus() {
        let net = two_bus(10.0);
        assert_eq!(net.factor(0, 0), 1.0);
        assert_eq!(net.factor(0, 1), 0.0);
        assert_eq!(net.max_degree(), 1);
    }

    #[test]
    fn triangle_ptdf_matches_hand_solution() {
        // reduced B = [[2,-1],[-1,2]], inverse = [[2,1],[1,2]]/3
        let net = triangle(2);
        assert_abs_diff_eq!(net.factor(0, 0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(net.factor(0, 1), -1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(net.factor(2, 0), 2.0 / 3.0, epsilon = 1e-12);
        for l in 0..3 {
            assert_eq!(net.factor(l, 2), 0.0);
        }
    }

    #[test]
    fn flows() {
        let net = two_bus(10.0);
        assert_eq!(net.line_flows(&[0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(net.line_flows(&[-2.0, 2.0]).unwrap(), vec![-2.0]);

        let tri = triangle(0);
        let f = tri.line_flows(&[1.0, -1.0, 0.0]).unwrap();
        // KVL around 0 -> 1 -> 2 -> 0 with equal reactances
        assert_abs_diff_eq!(f[0] + f[1] - f[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_injections_rejected() {
        let net = two_bus(10.0);
        assert!(matches!(
            net.line_flows(&[1.0, 0.0]),
            Err(Error::UnbalancedInjections { .. })
        ));
        assert!(matches!(
            net.line_flows(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flow_limit_report() {
        let net = two_bus(2.0);
        let zero = net.check_flow_limits(&[0.0, 0.0]);
        assert!(zero[0].is_feasible() && !zero[0].is_binding());

        let bind = net.check_flow_limits(&[-2.0, 2.0]);
        assert!(bind[0].at_lower && !bind[0].at_upper && bind[0].is_feasible());

        let over = net.check_flow_limits(&[-5.0, 5.0]);
        assert!(!over[0].is_feasible());
        assert_abs_diff_eq!(over[0].violation(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn construction_errors() {
        let disconnected = Network::new(3, vec![Line::new(0, 1, 1.0, 1.0)], 0);
        assert!(matches!(disconnected, Err(Error::Disconnected { bus: 2 })));
        let zero_x = Network::new(2, vec![Line::new(0, 1, 0.0, 1.0)], 0);
        assert!(matches!(zero_x, Err(Error::InvalidNetwork(_))));
        let bad_slack = Network::new(2, vec![Line::new(0, 1, 1.0, 1.0)], 2);
        assert!(matches!(bad_slack, Err(Error::InvalidNetwork(_))));
        let self_loop = Network::new(2, vec![Line::new(1, 1, 1.0, 1.0)], 0);
        assert!(matches!(self_loop, Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn row_difference_property() {
        let net = triangle(1);
        let mut inj = vec![0.0; 3];
        inj[0] = 1.0;
        inj[2] = -1.0;
        let f = net.line_flows(&inj).unwrap();
        for (l, flow) in f.iter().enumerate() {
            assert_abs_diff_eq!(*flow, net.factor(l, 0) - net.factor(l, 2), epsilon = 1e-12);
        }
    }
}
