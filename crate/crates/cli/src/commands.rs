use energy_sharing::clearing::{
    clear_market, prosumer_factors, regulate_prices, settle, BidProfile,
};
use energy_sharing::equilibrium::{
    best_response_dynamics, count_sweep, equal_partition, flow_sweep, solve_gne,
    solve_social_optimum, verify_equilibrium, CountSweepConfig, DynamicsOptions, Scenario,
    UpdateMode,
};
use energy_sharing::qp::QpError;
use serde_json::{json, Map, Value};

use crate::scenario::SweepSection;
use crate::table::{Cell, Table};

/// Why a command failed, mapped one-to-one onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Infeasible(String),
    Solver(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Infeasible(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<energy_sharing::Error> for Failure {
    fn from(e: energy_sharing::Error) -> Self {
        use energy_sharing::Error as E;
        let message = e.to_string();
        let mut cause = &e;
        while let E::Dynamics { source, .. } = cause {
            cause = source;
        }
        match cause {
            E::Qp(QpError::Infeasible { .. }) | E::DrawsExhausted { .. } => {
                Failure::Infeasible(message)
            }
            E::Qp(_) => Failure::Solver(message),
            _ => Failure::Usage(message),
        }
    }
}

pub struct Output {
    pub table: Table,
    /// Extra `key=value` pairs for the comment line.
    pub provenance: Vec<(String, String)>,
    pub iterations: usize,
    pub notes: Map<String, Value>,
}

impl Output {
    fn new(table: Table, iterations: usize) -> Self {
        Output {
            table,
            provenance: Vec::new(),
            iterations,
            notes: Map::new(),
        }
    }
}

fn line_values(scenario: &Scenario, trades: &[f64]) -> Vec<f64> {
    let pi = prosumer_factors(scenario.network(), &scenario.buses());
    (0..scenario.network().line_count())
        .map(|l| (0..trades.len()).map(|i| pi[(l, i)] * trades[i]).sum())
        .collect()
}

pub fn clear(scenario: &Scenario, bids: &[f64]) -> Result<Output, Failure> {
    let a = scenario.sensitivity();
    let buses = scenario.buses();
    let cleared = clear_market(
        scenario.network(),
        &buses,
        &BidProfile::new(bids.to_vec(), a)?,
    )?;
    let md: Vec<f64> = scenario
        .prosumers()
        .iter()
        .zip(&cleared.quantities)
        .map(|(p, q)| p.split_dispatch(p.demand() - q).marginal_disutility)
        .collect();
    let regulated = regulate_prices(&cleared, &md, a, scenario.count())?;
    let settlement = settle(&regulated, &cleared);

    let mut table = Table::new([
        "kind",
        "index",
        "bus",
        "bid",
        "price",
        "regulated_price",
        "quantity",
        "payment",
        "flow",
        "flow_limit",
        "alpha_lower",
        "alpha_upper",
        "binding",
        "eta",
    ]);
    for i in 0..scenario.count() {
        table.push_named(vec![
            ("kind", "prosumer".into()),
            ("index", i.into()),
            ("bus", buses[i].into()),
            ("bid", bids[i].into()),
            ("price", cleared.prices[i].into()),
            ("regulated_price", regulated.prices[i].into()),
            ("quantity", cleared.quantities[i].into()),
            ("payment", settlement.costs[i].into()),
        ]);
    }
    for (l, line) in scenario.network().lines().iter().enumerate() {
        table.push_named(vec![
            ("kind", "line".into()),
            ("index", l.into()),
            ("flow", cleared.flows[l].into()),
            ("flow_limit", line.flow_limit.into()),
            ("alpha_lower", cleared.alpha_lower[l].into()),
            ("alpha_upper", cleared.alpha_upper[l].into()),
            ("binding", cleared.binding_lines.contains(&l).into()),
        ]);
    }
    table.push_named(vec![
        ("kind", "total".into()),
        ("payment", settlement.revenue.into()),
        ("eta", cleared.eta.into()),
    ]);
    Ok(Output::new(table, cleared.iterations))
}

pub fn gne(scenario: &Scenario) -> Result<Output, Failure> {
    let gne = solve_gne(scenario)?;
    let mut table = Table::new([
        "kind",
        "index",
        "bus",
        "demand",
        "output",
        "net_trade",
        "bid",
        "price",
        "cost",
        "baseline",
        "flow",
        "flow_limit",
        "tau_lower",
        "tau_upper",
        "total_disutility",
        "kappa",
        "revenue",
    ]);
    for (i, p) in scenario.prosumers().iter().enumerate() {
        table.push_named(vec![
            ("kind", "prosumer".into()),
            ("index", i.into()),
            ("bus", p.bus().into()),
            ("demand", p.demand().into()),
            ("output", gne.dispatch[i].total.into()),
            ("net_trade", gne.net_trades[i].into()),
            ("bid", gne.bids[i].into()),
            ("price", gne.prices[i].into()),
            ("cost", gne.costs[i].into()),
            ("baseline", p.individual_cost().into()),
        ]);
    }
    let flows = line_values(scenario, &gne.net_trades);
    for (l, line) in scenario.network().lines().iter().enumerate() {
        table.push_named(vec![
            ("kind", "line".into()),
            ("index", l.into()),
            ("flow", flows[l].into()),
            ("flow_limit", line.flow_limit.into()),
            ("tau_lower", gne.tau_lower[l].into()),
            ("tau_upper", gne.tau_upper[l].into()),
        ]);
    }
    table.push_named(vec![
        ("kind", "total".into()),
        ("cost", gne.costs.iter().sum::<f64>().into()),
        ("total_disutility", gne.total_disutility.into()),
        ("kappa", gne.kappa.into()),
        ("revenue", gne.platform_revenue.into()),
    ]);
    Ok(Output::new(table, gne.iterations))
}

pub fn sco(scenario: &Scenario) -> Result<Output, Failure> {
    let sco = solve_social_optimum(scenario)?;
    let mut table = Table::new([
        "kind",
        "index",
        "bus",
        "demand",
        "output",
        "net_trade",
        "price",
        "disutility",
        "flow",
        "flow_limit",
        "tau_lower",
        "tau_upper",
        "total_disutility",
        "kappa",
    ]);
    let trades: Vec<f64> = scenario
        .prosumers()
        .iter()
        .zip(&sco.dispatch)
        .map(|(p, d)| p.demand() - d.total)
        .collect();
    for (i, p) in scenario.prosumers().iter().enumerate() {
        let d = &sco.dispatch[i];
        table.push_named(vec![
            ("kind", "prosumer".into()),
            ("index", i.into()),
            ("bus", p.bus().into()),
            ("demand", p.demand().into()),
            ("output", d.total.into()),
            ("net_trade", trades[i].into()),
            ("price", sco.prices[i].into()),
            ("disutility", p.disutility(&d.outputs).into()),
        ]);
    }
    let flows = line_values(scenario, &trades);
    for (l, line) in scenario.network().lines().iter().enumerate() {
        table.push_named(vec![
            ("kind", "line".into()),
            ("index", l.into()),
            ("flow", flows[l].into()),
            ("flow_limit", line.flow_limit.into()),
            ("tau_lower", sco.tau_lower[l].into()),
            ("tau_upper", sco.tau_upper[l].into()),
        ]);
    }
    table.push_named(vec![
        ("kind", "total".into()),
        ("total_disutility", sco.total_disutility.into()),
        ("kappa", sco.kappa.into()),
    ]);
    Ok(Output::new(table, sco.iterations))
}

pub fn brd(
    scenario: &Scenario,
    initial: &[f64],
    options: &DynamicsOptions,
) -> Result<Output, Failure> {
    let out = best_response_dynamics(scenario, initial, options)?;
    let mut columns = vec!["round".to_string(), "change".to_string()];
    columns.extend((0..scenario.count()).map(|i| format!("bid_{i}")));
    let mut table = Table::new(columns);
    for (round, bids) in out.trajectory.iter().enumerate() {
        let change = if round == 0 {
            Cell::Empty
        } else {
            let previous = &out.trajectory[round - 1];
            bids.iter()
                .zip(previous)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                .into()
        };
        let mut row = vec![round.into(), change];
        row.extend(bids.iter().map(|b| Cell::Num(*b)));
        table.push(row);
    }
    let mode = match options.mode {
        UpdateMode::Sequential => "sequential",
        UpdateMode::Simultaneous => "simultaneous",
    };
    let mut output = Output::new(table, out.rounds);
    output.provenance.push(("mode".into(), mode.into()));
    output
        .notes
        .insert("converged".into(), json!(out.converged));
    output.notes.insert("rounds".into(), json!(out.rounds));
    output
        .notes
        .insert("last_change".into(), json!(out.last_change));
    Ok(output)
}

pub fn sweep_flow(scenario: &Scenario, limits: &[f64]) -> Result<Output, Failure> {
    let rows = flow_sweep(scenario, limits)?;
    let count = scenario.count();
    let mut columns: Vec<String> = [
        "flow_limit",
        "social_cost",
        "market_cost",
        "relative_diff",
        "market_variance",
        "social_variance",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend((0..count).map(|i| format!("market_price_{i}")));
    columns.extend((0..count).map(|i| format!("social_price_{i}")));
    let mut table = Table::new(columns);
    for r in rows {
        let mut row: Vec<Cell> = vec![
            r.flow_limit.into(),
            r.social_cost.into(),
            r.market_cost.into(),
            r.relative_diff.into(),
            r.market_variance.into(),
            r.social_variance.into(),
        ];
        row.extend(r.market_prices.iter().map(|p| Cell::Num(*p)));
        row.extend(r.social_prices.iter().map(|p| Cell::Num(*p)));
        table.push(row);
    }
    Ok(Output::new(table, 0))
}

pub fn sweep_count(
    scenario: &Scenario,
    counts: &[usize],
    seed: u64,
    sweep: &SweepSection,
) -> Result<Output, Failure> {
    let ranges = sweep.ranges();
    let config = CountSweepConfig {
        seed,
        scenarios_per_count: sweep.scenarios_per_count.unwrap_or(10),
        ranges,
        ..Default::default()
    };
    let rows = count_sweep(scenario, counts, &config)?;
    let mut table = Table::new([
        "count",
        "mean_gap",
        "min_gap",
        "max_gap",
        "mean_relative_gap",
        "gap_bound",
        "redraws",
    ]);
    let mut redraws = 0;
    for r in &rows {
        redraws += r.redraws;
        table.push(vec![
            r.count.into(),
            r.mean_gap.into(),
            r.min_gap.into(),
            r.max_gap.into(),
            r.mean_relative_gap.into(),
            r.gap_bound.into(),
            r.redraws.into(),
        ]);
    }
    let mut output = Output::new(table, 0);
    output.provenance.extend([
        (
            "scenarios_per_count".into(),
            config.scenarios_per_count.to_string(),
        ),
        ("resources".into(), ranges.resources.to_string()),
        (
            "cost_range".into(),
            format!("{}:{}", ranges.cost.0, ranges.cost.1),
        ),
        (
            "demand_range".into(),
            format!("{}:{}", ranges.demand.0, ranges.demand.1),
        ),
    ]);
    output.notes.insert("redraws".into(), json!(redraws));
    Ok(output)
}

pub fn partition(scenario: &Scenario, blocks: &[usize]) -> Result<Output, Failure> {
    let gne = solve_gne(scenario)?;
    let mut iterations = gne.iterations;
    let mut table = Table::new(["blocks", "prosumers", "before", "after", "difference"]);
    for &m in blocks {
        let split = equal_partition(scenario, &gne, m)?;
        let after = solve_gne(&split)?;
        iterations += after.iterations;
        table.push(vec![
            m.into(),
            split.count().into(),
            gne.total_disutility.into(),
            after.total_disutility.into(),
            (after.total_disutility - gne.total_disutility).into(),
        ]);
    }
    Ok(Output::new(table, iterations))
}

/// Block counts that divide every prosumer's resource count.
pub fn default_blocks(scenario: &Scenario) -> Vec<usize> {
    let common = scenario
        .prosumers()
        .iter()
        .map(|p| p.resource_count())
        .fold(0, gcd);
    (1..=common).filter(|m| common % m == 0).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn verify(scenario: &Scenario) -> Result<Output, Failure> {
    let gne = solve_gne(scenario)?;
    let d = verify_equilibrium(&gne, scenario)?;
    let mut table = Table::new(["check", "index", "value", "bound", "pass"]);
    for (i, p) in d.pareto.iter().enumerate() {
        table.push(vec![
            "pareto".into(),
            i.into(),
            p.cost.into(),
            p.baseline.into(),
            p.holds().into(),
        ]);
    }
    let mut scalar = |name: &str, value: f64, bound: f64, pass: bool| {
        table.push(vec![
            name.into(),
            Cell::Empty,
            value.into(),
            bound.into(),
            pass.into(),
        ]);
    };
    scalar(
        "decomposition_residual",
        d.decomposition_residual,
        1e-6,
        d.decomposition_residual <= 1e-6,
    );
    scalar(
        "reclearing_residual",
        d.reclearing_residual,
        1e-6,
        d.reclearing_residual <= 1e-6,
    );
    scalar(
        "regulation_residual",
        d.regulation_residual,
        1e-6,
        d.regulation_residual <= 1e-6,
    );
    scalar(
        "split_residual",
        d.split_residual,
        1e-8,
        d.split_residual <= 1e-8,
    );
    scalar("revenue", d.revenue, -1e-7, d.revenue >= -1e-7);
    scalar(
        "revenue_identity",
        d.revenue_residual(),
        1e-6,
        d.revenue_residual() <= 1e-6,
    );
    scalar(
        "per_capita_gap",
        d.per_capita_gap,
        d.gap_bound,
        d.per_capita_gap >= -1e-7 && d.per_capita_gap <= d.gap_bound + 1e-7,
    );
    Ok(Output::new(table, gne.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use energy_sharing::qp::ConstraintId;
    use energy_sharing::Error;

    #[test]
    fn exit_codes() {
        let infeasible = Error::Qp(QpError::Infeasible {
            certificate: Some(ConstraintId::Range(0)),
        });
        let f = Failure::from(infeasible);
        assert_eq!(f.exit_code(), 2);
        assert!(f.message().contains("range constraint 0"));
        let nested = Error::Dynamics {
            round: 3,
            source: Box::new(Error::Qp(QpError::IterationLimit { limit: 10 })),
        };
        assert_eq!(Failure::from(nested).exit_code(), 3);
        assert_eq!(
            Failure::from(Error::DrawsExhausted { attempts: 5 }).exit_code(),
            2
        );
        assert_eq!(
            Failure::from(Error::TooFewProsumers { count: 1 }).exit_code(),
            1
        );
    }

    #[test]
    fn blocks_divide_every_prosumer() {
        let s = energy_sharing::cases::benchmark(10.0);
        assert_eq!(default_blocks(&s), vec![1]);
    }
}
