//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! sensitivity = 1.0          # price sensitivity a
//! bids = [27.143, 32.0]      # optional, used by `clear`
//!
//! [network]
//! buses = 2
//! slack = 1                  # default 0
//!
//! [[network.lines]]
//! from = 0
//! to = 1
//! reactance = 1.0            # default 1.0
//! flow_limit = 10.0
//!
//! [[prosumers]]
//! bus = 0
//! costs = [2.5]
//! demand = 3.0
//!
//! [sweep]                    # optional, every key optional
//! flow_limits = [1.0, 2.0]   # or flow_grid = { start = 1.0, stop = 3.5, step = 0.25 }
//! counts = [2, 5, 10]
//! blocks = [1, 2]
//! seed = 7
//! scenarios_per_count = 10
//! resources = 1
//! cost_range = [1.0, 5.0]
//! demand_range = [-5.0, 12.0]
//! ```
//!
//! Unknown keys are rejected.

use std::fmt;

use energy_sharing::equilibrium::{DrawRanges, Scenario};
use energy_sharing::network::{Line, Network};
use energy_sharing::prosumer::Prosumer;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sensitivity: f64,
    pub bids: Option<Vec<f64>>,
    pub network: NetworkSection,
    pub prosumers: Vec<ProsumerSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub buses: usize,
    #[serde(default)]
    pub slack: usize,
    pub lines: Vec<LineSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSection {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit_reactance")]
    pub reactance: f64,
    pub flow_limit: f64,
}

fn unit_reactance() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerSection {
    pub bus: usize,
    pub costs: Vec<f64>,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub flow_limits: Option<Vec<f64>>,
    pub flow_grid: Option<Grid>,
    pub counts: Option<Vec<usize>>,
    pub blocks: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub scenarios_per_count: Option<usize>,
    pub resources: Option<usize>,
    pub cost_range: Option<[f64; 2]>,
    pub demand_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let ordered = self.start.is_finite() && self.stop.is_finite() && self.start <= self.stop;
        if !ordered || self.step.is_nan() || self.step <= 0.0 {
            return Err(format!(
                "grid {}:{}:{} must have start <= stop and a positive step",
                self.start, self.stop, self.step
            ));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start + self.step * k as f64).collect())
    }
}

/// A problem with the input: unparseable or semantically invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub source_name: String,
    /// One-based line and column, when the problem has a position.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, column)) => write!(
                f,
                "{}:{}:{}: {}",
                self.source_name, line, column, self.message
            ),
            None => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for InputError {}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

impl ScenarioFile {
    pub fn parse(text: &str, source_name: &str) -> Result<ScenarioFile, InputError> {
        toml::from_str(text).map_err(|e: toml::de::Error| InputError {
            source_name: source_name.to_string(),
            position: e.span().map(|s| line_column(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }

    pub fn to_scenario(&self) -> Result<Scenario, energy_sharing::Error> {
        let lines = self
            .network
            .lines
            .iter()
            .map(|l| Line::new(l.from, l.to, l.reactance, l.flow_limit))
            .collect();
        let network = Network::new(self.network.buses, lines, self.network.slack)?;
        let prosumers = self
            .prosumers
            .iter()
            .map(|p| Prosumer::new(p.bus, p.costs.clone(), p.demand))
            .collect::<Result<Vec<_>, _>>()?;
        Scenario::new(network, prosumers, self.sensitivity)
    }

    pub fn sweep(&self) -> SweepSection {
        self.sweep.clone().unwrap_or_default()
    }
}

impl SweepSection {
    pub fn flow_limits(&self) -> Result<Option<Vec<f64>>, String> {
        match (&self.flow_limits, &self.flow_grid) {
            (Some(_), Some(_)) => Err("give either flow_limits or flow_grid, not both".into()),
            (Some(v), None) => Ok(Some(v.clone())),
            (None, Some(g)) => g.values().map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn ranges(&self) -> DrawRanges {
        let default = DrawRanges::default();
        DrawRanges {
            cost: self.cost_range.map_or(default.cost, |[a, b]| (a, b)),
            demand: self.demand_range.map_or(default.demand, |[a, b]| (a, b)),
            resources: self.resources.unwrap_or(default.resources),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCHMARK: &str = r#"
sensitivity = 1.0

[network]
buses = 2
slack = 1

[[network.lines]]
from = 0
to = 1
flow_limit = 10.0

[[prosumers]]
bus = 0
costs = [2.5]
demand = 3.0

[[prosumers]]
bus = 1
costs = [3.5]
demand = 7.0
"#;

    #[test]
    fn parses_benchmark() {
        let file = ScenarioFile::parse(BENCHMARK, "b.toml").unwrap();
        assert_eq!(file.network.lines[0].reactance, 1.0);
        let s = file.to_scenario().unwrap();
        assert_eq!(s.count(), 2);
        assert_eq!(s.network().slack_bus(), 1);
        assert!(file.sweep.is_none());
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = BENCHMARK.replace("demand = 7.0", "demand = 7.0\ncolour = \"red\"");
        let err = ScenarioFile::parse(&text, "b.toml").unwrap_err();
        assert!(err.message.contains("colour"), "{}", err.message);
        let (line, column) = err.position.unwrap();
        assert_eq!(text.lines().nth(line - 1).unwrap(), "colour = \"red\"");
        assert_eq!(column, 1);
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "sensitivity = 1.0\n[network\nbuses = 2\n";
        let err = ScenarioFile::parse(text, "x.toml").unwrap_err();
        assert_eq!(err.position.map(|p| p.0), Some(2));
        assert!(err.to_string().starts_with("x.toml:2:"));
    }

    #[test]
    fn wrong_type_reports_position() {
        let text = BENCHMARK.replace("buses = 2", "buses = \"two\"");
        let err = ScenarioFile::parse(&text, "b.toml").unwrap_err();
        let (line, _) = err.position.unwrap();
        assert!(text.lines().nth(line - 1).unwrap().contains("two"));
    }

    #[test]
    fn grid_values() {
        let g = Grid {
            start: 1.0,
            stop: 3.5,
            step: 0.25,
        };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!(v[10], 3.5);
        assert!(Grid {
            start: 1.0,
            stop: 0.0,
            step: 1.0
        }
        .values()
        .is_err());
    }

    #[test]
    fn sweep_defaults() {
        let s = SweepSection::default();
        assert_eq!(s.ranges(), DrawRanges::default());
        assert_eq!(s.flow_limits().unwrap(), None);
        let both = SweepSection {
            flow_limits: Some(vec![1.0]),
            flow_grid: Some(Grid {
                start: 1.0,
                stop: 2.0,
                step: 1.0,
            }),
            ..Default::default()
        };
        assert!(both.flow_limits().is_err());
    }
}
