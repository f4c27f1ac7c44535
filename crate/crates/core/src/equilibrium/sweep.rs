use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::Network;
use crate::prosumer::Prosumer;
use crate::{Error, Result};

use super::{price_variance, solve_gne, solve_social_optimum, Scenario};

/// Sampling ranges for randomly generated prosumers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawRanges {
    pub cost: (f64, f64),
    pub demand: (f64, f64),
    pub resources: usize,
}

impl Default for DrawRanges {
    fn default() -> Self {
        DrawRanges {
            cost: (1.0, 5.0),
            demand: (-5.0, 12.0),
            resources: 1,
        }
    }
}

impl DrawRanges {
    fn validate(&self) -> Result<()> {
        let (c0, c1) = self.cost;
        let (d0, d1) = self.demand;
        if !(c0 > 0.0 && c0 <= c1 && c1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cost range [{c0}, {c1}] must be positive"
            )));
        }
        if !(d0 <= d1 && d0.is_finite() && d1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "demand range [{d0}, {d1}] is empty"
            )));
        }
        if self.resources == 0 {
            return Err(Error::InvalidParameter(
                "prosumers need at least one resource".into(),
            ));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// `count` prosumers with uniformly drawn costs, demands and buses.
pub fn random_scenario(
    network: &Network,
    count: usize,
    sensitivity: f64,
    ranges: &DrawRanges,
    rng: &mut impl Rng,
) -> Result<Scenario> {
    ranges.validate()?;
    let prosumers = (0..count)
        .map(|_| {
            let bus = rng.gen_range(0..network.bus_count());
            let costs = (0..ranges.resources)
                .map(|_| uniform(rng, ranges.cost))
                .collect();
            let demand = uniform(rng, ranges.demand);
            Prosumer::new(bus, costs, demand)
        })
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(network.clone(), prosumers, sensitivity)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSweepRow {
    pub flow_limit: f64,
    pub social_cost: f64,
    pub market_cost: f64,
    /// `(market - social) / social`.
    pub relative_diff: f64,
    pub market_prices: Vec<f64>,
    pub social_prices: Vec<f64>,
    pub market_variance: f64,
    pub social_variance: f64,
}

/// Market equilibrium against social optimum with every line limit set to
/// each value of `limits` in turn.
pub fn flow_sweep(base: &Scenario, limits: &[f64]) -> Result<Vec<FlowSweepRow>> {
    limits
        .iter()
        .map(|&limit| {
            let scenario = base.with_network(base.network().with_flow_limits(|_, _| limit)?)?;
            let gne = solve_gne(&scenario)?;
            let sco = solve_social_optimum(&scenario)?;
            let relative_diff = relative(gne.total_disutility, sco.total_disutility);
            Ok(FlowSweepRow {
                flow_limit: limit,
                social_cost: sco.total_disutility,
                market_cost: gne.total_disutility,
                relative_diff,
                market_variance: price_variance(&gne.prices),
                social_variance: price_variance(&sco.prices),
                market_prices: gne.prices,
                social_prices: sco.prices,
            })
        })
        .collect()
}

fn relative(market: f64, social: f64) -> f64 {
    if social.abs() < 1e-12 {
        0.0
    } else {
        (market - social) / social
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountSweepConfig {
    pub seed: u64,
    pub scenarios_per_count: usize,
    pub ranges: DrawRanges,
    /// Draws allowed per requested scenario before giving up.
    pub max_attempts: usize,
}

impl Default for CountSweepConfig {
    fn default() -> Self {
        CountSweepConfig {
            seed: 0,
            scenarios_per_count: 10,
            ranges: DrawRanges::default(),
            max_attempts: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountSweepRow {
    pub count: usize,
    /// Per-capita gap `(1/I)(sum f(p*) - sum f(p_bar))` averaged over draws.
    pub mean_gap: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Mean of `(sum f(p*) - sum f(p_bar)) / sum f(p_bar)`.
    pub mean_relative_gap: f64,
    /// `G^D F_hat / (a (I - 1))` for the shared network.
    pub gap_bound: f64,
    /// Draws rejected as infeasible.
    pub redraws: usize,
}

/// Random populations of each size in `counts` attached to the network of
/// `base`. Every size uses its own stream of the seeded generator, so a row
/// does not depend on which other sizes are requested.
pub fn count_sweep(
    base: &Scenario,
    counts: &[usize],
    config: &CountSweepConfig,
) -> Result<Vec<CountSweepRow>> {
    config.ranges.validate()?;
    if config.scenarios_per_count == 0 {
        return Err(Error::InvalidParameter(
            "need at least one scenario per count".into(),
        ));
    }
    let network = base.network();
    let a = base.sensitivity();
    counts
        .iter()
        .map(|&count| {
            if count < 2 {
                return Err(Error::TooFewProsumers { count });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(count as u64);
            let budget = config.max_attempts * config.scenarios_per_count;
            let mut gaps = Vec::with_capacity(config.scenarios_per_count);
            let mut relatives = Vec::with_capacity(config.scenarios_per_count);
            let mut redraws = 0;
            while gaps.len() < config.scenarios_per_count {
                if redraws >= budget {
                    return Err(Error::DrawsExhausted { attempts: redraws });
                }
                let scenario = random_scenario(network, count, a, &config.ranges, &mut rng)?;
                let solved =
                    solve_gne(&scenario).and_then(|g| Ok((g, solve_social_optimum(&scenario)?)));
                match solved {
                    Ok((gne, sco)) => {
                        gaps.push((gne.total_disutility - sco.total_disutility) / count as f64);
                        relatives.push(relative(gne.total_disutility, sco.total_disutility));
                    }
                    Err(e) if e.is_infeasible() => redraws += 1,
                    Err(e) => return Err(e),
                }
            }
            let n = gaps.len() as f64;
            Ok(CountSweepRow {
                count,
                mean_gap: gaps.iter().sum::<f64>() / n,
                min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
                max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_relative_gap: relatives.iter().sum::<f64>() / n,
                gap_bound: network.max_degree() as f64 * network.max_flow_limit()
                    / (a * (count - 1) as f64),
                redraws,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn large_limit_gives_single_price() {
        let rows = flow_sweep(&cases::triangle_scenario(1.0), &[1000.0]).unwrap();
        assert!(rows[0].market_variance < 1e-18);
        assert!(rows[0].relative_diff >= -1e-12);
    }

    #[test]
    fn count_sweep_is_reproducible() {
        let base = cases::triangle_scenario(2.0);
        let config = CountSweepConfig {
            seed: 7,
            scenarios_per_count: 3,
            ..Default::default()
        };
        let a = count_sweep(&base, &[2, 4], &config).unwrap();
        let b = count_sweep(&base, &[4], &config).unwrap();
        assert_eq!(a[1], b[0]);
        for row in &a {
            assert!(row.min_gap >= -1e-7);
            assert!(row.max_gap <= row.gap_bound + 1e-7);
        }
    }

    #[test]
    fn bad_ranges_rejected() {
        let ranges = DrawRanges {
            cost: (0.0, 1.0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(random_scenario(&cases::triangle(1.0), 3, 1.0, &ranges, &mut rng).is_err());
        let base = cases::triangle_scenario(2.0);
        assert!(count_sweep(&base, &[1], &CountSweepConfig::default()).is_err());
    }
}
