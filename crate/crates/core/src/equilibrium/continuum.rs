use crate::clearing::{clear_market, BidProfile};
use crate::prosumer::{cost_given_clearing, search_best_bid, Mechanism};
use crate::Result;

use super::{solve_gne, Scenario};

/// Half-width of the sampled segment, in bid units.
pub const SAMPLE_HALF_WIDTH: f64 = 10.0;
pub const SAMPLE_STEP: f64 = 0.5;
/// Largest unilateral improvement still counted as no improvement.
pub const DEVIATION_TOL: f64 = 1e-6;
/// Deviation-proof samples needed before a continuum is reported.
pub const MIN_WITNESSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuumVerdict {
    /// No line is congested at the equilibrium; it is isolated.
    Isolated,
    /// Enough distinct profiles with the same dispatch survive every
    /// unilateral deviation: there is no isolated equilibrium.
    ContinuumWitnessed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumSample {
    pub shift: f64,
    pub bids: Vec<f64>,
    /// Largest cost reduction any single prosumer achieves by re-bidding.
    pub max_gain: f64,
    pub deviation_proof: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumReport {
    pub verdict: ContinuumVerdict,
    pub equilibrium_bids: Vec<f64>,
    pub samples: Vec<ContinuumSample>,
}

impl ContinuumReport {
    pub fn witnesses(&self) -> impl Iterator<Item = &ContinuumSample> {
        self.samples.iter().filter(|s| s.deviation_proof)
    }
}

/// Looks for a continuum of equilibria of the unregulated game.
///
/// When a line binds, every profile `b = y* + s 1` clears at the same traded
/// quantities `y*` with prices shifted uniformly by `s / a`, so prosumers'
/// bids move together along a line. Points on that line are sampled around
/// the regulated equilibrium and each is tested against unilateral
/// deviations under the unregulated cost.
pub fn detect_continuum(scenario: &Scenario) -> Result<ContinuumReport> {
    let gne = solve_gne(scenario)?;
    if !gne.is_congested() {
        return Ok(ContinuumReport {
            verdict: ContinuumVerdict::Isolated,
            equilibrium_bids: gne.bids,
            samples: Vec::new(),
        });
    }

    let a = scenario.sensitivity();
    let buses = scenario.buses();
    let mean_price = gne.prices.iter().sum::<f64>() / gne.prices.len() as f64;
    let steps = (2.0 * SAMPLE_HALF_WIDTH / SAMPLE_STEP).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let shift = -SAMPLE_HALF_WIDTH + SAMPLE_STEP * k as f64;
        let bids: Vec<f64> = gne
            .net_trades
            .iter()
            .map(|y| y + a * mean_price + shift)
            .collect();
        let clearing = clear_market(
            scenario.network(),
            &buses,
            &BidProfile::new(bids.clone(), a)?,
        )?;
        let mut max_gain = 0.0f64;
        for i in 0..scenario.count() {
            let current = cost_given_clearing(scenario, i, &clearing, Mechanism::Unregulated)?;
            let best = search_best_bid(scenario, i, &bids, Mechanism::Unregulated)?;
            max_gain = max_gain.max(current - best.cost);
        }
        samples.push(ContinuumSample {
            shift,
            bids,
            max_gain,
            deviation_proof: max_gain <= DEVIATION_TOL,
        });
    }

    let witnessed = samples.iter().filter(|s| s.deviation_proof).count();
    let verdict = if witnessed >= MIN_WITNESSES {
        ContinuumVerdict::ContinuumWitnessed
    } else {
        ContinuumVerdict::Inconclusive
    };
    Ok(ContinuumReport {
        verdict,
        equilibrium_bids: gne.bids,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uncongested_is_isolated() {
        let r = detect_continuum(&cases::benchmark(10.0)).unwrap();
        assert_eq!(r.verdict, ContinuumVerdict::Isolated);
        let r = detect_continuum(&cases::symmetric_pair(2.0, 4.0, 10.0)).unwrap();
        assert_eq!(r.verdict, ContinuumVerdict::Isolated);
    }

    #[test]
    fn congested_benchmark_line() {
        let r = detect_continuum(&cases::benchmark(2.0)).unwrap();
        assert_eq!(r.verdict, ContinuumVerdict::ContinuumWitnessed);
        for w in r.witnesses() {
            assert_abs_diff_eq!(w.bids[0], w.bids[1] - 4.0, epsilon = 1e-12);
            // deviation-proof exactly while b2 stays in [29, 35]
            assert!(
                w.bids[1] >= 29.0 - 1e-9 && w.bids[1] <= 35.0 + 1e-9,
                "{:?}",
                w.bids
            );
        }
        assert_eq!(r.witnesses().count(), 13);
    }
}
