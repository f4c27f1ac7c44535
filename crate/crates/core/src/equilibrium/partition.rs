use crate::prosumer::Prosumer;
use crate::{Error, Result};

use super::{EquilibriumResult, Scenario};

/// Splits every prosumer into `blocks` sub-prosumers at the same bus.
///
/// Block `m` takes the `m`-th contiguous run of `K / blocks` resources and
/// the demand `sum_{k in m} p_k* - (P* - D) / blocks`, so each block carries
/// an equal share of its parent's net position and the sub-demands add up
/// to the parent's. Sub-prosumers are listed parent by parent.
pub fn equal_partition(
    scenario: &Scenario,
    gne: &EquilibriumResult,
    blocks: usize,
) -> Result<Scenario> {
    scenario.require_sharing()?;
    if blocks == 0 {
        return Err(Error::InvalidParameter(
            "partition needs at least one block".into(),
        ));
    }
    if gne.dispatch.len() != scenario.count() {
        return Err(Error::DimensionMismatch {
            what: "equilibrium dispatch",
            expected: scenario.count(),
            found: gne.dispatch.len(),
        });
    }
    if blocks == 1 {
        return Ok(scenario.clone());
    }
    let mut parts = Vec::with_capacity(scenario.count() * blocks);
    for (i, (p, d)) in scenario.prosumers().iter().zip(&gne.dispatch).enumerate() {
        let k = p.resource_count();
        if k % blocks != 0 || d.outputs.len() != k {
            return Err(Error::PartitionMismatch {
                prosumer: i,
                resources: k,
                blocks,
            });
        }
        let width = k / blocks;
        let surplus = (d.total - p.demand()) / blocks as f64;
        for m in 0..blocks {
            let range = m * width..(m + 1) * width;
            let output: f64 = d.outputs[range.clone()].iter().sum();
            parts.push(Prosumer::new(
                p.bus(),
                p.costs()[range].to_vec(),
                output - surplus,
            )?);
        }
    }
    Scenario::new(scenario.network().clone(), parts, scenario.sensitivity())
}
