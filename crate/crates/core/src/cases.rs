//! Small reference systems used by tests, examples and the command line.

use crate::equilibrium::Scenario;
use crate::network::{Line, Network};
use crate::prosumer::Prosumer;

/// Two buses joined by one unit-reactance line, slack at bus 1.
pub fn two_bus(flow_limit: f64) -> Network {
    Network::new(2, vec![Line::new(0, 1, 1.0, flow_limit)], 1).expect("two-bus network is valid")
}

/// Two single-resource prosumers, `c = (2.5, 3.5)`, `D = (3, 7)`, `a = 1`.
pub fn benchmark(flow_limit: f64) -> Scenario {
    let prosumers = vec![
        Prosumer::new(0, vec![2.5], 3.0).expect("valid prosumer"),
        Prosumer::new(1, vec![3.5], 7.0).expect("valid prosumer"),
    ];
    Scenario::new(two_bus(flow_limit), prosumers, 1.0).expect("benchmark scenario is valid")
}

/// Two identical single-resource prosumers on the two-bus network, `a = 1`.
pub fn symmetric_pair(cost: f64, demand: f64, flow_limit: f64) -> Scenario {
    let prosumers = (0..2)
        .map(|bus| Prosumer::new(bus, vec![cost], demand).expect("valid prosumer"))
        .collect();
    Scenario::new(two_bus(flow_limit), prosumers, 1.0).expect("symmetric scenario is valid")
}

/// Three buses in a ring, unit reactances, common flow limit, slack at bus 0.
pub fn triangle(flow_limit: f64) -> Network {
    let lines = vec![
        Line::new(0, 1, 1.0, flow_limit),
        Line::new(1, 2, 1.0, flow_limit),
        Line::new(0, 2, 1.0, flow_limit),
    ];
    Network::new(3, lines, 0).expect("triangle network is valid")
}

/// One prosumer per triangle bus, `c = (2.5, 3.5, 4.5)`, `D = (3, 7, 11)`.
pub fn triangle_scenario(flow_limit: f64) -> Scenario {
    let prosumers = [(2.5, 3.0), (3.5, 7.0), (4.5, 11.0)]
        .iter()
        .enumerate()
        .map(|(bus, &(c, d))| Prosumer::new(bus, vec![c], d).expect("valid prosumer"))
        .collect();
    Scenario::new(triangle(flow_limit), prosumers, 1.0).expect("triangle scenario is valid")
}

/// Meshed seven-bus system with two loops, unit reactances and slack at
/// bus 0. Maximum degree 3, largest flow limit 6.
pub fn seven_bus() -> Network {
    let spec = [
        (0, 1, 6.0),
        (0, 4, 5.0),
        (1, 2, 4.0),
        (1, 3, 6.0),
        (3, 4, 5.0),
        (2, 5, 4.0),
        (5, 6, 5.0),
        (3, 6, 4.0),
    ];
    let lines = spec
        .iter()
        .map(|&(from, to, limit)| Line::new(from, to, 1.0, limit))
        .collect();
    Network::new(7, lines, 0).expect("seven-bus network is valid")
}
