//! Data shipped with the crate: the two-area example network and its
//! scenario suite.

use crate::domain::NetworkInstance;
use crate::scenarios::ScenarioSuite;

const EXAMPLE_NETWORK: &str = include_str!("../data/example_network.json");
const SUITE: &str = include_str!("../data/scenarios/example_suite.json");

/// The two-area, two-drop-off, three-primary, one-secondary example network.
pub fn example_network() -> NetworkInstance {
    NetworkInstance::from_json(EXAMPLE_NETWORK).expect("bundled instance parses")
}

pub fn example_network_json() -> &'static str {
    EXAMPLE_NETWORK
}

/// BCS, TCS-80%, TCS-40%, PMS-1 and PMS-2 over the example network.
pub fn example_suite() -> ScenarioSuite {
    ScenarioSuite::from_json(SUITE).expect("bundled suite parses")
}

pub fn example_suite_json() -> &'static str {
    SUITE
}
