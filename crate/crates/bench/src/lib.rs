//! Shared fixtures for the benchmarks.

use coalctl_core::harness::{parse_config, SimConfig};

pub const PLATOON_CFG: &str = include_str!("../../../configs/platoon.cfg");

pub fn platoon() -> SimConfig {
    parse_config(PLATOON_CFG).expect("bundled config parses")
}
