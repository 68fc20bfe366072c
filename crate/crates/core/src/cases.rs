//! Bundled instances.
//!
//! `iso1` is a single-node market used throughout the tests: one generator
//! (20 $/MWh, up 50, down 18), a 60 MW wind farm and a flat 100 MW load.
//! `nine_bus` is a reconstruction of the IEEE 9-bus case with three
//! generators, loads at buses 5, 7, 9 and two 105 MW wind farms at buses 5
//! and 7; its line data come from MATPOWER's `case9`.

use crate::sysmodel::{parse_instance, MarketInstance};

pub const ISO1_TOML: &str = include_str!("../cases/iso1.toml");
pub const ISO1_LOADS: &str = include_str!("../cases/iso1-loads.csv");
pub const NINE_BUS_TOML: &str = include_str!("../cases/nine-bus.toml");
pub const NINE_BUS_LOADS: &str = include_str!("../cases/nine-bus-loads.csv");

pub fn iso1() -> MarketInstance {
    parse_instance(ISO1_TOML, ISO1_LOADS).expect("bundled iso1 is valid")
}

pub fn nine_bus() -> MarketInstance {
    parse_instance(NINE_BUS_TOML, NINE_BUS_LOADS).expect("bundled nine-bus case is valid")
}

/// Looks up a bundled case by name.
pub fn by_name(name: &str) -> Option<MarketInstance> {
    match name {
        "iso1" => Some(iso1()),
        "nine-bus" | "9bus" | "case9" => Some(nine_bus()),
        _ => None,
    }
}
