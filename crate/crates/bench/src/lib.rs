//! Benchmark fixtures; the benches live in `benches/`.

use busrank_core::case::{five_bus, five_bus_contingencies};
use busrank_core::{BusId, Case, Contingency};

pub const LOAD_BUSES: [BusId; 3] = [BusId(3), BusId(4), BusId(5)];

pub fn fixture() -> (Case, Vec<Contingency>) {
    (five_bus(), five_bus_contingencies())
}
