//! Benchmark fixtures shared by the criterion targets.

use kwe_core::{LogGrid, Spectrum};

pub fn bump_on(grid: LogGrid) -> Spectrum {
    Spectrum::unit_mass_bump(grid, 1.0, 2.0, 0.25).expect("valid bump")
}
