//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use ncmodsym_core::mellin::modular_family;
use ncmodsym_core::modforms::delta_qexp;
use ncmodsym_core::{OmegaFamily, C64};

/// `Delta z^{s-1} dz` for the given `s`, with 96 coefficients.
pub fn delta_family(ss: &[i64]) -> OmegaFamily {
    modular_family(Arc::new(delta_qexp(96)), ss).expect("valid family")
}

pub fn ci(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
