#![allow(dead_code)]

use macgen::cpa::{sklansky, PrefixGraph};
use macgen::ct_assign::{greedy_assignment, StageAssignment};
use macgen::ct_plan::plan_compressors;
use macgen::ct_wire::{optimize_wiring, zero_arrivals, WireOptions, WireStrategy, WiringPlan};
use macgen::ppg::{generate_and_array, inject_accumulator, PartialProductMatrix};
use macgen::tech::DelayTable;

pub struct Design {
    pub ppm: PartialProductMatrix,
    pub a: StageAssignment,
    pub w: WiringPlan,
    pub g: PrefixGraph,
}

/// Greedy stages, heuristic wiring and a Sklansky adder: quick to build at
/// any width.
pub fn design(width: usize, acc: usize) -> Design {
    let mut ppm = generate_and_array(width).unwrap();
    if acc > 0 {
        ppm = inject_accumulator(ppm, acc).unwrap();
    }
    let a = greedy_assignment(&plan_compressors(&ppm)).unwrap();
    let opts = WireOptions { strategy: WireStrategy::Heuristic, search_budget: 200_000, ..WireOptions::default() };
    let (w, _) = optimize_wiring(&a, &DelayTable::default(), &zero_arrivals(&a), &opts).unwrap();
    let g = sklansky(ppm.result_bits()).unwrap();
    Design { ppm, a, w, g }
}
