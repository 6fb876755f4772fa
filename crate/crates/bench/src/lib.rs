//! Shared fixtures for the kernel benchmarks.

use roefield::{build_pou, greedy_delone, DeloneSet, PartitionOfUnity, TorusSpace};

pub fn space(grid_n: usize) -> TorusSpace {
    TorusSpace::new(1, 1.0, grid_n).unwrap()
}

pub fn sample_set(grid_n: usize, target: f64) -> DeloneSet {
    let s = space(grid_n);
    let seed = s.point(&[0.125]).unwrap();
    greedy_delone(&s, target, seed).unwrap()
}

pub fn sample_pou(grid_n: usize, target: f64) -> PartitionOfUnity {
    build_pou(&sample_set(grid_n, target)).unwrap()
}
