//! Shared rig and independent oracles for the acceptance suite.

use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roefield::{greedy_delone, DeloneSet, Point, StageData, TorusSpace};

/// The standard rig: unit circle, 1024 nodes, targets 2^-n for n = 1..6,
/// greedy seed at 0.125.
pub struct Rig {
    pub space: TorusSpace,
    pub sets: Vec<DeloneSet>,
    pub stages: Vec<StageData>,
}

static RIG: OnceLock<Rig> = OnceLock::new();

pub fn rig() -> &'static Rig {
    RIG.get_or_init(|| {
        let space = TorusSpace::new(1, 1.0, 1024).unwrap();
        let seed = space.point(&[0.125]).unwrap();
        let sets: Vec<DeloneSet> = (1..=6)
            .map(|n| greedy_delone(&space, 0.5f64.powi(n), seed).unwrap())
            .collect();
        let stages: Vec<StageData> = sets.iter().map(|d| StageData::build(d).unwrap()).collect();
        Rig { space, sets, stages }
    })
}

pub fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn within_ball(space: &TorusSpace, p: Point, eps: f64) -> bool {
    if eps == 0.0 {
        return true;
    }
    space.dist(p, space.basepoint()) <= 1.0 / eps
}

fn included(space: &TorusSpace, from: &[Point], to: &[Point], eps: f64) -> bool {
    from.iter().all(|&p| {
        !within_ball(space, p, eps) || space.dist_to_set(p, to) <= eps
    })
}

/// Scan oracle for the set metric: walk eps through grid multiples and
/// return the smallest value at which both truncated inclusions hold,
/// capped at 1.
pub fn scan_rho(space: &TorusSpace, a: &[Point], b: &[Point], x_resolution: f64) -> f64 {
    let mut k = 0usize;
    loop {
        let eps = k as f64 * x_resolution;
        if eps >= 1.0 {
            return 1.0;
        }
        if included(space, a, b, eps) && included(space, b, a, eps) {
            return eps;
        }
        k += 1;
    }
}

/// Greedy sets from random targets and random node seeds; each satisfies
/// r >= target >= R, hence r >= R/2.
pub fn random_greedy_sets(space: &TorusSpace, count: usize, seed: u64) -> Vec<DeloneSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let target = rng.random_range(0.05..0.45);
            let start = space.node_point(rng.random_range(0..space.node_count()));
            greedy_delone(space, target, start).unwrap()
        })
        .collect()
}
