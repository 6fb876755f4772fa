//! Partitions of unity subordinate to the cutoff cover W_u of a Delone
//! set: W_u keeps the points within 2R of the site u whose competing
//! sites all stay further than r/6 away. Heights are exact distances to
//! the complement of W_u, evaluated in closed form, then normalized.

use ndarray::{Array2, ArrayView1};

use crate::delone::DeloneSet;
use crate::error::{Error, Result};
use crate::space::TorusSpace;

#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    delone: DeloneSet,
    /// Node-major matrix, one column per site.
    phi: Array2<f64>,
    r: f64,
    big_r: f64,
    lipschitz_est: Vec<f64>,
}

/// Height of the bump at site `u`: distance from x to the complement of
/// W_u, which the cover geometry reduces to
/// max(0, min(2R - d(x,u), min_{v != u} d(x,v) - r/6)).
fn height(dist_u: f64, dist_other: f64, r: f64, big_r: f64) -> f64 {
    (2.0 * big_r - dist_u).min(dist_other - r / 6.0).max(0.0)
}

/// Distances from a node to every site, plus the two smallest values.
fn site_distances(space: &TorusSpace, delone: &DeloneSet, node: usize) -> (Vec<f64>, usize, f64) {
    let x = space.node_point(node);
    let mut dists = Vec::with_capacity(delone.len());
    let mut nearest = 0usize;
    let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
    for (i, &p) in delone.points().iter().enumerate() {
        let d = space.dist(x, p);
        dists.push(d);
        if d < d1 {
            d2 = d1;
            d1 = d;
            nearest = i;
        } else if d < d2 {
            d2 = d;
        }
    }
    (dists, nearest, d2)
}

pub fn build_pou(delone: &DeloneSet) -> Result<PartitionOfUnity> {
    let space = *delone.space();
    let r = delone.packing_radius();
    let big_r = delone.covering_radius();
    let k = delone.len();
    let n_nodes = space.node_count();

    let mut phi = Array2::zeros((n_nodes, k));
    for node in 0..n_nodes {
        let (dists, nearest, d2) = site_distances(&space, delone, node);
        let mut sum = 0.0;
        for u in 0..k {
            let other = if u == nearest { d2 } else { dists[nearest] };
            let h = height(dists[u], other, r, big_r);
            phi[[node, u]] = h;
            sum += h;
        }
        if sum <= 0.0 {
            return Err(Error::CoverFailure { node });
        }
        for u in 0..k {
            phi[[node, u]] /= sum;
        }
    }

    let lipschitz_est = column_lipschitz(&space, &phi);
    Ok(PartitionOfUnity {
        delone: delone.clone(),
        phi,
        r,
        big_r,
        lipschitz_est,
    })
}

impl PartitionOfUnity {
    /// Assembles a partition from explicit column data; callers own the
    /// axiom checks. Meant for synthetic frames in tests and benches.
    #[doc(hidden)]
    pub fn from_raw(delone: DeloneSet, phi: Array2<f64>) -> Result<Self> {
        let space = *delone.space();
        if phi.nrows() != space.node_count() || phi.ncols() != delone.len() {
            return Err(Error::InvalidArgument(
                "column data does not match the grid and site counts".into(),
            ));
        }
        let r = delone.packing_radius();
        let big_r = delone.covering_radius();
        let lipschitz_est = column_lipschitz(&space, &phi);
        Ok(PartitionOfUnity {
            delone,
            phi,
            r,
            big_r,
            lipschitz_est,
        })
    }
}

/// Max |Δφ| / step over grid-adjacent node pairs, one value per column.
fn column_lipschitz(space: &TorusSpace, phi: &Array2<f64>) -> Vec<f64> {
    let n = space.grid_n();
    let step = space.step();
    let k = phi.ncols();
    let mut out = vec![0.0f64; k];
    let mut visit = |a: usize, b: usize| {
        for u in 0..k {
            let slope = (phi[[a, u]] - phi[[b, u]]).abs() / step;
            if slope > out[u] {
                out[u] = slope;
            }
        }
    };
    match space.dim() {
        1 => {
            for i in 0..n {
                visit(i, (i + 1) % n);
            }
        }
        _ => {
            for row in 0..n {
                for col in 0..n {
                    let idx = row * n + col;
                    visit(idx, row * n + (col + 1) % n);
                    visit(idx, ((row + 1) % n) * n + col);
                }
            }
        }
    }
    out
}

impl PartitionOfUnity {
    pub fn delone(&self) -> &DeloneSet {
        &self.delone
    }

    pub fn space(&self) -> &TorusSpace {
        self.delone.space()
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn column(&self, u: usize) -> ArrayView1<'_, f64> {
        self.phi.column(u)
    }

    pub fn len(&self) -> usize {
        self.delone.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn packing_radius(&self) -> f64 {
        self.r
    }

    pub fn covering_radius(&self) -> f64 {
        self.big_r
    }

    pub fn lipschitz_est(&self) -> &[f64] {
        &self.lipschitz_est
    }

    /// Whether the grid resolves the plateau region: step < r/12.
    pub fn plateau_resolved(&self) -> bool {
        self.space().step() < self.r / 12.0
    }

    /// Recomputed bump height at a node (before normalization).
    pub fn height(&self, node: usize, u: usize) -> f64 {
        let (dists, nearest, d2) = site_distances(self.space(), &self.delone, node);
        let other = if u == nearest { d2 } else { dists[nearest] };
        height(dists[u], other, self.r, self.big_r)
    }
}

#[derive(Clone, Debug)]
pub struct PartitionReport {
    pub max_row_sum_dev: f64,
    /// Largest value taken outside the 2R ball (zero when supports obey (p1)).
    pub max_support_violation: f64,
    /// Smallest value on the resolved plateau d(x, u) < r/6 - step/2.
    pub min_plateau_value: f64,
    pub plateau_nodes: usize,
    pub entries_in_range: bool,
    pub lipschitz_per_column: Vec<f64>,
    pub lipschitz: f64,
    pub lebesgue_empirical: f64,
    pub lebesgue_bound: f64,
    pub lebesgue_ok: bool,
    pub plateau_resolved: bool,
}

pub fn verify_pou(pou: &PartitionOfUnity) -> PartitionReport {
    let space = *pou.space();
    let delone = pou.delone();
    let phi = pou.phi();
    let (r, big_r) = (pou.packing_radius(), pou.covering_radius());
    let n_nodes = space.node_count();
    let step = space.step();

    let mut max_row_sum_dev = 0.0f64;
    let mut max_support_violation = 0.0f64;
    let mut min_plateau_value = 1.0f64;
    let mut plateau_nodes = 0usize;
    let mut entries_in_range = true;
    let plateau_cut = r / 6.0 - step / 2.0;

    for node in 0..n_nodes {
        let x = space.node_point(node);
        let mut sum = 0.0;
        for (u, &site) in delone.points().iter().enumerate() {
            let v = phi[[node, u]];
            sum += v;
            if !(0.0..=1.0).contains(&v) {
                entries_in_range = false;
            }
            let d = space.dist(x, site);
            if d >= 2.0 * big_r && v > max_support_violation {
                max_support_violation = v;
            }
            if d < plateau_cut {
                plateau_nodes += 1;
                if v < min_plateau_value {
                    min_plateau_value = v;
                }
            }
        }
        max_row_sum_dev = max_row_sum_dev.max((sum - 1.0).abs());
    }

    let lebesgue_empirical = lebesgue_number(&space, phi);
    let lebesgue_bound = (5.0 * r / 12.0).min((r / 4.0).min(big_r)) - step;

    PartitionReport {
        max_row_sum_dev,
        max_support_violation,
        min_plateau_value,
        plateau_nodes,
        entries_in_range,
        lipschitz_per_column: pou.lipschitz_est().to_vec(),
        lipschitz: pou
            .lipschitz_est()
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v)),
        lebesgue_empirical,
        lebesgue_bound,
        lebesgue_ok: lebesgue_empirical >= lebesgue_bound,
        plateau_resolved: pou.plateau_resolved(),
    }
}

/// min over nodes x of max over u of d(x, grid complement of supp φ_u),
/// capped at the diameter when some support exhausts the grid.
fn lebesgue_number(space: &TorusSpace, phi: &Array2<f64>) -> f64 {
    let n_nodes = phi.nrows();
    let k = phi.ncols();
    let mut best_per_node = vec![0.0f64; n_nodes];
    for u in 0..k {
        let complement: Vec<usize> = (0..n_nodes).filter(|&x| phi[[x, u]] == 0.0).collect();
        if complement.is_empty() {
            return space.diameter();
        }
        let comp_points: Vec<_> = complement.iter().map(|&i| space.node_point(i)).collect();
        for node in 0..n_nodes {
            let x = space.node_point(node);
            let d = space.dist_to_set(x, &comp_points);
            if d > best_per_node[node] {
                best_per_node[node] = d;
            }
        }
    }
    best_per_node.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
}
