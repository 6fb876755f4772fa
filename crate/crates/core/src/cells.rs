//! Cell partition of the grid induced by a coarse Delone set: nearest-site
//! Voronoi cells with index tie-break, the relation "v precedes u" between
//! fine sites and coarse cells, the per-cell dimension counts, and the
//! projections onto span{φ_v : v ≺ u}.

use ndarray::{Array1, Array2};

use crate::delone::DeloneSet;
use crate::error::{Error, Result};
use crate::gram::GramData;
use crate::pou::PartitionOfUnity;
use crate::space::TorusSpace;

#[derive(Clone, Debug)]
pub struct CellPartition {
    delone: DeloneSet,
    assign: Vec<usize>,
    cells: Vec<Vec<usize>>,
    deltas: Vec<f64>,
    /// Per site, per delta: quadrature mass of the cell's nodes lying
    /// within delta of another cell.
    boundary_mass: Vec<Vec<f64>>,
}

pub fn voronoi_cells(space: &TorusSpace, d: &DeloneSet) -> CellPartition {
    let n_nodes = space.node_count();
    let k = d.len();
    let mut assign = vec![0usize; n_nodes];
    let mut cells = vec![Vec::new(); k];
    for node in 0..n_nodes {
        let x = space.node_point(node);
        let mut best = f64::INFINITY;
        let mut winner = 0usize;
        for (i, &p) in d.points().iter().enumerate() {
            let dist = space.dist(x, p);
            if dist < best {
                best = dist;
                winner = i;
            }
        }
        assign[node] = winner;
        cells[winner].push(node);
    }

    let step = space.step();
    let deltas: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|m| m * step).collect();
    let mut other_dist = vec![f64::INFINITY; n_nodes];
    for node in 0..n_nodes {
        let x = space.node_point(node);
        for y in 0..n_nodes {
            if assign[y] != assign[node] {
                other_dist[node] = other_dist[node].min(space.dist(x, space.node_point(y)));
            }
        }
    }
    let w = space.weight();
    let boundary_mass = (0..k)
        .map(|u| {
            deltas
                .iter()
                .map(|&delta| {
                    w * cells[u]
                        .iter()
                        .filter(|&&node| other_dist[node] <= delta)
                        .count() as f64
                })
                .collect()
        })
        .collect();

    CellPartition {
        delone: d.clone(),
        assign,
        cells,
        deltas,
        boundary_mass,
    }
}

impl CellPartition {
    pub fn delone(&self) -> &DeloneSet {
        &self.delone
    }

    pub fn space(&self) -> &TorusSpace {
        self.delone.space()
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn boundary_mass(&self) -> &[Vec<f64>] {
        &self.boundary_mass
    }

    pub fn min_cell_size(&self) -> usize {
        self.cells.iter().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct CellReport {
    /// Every node of the open ball B_{r/2}(u) assigned to cell u.
    pub inner_ok: bool,
    /// Every node of cell u within R + step of u.
    pub outer_ok: bool,
    pub min_cell_nodes: usize,
    /// Per-site boundary masses nondecreasing in delta.
    pub boundary_monotone: bool,
}

pub fn verify_cells(c: &CellPartition) -> CellReport {
    let space = c.space();
    let d = c.delone();
    let half_r = d.packing_radius() / 2.0;
    let outer = d.covering_radius() + space.step();

    let mut inner_ok = true;
    let mut outer_ok = true;
    for node in 0..space.node_count() {
        let x = space.node_point(node);
        for (u, &p) in d.points().iter().enumerate() {
            let dist = space.dist(x, p);
            if dist < half_r && c.assign[node] != u {
                inner_ok = false;
            }
        }
        if space.dist(x, d.points()[c.assign[node]]) > outer {
            outer_ok = false;
        }
    }

    let boundary_monotone = c
        .boundary_mass
        .iter()
        .all(|row| row.windows(2).all(|w| w[0] <= w[1] + 1e-15));

    CellReport {
        inner_ok,
        outer_ok,
        min_cell_nodes: c.min_cell_size(),
        boundary_monotone,
    }
}

/// v ≺ u: every node supporting φ_v lies in cell u.
pub fn precedes(pn: &PartitionOfUnity, c: &CellPartition, v: usize, u: usize) -> bool {
    let phi = pn.phi();
    (0..phi.nrows()).all(|node| phi[[node, v]] == 0.0 || c.assign[node] == u)
}

/// For each coarse cell, the fine sites preceding it, sorted by distance
/// to the coarse site with index tie-break. This ordering pins down the
/// per-cell basis used everywhere downstream.
pub fn preceding_sites(pn: &PartitionOfUnity, c: &CellPartition) -> Vec<Vec<usize>> {
    let phi = pn.phi();
    let space = c.space();
    let mut prec: Vec<Vec<usize>> = vec![Vec::new(); c.delone.len()];
    for v in 0..pn.len() {
        let mut owner: Option<usize> = None;
        let mut contained = true;
        for node in 0..phi.nrows() {
            if phi[[node, v]] == 0.0 {
                continue;
            }
            match owner {
                None => owner = Some(c.assign[node]),
                Some(u) => {
                    if c.assign[node] != u {
                        contained = false;
                        break;
                    }
                }
            }
        }
        if let (true, Some(u)) = (contained, owner) {
            prec[u].push(v);
        }
    }
    for (u, list) in prec.iter_mut().enumerate() {
        let anchor = c.delone.points()[u];
        list.sort_by(|&a, &b| {
            let da = space.dist(pn.delone().points()[a], anchor);
            let db = space.dist(pn.delone().points()[b], anchor);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
    }
    prec
}

#[derive(Clone, Debug)]
pub struct CellDims {
    pub m_u: Vec<usize>,
    pub m_min: usize,
    pub m_max: usize,
    /// Per cell: (μ_grid(B_{r/2}(u)), Σ_{v≺u} μ_grid(B_{2R_n}(v))), the
    /// mass comparison behind the dimension growth; reported, not asserted.
    pub mass_check: Vec<(f64, f64)>,
}

pub fn cell_dims(pn: &PartitionOfUnity, c: &CellPartition) -> CellDims {
    let prec = preceding_sites(pn, c);
    let space = c.space();
    let m_u: Vec<usize> = prec.iter().map(Vec::len).collect();
    let coarse_half_r = c.delone.packing_radius() / 2.0;
    let fine_two_r = 2.0 * pn.covering_radius();
    let mass_check = prec
        .iter()
        .enumerate()
        .map(|(u, list)| {
            let lhs = space.ball_measure(c.delone.points()[u], coarse_half_r);
            let rhs = list
                .iter()
                .map(|&v| space.ball_measure(pn.delone().points()[v], fine_two_r))
                .sum();
            (lhs, rhs)
        })
        .collect();
    CellDims {
        m_min: m_u.iter().copied().min().unwrap_or(0),
        m_max: m_u.iter().copied().max().unwrap_or(0),
        m_u,
        mass_check,
    }
}

#[derive(Clone, Debug)]
pub struct CellProjection {
    cell: usize,
    /// Quadrature-orthonormal columns spanning {φ_v : v ≺ u}, in the
    /// preceding-sites order.
    basis: Array2<f64>,
    sites: Vec<usize>,
    space: TorusSpace,
}

/// Orthogonal projection onto span{φ_v : v ≺ u}, built by orthogonalizing
/// the sub-frame. The sub-Gram matrix guards against degenerate frames.
pub fn cell_projection(
    u: usize,
    pn: &PartitionOfUnity,
    c: &CellPartition,
    gn: &GramData,
) -> Result<CellProjection> {
    let prec = preceding_sites(pn, c);
    let sites = prec
        .get(u)
        .ok_or_else(|| Error::InvalidArgument(format!("no cell {u}")))?
        .clone();
    let space = *c.space();
    let basis = orthonormal_columns(&space, pn.phi(), &sites, gn, u)?;
    Ok(CellProjection {
        cell: u,
        basis,
        sites,
        space,
    })
}

/// Weighted two-pass Gram-Schmidt over the selected columns. The sliced
/// sub-Gram eigenvalues decide degeneracy before any arithmetic.
pub(crate) fn orthonormal_columns(
    space: &TorusSpace,
    phi: &Array2<f64>,
    sites: &[usize],
    gn: &GramData,
    cell: usize,
) -> Result<Array2<f64>> {
    let n_nodes = phi.nrows();
    let m = sites.len();
    let mut basis = Array2::zeros((n_nodes, m));
    if m == 0 {
        return Ok(basis);
    }
    let g = gn.matrix();
    let mut sub = Array2::zeros((m, m));
    for (i, &a) in sites.iter().enumerate() {
        for (j, &b) in sites.iter().enumerate() {
            sub[[i, j]] = g[[a, b]];
        }
    }
    let (vals, _) = crate::linalg::eigh(&sub)?;
    if vals[0] < crate::gram::EIGENVALUE_FLOOR {
        return Err(Error::SingularSubGram { cell });
    }

    let w = space.weight();
    for (i, &v) in sites.iter().enumerate() {
        let mut col = phi.column(v).to_owned();
        for _ in 0..2 {
            for j in 0..i {
                let proj = w * basis.column(j).dot(&col);
                col = col - &(basis.column(j).to_owned() * proj);
            }
        }
        let norm = (w * col.dot(&col)).sqrt();
        basis.column_mut(i).assign(&(col / norm));
    }
    Ok(basis)
}

impl CellProjection {
    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn rank(&self) -> usize {
        self.sites.len()
    }

    pub fn is_zero(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    /// Q_u f = B (B* W f).
    pub fn apply(&self, values: &Array1<f64>) -> Array1<f64> {
        if self.is_zero() {
            return Array1::zeros(values.len());
        }
        let coeff = self.basis.t().dot(values) * self.space.weight();
        self.basis.dot(&coeff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::GridFunction;
    use crate::delone::greedy_delone;
    use crate::gram::{gram, isometry};
    use crate::pou::build_pou;
    use crate::space::Point;
    use approx::assert_abs_diff_eq;

    fn t1(n: usize) -> TorusSpace {
        TorusSpace::new(1, 1.0, n).unwrap()
    }

    fn set(space: &TorusSpace, coords: &[f64]) -> DeloneSet {
        let pts: Vec<Point> = coords
            .iter()
            .map(|&x| space.point(&[x]).unwrap())
            .collect();
        DeloneSet::new(*space, pts).unwrap()
    }

    #[test]
    fn single_site_owns_every_node() {
        let s = t1(32);
        let d = set(&s, &[0.25]);
        let c = voronoi_cells(&s, &d);
        assert!(c.assign().iter().all(|&u| u == 0));
        assert_eq!(c.cells()[0].len(), 32);

        let fine = greedy_delone(&s, 0.125, s.point(&[0.25]).unwrap()).unwrap();
        let pn = build_pou(&fine).unwrap();
        for v in 0..fine.len() {
            assert!(precedes(&pn, &c, v, 0));
        }
        let dims = cell_dims(&pn, &c);
        assert_eq!(dims.m_u, vec![fine.len()]);
        assert_eq!(dims.m_min, fine.len());
    }

    #[test]
    fn pair_cells_break_ties_towards_lower_index() {
        let s = t1(8);
        let d = set(&s, &[0.0, 0.5]);
        let c = voronoi_cells(&s, &d);
        assert_eq!(c.cells()[0], vec![0, 1, 2, 6, 7]);
        assert_eq!(c.cells()[1], vec![3, 4, 5]);
        let report = verify_cells(&c);
        assert!(report.inner_ok && report.outer_ok);
        assert_eq!(report.min_cell_nodes, 3);
        assert!(report.boundary_monotone);
    }

    #[test]
    fn inner_and_outer_bounds_on_generated_sets() {
        let s = t1(256);
        for target in [0.06, 0.11, 0.26] {
            let d = greedy_delone(&s, target, s.point(&[0.3]).unwrap()).unwrap();
            let c = voronoi_cells(&s, &d);
            let report = verify_cells(&c);
            assert!(report.inner_ok, "target {target}: inner ball escaped");
            assert!(report.outer_ok, "target {target}: node beyond R + step");
            assert!(report.min_cell_nodes >= 1);
        }
    }

    #[test]
    fn self_supports_straddle_cells() {
        let s = t1(8);
        let d = set(&s, &[0.0, 0.5]);
        let c = voronoi_cells(&s, &d);
        let pn = build_pou(&d).unwrap();
        assert!(!precedes(&pn, &c, 0, 0));
        assert!(!precedes(&pn, &c, 1, 1));
        let dims = cell_dims(&pn, &c);
        assert_eq!(dims.m_u, vec![0, 0]);
    }

    #[test]
    fn near_grid_refinement_precedes_by_scan() {
        let s = t1(8);
        let d = set(&s, &[0.0, 0.5]);
        let c = voronoi_cells(&s, &d);
        let fine = greedy_delone(&s, s.step(), s.point(&[0.0]).unwrap()).unwrap();
        let coords: Vec<f64> = fine.points().iter().map(|p| p.coords()[0]).collect();
        assert_eq!(coords, vec![0.0, 0.5, 0.25, 0.75]);
        let pn = build_pou(&fine).unwrap();
        assert!(precedes(&pn, &c, 1, 1));
        assert!(!precedes(&pn, &c, 1, 0));
        assert!(!precedes(&pn, &c, 2, 0));
        assert!(!precedes(&pn, &c, 2, 1));
    }

    #[test]
    fn dims_grow_along_refinement() {
        let s = t1(1024);
        let seed = s.point(&[0.125]).unwrap();
        let coarse = greedy_delone(&s, 0.25, seed).unwrap();
        let c = voronoi_cells(&s, &coarse);
        let mut m_mins = Vec::new();
        for n in 3..=6 {
            let fine = greedy_delone(&s, 0.5f64.powi(n), seed).unwrap();
            let pn = build_pou(&fine).unwrap();
            let dims = cell_dims(&pn, &c);
            assert_eq!(dims.m_min, *dims.m_u.iter().min().unwrap());
            assert_eq!(dims.m_max, *dims.m_u.iter().max().unwrap());
            m_mins.push(dims.m_min);
        }
        assert_eq!(m_mins, vec![1, 3, 7, 15]);
        assert!(m_mins.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn projection_fixes_span_and_respects_cell() {
        let s = t1(256);
        let seed = s.point(&[0.125]).unwrap();
        let coarse = greedy_delone(&s, 0.25, seed).unwrap();
        let c = voronoi_cells(&s, &coarse);
        let fine = greedy_delone(&s, 0.0625, seed).unwrap();
        let pn = build_pou(&fine).unwrap();
        let gn = gram(&pn).unwrap();
        let iso = isometry(&pn, &gn);

        for u in 0..coarse.len() {
            let q = cell_projection(u, &pn, &c, &gn).unwrap();
            assert!(q.rank() > 0, "cell {u} has no preceding sites");

            let w = s.weight();
            let b = q.basis();
            let m = b.t().dot(b) * w;
            for a in 0..q.rank() {
                for bb in 0..q.rank() {
                    let target = if a == bb { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(m[[a, bb]], target, epsilon = 1e-8);
                }
            }

            for node in 0..s.node_count() {
                if c.assign()[node] != u {
                    for col in 0..q.rank() {
                        assert_eq!(b[[node, col]], 0.0);
                    }
                }
            }

            for &v in q.sites() {
                let f = pn.column(v).to_owned();
                let qf = q.apply(&f);
                let dev = (&qf - &f).iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
                assert!(dev <= 1e-8, "cell {u}: φ_{v} not fixed");
            }

            let f = GridFunction::from_fn(s, |p| (7.0 * p.coords()[0]).sin());
            let qf = q.apply(f.values());
            let qf_fun = GridFunction::new(s, qf.clone()).unwrap();
            let pqf = iso.project(&qf_fun).unwrap();
            let dev = (pqf.values() - &qf)
                .iter()
                .fold(0.0f64, |acc, &x| acc.max(x.abs()));
            assert!(dev <= 1e-8, "Q_u range must sit inside the full span");

            let qqf = q.apply(&qf);
            let idem = (&qqf - &qf).iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
            assert!(idem <= 1e-10);
        }
    }

    #[test]
    fn empty_predecessor_set_gives_zero_projection() {
        let s = t1(8);
        let d = set(&s, &[0.0, 0.5]);
        let c = voronoi_cells(&s, &d);
        let pn = build_pou(&d).unwrap();
        let gn = gram(&pn).unwrap();
        let q = cell_projection(0, &pn, &c, &gn).unwrap();
        assert!(q.is_zero());
        let f = Array1::from_elem(8, 1.0);
        assert!(q.apply(&f).iter().all(|&v| v == 0.0));
    }

    // A valid full Gram cannot hide a singular principal sub-block
    // (eigenvalue interlacing), so the guard only fires on a repeated
    // column selection.
    #[test]
    fn duplicate_subframe_columns_are_rejected() {
        let s = t1(16);
        let fine = set(&s, &[0.0, 0.5]);
        let pn = build_pou(&fine).unwrap();
        let gn = gram(&pn).unwrap();
        assert!(matches!(
            orthonormal_columns(&s, pn.phi(), &[0, 0], &gn, 3).map(|_| ()),
            Err(Error::SingularSubGram { cell: 3 })
        ));
    }

    #[test]
    fn restricted_cosine_projection_converges() {
        let s = t1(1024);
        let seed = s.point(&[0.125]).unwrap();
        let coarse = greedy_delone(&s, 0.25, seed).unwrap();
        let c = voronoi_cells(&s, &coarse);
        let restricted = GridFunction::from_fn(s, |p| {
            (2.0 * std::f64::consts::PI * p.coords()[0]).cos()
        });
        let mut masked = restricted.values().clone();
        for node in 0..s.node_count() {
            if c.assign()[node] != 0 {
                masked[node] = 0.0;
            }
        }
        let f = GridFunction::new(s, masked).unwrap();

        let mut errs = Vec::new();
        for n in 3..=6 {
            let fine = greedy_delone(&s, 0.5f64.powi(n), seed).unwrap();
            let pn = build_pou(&fine).unwrap();
            let gn = gram(&pn).unwrap();
            let q = cell_projection(0, &pn, &c, &gn).unwrap();
            let qf = q.apply(f.values());
            let err = GridFunction::new(s, f.values() - &qf).unwrap().norm();
            errs.push(err);
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "errors: {errs:?}");
        // Convergence is throttled by the boundary collar: sites whose
        // bumps straddle the cell edge never precede it, so a band of
        // width about 2R stays uncovered and the error decays like √R.
        assert!((errs[3] - 0.1108).abs() <= 1e-3, "errors: {errs:?}");
        assert!(errs[3] < 0.25 * f.norm());
    }
}
