//! Finite-propagation operators on l²(D), grid operators on L²(X), the
//! per-cell rank truncation, and the compression maps α and β between them.
//!
//! Uniform quadrature weights keep every adjoint a scaled transpose, so all
//! operator norms below are plain spectral norms.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{preceding_sites, CellPartition};
use crate::delone::{greedy_delone, DeloneSet};
use crate::error::{Error, Result};
use crate::gram::{gram, isometry, GramData, Isometry};
use crate::linalg::spectral_norm;
use crate::pou::{build_pou, PartitionOfUnity};
use crate::space::{GridFunction, Point, TorusSpace};

/// Matrix over the sites of a Delone set, with its propagation
/// (max site distance over nonzero entries) cached at construction.
#[derive(Clone, Debug)]
pub struct FinitePropOperator {
    sites: DeloneSet,
    m: Array2<f64>,
    prop: f64,
}

impl FinitePropOperator {
    pub fn new(sites: DeloneSet, m: Array2<f64>) -> Result<Self> {
        let k = sites.len();
        if m.nrows() != k || m.ncols() != k {
            return Err(Error::SiteMismatch {
                expected: k,
                found: m.nrows().max(m.ncols()),
            });
        }
        let pts = sites.points();
        let space = *sites.space();
        let mut prop = 0.0f64;
        for u in 0..k {
            for v in 0..k {
                if m[[u, v]] != 0.0 {
                    prop = prop.max(space.dist(pts[u], pts[v]));
                }
            }
        }
        Ok(FinitePropOperator { sites, m, prop })
    }

    pub fn identity(sites: DeloneSet) -> Self {
        let k = sites.len();
        FinitePropOperator {
            sites,
            m: Array2::eye(k),
            prop: 0.0,
        }
    }

    pub fn sites(&self) -> &DeloneSet {
        &self.sites
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn propagation(&self) -> f64 {
        self.prop
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.m)
    }

    /// max |M − Mᵀ|; l²(D) carries counting measure, so the adjoint is the
    /// plain transpose.
    pub fn self_adjoint_defect(&self) -> f64 {
        let k = self.m.nrows();
        let mut d = 0.0f64;
        for u in 0..k {
            for v in 0..k {
                d = d.max((self.m[[u, v]] - self.m[[v, u]]).abs());
            }
        }
        d
    }
}

/// Dense operator on grid functions. Adjoints are taken w.r.t. the
/// quadrature weights; with uniform weights this is the plain transpose
/// and the weighted operator norm equals the spectral norm.
#[derive(Clone, Debug)]
pub struct GridOperator {
    space: TorusSpace,
    m: Array2<f64>,
}

impl GridOperator {
    pub fn new(space: TorusSpace, m: Array2<f64>) -> Result<Self> {
        let n = space.node_count();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "grid operator must be {n}x{n}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(GridOperator { space, m })
    }

    pub fn identity(space: TorusSpace) -> Self {
        let n = space.node_count();
        GridOperator {
            space,
            m: Array2::eye(n),
        }
    }

    /// Multiplication by a grid function: diag(f).
    pub fn multiplication(f: &GridFunction) -> Self {
        let space = *f.space();
        let n = space.node_count();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = f.values()[i];
        }
        GridOperator { space, m }
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.m)
    }

    pub fn self_adjoint_defect(&self) -> f64 {
        let n = self.m.nrows();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                d = d.max((self.m[[i, j]] - self.m[[j, i]]).abs());
            }
        }
        d
    }

    /// Same operator scaled to unit norm; the zero operator is returned
    /// unchanged.
    pub fn normalized(&self) -> GridOperator {
        let nm = self.norm();
        if nm == 0.0 {
            return self.clone();
        }
        GridOperator {
            space: self.space,
            m: &self.m / nm,
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        GridFunction::new(self.space, self.m.dot(f.values()))
    }
}

/// Per-cell coordinate ordering and rank cutoff. Nodes of each cell are
/// sorted by distance to the site with index tie-break; scaled node
/// indicators are quadrature-orthonormal, so this fixes one isometric
/// identification of each L²(V_u) with coordinate space.
#[derive(Clone, Debug)]
pub struct BlockRank {
    order: Vec<Vec<usize>>,
    rank: usize,
    n_nodes: usize,
}

impl BlockRank {
    pub fn new(c: &CellPartition, rank: usize) -> Result<Self> {
        let min_size = c.min_cell_size();
        if rank > min_size {
            return Err(Error::CutoffTooLarge {
                cutoff: rank,
                cell_size: min_size,
            });
        }
        let space = *c.space();
        let pts = c.delone().points();
        let mut order = Vec::with_capacity(c.cells().len());
        for (u, cell) in c.cells().iter().enumerate() {
            let mut nodes = cell.clone();
            nodes.sort_by(|&a, &b| {
                let da = space.dist(space.node_point(a), pts[u]);
                let db = space.dist(space.node_point(b), pts[u]);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            order.push(nodes);
        }
        Ok(BlockRank {
            order,
            rank,
            n_nodes: space.node_count(),
        })
    }

    pub fn order(&self) -> &[Vec<usize>] {
        &self.order
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Indicator of the first `rank` coordinates of every cell.
    pub fn kept_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes];
        for nodes in &self.order {
            for &x in nodes.iter().take(self.rank) {
                mask[x] = true;
            }
        }
        mask
    }
}

/// P_m S P_m with P_m the projection onto the first `rank` coordinates of
/// every cell: rows and columns of dropped nodes are zeroed. Idempotent
/// for a fixed cutoff and exactly the identity once the cutoff reaches
/// every cell size.
pub fn truncate_k(s: &GridOperator, c: &CellPartition, b: &BlockRank) -> Result<GridOperator> {
    if s.space() != c.space() {
        return Err(Error::SpaceMismatch);
    }
    if b.n_nodes != s.space().node_count() || b.order.len() != c.cells().len() {
        return Err(Error::InvalidArgument(
            "block rank was built for a different partition".into(),
        ));
    }
    let mask = b.kept_mask();
    let n = b.n_nodes;
    let mut m = s.m.clone();
    for i in 0..n {
        for j in 0..n {
            if !mask[i] || !mask[j] {
                m[[i, j]] = 0.0;
            }
        }
    }
    GridOperator::new(*s.space(), m)
}

/// α(T) = U T U*W: carries a site matrix to the grid operator acting on
/// the span of the frame. Exactly multiplicative because U*WU = I.
pub fn alpha(iso: &Isometry, t: &FinitePropOperator) -> Result<GridOperator> {
    let d = iso.delone();
    if t.sites.len() != d.len() {
        return Err(Error::SiteMismatch {
            expected: d.len(),
            found: t.sites.len(),
        });
    }
    if t.sites.space() != iso.space()
        || t.sites
            .points()
            .iter()
            .zip(d.points())
            .any(|(a, b)| iso.space().dist(*a, *b) != 0.0)
    {
        return Err(Error::InvalidArgument(
            "operator sites differ from the isometry sites".into(),
        ));
    }
    let u = iso.matrix();
    let m = u.dot(&t.m).dot(&u.t()) * iso.space().weight();
    GridOperator::new(*iso.space(), m)
}

/// β(S) = U*W S U: compresses a grid operator to the current site set.
/// Unital on the range of α, positive and contractive.
pub fn beta(iso: &Isometry, s: &GridOperator) -> Result<FinitePropOperator> {
    if s.space() != iso.space() {
        return Err(Error::SpaceMismatch);
    }
    let u = iso.matrix();
    let m = u.t().dot(&s.m).dot(u) * iso.space().weight();
    FinitePropOperator::new(iso.delone().clone(), m)
}

/// Distinct node distances of the grid, ascending from 0 to the diameter.
fn distance_grid(space: &TorusSpace) -> Vec<f64> {
    let half = space.grid_n() / 2;
    let step = space.step();
    let mut out = Vec::new();
    match space.dim() {
        1 => {
            for k in 0..=half {
                out.push(k as f64 * step);
            }
        }
        _ => {
            for i in 0..=half {
                for j in 0..=half {
                    let dx = i as f64 * step;
                    let dy = j as f64 * step;
                    out.push((dx * dx + dy * dy).sqrt());
                }
            }
            out.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        }
    }
    out
}

/// Smallest distance s in the grid's distance set such that zeroing every
/// entry at node distance > s perturbs the operator by less than `eps` in
/// norm. Scans ascending; Frobenius and column-norm bounds bracket the
/// spectral norm so the dense eigensolver only runs near the threshold.
pub fn eps_propagation(s: &GridOperator, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let space = s.space();
    let n = space.node_count();
    let pts: Vec<Point> = (0..n).map(|i| space.node_point(i)).collect();
    let grid = distance_grid(space);
    let slack = 1e-12;
    for &thr in &grid {
        let mut tail = Array2::<f64>::zeros((n, n));
        let mut any = false;
        for i in 0..n {
            for j in 0..n {
                if space.dist(pts[i], pts[j]) > thr + slack {
                    tail[[i, j]] = s.m[[i, j]];
                    if s.m[[i, j]] != 0.0 {
                        any = true;
                    }
                }
            }
        }
        if !any {
            return Ok(thr);
        }
        let mut frob2 = 0.0f64;
        let mut col2 = vec![0.0f64; n];
        for i in 0..n {
            for j in 0..n {
                let e = tail[[i, j]];
                frob2 += e * e;
                col2[j] += e * e;
            }
        }
        let col_max = col2.iter().cloned().fold(0.0f64, f64::max).sqrt();
        if col_max >= eps {
            continue;
        }
        if frob2.sqrt() < eps || spectral_norm(&tail) < eps {
            return Ok(thr);
        }
    }
    Ok(*grid.last().unwrap())
}

/// Self-adjoint site matrix with entries uniform in [−1,1] on pairs within
/// `band`, normalized to unit norm. Entry order is fixed, so a seed pins
/// the instance exactly.
pub fn random_banded(sites: &DeloneSet, band: f64, seed: u64) -> Result<FinitePropOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = sites.len();
    let pts = sites.points();
    let space = *sites.space();
    let mut m = Array2::<f64>::zeros((k, k));
    for u in 0..k {
        for v in u..k {
            if space.dist(pts[u], pts[v]) <= band {
                let e: f64 = rng.random_range(-1.0..=1.0);
                m[[u, v]] = e;
                m[[v, u]] = e;
            }
        }
    }
    let nm = spectral_norm(&m);
    if nm > 0.0 {
        m /= nm;
    }
    FinitePropOperator::new(sites.clone(), m)
}

/// Grid analogue of [`random_banded`]: band by node distance.
pub fn random_banded_grid(space: &TorusSpace, band: f64, seed: u64) -> Result<GridOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.node_count();
    let pts: Vec<Point> = (0..n).map(|i| space.node_point(i)).collect();
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            if space.dist(pts[i], pts[j]) <= band {
                let e: f64 = rng.random_range(-1.0..=1.0);
                m[[i, j]] = e;
                m[[j, i]] = e;
            }
        }
    }
    let nm = spectral_norm(&m);
    if nm > 0.0 {
        m /= nm;
    }
    GridOperator::new(*space, m)
}

/// One stage of a refinement schedule: partition of unity, Gram data and
/// isometry over a fixed Delone set.
#[derive(Clone, Debug)]
pub struct StageData {
    gram: GramData,
    iso: Isometry,
}

impl StageData {
    pub fn build(d: &DeloneSet) -> Result<StageData> {
        let pn = build_pou(d)?;
        let g = gram(&pn)?;
        let iso = isometry(&pn, &g);
        Ok(StageData { gram: g, iso })
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        self.iso.pou()
    }

    pub fn gram(&self) -> &GramData {
        &self.gram
    }

    pub fn iso(&self) -> &Isometry {
        &self.iso
    }

    pub fn delone(&self) -> &DeloneSet {
        self.iso.delone()
    }

    pub fn r_cover(&self) -> f64 {
        self.delone().covering_radius()
    }
}

/// Greedy Delone sets for each covering target, each with its stage data.
pub fn build_stages(space: &TorusSpace, targets: &[f64], seed: Point) -> Result<Vec<StageData>> {
    targets
        .iter()
        .map(|&t| StageData::build(&greedy_delone(space, t, seed)?))
        .collect()
}

/// Per-cell quadrature-orthonormal columns spanning the frame functions of
/// the first min(rank, m_u) preceding sites of the current stage. The
/// associated projection Π = Σ_u B_u B_u*W represents rank-limited
/// per-cell operators inside the stage's range: supports of distinct
/// cells are disjoint, so the concatenated columns stay orthonormal.
#[derive(Clone, Debug)]
pub struct AdaptedBasis {
    blocks: Vec<Array2<f64>>,
    space: TorusSpace,
    rank: usize,
    min_precede: usize,
}

pub fn adapted_basis(
    pn: &PartitionOfUnity,
    c: &CellPartition,
    gn: &GramData,
    rank: usize,
) -> Result<AdaptedBasis> {
    if pn.space() != c.space() {
        return Err(Error::SpaceMismatch);
    }
    let prec = preceding_sites(pn, c);
    let min_precede = prec.iter().map(|p| p.len()).min().unwrap_or(0);
    let mut blocks = Vec::with_capacity(prec.len());
    for (u, sites) in prec.iter().enumerate() {
        let take = rank.min(sites.len());
        let cols =
            crate::cells::orthonormal_columns(pn.space(), pn.phi(), &sites[..take], gn, u)?;
        blocks.push(cols);
    }
    Ok(AdaptedBasis {
        blocks,
        space: *pn.space(),
        rank,
        min_precede,
    })
}

impl AdaptedBasis {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// min over cells of the full preceding-site count, before the cutoff.
    pub fn min_precede(&self) -> usize {
        self.min_precede
    }

    pub fn total_columns(&self) -> usize {
        self.blocks.iter().map(|b| b.ncols()).sum()
    }

    fn stacked(&self) -> Array2<f64> {
        let n = self.space.node_count();
        let r = self.total_columns();
        let mut b = Array2::zeros((n, r));
        let mut at = 0;
        for block in &self.blocks {
            for col in block.columns() {
                b.column_mut(at).assign(&col);
                at += 1;
            }
        }
        b
    }

    /// Π as a dense matrix: w·B Bᵀ.
    pub fn projector(&self) -> Array2<f64> {
        let b = self.stacked();
        b.dot(&b.t()) * self.space.weight()
    }

    /// Π S Π = w²·B (Bᵀ S B) Bᵀ, without forming Π.
    pub fn compress(&self, s: &GridOperator) -> Result<GridOperator> {
        if s.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        let b = self.stacked();
        if b.ncols() == 0 {
            return GridOperator::new(self.space, Array2::zeros(s.m.dim()));
        }
        let w = self.space.weight();
        let core = b.t().dot(&s.m).dot(&b) * (w * w);
        GridOperator::new(self.space, b.dot(&core).dot(&b.t()))
    }
}

#[derive(Clone, Debug)]
pub struct AlphaBetaRow {
    pub n: usize,
    pub r_cover: f64,
    /// min over cells of the stage's preceding-site count.
    pub m_min: usize,
    /// ‖α(β(T_n)) − T_n‖ for the stage representative T_n = Π_n T Π_n.
    pub defect: f64,
    /// ‖α(β(T_n)) − T‖ against the fixed input operator.
    pub input_gap: f64,
}

/// Reconstruction table for α∘β along a refinement schedule. Each stage
/// compresses the input to its own rank-limited representative T_n; the
/// representative lies inside the stage's range, so the reconstruction
/// defect collapses once every cell carries at least `b.rank()` preceding
/// sites, while `input_gap` tracks the distance to the fixed input.
pub fn alpha_beta_defect(
    stages: &[StageData],
    t: &GridOperator,
    c: &CellPartition,
    b: &BlockRank,
) -> Result<Vec<AlphaBetaRow>> {
    let mut rows = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        let ab = adapted_basis(stage.pou(), c, stage.gram(), b.rank())?;
        let t_n = ab.compress(t)?;
        let recon = alpha(stage.iso(), &beta(stage.iso(), &t_n)?)?;
        let defect = spectral_norm(&(&recon.m - &t_n.m));
        let input_gap = spectral_norm(&(&recon.m - &t.m));
        rows.push(AlphaBetaRow {
            n: i + 1,
            r_cover: stage.r_cover(),
            m_min: ab.min_precede(),
            defect,
            input_gap,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct MultRow {
    pub n: usize,
    pub r_cover: f64,
    /// ‖β(RS) − β(R)β(S)‖.
    pub defect: f64,
}

/// Multiplicativity defect of β along a schedule. β(RS) − β(R)β(S) equals
/// U*W R (I − P) S U, so the N×N product RS is never formed.
pub fn multiplicativity_defect(
    stages: &[StageData],
    r: &GridOperator,
    s: &GridOperator,
) -> Result<Vec<MultRow>> {
    if r.space() != s.space() {
        return Err(Error::SpaceMismatch);
    }
    let mut rows = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        if s.space() != stage.iso().space() {
            return Err(Error::SpaceMismatch);
        }
        let u = stage.iso().matrix();
        let w = stage.iso().space().weight();
        let su = s.m.dot(u);
        let psu = u.dot(&(u.t().dot(&su) * w));
        let r_tail = r.m.dot(&(&su - &psu));
        let defect_m = u.t().dot(&r_tail) * w;
        rows.push(MultRow {
            n: i + 1,
            r_cover: stage.r_cover(),
            defect: spectral_norm(&defect_m),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct NormRow {
    pub n: usize,
    pub r_cover: f64,
    /// ‖β(S)‖ at this stage.
    pub value: f64,
    /// |‖β(S)‖ − ‖P S P‖|, the proof identity checked through an
    /// independent dense route.
    pub identity_dev: f64,
}

#[derive(Clone, Debug)]
pub struct NormConvergence {
    pub s_norm: f64,
    pub rows: Vec<NormRow>,
}

impl NormConvergence {
    /// |‖β(S)‖ − ‖S‖| at the finest stage.
    pub fn final_gap(&self) -> f64 {
        self.rows
            .last()
            .map(|r| (r.value - self.s_norm).abs())
            .unwrap_or(self.s_norm)
    }
}

/// ‖β(S)‖ per stage, with the dense ‖P S P‖ cross-check. No monotonicity
/// is asserted; only the profile and the final gap are reported.
pub fn norm_convergence(stages: &[StageData], s: &GridOperator) -> Result<NormConvergence> {
    let mut rows = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        let value = beta(stage.iso(), s)?.norm();
        let u = stage.iso().matrix();
        let w = stage.iso().space().weight();
        let p = u.dot(&u.t()) * w;
        let psp = p.dot(&s.m).dot(&p);
        let identity_dev = (value - spectral_norm(&psp)).abs();
        rows.push(NormRow {
            n: i + 1,
            r_cover: stage.r_cover(),
            value,
            identity_dev,
        });
    }
    Ok(NormConvergence {
        s_norm: s.norm(),
        rows,
    })
}
