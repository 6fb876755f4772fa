//! Gram matrix of a partition frame, its spectral square roots, the
//! induced isometry onto the span H^D, and the strong-convergence
//! experiment for the projections P_D along a refining sequence.

use ndarray::{Array1, Array2};

use crate::delone::DeloneSet;
use crate::error::{Error, Result};
use crate::linalg::{eigh, spectral_transform};
use crate::pou::{build_pou, PartitionOfUnity};
use crate::space::{GridFunction, TorusSpace};

pub const EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GramData {
    g: Array2<f64>,
    eigvals: Array1<f64>,
    g_half: Array2<f64>,
    g_invhalf: Array2<f64>,
    lambda_min: f64,
}

impl GramData {
    /// Gram matrix of arbitrary column data under the quadrature inner
    /// product, with spectral square roots. Fails below the eigenvalue
    /// floor instead of regularizing.
    pub fn from_columns(space: &TorusSpace, columns: &Array2<f64>) -> Result<Self> {
        if columns.nrows() != space.node_count() || columns.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "column data does not match the grid".into(),
            ));
        }
        let w = space.weight();
        let raw = columns.t().dot(columns);
        let g = (&raw + &raw.t()) * (w / 2.0);
        let (eigvals, vecs) = eigh(&g)?;
        let lambda_min = eigvals[0];
        if lambda_min < EIGENVALUE_FLOOR {
            return Err(Error::NearSingularGram {
                lambda_min,
                floor: EIGENVALUE_FLOOR,
            });
        }
        let g_half = spectral_transform(&eigvals, &vecs, f64::sqrt);
        let g_invhalf = spectral_transform(&eigvals, &vecs, |v| 1.0 / v.sqrt());
        Ok(GramData {
            g,
            eigvals,
            g_half,
            g_invhalf,
            lambda_min,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    pub fn eigvals(&self) -> &Array1<f64> {
        &self.eigvals
    }

    pub fn half(&self) -> &Array2<f64> {
        &self.g_half
    }

    pub fn inv_half(&self) -> &Array2<f64> {
        &self.g_invhalf
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn cond(&self) -> f64 {
        self.eigvals[self.eigvals.len() - 1] / self.lambda_min
    }
}

pub fn gram(pou: &PartitionOfUnity) -> Result<GramData> {
    GramData::from_columns(pou.space(), pou.phi())
}

/// Lower bound for the smallest Gram eigenvalue: the lightest plateau,
/// min_u μ_grid(B_{r/6}(u)).
pub fn gram_lower_bound(pou: &PartitionOfUnity) -> f64 {
    let space = pou.space();
    let radius = pou.packing_radius() / 6.0;
    pou.delone()
        .points()
        .iter()
        .map(|&p| space.ball_measure(p, radius))
        .fold(f64::INFINITY, f64::min)
}

/// Upper bound for ‖G‖ from the overlap structure: N_adj²·max|g_uv|,
/// where N_adj counts the sites whose supports meet a given one.
pub fn gram_upper_bound(g: &GramData) -> f64 {
    let m = g.matrix();
    let k = m.ncols();
    let mut n_adj = 0usize;
    let mut gmax = 0.0f64;
    for u in 0..k {
        let mut row = 0usize;
        for v in 0..k {
            let e = m[[u, v]].abs();
            if e != 0.0 {
                row += 1;
            }
            if e > gmax {
                gmax = e;
            }
        }
        n_adj = n_adj.max(row);
    }
    (n_adj * n_adj) as f64 * gmax
}

#[derive(Clone, Debug)]
pub struct Isometry {
    pou: PartitionOfUnity,
    u: Array2<f64>,
}

/// U = Φ·G^{-1/2}; columns form a quadrature-orthonormal basis of the
/// span of the φ_u.
pub fn isometry(pou: &PartitionOfUnity, g: &GramData) -> Isometry {
    let u = pou.phi().dot(g.inv_half());
    Isometry {
        pou: pou.clone(),
        u,
    }
}

impl Isometry {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        &self.pou
    }

    pub fn delone(&self) -> &DeloneSet {
        self.pou.delone()
    }

    pub fn space(&self) -> &TorusSpace {
        self.pou.space()
    }

    /// U* f under the quadrature inner product (uniform weights make the
    /// weighted adjoint a scaled transpose).
    pub fn coefficients(&self, f: &GridFunction) -> Result<Array1<f64>> {
        if f.space() != self.space() {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.u.t().dot(f.values()) * self.space().weight())
    }

    /// P_D f = U U* f, the orthogonal projection onto H^D.
    pub fn project(&self, f: &GridFunction) -> Result<GridFunction> {
        let coeff = self.coefficients(f)?;
        GridFunction::new(*self.space(), self.u.dot(&coeff))
    }

    /// max |(U*WU − I)_{uv}|.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.u.ncols();
        let m = self.u.t().dot(&self.u) * self.space().weight();
        let mut defect = 0.0f64;
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { 1.0 } else { 0.0 };
                defect = defect.max((m[[a, b]] - target).abs());
            }
        }
        defect
    }
}

pub fn project(iso: &Isometry, f: &GridFunction) -> Result<GridFunction> {
    iso.project(f)
}

#[derive(Clone, Debug)]
pub struct StrongStep {
    pub n: usize,
    pub r_cover: f64,
    /// ‖f − P_{D_n} f‖.
    pub error: f64,
    /// A-priori bound ω_f(2R)·√μ(X) from the modulus of continuity.
    pub bound: f64,
    pub ok: bool,
}

/// Empirical modulus of continuity of sampled values at scale t.
fn modulus_of_continuity(space: &TorusSpace, values: &Array1<f64>, t: f64) -> f64 {
    let n = space.node_count();
    let mut omega = 0.0f64;
    for i in 0..n {
        let xi = space.node_point(i);
        for j in (i + 1)..n {
            if space.dist(xi, space.node_point(j)) <= t {
                omega = omega.max((values[i] - values[j]).abs());
            }
        }
    }
    omega
}

/// Projection error ‖f − P_{D_n} f‖ along a refining sequence, against
/// the modulus-of-continuity bound that drives strong convergence.
pub fn strong_convergence(
    space: &TorusSpace,
    f: &GridFunction,
    seq: &[DeloneSet],
) -> Result<Vec<StrongStep>> {
    if f.space() != space {
        return Err(Error::SpaceMismatch);
    }
    for w in seq.windows(2) {
        if w[1].covering_radius() >= w[0].covering_radius() {
            return Err(Error::InvalidArgument(
                "covering radii must strictly decrease".into(),
            ));
        }
    }
    let sqrt_mass = space.total_measure().sqrt();
    let mut out = Vec::with_capacity(seq.len());
    for (i, d) in seq.iter().enumerate() {
        let pou = build_pou(d)?;
        let iso = isometry(&pou, &gram(&pou)?);
        let projected = iso.project(f)?;
        let residual = GridFunction::new(*space, f.values() - projected.values())?;
        let error = residual.norm();
        let bound = modulus_of_continuity(space, f.values(), 2.0 * d.covering_radius()) * sqrt_mass;
        out.push(StrongStep {
            n: i + 1,
            r_cover: d.covering_radius(),
            error,
            bound,
            ok: error <= bound + 1e-8,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delone::greedy_delone;
    use crate::space::Point;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use ndarray_linalg::Solve;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

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

    fn random_function(space: &TorusSpace, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridFunction::new(
            *space,
            Array1::from_iter((0..space.node_count()).map(|_| rng.random_range(-1.0..1.0))),
        )
        .unwrap()
    }

    fn cosine(space: &TorusSpace) -> GridFunction {
        GridFunction::from_fn(*space, |p| (2.0 * std::f64::consts::PI * p.coords()[0]).cos())
    }

    #[test]
    fn single_site_gram_and_projection() {
        let s = t1(64);
        let d = set(&s, &[0.5]);
        let pou = build_pou(&d).unwrap();
        let g = gram(&pou).unwrap();
        assert_abs_diff_eq!(g.matrix()[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.lambda_min(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.half()[[0, 0]], 1.0, epsilon = 1e-12);

        let iso = isometry(&pou, &g);
        assert!(iso.matrix().iter().all(|&v| (v - 1.0).abs() <= 1e-12));
        let projected = iso.project(&cosine(&s)).unwrap();
        assert!(projected.norm() <= 1e-12);

        let f = random_function(&s, 5);
        let mean = f.values().mean().unwrap();
        let pf = iso.project(&f).unwrap();
        assert!(pf.values().iter().all(|&v| (v - mean).abs() <= 1e-10));
    }

    #[test]
    fn pair_gram_matches_hand_integrals() {
        let s = t1(1024);
        let d = set(&s, &[0.0, 0.5]);
        let pou = build_pou(&d).unwrap();
        let g = gram(&pou).unwrap();
        let m = g.matrix();
        assert_eq!(m[[0, 1]], m[[1, 0]]);
        assert_abs_diff_eq!(m[[0, 0]], 7.0 / 18.0, epsilon = 1e-4);
        assert_abs_diff_eq!(m[[0, 1]], 1.0 / 9.0, epsilon = 1e-4);
        assert!(m[[0, 0]] > m[[0, 1]] && m[[0, 1]] > 0.0);

        let bound = gram_lower_bound(&pou);
        assert!(m[[0, 0]] - m[[0, 1]] >= bound);
        assert!(g.lambda_min() >= bound - 1e-9);
        assert_abs_diff_eq!(g.lambda_min(), m[[0, 0]] - m[[0, 1]], epsilon = 1e-12);
        let top = g.eigvals()[1];
        assert!(top <= gram_upper_bound(&g));
    }

    #[test]
    fn square_roots_invert() {
        let s = t1(256);
        let d = greedy_delone(&s, 0.06, s.point(&[0.0]).unwrap()).unwrap();
        let g = gram(&build_pou(&d).unwrap()).unwrap();
        let k = g.matrix().ncols();
        let back = g.half().dot(g.half());
        let ident = g.inv_half().dot(g.half());
        for a in 0..k {
            for b in 0..k {
                assert_abs_diff_eq!(back[[a, b]], g.matrix()[[a, b]], epsilon = 1e-9);
                let target = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ident[[a, b]], target, epsilon = 1e-9);
            }
        }
        for (i, &v) in g.eigvals().iter().enumerate() {
            assert!(v > 0.0, "eigenvalue {i} not positive");
        }
    }

    #[test]
    fn duplicate_columns_are_rejected() {
        let s = t1(64);
        let d = set(&s, &[0.0, 0.5]);
        let pou = build_pou(&d).unwrap();
        let col = pou.column(0).to_owned();
        let mut dup = Array2::zeros((s.node_count(), 2));
        dup.column_mut(0).assign(&col);
        dup.column_mut(1).assign(&col);
        assert!(matches!(
            GramData::from_columns(&s, &dup),
            Err(Error::NearSingularGram { .. })
        ));
    }

    #[test]
    fn isometry_properties_on_generated_set() {
        let s = t1(256);
        let d = greedy_delone(&s, 0.06, s.point(&[0.0]).unwrap()).unwrap();
        let pou = build_pou(&d).unwrap();
        let g = gram(&pou).unwrap();
        let iso = isometry(&pou, &g);
        assert!(iso.orthonormality_defect() <= 1e-8);

        let f = random_function(&s, 11);
        let pf = iso.project(&f).unwrap();
        let ppf = iso.project(&pf).unwrap();
        let idem: f64 = (pf.values() - ppf.values())
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!(idem <= 1e-8);
        assert!(pf.norm() <= f.norm() + 1e-12);

        let h = random_function(&s, 12);
        let ph = iso.project(&h).unwrap();
        assert_abs_diff_eq!(pf.inner(&h).unwrap(), f.inner(&ph).unwrap(), epsilon = 1e-10);

        for u in 0..pou.len() {
            let phi_u = GridFunction::new(s, pou.column(u).to_owned()).unwrap();
            let fixed = iso.project(&phi_u).unwrap();
            let dev: f64 = (fixed.values() - phi_u.values())
                .iter()
                .fold(0.0f64, |acc, &v| acc.max(v.abs()));
            assert!(dev <= 1e-8, "site {u} not fixed by the projection");
        }
    }

    #[test]
    fn one_site_per_node_projects_identically() {
        let s = t1(16);
        let coords: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let d = set(&s, &coords);
        let pou = PartitionOfUnity::from_raw(d, Array2::eye(16)).unwrap();
        let g = gram(&pou).unwrap();
        assert_abs_diff_eq!(g.lambda_min(), s.weight(), epsilon = 1e-14);
        let iso = isometry(&pou, &g);
        let f = random_function(&s, 3);
        let pf = iso.project(&f).unwrap();
        for (a, b) in pf.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn strong_convergence_constant_is_exact() {
        let s = t1(256);
        let seed = s.point(&[0.0]).unwrap();
        let seq: Vec<DeloneSet> = (1..=4)
            .map(|n| greedy_delone(&s, 0.5f64.powi(n), seed).unwrap())
            .collect();
        let f = GridFunction::constant(s, 2.5);
        let steps = strong_convergence(&s, &f, &seq).unwrap();
        for st in &steps {
            assert!(st.error <= 1e-12);
            assert_eq!(st.bound, 0.0);
            assert!(st.ok);
        }
    }

    // The greedy seed phase matters: seeded at 0 the two-site span happens
    // to reproduce the cosine almost exactly (the stage-2 trapezoid wave),
    // which breaks monotonicity at stage 3. An eighth-turn offset gives
    // the generic profile.
    #[test]
    fn strong_convergence_cosine_decreases() {
        let s = t1(1024);
        let seed = s.point(&[0.125]).unwrap();
        let seq: Vec<DeloneSet> = (1..=6)
            .map(|n| greedy_delone(&s, 0.5f64.powi(n), seed).unwrap())
            .collect();
        let steps = strong_convergence(&s, &cosine(&s), &seq).unwrap();
        for w in steps.windows(2) {
            assert!(w[1].error < w[0].error, "errors must strictly decrease");
        }
        for st in &steps {
            assert!(st.ok, "stage {} exceeded its modulus bound", st.n);
        }
        assert!(steps.last().unwrap().error < 0.05);
    }

    #[test]
    fn projection_matches_dense_solve_oracle() {
        let s = t1(256);
        let d = greedy_delone(&s, 0.25, s.point(&[0.0]).unwrap()).unwrap();
        let pou = build_pou(&d).unwrap();
        let g = gram(&pou).unwrap();
        let iso = isometry(&pou, &g);

        let site = d.points()[0];
        let radius = d.packing_radius() / 6.0;
        let f = GridFunction::from_fn(s, |p| (radius - s.dist(p, site)).max(0.0));

        let rhs = pou.phi().t().dot(f.values()) * s.weight();
        let coeff = g.matrix().solve(&rhs).unwrap();
        let oracle = pou.phi().dot(&coeff);

        let ours = iso.project(&f).unwrap();
        for (a, b) in ours.values().iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let res = GridFunction::new(s, f.values() - &oracle).unwrap().norm();
        let err = GridFunction::new(s, f.values() - ours.values())
            .unwrap()
            .norm();
        assert!(err <= res + 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn isometry_invariants(seed in 0.0f64..1.0, exp in 2u32..5, fseed in 0u64..1000) {
            let s = t1(128);
            let d = greedy_delone(&s, 0.5f64.powi(exp as i32), s.point(&[seed]).unwrap()).unwrap();
            let pou = build_pou(&d).unwrap();
            let g = gram(&pou).unwrap();
            prop_assert!(g.lambda_min() >= gram_lower_bound(&pou) - 1e-9);
            prop_assert!(*g.eigvals().last().unwrap() <= gram_upper_bound(&g) + 1e-12);
            let iso = isometry(&pou, &g);
            prop_assert!(iso.orthonormality_defect() <= 1e-8);
            let f = random_function(&s, fseed);
            let pf = iso.project(&f).unwrap();
            prop_assert!(pf.norm() <= f.norm() + 1e-12);
        }
    }
}
