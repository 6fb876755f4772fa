//! Delone sets on the torus: packing/covering radii, greedy generation by
//! farthest-point sampling, and control-function certification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Point, TorusSpace};

/// A finite point set with cached packing radius r(D) (min pairwise
/// distance) and covering radius R(D) (max over grid nodes of distance to
/// the set, i.e. grid-sampled).
#[derive(Clone, Debug)]
pub struct DeloneSet {
    space: TorusSpace,
    points: Vec<Point>,
    r_pack: f64,
    r_cover: f64,
    singleton_convention: bool,
}

impl DeloneSet {
    pub fn new(space: TorusSpace, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty point set".into()));
        }
        for p in &points {
            if p.dim() != space.dim() {
                return Err(Error::InvalidArgument(format!(
                    "point {p} has wrong dimension"
                )));
            }
        }
        let mut r_pack = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = space.dist(points[i], points[j]);
                if d == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate point {}",
                        points[i]
                    )));
                }
                r_pack = r_pack.min(d);
            }
        }
        // Singleton convention: r(D) = diam(X), flagged.
        let singleton_convention = points.len() == 1;
        if singleton_convention {
            r_pack = space.diameter();
        }
        let r_cover = (0..space.node_count())
            .map(|i| space.dist_to_set(space.node_point(i), &points))
            .fold(0.0f64, f64::max);
        Ok(DeloneSet {
            space,
            points,
            r_pack,
            r_cover,
            singleton_convention,
        })
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn packing_radius(&self) -> f64 {
        self.r_pack
    }

    pub fn covering_radius(&self) -> f64 {
        self.r_cover
    }

    /// True when r(D) was set to diam(X) by the singleton convention.
    pub fn uses_singleton_convention(&self) -> bool {
        self.singleton_convention
    }

    /// Max over u ∈ D of the number of points of D strictly within R of u.
    pub fn max_ball_count(&self, r: f64) -> usize {
        self.points
            .iter()
            .map(|&u| {
                self.points
                    .iter()
                    .filter(|&&v| self.space.dist(u, v) < r)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    /// Whether r(D) ≥ F(R(D)). Defined only for R(D) ≤ 1.
    pub fn is_controlled(&self, f: &ControlFunction) -> Result<bool> {
        if self.r_cover > 1.0 {
            return Err(Error::OutsideControlledDomain {
                r_cover: self.r_cover,
            });
        }
        Ok(self.r_pack >= f.eval(self.r_cover))
    }
}

/// Control function family F: [0,1] → [0,1], monotone with F(0) = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControlFunction {
    Linear { kappa: f64 },
}

impl ControlFunction {
    pub fn linear(kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidArgument(format!(
                "kappa must lie in [0, 1], got {kappa}"
            )));
        }
        Ok(ControlFunction::Linear { kappa })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ControlFunction::Linear { kappa } => kappa * t,
        }
    }
}

impl Default for ControlFunction {
    fn default() -> Self {
        ControlFunction::Linear { kappa: 0.5 }
    }
}

/// Farthest-point sampling over grid nodes starting from `seed`, adding
/// the node farthest from the current set (ties broken by node index)
/// until the grid-sampled covering radius is at most `target_r`. The
/// output satisfies r(D) ≥ R(D), hence is controlled by F(t) = t/2.
pub fn greedy_delone(space: &TorusSpace, target_r: f64, seed: Point) -> Result<DeloneSet> {
    let step = space.step();
    if target_r < step {
        return Err(Error::UnreachableCoveringRadius {
            target: target_r,
            step,
        });
    }
    let n = space.node_count();
    let mut points = vec![seed];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| space.dist(space.node_point(i), seed))
        .collect();
    loop {
        let (mut far_idx, mut far_d) = (0usize, f64::NEG_INFINITY);
        for (i, &d) in dist.iter().enumerate() {
            if d > far_d {
                far_idx = i;
                far_d = d;
            }
        }
        if far_d <= target_r {
            break;
        }
        let p = space.node_point(far_idx);
        points.push(p);
        for (i, d) in dist.iter_mut().enumerate() {
            let nd = space.dist(space.node_point(i), p);
            if nd < *d {
                *d = nd;
            }
        }
    }
    DeloneSet::new(*space, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn t1(n: usize) -> TorusSpace {
        TorusSpace::new(1, 1.0, n).unwrap()
    }

    fn set(space: TorusSpace, coords: &[f64]) -> DeloneSet {
        let pts = coords
            .iter()
            .map(|&x| space.point(&[x]).unwrap())
            .collect();
        DeloneSet::new(space, pts).unwrap()
    }

    #[test]
    fn packing_radius_examples() {
        let s = t1(8);
        assert_abs_diff_eq!(set(s, &[0.0, 0.5]).packing_radius(), 0.5);
        assert_abs_diff_eq!(set(s, &[0.0, 0.25, 0.5]).packing_radius(), 0.25);
        let full: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        assert_abs_diff_eq!(set(s, &full).packing_radius(), 0.125);
    }

    #[test]
    fn covering_radius_examples() {
        let s = t1(8);
        assert_abs_diff_eq!(set(s, &[0.0, 0.5]).covering_radius(), 0.25);
        let full: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        assert_eq!(set(s, &full).covering_radius(), 0.0);
        let single = set(s, &[0.0]);
        assert_abs_diff_eq!(single.covering_radius(), 0.5);
        assert!(single.uses_singleton_convention());
        assert_abs_diff_eq!(single.packing_radius(), 0.5); // diam(T¹) convention
    }

    #[test]
    fn duplicate_points_rejected() {
        let s = t1(8);
        let pts = vec![s.point(&[0.25]).unwrap(), s.point(&[1.25]).unwrap()];
        assert!(DeloneSet::new(s, pts).is_err());
    }

    #[test]
    fn greedy_trace_n8() {
        let s = t1(8);
        let seed = s.point(&[0.0]).unwrap();
        let d = greedy_delone(&s, 0.25, seed).unwrap();
        let coords: Vec<f64> = d.points().iter().map(|p| p.coords()[0]).collect();
        assert_eq!(coords, vec![0.0, 0.5]);
        assert_abs_diff_eq!(d.covering_radius(), 0.25);
    }

    #[test]
    fn greedy_single_point_when_target_large() {
        let s = t1(8);
        let seed = s.point(&[0.25]).unwrap();
        let d = greedy_delone(&s, 0.5, seed).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.points()[0], seed);
    }

    #[test]
    fn greedy_rejects_subresolution_target() {
        let s = t1(8);
        let seed = s.point(&[0.0]).unwrap();
        assert!(matches!(
            greedy_delone(&s, 0.01, seed),
            Err(Error::UnreachableCoveringRadius { .. })
        ));
    }

    #[test]
    fn controlled_examples() {
        let s = t1(1024);
        let half = ControlFunction::default();
        assert!(set(s, &[0.0, 0.5]).is_controlled(&half).unwrap());
        assert!(!set(s, &[0.0, 0.01, 0.5]).is_controlled(&half).unwrap());
        let zero = ControlFunction::linear(0.0).unwrap();
        assert!(set(s, &[0.0, 0.01, 0.5]).is_controlled(&zero).unwrap());
    }

    #[test]
    fn controlled_requires_unit_cover() {
        let s = TorusSpace::new(1, 4.0, 64).unwrap();
        let d = DeloneSet::new(s, vec![s.point(&[0.0]).unwrap()]).unwrap();
        assert!(matches!(
            d.is_controlled(&ControlFunction::default()),
            Err(Error::OutsideControlledDomain { .. })
        ));
    }

    #[test]
    fn max_ball_count_examples() {
        let s = t1(8);
        let d = set(s, &[0.0, 0.5]);
        assert_eq!(d.max_ball_count(0.6), 2);
        assert_eq!(d.max_ball_count(0.3), 1);
        let full: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        assert_eq!(set(s, &full).max_ball_count(0.2), 3);
    }

    #[test]
    fn bounded_geometry_inequality() {
        let s = t1(256);
        let seed = s.point(&[0.0]).unwrap();
        let all: Vec<usize> = (0..s.node_count()).collect();
        for target in [0.25, 0.125, 0.0625] {
            let d = greedy_delone(&s, target, seed).unwrap();
            let r = d.packing_radius();
            for radius in [0.1, 0.25, 0.5] {
                let (c, _) = s.check_bounded_geometry(r / 2.0, &all).unwrap();
                let (_, big_c) = s.check_bounded_geometry(radius + r / 2.0, &all).unwrap();
                assert!(d.max_ball_count(radius) as f64 * c <= big_c + 1e-12);
            }
        }
    }

    #[test]
    fn radii_weakly_decrease_under_growth() {
        let s = t1(256);
        let seed = s.point(&[0.0]).unwrap();
        let d = greedy_delone(&s, 0.0625, seed).unwrap();
        let mut prev_cover = f64::INFINITY;
        let mut prev_pack = f64::INFINITY;
        for k in 2..=d.len() {
            let prefix = DeloneSet::new(s, d.points()[..k].to_vec()).unwrap();
            assert!(prefix.covering_radius() <= prev_cover + 1e-15);
            assert!(prefix.packing_radius() <= prev_pack + 1e-15);
            prev_cover = prefix.covering_radius();
            prev_pack = prefix.packing_radius();
        }
    }

    proptest! {
        #[test]
        fn greedy_outputs_are_packed_at_least_as_well_as_covered(
            seed_coord in 0.0f64..1.0,
            target in 0.02f64..0.5,
        ) {
            let s = t1(128);
            let seed = s.point(&[seed_coord]).unwrap();
            let d = greedy_delone(&s, target, seed).unwrap();
            prop_assert!(d.covering_radius() <= target);
            if d.len() > 1 {
                prop_assert!(d.packing_radius() >= d.covering_radius() - 1e-12);
            }
            prop_assert!(d.is_controlled(&ControlFunction::default()).unwrap());
        }
    }
}
