//! A Chabauty-type metric ρ on finite point sets (with the full grid
//! standing in for the ambient space X), sequence diagnostics along
//! refinements, and the ε-net construction used by the compactness check.

use crate::delone::{greedy_delone, DeloneSet};
use crate::error::{Error, Result};
use crate::space::{Point, TorusSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

/// The point achieving the largest directed constraint in ρ.
#[derive(Clone, Copy, Debug)]
pub struct Witness {
    pub point: Point,
    pub direction: Direction,
    pub constraint: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct RhoResult {
    /// min(1, max over directed point constraints)
    pub value: f64,
    pub witness: Witness,
}

fn inv(d: f64) -> f64 {
    if d == 0.0 {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

/// Largest constraint over x ∈ a: each point demands ε ≥ min(d(x, b),
/// 1/d(x, x0)) before it is either absorbed by the closed ε-neighborhood
/// of b or expelled from the ball B_{1/ε}(x0).
fn directed_sup(space: &TorusSpace, a: &[Point], b: &[Point]) -> (f64, Point) {
    let x0 = space.basepoint();
    let mut best = f64::NEG_INFINITY;
    let mut best_point = a[0];
    for &x in a {
        let c = space.dist_to_set(x, b).min(inv(space.dist(x, x0)));
        if c > best {
            best = c;
            best_point = x;
        }
    }
    (best, best_point)
}

/// The metric ρ, evaluated in closed form. Closed ε-neighborhoods make
/// the defining infimum attained, so the max of the per-point constraints
/// (capped at 1) is exact.
pub fn rho(space: &TorusSpace, d1: &[Point], d2: &[Point]) -> Result<RhoResult> {
    if d1.is_empty() || d2.is_empty() {
        return Err(Error::InvalidArgument("rho of an empty set".into()));
    }
    let (c12, w12) = directed_sup(space, d1, d2);
    let (c21, w21) = directed_sup(space, d2, d1);
    let (constraint, point, direction) = if c12 >= c21 {
        (c12, w12, Direction::AToB)
    } else {
        (c21, w21, Direction::BToA)
    };
    Ok(RhoResult {
        value: constraint.min(1.0),
        witness: Witness {
            point,
            direction,
            constraint,
        },
    })
}

/// Comparison target for a sequence: the ambient space (as the full grid)
/// or an explicit point set.
pub enum Target<'a> {
    Space,
    Points(&'a [Point]),
}

/// Quantitative covering-radius check attached to steps compared against
/// X: R(D) ≤ ρ(D, X) + L/(2N). An engineering bound derived from the
/// definitions, applicable once ρ(D, X) < 1/diam(X).
#[derive(Clone, Copy, Debug)]
pub struct CoverBound {
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct RhoStep {
    pub n: usize,
    pub rho: f64,
    pub r_cover: f64,
    pub r_pack: f64,
    pub cover_bound: Option<CoverBound>,
    /// Resolution error of the grid surrogate for X (half grid step).
    pub x_resolution: Option<f64>,
}

/// ρ(D_n, target) together with the radii of each D_n.
pub fn rho_sequence(
    space: &TorusSpace,
    sets: &[DeloneSet],
    target: Target<'_>,
) -> Result<Vec<RhoStep>> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let grid;
    let (target_points, against_space) = match target {
        Target::Space => {
            grid = space.grid_points();
            (grid.as_slice(), true)
        }
        Target::Points(p) => (p, false),
    };
    let mut out = Vec::with_capacity(sets.len());
    for (i, d) in sets.iter().enumerate() {
        let value = rho(space, d.points(), target_points)?.value;
        let cover_bound = if against_space && value < 1.0 / space.diameter() {
            let bound = value + space.side() / (2.0 * space.grid_n() as f64);
            Some(CoverBound {
                bound,
                ok: d.covering_radius() <= bound,
            })
        } else {
            None
        };
        out.push(RhoStep {
            n: i + 1,
            rho: value,
            r_cover: d.covering_radius(),
            r_pack: d.packing_radius(),
            cover_bound,
            x_resolution: against_space.then(|| space.step() / 2.0),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct NetCoverage {
    pub candidate: usize,
    pub net_index: usize,
    pub rho: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct EpsilonNet {
    pub eps: f64,
    /// The ε-dense base set A.
    pub base: Vec<Point>,
    /// Distinct net elements A_i = A ∩ D^{(+ε)}.
    pub net: Vec<Vec<Point>>,
    pub coverage: Vec<NetCoverage>,
}

/// Builds an ε-dense base set A (within the closed ball B_{1/ε}(x0),
/// which is all of X whenever 1/ε ≥ diam), intersects it with the closed
/// ε-neighborhood of every candidate, and verifies each candidate is
/// within ε of its net element.
pub fn epsilon_net(
    space: &TorusSpace,
    eps: f64,
    candidates: &[Vec<Point>],
) -> Result<EpsilonNet> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1], got {eps}"
        )));
    }
    let step = space.step();
    if eps < step {
        return Err(Error::EpsBelowResolution { eps, step });
    }
    let target = (eps / 2.0).max(step);
    let dense = greedy_delone(space, target, space.basepoint())?;
    let x0 = space.basepoint();
    let radius = 1.0 / eps;
    let base: Vec<Point> = dense
        .points()
        .iter()
        .copied()
        .filter(|&p| space.dist(p, x0) <= radius)
        .collect();

    let mut net: Vec<Vec<Point>> = Vec::new();
    let mut coverage = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        if cand.is_empty() {
            return Err(Error::InvalidArgument(format!("candidate {ci} is empty")));
        }
        let element: Vec<Point> = base
            .iter()
            .copied()
            .filter(|&a| space.dist_to_set(a, cand) <= eps)
            .collect();
        let value = rho(space, cand, &element)?.value;
        let net_index = match net.iter().position(|e| e == &element) {
            Some(i) => i,
            None => {
                net.push(element);
                net.len() - 1
            }
        };
        coverage.push(NetCoverage {
            candidate: ci,
            net_index,
            rho: value,
            ok: value <= eps,
        });
    }
    Ok(EpsilonNet {
        eps,
        base,
        net,
        coverage,
    })
}
