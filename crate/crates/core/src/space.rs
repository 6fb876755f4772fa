//! The discretized ambient space: a flat d-torus with wrap-around metric,
//! a uniform grid of quadrature nodes, and the induced weighted l² model
//! of square-integrable functions.

use ndarray::Array1;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// A point on the torus. Coordinates are reduced into [0, L); unused
/// trailing coordinates are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| format!("{c}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Flat d-torus of side L with N grid nodes per axis and uniform
/// quadrature weight (L/N)^d per node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusSpace {
    dim: usize,
    side: f64,
    grid_n: usize,
    basepoint: Point,
}

impl TorusSpace {
    pub fn new(dim: usize, side: f64, grid_n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "dim must be 1 or 2, got {dim}"
            )));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "side must be positive, got {side}"
            )));
        }
        if grid_n < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid_n must be at least 2, got {grid_n}"
            )));
        }
        let basepoint = Point {
            coords: [0.0; MAX_DIM],
            dim,
        };
        Ok(TorusSpace {
            dim,
            side,
            grid_n,
            basepoint,
        })
    }

    /// Replaces the basepooint x0. It must coincide with a grid node.
    pub fn with_basepoint(mut self, coords: &[f64]) -> Result<Self> {
        let p = self.point(coords)?;
        let step = self.step();
        for &c in p.coords() {
            let ratio = c / step;
            if (ratio - ratio.round()).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "basepoint {p} is not a grid node"
                )));
            }
        }
        self.basepoint = p;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn basepoint(&self) -> Point {
        self.basepoint
    }

    pub fn step(&self) -> f64 {
        self.side / self.grid_n as f64
    }

    /// Quadrature measure carried by each node: (L/N)^d.
    pub fn weight(&self) -> f64 {
        self.step().powi(self.dim as i32)
    }

    pub fn node_count(&self) -> usize {
        self.grid_n.pow(self.dim as u32)
    }

    pub fn total_measure(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.dim as f64).sqrt() / 2.0
    }

    fn reduce(&self, c: f64) -> f64 {
        let mut r = c % self.side;
        if r < 0.0 {
            r += self.side;
        }
        // -0.0 and values rounding up to side both map to 0.0.
        if r >= self.side {
            r = 0.0;
        }
        r
    }

    /// Builds a point from raw coordinates, reducing each mod L.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} coordinates, got {}",
                self.dim,
                coords.len()
            )));
        }
        let mut out = [0.0; MAX_DIM];
        for (i, &c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite coordinate {c}"
                )));
            }
            out[i] = self.reduce(c);
        }
        Ok(Point {
            coords: out,
            dim: self.dim,
        })
    }

    pub fn node_point(&self, idx: usize) -> Point {
        debug_assert!(idx < self.node_count());
        let step = self.step();
        let mut coords = [0.0; MAX_DIM];
        match self.dim {
            1 => coords[0] = idx as f64 * step,
            _ => {
                coords[0] = (idx % self.grid_n) as f64 * step;
                coords[1] = (idx / self.grid_n) as f64 * step;
            }
        }
        Point {
            coords,
            dim: self.dim,
        }
    }

    /// Index of the grid node nearest to p (ties broken by node index).
    pub fn nearest_node(&self, p: Point) -> usize {
        let best = |c: f64| -> usize {
            let i = (c / self.step()).round() as usize;
            i % self.grid_n
        };
        match self.dim {
            1 => best(self.coords_of(p)[0]),
            _ => {
                let i = best(self.coords_of(p)[0]);
                let j = best(self.coords_of(p)[1]);
                j * self.grid_n + i
            }
        }
    }

    fn coords_of<'a>(&self, p: Point) -> [f64; MAX_DIM] {
        p.coords
    }

    pub fn grid_points(&self) -> Vec<Point> {
        (0..self.node_count()).map(|i| self.node_point(i)).collect()
    }

    fn axis_dist(&self, a: f64, b: f64) -> f64 {
        let t = (a - b).abs();
        t.min(self.side - t)
    }

    /// Torus distance: per-axis min(|a-b|, L-|a-b|), combined Euclidean.
    pub fn dist(&self, a: Point, b: Point) -> f64 {
        debug_assert_eq!(a.dim, self.dim);
        debug_assert_eq!(b.dim, self.dim);
        match self.dim {
            1 => self.axis_dist(a.coords[0], b.coords[0]),
            _ => {
                let dx = self.axis_dist(a.coords[0], b.coords[0]);
                let dy = self.axis_dist(a.coords[1], b.coords[1]);
                (dx * dx + dy * dy).sqrt()
            }
        }
    }

    pub fn dist_to_set(&self, x: Point, set: &[Point]) -> f64 {
        set.iter()
            .map(|&p| self.dist(x, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Count of grid nodes strictly within R of x (open ball).
    pub fn ball_node_count(&self, x: Point, r: f64) -> usize {
        (0..self.node_count())
            .filter(|&i| self.dist(self.node_point(i), x) < r)
            .count()
    }

    /// Quadrature measure of the open ball B_R(x).
    pub fn ball_measure(&self, x: Point, r: f64) -> f64 {
        self.weight() * self.ball_node_count(x, r) as f64
    }

    /// Min and max ball measure at radius R over a sample of grid nodes.
    pub fn check_bounded_geometry(&self, r: f64, sample: &[usize]) -> Result<(f64, f64)> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {r}"
            )));
        }
        if sample.is_empty() {
            return Err(Error::InvalidArgument("empty node sample".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &idx in sample {
            let m = self.ball_measure(self.node_point(idx), r);
            lo = lo.min(m);
            hi = hi.max(m);
        }
        Ok((lo, hi))
    }
}

/// A function sampled on the grid nodes, an element of the weighted l²
/// model of L²(X).
#[derive(Clone, Debug)]
pub struct GridFunction {
    space: TorusSpace,
    values: Array1<f64>,
}

impl GridFunction {
    pub fn new(space: TorusSpace, values: Array1<f64>) -> Result<Self> {
        if values.len() != space.node_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                space.node_count(),
                values.len()
            )));
        }
        Ok(GridFunction { space, values })
    }

    pub fn from_fn(space: TorusSpace, f: impl Fn(Point) -> f64) -> Self {
        let values = Array1::from_iter((0..space.node_count()).map(|i| f(space.node_point(i))));
        GridFunction { space, values }
    }

    pub fn constant(space: TorusSpace, c: f64) -> Self {
        GridFunction {
            space,
            values: Array1::from_elem(space.node_count(), c),
        }
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    /// Quadrature inner product Σ weight·f·g (conjugation is trivial for
    /// real scalars).
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.space.weight() * self.values.dot(&other.values))
    }

    pub fn norm(&self) -> f64 {
        (self.space.weight() * self.values.dot(&self.values)).sqrt()
    }
}
