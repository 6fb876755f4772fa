//! JSON persistence for spaces, Delone sets, partitions, cell assignments
//! and operators. Floats round-trip exactly; malformed input is reported
//! with line, column and byte offset.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cells::CellPartition;
use crate::delone::DeloneSet;
use crate::error::{Error, Result};
use crate::pou::PartitionOfUnity;
use crate::roe::{FinitePropOperator, GridOperator};
use crate::space::{Point, TorusSpace};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpaceConfig {
    pub dim: usize,
    pub side: f64,
    pub grid_n: usize,
    pub basepoint: Vec<f64>,
}

impl SpaceConfig {
    pub fn of(space: &TorusSpace) -> SpaceConfig {
        SpaceConfig {
            dim: space.dim(),
            side: space.side(),
            grid_n: space.grid_n(),
            basepoint: space.basepoint().coords().to_vec(),
        }
    }

    pub fn build(&self) -> Result<TorusSpace> {
        TorusSpace::new(self.dim, self.side, self.grid_n)?.with_basepoint(&self.basepoint)
    }
}

#[derive(Serialize, Deserialize)]
struct DelonePayload {
    points: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PouPayload {
    grid_n: usize,
    sites: usize,
    r: f64,
    #[serde(rename = "R")]
    big_r: f64,
    space: SpaceConfig,
    points: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CellsPayload {
    assign: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OperatorPayload {
    Sites {
        space: SpaceConfig,
        points: Vec<Vec<f64>>,
        m: Vec<Vec<f64>>,
    },
    Grid {
        space: SpaceConfig,
        m: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub enum LoadedOperator {
    Sites(FinitePropOperator),
    Grid(GridOperator),
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut off = 0usize;
    for (i, l) in text.lines().enumerate() {
        if i + 1 == line {
            return off + column.saturating_sub(1);
        }
        off += l.len() + 1;
    }
    text.len()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: format!("{e} (byte {})", byte_offset(&text, e.line(), e.column())),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn points_to_rows(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.coords().to_vec()).collect()
}

fn rows_to_points(space: &TorusSpace, rows: &[Vec<f64>]) -> Result<Vec<Point>> {
    rows.iter().map(|r| space.point(r)).collect()
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Array2<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!(
            "matrix payload is not {nrows}x{ncols}"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn save_space(path: &Path, space: &TorusSpace) -> Result<()> {
    write_json(path, &SpaceConfig::of(space))
}

pub fn load_space(path: &Path) -> Result<TorusSpace> {
    read_json::<SpaceConfig>(path)?.build()
}

pub fn save_delone(path: &Path, d: &DeloneSet) -> Result<()> {
    write_json(
        path,
        &DelonePayload {
            points: points_to_rows(d.points()),
        },
    )
}

pub fn load_delone(path: &Path, space: &TorusSpace) -> Result<DeloneSet> {
    let payload: DelonePayload = read_json(path)?;
    DeloneSet::new(*space, rows_to_points(space, &payload.points)?)
}

pub fn save_pou(path: &Path, pou: &PartitionOfUnity) -> Result<()> {
    write_json(
        path,
        &PouPayload {
            grid_n: pou.space().grid_n(),
            sites: pou.len(),
            r: pou.packing_radius(),
            big_r: pou.covering_radius(),
            space: SpaceConfig::of(pou.space()),
            points: points_to_rows(pou.delone().points()),
            phi: matrix_to_rows(pou.phi()),
        },
    )
}

pub fn load_pou(path: &Path) -> Result<PartitionOfUnity> {
    let payload: PouPayload = read_json(path)?;
    let space = payload.space.build()?;
    if payload.grid_n != space.grid_n() || payload.sites != payload.points.len() {
        return Err(Error::InvalidArgument(
            "partition header disagrees with its payload".into(),
        ));
    }
    let delone = DeloneSet::new(space, rows_to_points(&space, &payload.points)?)?;
    let phi = rows_to_matrix(&payload.phi, space.node_count(), delone.len())?;
    PartitionOfUnity::from_raw(delone, phi)
}

pub fn save_cells(path: &Path, c: &CellPartition) -> Result<()> {
    write_json(
        path,
        &CellsPayload {
            assign: c.assign().to_vec(),
        },
    )
}

pub fn load_cell_assign(path: &Path) -> Result<Vec<usize>> {
    Ok(read_json::<CellsPayload>(path)?.assign)
}

pub fn save_site_operator(path: &Path, op: &FinitePropOperator) -> Result<()> {
    write_json(
        path,
        &OperatorPayload::Sites {
            space: SpaceConfig::of(op.sites().space()),
            points: points_to_rows(op.sites().points()),
            m: matrix_to_rows(op.matrix()),
        },
    )
}

pub fn save_grid_operator(path: &Path, op: &GridOperator) -> Result<()> {
    write_json(
        path,
        &OperatorPayload::Grid {
            space: SpaceConfig::of(op.space()),
            m: matrix_to_rows(op.matrix()),
        },
    )
}

pub fn load_operator(path: &Path) -> Result<LoadedOperator> {
    match read_json::<OperatorPayload>(path)? {
        OperatorPayload::Sites { space, points, m } => {
            let sp = space.build()?;
            let sites = DeloneSet::new(sp, rows_to_points(&sp, &points)?)?;
            let k = sites.len();
            Ok(LoadedOperator::Sites(FinitePropOperator::new(
                sites,
                rows_to_matrix(&m, k, k)?,
            )?))
        }
        OperatorPayload::Grid { space, m } => {
            let sp = space.build()?;
            let n = sp.node_count();
            Ok(LoadedOperator::Grid(GridOperator::new(
                sp,
                rows_to_matrix(&m, n, n)?,
            )?))
        }
    }
}
