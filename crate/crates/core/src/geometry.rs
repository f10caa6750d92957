//! Ground metrics and transport cost matrices.
//!
//! A [`GroundSpace`] is a finite metric space. [`build_cost_matrix`] evaluates
//! `d(x_i, v_j)^p` between every input point and a chosen subset of output
//! points, producing a dense row-major [`CostMatrix`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// `1 - <x, y> / (|x| |y|)`, clipped to `[0, 2]`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroundSpace {
    /// `k` points on a cycle with `d(i, j) = min(|i - j|, k - |i - j|)`.
    Ring { k: usize },
    /// Row-major grid of square cells; distance is Euclidean between cell centers.
    Grid {
        rows: usize,
        cols: usize,
        cell_size: f64,
    },
    Points { points: Vec<Vec<f64>>, metric: Metric },
}

impl GroundSpace {
    pub fn ring(k: usize) -> Result<Self> {
        let space = GroundSpace::Ring { k };
        space.validate()?;
        Ok(space)
    }

    pub fn grid(rows: usize, cols: usize, cell_size: f64) -> Result<Self> {
        let space = GroundSpace::Grid {
            rows,
            cols,
            cell_size,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn points(points: Vec<Vec<f64>>, metric: Metric) -> Result<Self> {
        let space = GroundSpace::Points { points, metric };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroundSpace::Ring { k } => {
                if *k < 2 {
                    return Err(Error::InvalidSpace(format!("ring needs k >= 2, got {k}")));
                }
            }
            GroundSpace::Grid {
                rows,
                cols,
                cell_size,
            } => {
                if rows * cols == 0 {
                    return Err(Error::InvalidSpace(format!(
                        "grid needs rows*cols >= 1, got {rows}x{cols}"
                    )));
                }
                if !(cell_size.is_finite() && *cell_size > 0.0) {
                    return Err(Error::InvalidSpace(format!(
                        "grid cell size must be positive, got {cell_size}"
                    )));
                }
            }
            GroundSpace::Points { points, metric } => {
                let first = points
                    .first()
                    .ok_or_else(|| Error::InvalidSpace("point list is empty".into()))?;
                let dim = first.len();
                if dim == 0 {
                    return Err(Error::InvalidSpace("points have dimension 0".into()));
                }
                for (i, x) in points.iter().enumerate() {
                    if x.len() != dim {
                        return Err(Error::InvalidSpace(format!(
                            "point {i} has dimension {}, expected {dim}",
                            x.len()
                        )));
                    }
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidSpace(format!("point {i} is not finite")));
                    }
                    if *metric == Metric::Cosine && x.iter().all(|&v| v == 0.0) {
                        return Err(Error::ZeroVector(i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of points in the space.
    pub fn len(&self) -> usize {
        match self {
            GroundSpace::Ring { k } => *k,
            GroundSpace::Grid { rows, cols, .. } => rows * cols,
            GroundSpace::Points { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ground distance between points `i` and `j`. Indices must be in range.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            GroundSpace::Ring { k } => {
                let diff = i.abs_diff(j);
                diff.min(k - diff) as f64
            }
            GroundSpace::Grid {
                cols, cell_size, ..
            } => {
                let (ri, ci) = ((i / cols) as f64, (i % cols) as f64);
                let (rj, cj) = ((j / cols) as f64, (j % cols) as f64);
                cell_size * (ri - rj).hypot(ci - cj)
            }
            GroundSpace::Points { points, metric } => {
                let (x, y) = (&points[i], &points[j]);
                match metric {
                    Metric::Euclidean => x
                        .iter()
                        .zip(y)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    Metric::Cosine => cosine_distance(x, y),
                }
            }
        }
    }

    /// Cell-center coordinates for grid spaces; `None` otherwise.
    pub fn grid_center(&self, i: usize) -> Option<(f64, f64)> {
        match self {
            GroundSpace::Grid {
                cols, cell_size, ..
            } => Some((
                ((i % cols) as f64 + 0.5) * cell_size,
                ((i / cols) as f64 + 0.5) * cell_size,
            )),
            _ => None,
        }
    }
}

fn cosine_distance(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    (1.0 - dot / (nx * ny)).clamp(0.0, 2.0)
}

/// Raise a nonnegative distance to the power `p`, exactly for small integer `p`.
pub(crate) fn pow_p(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p.fract() == 0.0 && p <= 64.0 {
        d.powi(p as i32)
    } else {
        d.powf(p)
    }
}

/// Dense `k x k_v` matrix of transport costs `d(x_i, v_j)^p`, row-major.
///
/// Serializes as `{"p": ..., "costs": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostRepr", into = "CostRepr")]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    p: f64,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CostRepr {
    p: f64,
    costs: Vec<Vec<f64>>,
}

impl TryFrom<CostRepr> for CostMatrix {
    type Error = Error;

    fn try_from(r: CostRepr) -> Result<Self> {
        CostMatrix::from_rows(&r.costs, r.p)
    }
}

impl From<CostMatrix> for CostRepr {
    fn from(c: CostMatrix) -> Self {
        CostRepr {
            p: c.p,
            costs: c.to_rows(),
        }
    }
}

impl CostMatrix {
    /// Wrap row-major data. Entries must be finite and nonnegative.
    pub fn from_vec(rows: usize, cols: usize, p: f64, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("costs", "matrix must be nonempty"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        check_p(p)?;
        if let Some((idx, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::param(
                "costs",
                format!(
                    "entry ({}, {}) = {v} is not finite and nonnegative",
                    idx / cols,
                    idx % cols
                ),
            ));
        }
        Ok(Self {
            rows,
            cols,
            p,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], p: f64) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
        }
        Self::from_vec(rows.len(), cols, p, rows.concat())
    }

    /// Input size `k`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Output size `k_v`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Largest entry (`D_p` in the regret bound).
    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Submatrix on the given row and column index lists.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CostMatrix {
        let data = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.get(i, j)))
            .collect();
        CostMatrix {
            rows: rows.len(),
            cols: cols.len(),
            p: self.p,
            data,
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param("p", format!("must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// Costs `d(x_i, v_j)^p` from every point of `space` to the points listed in
/// `output_subset` (in that order).
pub fn build_cost_matrix(space: &GroundSpace, output_subset: &[usize], p: f64) -> Result<CostMatrix> {
    space.validate()?;
    check_p(p)?;
    if output_subset.is_empty() {
        return Err(Error::EmptyOutputSubset);
    }
    let k = space.len();
    if let Some(&bad) = output_subset.iter().find(|&&j| j >= k) {
        return Err(Error::IndexOutOfRange { index: bad, len: k });
    }
    let data = (0..k)
        .flat_map(|i| output_subset.iter().map(move |&j| pow_p(space.distance(i, j), p)))
        .collect();
    Ok(CostMatrix {
        rows: k,
        cols: output_subset.len(),
        p,
        data,
    })
}

/// Cost matrix with every point of the space as an output.
pub fn full_cost_matrix(space: &GroundSpace, p: f64) -> Result<CostMatrix> {
    let all: Vec<usize> = (0..space.len()).collect();
    build_cost_matrix(space, &all, p)
}
