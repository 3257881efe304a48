//! Constant-level geometry of scalar fields on rectilinear grids: sample a
//! field (typically the Yang-Mills energy of a flow) at lattice points,
//! then extract the level curves (2-D, marching squares) or level surfaces
//! (3-D, marching cubes) by linear interpolation along cell edges.
//!
//! Extraction is deterministic: cells are processed in parallel but
//! concatenated in cell-index order, and interpolated vertices depend only
//! on the two corner values of their edge, so shared edges of neighboring
//! cells produce bitwise-identical points.

mod tables;

use crate::geometry::VectorField;
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum LevelSetError {
    #[error("grids must have 2 or 3 axes, got {0}")]
    UnsupportedDims(usize),
    #[error("bounds and resolution describe {bounds} vs {resolution} axes")]
    AxisCountMismatch { bounds: usize, resolution: usize },
    #[error("axis {axis} bounds [{lo}, {hi}] must satisfy lo < hi")]
    BadBounds { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis} resolution {got} must be at least 2")]
    BadResolution { axis: usize, got: usize },
    #[error("field has {field} components but the grid has {grid} axes")]
    FieldDimension { field: usize, grid: usize },
    #[error("expected a {expected}-axis grid, got {got} axes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level {0} must be finite and nonnegative")]
    BadLevel(f64),
}

/// Scalar samples on a rectilinear lattice. `values` is row-major with the
/// last axis fastest; positions along axis a are lo·(1−t) + hi·t at
/// t = i/(resolution[a]−1), so both endpoints are hit exactly. Samples
/// that failed to evaluate (or came back non-finite) are NaN with their
/// `mask` entry cleared; extraction skips any cell touching one.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    bounds: Vec<[f64; 2]>,
    resolution: Vec<usize>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ScalarGrid {
    pub fn from_fn<F>(
        bounds: Vec<[f64; 2]>,
        resolution: Vec<usize>,
        f: F,
    ) -> Result<ScalarGrid, LevelSetError>
    where
        F: Fn(&[f64]) -> Option<f64> + Sync,
    {
        let dims = bounds.len();
        if dims != 2 && dims != 3 {
            return Err(LevelSetError::UnsupportedDims(dims));
        }
        if resolution.len() != dims {
            return Err(LevelSetError::AxisCountMismatch {
                bounds: dims,
                resolution: resolution.len(),
            });
        }
        for (axis, b) in bounds.iter().enumerate() {
            if !(b[0].is_finite() && b[1].is_finite() && b[0] < b[1]) {
                return Err(LevelSetError::BadBounds {
                    axis,
                    lo: b[0],
                    hi: b[1],
                });
            }
        }
        for (axis, &r) in resolution.iter().enumerate() {
            if r < 2 {
                return Err(LevelSetError::BadResolution { axis, got: r });
            }
        }

        let mut grid = ScalarGrid {
            bounds,
            resolution,
            values: Vec::new(),
            mask: Vec::new(),
        };
        let total: usize = grid.resolution.iter().product();
        let samples: Vec<(f64, bool)> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let point = grid.point_at_flat(flat);
                match f(&point) {
                    Some(v) if v.is_finite() => (v, true),
                    _ => (f64::NAN, false),
                }
            })
            .collect();
        grid.values = samples.iter().map(|(v, _)| *v).collect();
        grid.mask = samples.iter().map(|(_, ok)| *ok).collect();
        Ok(grid)
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Lattice coordinate of index i along an axis; exact at both ends.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let t = i as f64 / (self.resolution[axis] - 1) as f64;
        self.bounds[axis][0] * (1.0 - t) + self.bounds[axis][1] * t
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (axis, &i) in idx.iter().enumerate() {
            flat = flat * self.resolution[axis] + i;
        }
        flat
    }

    fn point_at_flat(&self, mut flat: usize) -> Vec<f64> {
        let dims = self.dims();
        let mut idx = vec![0usize; dims];
        for axis in (0..dims).rev() {
            idx[axis] = flat % self.resolution[axis];
            flat /= self.resolution[axis];
        }
        (0..dims).map(|a| self.axis_coord(a, idx[a])).collect()
    }

    pub fn point_at(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dims()).map(|a| self.axis_coord(a, idx[a])).collect()
    }

    /// Multilinear interpolation of the sampled values at an arbitrary
    /// point inside the bounds; None outside, or if the enclosing cell
    /// touches a masked sample.
    pub fn interpolate(&self, point: &[f64]) -> Option<f64> {
        let dims = self.dims();
        if point.len() != dims {
            return None;
        }
        let mut cell = vec![0usize; dims];
        let mut local = vec![0.0f64; dims];
        for a in 0..dims {
            let [lo, hi] = self.bounds[a];
            if !(point[a] >= lo && point[a] <= hi) {
                return None;
            }
            let cells = self.resolution[a] - 1;
            let t = (point[a] - lo) / (hi - lo) * cells as f64;
            let mut c = t.floor() as usize;
            if c >= cells {
                c = cells - 1;
            }
            cell[a] = c;
            local[a] = t - c as f64;
        }

        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut idx = cell.clone();
            let mut w = 1.0;
            for a in 0..dims {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= local[a];
                } else {
                    w *= 1.0 - local[a];
                }
            }
            let flat = self.flat_index(&idx);
            if !self.mask[flat] {
                return None;
            }
            acc += w * self.values[flat];
        }
        Some(acc)
    }
}

/// Sample the Yang-Mills energy of a 2- or 3-component field over the
/// given box. Points where the energy fails to evaluate are masked out.
pub fn sample_energy(
    f: &VectorField,
    bounds: Vec<[f64; 2]>,
    resolution: Vec<usize>,
) -> Result<ScalarGrid, LevelSetError> {
    let dims = bounds.len();
    if dims != 2 && dims != 3 {
        return Err(LevelSetError::UnsupportedDims(dims));
    }
    if f.n() != dims {
        return Err(LevelSetError::FieldDimension {
            field: f.n(),
            grid: dims,
        });
    }
    ScalarGrid::from_fn(bounds, resolution, |point| {
        f.yang_mills_energy(point).ok()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelSetGeometry {
    /// Line segments in state-space coordinates (2-D extraction).
    Segments(Vec<[[f64; 2]; 2]>),
    /// Triangles in state-space coordinates (3-D extraction).
    Triangles(Vec<[[f64; 3]; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub level: f64,
    pub geometry: LevelSetGeometry,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        match &self.geometry {
            LevelSetGeometry::Segments(s) => s.is_empty(),
            LevelSetGeometry::Triangles(t) => t.is_empty(),
        }
    }
}

fn check_level(level: f64) -> Result<(), LevelSetError> {
    if !level.is_finite() || level < 0.0 {
        return Err(LevelSetError::BadLevel(level));
    }
    Ok(())
}

/// Point on the segment from `pa` to `pb` where the linearly interpolated
/// value crosses `level`. Callers guarantee va < level <= vb or
/// vb < level <= va, so the denominator is nonzero.
fn lerp_crossing<const D: usize>(
    pa: [f64; D],
    pb: [f64; D],
    va: f64,
    vb: f64,
    level: f64,
) -> [f64; D] {
    let t = (level - va) / (vb - va);
    let mut p = [0.0; D];
    for a in 0..D {
        p[a] = pa[a] * (1.0 - t) + pb[a] * t;
    }
    p
}

/// Marching squares with the 16-case table; a cell corner is "inside" when
/// its value is strictly below the level. The two ambiguous saddle cases
/// are split by the cell-center average: if the center is inside, the
/// inside corners are joined into one band, otherwise they stay separate.
pub fn extract_contour_2d(grid: &ScalarGrid, level: f64) -> Result<LevelSet, LevelSetError> {
    if grid.dims() != 2 {
        return Err(LevelSetError::DimensionMismatch {
            expected: 2,
            got: grid.dims(),
        });
    }
    check_level(level)?;

    let cells0 = grid.resolution[0] - 1;
    let cells1 = grid.resolution[1] - 1;
    let per_cell: Vec<Vec<[[f64; 2]; 2]>> = (0..cells0 * cells1)
        .into_par_iter()
        .map(|c| {
            let i = c / cells1;
            let j = c % cells1;
            // corners counterclockwise from (i, j)
            let corners = [[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]];
            let mut v = [0.0f64; 4];
            for (slot, idx) in corners.iter().enumerate() {
                let flat = grid.flat_index(idx);
                if !grid.mask[flat] {
                    return Vec::new();
                }
                v[slot] = grid.values[flat];
            }
            let p: Vec<[f64; 2]> = corners
                .iter()
                .map(|idx| [grid.axis_coord(0, idx[0]), grid.axis_coord(1, idx[1])])
                .collect();

            let mut case = 0usize;
            for (slot, &val) in v.iter().enumerate() {
                if val < level {
                    case |= 1 << slot;
                }
            }
            // edge e joins corners e and (e+1) mod 4
            let center_inside = (v[0] + v[1] + v[2] + v[3]) / 4.0 < level;
            let segs: &[[usize; 2]] = match case {
                0 | 15 => &[],
                1 => &[[3, 0]],
                2 => &[[0, 1]],
                3 => &[[3, 1]],
                4 => &[[1, 2]],
                5 => {
                    if center_inside {
                        &[[0, 1], [2, 3]]
                    } else {
                        &[[3, 0], [1, 2]]
                    }
                }
                6 => &[[0, 2]],
                7 => &[[2, 3]],
                8 => &[[2, 3]],
                9 => &[[0, 2]],
                10 => {
                    if center_inside {
                        &[[3, 0], [1, 2]]
                    } else {
                        &[[0, 1], [2, 3]]
                    }
                }
                11 => &[[1, 2]],
                12 => &[[1, 3]],
                13 => &[[0, 1]],
                14 => &[[3, 0]],
                _ => unreachable!(),
            };
            // endpoints ordered by grid index, so the two cells sharing an
            // edge interpolate it with identical arithmetic and produce
            // bitwise-equal vertices
            const EDGE_ENDS: [[usize; 2]; 4] = [[0, 1], [1, 2], [3, 2], [0, 3]];
            segs.iter()
                .map(|&[ea, eb]| {
                    let cross = |e: usize| {
                        let [a, b] = EDGE_ENDS[e];
                        lerp_crossing(p[a], p[b], v[a], v[b], level)
                    };
                    [cross(ea), cross(eb)]
                })
                .collect()
        })
        .collect();

    Ok(LevelSet {
        level,
        geometry: LevelSetGeometry::Segments(per_cell.into_iter().flatten().collect()),
    })
}

/// Marching cubes with the standard 256-case tables; corner c of a cell is
/// "inside" when its value is strictly below the level. Triangles wind so
/// that their normals point toward increasing field values (outward
/// through the level surface).
pub fn extract_isosurface_3d(grid: &ScalarGrid, level: f64) -> Result<LevelSet, LevelSetError> {
    if grid.dims() != 3 {
        return Err(LevelSetError::DimensionMismatch {
            expected: 3,
            got: grid.dims(),
        });
    }
    check_level(level)?;

    let cells0 = grid.resolution[0] - 1;
    let cells1 = grid.resolution[1] - 1;
    let cells2 = grid.resolution[2] - 1;
    let per_cell: Vec<Vec<[[f64; 3]; 3]>> = (0..cells0 * cells1 * cells2)
        .into_par_iter()
        .map(|c| {
            let i = c / (cells1 * cells2);
            let j = c / cells2 % cells1;
            let k = c % cells2;

            let mut v = [0.0f64; 8];
            let mut p = [[0.0f64; 3]; 8];
            for (slot, off) in tables::CORNER_OFFSETS.iter().enumerate() {
                let idx = [i + off[0], j + off[1], k + off[2]];
                let flat = grid.flat_index(&idx);
                if !grid.mask[flat] {
                    return Vec::new();
                }
                v[slot] = grid.values[flat];
                p[slot] = [
                    grid.axis_coord(0, idx[0]),
                    grid.axis_coord(1, idx[1]),
                    grid.axis_coord(2, idx[2]),
                ];
            }

            let mut case = 0usize;
            for (slot, &val) in v.iter().enumerate() {
                if val < level {
                    case |= 1 << slot;
                }
            }
            let edge_mask = tables::EDGE_MASK[case];
            if edge_mask == 0 {
                return Vec::new();
            }

            let mut edge_points = [[0.0f64; 3]; 12];
            for (e, corners) in tables::EDGE_CORNERS.iter().enumerate() {
                if edge_mask >> e & 1 == 1 {
                    let [mut a, mut b] = *corners;
                    // order endpoints by grid index so neighboring cells
                    // interpolate shared edges with identical arithmetic
                    if tables::CORNER_OFFSETS[a] > tables::CORNER_OFFSETS[b] {
                        std::mem::swap(&mut a, &mut b);
                    }
                    edge_points[e] = lerp_crossing(p[a], p[b], v[a], v[b], level);
                }
            }

            let mut tris = Vec::new();
            let row = &tables::TRIANGLES[case];
            let mut e = 0;
            while row[e] >= 0 {
                // the table winds for inward normals under the corner<level
                // convention; swap two vertices to face the outward gradient
                tris.push([
                    edge_points[row[e] as usize],
                    edge_points[row[e + 2] as usize],
                    edge_points[row[e + 1] as usize],
                ]);
                e += 3;
            }
            tris
        })
        .collect();

    Ok(LevelSet {
        level,
        geometry: LevelSetGeometry::Triangles(per_cell.into_iter().flatten().collect()),
    })
}

/// Collapse a triangle soup into a shared-vertex mesh. Vertices merge only
/// on exact coordinate equality, which is what neighboring cells produce
/// for crossings on their shared edges.
pub fn weld_triangles(triangles: &[[[f64; 3]; 3]]) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let mut ids = std::collections::HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let mut face = [0usize; 3];
        for (slot, vert) in tri.iter().enumerate() {
            let key = [vert[0].to_bits(), vert[1].to_bits(), vert[2].to_bits()];
            let next = vertices.len();
            let id = *ids.entry(key).or_insert_with(|| {
                vertices.push(*vert);
                next
            });
            face[slot] = id;
        }
        faces.push(face);
    }
    (vertices, faces)
}
