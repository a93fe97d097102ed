//! Sparse spatial weight matrices: distance-band construction, row
//! standardization, spatial lags, and GAL/GWT file formats.

mod io;

pub use io::{read_weights, read_weights_from_str, write_weights, write_weights_to_string, WeightsFormat};

use nalgebra::DMatrix;

use crate::data::{CoordinateSystem, Dataset};
use crate::error::{Error, Result};

/// Mean Earth radius in kilometres, used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Sparse spatial weight matrix with zero diagonal.
///
/// Rows hold sorted `(neighbor, weight)` pairs. The scalar sums S0, S1, S2
/// follow the Cliff-Ord definitions and are kept consistent with the entries
/// at construction time:
///
/// * S0 = sum of all weights
/// * S1 = 1/2 * sum over ordered pairs of (w_ij + w_ji)^2
/// * S2 = sum over i of (row_sum_i + col_sum_i)^2
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    ids: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    standardized: bool,
    s0: f64,
    s1: f64,
    s2: f64,
}

impl PartialEq for WeightMatrix {
    /// Equality on ids and entries; the scalar sums are derived values.
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.rows == other.rows && self.standardized == other.standardized
    }
}

impl WeightMatrix {
    /// Builds a matrix from sparse `(i, j, w)` entries.
    ///
    /// Rejects diagonal entries, non-finite or negative weights, duplicate
    /// pairs, and indices out of range.
    pub fn from_entries(
        ids: Vec<String>,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        standardized: bool,
    ) -> Result<Self> {
        let n = ids.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, w) in entries {
            if i >= n || j >= n {
                return Err(Error::validation(format!(
                    "weight entry ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::validation(format!(
                    "diagonal weight w[{i}][{i}] must be absent (zero diagonal)"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "weight w[{i}][{j}] must be finite and non-negative, got {w}"
                )));
            }
            if w == 0.0 {
                continue;
            }
            rows[i].push((j, w));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::validation(format!(
                    "duplicate weight entry in row {i}"
                )));
            }
        }
        let mut w = WeightMatrix {
            ids,
            rows,
            standardized,
            s0: 0.0,
            s1: 0.0,
            s2: 0.0,
        };
        let (s0, s1, s2) = w.compute_sums();
        w.s0 = s0;
        w.s1 = s1;
        w.s2 = s2;
        Ok(w)
    }

    /// Number of regions.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    /// Sorted `(neighbor, weight)` pairs of region `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_island(&self, i: usize) -> bool {
        self.rows[i].is_empty()
    }

    pub fn island_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_island(i)).collect()
    }

    pub fn island_ids(&self) -> Vec<String> {
        self.island_indices()
            .into_iter()
            .map(|i| self.ids[i].clone())
            .collect()
    }

    pub fn has_islands(&self) -> bool {
        self.rows.iter().any(Vec::is_empty)
    }

    /// Iterates all nonzero entries as `(i, j, w)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    /// Recomputes (S0, S1, S2) from the entries.
    pub fn compute_sums(&self) -> (f64, f64, f64) {
        let n = self.n();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut row_sums = vec![0.0; n];
        let mut col_sums = vec![0.0; n];
        for (i, j, w) in self.entries() {
            s0 += w;
            row_sums[i] += w;
            col_sums[j] += w;
            let w_ji = self.weight(j, i);
            // Each unordered both-nonzero pair is visited twice, each
            // one-sided pair once; the 2x factor compensates.
            if w_ji != 0.0 {
                s1 += (w + w_ji) * (w + w_ji);
            } else {
                s1 += 2.0 * w * w;
            }
        }
        s1 *= 0.5;
        let s2 = row_sums
            .iter()
            .zip(col_sums.iter())
            .map(|(r, c)| (r + c) * (r + c))
            .sum();
        (s0, s1, s2)
    }

    /// Row-standardizes: every nonzero row is scaled to sum to one. Island
    /// rows stay all-zero.
    pub fn row_standardize(&self) -> Result<WeightMatrix> {
        if self.standardized {
            return Err(Error::validation(
                "weight matrix is already row-standardized",
            ));
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                if sum > 0.0 {
                    row.iter().map(|&(j, w)| (j, w / sum)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect::<Vec<_>>();
        let mut w = WeightMatrix {
            ids: self.ids.clone(),
            rows,
            standardized: true,
            s0: 0.0,
            s1: 0.0,
            s2: 0.0,
        };
        let (s0, s1, s2) = w.compute_sums();
        w.s0 = s0;
        w.s1 = s1;
        w.s2 = s2;
        Ok(w)
    }

    /// Spatial lag `Wz`: component i is the weighted sum of z over the
    /// neighbors of i.
    pub fn spatial_lag(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n() {
            return Err(Error::validation(format!(
                "spatial_lag: vector length {} does not match n = {}",
                z.len(),
                self.n()
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * z[j]).sum())
            .collect())
    }

    /// Dense copy, for oracles and the ML information matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, w) in self.entries() {
            m[(i, j)] = w;
        }
        m
    }

    /// trace(W'W) = sum of squared weights.
    pub fn trace_wtw(&self) -> f64 {
        self.entries().map(|(_, _, w)| w * w).sum()
    }

    /// trace(WW) = sum over entries of w_ij * w_ji.
    pub fn trace_ww(&self) -> f64 {
        self.entries().map(|(i, j, w)| w * self.weight(j, i)).sum()
    }
}

fn distance(cs: CoordinateSystem, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    match cs {
        CoordinateSystem::PlanarKm => ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt(),
        CoordinateSystem::LonLatDegrees => {
            // haversine on a sphere of mean Earth radius
            let (lon1, lat1) = (ax.to_radians(), ay.to_radians());
            let (lon2, lat2) = (bx.to_radians(), by.to_radians());
            let dlat = lat2 - lat1;
            let dlon = lon2 - lon1;
            let h = (dlat / 2.0).sin().powi(2)
                + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
        }
    }
}

/// Builds the binary distance-band matrix: w_ij = 1 iff 0 < d(i, j) <= cutoff
/// (inclusive at the cutoff). Returns the matrix together with the ids of
/// regions left without neighbors.
///
/// Errors on coincident coordinates for distinct ids and when every region
/// is an island.
pub fn build_distance_band(dataset: &Dataset, cutoff: f64) -> Result<(WeightMatrix, Vec<String>)> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::validation(format!(
            "cutoff must be positive and finite, got {cutoff}"
        )));
    }
    let recs = dataset.records();
    let cs = dataset.coordinate_system();
    let n = recs.len();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(cs, recs[i].x, recs[i].y, recs[j].x, recs[j].y);
            if d == 0.0 {
                return Err(Error::validation(format!(
                    "regions '{}' and '{}' share identical coordinates; \
                     distance-band weights are undefined at distance 0",
                    recs[i].id, recs[j].id
                )));
            }
            if d <= cutoff {
                entries.push((i, j, 1.0));
                entries.push((j, i, 1.0));
            }
        }
    }
    let ids = dataset.ids();
    let w = WeightMatrix::from_entries(ids, entries, false)?;
    let islands = w.island_ids();
    if islands.len() == w.n() {
        return Err(Error::validation(format!(
            "no region has a neighbor within cutoff {cutoff}; the weight matrix is unusable"
        )));
    }
    Ok((w, islands))
}
