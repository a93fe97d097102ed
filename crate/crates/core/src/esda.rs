//! Exploratory spatial data analysis: global Moran's I with analytical and
//! permutation inference, Moran scatterplot data, and LISA cluster labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// Global Moran's I with moments under the normality and randomization
/// assumptions and an optional permutation pseudo p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i_value: f64,
    /// Exact expectation -1/(n-1).
    pub expected: f64,
    pub variance_normality: f64,
    pub variance_randomization: f64,
    pub z_normality: f64,
    pub z_randomization: f64,
    /// (count{|I_perm| >= |I_obs|} + 1) / (permutations + 1); absent when
    /// permutations = 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_p: Option<f64>,
}

/// Moran scatterplot data: standardized variable against its spatial lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranScatter {
    /// (standardized z_i, spatial lag of standardized z at i)
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of lag on z. Equals global Moran's I for
    /// row-standardized, island-free weights.
    pub slope: f64,
}

/// LISA cluster classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterLabel {
    #[serde(rename = "HH")]
    HighHigh,
    #[serde(rename = "LL")]
    LowLow,
    #[serde(rename = "HL")]
    HighLow,
    #[serde(rename = "LH")]
    LowHigh,
    #[serde(rename = "NS")]
    NotSignificant,
    #[serde(rename = "ISLAND")]
    Island,
}

impl ClusterLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusterLabel::HighHigh => "HH",
            ClusterLabel::LowLow => "LL",
            ClusterLabel::HighLow => "HL",
            ClusterLabel::LowHigh => "LH",
            ClusterLabel::NotSignificant => "NS",
            ClusterLabel::Island => "ISLAND",
        }
    }
}

/// Per-region local Moran statistics with conditional-permutation inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LisaResult {
    pub local_i: Vec<f64>,
    /// One-sided pseudo p toward the observed sign; absent for islands.
    pub pseudo_p: Vec<Option<f64>>,
    pub cluster: Vec<ClusterLabel>,
}

fn validate_common(w: &WeightMatrix, z_raw: &[f64]) -> Result<()> {
    let n = w.n();
    if z_raw.len() != n {
        return Err(Error::validation(format!(
            "variable length {} does not match weight matrix n = {n}",
            z_raw.len()
        )));
    }
    if n < 3 {
        return Err(Error::validation(format!(
            "Moran statistics need n >= 3, got {n}"
        )));
    }
    if w.nnz() == 0 {
        return Err(Error::validation("weight matrix has no nonzero entries"));
    }
    if z_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("variable contains non-finite values"));
    }
    let mean = z_raw.iter().sum::<f64>() / n as f64;
    if z_raw.iter().all(|&v| v == mean) || z_raw.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() == 0.0 {
        return Err(Error::validation(
            "variable has zero variance; Moran's I is undefined",
        ));
    }
    Ok(())
}

fn centered(z_raw: &[f64]) -> Vec<f64> {
    let mean = z_raw.iter().sum::<f64>() / z_raw.len() as f64;
    z_raw.iter().map(|&v| v - mean).collect()
}

/// z' W z over the sparse entries.
fn cross_product(w: &WeightMatrix, z: &[f64]) -> f64 {
    w.entries().map(|(i, j, wt)| wt * z[i] * z[j]).sum()
}

/// RNG substream for a given (seed, stream index), stable across platforms.
pub(crate) fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(b"spacereg");
    ChaCha8Rng::from_seed(key)
}

/// Global Moran's I: I = (n/S0) (z'Wz)/(z'z) on the mean-centered variable.
///
/// Moments follow the Cliff-Ord formulas; the randomization variance uses
/// the sample kurtosis b2 = m4/m2^2 with population (divide-by-n) moments.
/// When `permutations > 0` a two-sided pseudo p-value is computed by full
/// random relabeling of the values.
pub fn morans_i(
    w: &WeightMatrix,
    z_raw: &[f64],
    permutations: u32,
    seed: u64,
) -> Result<MoranResult> {
    validate_common(w, z_raw)?;
    let n = w.n() as f64;
    let z = centered(z_raw);
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let s0 = w.s0();
    let s1 = w.s1();
    let s2 = w.s2();

    let i_obs = (n / s0) * cross_product(w, &z) / zz;
    let expected = -1.0 / (n - 1.0);

    let s0sq = s0 * s0;
    let var_norm =
        (n * n * s1 - n * s2 + 3.0 * s0sq) / ((n * n - 1.0) * s0sq) - expected * expected;

    let m2 = zz / n;
    let m4 = z.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    let b2 = m4 / (m2 * m2);
    let var_rand = (n * ((n * n - 3.0 * n + 3.0) * s1 - n * s2 + 3.0 * s0sq)
        - b2 * ((n * n - n) * s1 - 2.0 * n * s2 + 6.0 * s0sq))
        / ((n - 1.0) * (n - 2.0) * (n - 3.0) * s0sq)
        - expected * expected;

    let z_norm = (i_obs - expected) / var_norm.sqrt();
    let z_rand = (i_obs - expected) / var_rand.sqrt();

    let pseudo_p = if permutations > 0 {
        let mut rng = substream_rng(seed, u64::MAX);
        let mut shuffled = z.clone();
        let mut extreme = 0u32;
        for _ in 0..permutations {
            shuffled.shuffle(&mut rng);
            let i_perm = (n / s0) * cross_product(w, &shuffled) / zz;
            if i_perm.abs() >= i_obs.abs() {
                extreme += 1;
            }
        }
        Some((extreme as f64 + 1.0) / (permutations as f64 + 1.0))
    } else {
        None
    };

    Ok(MoranResult {
        i_value: i_obs,
        expected,
        variance_normality: var_norm,
        variance_randomization: var_rand,
        z_normality: z_norm,
        z_randomization: z_rand,
        pseudo_p,
    })
}

/// Moran scatterplot: points are (standardized z, spatial lag of the
/// standardized z); the slope is the least-squares slope of lag on z.
/// Standardization uses the population (divide-by-n) variance.
pub fn moran_scatter(w: &WeightMatrix, z_raw: &[f64]) -> Result<MoranScatter> {
    validate_common(w, z_raw)?;
    let n = w.n() as f64;
    let z = centered(z_raw);
    let sd = (z.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let z_std: Vec<f64> = z.iter().map(|v| v / sd).collect();
    let lag = w.spatial_lag(&z_std)?;
    // z_std has mean zero, so the intercept-adjusted slope reduces to the
    // ratio of cross moments.
    let num: f64 = z_std.iter().zip(lag.iter()).map(|(a, b)| a * b).sum();
    let den: f64 = z_std.iter().map(|v| v * v).sum();
    let slope = num / den;
    Ok(MoranScatter {
        points: z_std.into_iter().zip(lag).collect(),
        slope,
    })
}

/// Local Moran's I with conditional permutation inference.
///
/// local_i = (z_i / m2) * sum_j w_ij z_j with m2 = sum z^2 / n. The region's
/// own value is held fixed while the remaining values are permuted among its
/// neighbors; the pseudo p is one-sided toward the observed sign. Labels use
/// the (z_i, lag_i) quadrant when pseudo_p <= alpha.
pub fn lisa(
    w: &WeightMatrix,
    z_raw: &[f64],
    permutations: u32,
    seed: u64,
    alpha: f64,
) -> Result<LisaResult> {
    validate_common(w, z_raw)?;
    if permutations < 99 {
        return Err(Error::validation(format!(
            "LISA needs at least 99 permutations, got {permutations}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = w.n();
    let z = centered(z_raw);
    let m2 = z.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let mut local_i = vec![0.0; n];
    let mut pseudo_p: Vec<Option<f64>> = vec![None; n];
    let mut cluster = vec![ClusterLabel::NotSignificant; n];

    for i in 0..n {
        let nbrs = w.neighbors(i);
        if nbrs.is_empty() {
            cluster[i] = ClusterLabel::Island;
            continue;
        }
        let lag_obs: f64 = nbrs.iter().map(|&(j, wt)| wt * z[j]).sum();
        let l_obs = z[i] / m2 * lag_obs;
        local_i[i] = l_obs;

        // conditional permutation: hold z_i, draw the k neighbor values from
        // the remaining n-1 without replacement
        let mut pool: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| z[j]).collect();
        let k = nbrs.len();
        let m = pool.len();
        let mut rng = substream_rng(seed, i as u64);
        let mut extreme = 0u32;
        let mut swaps: Vec<(usize, usize)> = Vec::with_capacity(k);
        for _ in 0..permutations {
            swaps.clear();
            for t in 0..k {
                let r = t + rng.random_range(0..(m - t));
                pool.swap(t, r);
                swaps.push((t, r));
            }
            let lag_perm: f64 = nbrs
                .iter()
                .enumerate()
                .map(|(t, &(_, wt))| wt * pool[t])
                .sum();
            let l_perm = z[i] / m2 * lag_perm;
            if (l_obs >= 0.0 && l_perm >= l_obs) || (l_obs < 0.0 && l_perm <= l_obs) {
                extreme += 1;
            }
            for &(a, b) in swaps.iter().rev() {
                pool.swap(a, b);
            }
        }
        let p = (extreme as f64 + 1.0) / (permutations as f64 + 1.0);
        pseudo_p[i] = Some(p);
        if p <= alpha {
            cluster[i] = match (z[i] > 0.0, lag_obs > 0.0) {
                (true, true) => ClusterLabel::HighHigh,
                (false, false) => ClusterLabel::LowLow,
                (true, false) => ClusterLabel::HighLow,
                (false, true) => ClusterLabel::LowHigh,
            };
        }
    }

    Ok(LisaResult {
        local_i,
        pseudo_p,
        cluster,
    })
}
