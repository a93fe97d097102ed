//! OLS estimation and the spatial specification diagnostics: Jarque-Bera,
//! Breusch-Pagan, Koenker-Bassett, residual Moran's I, and the four
//! Lagrange-multiplier tests for omitted spatial lag/error structure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;
use crate::weights::WeightMatrix;

/// An OLS fit. `sigma2` is the ML variance SSE/n used by the LM statistics;
/// `sigma2_unbiased` (SSE/(n-k)) feeds the coefficient standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub t_stats: DVector<f64>,
    pub sigma2: f64,
    pub sigma2_unbiased: f64,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n: usize,
    pub k: usize,
}

impl OlsFit {
    /// Gaussian log-likelihood at the ML variance estimate.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.n as f64;
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0 + self.sigma2.ln())
    }
}

/// A scalar test statistic with its reference-distribution p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Residual Moran's I with regression-residual (projection-aware) moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualMoran {
    pub i_value: f64,
    pub z_value: f64,
    /// Two-sided standard normal p-value on z.
    pub p_value: f64,
}

/// The four Anselin LM specification tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmTests {
    pub lm_lag: TestResult,
    pub lm_lag_robust: TestResult,
    pub lm_error: TestResult,
    pub lm_error_robust: TestResult,
}

/// The full Table-1 diagnostic battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub jb: TestResult,
    pub bp: TestResult,
    pub kb: TestResult,
    pub moran_residual: ResidualMoran,
    pub lm_lag: TestResult,
    pub lm_lag_robust: TestResult,
    pub lm_error: TestResult,
    pub lm_error_robust: TestResult,
}

/// Least-squares fit of `y` on the design matrix `x`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::validation(format!(
            "y length {} does not match design rows {n}",
            y.len()
        )));
    }
    if n <= k {
        return Err(Error::validation(format!(
            "need n > k for OLS, got n = {n}, k = {k}"
        )));
    }
    linalg::check_full_rank(x)?;
    let beta = linalg::least_squares(x, y)?;
    let fitted = x * &beta;
    let residuals = y - &fitted;
    let sse = residuals.norm_squared();
    let sigma2 = sse / n as f64;
    let sigma2_unbiased = sse / (n - k) as f64;

    let gram_inv = linalg::gram_inverse(x)?;
    let se = DVector::from_iterator(
        k,
        (0..k).map(|j| (sigma2_unbiased * gram_inv[(j, j)]).sqrt()),
    );
    let t_stats = DVector::from_iterator(k, (0..k).map(|j| beta[j] / se[j]));

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - sse / tss).clamp(0.0, 1.0)
    } else {
        // constant response fitted exactly by any intercept model
        1.0
    };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n - k) as f64;

    Ok(OlsFit {
        beta,
        se,
        t_stats,
        sigma2,
        sigma2_unbiased,
        residuals,
        fitted,
        r2,
        adj_r2,
        n,
        k,
    })
}

/// Jarque-Bera normality test: JB = (n/6) (S^2 + (K-3)^2 / 4) with
/// moment-based skewness and kurtosis; p from chi-squared(2).
pub fn jarque_bera(residuals: &[f64]) -> Result<TestResult> {
    let n = residuals.len();
    if n < 4 {
        return Err(Error::validation(format!(
            "Jarque-Bera needs n >= 4, got {n}"
        )));
    }
    let (_, m2, m3, m4) = stats::central_moments(residuals);
    if m2 <= 0.0 {
        return Err(Error::validation(
            "residuals have zero variance; Jarque-Bera is undefined",
        ));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let statistic = n as f64 / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    Ok(TestResult {
        statistic,
        p_value: stats::chi2_sf(statistic, 2.0),
    })
}

/// Auxiliary-regression core shared by the BP and KB variants. Returns
/// (half the explained sum of squares of u/sigma2 - 1 regressed on X,
///  n * R^2 of e^2 regressed on X).
fn heteroskedasticity_stats(residuals: &DVector<f64>, x: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = residuals.len() as f64;
    let e2: DVector<f64> = residuals.map(|e| e * e);
    let sigma2 = e2.sum() / n;
    if sigma2 <= 0.0 {
        // exact fit: no variation to explain
        return Ok((0.0, 0.0));
    }
    // degenerate when the squared residuals are constant
    let mean_e2 = e2.sum() / n;
    let tss: f64 = e2.iter().map(|v| (v - mean_e2).powi(2)).sum();
    if tss <= 0.0 {
        return Ok((0.0, 0.0));
    }

    let g: DVector<f64> = e2.map(|v| v / sigma2 - 1.0);
    let beta_g = linalg::least_squares(x, &g)?;
    let fitted_g = x * beta_g;
    let mean_g = g.sum() / n;
    let ess: f64 = fitted_g.iter().map(|v| (v - mean_g).powi(2)).sum();
    let bp = 0.5 * ess;

    let beta_e2 = linalg::least_squares(x, &e2)?;
    let fitted_e2 = x * beta_e2;
    let ess_e2: f64 = fitted_e2.iter().map(|v| (v - mean_e2).powi(2)).sum();
    let r2_aux = (ess_e2 / tss).clamp(0.0, 1.0);
    let kb = n * r2_aux;
    Ok((bp, kb))
}

/// Breusch-Pagan test in its original form: half the explained sum of
/// squares from regressing e^2/sigma^2 - 1 on X; chi-squared(k - 1).
pub fn breusch_pagan(fit: &OlsFit, x: &DMatrix<f64>) -> Result<TestResult> {
    breusch_pagan_from_residuals(&fit.residuals, x)
}

/// BP on an arbitrary residual/innovation vector (shared with the spatial
/// ML fits).
pub fn breusch_pagan_from_residuals(
    residuals: &DVector<f64>,
    x: &DMatrix<f64>,
) -> Result<TestResult> {
    if residuals.len() != x.nrows() {
        return Err(Error::validation(
            "residual length does not match design rows",
        ));
    }
    let df = (x.ncols() - 1) as f64;
    let (bp, _) = heteroskedasticity_stats(residuals, x)?;
    let p_value = if bp == 0.0 {
        1.0
    } else {
        stats::chi2_sf(bp, df)
    };
    Ok(TestResult {
        statistic: bp,
        p_value,
    })
}

/// Koenker-Bassett studentized variant: n * R^2 from regressing e^2 on X;
/// chi-squared(k - 1).
pub fn koenker_bassett(fit: &OlsFit, x: &DMatrix<f64>) -> Result<TestResult> {
    let df = (x.ncols() - 1) as f64;
    let (_, kb) = heteroskedasticity_stats(&fit.residuals, x)?;
    let p_value = if kb == 0.0 {
        1.0
    } else {
        stats::chi2_sf(kb, df)
    };
    Ok(TestResult {
        statistic: kb,
        p_value,
    })
}

/// Traces of MW products needed by the residual-Moran moments, computed
/// through k x k Gram identities so no dense n x n matrix is formed.
struct ProjectionTraces {
    tr_mw: f64,
    tr_mwmw: f64,
    tr_mwmwt: f64,
}

fn projection_traces(w: &WeightMatrix, x: &DMatrix<f64>) -> Result<ProjectionTraces> {
    let (n, k) = x.shape();
    let g = linalg::gram_inverse(x)?;

    // WX and W'X, column by column through the sparse lag
    let mut wx = DMatrix::zeros(n, k);
    let mut wtx = DMatrix::zeros(n, k);
    for j in 0..k {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let lag = w.spatial_lag(&col)?;
        for i in 0..n {
            wx[(i, j)] = lag[i];
        }
    }
    for (i, j, wt) in w.entries() {
        for c in 0..k {
            wtx[(j, c)] += wt * x[(i, c)];
        }
    }

    let a1 = x.transpose() * &wx; // X'WX
    let s_a = wx.transpose() * &wx; // X'W'WX
    let s_b = wtx.transpose() * &wtx; // X'WW'X
    let xw2x = wtx.transpose() * &wx; // X'WWX

    let tr = |m: &DMatrix<f64>| m.diagonal().sum();
    let tr_w2 = w.trace_ww();
    let tr_wwt = w.trace_wtw();

    let g_a1 = &g * &a1;
    let tr_mw = -tr(&g_a1); // trace(W) = 0 for zero-diagonal W
    let tr_mwmw = tr_w2 - 2.0 * tr(&(&g * &xw2x)) + tr(&(&g_a1 * &g_a1));
    let tr_mwmwt = tr_wwt - tr(&(&g * &s_b)) - tr(&(&g * &s_a))
        + tr(&(&g_a1 * &g * a1.transpose()));

    Ok(ProjectionTraces {
        tr_mw,
        tr_mwmw,
        tr_mwmwt,
    })
}

/// Residual Moran's I: I = (n/S0) (e'We)/(e'e), with the Cliff-Ord
/// regression-residual moments that account for the projection matrix
/// M = I - X(X'X)^-1 X'.
pub fn residual_moran(w: &WeightMatrix, fit: &OlsFit, x: &DMatrix<f64>) -> Result<ResidualMoran> {
    let n = fit.n;
    if w.n() != n {
        return Err(Error::validation(format!(
            "weight matrix n = {} does not match fit n = {n}",
            w.n()
        )));
    }
    let e: Vec<f64> = fit.residuals.iter().copied().collect();
    let ee = fit.residuals.norm_squared();
    if ee <= 0.0 {
        return Err(Error::validation(
            "zero residual vector; residual Moran's I is undefined",
        ));
    }
    let s0 = w.s0();
    if s0 <= 0.0 {
        return Err(Error::validation("weight matrix has no nonzero entries"));
    }
    let we = w.spatial_lag(&e)?;
    let ewe: f64 = e.iter().zip(we.iter()).map(|(a, b)| a * b).sum();
    let i_value = (n as f64 / s0) * ewe / ee;

    let t = projection_traces(w, x)?;
    let nk = (n - fit.k) as f64;
    let e_i = (n as f64) * t.tr_mw / (nk * s0);
    let e_i2 = (n as f64).powi(2) * (t.tr_mwmwt + t.tr_mwmw + t.tr_mw * t.tr_mw)
        / (s0 * s0 * nk * (nk + 2.0));
    let var = e_i2 - e_i * e_i;
    if var <= 0.0 {
        return Err(Error::numerical(
            "residual_moran",
            "non-positive variance of residual Moran's I",
        ));
    }
    let z_value = (i_value - e_i) / var.sqrt();
    Ok(ResidualMoran {
        i_value,
        z_value,
        p_value: stats::normal_p_two_sided(z_value),
    })
}

/// The four Anselin LM specification tests against omitted spatial lag and
/// spatial error structure, with the Anselin-Bera robust corrections.
pub fn lm_tests(
    w: &WeightMatrix,
    fit: &OlsFit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LmTests> {
    let n = fit.n;
    if w.n() != n {
        return Err(Error::validation(format!(
            "weight matrix n = {} does not match fit n = {n}",
            w.n()
        )));
    }
    let t_w = w.trace_wtw() + w.trace_ww();
    if t_w <= 0.0 {
        return Err(Error::validation(
            "trace(W'W + WW) is zero; LM tests are undefined for an empty weight matrix",
        ));
    }
    let sigma2 = fit.sigma2;
    if sigma2 <= 0.0 {
        return Err(Error::numerical("lm_tests", "zero ML residual variance"));
    }
    let e: Vec<f64> = fit.residuals.iter().copied().collect();
    let yv: Vec<f64> = y.iter().copied().collect();
    let wy = w.spatial_lag(&yv)?;
    let we = w.spatial_lag(&e)?;
    let d_y: f64 = e.iter().zip(wy.iter()).map(|(a, b)| a * b).sum::<f64>() / sigma2;
    let d_e: f64 = e.iter().zip(we.iter()).map(|(a, b)| a * b).sum::<f64>() / sigma2;

    // J = [ (W X beta)' M (W X beta) + T sigma2 ] / sigma2
    let fitted: Vec<f64> = fit.fitted.iter().copied().collect();
    let wxb = DVector::from_vec(w.spatial_lag(&fitted)?);
    let g = linalg::gram_inverse(x)?;
    let xt_wxb = x.transpose() * &wxb;
    let m_wxb = &wxb - x * (&g * &xt_wxb);
    let quad = wxb.dot(&m_wxb);
    let j = (quad + t_w * sigma2) / sigma2;

    let lm_lag = d_y * d_y / j;
    let lm_error = d_e * d_e / t_w;

    // robust corrections; j > t_w whenever W X beta has a component outside
    // the column space of X
    let denom_lag = j - t_w;
    let lm_lag_robust = if denom_lag > 0.0 {
        (d_y - d_e).powi(2) / denom_lag
    } else {
        0.0
    };
    let denom_err = t_w * (1.0 - t_w / j);
    let lm_error_robust = if denom_err > 0.0 {
        (d_e - (t_w / j) * d_y).powi(2) / denom_err
    } else {
        0.0
    };

    let p = |s: f64| stats::chi2_sf(s, 1.0);
    Ok(LmTests {
        lm_lag: TestResult {
            statistic: lm_lag,
            p_value: p(lm_lag),
        },
        lm_lag_robust: TestResult {
            statistic: lm_lag_robust,
            p_value: p(lm_lag_robust),
        },
        lm_error: TestResult {
            statistic: lm_error,
            p_value: p(lm_error),
        },
        lm_error_robust: TestResult {
            statistic: lm_error_robust,
            p_value: p(lm_error_robust),
        },
    })
}

/// Runs the whole Table-1 battery on an OLS fit.
pub fn diagnostics(
    w: &WeightMatrix,
    fit: &OlsFit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DiagnosticsBundle> {
    let resid: Vec<f64> = fit.residuals.iter().copied().collect();
    let jb = jarque_bera(&resid)?;
    let bp = breusch_pagan(fit, x)?;
    let kb = koenker_bassett(fit, x)?;
    let moran_residual = residual_moran(w, fit, x)?;
    let lm = lm_tests(w, fit, x, y)?;
    Ok(DiagnosticsBundle {
        jb,
        bp,
        kb,
        moran_residual,
        lm_lag: lm.lm_lag,
        lm_lag_robust: lm.lm_lag_robust,
        lm_error: lm.lm_error,
        lm_error_robust: lm.lm_error_robust,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    use crate::esda::morans_i;

    fn design_with_intercept(cols: &[Vec<f64>]) -> DMatrix<f64> {
        let n = cols[0].len();
        let k = cols.len() + 1;
        let mut x = DMatrix::zeros(n, k);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for (c, col) in cols.iter().enumerate() {
                x[(i, c + 1)] = col[i];
            }
        }
        x
    }

    #[test]
    fn exact_line_fit() {
        let x = design_with_intercept(&[vec![0.0, 1.0, 2.0]]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert_relative_eq!(fit.beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta[1], 2.0, epsilon = 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_mean_fit() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let y = DVector::from_vec(vec![4.0, 4.0, 4.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert_relative_eq!(fit.beta[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(fit.sigma2, 0.0, epsilon = 1e-24);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = crate::esda::substream_rng(1, 100);
        let n = 200;
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let x = design_with_intercept(&cols);
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| 1.5 - 0.5 * cols[0][i] + 2.0 * cols[1][i] + rng.random::<f64>() - 0.5),
        );
        let fit = ols_fit(&x, &y).unwrap();
        // oracle: explicit Gram-matrix solve
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let beta_oracle = xtx.lu().solve(&xty).unwrap();
        for j in 0..3 {
            assert_relative_eq!(fit.beta[j], beta_oracle[j], epsilon = 1e-8);
        }
        // residual orthogonality
        let xte = x.transpose() * &fit.residuals;
        let scale = 1.0 + y.amax();
        assert!(xte.amax() / scale < 1e-8);
        // t stats consistent
        for j in 0..3 {
            assert_relative_eq!(fit.t_stats[j], fit.beta[j] / fit.se[j], epsilon = 1e-12);
        }
        assert!(fit.adj_r2 <= fit.r2);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let c: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let doubled: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let x = design_with_intercept(&[c, doubled]);
        let y = DVector::from_element(10, 1.0);
        let err = ols_fit(&x, &y).unwrap_err();
        assert!(err.to_string().contains("column 2"));
    }

    #[test]
    fn jb_zero_for_normal_shape() {
        // symmetric two-point residuals: S = 0, K = 1 -> JB = 2/3
        let r = jarque_bera(&[-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(r.statistic, 2.0 / 3.0, epsilon = 1e-14);
        // S = 0, K = 3 exactly -> JB = 0, p = 1 (construct via moments)
        // 5-point set with kurtosis 3: use +-a, +-b, 0 with m4/m2^2 = 3
        // a^4+b^4 = 3 (a^2+b^2)^2 / 5 has a solution a = 1, b ~ 1.86189
        let b = 1.8618935; // approximately; JB should be near 0
        let r2 = jarque_bera(&[-b, -1.0, 0.0, 1.0, b]).unwrap();
        assert!(r2.statistic < 1e-4, "JB = {}", r2.statistic);
    }

    #[test]
    fn jb_matches_two_pass_oracle() {
        let mut rng = crate::esda::substream_rng(2, 101);
        let resid: Vec<f64> = (0..500)
            .map(|_| {
                let u: f64 = rng.random::<f64>();
                // crude non-normal sample
                u * u * 3.0 - 1.0
            })
            .collect();
        let r = jarque_bera(&resid).unwrap();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let m2 = resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = resid.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = resid.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let s = m3 / m2.powf(1.5);
        let k = m4 / (m2 * m2);
        let oracle = n / 6.0 * (s * s + (k - 3.0).powi(2) / 4.0);
        assert_relative_eq!(r.statistic, oracle, epsilon = 1e-10);
    }

    #[test]
    fn hetero_tests_degenerate_on_exact_fit() {
        let x = design_with_intercept(&[vec![0.0, 1.0, 2.0, 3.0]]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = ols_fit(&x, &y).unwrap();
        let bp = breusch_pagan(&fit, &x).unwrap();
        let kb = koenker_bassett(&fit, &x).unwrap();
        assert_eq!(bp.statistic, 0.0);
        assert_eq!(bp.p_value, 1.0);
        assert_eq!(kb.statistic, 0.0);
    }

    #[test]
    fn kb_equals_n_when_aux_r2_is_one() {
        // construct residuals whose squares are exactly linear in x
        let n = 8;
        let xcol: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let x = design_with_intercept(&[xcol.clone()]);
        let resid = DVector::from_iterator(n, xcol.iter().map(|v| v.sqrt()));
        // KB reads only the residuals, so synthesize a fit around them
        let fit = OlsFit {
            beta: DVector::zeros(2),
            se: DVector::from_element(2, 1.0),
            t_stats: DVector::zeros(2),
            sigma2: resid.norm_squared() / n as f64,
            sigma2_unbiased: resid.norm_squared() / (n - 2) as f64,
            residuals: resid.clone(),
            fitted: DVector::zeros(n),
            r2: 0.0,
            adj_r2: 0.0,
            n,
            k: 2,
        };
        let kb = koenker_bassett(&fit, &x).unwrap();
        assert_relative_eq!(kb.statistic, n as f64, epsilon = 1e-8);
    }

    #[test]
    fn bp_kb_match_two_stage_oracle() {
        let mut rng = crate::esda::substream_rng(3, 102);
        let n = 500;
        let xcol: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0 + 0.5).collect();
        let x = design_with_intercept(&[xcol.clone()]);
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let noise: f64 = rng.random::<f64>() - 0.5;
                2.0 + xcol[i] + xcol[i] * noise // sigma_i proportional to x_i
            }),
        );
        let fit = ols_fit(&x, &y).unwrap();
        let bp = breusch_pagan(&fit, &x).unwrap();
        let kb = koenker_bassett(&fit, &x).unwrap();

        // independent two-stage oracle via direct normal equations
        let nf = n as f64;
        let e2: Vec<f64> = fit.residuals.iter().map(|e| e * e).collect();
        let sigma2 = e2.iter().sum::<f64>() / nf;
        let g: Vec<f64> = e2.iter().map(|v| v / sigma2 - 1.0).collect();
        let aux = |dep: &[f64]| -> (f64, f64) {
            let gv = DVector::from_vec(dep.to_vec());
            let xtx = x.transpose() * &x;
            let beta = xtx.clone().lu().solve(&(x.transpose() * &gv)).unwrap();
            let fittedv = &x * beta;
            let mean = gv.sum() / nf;
            let ess: f64 = fittedv.iter().map(|v| (v - mean).powi(2)).sum();
            let tss: f64 = gv.iter().map(|v| (v - mean).powi(2)).sum();
            (ess, ess / tss)
        };
        let (ess_g, _) = aux(&g);
        let (_, r2_e2) = aux(&e2);
        assert_relative_eq!(bp.statistic, 0.5 * ess_g, epsilon = 1e-8);
        assert_relative_eq!(kb.statistic, nf * r2_e2, epsilon = 1e-8);
        // heteroskedastic DGP should reject comfortably
        assert!(bp.p_value < 0.05);
    }

    fn cycle4_std() -> WeightMatrix {
        let ids = vec!["0".into(), "1".into(), "2".into(), "3".into()];
        let mut entries = Vec::new();
        for i in 0..4usize {
            let j = (i + 1) % 4;
            entries.push((i, j, 1.0));
            entries.push((j, i, 1.0));
        }
        WeightMatrix::from_entries(ids, entries, false)
            .unwrap()
            .row_standardize()
            .unwrap()
    }

    #[test]
    fn residual_moran_alternating_cycle() {
        let w = cycle4_std();
        // set up a fit whose residuals are (1, -1, 1, -1)
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = OlsFit {
            beta: DVector::zeros(1),
            se: DVector::from_element(1, 1.0),
            t_stats: DVector::zeros(1),
            sigma2: 1.0,
            sigma2_unbiased: 1.0,
            residuals: DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]),
            fitted: DVector::zeros(4),
            r2: 0.0,
            adj_r2: 0.0,
            n: 4,
            k: 1,
        };
        let rm = residual_moran(&w, &fit, &x).unwrap();
        assert_relative_eq!(rm.i_value, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn residual_moran_statistic_matches_esda() {
        let mut rng = crate::esda::substream_rng(4, 103);
        let n = 40;
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < 0.15 {
                    entries.push((i, j, 1.0));
                }
            }
        }
        let w = WeightMatrix::from_entries(ids, entries, false)
            .unwrap()
            .row_standardize()
            .unwrap();
        let xcol: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = design_with_intercept(&[xcol.clone()]);
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| 1.0 + xcol[i] + rng.random::<f64>() - 0.5),
        );
        let fit = ols_fit(&x, &y).unwrap();
        let rm = residual_moran(&w, &fit, &x).unwrap();
        // raw statistic must equal global Moran's I of the residuals up to
        // the mean-centering (residuals of an intercept model are centered)
        let resid: Vec<f64> = fit.residuals.iter().copied().collect();
        let g = morans_i(&w, &resid, 0, 0).unwrap();
        assert_relative_eq!(rm.i_value, g.i_value, epsilon = 1e-12);
    }

    /// Monte Carlo check of the projection-aware moments under the null.
    #[test]
    fn residual_moran_moments_match_simulation() {
        use rand_distr::StandardNormal;
        let n = 36;
        let mut recs = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                recs.push(crate::data::RegionRecord {
                    id: format!("g{r}_{c}"),
                    x: r as f64,
                    y: c as f64,
                    p0: 1.0,
                    pt: 1.0,
                });
            }
        }
        let ds = crate::data::Dataset::new(recs, 10.0, crate::data::CoordinateSystem::PlanarKm)
            .unwrap();
        let (w, _) = crate::weights::build_distance_band(&ds, 1.0).unwrap();
        let w = w.row_standardize().unwrap();
        let mut rng = crate::esda::substream_rng(5, 104);
        let xcol: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = design_with_intercept(&[xcol]);

        let reps = 4000;
        let mut zs = Vec::with_capacity(reps);
        let mut e_i_theory = 0.0;
        let mut var_theory = 0.0;
        for _ in 0..reps {
            let y = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let fit = ols_fit(&x, &y).unwrap();
            let rm = residual_moran(&w, &fit, &x).unwrap();
            // recover the theoretical moments from (I, z): z = (I - E)/sd
            let sd = (rm.i_value - rm.z_value * 0.0).abs(); // placeholder, replaced below
            let _ = sd;
            zs.push(rm.i_value);
            // E and Var are data-independent; grab them once via the internals
            if e_i_theory == 0.0 {
                let t = projection_traces(&w, &x).unwrap();
                let nk = (n - 2) as f64;
                e_i_theory = n as f64 * t.tr_mw / (nk * w.s0());
                let e_i2 = (n as f64).powi(2)
                    * (t.tr_mwmwt + t.tr_mwmw + t.tr_mw * t.tr_mw)
                    / (w.s0().powi(2) * nk * (nk + 2.0));
                var_theory = e_i2 - e_i_theory * e_i_theory;
            }
        }
        let mean_sim = zs.iter().sum::<f64>() / reps as f64;
        let var_sim = zs.iter().map(|v| (v - mean_sim).powi(2)).sum::<f64>() / reps as f64;
        // 4 sigma tolerance on the simulated mean
        let tol_mean = 4.0 * (var_theory / reps as f64).sqrt();
        assert!(
            (mean_sim - e_i_theory).abs() < tol_mean,
            "mean {mean_sim} vs theory {e_i_theory} (tol {tol_mean})"
        );
        assert!(
            (var_sim / var_theory - 1.0).abs() < 0.15,
            "var {var_sim} vs theory {var_theory}"
        );
    }

    #[test]
    fn lm_error_zero_when_residual_lag_orthogonal() {
        // residuals alternate on a 4-cycle: e'We = -4 != 0; instead craft
        // orthogonality with a block pattern where each lag is 0
        let w = cycle4_std();
        let x = DMatrix::from_element(4, 1, 1.0);
        let e = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let fit = OlsFit {
            beta: DVector::zeros(1),
            se: DVector::from_element(1, 1.0),
            t_stats: DVector::zeros(1),
            sigma2: e.norm_squared() / 4.0,
            sigma2_unbiased: e.norm_squared() / 3.0,
            residuals: e.clone(),
            fitted: DVector::from_vec(vec![0.5, 0.25, 0.5, 0.25]),
            r2: 0.0,
            adj_r2: 0.0,
            n: 4,
            k: 1,
        };
        let y = &fit.fitted + &e;
        let lm = lm_tests(&w, &fit, &x, &y).unwrap();
        assert_relative_eq!(lm.lm_error.statistic, 0.0, epsilon = 1e-24);
    }

    #[test]
    fn robust_decomposition_identity() {
        let mut rng = crate::esda::substream_rng(6, 105);
        for trial in 0..20u64 {
            let n = 30;
            let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
            let mut entries = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < 0.2 {
                        entries.push((i, j, 1.0));
                    }
                }
            }
            let w = WeightMatrix::from_entries(ids, entries, false)
                .unwrap()
                .row_standardize()
                .unwrap();
            let xcol: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
            let x = design_with_intercept(&[xcol.clone()]);
            let y = DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    0.3 + 0.9 * xcol[i] + rng.random::<f64>() - 0.5 + (trial as f64) * 0.0
                }),
            );
            let fit = ols_fit(&x, &y).unwrap();
            let lm = lm_tests(&w, &fit, &x, &y).unwrap();
            let lhs = lm.lm_lag.statistic + lm.lm_error_robust.statistic;
            let rhs = lm.lm_error.statistic + lm.lm_lag_robust.statistic;
            assert_relative_eq!(lhs, rhs, epsilon = 1e-8, max_relative = 1e-8);
            assert!(lm.lm_lag.statistic >= 0.0);
            assert!(lm.lm_error.statistic >= 0.0);
            assert!(lm.lm_lag_robust.statistic >= 0.0);
            assert!(lm.lm_error_robust.statistic >= 0.0);
        }
    }

    #[test]
    fn scale_invariance_of_diagnostics() {
        let mut rng = crate::esda::substream_rng(7, 106);
        let n = 50;
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < 0.15 {
                    entries.push((i, j, 1.0));
                }
            }
        }
        let w = WeightMatrix::from_entries(ids, entries, false)
            .unwrap()
            .row_standardize()
            .unwrap();
        let xcol: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = design_with_intercept(&[xcol.clone()]);
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| 1.0 - 2.0 * xcol[i] + rng.random::<f64>() - 0.5),
        );
        let c = 37.5;
        let y_scaled = &y * c;
        let fit = ols_fit(&x, &y).unwrap();
        let fit_scaled = ols_fit(&x, &y_scaled).unwrap();
        for j in 0..2 {
            assert_relative_eq!(fit_scaled.beta[j], c * fit.beta[j], epsilon = 1e-8);
        }
        assert_relative_eq!(fit_scaled.r2, fit.r2, epsilon = 1e-8);
        let d = diagnostics(&w, &fit, &x, &y).unwrap();
        let ds = diagnostics(&w, &fit_scaled, &x, &y_scaled).unwrap();
        assert_relative_eq!(d.jb.statistic, ds.jb.statistic, epsilon = 1e-8);
        assert_relative_eq!(d.bp.statistic, ds.bp.statistic, epsilon = 1e-8);
        assert_relative_eq!(d.kb.statistic, ds.kb.statistic, epsilon = 1e-8);
        assert_relative_eq!(
            d.lm_lag.statistic,
            ds.lm_lag.statistic,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            d.lm_error.statistic,
            ds.lm_error.statistic,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            d.lm_lag_robust.statistic,
            ds.lm_lag_robust.statistic,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            d.lm_error_robust.statistic,
            ds.lm_error_robust.statistic,
            max_relative = 1e-8
        );
    }
}
