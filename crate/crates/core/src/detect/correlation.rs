//! Attribute-correlation detector: multivariate correlation baselines over
//! statistic time series, bootstrap confidence bands, and boundary-violation
//! scoring.
//!
//! Estimator dispatch by attribute-kind pair:
//! - continuous-continuous: sliding-window Pearson, windows weighted by
//!   sqrt(n * Var(rho)) with Var(rho) = (1 - rho^2)^2 / (n - 1);
//! - continuous-discrete: point-biserial per category of the modal-category
//!   series, composed with weights sqrt(n_K * |rho_K|);
//! - discrete-discrete: l1-penalized CCA on the frequency-vector series,
//!   solved by alternating maximization with soft-thresholding; lambda = 0
//!   reduces to the classical first canonical correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp::SqrValue;
use crate::rng::stream;
use crate::stats::{mean, pearson, quantile, std_dev};

/// Scalar or histogram statistic series of one attribute.
#[derive(Debug, Clone)]
pub enum SqrSeries {
    Scalar(Vec<f64>),
    Hist(Vec<Vec<f64>>),
}

impl SqrSeries {
    pub fn from_values(values: &[SqrValue]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty statistic series"));
        }
        match &values[0] {
            SqrValue::Mean(_) => Ok(SqrSeries::Scalar(
                values
                    .iter()
                    .map(|v| v.as_mean().ok_or_else(|| Error::invalid("mixed statistic kinds")))
                    .collect::<Result<_>>()?,
            )),
            SqrValue::Frequency(_) => Ok(SqrSeries::Hist(
                values
                    .iter()
                    .map(|v| {
                        v.as_frequency()
                            .map(<[f64]>::to_vec)
                            .ok_or_else(|| Error::invalid("mixed statistic kinds"))
                    })
                    .collect::<Result<_>>()?,
            )),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SqrSeries::Scalar(v) => v.len(),
            SqrSeries::Hist(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slice(&self, range: std::ops::Range<usize>) -> SqrSeries {
        match self {
            SqrSeries::Scalar(v) => SqrSeries::Scalar(v[range].to_vec()),
            SqrSeries::Hist(v) => SqrSeries::Hist(v[range].to_vec()),
        }
    }

    fn resample(&self, indices: &[usize]) -> SqrSeries {
        match self {
            SqrSeries::Scalar(v) => SqrSeries::Scalar(indices.iter().map(|&i| v[i]).collect()),
            SqrSeries::Hist(v) => SqrSeries::Hist(indices.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    PearsonWeighted,
    PointBiserialComposite,
    SparseCca,
}

/// Window weighting of the Pearson path. `Variance` is the written form
/// (up-weights high-variance windows); `InverseVariance` is the documented
/// alternative for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    Variance,
    InverseVariance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairBaseline {
    pub a: usize,
    pub b: usize,
    pub estimator: EstimatorTag,
    /// Baseline coefficient; NaN when the pair is uncomputable.
    pub rho_hat: f64,
    /// rho_hat +- the delta quantile of bootstrap deviations.
    pub ci: (f64, f64),
    pub computable: bool,
    /// |rho^(b) - rho_hat| per bootstrap replicate.
    #[serde(skip)]
    pub boot_deviations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationBaseline {
    pub pairs: Vec<PairBaseline>,
    /// Per attribute: band of the summed pairwise bootstrap deviations,
    /// [(1-delta) quantile, delta quantile].
    pub attribute_ci: Vec<(f64, f64)>,
    pub window: usize,
    pub bootstrap: usize,
    pub delta: f64,
    pub lambda: f64,
    pub weight_mode: WeightMode,
}

impl CorrelationBaseline {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairBaseline> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

fn window_weight(rho: f64, n: usize, mode: WeightMode) -> f64 {
    let var = (1.0 - rho * rho).powi(2) / (n as f64 - 1.0);
    match mode {
        WeightMode::Variance => (n as f64 * var).sqrt(),
        WeightMode::InverseVariance => (n as f64 / var.max(1e-12)).sqrt(),
    }
}

/// Sliding-window weighted Pearson baseline. Zero-variance windows get
/// weight zero; None when every window is degenerate.
pub fn weighted_pearson(x: &[f64], y: &[f64], window: usize, mode: WeightMode) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < window || window < 3 {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut fallback = Vec::new();
    for start in 0..=(x.len() - window) {
        let (xs, ys) = (&x[start..start + window], &y[start..start + window]);
        let Some(rho) = pearson(xs, ys) else { continue };
        fallback.push(rho);
        let w = window_weight(rho, window, mode);
        num += w * rho;
        den += w;
    }
    if fallback.is_empty() {
        return None;
    }
    if den <= 0.0 {
        // All computable windows carried zero weight (|rho| = 1 in the
        // written weighting); fall back to their plain average.
        return Some(mean(&fallback));
    }
    Some(num / den)
}

/// Modal-category series of a frequency-histogram series; ties take the
/// lowest index.
fn modal_series(hist: &[Vec<f64>]) -> Vec<usize> {
    hist.iter()
        .map(|h| {
            h.iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    a.partial_cmp(b).unwrap().then(ib.cmp(ia))
                })
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect()
}

/// Point-biserial composite between a scalar series and a frequency series.
/// The frequency series is reduced to its modal-category series; each
/// category's point-biserial correlation is weighted by sqrt(count * |rho|).
pub fn point_biserial_composite(x: &[f64], y_hist: &[Vec<f64>]) -> Option<f64> {
    assert_eq!(x.len(), y_hist.len());
    let n = x.len();
    if n < 3 {
        return None;
    }
    let sigma = std_dev(x);
    if !(sigma > 0.0) {
        return None;
    }
    let modal = modal_series(y_hist);
    let n_cats = y_hist[0].len();
    let mx = mean(x);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut any = false;
    for cat in 0..n_cats {
        let n1 = modal.iter().filter(|&&m| m == cat).count();
        if n1 == 0 || n1 == n {
            continue;
        }
        let mu1 = x
            .iter()
            .zip(&modal)
            .filter(|(_, &m)| m == cat)
            .map(|(v, _)| v)
            .sum::<f64>()
            / n1 as f64;
        let n0 = n - n1;
        let mu0 = (mx * n as f64 - mu1 * n1 as f64) / n0 as f64;
        let rho = (mu1 - mu0) / sigma * ((n1 * n0) as f64 / (n * n) as f64).sqrt();
        let w = (n1 as f64 * rho.abs()).sqrt();
        num += w * rho;
        den += w;
        any = true;
    }
    if !any {
        return None;
    }
    if den <= 0.0 {
        return Some(0.0);
    }
    Some(num / den)
}

/// l1-penalized CCA on two frequency-vector series. Returns the (sign-
/// canonicalized, nonnegative) correlation of the sparse projections.
pub fn sparse_cca(x_hist: &[Vec<f64>], y_hist: &[Vec<f64>], lambda: f64) -> Option<f64> {
    assert_eq!(x_hist.len(), y_hist.len());
    let n = x_hist.len();
    if n < 3 {
        return None;
    }
    let sxx = covariance_matrix(x_hist, x_hist);
    let syy = covariance_matrix(y_hist, y_hist);
    let sxy = covariance_matrix(x_hist, y_hist);
    cca_from_covariances(&sxx, &syy, &sxy, lambda)
}

/// Alternating maximization on explicit covariance blocks. Soft-thresholds
/// the unnormalized directions by lambda, then rescales to unit metric norm.
pub fn cca_from_covariances(
    sxx: &[Vec<f64>],
    syy: &[Vec<f64>],
    sxy: &[Vec<f64>],
    lambda: f64,
) -> Option<f64> {
    let kx = sxx.len();
    let ky = syy.len();
    if kx == 0 || ky == 0 {
        return None;
    }
    if sxy.iter().flatten().all(|v| v.abs() < 1e-15) {
        return Some(0.0);
    }
    let sxx_inv = pseudo_inverse(sxx)?;
    let syy_inv = pseudo_inverse(syy)?;
    let syx = transpose(sxy);

    // Deterministic, mildly tilted start to avoid orthogonal inits.
    let mut v: Vec<f64> = (0..ky).map(|i| 1.0 + 0.01 * i as f64).collect();
    normalize_metric(&mut v, syy)?;
    let mut rho_prev = f64::NAN;
    let mut rho = 0.0;
    for _ in 0..200 {
        let mut u = mat_vec(&sxx_inv, &mat_vec_rect(sxy, &v));
        soft_threshold(&mut u, lambda);
        normalize_metric(&mut u, sxx)?;
        let mut v_new = mat_vec(&syy_inv, &mat_vec_rect(&syx, &u));
        soft_threshold(&mut v_new, lambda);
        normalize_metric(&mut v_new, syy)?;
        v = v_new;
        rho = dot(&u, &mat_vec_rect(sxy, &v));
        if (rho - rho_prev).abs() < 1e-12 {
            break;
        }
        rho_prev = rho;
    }
    Some(rho.abs().min(1.0))
}

fn covariance_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let ka = a[0].len();
    let kb = b[0].len();
    let mean_a: Vec<f64> = (0..ka).map(|i| a.iter().map(|r| r[i]).sum::<f64>() / n as f64).collect();
    let mean_b: Vec<f64> = (0..kb).map(|i| b.iter().map(|r| r[i]).sum::<f64>() / n as f64).collect();
    let mut m = vec![vec![0.0; kb]; ka];
    for t in 0..n {
        for i in 0..ka {
            let da = a[t][i] - mean_a[i];
            for jj in 0..kb {
                m[i][jj] += da * (b[t][jj] - mean_b[jj]);
            }
        }
    }
    for row in &mut m {
        for v in row {
            *v /= n as f64;
        }
    }
    m
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m[0].len();
    let mut t = vec![vec![0.0; rows]; cols];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn mat_vec_rect(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft_threshold(v: &mut [f64], lambda: f64) {
    if lambda <= 0.0 {
        return;
    }
    let thresholded: Vec<f64> =
        v.iter().map(|&x| x.signum() * (x.abs() - lambda).max(0.0)).collect();
    if thresholded.iter().all(|&x| x == 0.0) {
        // Penalty swallowed everything; keep only the largest component.
        let (imax, _) = v
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        let keep = v[imax];
        v.iter_mut().for_each(|x| *x = 0.0);
        v[imax] = keep;
        return;
    }
    v.copy_from_slice(&thresholded);
}

/// Scale v so that v' M v = 1. None when the metric norm vanishes.
fn normalize_metric(v: &mut [f64], m: &[Vec<f64>]) -> Option<()> {
    let norm2 = dot(v, &mat_vec(m, v));
    if !(norm2 > 1e-300) {
        return None;
    }
    let s = norm2.sqrt();
    v.iter_mut().for_each(|x| *x /= s);
    Some(())
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via Jacobi
/// eigendecomposition, with a small ridge for conditioning.
fn pseudo_inverse(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = m.len();
    let trace: f64 = (0..k).map(|i| m[i][i]).sum();
    let ridge = 1e-12 * trace.max(1e-12);
    let mut work = m.to_vec();
    for i in 0..k {
        work[i][i] += ridge;
    }
    let (vals, vecs) = jacobi_eigen(&work)?;
    let vmax = vals.iter().cloned().fold(0.0f64, f64::max);
    if vmax <= 0.0 {
        return None;
    }
    let tol = 1e-10 * vmax;
    let mut inv = vec![vec![0.0; k]; k];
    for (e, val) in vals.iter().enumerate() {
        if *val <= tol {
            continue;
        }
        let w = 1.0 / val;
        for i in 0..k {
            for j in 0..k {
                inv[i][j] += w * vecs[i][e] * vecs[j][e];
            }
        }
    }
    Some(inv)
}

/// Cyclic Jacobi eigendecomposition for small symmetric matrices.
/// Returns (eigenvalues, column eigenvectors).
fn jacobi_eigen(m: &[Vec<f64>]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = m.len();
    let mut a = m.to_vec();
    let mut v = vec![vec![0.0; k]; k];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[p][q].abs() < 1e-30 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..k {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..k {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..k).map(|i| a[i][i]).collect();
    if vals.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((vals, v))
}

// ---------------------------------------------------------------------------
// Baseline construction
// ---------------------------------------------------------------------------

/// Estimate one pair on (a slice of) the statistic series.
pub fn estimate_pair(
    x: &SqrSeries,
    y: &SqrSeries,
    window: usize,
    lambda: f64,
    mode: WeightMode,
) -> (EstimatorTag, Option<f64>) {
    match (x, y) {
        (SqrSeries::Scalar(a), SqrSeries::Scalar(b)) => {
            (EstimatorTag::PearsonWeighted, weighted_pearson(a, b, window, mode))
        }
        (SqrSeries::Scalar(a), SqrSeries::Hist(b)) => {
            (EstimatorTag::PointBiserialComposite, point_biserial_composite(a, b))
        }
        (SqrSeries::Hist(a), SqrSeries::Scalar(b)) => {
            (EstimatorTag::PointBiserialComposite, point_biserial_composite(b, a))
        }
        (SqrSeries::Hist(a), SqrSeries::Hist(b)) => {
            (EstimatorTag::SparseCca, sparse_cca(a, b, lambda))
        }
    }
}

/// Build baselines and bootstrap confidence bands for every attribute pair.
///
/// Bootstrap replicates resample window positions (Pearson path) or time
/// indices (other paths) with replacement and recompute the estimator; the
/// pair CI is `rho_hat +- Q_delta(|rho^(b) - rho_hat|)`. Attribute-level
/// bands sum pairwise deviations per replicate and take the
/// [(1-delta), delta] quantile band of the sums.
#[allow(clippy::too_many_arguments)]
pub fn build_correlation_baseline(
    series: &[SqrSeries],
    window: usize,
    bootstrap: usize,
    delta: f64,
    lambda: f64,
    weight_mode: WeightMode,
    seed: u64,
) -> Result<CorrelationBaseline> {
    let k = series.len();
    if k < 2 {
        return Err(Error::invalid("correlation baselines need at least two attributes"));
    }
    let t_len = series[0].len();
    if series.iter().any(|s| s.len() != t_len) {
        return Err(Error::invalid("attribute series lengths differ"));
    }
    if window < 3 || t_len < window {
        return Err(Error::invalid(format!(
            "need series length {t_len} >= window {window} >= 3"
        )));
    }
    if bootstrap < 100 {
        return Err(Error::invalid("at least 100 bootstrap resamples required"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::config("delta must lie in [0, 1)"));
    }

    let mut pairs = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let (estimator, rho) = estimate_pair(&series[a], &series[b], window, lambda, weight_mode);
            let Some(rho_hat) = rho else {
                pairs.push(PairBaseline {
                    a,
                    b,
                    estimator,
                    rho_hat: f64::NAN,
                    ci: (f64::NAN, f64::NAN),
                    computable: false,
                    boot_deviations: vec![0.0; bootstrap],
                });
                continue;
            };
            let mut deviations = Vec::with_capacity(bootstrap);
            for rep in 0..bootstrap {
                let mut rng = stream(seed, "detect/bootstrap", &[a as u64, b as u64, rep as u64]);
                use rand::Rng;
                let indices: Vec<usize> =
                    (0..t_len).map(|_| rng.gen_range(0..t_len)).collect();
                let rho_b = match (&series[a], &series[b]) {
                    (SqrSeries::Scalar(xa), SqrSeries::Scalar(xb)) => {
                        // Resample non-overlapping window positions: sliding
                        // windows overlap too much for an honest variance
                        // estimate of the weighted mean.
                        let n_blocks = (t_len / window).max(1);
                        let mut num = 0.0;
                        let mut den = 0.0;
                        let mut flat = Vec::new();
                        for _ in 0..n_blocks {
                            let s = rng.gen_range(0..n_blocks) * window;
                            let s = s.min(t_len - window);
                            if let Some(r) = pearson(&xa[s..s + window], &xb[s..s + window]) {
                                flat.push(r);
                                let w = window_weight(r, window, weight_mode);
                                num += w * r;
                                den += w;
                            }
                        }
                        if flat.is_empty() {
                            None
                        } else if den > 0.0 {
                            Some(num / den)
                        } else {
                            Some(mean(&flat))
                        }
                    }
                    _ => {
                        let xa = series[a].resample(&indices);
                        let xb = series[b].resample(&indices);
                        estimate_pair(&xa, &xb, window, lambda, weight_mode).1
                    }
                };
                deviations.push(match rho_b {
                    Some(r) => (r - rho_hat).abs(),
                    None => 0.0,
                });
            }
            let q = quantile(&deviations, delta);
            pairs.push(PairBaseline {
                a,
                b,
                estimator,
                rho_hat,
                ci: (rho_hat - q, rho_hat + q),
                computable: true,
                boot_deviations: deviations,
            });
        }
    }

    let mut attribute_ci = Vec::with_capacity(k);
    for j in 0..k {
        let mut sums = vec![0.0; bootstrap];
        for p in pairs.iter().filter(|p| p.computable && (p.a == j || p.b == j)) {
            for (s, d) in sums.iter_mut().zip(&p.boot_deviations) {
                *s += d;
            }
        }
        attribute_ci.push((quantile(&sums, 1.0 - delta), quantile(&sums, delta)));
    }

    Ok(CorrelationBaseline {
        pairs,
        attribute_ci,
        window,
        bootstrap,
        delta,
        lambda,
        weight_mode,
    })
}

/// Cumulative deviation and boundary-violation score of one attribute on an
/// observed window of the statistic series. Returns (lambda_c, cumulative
/// deviation, number of pairs skipped as uncomputable).
pub fn correlation_deviation(
    observed: &[SqrSeries],
    baseline: &CorrelationBaseline,
    attr: usize,
) -> Result<(f64, f64, usize)> {
    if observed.len() != baseline.attribute_ci.len() {
        return Err(Error::invalid("observed series shape differs from the baseline"));
    }
    let mut cumulative = 0.0;
    let mut skipped = 0usize;
    for p in &baseline.pairs {
        if p.a != attr && p.b != attr {
            continue;
        }
        if !p.computable {
            skipped += 1;
            continue;
        }
        let (_, rho) = estimate_pair(
            &observed[p.a],
            &observed[p.b],
            baseline.window,
            baseline.lambda,
            baseline.weight_mode,
        );
        match rho {
            Some(r) => cumulative += (r - p.rho_hat).abs(),
            None => skipped += 1,
        }
    }
    let (lo, hi) = baseline.attribute_ci[attr];
    let lambda_c = (cumulative - lo).abs().min((cumulative - hi).abs());
    Ok((lambda_c, cumulative, skipped))
}

/// Observed-window slices for all attributes.
pub fn window_slices(series: &[SqrSeries], start: usize, len: usize) -> Vec<SqrSeries> {
    series.iter().map(|s| s.slice(start..start + len)).collect()
}
