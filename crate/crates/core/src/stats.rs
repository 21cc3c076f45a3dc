//! Small numeric helpers shared by the detectors and the feature miner.

use rand::Rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by n).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation of two equal-length series. Returns None when either
/// side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Linear-interpolation quantile (R type 7). `q` in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = q.clamp(0.0, 1.0);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    }
}

/// Standard normal draw via Box-Muller.
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Exp(1) draw via inverse CDF.
pub fn exponential(rng: &mut impl Rng) -> f64 {
    let mut u: f64 = rng.gen();
    while u <= f64::MIN_POSITIVE {
        u = rng.gen();
    }
    -u.ln()
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    let mut found = false;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
            found = true;
        } else {
            break;
        }
    }
    if !found {
        // All mass would be clipped; fall back to uniform.
        return vec![1.0 / n as f64; n];
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pearson_identical_series_is_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(pearson(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_zero_variance_is_none() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_relative_eq!(quantile(&xs, 0.99), 99.01, epsilon = 1e-9);
        assert_relative_eq!(quantile(&xs, 0.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(quantile(&xs, 1.0), 100.0, epsilon = 1e-12);
    }

    #[test]
    fn simplex_projection_is_a_distribution() {
        let p = project_to_simplex(&[0.9, -0.1, 0.3]);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // A vector already on the simplex is a fixed point.
        let q = project_to_simplex(&[0.2, 0.5, 0.3]);
        assert_relative_eq!(q[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(q[1], 0.5, epsilon = 1e-12);
    }
}
