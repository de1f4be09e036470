//! Small statistics helpers shared by the estimators.

/// Mean and (population) variance of a sample. Returns `(0, 0)` when empty.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

pub fn mean(xs: &[f64]) -> f64 {
    mean_var(xs).0
}

pub fn variance(xs: &[f64]) -> f64 {
    mean_var(xs).1
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the mean of `block_means`, treating blocks as independent.
pub fn block_stderr(block_means: &[f64]) -> f64 {
    let k = block_means.len();
    if k < 2 {
        return f64::NAN;
    }
    let (_, var) = mean_var(block_means);
    (var * k as f64 / (k as f64 - 1.0) / k as f64).sqrt()
}

/// Split `xs` into `blocks` contiguous chunks of (nearly) equal length and
/// return each chunk's mean. Empty chunks are skipped.
pub fn block_means(xs: &[f64], blocks: usize) -> Vec<f64> {
    let n = xs.len();
    (0..blocks)
        .filter_map(|b| {
            let lo = b * n / blocks;
            let hi = (b + 1) * n / blocks;
            (hi > lo).then(|| mean(&xs[lo..hi]))
        })
        .collect()
}

/// Pearson correlation coefficient of two equally long samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let cov = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.len() as f64;
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_moments() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let (m, v) = mean_var(&xs);
        assert_eq!(m, 4.5);
        assert_eq!(v, 8.25);
        assert_eq!(block_means(&xs, 2), vec![2.0, 7.0]);
        assert!((block_stderr(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((correlation(&xs, &xs) - 1.0).abs() < 1e-15);
    }
}
