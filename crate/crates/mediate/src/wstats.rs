//! Small weighted-statistics helpers shared across modules.

/// Hajek (normalized) weighted mean: sum(w*x)/sum(w).
pub(crate) fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, w) in values.iter().zip(weights) {
        num += w * x;
        den += w;
    }
    num / den
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unweighted sample standard deviation (denominator n-1; 0 when n < 2).
pub(crate) fn sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
///
/// This is the quantile rule used everywhere quantiles are reported
/// (bootstrap percentile intervals, weight summaries).
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = h - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub(crate) fn quantile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, p)
}

/// Weighted quantile: cumulative normalized weights with linear interpolation
/// between bracketing values.
pub(crate) fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    assert_eq!(values.len(), weights.len());
    assert!(!values.is_empty());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let target = p.clamp(0.0, 1.0) * total;
    let mut cum = 0.0;
    let mut prev_val = values[idx[0]];
    let mut prev_cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= target {
            if cum - prev_cum > 0.0 && cum > target && prev_cum > 0.0 {
                let frac = (target - prev_cum) / (cum - prev_cum);
                return prev_val + frac * (values[i] - prev_val);
            }
            return values[i];
        }
        prev_val = values[i];
        prev_cum = cum;
    }
    values[idx[values.len() - 1]]
}
