use super::{BitMask2D, HighFreqMap};

pub(crate) const DEFAULT_MAX_ITER: usize = 10;

/// Outcome of the two-cluster Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub center_low: f64,
    pub center_high: f64,
    /// Midpoint of the two centers; high-cluster values are `>=` it.
    pub threshold: f64,
    pub iterations: usize,
    pub mask: BitMask2D,
}

fn cluster_means(values: &[f32], high: &[bool]) -> Option<(f64, f64)> {
    let (mut sum_lo, mut n_lo, mut sum_hi, mut n_hi) = (0.0f64, 0usize, 0.0f64, 0usize);
    for (&v, &h) in values.iter().zip(high) {
        if h {
            sum_hi += v as f64;
            n_hi += 1;
        } else {
            sum_lo += v as f64;
            n_lo += 1;
        }
    }
    if n_lo == 0 || n_hi == 0 {
        return None;
    }
    Some((sum_lo / n_lo as f64, sum_hi / n_hi as f64))
}

/// Two-means clustering of the map values with Lloyd's algorithm.
///
/// The first partition splits at 0.5 (values below seed the low cluster,
/// the rest the high cluster) and the initial centers are those clusters'
/// means. Each iteration recomputes the means and reassigns every value to
/// the nearer center, ties going high; it stops once no assignment
/// changes or after `max_iter` passes. If either cluster is empty (an
/// all-zero or constant map) the mask is all zeros and `iterations` is 0.
pub fn kmeans2_binarize(h: &HighFreqMap, max_iter: usize) -> KmeansResult {
    let values = h.values();
    let mut high: Vec<bool> = values.iter().map(|&v| v >= 0.5).collect();
    let degenerate = |center: f64| KmeansResult {
        center_low: center,
        center_high: center,
        threshold: center,
        iterations: 0,
        mask: BitMask2D::zeros(h.height(), h.width()),
    };

    let Some(mut centers) = cluster_means(values, &high) else {
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64;
        return degenerate(mean);
    };
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let mid = 0.5 * (centers.0 + centers.1);
        let mut changed = false;
        for (flag, &v) in high.iter_mut().zip(values) {
            let next = v as f64 >= mid;
            changed |= next != *flag;
            *flag = next;
        }
        match cluster_means(values, &high) {
            Some(c) => centers = c,
            None => {
                let mean = values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64;
                return degenerate(mean);
            }
        }
        if !changed {
            break;
        }
    }

    KmeansResult {
        center_low: centers.0,
        center_high: centers.1,
        threshold: 0.5 * (centers.0 + centers.1),
        iterations,
        mask: BitMask2D::new(h.height(), h.width(), high).expect("map dimensions"),
    }
}

pub fn binarize_fixed(h: &HighFreqMap, thresh: f32) -> BitMask2D {
    let bits = h.values().iter().map(|&v| v >= thresh).collect();
    BitMask2D::new(h.height(), h.width(), bits).expect("map dimensions")
}

/// `value > lower median`, so a constant map yields no ones.
pub fn binarize_median(h: &HighFreqMap) -> BitMask2D {
    let mut sorted = h.values().to_vec();
    sorted.sort_by(f32::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let bits = h.values().iter().map(|&v| v > median).collect();
    BitMask2D::new(h.height(), h.width(), bits).expect("map dimensions")
}
