use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// How a pixel's distance is turned into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMode {
    /// Standardize distances over the image and take the upper normal tail.
    #[default]
    ZScore,
    /// Treat squared distances as chi-square with 3 degrees of freedom.
    ChiSquare,
}

/// Upper-tail critical value `z` with `P(Z > z) = p`.
pub fn normal_upper_critical(p: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - p)
}

/// Distance above which a pixel is flagged, or `None` when nothing can be flagged.
pub fn threshold_distance(distances: &[f64], p_threshold: f64, mode: PValueMode) -> Option<f64> {
    match mode {
        PValueMode::ZScore => {
            let n = distances.len();
            if n < 2 {
                return None;
            }
            let mean = distances.iter().sum::<f64>() / n as f64;
            let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) || !sd.is_finite() {
                return None;
            }
            Some(mean + normal_upper_critical(p_threshold) * sd)
        }
        PValueMode::ChiSquare => {
            let chi = ChiSquared::new(3.0).expect("3 degrees of freedom");
            Some(chi.inverse_cdf(1.0 - p_threshold).sqrt())
        }
    }
}

/// Flags pixels whose one-sided p-value falls below `p_threshold`.
pub fn anomaly_mask(distances: &[f64], p_threshold: f64) -> Vec<bool> {
    anomaly_mask_with(distances, p_threshold, PValueMode::ZScore)
}

pub fn anomaly_mask_with(distances: &[f64], p_threshold: f64, mode: PValueMode) -> Vec<bool> {
    match threshold_distance(distances, p_threshold, mode) {
        Some(t) => distances.iter().map(|&d| d > t).collect(),
        None => vec![false; distances.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn critical_value_for_default_threshold() {
        assert!((normal_upper_critical(1e-4) - 3.719016).abs() < 1e-5);
    }

    #[test]
    fn equal_distances_flag_nothing() {
        assert!(anomaly_mask(&[2.5; 100], 1e-4).iter().all(|m| !m));
        assert!(anomaly_mask(&[], 1e-4).is_empty());
    }

    #[test]
    fn z_score_flag_matches_tail_probability() {
        // 10^7 standard normal draws: expected 1000 exceedances at p = 1e-4
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d: Vec<f64> = (0..10_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let flagged = anomaly_mask(&d, 1e-4).iter().filter(|&&m| m).count() as f64;
        let frac = flagged / d.len() as f64;
        assert!((frac - 1e-4).abs() <= 0.5e-4, "flagged fraction {frac}");
    }

    #[test]
    fn lowering_threshold_never_adds_pixels() {
        let d: Vec<f64> = (0..5000).map(|i| ((i * 37) % 1000) as f64 / 97.0 + (i % 13) as f64).collect();
        let loose = anomaly_mask(&d, 1e-2);
        let strict = anomaly_mask(&d, 1e-4);
        assert!(strict.iter().zip(&loose).all(|(s, l)| !s || *l));
    }

    #[test]
    fn chi_square_mode_uses_three_dof() {
        let t = threshold_distance(&[0.0, 1.0], 1e-4, PValueMode::ChiSquare).unwrap();
        // chi2(3) upper 1e-4 quantile is 21.1075
        assert!((t * t - 21.1075).abs() < 1e-3);
    }
}
