//! Global RX scoring: Mahalanobis distance of every pixel from the image's
//! own color mean under its channel covariance.

use rayon::prelude::*;

use super::RxError;
use crate::raster::RgbF32;

/// Pixels per reduction chunk. Fixed so sums do not depend on the thread count.
const CHUNK_PIXELS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorStats {
    pub mean: [f64; 3],
    /// Population covariance (divides by n).
    pub covariance: [[f64; 3]; 3],
}

/// Exact two-pass mean and covariance with a deterministic reduction order.
pub fn color_stats(image: &RgbF32) -> ColorStats {
    let data = image.as_slice();
    let n = image.pixel_count() as f64;

    let partial_sums: Vec<[f64; 3]> = data
        .par_chunks(CHUNK_PIXELS * 3)
        .map(|chunk| {
            let mut s = [0.0f64; 3];
            for px in chunk.chunks_exact(3) {
                for c in 0..3 {
                    s[c] += px[c] as f64;
                }
            }
            s
        })
        .collect();
    let mut mean = [0.0f64; 3];
    for s in &partial_sums {
        for c in 0..3 {
            mean[c] += s[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let partial_cov: Vec<[f64; 6]> = data
        .par_chunks(CHUNK_PIXELS * 3)
        .map(|chunk| {
            let mut s = [0.0f64; 6];
            for px in chunk.chunks_exact(3) {
                let d = [px[0] as f64 - mean[0], px[1] as f64 - mean[1], px[2] as f64 - mean[2]];
                s[0] += d[0] * d[0];
                s[1] += d[0] * d[1];
                s[2] += d[0] * d[2];
                s[3] += d[1] * d[1];
                s[4] += d[1] * d[2];
                s[5] += d[2] * d[2];
            }
            s
        })
        .collect();
    let mut u = [0.0f64; 6];
    for s in &partial_cov {
        for k in 0..6 {
            u[k] += s[k];
        }
    }
    u.iter_mut().for_each(|v| *v /= n);
    ColorStats { mean, covariance: [[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]] }
}

/// Lower-triangular Cholesky factor of a symmetric 3x3 matrix.
fn cholesky3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Per-pixel distances `sqrt((x-mu)^T (Sigma + ridge*I)^-1 (x-mu))` in row-major order.
pub fn rx_distances(image: &RgbF32, ridge: f64) -> Result<Vec<f64>, RxError> {
    if image.pixel_count() == 0 {
        return Err(RxError::EmptyImage);
    }
    let stats = color_stats(image);
    let mut cov = stats.covariance;
    for (c, row) in cov.iter_mut().enumerate() {
        row[c] += ridge;
    }
    let l = cholesky3(&cov).ok_or(RxError::SingularCovariance)?;
    let mu = stats.mean;

    let mut out = vec![0.0f64; image.pixel_count()];
    out.par_chunks_mut(CHUNK_PIXELS)
        .zip(image.as_slice().par_chunks(CHUNK_PIXELS * 3))
        .for_each(|(dst, src)| {
            for (d, px) in dst.iter_mut().zip(src.chunks_exact(3)) {
                let v = [px[0] as f64 - mu[0], px[1] as f64 - mu[1], px[2] as f64 - mu[2]];
                // forward substitution: L z = v, distance^2 = |z|^2
                let z0 = v[0] / l[0][0];
                let z1 = (v[1] - l[1][0] * z0) / l[1][1];
                let z2 = (v[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
                *d = (z0 * z0 + z1 * z1 + z2 * z2).sqrt();
            }
        });
    if out.iter().any(|d| !d.is_finite()) {
        return Err(RxError::SingularCovariance);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_all_zero() {
        let img = RgbF32::filled(16, 9, [0.3, 0.5, 0.1]);
        let d = rx_distances(&img, 1e-6).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_without_ridge_is_singular() {
        let img = RgbF32::filled(4, 4, [0.3, 0.5, 0.1]);
        assert!(matches!(rx_distances(&img, 0.0), Err(RxError::SingularCovariance)));
    }

    #[test]
    fn identity_covariance_gives_euclidean_distance() {
        // Six pixels at +-sqrt(3) on each axis: mean 0, population covariance I.
        let a = 3f32.sqrt();
        let data = vec![a, 0., 0., -a, 0., 0., 0., a, 0., 0., -a, 0., 0., 0., a, 0., 0., -a];
        let img = RgbF32::from_raw(6, 1, data).unwrap();
        let stats = color_stats(&img);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((stats.covariance[i][j] - want).abs() < 1e-6);
            }
        }
        let d = rx_distances(&img, 0.0).unwrap();
        for v in d {
            assert!((v - a as f64).abs() < 1e-6, "{v}");
        }
    }
}
