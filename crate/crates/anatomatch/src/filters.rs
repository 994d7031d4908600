//! Separable Gaussian filtering on dense scalar grids (f64 work buffers,
//! clamped boundary handling). Shared by the feature extractor and the
//! phantom augmentations.

/// Normalized 1D Gaussian taps, truncated at ceil(3 sigma).
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps = Vec::with_capacity((2 * radius + 1) as usize);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in -radius..=radius {
        taps.push((-((i * i) as f64) * inv).exp());
    }
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

fn index(dims: [usize; 3], z: usize, y: usize, x: usize) -> usize {
    (z * dims[1] + y) * dims[2] + x
}

/// In-place-ish separable smoothing along one axis with clamped indexing.
fn smooth_axis(src: &[f64], dims: [usize; 3], axis: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() as i64 - 1) / 2;
    let mut out = vec![0.0f64; src.len()];
    let n = dims[axis] as i64;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let coord = [z as i64, y as i64, x as i64];
                let mut acc = 0.0;
                for (k, &w) in taps.iter().enumerate() {
                    let off = k as i64 - radius;
                    let mut c = coord;
                    c[axis] = (c[axis] + off).clamp(0, n - 1);
                    acc += w * src[index(dims, c[0] as usize, c[1] as usize, c[2] as usize)];
                }
                out[index(dims, z, y, x)] = acc;
            }
        }
    }
    out
}

/// Full 3D smoothing: one pass per axis.
pub(crate) fn gaussian_smooth_3d(src: &[f64], dims: [usize; 3], sigma: f64) -> Vec<f64> {
    let taps = gaussian_kernel(sigma);
    let mut cur = smooth_axis(src, dims, 0, &taps);
    cur = smooth_axis(&cur, dims, 1, &taps);
    smooth_axis(&cur, dims, 2, &taps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for sigma in [0.5, 1.0, 2.0, 4.0] {
            let taps = gaussian_kernel(sigma);
            let sum: f64 = taps.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let n = taps.len();
            for i in 0..n / 2 {
                assert_eq!(taps[i], taps[n - 1 - i]);
            }
        }
    }

    #[test]
    fn constant_field_is_unchanged() {
        let dims = [4, 5, 6];
        let src = vec![3.25f64; 4 * 5 * 6];
        let out = gaussian_smooth_3d(&src, dims, 1.5);
        for v in out {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    /// Interior voxels must match a dense 3D convolution with the outer
    /// product kernel (the two agree exactly away from the clamped border).
    #[test]
    fn separable_matches_dense_convolution_in_interior() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(5);
        let dims = [9, 9, 9];
        let src: Vec<f64> = (0..dims[0] * dims[1] * dims[2])
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let sigma = 1.0;
        let taps = gaussian_kernel(sigma);
        let r = (taps.len() as i64 - 1) / 2;
        let fast = gaussian_smooth_3d(&src, dims, sigma);
        for z in r..dims[0] as i64 - r {
            for y in r..dims[1] as i64 - r {
                for x in r..dims[2] as i64 - r {
                    let mut acc = 0.0;
                    for (kz, &wz) in taps.iter().enumerate() {
                        for (ky, &wy) in taps.iter().enumerate() {
                            for (kx, &wx) in taps.iter().enumerate() {
                                let zz = (z + kz as i64 - r) as usize;
                                let yy = (y + ky as i64 - r) as usize;
                                let xx = (x + kx as i64 - r) as usize;
                                acc += wz * wy * wx * src[index(dims, zz, yy, xx)];
                            }
                        }
                    }
                    let got = fast[index(dims, z as usize, y as usize, x as usize)];
                    assert!((got - acc).abs() < 1e-12, "mismatch at ({z},{y},{x})");
                }
            }
        }
    }
}
