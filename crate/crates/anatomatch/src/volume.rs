//! Dense 3D volumes: embedding fields, label fields, and the unified
//! appearance+semantic concatenation.
//!
//! Data layout is fixed: z-major, then y, then x, channel-last. Values are
//! stored as `f32`; all similarity arithmetic accumulates in `f64` so that
//! argmax results are deterministic across platforms.
//!
//! Volumes are immutable after construction; concurrent read-only sharing is
//! safe, and every "mutation" builds a new volume.

use crate::error::{Error, Result};
use crate::geom::{Axis, PhysPoint, VoxelPoint};

/// Tolerance on the unit-norm invariant of normalized volumes.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Dense grid of fixed-length embedding vectors with physical spacing.
///
/// Also doubles as a generic scalar/feature field (`channels >= 1`,
/// `normalized = false`), which is how phantom intensities travel.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVolume {
    dims: [usize; 3],
    channels: usize,
    spacing_mm: [f64; 3],
    normalized: bool,
    data: Vec<f32>,
}

impl EmbeddingVolume {
    pub fn new(
        dims: [usize; 3],
        channels: usize,
        spacing_mm: [f64; 3],
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dims must be strictly positive, got {dims:?}"
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidArgument("channels must be >= 1".into()));
        }
        if spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive and finite, got {spacing_mm:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2] * channels;
        if data.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(EmbeddingVolume {
            dims,
            channels,
            spacing_mm,
            normalized,
            data,
        })
    }

    /// Builds a volume by evaluating `f` at every voxel, writing `channels`
    /// values into the provided slice. Evaluation order is z-major.
    pub fn from_fn(
        dims: [usize; 3],
        channels: usize,
        spacing_mm: [f64; 3],
        normalized: bool,
        mut f: impl FnMut(VoxelPoint, &mut [f32]),
    ) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        let mut data = vec![0.0f32; n * channels];
        let mut idx = 0;
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    let p = VoxelPoint::new(z as i64, y as i64, x as i64);
                    f(p, &mut data[idx..idx + channels]);
                    idx += channels;
                }
            }
        }
        EmbeddingVolume::new(dims, channels, spacing_mm, data, normalized)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn contains(&self, p: VoxelPoint) -> bool {
        self.check_bounds(p).is_ok()
    }

    pub fn check_bounds(&self, p: VoxelPoint) -> Result<()> {
        for (axis, (idx, dim)) in [
            (Axis::Z, (p.z, self.dims[0])),
            (Axis::Y, (p.y, self.dims[1])),
            (Axis::X, (p.x, self.dims[2])),
        ] {
            if idx < 0 || idx as usize >= dim {
                return Err(Error::OutOfBounds {
                    axis,
                    index: idx,
                    dim,
                });
            }
        }
        Ok(())
    }

    /// Linear (z-major) voxel index. Caller must have bounds-checked `p`.
    pub fn linear_index(&self, p: VoxelPoint) -> usize {
        (p.z as usize * self.dims[1] + p.y as usize) * self.dims[2] + p.x as usize
    }

    pub fn point_of_linear(&self, idx: usize) -> VoxelPoint {
        let x = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let z = idx / (self.dims[2] * self.dims[1]);
        VoxelPoint::new(z as i64, y as i64, x as i64)
    }

    /// The stored vector at `p`; read-only view, no copy.
    pub fn embedding_at(&self, p: VoxelPoint) -> Result<&[f32]> {
        self.check_bounds(p)?;
        Ok(self.embedding_at_linear(self.linear_index(p)))
    }

    pub fn embedding_at_linear(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// Scalar accessor for single-channel volumes.
    pub fn value_at(&self, p: VoxelPoint) -> Result<f32> {
        let v = self.embedding_at(p)?;
        Ok(v[0])
    }

    /// Trilinear sample at a continuous voxel coordinate, clamped to bounds.
    /// Accumulates in f64; `out` must have `channels` entries.
    pub fn sample_trilinear(&self, zyx: [f64; 3], out: &mut [f64]) {
        assert_eq!(out.len(), self.channels);
        let mut lo = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            let c = zyx[a].clamp(0.0, max);
            let f = c.floor();
            lo[a] = f as usize;
            frac[a] = c - f;
            if lo[a] == self.dims[a] - 1 && self.dims[a] > 1 {
                // keep lo+1 in bounds; frac becomes 1.0 at the top edge
                lo[a] = self.dims[a] - 2;
                frac[a] = c - lo[a] as f64;
            }
        }
        out.fill(0.0);
        for (dz, wz) in [(0usize, 1.0 - frac[0]), (1, frac[0])] {
            if self.dims[0] == 1 && dz == 1 {
                continue;
            }
            for (dy, wy) in [(0usize, 1.0 - frac[1]), (1, frac[1])] {
                if self.dims[1] == 1 && dy == 1 {
                    continue;
                }
                for (dx, wx) in [(0usize, 1.0 - frac[2]), (1, frac[2])] {
                    if self.dims[2] == 1 && dx == 1 {
                        continue;
                    }
                    let w = wz * wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    let p = VoxelPoint::new(
                        (lo[0] + dz) as i64,
                        (lo[1] + dy) as i64,
                        (lo[2] + dx) as i64,
                    );
                    let v = self.embedding_at_linear(self.linear_index(p));
                    for (o, &s) in out.iter_mut().zip(v) {
                        *o += w * s as f64;
                    }
                }
            }
        }
    }

    /// Physical position of a voxel center.
    pub fn voxel_to_phys(&self, p: VoxelPoint) -> PhysPoint {
        p.to_phys(self.spacing_mm)
    }

    /// Largest deviation of any voxel vector's L2 norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        let mut worst = 0f64;
        for i in 0..self.voxel_count() {
            let v = self.embedding_at_linear(i);
            let norm = v.iter().map(|&c| c as f64 * c as f64).sum::<f64>().sqrt();
            worst = worst.max((norm - 1.0).abs());
        }
        worst
    }

    pub fn same_grid(&self, other: &EmbeddingVolume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        if self.spacing_mm != other.spacing_mm {
            return Err(Error::SpacingMismatch {
                left: self.spacing_mm,
                right: other.spacing_mm,
            });
        }
        Ok(())
    }
}

/// Result of [`normalize`]: the unit-norm volume plus a count of zero vectors
/// that were replaced by e1.
#[derive(Debug, Clone)]
pub struct NormalizeOutcome {
    pub volume: EmbeddingVolume,
    pub zero_replaced: usize,
}

/// Scales every voxel vector to unit L2 norm. Zero vectors become e1 so that
/// matching stays total on untrained fields; their count is reported.
pub fn normalize(vol: &EmbeddingVolume) -> NormalizeOutcome {
    let c = vol.channels();
    let mut data = vol.data().to_vec();
    let mut zero_replaced = 0usize;
    for chunk in data.chunks_mut(c) {
        let norm = chunk.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            chunk.fill(0.0);
            chunk[0] = 1.0;
            zero_replaced += 1;
        } else {
            for v in chunk.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
    }
    let volume = EmbeddingVolume::new(vol.dims(), c, vol.spacing_mm(), data, true)
        .expect("normalize preserves shape");
    NormalizeOutcome {
        volume,
        zero_replaced,
    }
}

/// Concatenates a normalized appearance volume and a normalized semantic
/// volume into one unified embedding: `[sqrt(lambda) * app, sqrt(1-lambda) * sem]`.
///
/// Inner products then decompose as
/// `lambda * <app1, app2> + (1 - lambda) * <sem1, sem2>`, and the output is
/// unit-norm whenever both inputs are.
pub fn concat_unified(
    app: &EmbeddingVolume,
    sem: &EmbeddingVolume,
    lambda: f64,
) -> Result<EmbeddingVolume> {
    app.same_grid(sem)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if !app.is_normalized() || !sem.is_normalized() {
        return Err(Error::InvalidArgument(
            "concat_unified requires both inputs normalized".into(),
        ));
    }
    let wa = lambda.sqrt() as f32;
    let ws = (1.0 - lambda).sqrt() as f32;
    let (ca, cs) = (app.channels(), sem.channels());
    let n = app.voxel_count();
    let mut data = Vec::with_capacity(n * (ca + cs));
    for i in 0..n {
        data.extend(app.embedding_at_linear(i).iter().map(|&v| v * wa));
        data.extend(sem.embedding_at_linear(i).iter().map(|&v| v * ws));
    }
    EmbeddingVolume::new(app.dims(), ca + cs, app.spacing_mm(), data, true)
}

/// Dense grid of semantic class IDs; class 0 is background by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    num_classes: u16,
    data: Vec<u16>,
}

impl LabelVolume {
    pub fn new(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        data: Vec<u16>,
        num_classes: u16,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dims must be strictly positive, got {dims:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                actual: data.len(),
            });
        }
        for (index, &label) in data.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    num_classes,
                });
            }
        }
        Ok(LabelVolume {
            dims,
            spacing_mm,
            num_classes,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn linear_index(&self, p: VoxelPoint) -> usize {
        (p.z as usize * self.dims[1] + p.y as usize) * self.dims[2] + p.x as usize
    }

    pub fn label_at(&self, p: VoxelPoint) -> Result<u16> {
        for (axis, (idx, dim)) in [
            (Axis::Z, (p.z, self.dims[0])),
            (Axis::Y, (p.y, self.dims[1])),
            (Axis::X, (p.x, self.dims[2])),
        ] {
            if idx < 0 || idx as usize >= dim {
                return Err(Error::OutOfBounds {
                    axis,
                    index: idx,
                    dim,
                });
            }
        }
        Ok(self.data[self.linear_index(p)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis_volume(dims: [usize; 3], channels: usize) -> EmbeddingVolume {
        EmbeddingVolume::from_fn(dims, channels, [2.0; 3], true, |_, out| {
            out[0] = 1.0;
        })
        .unwrap()
    }

    #[test]
    fn embedding_at_constant_field() {
        let vol = basis_volume([3, 4, 5], 8);
        let v = vol.embedding_at(VoxelPoint::new(2, 3, 4)).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn embedding_at_out_of_bounds_names_axis() {
        let vol = basis_volume([3, 4, 5], 2);
        match vol.embedding_at(VoxelPoint::new(3, 0, 0)) {
            Err(Error::OutOfBounds { axis: Axis::Z, index: 3, dim: 3 }) => {}
            other => panic!("expected z bounds error, got {other:?}"),
        }
        match vol.embedding_at(VoxelPoint::new(0, -1, 0)) {
            Err(Error::OutOfBounds { axis: Axis::Y, index: -1, .. }) => {}
            other => panic!("expected y bounds error, got {other:?}"),
        }
    }

    #[test]
    fn write_then_read_round_trip() {
        let mut rng = StdRng::seed_from_u64(7);
        let dims = [4, 3, 2];
        let channels = 5;
        let vol = EmbeddingVolume::from_fn(dims, channels, [1.0; 3], false, |_, out| {
            for v in out.iter_mut() {
                *v = rng.random_range(-1.0f32..1.0);
            }
        })
        .unwrap();
        // value read back equals value written by the generator at (1,2,1)
        let mut check = StdRng::seed_from_u64(7);
        let mut expected = vec![0.0f32; channels];
        let mut found = None;
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    for v in expected.iter_mut() {
                        *v = check.random_range(-1.0f32..1.0);
                    }
                    if (z, y, x) == (1, 2, 1) {
                        found = Some(expected.clone());
                    }
                }
            }
        }
        let got = vol.embedding_at(VoxelPoint::new(1, 2, 1)).unwrap();
        assert_eq!(got, found.unwrap().as_slice());
    }

    #[test]
    fn normalize_345_triangle() {
        let mut vol = EmbeddingVolume::from_fn([1, 1, 1], 4, [2.0; 3], false, |_, out| {
            out.copy_from_slice(&[3.0, 4.0, 0.0, 0.0]);
        })
        .unwrap();
        let out = normalize(&vol);
        assert_eq!(out.zero_replaced, 0);
        let v = out.volume.embedding_at(VoxelPoint::new(0, 0, 0)).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-7);
        assert!((v[1] - 0.8).abs() < 1e-7);
        // idempotence
        vol = out.volume;
        let again = normalize(&vol);
        for (a, b) in again.volume.data().iter().zip(vol.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn normalize_zero_vector_becomes_e1() {
        let vol = EmbeddingVolume::from_fn([1, 1, 2], 3, [2.0; 3], false, |p, out| {
            if p.x == 0 {
                out.copy_from_slice(&[0.0, 0.0, 0.0]);
            } else {
                out.copy_from_slice(&[0.0, 2.0, 0.0]);
            }
        })
        .unwrap();
        let out = normalize(&vol);
        assert_eq!(out.zero_replaced, 1);
        let v = out.volume.embedding_at(VoxelPoint::new(0, 0, 0)).unwrap();
        assert_eq!(v, &[1.0, 0.0, 0.0]);
        assert!(out.volume.max_norm_deviation() < NORM_TOLERANCE);
    }

    #[test]
    fn concat_unified_sqrt_half_scaling() {
        let app = basis_volume([1, 1, 1], 2);
        let sem = basis_volume([1, 1, 1], 2);
        let uni = concat_unified(&app, &sem, 0.5).unwrap();
        let v = uni.embedding_at(VoxelPoint::new(0, 0, 0)).unwrap();
        let s = 0.5f64.sqrt() as f32;
        assert_eq!(v, &[s, 0.0, s, 0.0]);
        assert!(uni.max_norm_deviation() < 1e-6);
    }

    #[test]
    fn concat_unified_rejects_mismatch_and_bad_lambda() {
        let app = basis_volume([2, 2, 2], 2);
        let sem = basis_volume([2, 2, 3], 2);
        assert!(matches!(
            concat_unified(&app, &sem, 0.5),
            Err(Error::DimsMismatch { .. })
        ));
        let sem = basis_volume([2, 2, 2], 2);
        assert!(matches!(
            concat_unified(&app, &sem, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            concat_unified(&app, &sem, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unified_inner_product_decomposes() {
        let mut rng = StdRng::seed_from_u64(11);
        let lambda = 0.35;
        let mut unit = |c: usize| {
            let mut v: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        let single = |v: &[f64]| {
            EmbeddingVolume::new(
                [1, 1, 1],
                v.len(),
                [1.0; 3],
                v.iter().map(|&c| c as f32).collect(),
                true,
            )
            .unwrap()
        };
        for _ in 0..50 {
            let (a1, a2) = (unit(6), unit(6));
            let (s1, s2) = (unit(4), unit(4));
            let (app1, app2) = (single(&a1), single(&a2));
            let (sem1, sem2) = (single(&s1), single(&s2));
            let u1 = concat_unified(&app1, &sem1, lambda).unwrap();
            let u2 = concat_unified(&app2, &sem2, lambda).unwrap();
            let dot = |a: &[f32], b: &[f32]| -> f64 {
                a.iter().zip(b).map(|(&p, &q)| p as f64 * q as f64).sum()
            };
            let lhs = dot(u1.data(), u2.data());
            let rhs = lambda * dot(app1.data(), app2.data())
                + (1.0 - lambda) * dot(sem1.data(), sem2.data());
            assert!((lhs - rhs).abs() < 1e-6, "lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn label_volume_validates_range() {
        let err = LabelVolume::new([1, 1, 2], [2.0; 3], vec![0, 5], 3);
        assert!(matches!(
            err,
            Err(Error::LabelOutOfRange { index: 1, label: 5, num_classes: 3 })
        ));
    }

    #[test]
    fn trilinear_matches_corners_and_midpoint() {
        let vol = EmbeddingVolume::from_fn([2, 2, 2], 1, [1.0; 3], false, |p, out| {
            out[0] = (p.z * 4 + p.y * 2 + p.x) as f32;
        })
        .unwrap();
        let mut out = [0.0f64];
        vol.sample_trilinear([1.0, 1.0, 1.0], &mut out);
        assert_eq!(out[0], 7.0);
        vol.sample_trilinear([0.5, 0.5, 0.5], &mut out);
        assert!((out[0] - 3.5).abs() < 1e-12);
        // clamped outside
        vol.sample_trilinear([-3.0, 0.0, 0.0], &mut out);
        assert_eq!(out[0], 0.0);
    }
}
