//! Minimal trainable embedder: fixed multi-scale handcrafted features
//! followed by one learnable linear projection per head, normalized per
//! voxel. Stands in for a CNN backbone while keeping backpropagation fully
//! analytic.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filters::gaussian_smooth_3d;
use crate::volume::EmbeddingVolume;

/// Fixed feature channel layout produced by [`extract_features`]:
/// raw, three Gaussian scales, three axis gradients, local variance.
pub const FEATURE_CHANNELS: usize = 8;

/// Smoothing scales in voxels. The largest reaches far enough that voxels on
/// identical-looking structures still see different surroundings, which is
/// what lets a linear head keep distant look-alikes apart.
const SMOOTH_SIGMAS: [f64; 3] = [1.5, 5.0, 12.0];

/// Nominal tissue baseline subtracted from intensity-valued channels, and
/// per-channel gains that bring every channel into a comparable range.
/// Fixed constants keep the extractor deterministic and exactly
/// translation-equivariant.
const INTENSITY_BASELINE: f64 = 0.15;
/// One gain per intensity channel (raw, then each smoothing scale); the
/// wider the scale, the smaller its raw spread, so the gain grows with it.
const INTENSITY_GAIN: [f64; 4] = [5.0, 6.0, 12.0, 40.0];
const GRADIENT_GAIN: f64 = 30.0;
const VARIANCE_GAIN: f64 = 120.0;

/// Handcrafted per-voxel features of a single-channel intensity volume.
///
/// Gradients are central differences of the finest smoothed field with
/// clamped indexing; variance is over the 3x3x3 neighborhood. Deterministic
/// and translation-equivariant away from the border.
pub fn extract_features(intensity: &EmbeddingVolume) -> Result<EmbeddingVolume> {
    if intensity.channels() != 1 {
        return Err(Error::ChannelMismatch {
            left: intensity.channels(),
            right: 1,
        });
    }
    let dims = intensity.dims();
    let n = dims[0] * dims[1] * dims[2];
    let raw: Vec<f64> = intensity.data().iter().map(|&v| v as f64).collect();
    let smooth: Vec<Vec<f64>> = SMOOTH_SIGMAS
        .iter()
        .map(|&s| gaussian_smooth_3d(&raw, dims, s))
        .collect();

    let at = |field: &[f64], z: i64, y: i64, x: i64| -> f64 {
        let z = z.clamp(0, dims[0] as i64 - 1) as usize;
        let y = y.clamp(0, dims[1] as i64 - 1) as usize;
        let x = x.clamp(0, dims[2] as i64 - 1) as usize;
        field[(z * dims[1] + y) * dims[2] + x]
    };
    let level = |v: f64, gain: f64| ((v - INTENSITY_BASELINE) * gain) as f32;

    let mut data = vec![0.0f32; n * FEATURE_CHANNELS];
    let mut idx = 0;
    for z in 0..dims[0] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[2] as i64 {
                let base = idx * FEATURE_CHANNELS;
                data[base] = level(at(&raw, z, y, x), INTENSITY_GAIN[0]);
                data[base + 1] = level(at(&smooth[0], z, y, x), INTENSITY_GAIN[1]);
                data[base + 2] = level(at(&smooth[1], z, y, x), INTENSITY_GAIN[2]);
                data[base + 3] = level(at(&smooth[2], z, y, x), INTENSITY_GAIN[3]);
                let s1 = &smooth[0];
                data[base + 4] =
                    ((at(s1, z + 1, y, x) - at(s1, z - 1, y, x)) / 2.0 * GRADIENT_GAIN) as f32;
                data[base + 5] =
                    ((at(s1, z, y + 1, x) - at(s1, z, y - 1, x)) / 2.0 * GRADIENT_GAIN) as f32;
                data[base + 6] =
                    ((at(s1, z, y, x + 1) - at(s1, z, y, x - 1)) / 2.0 * GRADIENT_GAIN) as f32;
                let mut sum = 0.0;
                let mut sq = 0.0;
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let v = at(&raw, z + dz, y + dy, x + dx);
                            sum += v;
                            sq += v * v;
                        }
                    }
                }
                let mean = sum / 27.0;
                data[base + 7] = ((sq / 27.0 - mean * mean).max(0.0) * VARIANCE_GAIN) as f32;
                idx += 1;
            }
        }
    }
    EmbeddingVolume::new(dims, FEATURE_CHANNELS, intensity.spacing_mm(), data, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Appearance,
    Semantic,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Appearance => "appearance",
            HeadKind::Semantic => "semantic",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "appearance" => Some(HeadKind::Appearance),
            "semantic" => Some(HeadKind::Semantic),
            _ => None,
        }
    }
}

/// Learnable linear projection `C x F`, followed by per-voxel unit
/// normalization when embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    kind: HeadKind,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(
        kind: HeadKind,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArgument("head dims must be >= 1".into()));
        }
        if weights.len() != in_channels * out_channels {
            return Err(Error::InvalidArgument(format!(
                "head weights must be {out_channels}x{in_channels}"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("projection head weights".into()));
        }
        Ok(ProjectionHead {
            kind,
            in_channels,
            out_channels,
            weights,
        })
    }

    /// Gaussian init scaled by 1/sqrt(F).
    pub fn random_init(kind: HeadKind, in_channels: usize, out_channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (in_channels as f64).sqrt();
        let weights = (0..in_channels * out_channels)
            .map(|_| {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        ProjectionHead::new(kind, in_channels, out_channels, weights).unwrap()
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Raw linear map `y = W f` (no normalization).
    pub fn project(&self, features: &[f64], out: &mut [f64]) {
        assert_eq!(features.len(), self.in_channels);
        assert_eq!(out.len(), self.out_channels);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.in_channels..(r + 1) * self.in_channels];
            let mut acc = 0.0;
            for (&w, &f) in row.iter().zip(features) {
                acc += w * f;
            }
            *o = acc;
        }
    }

    /// Projection followed by unit normalization; a zero projection maps to
    /// e1 (same degenerate rule as volume normalization). Returns the
    /// pre-normalization norm for backpropagation.
    pub fn embed_vec(&self, features: &[f64], out: &mut [f64]) -> f64 {
        self.project(features, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            out.fill(0.0);
            out[0] = 1.0;
        } else {
            for v in out.iter_mut() {
                *v /= norm;
            }
        }
        norm
    }
}

/// Embeds a whole feature volume through a head into a normalized embedding
/// volume (stored f32).
pub fn embed(features: &EmbeddingVolume, head: &ProjectionHead) -> Result<EmbeddingVolume> {
    if features.channels() != head.in_channels() {
        return Err(Error::ChannelMismatch {
            left: features.channels(),
            right: head.in_channels(),
        });
    }
    let dims = features.dims();
    let n = features.voxel_count();
    let c = head.out_channels();
    let mut data = vec![0.0f32; n * c];
    let mut feat = vec![0.0f64; head.in_channels()];
    let mut out = vec![0.0f64; c];
    for i in 0..n {
        for (f, &v) in feat.iter_mut().zip(features.embedding_at_linear(i)) {
            *f = v as f64;
        }
        head.embed_vec(&feat, &mut out);
        for (dst, &v) in data[i * c..(i + 1) * c].iter_mut().zip(&out) {
            *dst = v as f32;
        }
    }
    EmbeddingVolume::new(dims, c, features.spacing_mm(), data, true)
}
