//! Deterministic volume generators shared by unit tests, integration tests
//! and examples. Generators only — oracle implementations live next to the
//! tests that use them.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::geom::VoxelPoint;
use crate::volume::EmbeddingVolume;

/// Random unit-vector field; voxel vectors are pairwise distinct with
/// probability 1 for the seeds used in this crate's tests.
pub fn random_unit_volume(seed: u64, dims: [usize; 3], channels: usize) -> EmbeddingVolume {
    let mut rng = StdRng::seed_from_u64(seed);
    let vol = EmbeddingVolume::from_fn(dims, channels, [2.0; 3], false, |_, out| {
        for v in out.iter_mut() {
            // Box-Muller-free gaussian-ish mix is unnecessary; uniform works
            *v = rng.random_range(-1.0f32..1.0);
        }
    })
    .unwrap();
    crate::volume::normalize(&vol).volume
}

/// Copy of `vol` translated by integer offset `d = [dz, dy, dx]` (content at
/// `p` moves to `p + d`). Voxels with no source are filled with fresh random
/// unit vectors from `filler_seed`.
///
/// Translated vectors are copied bit-exactly, never re-normalized, so
/// exact-equivariance tests hold.
pub fn translated_copy(vol: &EmbeddingVolume, d: [i64; 3], filler_seed: u64) -> EmbeddingVolume {
    let mut rng = StdRng::seed_from_u64(filler_seed);
    let channels = vol.channels();
    EmbeddingVolume::from_fn(
        vol.dims(),
        channels,
        vol.spacing_mm(),
        vol.is_normalized(),
        |p, outv| {
            let src = VoxelPoint::new(p.z - d[0], p.y - d[1], p.x - d[2]);
            if vol.contains(src) {
                let v = vol.embedding_at_linear(vol.linear_index(src));
                outv.copy_from_slice(v);
            } else {
                let mut norm = 0.0f64;
                for v in outv.iter_mut() {
                    *v = rng.random_range(-1.0f32..1.0);
                    norm += (*v as f64) * (*v as f64);
                }
                let norm = norm.sqrt().max(1e-12);
                for v in outv.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        },
    )
    .unwrap()
}
