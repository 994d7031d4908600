//! Inner-product similarity and nearest-neighbor matching.
//!
//! Matching is a deterministic argmax of `<template, query[voxel]>` over a
//! search region. Ties break toward the smallest z-major linear index, and
//! all accumulation runs in f64, so identical inputs give identical results
//! on every platform and worker count.

use crate::error::{Error, Result};
use crate::geom::VoxelPoint;
use crate::volume::EmbeddingVolume;

/// Inner product of unit vectors; stays within [-1, 1] up to rounding for
/// normalized inputs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimilarityScore(pub f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Inclusive box restriction for a search, or the whole volume.
///
/// The box is intersected with the volume bounds at use time; restricting the
/// region is an optimization knob, never a semantic change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchRegion {
    Whole,
    Box { lo: VoxelPoint, hi: VoxelPoint },
}

impl SearchRegion {
    pub fn whole() -> Self {
        SearchRegion::Whole
    }

    /// Inclusive box; `lo <= hi` must hold component-wise.
    pub fn boxed(lo: VoxelPoint, hi: VoxelPoint) -> Result<Self> {
        if lo.z > hi.z || lo.y > hi.y || lo.x > hi.x {
            return Err(Error::InvalidArgument(format!(
                "region lo {lo} must not exceed hi {hi}"
            )));
        }
        Ok(SearchRegion::Box { lo, hi })
    }

    /// Clips to the volume; `None` when the intersection is empty.
    pub(crate) fn clip(&self, dims: [usize; 3]) -> Option<(VoxelPoint, VoxelPoint)> {
        let max = [
            dims[0] as i64 - 1,
            dims[1] as i64 - 1,
            dims[2] as i64 - 1,
        ];
        match *self {
            SearchRegion::Whole => Some((VoxelPoint::new(0, 0, 0), VoxelPoint::from_array(max))),
            SearchRegion::Box { lo, hi } => {
                let cl = VoxelPoint::new(lo.z.max(0), lo.y.max(0), lo.x.max(0));
                let ch = VoxelPoint::new(hi.z.min(max[0]), hi.y.min(max[1]), hi.x.min(max[2]));
                if cl.z > ch.z || cl.y > ch.y || cl.x > ch.x {
                    None
                } else {
                    Some((cl, ch))
                }
            }
        }
    }
}

/// Shared inner-product reduction: four independent accumulators over
/// 4-element chunks, remainder folded into the first, combined as
/// `(a0 + a2) + (a1 + a3)`. Every similarity evaluation in this crate uses
/// this exact tree, so scores are bit-identical across call sites and the
/// chains are short enough to keep the FPU busy.
#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    for i in chunks * 4..a.len() {
        acc[0] += a[i] * b[i];
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3])
}

/// Same reduction tree over f32 storage with f64 accumulation; conversion is
/// exact, so this equals [`dot_f64`] on pre-converted buffers bit-for-bit.
#[inline]
fn dot(template: &[f32], voxel: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = template.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += template[i] as f64 * voxel[i] as f64;
        acc[1] += template[i + 1] as f64 * voxel[i + 1] as f64;
        acc[2] += template[i + 2] as f64 * voxel[i + 2] as f64;
        acc[3] += template[i + 3] as f64 * voxel[i + 3] as f64;
    }
    for i in chunks * 4..template.len() {
        acc[0] += template[i] as f64 * voxel[i] as f64;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3])
}

fn check_compat(template_channels: usize, query: &EmbeddingVolume) -> Result<()> {
    if template_channels != query.channels() {
        return Err(Error::ChannelMismatch {
            left: template_channels,
            right: query.channels(),
        });
    }
    if !query.is_normalized() {
        return Err(Error::InvalidArgument(
            "similarity requires a normalized query volume".into(),
        ));
    }
    Ok(())
}

/// Dense similarity scores over a region, in z-major order of the region.
#[derive(Debug, Clone)]
pub struct SimilarityMap {
    pub lo: VoxelPoint,
    pub hi: VoxelPoint,
    pub scores: Vec<f64>,
}

impl SimilarityMap {
    pub fn score_at(&self, p: VoxelPoint) -> Option<f64> {
        if p.z < self.lo.z || p.z > self.hi.z
            || p.y < self.lo.y || p.y > self.hi.y
            || p.x < self.lo.x || p.x > self.hi.x
        {
            return None;
        }
        let ny = (self.hi.y - self.lo.y + 1) as usize;
        let nx = (self.hi.x - self.lo.x + 1) as usize;
        let idx = ((p.z - self.lo.z) as usize * ny + (p.y - self.lo.y) as usize) * nx
            + (p.x - self.lo.x) as usize;
        Some(self.scores[idx])
    }
}

/// Scores every region voxel against `template_vec`.
pub fn similarity_map(
    template_vec: &[f32],
    query: &EmbeddingVolume,
    region: &SearchRegion,
) -> Result<SimilarityMap> {
    check_compat(template_vec.len(), query)?;
    let (lo, hi) = region.clip(query.dims()).ok_or(Error::EmptyRegion)?;
    let mut scores = Vec::with_capacity(
        ((hi.z - lo.z + 1) * (hi.y - lo.y + 1) * (hi.x - lo.x + 1)) as usize,
    );
    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let p = VoxelPoint::new(z, y, x);
                let v = query.embedding_at_linear(query.linear_index(p));
                scores.push(dot(template_vec, v));
            }
        }
    }
    Ok(SimilarityMap { lo, hi, scores })
}

/// Argmax of the similarity map for an explicit template vector.
///
/// Ties break to the smallest z-major linear index of the query volume.
pub fn nn_match_vec(
    template_vec: &[f32],
    query: &EmbeddingVolume,
    region: &SearchRegion,
) -> Result<(VoxelPoint, SimilarityScore)> {
    check_compat(template_vec.len(), query)?;
    let (lo, hi) = region.clip(query.dims()).ok_or(Error::EmptyRegion)?;
    let dims = query.dims();
    let whole = lo == VoxelPoint::new(0, 0, 0)
        && hi == VoxelPoint::new(dims[0] as i64 - 1, dims[1] as i64 - 1, dims[2] as i64 - 1);
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    if whole {
        // fast path: one pass over the contiguous payload
        let c = query.channels();
        for (i, chunk) in query.data().chunks_exact(c).enumerate() {
            let s = dot(template_vec, chunk);
            if s > best {
                best = s;
                best_idx = i;
            }
        }
    } else {
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    let p = VoxelPoint::new(z, y, x);
                    let idx = query.linear_index(p);
                    let s = dot(template_vec, query.embedding_at_linear(idx));
                    if s > best || (s == best && idx < best_idx) {
                        best = s;
                        best_idx = idx;
                    }
                }
            }
        }
    }
    Ok((query.point_of_linear(best_idx), SimilarityScore(best)))
}

/// Nearest-neighbor match of template point `t` into `query`.
pub fn nn_match(
    template: &EmbeddingVolume,
    t: VoxelPoint,
    query: &EmbeddingVolume,
    region: &SearchRegion,
) -> Result<(VoxelPoint, SimilarityScore)> {
    let template_vec = template.embedding_at(t)?;
    nn_match_vec(template_vec, query, region)
}

/// Block-mean downsampling by an integer factor per axis.
///
/// Normalized inputs are re-normalized after averaging so the coarse volume
/// stays a valid embedding field. Dims must divide exactly.
pub fn downsample(vol: &EmbeddingVolume, factor: [usize; 3]) -> Result<EmbeddingVolume> {
    if factor.iter().any(|&f| f == 0) {
        return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
    }
    let dims = vol.dims();
    for a in 0..3 {
        if dims[a] % factor[a] != 0 {
            return Err(Error::InvalidArgument(format!(
                "dims {dims:?} not divisible by factor {factor:?}"
            )));
        }
    }
    let out_dims = [dims[0] / factor[0], dims[1] / factor[1], dims[2] / factor[2]];
    let c = vol.channels();
    let block = (factor[0] * factor[1] * factor[2]) as f64;
    let spacing = vol.spacing_mm();
    let out_spacing = [
        spacing[0] * factor[0] as f64,
        spacing[1] * factor[1] as f64,
        spacing[2] * factor[2] as f64,
    ];
    let mut acc = vec![0.0f64; c];
    let mut out = EmbeddingVolume::from_fn(out_dims, c, out_spacing, vol.is_normalized(), |p, o| {
        acc.fill(0.0);
        for dz in 0..factor[0] {
            for dy in 0..factor[1] {
                for dx in 0..factor[2] {
                    let q = VoxelPoint::new(
                        p.z * factor[0] as i64 + dz as i64,
                        p.y * factor[1] as i64 + dy as i64,
                        p.x * factor[2] as i64 + dx as i64,
                    );
                    let v = vol.embedding_at_linear(vol.linear_index(q));
                    for (a, &s) in acc.iter_mut().zip(v) {
                        *a += s as f64;
                    }
                }
            }
        }
        for (dst, &a) in o.iter_mut().zip(acc.iter()) {
            *dst = (a / block) as f32;
        }
    })?;
    if vol.is_normalized() {
        out = crate::volume::normalize(&out).volume;
    }
    Ok(out)
}

fn infer_factor(fine: &EmbeddingVolume, coarse: &EmbeddingVolume) -> Result<[usize; 3]> {
    let fd = fine.dims();
    let cd = coarse.dims();
    let mut factor = [0usize; 3];
    for a in 0..3 {
        if cd[a] == 0 || fd[a] % cd[a] != 0 {
            return Err(Error::InconsistentDownsample {
                template: fd,
                query: cd,
            });
        }
        factor[a] = fd[a] / cd[a];
    }
    Ok(factor)
}

/// Two-stage match: scan the coarse query for `top_k` peaks, then search the
/// fine query inside `window`-sized boxes around their upsampled centers.
///
/// With `top_k` covering the whole coarse volume and a window covering the
/// fine volume this reduces exactly to [`nn_match`]. The returned point is
/// always inside one of the searched boxes.
pub fn coarse_to_fine_match(
    template_coarse: &EmbeddingVolume,
    template_fine: &EmbeddingVolume,
    t: VoxelPoint,
    query_coarse: &EmbeddingVolume,
    query_fine: &EmbeddingVolume,
    top_k: usize,
    window: usize,
) -> Result<(VoxelPoint, SimilarityScore)> {
    if top_k == 0 || window == 0 {
        return Err(Error::InvalidArgument(
            "top_k and window must be >= 1".into(),
        ));
    }
    let t_factor = infer_factor(template_fine, template_coarse)?;
    let q_factor = infer_factor(query_fine, query_coarse)?;
    if t_factor != q_factor {
        return Err(Error::InconsistentDownsample {
            template: t_factor,
            query: q_factor,
        });
    }
    template_fine.check_bounds(t)?;
    let factor = t_factor;
    let tc = VoxelPoint::new(
        t.z / factor[0] as i64,
        t.y / factor[1] as i64,
        t.x / factor[2] as i64,
    );
    let coarse_vec = template_coarse.embedding_at(tc)?;
    let coarse_map = similarity_map(coarse_vec, query_coarse, &SearchRegion::whole())?;
    let mut order: Vec<usize> = (0..coarse_map.scores.len()).collect();
    order.sort_by(|&a, &b| {
        coarse_map.scores[b]
            .partial_cmp(&coarse_map.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(top_k);

    // dedupe candidate voxels across overlapping boxes, in linear-index order
    let half_lo = (window as i64 - 1) / 2;
    let half_hi = window as i64 / 2;
    let mut candidates = std::collections::BTreeSet::new();
    let qdims = query_fine.dims();
    for &peak_idx in &order {
        let pc = query_coarse.point_of_linear(peak_idx);
        let center = VoxelPoint::new(
            pc.z * factor[0] as i64 + factor[0] as i64 / 2,
            pc.y * factor[1] as i64 + factor[1] as i64 / 2,
            pc.x * factor[2] as i64 + factor[2] as i64 / 2,
        );
        let lo = VoxelPoint::new(
            (center.z - half_lo).max(0),
            (center.y - half_lo).max(0),
            (center.x - half_lo).max(0),
        );
        let hi = VoxelPoint::new(
            (center.z + half_hi).min(qdims[0] as i64 - 1),
            (center.y + half_hi).min(qdims[1] as i64 - 1),
            (center.x + half_hi).min(qdims[2] as i64 - 1),
        );
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    candidates.insert(query_fine.linear_index(VoxelPoint::new(z, y, x)));
                }
            }
        }
    }
    let fine_vec = template_fine.embedding_at(t)?;
    check_compat(fine_vec.len(), query_fine)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = *candidates.iter().next().expect("boxes are non-empty");
    for &idx in &candidates {
        let s = dot(fine_vec, query_fine.embedding_at_linear(idx));
        if s > best {
            best = s;
            best_idx = idx;
        }
    }
    Ok((query_fine.point_of_linear(best_idx), SimilarityScore(best)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{random_unit_volume, translated_copy};
    use proptest::prelude::*;

    /// Brute-force argmax written independently of nn_match: collect every
    /// score, then reduce with an explicit (score, index) comparison.
    fn brute_force_nn(
        template_vec: &[f32],
        query: &EmbeddingVolume,
    ) -> (VoxelPoint, f64) {
        let mut scores = Vec::new();
        for i in 0..query.voxel_count() {
            let v = query.embedding_at_linear(i);
            let s: f64 = template_vec
                .iter()
                .zip(v)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            scores.push((s, i));
        }
        let (s, i) = scores
            .into_iter()
            .reduce(|best, cand| if cand.0 > best.0 { cand } else { best })
            .unwrap();
        (query.point_of_linear(i), s)
    }

    #[test]
    fn peak_at_matching_voxel() {
        let vol = random_unit_volume(42, [5, 5, 5], 8);
        let p = VoxelPoint::new(2, 3, 1);
        let tv = vol.embedding_at(p).unwrap().to_vec();
        let map = similarity_map(&tv, &vol, &SearchRegion::whole()).unwrap();
        let at_p = map.score_at(p).unwrap();
        assert!((at_p - 1.0).abs() < 1e-5);
        let (m, s) = nn_match_vec(&tv, &vol, &SearchRegion::whole()).unwrap();
        assert_eq!(m, p);
        assert!((s.value() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn orthogonal_everywhere_scores_zero() {
        let vol = EmbeddingVolume::from_fn([3, 3, 3], 4, [2.0; 3], true, |_, out| {
            out[1] = 1.0;
        })
        .unwrap();
        let tv = [1.0f32, 0.0, 0.0, 0.0];
        let map = similarity_map(&tv, &vol, &SearchRegion::whole()).unwrap();
        assert!(map.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn map_matches_brute_force_dots() {
        let vol = random_unit_volume(7, [6, 6, 6], 16);
        let tv = random_unit_volume(8, [1, 1, 1], 16).data().to_vec();
        let map = similarity_map(&tv, &vol, &SearchRegion::whole()).unwrap();
        for i in 0..vol.voxel_count() {
            let v = vol.embedding_at_linear(i);
            let expect: f64 = tv.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
            // serial-order oracle; the implementation's reduction tree may
            // reassociate within float rounding
            assert!((map.scores[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn self_match_returns_template_point() {
        let vol = random_unit_volume(3, [6, 5, 4], 12);
        for t in [VoxelPoint::new(0, 0, 0), VoxelPoint::new(5, 4, 3), VoxelPoint::new(2, 2, 2)] {
            let (m, s) = nn_match(&vol, t, &vol, &SearchRegion::whole()).unwrap();
            assert_eq!(m, t);
            assert!((s.value() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn translated_volume_matches_at_offset() {
        let vol = random_unit_volume(5, [8, 8, 8], 8);
        let shifted = translated_copy(&vol, [0, 0, 3], 999);
        let t = VoxelPoint::new(4, 4, 2);
        let (m, _) = nn_match(&vol, t, &shifted, &SearchRegion::whole()).unwrap();
        assert_eq!(m, VoxelPoint::new(4, 4, 5));
    }

    #[test]
    fn ties_break_to_smallest_linear_index() {
        // two voxels carry the identical vector; argmax must pick the first
        let vol = EmbeddingVolume::from_fn([2, 2, 2], 2, [2.0; 3], true, |p, out| {
            if p == VoxelPoint::new(0, 1, 0) || p == VoxelPoint::new(1, 0, 1) {
                out[0] = 1.0;
            } else {
                out[1] = 1.0;
            }
        })
        .unwrap();
        let (m, s) = nn_match_vec(&[1.0, 0.0], &vol, &SearchRegion::whole()).unwrap();
        assert_eq!(m, VoxelPoint::new(0, 1, 0));
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn region_errors() {
        let vol = random_unit_volume(1, [4, 4, 4], 4);
        let tv = vol.embedding_at(VoxelPoint::new(0, 0, 0)).unwrap().to_vec();
        // channel mismatch
        assert!(matches!(
            nn_match_vec(&tv[..3], &vol, &SearchRegion::whole()),
            Err(Error::ChannelMismatch { .. })
        ));
        // box entirely outside the volume clips to empty
        let region = SearchRegion::boxed(VoxelPoint::new(9, 9, 9), VoxelPoint::new(12, 12, 12))
            .unwrap();
        assert!(matches!(
            nn_match_vec(&tv, &vol, &region),
            Err(Error::EmptyRegion)
        ));
        // inverted box is rejected at construction
        assert!(SearchRegion::boxed(VoxelPoint::new(2, 0, 0), VoxelPoint::new(1, 3, 3)).is_err());
    }

    #[test]
    fn region_restricts_search() {
        let vol = random_unit_volume(17, [6, 6, 6], 8);
        let t = VoxelPoint::new(1, 1, 1);
        let tv = vol.embedding_at(t).unwrap().to_vec();
        let region =
            SearchRegion::boxed(VoxelPoint::new(3, 3, 3), VoxelPoint::new(5, 5, 5)).unwrap();
        let (m, _) = nn_match_vec(&tv, &vol, &region).unwrap();
        assert!(m.z >= 3 && m.y >= 3 && m.x >= 3);
    }

    #[test]
    fn exhaustive_oracle_small_volumes() {
        for seed in 0..40u64 {
            let dims = [
                1 + (seed as usize % 3) * 5,
                2 + (seed as usize % 4) * 3,
                1 + (seed as usize * 7 % 16),
            ];
            // few channels so near-ties and exact ties occur
            let vol = random_unit_volume(seed, dims, 1 + seed as usize % 3);
            let tv = random_unit_volume(seed + 1000, [1, 1, 1], vol.channels())
                .data()
                .to_vec();
            let (m, s) = nn_match_vec(&tv, &vol, &SearchRegion::whole()).unwrap();
            let (bm, bs) = brute_force_nn(&tv, &vol);
            assert_eq!(m, bm, "seed {seed}");
            assert_eq!(s.value(), bs, "seed {seed}");
        }
    }

    #[test]
    fn coarse_to_fine_exhaustive_limit_equals_nn() {
        let fine = random_unit_volume(21, [8, 8, 8], 8);
        let coarse = downsample(&fine, [2, 2, 2]).unwrap();
        let qfine = random_unit_volume(22, [8, 8, 8], 8);
        let qcoarse = downsample(&qfine, [2, 2, 2]).unwrap();
        let t = VoxelPoint::new(3, 4, 5);
        let exhaustive = coarse_to_fine_match(
            &coarse, &fine, t, &qcoarse, &qfine,
            qcoarse.voxel_count(),
            32,
        )
        .unwrap();
        let direct = nn_match(&fine, t, &qfine, &SearchRegion::whole()).unwrap();
        assert_eq!(exhaustive.0, direct.0);
        assert_eq!(exhaustive.1.value(), direct.1.value());
    }

    #[test]
    fn coarse_to_fine_finds_constructed_peak() {
        // fine field distinct everywhere; query = same volume, so the true
        // match is also the unique coarse peak
        let fine = random_unit_volume(31, [8, 8, 8], 8);
        let coarse = downsample(&fine, [2, 2, 2]).unwrap();
        let t = VoxelPoint::new(5, 2, 6);
        let got =
            coarse_to_fine_match(&coarse, &fine, t, &coarse, &fine, 1, 9).unwrap();
        let direct = nn_match(&fine, t, &fine, &SearchRegion::whole()).unwrap();
        assert_eq!(got.0, direct.0);
    }

    #[test]
    fn coarse_to_fine_result_stays_in_searched_boxes() {
        // adversarial: hide the true peak by making coarse blocks average to
        // near-zero except one decoy block
        let c = 4usize;
        let fine = EmbeddingVolume::from_fn([4, 4, 4], c, [2.0; 3], true, |p, out| {
            // alternating signs cancel in 2x2x2 block means
            let sign = if (p.z + p.y + p.x) % 2 == 0 { 1.0 } else { -1.0 };
            out[2] = sign;
        })
        .unwrap();
        let template_fine = EmbeddingVolume::from_fn([4, 4, 4], c, [2.0; 3], true, |_, out| {
            out[2] = 1.0;
        })
        .unwrap();
        let tc = downsample(&template_fine, [2, 2, 2]).unwrap();
        let qc = downsample(&fine, [2, 2, 2]).unwrap();
        let t = VoxelPoint::new(0, 0, 0);
        let (m, _) = coarse_to_fine_match(&tc, &template_fine, t, &qc, &fine, 1, 3).unwrap();
        assert!(fine.contains(m));
    }

    #[test]
    fn inconsistent_factor_is_rejected() {
        let fine = random_unit_volume(41, [8, 8, 8], 4);
        let c2 = downsample(&fine, [2, 2, 2]).unwrap();
        let c4 = downsample(&fine, [4, 4, 4]).unwrap();
        let err = coarse_to_fine_match(
            &c2, &fine,
            VoxelPoint::new(0, 0, 0),
            &c4, &fine,
            1, 3,
        );
        assert!(matches!(err, Err(Error::InconsistentDownsample { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scores_bounded_for_normalized_inputs(seed in 0u64..10000) {
            let vol = random_unit_volume(seed, [4, 4, 4], 6);
            let tv = random_unit_volume(seed + 1, [1, 1, 1], 6).data().to_vec();
            let map = similarity_map(&tv, &vol, &SearchRegion::whole()).unwrap();
            for s in map.scores {
                prop_assert!(s.abs() <= 1.0 + 1e-5);
            }
        }

        #[test]
        fn argmax_invariant_to_template_rescaling(
            seed in 0u64..10000,
            scale in prop::sample::select(vec![0.25f32, 0.5, 2.0, 7.5, 1000.0]),
        ) {
            let vol = random_unit_volume(seed, [5, 4, 3], 5);
            let tv = random_unit_volume(seed + 2, [1, 1, 1], 5).data().to_vec();
            let scaled: Vec<f32> = tv.iter().map(|&v| v * scale).collect();
            let (m1, _) = nn_match_vec(&tv, &vol, &SearchRegion::whole()).unwrap();
            let (m2, _) = nn_match_vec(&scaled, &vol, &SearchRegion::whole()).unwrap();
            prop_assert_eq!(m1, m2);
        }
    }
}
