//! Toy training loop: sample positive/negative/labeled batches from
//! augmented pairs, push them through the projection heads, and descend the
//! combined appearance + semantic loss with momentum SGD.
//!
//! The normalization inside each head is part of the model, so gradients are
//! chained through it: for a row with pre-normalization output `y = W f`,
//! unit embedding `e = y/|y|` and upstream gradient `g`,
//! `dL/dW += ((g - (g.e) e)/|y|) outer f`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{embed, extract_features, HeadKind, ProjectionHead};
use crate::error::{Error, Result};
use crate::geom::VoxelPoint;
use crate::losses::{
    infonce_loss, prototypical_supcon_loss, select_hard_negatives, LabeledBatch, PairBatch,
};
use crate::phantom::AugmentedPair;
use crate::volume::{EmbeddingVolume, LabelVolume};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub appearance: f64,
    pub semantic: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_pairs: usize,
    pub steps: usize,
    pub tau_app: f64,
    pub tau_sem: f64,
    /// Positive pairs sampled per pair per step.
    pub n_pos: usize,
    /// Hard negatives per anchor.
    pub n_hard: usize,
    /// Random negatives per anchor.
    pub n_random: usize,
    /// Labeled samples per pair per step.
    pub n_sem: usize,
    pub app_channels: usize,
    pub sem_channels: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_pairs: 5,
            steps: 200,
            tau_app: 0.5,
            tau_sem: 0.5,
            n_pos: 16,
            n_hard: 6,
            n_random: 6,
            n_sem: 36,
            app_channels: 128,
            sem_channels: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        if self.batch_pairs == 0 || self.n_pos == 0 || self.n_sem < 2 {
            return Err(Error::InvalidArgument(
                "batch_pairs and n_pos must be >= 1, n_sem >= 2".into(),
            ));
        }
        if !(self.tau_app > 0.0 && self.tau_sem > 0.0) {
            return Err(Error::InvalidArgument("temperatures must be > 0".into()));
        }
        if self.app_channels == 0 || self.sem_channels == 0 {
            return Err(Error::InvalidArgument("head widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// One augmented pair with features pre-extracted and sampling index lists
/// precomputed.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub features_a: EmbeddingVolume,
    pub features_b: EmbeddingVolume,
    pub labels_a: LabelVolume,
    pub labels_b: LabelVolume,
    pub truth: crate::phantom::TruthMap,
    pub overlap: Vec<bool>,
    anchor_candidates: Vec<usize>,
    overlap_candidates: Vec<usize>,
    class_voxels_a: Vec<Vec<usize>>,
    class_voxels_b: Vec<Vec<usize>>,
}

impl TrainPair {
    pub fn from_pair(pair: &AugmentedPair) -> Result<TrainPair> {
        let features_a = extract_features(&pair.view_a.intensity)?;
        let features_b = extract_features(&pair.view_b.intensity)?;
        let mut anchor_candidates = Vec::new();
        let mut overlap_candidates = Vec::new();
        for (idx, &inside) in pair.overlap.iter().enumerate() {
            if !inside {
                continue;
            }
            overlap_candidates.push(idx);
            if pair.view_a.structure_ids[idx] != 0 {
                anchor_candidates.push(idx);
            }
        }
        let k = pair.view_a.labels.num_classes() as usize;
        let mut class_voxels_a = vec![Vec::new(); k];
        for (idx, &l) in pair.view_a.labels.data().iter().enumerate() {
            class_voxels_a[l as usize].push(idx);
        }
        let mut class_voxels_b = vec![Vec::new(); k];
        for (idx, &l) in pair.view_b.labels.data().iter().enumerate() {
            class_voxels_b[l as usize].push(idx);
        }
        Ok(TrainPair {
            features_a,
            features_b,
            labels_a: pair.view_a.labels.clone(),
            labels_b: pair.view_b.labels.clone(),
            truth: pair.truth.clone(),
            overlap: pair.overlap.clone(),
            anchor_candidates,
            overlap_candidates,
            class_voxels_a,
            class_voxels_b,
        })
    }
}

/// Raw feature rows for one step's batches, before any head is applied.
struct SampledPoints {
    anchors: Vec<VoxelPoint>,
    pos_a: Vec<f64>,
    pos_b: Vec<f64>,
    pos_b_coords: Vec<[f64; 3]>,
    /// Shared negative candidate pool (features) drawn from both views.
    pool: Vec<f64>,
    /// (is_view_a, voxel) per pool row, for false-negative exclusion.
    pool_pos: Vec<(bool, VoxelPoint)>,
    sem: Vec<f64>,
    sem_labels: Vec<usize>,
    sem_classes: usize,
}

fn feature_row_at(features: &EmbeddingVolume, idx: usize, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(features.embedding_at_linear(idx)) {
        *o = v as f64;
    }
}

fn sample_points(pair: &TrainPair, cfg: &TrainConfig, seed: u64) -> Result<SampledPoints> {
    if pair.anchor_candidates.is_empty() && pair.overlap_candidates.is_empty() {
        return Err(Error::InvalidArgument("pair has empty overlap".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = pair.features_a.channels();
    let spacing = pair.features_a.spacing_mm();

    // positives: bias toward structure voxels so the loss sees real signal
    let mut anchors = Vec::with_capacity(cfg.n_pos);
    let mut pos_a = vec![0.0f64; cfg.n_pos * f];
    let mut pos_b = vec![0.0f64; cfg.n_pos * f];
    let mut pos_b_coords = Vec::with_capacity(cfg.n_pos);
    for k in 0..cfg.n_pos {
        let structure_biased = !pair.anchor_candidates.is_empty()
            && (pair.overlap_candidates.is_empty() || rng.random_range(0.0..1.0) < 0.6);
        let pool = if structure_biased {
            &pair.anchor_candidates
        } else {
            &pair.overlap_candidates
        };
        let idx = pool[rng.random_range(0..pool.len())];
        let p = pair.features_a.point_of_linear(idx);
        anchors.push(p);
        feature_row_at(&pair.features_a, idx, &mut pos_a[k * f..(k + 1) * f]);
        let q = pair.truth.apply(p.to_phys(spacing));
        let vox = q.to_voxel_coords(spacing);
        pair.features_b
            .sample_trilinear(vox, &mut pos_b[k * f..(k + 1) * f]);
        pos_b_coords.push(vox);
    }

    // shared negative candidate pool, half from each view; sized so that
    // per-anchor exclusions cannot starve the selection
    let n_neg = cfg.n_hard + cfg.n_random;
    let pool_size = (4 * n_neg).max(48) + 16;
    let mut pool = vec![0.0f64; pool_size * f];
    let mut pool_pos = Vec::with_capacity(pool_size);
    let n_a = pair.features_a.voxel_count();
    let n_b = pair.features_b.voxel_count();
    for c in 0..pool_size {
        let from_a = c % 2 == 0;
        let (vol, count) = if from_a {
            (&pair.features_a, n_a)
        } else {
            (&pair.features_b, n_b)
        };
        let idx = rng.random_range(0..count);
        feature_row_at(vol, idx, &mut pool[c * f..(c + 1) * f]);
        pool_pos.push((from_a, vol.point_of_linear(idx)));
    }

    let mut sem = Vec::new();
    let mut sem_labels = Vec::new();

    // semantic batch: round-robin over classes present in either view
    let classes_present: Vec<usize> = (0..pair.class_voxels_a.len())
        .filter(|&c| !pair.class_voxels_a[c].is_empty() || !pair.class_voxels_b[c].is_empty())
        .collect();
    let mut remap = vec![usize::MAX; pair.class_voxels_a.len()];
    for (i, &c) in classes_present.iter().enumerate() {
        remap[c] = i;
    }
    let mut collected = 0usize;
    let mut round = 0usize;
    while collected < cfg.n_sem {
        let mut advanced = false;
        for &c in &classes_present {
            if collected >= cfg.n_sem {
                break;
            }
            let use_a = (round + c) % 2 == 0;
            let (list, feats) = if use_a && !pair.class_voxels_a[c].is_empty() {
                (&pair.class_voxels_a[c], &pair.features_a)
            } else if !pair.class_voxels_b[c].is_empty() {
                (&pair.class_voxels_b[c], &pair.features_b)
            } else {
                (&pair.class_voxels_a[c], &pair.features_a)
            };
            let idx = list[rng.random_range(0..list.len())];
            let mut row = vec![0.0f64; f];
            feature_row_at(feats, idx, &mut row);
            sem.extend(row);
            sem_labels.push(remap[c]);
            collected += 1;
            advanced = true;
        }
        round += 1;
        if !advanced {
            break;
        }
    }

    Ok(SampledPoints {
        anchors,
        pos_a,
        pos_b,
        pos_b_coords,
        pool,
        pool_pos,
        sem,
        sem_labels,
        sem_classes: classes_present.len(),
    })
}

/// Everything needed to push gradients from batch rows back into a head.
struct RowCache {
    /// features per row (n x F)
    feats: Vec<f64>,
    /// unit embeddings per row (n x C)
    units: Vec<f64>,
    /// pre-normalization norms per row
    norms: Vec<f64>,
}

fn embed_rows(head: &ProjectionHead, feats: &[f64], n: usize) -> RowCache {
    let f = head.in_channels();
    let c = head.out_channels();
    let mut units = vec![0.0f64; n * c];
    let mut norms = vec![0.0f64; n];
    let mut out = vec![0.0f64; c];
    for i in 0..n {
        let norm = head.embed_vec(&feats[i * f..(i + 1) * f], &mut out);
        norms[i] = norm;
        units[i * c..(i + 1) * c].copy_from_slice(&out);
    }
    RowCache {
        feats: feats.to_vec(),
        units,
        norms,
    }
}

/// dL/dW accumulation through the per-row normalization.
fn backprop_rows(head: &ProjectionHead, cache: &RowCache, row_grads: &[f64], scale: f64, grad_w: &mut [f64]) {
    let f = head.in_channels();
    let c = head.out_channels();
    let n = cache.norms.len();
    for i in 0..n {
        let norm = cache.norms[i];
        if norm == 0.0 {
            continue; // degenerate e1 rows carry no gradient
        }
        let e = &cache.units[i * c..(i + 1) * c];
        let g = &row_grads[i * c..(i + 1) * c];
        let ge: f64 = g.iter().zip(e).map(|(&a, &b)| a * b).sum();
        let feat = &cache.feats[i * f..(i + 1) * f];
        for r in 0..c {
            let gy = (g[r] - ge * e[r]) / norm * scale;
            if gy == 0.0 {
                continue;
            }
            let dst = &mut grad_w[r * f..(r + 1) * f];
            for (d, &fv) in dst.iter_mut().zip(feat) {
                *d += gy * fv;
            }
        }
    }
}

/// Assembled batches for one (pair, step): returned alongside the caches
/// required to backpropagate into the heads.
struct StepBatches {
    pair_batch: PairBatch,
    labeled_batch: LabeledBatch,
    cache_pos_a: RowCache,
    cache_pos_b: RowCache,
    cache_neg: RowCache,
    cache_sem: RowCache,
}

fn assemble(
    sampled: &SampledPoints,
    cfg: &TrainConfig,
    app_head: &ProjectionHead,
    sem_head: &ProjectionHead,
    seed: u64,
) -> Result<StepBatches> {
    let f = app_head.in_channels();
    let n_pos = sampled.anchors.len();
    let pool_rows = sampled.pool_pos.len();

    let cache_pos_a = embed_rows(app_head, &sampled.pos_a, n_pos);
    let cache_pos_b = embed_rows(app_head, &sampled.pos_b, n_pos);
    let pool_cache = embed_rows(app_head, &sampled.pool, pool_rows);

    // hard + random negative selection per anchor over the shared pool,
    // excluding near-positive candidates (false negatives)
    const EXCLUDE_RADIUS_VOX: f64 = 2.0;
    let c_app = app_head.out_channels();
    let n_neg = cfg.n_hard + cfg.n_random;
    let mut neg_feats = vec![0.0f64; n_pos * n_neg * f];
    let mut neg_units = vec![0.0f64; n_pos * n_neg * c_app];
    let mut neg_norms = vec![0.0f64; n_pos * n_neg];
    let mut eligible: Vec<usize> = Vec::with_capacity(pool_rows);
    let mut filtered_units: Vec<f64> = Vec::with_capacity(pool_rows * c_app);
    for i in 0..n_pos {
        let anchor_vox = sampled.anchors[i].as_f64();
        let true_vox = sampled.pos_b_coords[i];
        eligible.clear();
        filtered_units.clear();
        for (row, &(from_a, p)) in sampled.pool_pos.iter().enumerate() {
            let v = p.as_f64();
            let near = if from_a {
                (0..3).map(|a| (v[a] - anchor_vox[a]).powi(2)).sum::<f64>()
            } else {
                (0..3).map(|a| (v[a] - true_vox[a]).powi(2)).sum::<f64>()
            };
            if near <= EXCLUDE_RADIUS_VOX * EXCLUDE_RADIUS_VOX {
                continue;
            }
            eligible.push(row);
            filtered_units
                .extend_from_slice(&pool_cache.units[row * c_app..(row + 1) * c_app]);
        }
        let anchor = &cache_pos_a.units[i * c_app..(i + 1) * c_app];
        let picked = select_hard_negatives(
            anchor,
            &filtered_units,
            eligible.len(),
            cfg.n_hard,
            cfg.n_random,
            seed ^ (0x9E37 + i as u64),
        )?;
        for (j, &fi) in picked.iter().enumerate() {
            let src = eligible[fi];
            let dst = i * n_neg + j;
            neg_feats[dst * f..(dst + 1) * f]
                .copy_from_slice(&pool_cache.feats[src * f..(src + 1) * f]);
            neg_units[dst * c_app..(dst + 1) * c_app]
                .copy_from_slice(&pool_cache.units[src * c_app..(src + 1) * c_app]);
            neg_norms[dst] = pool_cache.norms[src];
        }
    }
    let cache_neg = RowCache {
        feats: neg_feats,
        units: neg_units,
        norms: neg_norms,
    };

    let sem_rows = sampled.sem_labels.len();
    let cache_sem = embed_rows(sem_head, &sampled.sem, sem_rows);

    let pair_batch = PairBatch::new(
        cache_pos_a.units.clone(),
        cache_pos_b.units.clone(),
        cache_neg.units.clone(),
        n_pos,
        n_neg,
        c_app,
        cfg.tau_app,
    )?;
    let labeled_batch = LabeledBatch::new(
        cache_sem.units.clone(),
        sampled.sem_labels.clone(),
        sampled.sem_classes,
        sem_head.out_channels(),
        cfg.tau_sem,
    )?;
    Ok(StepBatches {
        pair_batch,
        labeled_batch,
        cache_pos_a,
        cache_pos_b,
        cache_neg,
        cache_sem,
    })
}

/// Spec-level batch sampler: embeddings of one step's sampled points under
/// the given heads.
pub fn sample_training_batch(
    pair: &TrainPair,
    cfg: &TrainConfig,
    app_head: &ProjectionHead,
    sem_head: &ProjectionHead,
    seed: u64,
) -> Result<(PairBatch, LabeledBatch)> {
    let sampled = sample_points(pair, cfg, seed)?;
    let batches = assemble(&sampled, cfg, app_head, sem_head, seed)?;
    Ok((batches.pair_batch, batches.labeled_batch))
}

/// Losses and weight gradients for one pair at the current heads.
pub fn pair_gradients(
    pair: &TrainPair,
    cfg: &TrainConfig,
    app_head: &ProjectionHead,
    sem_head: &ProjectionHead,
    seed: u64,
    grad_app: &mut [f64],
    grad_sem: &mut [f64],
    scale: f64,
) -> Result<(f64, f64)> {
    let sampled = sample_points(pair, cfg, seed)?;
    let batches = assemble(&sampled, cfg, app_head, sem_head, seed)?;
    let app_out = infonce_loss(&batches.pair_batch);
    backprop_rows(app_head, &batches.cache_pos_a, &app_out.grad_pos_a, scale, grad_app);
    backprop_rows(app_head, &batches.cache_pos_b, &app_out.grad_pos_b, scale, grad_app);
    backprop_rows(app_head, &batches.cache_neg, &app_out.grad_negatives, scale, grad_app);
    let sem_out = prototypical_supcon_loss(&batches.labeled_batch);
    backprop_rows(sem_head, &batches.cache_sem, &sem_out.grads, scale, grad_sem);
    Ok((app_out.loss, sem_out.loss))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub appearance: ProjectionHead,
    pub semantic: ProjectionHead,
    pub history: Vec<LossRecord>,
}

fn mix_seed(seed: u64, step: u64, k: u64) -> u64 {
    let mut z = seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Momentum SGD on `L_app + L_sem` over a pool of training pairs.
///
/// Velocity update: `v <- momentum * v - lr * grad; w <- w + v`.
/// Aborts with the partial history if the loss turns non-finite.
pub fn train(pairs: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let f = pairs[0].features_a.channels();
    let mut app_head =
        ProjectionHead::random_init(HeadKind::Appearance, f, cfg.app_channels, cfg.seed ^ 0x4150);
    let mut sem_head =
        ProjectionHead::random_init(HeadKind::Semantic, f, cfg.sem_channels, cfg.seed ^ 0x5345);
    let mut vel_app = vec![0.0f64; app_head.weights().len()];
    let mut vel_sem = vec![0.0f64; sem_head.weights().len()];
    let mut history = Vec::with_capacity(cfg.steps);
    let scale = 1.0 / cfg.batch_pairs as f64;
    for step in 0..cfg.steps {
        let mut grad_app = vec![0.0f64; vel_app.len()];
        let mut grad_sem = vec![0.0f64; vel_sem.len()];
        let mut app_loss = 0.0;
        let mut sem_loss = 0.0;
        for k in 0..cfg.batch_pairs {
            let pair = &pairs[(step * cfg.batch_pairs + k) % pairs.len()];
            let seed = mix_seed(cfg.seed, step as u64, k as u64);
            let (a, s) = pair_gradients(
                pair, cfg, &app_head, &sem_head, seed, &mut grad_app, &mut grad_sem, scale,
            )?;
            app_loss += a * scale;
            sem_loss += s * scale;
        }
        let total = app_loss + sem_loss;
        history.push(LossRecord {
            step,
            appearance: app_loss,
            semantic: sem_loss,
            total,
        });
        if !total.is_finite() {
            return Err(Error::TrainingDiverged { step, history });
        }
        for ((w, v), g) in app_head
            .weights_mut()
            .iter_mut()
            .zip(vel_app.iter_mut())
            .zip(&grad_app)
        {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *w += *v;
        }
        for ((w, v), g) in sem_head
            .weights_mut()
            .iter_mut()
            .zip(vel_sem.iter_mut())
            .zip(&grad_sem)
        {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *w += *v;
        }
    }
    Ok(TrainOutcome {
        appearance: app_head,
        semantic: sem_head,
        history,
    })
}

/// Convenience: appearance/semantic/unified embedding volumes of one
/// intensity volume under trained heads.
pub fn embed_intensity(
    intensity: &EmbeddingVolume,
    app_head: &ProjectionHead,
    sem_head: &ProjectionHead,
    lambda: f64,
) -> Result<(EmbeddingVolume, EmbeddingVolume, EmbeddingVolume)> {
    let feats = extract_features(intensity)?;
    let app = embed(&feats, app_head)?;
    let sem = embed(&feats, sem_head)?;
    let unified = crate::volume::concat_unified(&app, &sem, lambda)?;
    Ok((app, sem, unified))
}
