//! Seeded end-to-end ablation: train toy heads on phantom pairs, then
//! evaluate four matcher configurations on a corrupted correspondence suite.
//!
//! Rows, in fixed order:
//!   1. `nn`                  - appearance embedding, nearest neighbor
//!   2. `nn+semantic`         - unified embedding, nearest neighbor
//!   3. `fixedpoint`          - appearance embedding, fixed-point matcher
//!   4. `fixedpoint+semantic` - unified embedding, fixed-point matcher
//!
//! Evaluation pairs are independent, so they run in parallel; records are
//! collected in pair order, which keeps the report byte-identical for any
//! worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{embed, extract_features};
use crate::error::{Error, Result};
use crate::fixedpoint::{match_point, MatchMode, MatcherConfig};
use crate::metrics::{summarize, EvalRecord, EvalSummary};
use crate::phantom::{
    augment, generate_phantom, sample_augment_params, sample_correspondences, AugmentConfig,
    AugmentedPair, CorruptMode, CorruptRegion, PhantomConfig,
};
use crate::trainer::{train, TrainConfig, TrainOutcome, TrainPair};
use crate::volume::{concat_unified, EmbeddingVolume};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    /// Probability that an evaluation pair gets an erase-structure corruption.
    pub erase_frac: f64,
    pub shift_frac: f64,
    pub deform_frac: f64,
    pub shift_gain: f64,
    /// Erase radius as a fraction of the target structure's mean radius.
    pub erase_radius_frac: f64,
    /// Shift radius as a multiple of the target structure's mean radius.
    pub shift_radius_frac: f64,
    pub deform_displacement_mm: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            erase_frac: 0.7,
            shift_frac: 0.7,
            deform_frac: 0.35,
            shift_gain: 1.2,
            erase_radius_frac: 0.8,
            shift_radius_frac: 1.5,
            deform_displacement_mm: 3.0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("erase_frac", self.erase_frac),
            ("shift_frac", self.shift_frac),
            ("deform_frac", self.deform_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.shift_gain > 0.0) || !(self.erase_radius_frac > 0.0) {
            return Err(Error::InvalidArgument(
                "shift_gain and erase_radius_frac must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub correspondences_per_pair: usize,
    pub phantom: PhantomConfig,
    pub augment: AugmentConfig,
    pub corruption: CorruptionConfig,
    pub trainer: TrainConfig,
    pub matcher: MatcherConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            train_pairs: 4,
            eval_pairs: 12,
            correspondences_per_pair: 16,
            phantom: PhantomConfig {
                dims: [44, 44, 44],
                spacing_mm: 2.0,
                num_classes: 6,
                n_structures: 9,
            },
            augment: AugmentConfig {
                max_rotation_deg: 10.0,
                scale_range: (0.9, 1.1),
                overlap_frac: 0.8,
                noise_sigma: 0.03,
                blur_sigma_vox: 0.6,
            },
            corruption: CorruptionConfig::default(),
            trainer: TrainConfig {
                steps: 800,
                batch_pairs: 4,
                n_pos: 16,
                n_hard: 6,
                n_random: 6,
                n_sem: 48,
                app_channels: 16,
                sem_channels: 10,
                ..TrainConfig::default()
            },
            matcher: MatcherConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.matcher.validate()?;
        self.trainer.validate()?;
        self.augment.validate()?;
        self.corruption.validate()?;
        if self.train_pairs == 0 || self.eval_pairs == 0 || self.correspondences_per_pair == 0 {
            return Err(Error::InvalidArgument(
                "train_pairs, eval_pairs and correspondences_per_pair must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

pub const ROW_NAMES: [&str; 4] = ["nn", "nn+semantic", "fixedpoint", "fixedpoint+semantic"];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub seed: u64,
    pub n_correspondences: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn render_text(&self) -> String {
        let rows: Vec<(String, EvalSummary)> = self
            .rows
            .iter()
            .map(|r| (r.name.clone(), r.summary.clone()))
            .collect();
        format!(
            "ablation over {} correspondences (seed {})\n{}",
            self.n_correspondences,
            self.seed,
            crate::metrics::render_summary_table(&rows)
        )
    }

    pub fn row(&self, name: &str) -> Option<&EvalSummary> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.summary)
    }
}

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xA076_1D64_78BD_642F))
        .wrapping_add(index.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    z = (z ^ (z >> 32)).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z ^ (z >> 32)
}

/// Applies the configured corruption mix to view_b of an evaluation pair.
///
/// Targets are the structures carrying the most sampled correspondences
/// (so the hard cases actually participate in the evaluation), ranked by
/// `structure_hits`; fractions still gate whether each mode fires.
fn corrupt_eval_pair(
    pair: &AugmentedPair,
    cfg: &CorruptionConfig,
    structure_hits: &[(u16, usize)],
    seed: u64,
) -> Result<AugmentedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = pair.clone();
    let dims = pair.view_b.intensity.dims();
    let sp = pair.view_b.intensity.spacing_mm();
    let max_mm = [
        (dims[0] - 1) as f64 * sp[0],
        (dims[1] - 1) as f64 * sp[1],
        (dims[2] - 1) as f64 * sp[2],
    ];
    let inside = |c: crate::geom::PhysPoint| {
        c.z >= 0.0
            && c.z <= max_mm[0]
            && c.y >= 0.0
            && c.y <= max_mm[1]
            && c.x >= 0.0
            && c.x <= max_mm[2]
    };
    let structure_by_id = |id: u16| {
        pair.view_b
            .structures
            .iter()
            .find(|s| s.id == id)
            .cloned()
    };
    if pair.view_b.structures.is_empty() || structure_hits.is_empty() {
        return Ok(out);
    }
    // most-hit structure gets erased, second most-hit gets the gain shift
    let erase_target = structure_hits.first().map(|&(id, _)| id);
    let shift_target = structure_hits.get(1).or(structure_hits.first()).map(|&(id, _)| id);

    if rng.random_range(0.0..1.0) < cfg.erase_frac {
        if let Some(st) = erase_target.and_then(structure_by_id) {
            if inside(st.center_mm) {
                out = crate::phantom::corrupt_pair(
                    &out,
                    &CorruptMode::EraseStructure,
                    &CorruptRegion {
                        center_mm: st.center_mm,
                        radius_mm: st.radius_mm * cfg.erase_radius_frac,
                    },
                    rng.random(),
                )?;
            }
        }
    }
    if rng.random_range(0.0..1.0) < cfg.shift_frac {
        // enhancement or washout, picked per pair
        let gain = if rng.random_range(0.0..1.0) < 0.5 {
            cfg.shift_gain
        } else {
            1.0 / cfg.shift_gain
        };
        if let Some(st) = shift_target.and_then(structure_by_id) {
            if inside(st.center_mm) {
                out = crate::phantom::corrupt_pair(
                    &out,
                    &CorruptMode::IntensityShift { gain },
                    &CorruptRegion {
                        center_mm: st.center_mm,
                        radius_mm: st.radius_mm * cfg.shift_radius_frac,
                    },
                    rng.random(),
                )?;
            }
        }
    }
    if cfg.deform_frac > 0.0 && rng.random_range(0.0..1.0) < cfg.deform_frac {
        let pick = structure_hits[rng.random_range(0..structure_hits.len())].0;
        if let Some(st) = structure_by_id(pick) {
            let radius = (st.radius_mm * 2.0).max(4.0 * cfg.deform_displacement_mm + 1.0);
            if inside(st.center_mm) {
                let dir = [
                    rng.random_range(-1.0..1.0f64),
                    rng.random_range(-1.0..1.0f64),
                    rng.random_range(-1.0..1.0f64),
                ];
                let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2])
                    .sqrt()
                    .max(1e-9);
                let disp = [
                    dir[0] / norm * cfg.deform_displacement_mm,
                    dir[1] / norm * cfg.deform_displacement_mm,
                    dir[2] / norm * cfg.deform_displacement_mm,
                ];
                out = crate::phantom::corrupt_pair(
                    &out,
                    &CorruptMode::LocalDeform {
                        displacement_mm: disp,
                    },
                    &CorruptRegion {
                        center_mm: st.center_mm,
                        radius_mm: radius,
                    },
                    rng.random(),
                )?;
            }
        }
    }
    Ok(out)
}

struct EvalVolumes {
    app_a: EmbeddingVolume,
    app_b: EmbeddingVolume,
    uni_a: EmbeddingVolume,
    uni_b: EmbeddingVolume,
}

fn embed_pair(pair: &AugmentedPair, heads: &TrainOutcome, lambda: f64) -> Result<EvalVolumes> {
    let feats_a = extract_features(&pair.view_a.intensity)?;
    let feats_b = extract_features(&pair.view_b.intensity)?;
    let app_a = embed(&feats_a, &heads.appearance)?;
    let app_b = embed(&feats_b, &heads.appearance)?;
    let sem_a = embed(&feats_a, &heads.semantic)?;
    let sem_b = embed(&feats_b, &heads.semantic)?;
    Ok(EvalVolumes {
        uni_a: concat_unified(&app_a, &sem_a, lambda)?,
        uni_b: concat_unified(&app_b, &sem_b, lambda)?,
        app_a,
        app_b,
    })
}

/// Trains heads on fresh pairs, then runs the four-row evaluation.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let heads = train_heads(cfg)?;
    let per_pair: Vec<Vec<Vec<EvalRecord>>> = (0..cfg.eval_pairs)
        .into_par_iter()
        .map(|i| evaluate_pair(cfg, &heads, i))
        .collect::<Result<Vec<_>>>()?;
    let mut rows_records: [Vec<EvalRecord>; 4] = Default::default();
    for pair_rows in per_pair {
        for (row, records) in rows_records.iter_mut().zip(pair_rows) {
            row.extend(records);
        }
    }
    let n_correspondences = rows_records[0].len();
    let mut rows = Vec::with_capacity(4);
    for (name, records) in ROW_NAMES.iter().zip(&rows_records) {
        rows.push(AblationRow {
            name: name.to_string(),
            summary: summarize(records)?,
        });
    }
    Ok(AblationReport {
        seed: cfg.seed,
        n_correspondences,
        rows,
    })
}

/// Builds the training pool and trains both heads.
pub fn train_heads(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let extent = extent_mm(&cfg.phantom);
    let mut pairs = Vec::with_capacity(cfg.train_pairs);
    for t in 0..cfg.train_pairs {
        let phantom = generate_phantom(&cfg.phantom, mix(cfg.seed, 1, t as u64))?;
        let params = sample_augment_params(&cfg.augment, extent, mix(cfg.seed, 2, t as u64))?;
        let pair = augment(&phantom, &params)?;
        pairs.push(TrainPair::from_pair(&pair)?);
    }
    train(
        &pairs,
        &TrainConfig {
            seed: mix(cfg.seed, 7, 0),
            ..cfg.trainer.clone()
        },
    )
}

fn extent_mm(cfg: &PhantomConfig) -> [f64; 3] {
    [
        (cfg.dims[0] - 1) as f64 * cfg.spacing_mm,
        (cfg.dims[1] - 1) as f64 * cfg.spacing_mm,
        (cfg.dims[2] - 1) as f64 * cfg.spacing_mm,
    ]
}

/// One evaluation pair: generate, corrupt, sample correspondences, and match
/// with all four configurations. Returns one record list per row.
fn evaluate_pair(
    cfg: &ExperimentConfig,
    heads: &TrainOutcome,
    index: usize,
) -> Result<Vec<Vec<EvalRecord>>> {
    let i = index as u64;
    let extent = extent_mm(&cfg.phantom);
    let phantom = generate_phantom(&cfg.phantom, mix(cfg.seed, 3, i))?;
    let params = sample_augment_params(&cfg.augment, extent, mix(cfg.seed, 4, i))?;
    let pair = augment(&phantom, &params)?;
    // sample templates first so corruption can target the structures they
    // actually sit on; ground truth is recomputed afterwards because
    // local-deform moves it
    let mut corrs =
        sample_correspondences(&pair, cfg.correspondences_per_pair, mix(cfg.seed, 6, i))?;
    let mut hit_counts: std::collections::BTreeMap<u16, usize> = std::collections::BTreeMap::new();
    let spacing = pair.view_a.intensity.spacing_mm();
    for c in &corrs.pairs {
        let vox = c.template.round_to_voxel(spacing);
        let sid = pair.view_a.structure_ids[pair.view_a.intensity.linear_index(vox)];
        if sid != 0 {
            *hit_counts.entry(sid).or_insert(0) += 1;
        }
    }
    let mut structure_hits: Vec<(u16, usize)> = hit_counts.into_iter().collect();
    structure_hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let pair = corrupt_eval_pair(&pair, &cfg.corruption, &structure_hits, mix(cfg.seed, 5, i))?;
    for c in corrs.pairs.iter_mut() {
        c.truth_query = pair.truth.apply(c.template);
    }
    let vols = embed_pair(&pair, heads, cfg.matcher.lambda)?;

    let nn_cfg = MatcherConfig {
        mode: MatchMode::Nn,
        ..cfg.matcher.clone()
    };
    let fp_cfg = MatcherConfig {
        mode: MatchMode::FixedPoint,
        ..cfg.matcher.clone()
    };
    let mut rows: Vec<Vec<EvalRecord>> = vec![Vec::new(); 4];
    for (j, corr) in corrs.pairs.iter().enumerate() {
        let t = corr.template.round_to_voxel(spacing);
        let configs: [(&EmbeddingVolume, &EmbeddingVolume, &MatcherConfig); 4] = [
            (&vols.app_a, &vols.app_b, &nn_cfg),
            (&vols.uni_a, &vols.uni_b, &nn_cfg),
            (&vols.app_a, &vols.app_b, &fp_cfg),
            (&vols.uni_a, &vols.uni_b, &fp_cfg),
        ];
        for (row, (va, vb, mcfg)) in configs.iter().enumerate() {
            let result = match_point(t, va, vb, mcfg)?;
            rows[row].push(EvalRecord {
                pair_id: format!("p{index}c{j}"),
                predicted: result.mm,
                truth: corr.truth_query,
                radius_mm: corr.radius_mm,
                method: ROW_NAMES[row].to_string(),
            });
        }
    }
    Ok(rows)
}
