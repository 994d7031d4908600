//! Procedural paired-volume generator: smooth blob structures over textured
//! background, exact analytic ground-truth transforms, appearance
//! corruptions, and correspondence sampling.
//!
//! Ground truth is always stored as transform parameters, never as a
//! resampled displacement field, so metric evaluation carries zero
//! interpolation error. Every generator output is a pure function of
//! (config, seed).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::gaussian_smooth_3d;
use crate::geom::{PhysPoint, VoxelPoint};
use crate::volume::{EmbeddingVolume, LabelVolume};

/// One blob structure: an axis-aligned ellipsoid before augmentation.
#[derive(Debug, Clone, Serialize)]
pub struct Structure {
    pub id: u16,
    pub center_mm: PhysPoint,
    pub radii_mm: [f64; 3],
    /// Mean radius, used as the per-pair CPM threshold.
    pub radius_mm: f64,
    pub class: u16,
    /// Realized intensity amplitude: the class base with per-instance
    /// jitter, modeling contrast-state variation between scans.
    pub amplitude: f64,
}

/// Intensity + labels + structure bookkeeping for one volume.
#[derive(Debug, Clone)]
pub struct Phantom {
    /// Single-channel intensity field (channels = 1, not normalized).
    pub intensity: EmbeddingVolume,
    pub labels: LabelVolume,
    /// Per-voxel structure id; 0 where no structure claims the voxel.
    pub structure_ids: Vec<u16>,
    pub structures: Vec<Structure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    /// Structure classes 1..=num_classes; label 0 is background.
    pub num_classes: u16,
    pub n_structures: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: [64, 64, 64],
            spacing_mm: 2.0,
            num_classes: 6,
            n_structures: 10,
        }
    }
}

/// Base intensity of empty tissue; blob amplitudes sit on top of this.
const BACKGROUND_LEVEL: f64 = 0.15;
const BACKGROUND_WAVES: usize = 6;

/// Base class intensity amplitudes. Classes 1 and 2 share one base on
/// purpose: they are the look-alike pair whose intensity histograms overlap
/// (they differ only in size), which is what makes appearance-only matching
/// confusable between them.
fn class_amplitude(class: u16) -> f64 {
    const TABLE: [f64; 8] = [0.80, 0.80, 0.50, 0.95, 0.35, 0.65, 0.45, 0.70];
    TABLE[((class - 1) as usize) % TABLE.len()]
}

/// Per-instance amplitude jitter around the class base. Different phantoms
/// show the same class at different intensities (a contrast-state analog),
/// so class identity cannot be read off the intensity level alone.
const AMPLITUDE_JITTER: f64 = 0.4;

/// Per-class radius ranges in mm. The look-alike classes get disjoint size
/// ranges (small vs large) so semantic supervision has a usable cue.
fn class_radius_range(class: u16) -> (f64, f64) {
    match class {
        1 => (4.0, 6.5),
        2 => (9.0, 13.0),
        _ => (5.0, 11.0),
    }
}

/// Deterministic blob-phantom generator.
///
/// Structures are placed by rejection sampling with bounded retries; classes
/// cycle 1..=K so every class appears once `n_structures >= K`.
pub fn generate_phantom(cfg: &PhantomConfig, seed: u64) -> Result<Phantom> {
    if cfg.num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
    }
    let dims = cfg.dims;
    let sp = cfg.spacing_mm;
    let extent = [
        (dims[0] - 1) as f64 * sp,
        (dims[1] - 1) as f64 * sp,
        (dims[2] - 1) as f64 * sp,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // background texture: a few low-frequency cosine waves
    let mut waves = Vec::with_capacity(BACKGROUND_WAVES);
    for _ in 0..BACKGROUND_WAVES {
        let wavelength = rng.random_range(40.0..110.0f64);
        let k = 2.0 * std::f64::consts::PI / wavelength;
        let dir = [
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
        ];
        let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2])
            .sqrt()
            .max(1e-9);
        let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        waves.push(([dir[0] * k / norm, dir[1] * k / norm, dir[2] * k / norm], phase));
    }

    // structure placement with loose packing
    let mut structures: Vec<Structure> = Vec::with_capacity(cfg.n_structures);
    for s in 0..cfg.n_structures {
        let class = (s as u16 % cfg.num_classes) + 1;
        let (r_lo, r_hi) = class_radius_range(class);
        let mut placed = false;
        for _try in 0..200 {
            let base = rng.random_range(r_lo..r_hi);
            let radii = [
                base * rng.random_range(0.8..1.2),
                base * rng.random_range(0.8..1.2),
                base * rng.random_range(0.8..1.2),
            ];
            let r_max = radii[0].max(radii[1]).max(radii[2]);
            let margin = r_max + 2.0 * sp;
            if 2.0 * margin >= extent[0].min(extent[1]).min(extent[2]) {
                continue; // volume too small for this blob
            }
            let center = PhysPoint::new(
                rng.random_range(margin..extent[0] - margin),
                rng.random_range(margin..extent[1] - margin),
                rng.random_range(margin..extent[2] - margin),
            );
            let mean_r = (radii[0] + radii[1] + radii[2]) / 3.0;
            let ok = structures.iter().all(|other| {
                center.distance_to(other.center_mm) > 0.9 * (mean_r + other.radius_mm)
            });
            if ok {
                let amplitude = class_amplitude(class)
                    * (1.0 + rng.random_range(-AMPLITUDE_JITTER..AMPLITUDE_JITTER));
                structures.push(Structure {
                    id: (s + 1) as u16,
                    center_mm: center,
                    radii_mm: radii,
                    radius_mm: mean_r,
                    class,
                    amplitude,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidArgument(format!(
                "infeasible packing: could not place structure {} of {} after bounded retries",
                s + 1,
                cfg.n_structures
            )));
        }
    }

    let n = dims[0] * dims[1] * dims[2];
    let mut intensity = vec![0.0f32; n];
    let mut labels = vec![0u16; n];
    let mut structure_ids = vec![0u16; n];
    let mut idx = 0;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z as f64 * sp, y as f64 * sp, x as f64 * sp];
                let mut texture = 0.0;
                for (k, phase) in &waves {
                    texture += (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).cos();
                }
                let mut value = BACKGROUND_LEVEL + 0.35 * texture / BACKGROUND_WAVES as f64;
                for st in &structures {
                    let d2 = ((p[0] - st.center_mm.z) / st.radii_mm[0]).powi(2)
                        + ((p[1] - st.center_mm.y) / st.radii_mm[1]).powi(2)
                        + ((p[2] - st.center_mm.x) / st.radii_mm[2]).powi(2);
                    if d2 <= 1.0 {
                        value += st.amplitude * (-2.0 * d2).exp();
                        if labels[idx] == 0 {
                            labels[idx] = st.class;
                            structure_ids[idx] = st.id;
                        }
                    }
                }
                intensity[idx] = value as f32;
                idx += 1;
            }
        }
    }

    Ok(Phantom {
        intensity: EmbeddingVolume::new(dims, 1, [sp; 3], intensity, false)?,
        labels: LabelVolume::new(dims, [sp; 3], labels, cfg.num_classes + 1)?,
        structure_ids,
        structures,
    })
}

/// Local compact-support deformation added to the query side by the
/// `local-deform` corruption. Displacement falls off as `(1 - u^2)^2`.
#[derive(Debug, Clone, Serialize)]
pub struct LocalDeform {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    pub displacement_mm: [f64; 3],
}

impl LocalDeform {
    /// Where the content formerly at `target` appears after the pullback
    /// warp `new(q) = old(q + d(q))`: the solution of `q + d(q) = target`,
    /// found by fixed-point iteration (contractive by the displacement
    /// magnitude limit enforced at construction).
    pub fn pull_target(&self, target: PhysPoint) -> PhysPoint {
        let t = target.to_array();
        let mut cur = t;
        for _ in 0..60 {
            let d = self.displacement_at(cur);
            let next = [t[0] - d[0], t[1] - d[1], t[2] - d[2]];
            let delta =
                (next[0] - cur[0]).abs() + (next[1] - cur[1]).abs() + (next[2] - cur[2]).abs();
            cur = next;
            if delta < 1e-12 {
                break;
            }
        }
        PhysPoint::new(cur[0], cur[1], cur[2])
    }

    /// Displacement evaluated at a point of the (old) query volume.
    fn displacement_at(&self, p: [f64; 3]) -> [f64; 3] {
        let dz = p[0] - self.center_mm[0];
        let dy = p[1] - self.center_mm[1];
        let dx = p[2] - self.center_mm[2];
        let u2 = (dz * dz + dy * dy + dx * dx) / (self.radius_mm * self.radius_mm);
        if u2 >= 1.0 {
            return [0.0; 3];
        }
        let w = (1.0 - u2) * (1.0 - u2);
        [
            w * self.displacement_mm[0],
            w * self.displacement_mm[1],
            w * self.displacement_mm[2],
        ]
    }
}

/// Exact, invertible a->b spatial map: rotation . scale about the volume
/// center, then translation, optionally followed by local deformations.
#[derive(Debug, Clone, Serialize)]
pub struct TruthMap {
    /// Linear part `M = R * diag(scale)` acting on mm offsets from `center_mm`.
    pub matrix: [[f64; 3]; 3],
    pub inverse: [[f64; 3]; 3],
    pub center_mm: [f64; 3],
    pub translation_mm: [f64; 3],
    pub deforms: Vec<LocalDeform>,
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..3 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

fn mat_apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_inverse(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    assert!(det.abs() > 1e-12, "augmentation matrix must be invertible");
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    out
}

impl TruthMap {
    fn from_params(params: &AugmentParams, dims: [usize; 3], spacing: f64) -> TruthMap {
        let to_rad = std::f64::consts::PI / 180.0;
        let (sz, cz) = (params.rotation_deg[0] * to_rad).sin_cos();
        let (sy, cy) = (params.rotation_deg[1] * to_rad).sin_cos();
        let (sx, cx) = (params.rotation_deg[2] * to_rad).sin_cos();
        // rotations about the z, y, x axes of the (z, y, x) coordinate triple;
        // composed as Rz * Ry * Rx
        let rz = [[1.0, 0.0, 0.0], [0.0, cz, -sz], [0.0, sz, cz]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rx = [[cx, -sx, 0.0], [sx, cx, 0.0], [0.0, 0.0, 1.0]];
        let rot = mat_mul(&mat_mul(&rz, &ry), &rx);
        let mut matrix = rot;
        for r in 0..3 {
            for c in 0..3 {
                matrix[r][c] *= params.scale[c];
            }
        }
        let inverse = mat_inverse(&matrix);
        let center_mm = [
            (dims[0] - 1) as f64 * spacing / 2.0,
            (dims[1] - 1) as f64 * spacing / 2.0,
            (dims[2] - 1) as f64 * spacing / 2.0,
        ];
        TruthMap {
            matrix,
            inverse,
            center_mm,
            translation_mm: params.translation_mm,
            deforms: Vec::new(),
        }
    }

    /// Affine part only: `q = M (p - c) + c + t`.
    pub fn apply_affine(&self, p: PhysPoint) -> PhysPoint {
        let v = [
            p.z - self.center_mm[0],
            p.y - self.center_mm[1],
            p.x - self.center_mm[2],
        ];
        let mv = mat_apply(&self.matrix, v);
        PhysPoint::new(
            mv[0] + self.center_mm[0] + self.translation_mm[0],
            mv[1] + self.center_mm[1] + self.translation_mm[1],
            mv[2] + self.center_mm[2] + self.translation_mm[2],
        )
    }

    /// Inverse of the affine part.
    pub fn invert_affine(&self, q: PhysPoint) -> PhysPoint {
        let v = [
            q.z - self.translation_mm[0] - self.center_mm[0],
            q.y - self.translation_mm[1] - self.center_mm[1],
            q.x - self.translation_mm[2] - self.center_mm[2],
        ];
        let mv = mat_apply(&self.inverse, v);
        PhysPoint::new(
            mv[0] + self.center_mm[0],
            mv[1] + self.center_mm[1],
            mv[2] + self.center_mm[2],
        )
    }

    /// Full ground-truth map a -> b, deformations included: the affine part
    /// followed by each deformation's pullback inversion in order.
    pub fn apply(&self, p: PhysPoint) -> PhysPoint {
        let mut q = self.apply_affine(p);
        for deform in &self.deforms {
            q = deform.pull_target(q);
        }
        q
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    pub translation_mm: [f64; 3],
    pub noise_sigma: f64,
    pub blur_sigma_vox: f64,
    pub seed: u64,
}

impl AugmentParams {
    /// Identity geometry; noise and blur off.
    pub fn identity(seed: u64) -> Self {
        AugmentParams {
            rotation_deg: [0.0; 3],
            scale: [1.0; 3],
            translation_mm: [0.0; 3],
            noise_sigma: 0.0,
            blur_sigma_vox: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Expected per-axis overlap fraction; the translation draw spans
    /// `(1 - overlap_frac) * extent / 2` in each direction.
    pub overlap_frac: f64,
    pub noise_sigma: f64,
    pub blur_sigma_vox: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 15.0,
            scale_range: (0.8, 1.2),
            overlap_frac: 0.5,
            noise_sigma: 0.02,
            blur_sigma_vox: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg <= 15.0) {
            return Err(Error::InvalidArgument(
                "rotation must stay within +/-15 degrees".into(),
            ));
        }
        if !(self.scale_range.0 >= 0.8 && self.scale_range.1 <= 1.2
            && self.scale_range.0 <= self.scale_range.1)
        {
            return Err(Error::InvalidArgument(
                "scale range must lie within [0.8, 1.2]".into(),
            ));
        }
        if !(self.overlap_frac > 0.0 && self.overlap_frac <= 1.0) {
            return Err(Error::InvalidArgument("overlap_frac must be in (0, 1]".into()));
        }
        if self.noise_sigma < 0.0 || self.blur_sigma_vox < 0.0 {
            return Err(Error::InvalidArgument("noise/blur must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws augmentation parameters within the configured ranges.
pub fn sample_augment_params(
    cfg: &AugmentConfig,
    extent_mm: [f64; 3],
    seed: u64,
) -> Result<AugmentParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rotation = [0.0; 3];
    for r in rotation.iter_mut() {
        *r = rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg);
    }
    let mut scale = [1.0; 3];
    for s in scale.iter_mut() {
        *s = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
    }
    let mut translation = [0.0; 3];
    for (t, &e) in translation.iter_mut().zip(&extent_mm) {
        let max_t = (1.0 - cfg.overlap_frac) * e / 2.0;
        *t = rng.random_range(-max_t..=max_t);
    }
    Ok(AugmentParams {
        rotation_deg: rotation,
        scale,
        translation_mm: translation,
        noise_sigma: cfg.noise_sigma,
        blur_sigma_vox: cfg.blur_sigma_vox,
        seed: rng.random(),
    })
}

/// Two views of one phantom related by an exactly-known spatial map.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub view_a: Phantom,
    pub view_b: Phantom,
    pub truth: TruthMap,
    pub params: AugmentParams,
    /// Per-voxel mask on view_a's grid: true where the truth map lands
    /// inside view_b.
    pub overlap: Vec<bool>,
}

fn add_noise(vol: &EmbeddingVolume, sigma: f64, seed: u64) -> EmbeddingVolume {
    if sigma == 0.0 {
        return vol.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = vol
        .data()
        .iter()
        .map(|&v| {
            // Box-Muller from two uniforms
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (v as f64 + sigma * g) as f32
        })
        .collect();
    EmbeddingVolume::new(vol.dims(), 1, vol.spacing_mm(), data, false).unwrap()
}

fn blur_intensity(vol: &EmbeddingVolume, sigma_vox: f64) -> EmbeddingVolume {
    if sigma_vox == 0.0 {
        return vol.clone();
    }
    let src: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let out = gaussian_smooth_3d(&src, vol.dims(), sigma_vox);
    EmbeddingVolume::new(
        vol.dims(),
        1,
        vol.spacing_mm(),
        out.into_iter().map(|v| v as f32).collect(),
        false,
    )
    .unwrap()
}

fn resample_phantom(phantom: &Phantom, truth: &TruthMap) -> Phantom {
    let dims = phantom.intensity.dims();
    let spacing = phantom.intensity.spacing_mm();
    let n = dims[0] * dims[1] * dims[2];
    let mut intensity = vec![0.0f32; n];
    let mut labels = vec![0u16; n];
    let mut structure_ids = vec![0u16; n];
    let mut sample = [0.0f64; 1];
    let mut idx = 0;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let q = PhysPoint::new(
                    z as f64 * spacing[0],
                    y as f64 * spacing[1],
                    x as f64 * spacing[2],
                );
                let p = truth.invert_affine(q);
                let vox = p.to_voxel_coords(spacing);
                let inside = vox[0] >= 0.0
                    && vox[0] <= (dims[0] - 1) as f64
                    && vox[1] >= 0.0
                    && vox[1] <= (dims[1] - 1) as f64
                    && vox[2] >= 0.0
                    && vox[2] <= (dims[2] - 1) as f64;
                if inside {
                    phantom.intensity.sample_trilinear(vox, &mut sample);
                    intensity[idx] = sample[0] as f32;
                    let nearest = VoxelPoint::new(
                        vox[0].round() as i64,
                        vox[1].round() as i64,
                        vox[2].round() as i64,
                    );
                    let li = phantom.labels.linear_index(nearest);
                    labels[idx] = phantom.labels.data()[li];
                    structure_ids[idx] = phantom.structure_ids[li];
                } else {
                    intensity[idx] = BACKGROUND_LEVEL as f32;
                }
                idx += 1;
            }
        }
    }
    let structures = phantom
        .structures
        .iter()
        .map(|s| {
            let center = truth.apply_affine(s.center_mm);
            let mean_scale = (truth.matrix[0][0].hypot(truth.matrix[1][0]).hypot(truth.matrix[2][0])
                + truth.matrix[0][1].hypot(truth.matrix[1][1]).hypot(truth.matrix[2][1])
                + truth.matrix[0][2].hypot(truth.matrix[1][2]).hypot(truth.matrix[2][2]))
                / 3.0;
            Structure {
                id: s.id,
                center_mm: center,
                radii_mm: [
                    s.radii_mm[0] * mean_scale,
                    s.radii_mm[1] * mean_scale,
                    s.radii_mm[2] * mean_scale,
                ],
                radius_mm: s.radius_mm * mean_scale,
                class: s.class,
                amplitude: s.amplitude,
            }
        })
        .collect();
    Phantom {
        intensity: EmbeddingVolume::new(dims, 1, spacing, intensity, false).unwrap(),
        labels: LabelVolume::new(dims, spacing, labels, phantom.labels.num_classes()).unwrap(),
        structure_ids,
        structures,
    }
}

/// Builds the two augmented views. The geometric warp is applied first and
/// recorded exactly; blur (view b only) and noise (both views, separate
/// seeds) come after, so the truth map stays exact.
pub fn augment(phantom: &Phantom, params: &AugmentParams) -> Result<AugmentedPair> {
    let dims = phantom.intensity.dims();
    let spacing = phantom.intensity.spacing_mm();
    for (i, s) in params.scale.iter().enumerate() {
        if !(*s >= 0.5 && *s <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "scale[{i}] = {s} out of sane range"
            )));
        }
    }
    let truth = TruthMap::from_params(params, dims, spacing[0]);

    let view_a = Phantom {
        intensity: add_noise(&phantom.intensity, params.noise_sigma, params.seed ^ 0xA5A5),
        labels: phantom.labels.clone(),
        structure_ids: phantom.structure_ids.clone(),
        structures: phantom.structures.clone(),
    };
    let mut warped = resample_phantom(phantom, &truth);
    warped.intensity = blur_intensity(&warped.intensity, params.blur_sigma_vox);
    warped.intensity = add_noise(&warped.intensity, params.noise_sigma, params.seed ^ 0x5A5A);

    let max_mm = [
        (dims[0] - 1) as f64 * spacing[0],
        (dims[1] - 1) as f64 * spacing[1],
        (dims[2] - 1) as f64 * spacing[2],
    ];
    let mut overlap = vec![false; dims[0] * dims[1] * dims[2]];
    let mut idx = 0;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = PhysPoint::new(
                    z as f64 * spacing[0],
                    y as f64 * spacing[1],
                    x as f64 * spacing[2],
                );
                let q = truth.apply_affine(p);
                overlap[idx] = q.z >= 0.0
                    && q.z <= max_mm[0]
                    && q.y >= 0.0
                    && q.y <= max_mm[1]
                    && q.x >= 0.0
                    && q.x <= max_mm[2];
                idx += 1;
            }
        }
    }

    Ok(AugmentedPair {
        view_a,
        view_b: warped,
        truth,
        params: params.clone(),
        overlap,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum CorruptMode {
    /// Replace intensity inside the region with background statistics.
    #[serde(rename = "erase-structure")]
    EraseStructure,
    /// Multiply intensity inside the region by a gain (contrast analog).
    #[serde(rename = "intensity-shift")]
    IntensityShift { gain: f64 },
    /// Push content inside the region by a smooth displacement; updates the
    /// ground-truth map.
    #[serde(rename = "local-deform")]
    LocalDeform { displacement_mm: [f64; 3] },
}

/// Spherical corruption region in millimeter coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorruptRegion {
    pub center_mm: PhysPoint,
    pub radius_mm: f64,
}

fn check_region(region: &CorruptRegion, vol: &EmbeddingVolume) -> Result<()> {
    let dims = vol.dims();
    let sp = vol.spacing_mm();
    let max = [
        (dims[0] - 1) as f64 * sp[0],
        (dims[1] - 1) as f64 * sp[1],
        (dims[2] - 1) as f64 * sp[2],
    ];
    let c = region.center_mm;
    if region.radius_mm < 0.0 {
        return Err(Error::InvalidArgument("corrupt radius must be >= 0".into()));
    }
    if c.z < 0.0 || c.z > max[0] || c.y < 0.0 || c.y > max[1] || c.x < 0.0 || c.x > max[2] {
        return Err(Error::InvalidArgument(format!(
            "corrupt region center {c:?} outside volume (mm extent {max:?})"
        )));
    }
    Ok(())
}

/// Appearance-only corruption of a single intensity volume (labels are used
/// for background statistics and stay untouched).
pub fn corrupt_intensity(
    intensity: &EmbeddingVolume,
    labels: &LabelVolume,
    mode: &CorruptMode,
    region: &CorruptRegion,
    seed: u64,
) -> Result<EmbeddingVolume> {
    check_region(region, intensity)?;
    let dims = intensity.dims();
    let sp = intensity.spacing_mm();
    let mut data = intensity.data().to_vec();
    match mode {
        CorruptMode::EraseStructure => {
            let mut count = 0usize;
            let mut mean = 0.0f64;
            let mut sq = 0.0f64;
            for (i, &l) in labels.data().iter().enumerate() {
                if l == 0 {
                    let v = data[i] as f64;
                    mean += v;
                    sq += v * v;
                    count += 1;
                }
            }
            let (mu, sd) = if count > 0 {
                let mu = mean / count as f64;
                (mu, (sq / count as f64 - mu * mu).max(0.0).sqrt())
            } else {
                (BACKGROUND_LEVEL, 0.0)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = 0;
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let p = PhysPoint::new(
                            z as f64 * sp[0],
                            y as f64 * sp[1],
                            x as f64 * sp[2],
                        );
                        if p.distance_to(region.center_mm) <= region.radius_mm {
                            let jitter: f64 = rng.random_range(-1.0..1.0);
                            data[idx] = (mu + 0.5 * sd * jitter) as f32;
                        }
                        idx += 1;
                    }
                }
            }
        }
        CorruptMode::IntensityShift { gain } => {
            let mut idx = 0;
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let p = PhysPoint::new(
                            z as f64 * sp[0],
                            y as f64 * sp[1],
                            x as f64 * sp[2],
                        );
                        if p.distance_to(region.center_mm) <= region.radius_mm {
                            data[idx] = (data[idx] as f64 * gain) as f32;
                        }
                        idx += 1;
                    }
                }
            }
        }
        CorruptMode::LocalDeform { .. } => {
            return Err(Error::InvalidArgument(
                "local-deform needs the full pair; use corrupt_pair".into(),
            ));
        }
    }
    EmbeddingVolume::new(dims, 1, sp, data, false)
}

/// Resamples an intensity/label volume through a local pullback deformation
/// `new(q) = old(q + d(q))`. Returns the warped volumes and the deformation
/// (needed to update any ground truth that references the old positions).
pub fn deform_volume(
    intensity: &EmbeddingVolume,
    labels: &LabelVolume,
    region: &CorruptRegion,
    displacement_mm: [f64; 3],
) -> Result<(EmbeddingVolume, LocalDeform, LabelVolume)> {
    check_region(region, intensity)?;
    let max_disp = displacement_mm
        .iter()
        .fold(0.0f64, |acc, d| acc.max(d.abs()));
    if max_disp > region.radius_mm / 4.0 {
        return Err(Error::InvalidArgument(
            "local-deform displacement too large for invertibility (max radius/4)".into(),
        ));
    }
    let deform = LocalDeform {
        center_mm: region.center_mm.to_array(),
        radius_mm: region.radius_mm,
        displacement_mm,
    };
    let dims = intensity.dims();
    let sp = intensity.spacing_mm();
    let n = dims[0] * dims[1] * dims[2];
    let mut out_intensity = vec![0.0f32; n];
    let mut out_labels = vec![0u16; n];
    let mut sample = [0.0f64; 1];
    let mut idx = 0;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z as f64 * sp[0], y as f64 * sp[1], x as f64 * sp[2]];
                let d = deform.displacement_at(p);
                let src = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                let vox = [src[0] / sp[0], src[1] / sp[1], src[2] / sp[2]];
                intensity.sample_trilinear(vox, &mut sample);
                out_intensity[idx] = sample[0] as f32;
                let nearest = VoxelPoint::new(
                    vox[0].round().clamp(0.0, (dims[0] - 1) as f64) as i64,
                    vox[1].round().clamp(0.0, (dims[1] - 1) as f64) as i64,
                    vox[2].round().clamp(0.0, (dims[2] - 1) as f64) as i64,
                );
                out_labels[idx] = labels.data()[labels.linear_index(nearest)];
                idx += 1;
            }
        }
    }
    Ok((
        EmbeddingVolume::new(dims, 1, sp, out_intensity, false)?,
        deform,
        LabelVolume::new(dims, sp, out_labels, labels.num_classes())?,
    ))
}

/// Applies a corruption to `view_b` of a pair. Appearance-only modes leave
/// the truth map unchanged; `local-deform` resamples the view and appends
/// the displacement to the truth map.
pub fn corrupt_pair(
    pair: &AugmentedPair,
    mode: &CorruptMode,
    region: &CorruptRegion,
    seed: u64,
) -> Result<AugmentedPair> {
    let mut out = pair.clone();
    match mode {
        CorruptMode::LocalDeform { displacement_mm } => {
            let (intensity, deform, labels) = deform_volume(
                &pair.view_b.intensity,
                &pair.view_b.labels,
                region,
                *displacement_mm,
            )?;
            out.view_b.intensity = intensity;
            out.view_b.labels = labels;
            out.truth.deforms.push(deform);
        }
        _ => {
            out.view_b.intensity = corrupt_intensity(
                &pair.view_b.intensity,
                &pair.view_b.labels,
                mode,
                region,
                seed,
            )?;
        }
    }
    Ok(out)
}

/// One ground-truth template/query pair in millimeters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Correspondence {
    pub template: PhysPoint,
    pub truth_query: PhysPoint,
    pub radius_mm: f64,
    pub tag: String,
}

/// Serializable transform parameters echoed next to the pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransformSummary {
    pub rotation_deg: [f64; 3],
    pub scale: [f64; 3],
    pub translation_mm: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub transform: TransformSummary,
}

/// Samples `n` template points on structure voxels inside the overlap
/// region; ground truth comes from the exact truth map, the CPM radius from
/// the structure the template sits on.
pub fn sample_correspondences(
    pair: &AugmentedPair,
    n: usize,
    seed: u64,
) -> Result<CorrespondenceSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1 correspondences".into()));
    }
    let dims = pair.view_a.intensity.dims();
    let sp = pair.view_a.intensity.spacing_mm();
    let max_mm = [
        (dims[0] - 1) as f64 * sp[0],
        (dims[1] - 1) as f64 * sp[1],
        (dims[2] - 1) as f64 * sp[2],
    ];
    let mut candidates: Vec<usize> = Vec::new();
    for (idx, (&sid, &inside)) in pair
        .view_a
        .structure_ids
        .iter()
        .zip(&pair.overlap)
        .enumerate()
    {
        if sid == 0 || !inside {
            continue;
        }
        let p = pair.view_a.intensity.point_of_linear(idx);
        let q = pair.truth.apply(p.to_phys(sp));
        if q.z >= 0.0
            && q.z <= max_mm[0]
            && q.y >= 0.0
            && q.y <= max_mm[1]
            && q.x >= 0.0
            && q.x <= max_mm[2]
        {
            candidates.push(idx);
        }
    }
    if candidates.len() < n {
        return Err(Error::InvalidArgument(format!(
            "overlap too small: {} structure voxels available, {n} requested",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n {
        let j = rng.random_range(k..candidates.len());
        candidates.swap(k, j);
    }
    let mut pairs = Vec::with_capacity(n);
    for &idx in &candidates[..n] {
        let p = pair.view_a.intensity.point_of_linear(idx);
        let template = p.to_phys(sp);
        let truth_query = pair.truth.apply(template);
        let sid = pair.view_a.structure_ids[idx];
        let st = pair
            .view_a
            .structures
            .iter()
            .find(|s| s.id == sid)
            .expect("structure id consistent");
        pairs.push(Correspondence {
            template,
            truth_query,
            radius_mm: st.radius_mm,
            tag: format!("s{}c{}", st.id, st.class),
        });
    }
    Ok(CorrespondenceSet {
        pairs,
        transform: TransformSummary {
            rotation_deg: pair.params.rotation_deg,
            scale: pair.params.scale,
            translation_mm: pair.params.translation_mm,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> PhantomConfig {
        PhantomConfig {
            dims: [48, 48, 48],
            spacing_mm: 2.0,
            num_classes: 6,
            n_structures: 8,
        }
    }

    #[test]
    fn same_seed_same_phantom() {
        let cfg = small_cfg();
        let a = generate_phantom(&cfg, 7).unwrap();
        let b = generate_phantom(&cfg, 7).unwrap();
        assert_eq!(a.intensity.data(), b.intensity.data());
        assert_eq!(a.labels.data(), b.labels.data());
        assert_eq!(a.structures.len(), b.structures.len());
        let c = generate_phantom(&cfg, 8).unwrap();
        assert_ne!(a.intensity.data(), c.intensity.data());
    }

    #[test]
    fn zero_structures_is_pure_background() {
        let cfg = PhantomConfig {
            n_structures: 0,
            ..small_cfg()
        };
        let p = generate_phantom(&cfg, 3).unwrap();
        assert!(p.labels.data().iter().all(|&l| l == 0));
        assert!(p.structures.is_empty());
    }

    #[test]
    fn lookalike_classes_overlap_in_intensity() {
        let cfg = PhantomConfig {
            dims: [56, 56, 56],
            n_structures: 12,
            ..small_cfg()
        };
        let p = generate_phantom(&cfg, 11).unwrap();
        // histogram over shared range, 32 bins
        let collect = |class: u16| -> Vec<f64> {
            p.labels
                .data()
                .iter()
                .zip(p.intensity.data())
                .filter(|(&l, _)| l == class)
                .map(|(_, &v)| v as f64)
                .collect()
        };
        let c1 = collect(1);
        let c2 = collect(2);
        assert!(!c1.is_empty() && !c2.is_empty());
        let lo = c1.iter().chain(&c2).cloned().fold(f64::INFINITY, f64::min);
        let hi = c1.iter().chain(&c2).cloned().fold(f64::NEG_INFINITY, f64::max);
        let bins = 32;
        let hist = |vals: &[f64]| -> Vec<f64> {
            let mut h = vec![0.0f64; bins];
            for &v in vals {
                let b = (((v - lo) / (hi - lo + 1e-12)) * bins as f64) as usize;
                h[b.min(bins - 1)] += 1.0;
            }
            let n: f64 = h.iter().sum();
            h.iter().map(|&c| c / n).collect()
        };
        let (h1, h2) = (hist(&c1), hist(&c2));
        let bc: f64 = h1.iter().zip(&h2).map(|(&a, &b)| (a * b).sqrt()).sum();
        assert!(bc > 0.5, "Bhattacharyya coefficient {bc} too low");
    }

    #[test]
    fn structure_centroid_matches_declared_center() {
        let p = generate_phantom(&small_cfg(), 21).unwrap();
        let sp = p.intensity.spacing_mm();
        for st in &p.structures {
            let mut acc = [0.0f64; 3];
            let mut count = 0usize;
            for (idx, &sid) in p.structure_ids.iter().enumerate() {
                if sid == st.id {
                    let v = p.intensity.point_of_linear(idx);
                    acc[0] += v.z as f64 * sp[0];
                    acc[1] += v.y as f64 * sp[1];
                    acc[2] += v.x as f64 * sp[2];
                    count += 1;
                }
            }
            assert!(count > 0, "structure {} has no voxels", st.id);
            let centroid = PhysPoint::new(
                acc[0] / count as f64,
                acc[1] / count as f64,
                acc[2] / count as f64,
            );
            let dist = centroid.distance_to(st.center_mm);
            assert!(
                dist <= sp[0],
                "structure {} centroid off by {dist} mm",
                st.id
            );
        }
    }

    #[test]
    fn identity_augment_differs_only_by_noise_seed() {
        let p = generate_phantom(&small_cfg(), 9).unwrap();
        let mut params = AugmentParams::identity(5);
        params.noise_sigma = 0.02;
        let pair = augment(&p, &params).unwrap();
        // geometry is identity
        let probe = PhysPoint::new(30.0, 40.0, 50.0);
        let q = pair.truth.apply(probe);
        assert!((q.z - probe.z).abs() < 1e-12);
        assert!((q.y - probe.y).abs() < 1e-12);
        assert!((q.x - probe.x).abs() < 1e-12);
        // same underlying content, different noise
        assert_eq!(pair.view_a.labels.data(), pair.view_b.labels.data());
        assert_ne!(pair.view_a.intensity.data(), pair.view_b.intensity.data());
        // denoised difference is bounded by a few sigma
        let diff_max = pair
            .view_a
            .intensity
            .data()
            .iter()
            .zip(pair.view_b.intensity.data())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(diff_max < 0.02 * 12.0);
    }

    #[test]
    fn pure_translation_truth() {
        let p = generate_phantom(&small_cfg(), 13).unwrap();
        let mut params = AugmentParams::identity(5);
        params.translation_mm = [0.0, 0.0, 6.0];
        let pair = augment(&p, &params).unwrap();
        let probe = PhysPoint::new(20.0, 30.0, 40.0);
        let q = pair.truth.apply(probe);
        assert_eq!(q.to_array(), [20.0, 30.0, 46.0]);
    }

    #[test]
    fn composed_transform_matches_matrix_oracle() {
        let p = generate_phantom(&small_cfg(), 17).unwrap();
        let params = AugmentParams {
            rotation_deg: [8.0, -5.0, 12.0],
            scale: [1.1, 0.9, 1.05],
            translation_mm: [4.0, -6.0, 2.5],
            noise_sigma: 0.0,
            blur_sigma_vox: 0.0,
            seed: 1,
        };
        let pair = augment(&p, &params).unwrap();
        // independent oracle: rebuild the matrix from rotations applied in
        // sequence to basis vectors, then compare on random points
        let to_rad = std::f64::consts::PI / 180.0;
        let rot_z = |v: [f64; 3], a: f64| -> [f64; 3] {
            let (s, c) = (a * to_rad).sin_cos();
            [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
        };
        let rot_y = |v: [f64; 3], a: f64| -> [f64; 3] {
            let (s, c) = (a * to_rad).sin_cos();
            [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
        };
        let rot_x = |v: [f64; 3], a: f64| -> [f64; 3] {
            let (s, c) = (a * to_rad).sin_cos();
            [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = pair.truth.center_mm;
        for _ in 0..100 {
            let pt = [
                rng.random_range(0.0..94.0f64),
                rng.random_range(0.0..94.0f64),
                rng.random_range(0.0..94.0f64),
            ];
            let centered = [
                (pt[0] - center[0]) * params.scale[0],
                (pt[1] - center[1]) * params.scale[1],
                (pt[2] - center[2]) * params.scale[2],
            ];
            let rotated = rot_z(
                rot_y(rot_x(centered, params.rotation_deg[2]), params.rotation_deg[1]),
                params.rotation_deg[0],
            );
            let expect = [
                rotated[0] + center[0] + params.translation_mm[0],
                rotated[1] + center[1] + params.translation_mm[1],
                rotated[2] + center[2] + params.translation_mm[2],
            ];
            let got = pair.truth.apply(PhysPoint::new(pt[0], pt[1], pt[2]));
            for (g, e) in got.to_array().iter().zip(&expect) {
                assert!((g - e).abs() < 1e-9, "{got:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn dirac_marker_lands_where_truth_says() {
        // a bright voxel in an otherwise flat phantom must re-appear at the
        // truth-mapped location (within 1 voxel, interpolation-limited)
        let dims = [32usize, 32, 32];
        let sp = 2.0;
        let marker = VoxelPoint::new(14, 17, 12);
        let mut intensity = vec![0.0f32; dims[0] * dims[1] * dims[2]];
        let mi = (marker.z as usize * dims[1] + marker.y as usize) * dims[2] + marker.x as usize;
        intensity[mi] = 1.0;
        let phantom = Phantom {
            intensity: EmbeddingVolume::new(dims, 1, [sp; 3], intensity, false).unwrap(),
            labels: LabelVolume::new(dims, [sp; 3], vec![0; dims[0] * dims[1] * dims[2]], 1)
                .unwrap(),
            structure_ids: vec![0; dims[0] * dims[1] * dims[2]],
            structures: vec![],
        };
        let params = AugmentParams {
            rotation_deg: [6.0, -9.0, 3.0],
            scale: [1.1, 0.95, 1.0],
            translation_mm: [5.0, 3.0, -4.0],
            noise_sigma: 0.0,
            blur_sigma_vox: 0.0,
            seed: 2,
        };
        let pair = augment(&phantom, &params).unwrap();
        let (mut best, mut best_idx) = (f32::NEG_INFINITY, 0usize);
        for (i, &v) in pair.view_b.intensity.data().iter().enumerate() {
            if v > best {
                best = v;
                best_idx = i;
            }
        }
        let found = pair.view_b.intensity.point_of_linear(best_idx);
        let expected = pair.truth.apply(marker.to_phys([sp; 3]));
        let expected_vox = expected.to_voxel_coords([sp; 3]);
        let dist = ((found.z as f64 - expected_vox[0]).powi(2)
            + (found.y as f64 - expected_vox[1]).powi(2)
            + (found.x as f64 - expected_vox[2]).powi(2))
        .sqrt();
        assert!(dist <= 1.0, "marker at {found}, expected near {expected_vox:?}");
    }

    #[test]
    fn erase_structure_keeps_labels() {
        let p = generate_phantom(&small_cfg(), 31).unwrap();
        let st = &p.structures[0];
        let region = CorruptRegion {
            center_mm: st.center_mm,
            radius_mm: st.radius_mm,
        };
        let corrupted = corrupt_intensity(
            &p.intensity,
            &p.labels,
            &CorruptMode::EraseStructure,
            &region,
            5,
        )
        .unwrap();
        // intensity near the center is now background-like
        let sp = p.intensity.spacing_mm();
        let center_vox = st.center_mm.round_to_voxel(sp);
        let before = p.intensity.value_at(center_vox).unwrap();
        let after = corrupted.value_at(center_vox).unwrap();
        assert!(before > 0.5, "blob center should be bright, got {before}");
        assert!(after < 0.4, "erased center should be dim, got {after}");
    }

    #[test]
    fn intensity_shift_scales_region_mean() {
        let p = generate_phantom(&small_cfg(), 33).unwrap();
        let st = &p.structures[1];
        let region = CorruptRegion {
            center_mm: st.center_mm,
            radius_mm: st.radius_mm,
        };
        let shifted = corrupt_intensity(
            &p.intensity,
            &p.labels,
            &CorruptMode::IntensityShift { gain: 1.5 },
            &region,
            5,
        )
        .unwrap();
        let sp = p.intensity.spacing_mm();
        let dims = p.intensity.dims();
        let mut before = 0.0f64;
        let mut after = 0.0f64;
        let mut count = 0usize;
        let mut idx = 0;
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    let pt = PhysPoint::new(
                        z as f64 * sp[0],
                        y as f64 * sp[1],
                        x as f64 * sp[2],
                    );
                    if pt.distance_to(region.center_mm) <= region.radius_mm {
                        before += p.intensity.data()[idx] as f64;
                        after += shifted.data()[idx] as f64;
                        count += 1;
                    }
                    idx += 1;
                }
            }
        }
        assert!(count > 0);
        let ratio = after / before;
        assert!((ratio - 1.5).abs() < 0.015, "mean ratio {ratio}");
    }

    #[test]
    fn empty_region_is_identity_center_outside_errors() {
        let p = generate_phantom(&small_cfg(), 35).unwrap();
        let region = CorruptRegion {
            center_mm: PhysPoint::new(40.0, 40.0, 40.0),
            radius_mm: 0.0,
        };
        let out = corrupt_intensity(
            &p.intensity,
            &p.labels,
            &CorruptMode::IntensityShift { gain: 2.0 },
            &region,
            5,
        )
        .unwrap();
        // radius 0 touches exactly the center voxel if it sits on-grid; use
        // an off-grid center so nothing is strictly inside
        let off = CorruptRegion {
            center_mm: PhysPoint::new(40.1, 40.3, 40.7),
            radius_mm: 0.0,
        };
        let out2 = corrupt_intensity(
            &p.intensity,
            &p.labels,
            &CorruptMode::IntensityShift { gain: 2.0 },
            &off,
            5,
        )
        .unwrap();
        assert_eq!(out2.data(), p.intensity.data());
        drop(out);

        let outside = CorruptRegion {
            center_mm: PhysPoint::new(-5.0, 0.0, 0.0),
            radius_mm: 4.0,
        };
        assert!(corrupt_intensity(
            &p.intensity,
            &p.labels,
            &CorruptMode::EraseStructure,
            &outside,
            5
        )
        .is_err());
    }

    #[test]
    fn local_deform_updates_truth_exactly() {
        let p = generate_phantom(&small_cfg(), 37).unwrap();
        let params = AugmentParams::identity(3);
        let pair = augment(&p, &params).unwrap();
        let st = &p.structures[0];
        let region = CorruptRegion {
            center_mm: st.center_mm,
            radius_mm: 16.0,
        };
        let deformed = corrupt_pair(
            &pair,
            &CorruptMode::LocalDeform {
                displacement_mm: [3.0, -2.0, 1.5],
            },
            &region,
            5,
        )
        .unwrap();
        // the deformed truth satisfies q + d(q) = affine(p)
        let probe = st.center_mm;
        let q = deformed.truth.apply(probe);
        let d = deformed.truth.deforms[0].displacement_at(q.to_array());
        let affine_q = deformed.truth.apply_affine(probe);
        let recon = [q.z + d[0], q.y + d[1], q.x + d[2]];
        for (r, e) in recon.iter().zip(&affine_q.to_array()) {
            assert!((r - e).abs() < 1e-9);
        }
        // and the point actually moved
        assert!(q.distance_to(affine_q) > 1.0);
    }

    #[test]
    fn correspondences_are_consistent() {
        let p = generate_phantom(&small_cfg(), 41).unwrap();
        let mut params = AugmentParams::identity(2);
        params.translation_mm = [0.0, 0.0, 6.0];
        let pair = augment(&p, &params).unwrap();
        let set = sample_correspondences(&pair, 20, 9).unwrap();
        assert_eq!(set.pairs.len(), 20);
        for c in &set.pairs {
            let q = pair.truth.apply(c.template);
            assert!((q.z - c.truth_query.z).abs() < 1e-12);
            // pure translation: difference equals the translation
            assert!((c.truth_query.x - c.template.x - 6.0).abs() < 1e-12);
            assert!(c.radius_mm > 0.0);
        }
        // identity pair: truth equals template
        let id_pair = augment(&p, &AugmentParams::identity(2)).unwrap();
        let id_set = sample_correspondences(&id_pair, 10, 9).unwrap();
        for c in &id_set.pairs {
            assert_eq!(c.template.to_array(), c.truth_query.to_array());
        }
        // determinism
        let again = sample_correspondences(&pair, 20, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&set).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn correspondence_points_stay_in_bounds() {
        let p = generate_phantom(&small_cfg(), 43).unwrap();
        let cfg = AugmentConfig::default();
        let extent = [94.0, 94.0, 94.0];
        for seed in 0..10u64 {
            let params = sample_augment_params(&cfg, extent, seed).unwrap();
            let pair = augment(&p, &params).unwrap();
            let set = match sample_correspondences(&pair, 100, seed) {
                Ok(s) => s,
                Err(_) => continue, // overlap genuinely too small
            };
            for c in &set.pairs {
                for (v, hi) in c.template.to_array().iter().zip(&extent) {
                    assert!(*v >= 0.0 && v <= hi);
                }
                for (v, hi) in c.truth_query.to_array().iter().zip(&extent) {
                    assert!(*v >= 0.0 && v <= hi);
                }
            }
        }
    }

    #[test]
    fn overlap_too_small_errors() {
        let p = generate_phantom(&small_cfg(), 45).unwrap();
        let pair = augment(&p, &AugmentParams::identity(1)).unwrap();
        let total_structure_voxels = pair
            .view_a
            .structure_ids
            .iter()
            .filter(|&&s| s != 0)
            .count();
        assert!(
            sample_correspondences(&pair, total_structure_voxels + 1, 3).is_err()
        );
    }
}
