//! Structural matching by forward-backward fixed points.
//!
//! The forward-backward map `f` sends a template point through A->B
//! nearest-neighbor matching and back B->A. Mutually consistent matches are
//! exactly the fixed points of `f`. Matching a template point proceeds by
//! iterating `f` from every voxel of an L^3 cube around it, keeping the
//! traces that converge with a small start-to-fixed-point offset, fitting a
//! local least-squares linear map on those stable pairs, and averaging the
//! per-point predictions.
//!
//! All aggregation runs in deterministic cube order; the whole pipeline is
//! bitwise reproducible.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PhysPoint, VoxelPoint};
use crate::similarity::{nn_match_vec, SearchRegion};
use crate::volume::EmbeddingVolume;

/// One fixed-point iteration trace.
///
/// `sequence` records one `(t_i, q_i)` pair per application of `f`; `terminal`
/// is the forward-backward consistent pair at convergence, or the pair of the
/// last application otherwise. `offset` is `||start - terminal.0||` in voxels.
#[derive(Debug, Clone, Serialize)]
pub struct FBTrace {
    pub start: VoxelPoint,
    pub sequence: Vec<(VoxelPoint, VoxelPoint)>,
    pub converged: bool,
    pub n_fix: usize,
    pub offset: f64,
    pub terminal: (VoxelPoint, VoxelPoint),
}

/// Least-squares linear map fitted on centered stable pairs.
#[derive(Debug, Clone, Serialize)]
pub struct AffineEstimate {
    /// Maps centered template-side offsets to centered query-side offsets.
    pub matrix: [[f64; 3]; 3],
    pub f_centroid: [f64; 3],
    pub g_centroid: [f64; 3],
    pub n_points: usize,
    pub residual_rms: f64,
    /// True when the scatter matrix was singular and null directions fell
    /// back to identity behavior.
    pub rank_deficient: bool,
}

/// Outcome of [`estimate_affine`]: a fit, or a signal that the caller should
/// fall back (too few stable points is expected, not a failure).
#[derive(Debug, Clone)]
pub enum AffineFit {
    Fit(AffineEstimate),
    Insufficient { n_points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    #[serde(rename = "nn")]
    Nn,
    #[serde(rename = "fixedpoint")]
    FixedPoint,
}

/// How the final prediction was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMethod {
    #[serde(rename = "nn")]
    Nn,
    #[serde(rename = "fixedpoint")]
    FixedPoint,
    #[serde(rename = "fixedpoint-fallback-nn")]
    FixedPointFallbackNn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub mode: MatchMode,
    /// Cube side length L (odd).
    pub cube_l: usize,
    /// Offset threshold in voxels for trusting a fixed point.
    pub tau_dis: f64,
    pub max_iter: usize,
    /// Stable points required for the full linear fit; below this a
    /// translation-only fallback applies.
    pub min_points: usize,
    /// Weight of the appearance half when composing unified embeddings.
    pub lambda: f64,
    /// Keep per-trace diagnostics in the result.
    pub collect_traces: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            mode: MatchMode::FixedPoint,
            cube_l: 5,
            tau_dis: 2.0,
            max_iter: 20,
            min_points: 4,
            lambda: 0.5,
            collect_traces: false,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cube_l == 0 || self.cube_l % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "cube_l must be odd and >= 1, got {}",
                self.cube_l
            )));
        }
        if !(self.tau_dis > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau_dis must be > 0, got {}",
                self.tau_dis
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if self.min_points == 0 {
            return Err(Error::InvalidArgument("min_points must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Final prediction plus diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    /// Continuous voxel-space prediction, clamped into the query volume.
    pub voxel_real: [f64; 3],
    /// Nearest integer voxel of `voxel_real`.
    pub voxel: VoxelPoint,
    /// Millimeter prediction (`voxel_real` scaled by the query spacing).
    pub mm: PhysPoint,
    pub clamped: bool,
    pub method: MatchMethod,
    /// Set when 1..min_points stable points forced the identity-matrix
    /// (translation-only) local model.
    pub translation_only: bool,
    pub n_stable: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nn_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<FBTrace>>,
}

/// Memoizing engine for the forward-backward step over one volume pair.
/// `f` is pure, so caching changes nothing observable. Both payloads are
/// widened to f64 once up front; scores use the crate-wide reduction tree,
/// so they equal the plain [`nn_match_vec`] scores bit-for-bit.
struct FbEngine<'a> {
    vol_a: &'a EmbeddingVolume,
    vol_b: &'a EmbeddingVolume,
    data_a: Vec<f64>,
    data_b: Vec<f64>,
    cache: HashMap<VoxelPoint, (VoxelPoint, VoxelPoint)>,
}

impl<'a> FbEngine<'a> {
    fn new(vol_a: &'a EmbeddingVolume, vol_b: &'a EmbeddingVolume) -> Result<Self> {
        if vol_a.channels() != vol_b.channels() {
            return Err(Error::ChannelMismatch {
                left: vol_a.channels(),
                right: vol_b.channels(),
            });
        }
        if !vol_a.is_normalized() || !vol_b.is_normalized() {
            return Err(Error::InvalidArgument(
                "matching requires normalized volumes".into(),
            ));
        }
        Ok(FbEngine {
            vol_a,
            vol_b,
            data_a: vol_a.data().iter().map(|&v| v as f64).collect(),
            data_b: vol_b.data().iter().map(|&v| v as f64).collect(),
            cache: HashMap::new(),
        })
    }

    /// Whole-volume argmax with the smallest-linear-index tie rule.
    fn scan(template: &[f64], data: &[f64]) -> usize {
        let c = template.len();
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0usize;
        for (i, chunk) in data.chunks_exact(c).enumerate() {
            let s = crate::similarity::dot_f64(template, chunk);
            if s > best {
                best = s;
                best_idx = i;
            }
        }
        best_idx
    }

    /// One application of `f`: returns `(t_next, q)`.
    fn step(&mut self, t: VoxelPoint) -> Result<(VoxelPoint, VoxelPoint)> {
        if let Some(&hit) = self.cache.get(&t) {
            return Ok(hit);
        }
        self.vol_a.check_bounds(t)?;
        let c = self.vol_a.channels();
        let ti = self.vol_a.linear_index(t);
        let q_idx = Self::scan(&self.data_a[ti * c..(ti + 1) * c], &self.data_b);
        let t_idx = Self::scan(&self.data_b[q_idx * c..(q_idx + 1) * c], &self.data_a);
        let q = self.vol_b.point_of_linear(q_idx);
        let t_next = self.vol_a.point_of_linear(t_idx);
        self.cache.insert(t, (t_next, q));
        Ok((t_next, q))
    }
}

/// One forward-backward round trip: `t -> q` (NN into B), `q -> t_next`
/// (NN back into A).
pub fn forward_backward(
    t: VoxelPoint,
    vol_a: &EmbeddingVolume,
    vol_b: &EmbeddingVolume,
) -> Result<(VoxelPoint, VoxelPoint)> {
    FbEngine::new(vol_a, vol_b)?.step(t)
}

/// Iteration core, generic over the step function so the cycle-handling
/// logic can be exercised with synthetic maps in tests.
fn iterate_with(
    t0: VoxelPoint,
    max_iter: usize,
    mut step: impl FnMut(VoxelPoint) -> Result<(VoxelPoint, VoxelPoint)>,
) -> Result<FBTrace> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let mut seen = vec![t0];
    let mut cur = t0;
    let mut sequence = Vec::new();
    for applications in 1..=max_iter {
        let (t_next, q) = step(cur)?;
        sequence.push((cur, q));
        if t_next == cur {
            let offset = t0.distance_to(cur);
            return Ok(FBTrace {
                start: t0,
                sequence,
                converged: true,
                n_fix: applications,
                offset,
                terminal: (cur, q),
            });
        }
        if seen.contains(&t_next) {
            // revisiting a previous non-fixed point: a cycle, not a fixed point
            let offset = t0.distance_to(cur);
            return Ok(FBTrace {
                start: t0,
                sequence,
                converged: false,
                n_fix: applications,
                offset,
                terminal: (cur, q),
            });
        }
        seen.push(t_next);
        cur = t_next;
    }
    let last = *sequence.last().expect("max_iter >= 1");
    Ok(FBTrace {
        start: t0,
        sequence,
        converged: false,
        n_fix: max_iter,
        offset: t0.distance_to(cur),
        terminal: last,
    })
}

/// Iterates `f` from `t0` until the point stops changing, a cycle is
/// detected, or `max_iter` applications have run.
pub fn iterate_to_fixed_point(
    t0: VoxelPoint,
    vol_a: &EmbeddingVolume,
    vol_b: &EmbeddingVolume,
    max_iter: usize,
) -> Result<FBTrace> {
    let mut engine = FbEngine::new(vol_a, vol_b)?;
    iterate_with(t0, max_iter, |t| engine.step(t))
}

/// Runs the fixed-point iteration from every voxel of the L^3 cube centered
/// at `t0` (clipped to the volume), in z-major cube order.
pub fn cube_fixed_points(
    t0: VoxelPoint,
    vol_a: &EmbeddingVolume,
    vol_b: &EmbeddingVolume,
    cube_l: usize,
    max_iter: usize,
) -> Result<Vec<FBTrace>> {
    if cube_l == 0 || cube_l % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "cube side must be odd and >= 1, got {cube_l}"
        )));
    }
    vol_a.check_bounds(t0)?;
    let half = (cube_l as i64 - 1) / 2;
    let mut engine = FbEngine::new(vol_a, vol_b)?;
    let mut traces = Vec::new();
    for dz in -half..=half {
        for dy in -half..=half {
            for dx in -half..=half {
                let p = VoxelPoint::new(t0.z + dz, t0.y + dy, t0.x + dx);
                if !vol_a.contains(p) {
                    continue; // cube clipped at volume borders
                }
                traces.push(iterate_with(p, max_iter, |t| engine.step(t))?);
            }
        }
    }
    Ok(traces)
}

/// Keeps converged traces with offset strictly below `tau_dis`, preserving
/// order. Non-converged traces are dropped regardless of offset.
pub fn filter_stable(traces: &[FBTrace], tau_dis: f64) -> Vec<FBTrace> {
    assert!(tau_dis > 0.0, "tau_dis must be > 0");
    traces
        .iter()
        .filter(|t| t.converged && t.offset < tau_dis)
        .cloned()
        .collect()
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
fn sym_eigen_3x3(m: &[[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = *m;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if off <= 1e-15 * scale.max(1e-300) {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() <= 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J on rows/cols p and q
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

fn point_as_f64(p: VoxelPoint) -> [f64; 3] {
    p.as_f64()
}

/// Least-squares fit of the local linear map on centered stable pairs.
///
/// Minimizes `sum_k ||(g_k - g_bar) - A (f_k - f_bar)||^2` via the normal
/// equations `A = C S^+`, where `S` is the 3x3 scatter of centered template
/// points and `C` the cross-scatter. Null directions of a singular `S` get
/// identity behavior, so coplanar or degenerate stable sets never fail.
pub fn estimate_affine(stable: &[FBTrace], min_points: usize) -> AffineFit {
    let n = stable.len();
    if n < min_points {
        return AffineFit::Insufficient { n_points: n };
    }
    let nf = n as f64;
    let mut f_centroid = [0.0; 3];
    let mut g_centroid = [0.0; 3];
    for tr in stable {
        let f = point_as_f64(tr.terminal.0);
        let g = point_as_f64(tr.terminal.1);
        for a in 0..3 {
            f_centroid[a] += f[a];
            g_centroid[a] += g[a];
        }
    }
    for a in 0..3 {
        f_centroid[a] /= nf;
        g_centroid[a] /= nf;
    }
    let mut scatter = [[0.0f64; 3]; 3]; // S = sum X X^T
    let mut cross = [[0.0f64; 3]; 3]; // C = sum Y X^T
    for tr in stable {
        let f = point_as_f64(tr.terminal.0);
        let g = point_as_f64(tr.terminal.1);
        let x = [f[0] - f_centroid[0], f[1] - f_centroid[1], f[2] - f_centroid[2]];
        let y = [g[0] - g_centroid[0], g[1] - g_centroid[1], g[2] - g_centroid[2]];
        for r in 0..3 {
            for c in 0..3 {
                scatter[r][c] += x[r] * x[c];
                cross[r][c] += y[r] * x[c];
            }
        }
    }
    let (eigvals, eigvecs) = sym_eigen_3x3(&scatter);
    let max_eig = eigvals.iter().cloned().fold(0.0f64, f64::max);
    let tol = (max_eig * 1e-12).max(1e-12);
    // S^+ and the projector P onto range(S)
    let mut pinv = [[0.0f64; 3]; 3];
    let mut proj = [[0.0f64; 3]; 3];
    let mut rank = 0;
    for k in 0..3 {
        if eigvals[k] > tol {
            rank += 1;
            for r in 0..3 {
                for c in 0..3 {
                    let uu = eigvecs[r][k] * eigvecs[c][k];
                    pinv[r][c] += uu / eigvals[k];
                    proj[r][c] += uu;
                }
            }
        }
    }
    // A = C S^+ + (I - P): least squares on range(S), identity on null(S)
    let mut matrix = [[0.0f64; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut cs = 0.0;
            for k in 0..3 {
                cs += cross[r][k] * pinv[k][c];
            }
            let identity = if r == c { 1.0 } else { 0.0 };
            matrix[r][c] = cs + (identity - proj[r][c]);
        }
    }
    let mut sq_sum = 0.0;
    for tr in stable {
        let f = point_as_f64(tr.terminal.0);
        let g = point_as_f64(tr.terminal.1);
        let x = [f[0] - f_centroid[0], f[1] - f_centroid[1], f[2] - f_centroid[2]];
        let y = [g[0] - g_centroid[0], g[1] - g_centroid[1], g[2] - g_centroid[2]];
        let ax = mat_vec(&matrix, x);
        for a in 0..3 {
            let r = y[a] - ax[a];
            sq_sum += r * r;
        }
    }
    AffineFit::Fit(AffineEstimate {
        matrix,
        f_centroid,
        g_centroid,
        n_points: n,
        residual_rms: (sq_sum / nf).sqrt(),
        rank_deficient: rank < 3,
    })
}

/// Residual of one stable pair against a fit, in voxels.
fn pair_residual(tr: &FBTrace, fit: &AffineEstimate) -> f64 {
    let f = point_as_f64(tr.terminal.0);
    let g = point_as_f64(tr.terminal.1);
    let x = [
        f[0] - fit.f_centroid[0],
        f[1] - fit.f_centroid[1],
        f[2] - fit.f_centroid[2],
    ];
    let y = [
        g[0] - fit.g_centroid[0],
        g[1] - fit.g_centroid[1],
        g[2] - fit.g_centroid[2],
    ];
    let ax = mat_vec(&fit.matrix, x);
    ((y[0] - ax[0]).powi(2) + (y[1] - ax[1]).powi(2) + (y[2] - ax[2]).powi(2)).sqrt()
}

/// Fits the local model on the largest self-consistent subset of the stable
/// pairs: estimate, drop pairs whose residual exceeds a median-based
/// threshold, re-estimate. Ambiguous appearance can split the stable set
/// into several coherent correspondence modes (the template's structure and
/// a look-alike elsewhere); a plain least-squares fit over such a mixture is
/// meaningless, while the dominant mode survives the trim.
///
/// Returns the fit and the pairs that produced it. Deterministic; coherent
/// stable sets (residuals within a voxel) pass through unchanged.
pub fn estimate_affine_consensus(
    stable: &[FBTrace],
    min_points: usize,
) -> (AffineFit, Vec<FBTrace>) {
    let mut selected: Vec<FBTrace> = stable.to_vec();
    let mut fit = estimate_affine(&selected, min_points);
    for _ in 0..3 {
        let est = match &fit {
            AffineFit::Fit(est) => est,
            AffineFit::Insufficient { .. } => break,
        };
        let mut residuals: Vec<f64> = selected.iter().map(|tr| pair_residual(tr, est)).collect();
        let mut sorted = residuals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let threshold = (2.5 * median).max(1.0);
        let keep: Vec<FBTrace> = selected
            .iter()
            .zip(&residuals)
            .filter(|(_, &r)| r <= threshold)
            .map(|(tr, _)| tr.clone())
            .collect();
        residuals.clear();
        if keep.len() == selected.len() || keep.len() < min_points {
            break;
        }
        selected = keep;
        fit = estimate_affine(&selected, min_points);
    }
    (fit, selected)
}

/// Per-point prediction `g_k + A (t0 - f_k)`, averaged over all stable
/// points. By linearity this equals `g_bar + A (t0 - f_bar)`; both routes are
/// computed and must agree to 1e-9.
pub fn predict_query(t0: VoxelPoint, stable: &[FBTrace], affine: &AffineEstimate) -> Result<[f64; 3]> {
    if stable.is_empty() {
        return Err(Error::InvalidArgument(
            "predict_query needs at least one stable point".into(),
        ));
    }
    let t = point_as_f64(t0);
    let mut mean = [0.0f64; 3];
    for tr in stable {
        let f = point_as_f64(tr.terminal.0);
        let g = point_as_f64(tr.terminal.1);
        let d = [t[0] - f[0], t[1] - f[1], t[2] - f[2]];
        let ad = mat_vec(&affine.matrix, d);
        for a in 0..3 {
            mean[a] += g[a] + ad[a];
        }
    }
    let nf = stable.len() as f64;
    for a in 0..3 {
        mean[a] /= nf;
    }
    let centered = [
        t[0] - affine.f_centroid[0],
        t[1] - affine.f_centroid[1],
        t[2] - affine.f_centroid[2],
    ];
    let ac = mat_vec(&affine.matrix, centered);
    for a in 0..3 {
        let direct = affine.g_centroid[a] + ac[a];
        debug_assert!(
            (mean[a] - direct).abs() <= 1e-9,
            "mean-prediction identity violated: {} vs {}",
            mean[a],
            direct
        );
    }
    Ok(mean)
}

fn finish_result(
    prediction: [f64; 3],
    query: &EmbeddingVolume,
    method: MatchMethod,
    translation_only: bool,
    n_stable: usize,
    affine: Option<AffineEstimate>,
    nn_score: Option<f64>,
    traces: Option<Vec<FBTrace>>,
) -> MatchResult {
    let dims = query.dims();
    let mut voxel_real = prediction;
    let mut clamped = false;
    for a in 0..3 {
        let max = (dims[a] - 1) as f64;
        let c = voxel_real[a].clamp(0.0, max);
        if c != voxel_real[a] {
            clamped = true;
            voxel_real[a] = c;
        }
    }
    let voxel = VoxelPoint::new(
        voxel_real[0].round() as i64,
        voxel_real[1].round() as i64,
        voxel_real[2].round() as i64,
    );
    let spacing = query.spacing_mm();
    let mm = PhysPoint::new(
        voxel_real[0] * spacing[0],
        voxel_real[1] * spacing[1],
        voxel_real[2] * spacing[2],
    );
    MatchResult {
        voxel_real,
        voxel,
        mm,
        clamped,
        method,
        translation_only,
        n_stable,
        affine,
        nn_score,
        traces,
    }
}

/// Full matcher entry point.
///
/// `mode = nn` wraps a plain nearest-neighbor match. `mode = fixedpoint` runs
/// cube iteration, stability filtering, the local fit and prediction
/// averaging; degenerate situations step down to a translation-only model
/// (1..min_points stable points) and finally to plain NN (zero stable
/// points) without erroring.
pub fn match_point(
    t: VoxelPoint,
    vol_a: &EmbeddingVolume,
    vol_b: &EmbeddingVolume,
    cfg: &MatcherConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    vol_a.check_bounds(t)?;
    match cfg.mode {
        MatchMode::Nn => {
            let tv = vol_a.embedding_at(t)?;
            let (p, score) = nn_match_vec(tv, vol_b, &SearchRegion::whole())?;
            Ok(finish_result(
                p.as_f64(),
                vol_b,
                MatchMethod::Nn,
                false,
                0,
                None,
                Some(score.value()),
                None,
            ))
        }
        MatchMode::FixedPoint => {
            let traces = cube_fixed_points(t, vol_a, vol_b, cfg.cube_l, cfg.max_iter)?;
            let stable = filter_stable(&traces, cfg.tau_dis);
            let n_stable = stable.len();
            let kept = cfg.collect_traces.then(|| traces.clone());
            if n_stable == 0 {
                let tv = vol_a.embedding_at(t)?;
                let (p, score) = nn_match_vec(tv, vol_b, &SearchRegion::whole())?;
                return Ok(finish_result(
                    p.as_f64(),
                    vol_b,
                    MatchMethod::FixedPointFallbackNn,
                    false,
                    0,
                    None,
                    Some(score.value()),
                    kept,
                ));
            }
            let (fit, consensus) = estimate_affine_consensus(&stable, cfg.min_points);
            match fit {
                AffineFit::Fit(est) => {
                    let pred = predict_query(t, &consensus, &est)?;
                    Ok(finish_result(
                        pred,
                        vol_b,
                        MatchMethod::FixedPoint,
                        false,
                        n_stable,
                        Some(est),
                        None,
                        kept,
                    ))
                }
                AffineFit::Insufficient { .. } => {
                    // translation-only: A = identity on centered coordinates
                    let nf = n_stable as f64;
                    let mut f_bar = [0.0f64; 3];
                    let mut g_bar = [0.0f64; 3];
                    for tr in &stable {
                        let f = point_as_f64(tr.terminal.0);
                        let g = point_as_f64(tr.terminal.1);
                        for a in 0..3 {
                            f_bar[a] += f[a];
                            g_bar[a] += g[a];
                        }
                    }
                    let tq = t.as_f64();
                    let pred = [
                        g_bar[0] / nf + (tq[0] - f_bar[0] / nf),
                        g_bar[1] / nf + (tq[1] - f_bar[1] / nf),
                        g_bar[2] / nf + (tq[2] - f_bar[2] / nf),
                    ];
                    Ok(finish_result(
                        pred,
                        vol_b,
                        MatchMethod::FixedPoint,
                        true,
                        n_stable,
                        None,
                        None,
                        kept,
                    ))
                }
            }
        }
    }
}
