//! Contrastive losses with exact analytic gradients.
//!
//! * voxel-wise InfoNCE over positive pairs with per-anchor negative sets;
//! * prototypical supervised-contrastive loss over class prototypes, which
//!   costs `n*K` similarity evaluations instead of the `n*(n-1)` of the
//!   pairwise form (both counts are instrumented and reported);
//! * hard-negative selection.
//!
//! Inputs are assumed pre-normalized; no normalization layer hides inside a
//! loss, so gradients are plain partials with respect to the embedding
//! entries. Prototypes are differentiated through (full chain rule).
//! Log-sum-exp uses max subtraction, and every reduction runs in a fixed
//! order, so values are deterministic.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_rows_unit_norm(rows: &[f64], channels: usize, what: &str) -> Result<()> {
    for (i, row) in rows.chunks(channels).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} row {i}")));
        }
        let norm = dot(row, row).sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "{what} row {i} has norm {norm}, expected 1 within 1e-4"
            )));
        }
    }
    Ok(())
}

/// Positive pairs plus per-anchor negatives for the appearance loss.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pos_a: Vec<f64>,
    pos_b: Vec<f64>,
    negatives: Vec<f64>,
    n_pos: usize,
    n_neg: usize,
    channels: usize,
    tau: f64,
}

impl PairBatch {
    /// `pos_a`/`pos_b` are `n_pos x channels` row-major; `negatives` is
    /// `n_pos x n_neg x channels`. All rows must be unit-norm to 1e-4.
    pub fn new(
        pos_a: Vec<f64>,
        pos_b: Vec<f64>,
        negatives: Vec<f64>,
        n_pos: usize,
        n_neg: usize,
        channels: usize,
        tau: f64,
    ) -> Result<Self> {
        if n_pos == 0 {
            return Err(Error::InvalidArgument("n_pos must be >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        if pos_a.len() != n_pos * channels || pos_b.len() != n_pos * channels {
            return Err(Error::InvalidArgument(format!(
                "positive matrices must be {n_pos}x{channels}"
            )));
        }
        if negatives.len() != n_pos * n_neg * channels {
            return Err(Error::InvalidArgument(format!(
                "negatives must be {n_pos}x{n_neg}x{channels}"
            )));
        }
        check_rows_unit_norm(&pos_a, channels, "pos_a")?;
        check_rows_unit_norm(&pos_b, channels, "pos_b")?;
        if channels > 0 && n_neg > 0 {
            check_rows_unit_norm(&negatives, channels, "negatives")?;
        }
        Ok(PairBatch {
            pos_a,
            pos_b,
            negatives,
            n_pos,
            n_neg,
            channels,
            tau,
        })
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pos_a(&self) -> &[f64] {
        &self.pos_a
    }

    pub fn pos_b(&self) -> &[f64] {
        &self.pos_b
    }

    pub fn negatives(&self) -> &[f64] {
        &self.negatives
    }

    fn anchor(&self, i: usize) -> &[f64] {
        &self.pos_a[i * self.channels..(i + 1) * self.channels]
    }

    fn positive(&self, i: usize) -> &[f64] {
        &self.pos_b[i * self.channels..(i + 1) * self.channels]
    }

    fn negative(&self, i: usize, j: usize) -> &[f64] {
        let base = (i * self.n_neg + j) * self.channels;
        &self.negatives[base..base + self.channels]
    }
}

/// Loss value plus exact gradients, shaped like the batch.
#[derive(Debug, Clone)]
pub struct InfoNceOutput {
    pub loss: f64,
    pub grad_pos_a: Vec<f64>,
    pub grad_pos_b: Vec<f64>,
    pub grad_negatives: Vec<f64>,
}

/// Voxel-wise InfoNCE:
/// `-sum_i log( exp(s_ii'/tau) / (exp(s_ii'/tau) + sum_j exp(s_ij/tau)) )`.
pub fn infonce_loss(batch: &PairBatch) -> InfoNceOutput {
    let c = batch.channels;
    let tau = batch.tau;
    let mut loss = 0.0;
    let mut grad_pos_a = vec![0.0; batch.pos_a.len()];
    let mut grad_pos_b = vec![0.0; batch.pos_b.len()];
    let mut grad_negatives = vec![0.0; batch.negatives.len()];
    let mut neg_logits = vec![0.0f64; batch.n_neg];
    for i in 0..batch.n_pos {
        let a = batch.anchor(i);
        let b = batch.positive(i);
        let pos_logit = dot(a, b) / tau;
        let mut max_logit = pos_logit;
        for j in 0..batch.n_neg {
            let l = dot(a, batch.negative(i, j)) / tau;
            neg_logits[j] = l;
            max_logit = max_logit.max(l);
        }
        let mut z = (pos_logit - max_logit).exp();
        for &l in &neg_logits[..batch.n_neg] {
            z += (l - max_logit).exp();
        }
        loss += max_logit + z.ln() - pos_logit;

        let p_pos = (pos_logit - max_logit).exp() / z;
        // d loss / d s_plus = (p_pos - 1) / tau; d loss / d s_j = p_j / tau
        let w_pos = (p_pos - 1.0) / tau;
        let ga = &mut grad_pos_a[i * c..(i + 1) * c];
        for (g, &bv) in ga.iter_mut().zip(b) {
            *g += w_pos * bv;
        }
        let gb = &mut grad_pos_b[i * c..(i + 1) * c];
        for (g, &av) in gb.iter_mut().zip(a) {
            *g = w_pos * av;
        }
        for j in 0..batch.n_neg {
            let p_j = (neg_logits[j] - max_logit).exp() / z;
            let w = p_j / tau;
            let neg = batch.negative(i, j);
            for k in 0..c {
                grad_pos_a[i * c + k] += w * neg[k];
            }
            let gn = &mut grad_negatives[(i * batch.n_neg + j) * c..(i * batch.n_neg + j + 1) * c];
            for (g, &av) in gn.iter_mut().zip(a) {
                *g = w * av;
            }
        }
    }
    InfoNceOutput {
        loss,
        grad_pos_a,
        grad_pos_b,
        grad_negatives,
    }
}

/// Labeled embeddings for the semantic loss. Labels live in `[0, K)` and
/// every class must be populated.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    embeddings: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    channels: usize,
    tau: f64,
}

impl LabeledBatch {
    pub fn new(
        embeddings: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        channels: usize,
        tau: f64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("batch must be non-empty".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        if embeddings.len() != labels.len() * channels {
            return Err(Error::InvalidArgument(format!(
                "embeddings must be {}x{channels}",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {l} outside [0, {num_classes})"
                )));
            }
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "class {empty} has zero members"
            )));
        }
        check_rows_unit_norm(&embeddings, channels, "embeddings")?;
        Ok(LabeledBatch {
            embeddings,
            labels,
            num_classes,
            channels,
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.channels..(i + 1) * self.channels]
    }

    fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Class prototypes: row `p` is the arithmetic mean of the class-`p`
/// embeddings. Not re-normalized.
pub fn prototypes(batch: &LabeledBatch) -> Vec<f64> {
    let c = batch.channels;
    let mut protos = vec![0.0f64; batch.num_classes * c];
    let counts = batch.class_counts();
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = batch.row(i);
        let dst = &mut protos[label * c..(label + 1) * c];
        for (d, &v) in dst.iter_mut().zip(row) {
            *d += v;
        }
    }
    for (p, &count) in counts.iter().enumerate() {
        let dst = &mut protos[p * c..(p + 1) * c];
        for d in dst.iter_mut() {
            *d /= count as f64;
        }
    }
    protos
}

#[derive(Debug, Clone)]
pub struct SupConOutput {
    pub loss: f64,
    /// `n x channels` gradient with the prototype dependency chained through.
    pub grads: Vec<f64>,
    /// Number of prototype-sample inner products evaluated (exactly `n*K`).
    pub sim_evals: u64,
}

/// Prototypical supervised-contrastive loss:
/// `sum_p -(1/n_p) sum_i log( exp(c_p.x_i^p/tau) / sum_o sum_a exp(c_p.x_a^o/tau) )`.
///
/// The denominator is anchored on the class prototype `c_p` and ranges over
/// every sample in the batch, numerator term included.
pub fn prototypical_supcon_loss(batch: &LabeledBatch) -> SupConOutput {
    let n = batch.len();
    let k = batch.num_classes;
    let c = batch.channels;
    let tau = batch.tau;
    let counts = batch.class_counts();
    let protos = prototypes(batch);

    // the only inner products in this loss: the K x n prototype-sample matrix
    let mut sims = vec![0.0f64; k * n];
    let mut sim_evals = 0u64;
    for p in 0..k {
        let proto = &protos[p * c..(p + 1) * c];
        for a in 0..n {
            sims[p * n + a] = dot(proto, batch.row(a));
            sim_evals += 1;
        }
    }

    // per-class log-sum-exp over all samples, softmax weights, weighted means
    let mut loss = 0.0;
    let mut weights = vec![0.0f64; k * n];
    let mut weighted_mean = vec![0.0f64; k * c];
    for p in 0..k {
        let row = &sims[p * n..(p + 1) * n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
        let mut z = 0.0;
        for a in 0..n {
            z += (row[a] / tau - m).exp();
        }
        let lse = m + z.ln();
        // numerator part: mean of same-class similarities
        let mut num = 0.0;
        for (a, &label) in batch.labels.iter().enumerate() {
            if label == p {
                num += row[a] / tau;
            }
        }
        loss += lse - num / counts[p] as f64;
        for a in 0..n {
            let w = (row[a] / tau - m).exp() / z;
            weights[p * n + a] = w;
            let x = batch.row(a);
            let dst = &mut weighted_mean[p * c..(p + 1) * c];
            for (d, &v) in dst.iter_mut().zip(x) {
                *d += w * v;
            }
        }
    }

    // grad_m = (1/tau) [ sum_p w_{p,m} c_p + (1/n_q)(wmean_q - 2 c_q) ], q = label(m)
    let mut grads = vec![0.0f64; n * c];
    for m_i in 0..n {
        let q = batch.labels[m_i];
        let g = &mut grads[m_i * c..(m_i + 1) * c];
        for p in 0..k {
            let w = weights[p * n + m_i];
            let proto = &protos[p * c..(p + 1) * c];
            for (gv, &pv) in g.iter_mut().zip(proto) {
                *gv += w * pv;
            }
        }
        let nq = counts[q] as f64;
        let wm = &weighted_mean[q * c..(q + 1) * c];
        let cq = &protos[q * c..(q + 1) * c];
        for ((gv, &wv), &cv) in g.iter_mut().zip(wm).zip(cq) {
            *gv = (*gv + (wv - 2.0 * cv) / nq) / tau;
        }
    }

    SupConOutput {
        loss,
        grads,
        sim_evals,
    }
}

#[derive(Debug, Clone)]
pub struct RefSupConOutput {
    pub loss: f64,
    /// Number of sample-sample inner products evaluated (exactly `n*(n-1)`).
    pub sim_evals: u64,
}

/// Pairwise supervised-contrastive loss, kept as the complexity baseline.
/// Anchors whose class has no other member contribute zero.
pub fn supcon_reference_loss(batch: &LabeledBatch) -> Result<RefSupConOutput> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "pairwise SupCon needs at least 2 samples".into(),
        ));
    }
    let tau = batch.tau;
    let mut loss = 0.0;
    let mut sim_evals = 0u64;
    let mut logits = Vec::with_capacity(n - 1);
    for i in 0..n {
        logits.clear();
        let xi = batch.row(i);
        for a in 0..n {
            if a == i {
                continue;
            }
            logits.push((a, dot(xi, batch.row(a)) / tau));
            sim_evals += 1;
        }
        let positives: Vec<usize> = (0..logits.len())
            .filter(|&j| batch.labels[logits[j].0] == batch.labels[i])
            .collect();
        if positives.is_empty() {
            continue;
        }
        let m = logits
            .iter()
            .map(|&(_, l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|&(_, l)| (l - m).exp()).sum();
        let lse = m + z.ln();
        let mut anchor_loss = 0.0;
        for &j in &positives {
            anchor_loss += lse - logits[j].1;
        }
        loss += anchor_loss / positives.len() as f64;
    }
    Ok(RefSupConOutput { loss, sim_evals })
}

/// Indices of `n_hard` most-similar candidates (ties to the lowest index)
/// followed by `n_random` uniform draws from the remainder. Deterministic
/// given `seed`.
pub fn select_hard_negatives(
    anchor: &[f64],
    candidates: &[f64],
    m: usize,
    n_hard: usize,
    n_random: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let c = anchor.len();
    if candidates.len() != m * c {
        return Err(Error::InvalidArgument(format!(
            "candidates must be {m}x{c}"
        )));
    }
    if n_hard + n_random > m {
        return Err(Error::InvalidArgument(format!(
            "requested {n_hard}+{n_random} negatives from {m} candidates"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let sims: Vec<f64> = (0..m)
        .map(|i| dot(anchor, &candidates[i * c..(i + 1) * c]))
        .collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order[..n_hard].to_vec();
    let mut remainder: Vec<usize> = order[n_hard..].to_vec();
    remainder.sort_unstable();
    // partial Fisher-Yates keeps the draw independent of rand's sampler details
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n_random {
        let j = rng.random_range(k..remainder.len());
        remainder.swap(k, j);
        selected.push(remainder[k]);
    }
    Ok(selected)
}
