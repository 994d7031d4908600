//! Self-verification harness behind the `loss-check` command: seeded
//! finite-difference gradient checks for both losses, closed-form value
//! checks, and the similarity-evaluation complexity table.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::losses::{
    infonce_loss, prototypical_supcon_loss, supcon_reference_loss, LabeledBatch, PairBatch,
};

#[derive(Debug, Clone)]
pub struct LossCheckConfig {
    pub seed: u64,
    /// Total random batches across both losses.
    pub batches: usize,
    pub eps: f64,
    pub tolerance: f64,
    /// Test hook: corrupt one analytic gradient entry per batch so the
    /// harness can demonstrate that it detects wrong gradients.
    pub perturb_gradients: bool,
}

impl Default for LossCheckConfig {
    fn default() -> Self {
        LossCheckConfig {
            seed: 0,
            batches: 100,
            eps: 1e-5,
            tolerance: 1e-4,
            perturb_gradients: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckResult {
    pub name: String,
    pub batches: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormResult {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub k: usize,
    pub prototypical_evals: u64,
    pub expected_prototypical: u64,
    pub reference_evals: u64,
    pub expected_reference: u64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossCheckReport {
    pub gradient_checks: Vec<GradCheckResult>,
    pub closed_forms: Vec<ClosedFormResult>,
    pub complexity: Vec<ComplexityRow>,
    pub all_passed: bool,
}

fn random_unit_rows(rng: &mut StdRng, n: usize, c: usize) -> Vec<f64> {
    let mut rows = vec![0.0f64; n * c];
    for row in rows.chunks_mut(c) {
        let mut norm = 0.0;
        for v in row.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
            norm += *v * *v;
        }
        let norm = norm.sqrt().max(1e-12);
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    rows
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

fn check_infonce_batch(rng: &mut StdRng, eps: f64, perturb: bool) -> f64 {
    let n_pos = rng.random_range(1..=4usize);
    let n_neg = rng.random_range(0..=8usize);
    let c = rng.random_range(4..=12usize);
    let tau = [0.1, 0.5, 1.0][rng.random_range(0..3usize)];
    let pos_a = random_unit_rows(rng, n_pos, c);
    let pos_b = random_unit_rows(rng, n_pos, c);
    let negs = random_unit_rows(rng, n_pos * n_neg, c);
    let batch = PairBatch::new(
        pos_a.clone(),
        pos_b.clone(),
        negs.clone(),
        n_pos,
        n_neg,
        c,
        tau,
    )
    .expect("generated batch is valid");
    let mut out = infonce_loss(&batch);
    if perturb {
        out.grad_pos_a[0] += 1e-3;
    }
    let eval = |pa: &[f64], pb: &[f64], ng: &[f64]| -> f64 {
        infonce_loss(
            &PairBatch::new(pa.to_vec(), pb.to_vec(), ng.to_vec(), n_pos, n_neg, c, tau)
                .expect("perturbed batch stays valid"),
        )
        .loss
    };
    let mut worst = 0.0f64;
    let mut probe = |analytic: f64, base: &[f64], idx: usize, which: u8| {
        let mut p = base.to_vec();
        p[idx] += eps;
        let mut m = base.to_vec();
        m[idx] -= eps;
        let (lp, lm) = match which {
            0 => (eval(&p, &pos_b, &negs), eval(&m, &pos_b, &negs)),
            1 => (eval(&pos_a, &p, &negs), eval(&pos_a, &m, &negs)),
            _ => (eval(&pos_a, &pos_b, &p), eval(&pos_a, &pos_b, &m)),
        };
        worst = worst.max(rel_err(analytic, (lp - lm) / (2.0 * eps)));
    };
    for idx in 0..pos_a.len() {
        probe(out.grad_pos_a[idx], &pos_a, idx, 0);
    }
    for idx in 0..pos_b.len() {
        probe(out.grad_pos_b[idx], &pos_b, idx, 1);
    }
    for idx in 0..negs.len() {
        probe(out.grad_negatives[idx], &negs, idx, 2);
    }
    worst
}

fn check_supcon_batch(rng: &mut StdRng, eps: f64, perturb: bool) -> f64 {
    let k = rng.random_range(1..=4usize);
    let n = rng.random_range(k.max(2)..=14usize.max(k));
    let c = rng.random_range(4..=10usize);
    let tau = [0.1, 0.5, 1.0][rng.random_range(0..3usize)];
    let embeddings = random_unit_rows(rng, n, c);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let batch = LabeledBatch::new(embeddings.clone(), labels.clone(), k, c, tau)
        .expect("generated batch is valid");
    let mut out = prototypical_supcon_loss(&batch);
    if perturb {
        out.grads[0] += 1e-3;
    }
    let mut worst = 0.0f64;
    for idx in 0..embeddings.len() {
        let mut p = embeddings.clone();
        p[idx] += eps;
        let mut m = embeddings.clone();
        m[idx] -= eps;
        let lp = prototypical_supcon_loss(
            &LabeledBatch::new(p, labels.clone(), k, c, tau).expect("valid"),
        )
        .loss;
        let lm = prototypical_supcon_loss(
            &LabeledBatch::new(m, labels.clone(), k, c, tau).expect("valid"),
        )
        .loss;
        worst = worst.max(rel_err(out.grads[idx], (lp - lm) / (2.0 * eps)));
    }
    worst
}

fn unit_vec(c: usize) -> Vec<f64> {
    let mut v = vec![0.0; c];
    v[0] = 1.0;
    v
}

/// Runs every check and returns the full report.
pub fn run_loss_checks(cfg: &LossCheckConfig) -> LossCheckReport {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let half = cfg.batches / 2;

    let mut worst_infonce = 0.0f64;
    for _ in 0..half {
        worst_infonce = worst_infonce.max(check_infonce_batch(&mut rng, cfg.eps, cfg.perturb_gradients));
    }
    let mut worst_supcon = 0.0f64;
    for _ in 0..(cfg.batches - half) {
        worst_supcon = worst_supcon.max(check_supcon_batch(&mut rng, cfg.eps, cfg.perturb_gradients));
    }
    let gradient_checks = vec![
        GradCheckResult {
            name: "infonce-vs-central-differences".into(),
            batches: half,
            max_rel_err: worst_infonce,
            tolerance: cfg.tolerance,
            passed: worst_infonce < cfg.tolerance,
        },
        GradCheckResult {
            name: "prototypical-supcon-vs-central-differences".into(),
            batches: cfg.batches - half,
            max_rel_err: worst_supcon,
            tolerance: cfg.tolerance,
            passed: worst_supcon < cfg.tolerance,
        },
    ];

    // closed forms
    let mut closed_forms = Vec::new();
    {
        let x = unit_vec(4);
        let batch = PairBatch::new(x.clone(), x.clone(), x.clone(), 1, 1, 4, 0.5).unwrap();
        let v = infonce_loss(&batch).loss;
        closed_forms.push(ClosedFormResult {
            name: "infonce-symmetric-logits-log2".into(),
            value: v,
            expected: std::f64::consts::LN_2,
            tolerance: 1e-9,
            passed: (v - std::f64::consts::LN_2).abs() < 1e-9,
        });
    }
    for n in [1usize, 2, 10] {
        let rows: Vec<f64> = std::iter::repeat(unit_vec(3)).take(n).flatten().collect();
        let batch = LabeledBatch::new(rows, vec![0; n], 1, 3, 0.5).unwrap();
        let v = prototypical_supcon_loss(&batch).loss;
        let expected = (n as f64).ln();
        closed_forms.push(ClosedFormResult {
            name: format!("prototypical-supcon-identical-n{n}-logn"),
            value: v,
            expected,
            tolerance: 1e-9,
            passed: (v - expected).abs() < 1e-9,
        });
    }

    // complexity table
    let mut complexity = Vec::new();
    let k = 4usize;
    for n in [32usize, 64, 128] {
        let embeddings = random_unit_rows(&mut rng, n, 8);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let batch = LabeledBatch::new(embeddings, labels, k, 8, 0.5).unwrap();
        let proto = prototypical_supcon_loss(&batch);
        let reference = supcon_reference_loss(&batch).unwrap();
        let expected_prototypical = (n * k) as u64;
        let expected_reference = (n * (n - 1)) as u64;
        complexity.push(ComplexityRow {
            n,
            k,
            prototypical_evals: proto.sim_evals,
            expected_prototypical,
            reference_evals: reference.sim_evals,
            expected_reference,
            passed: proto.sim_evals == expected_prototypical
                && reference.sim_evals == expected_reference,
        });
    }

    let all_passed = gradient_checks.iter().all(|g| g.passed)
        && closed_forms.iter().all(|c| c.passed)
        && complexity.iter().all(|c| c.passed);
    LossCheckReport {
        gradient_checks,
        closed_forms,
        complexity,
        all_passed,
    }
}

impl LossCheckReport {
    /// Human-readable pass/fail listing.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for g in &self.gradient_checks {
            out.push_str(&format!(
                "[{}] {} ({} batches, max rel err {:.3e}, tol {:.0e})\n",
                if g.passed { "PASS" } else { "FAIL" },
                g.name,
                g.batches,
                g.max_rel_err,
                g.tolerance
            ));
        }
        for c in &self.closed_forms {
            out.push_str(&format!(
                "[{}] {} (value {:.12}, expected {:.12})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.expected
            ));
        }
        out.push_str("similarity evaluations (prototypical n*K vs pairwise n*(n-1)):\n");
        for r in &self.complexity {
            out.push_str(&format!(
                "[{}] n={:<4} K={}: prototypical {} (expected {}), pairwise {} (expected {})\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.n,
                r.k,
                r.prototypical_evals,
                r.expected_prototypical,
                r.reference_evals,
                r.expected_reference
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.all_passed { "PASS" } else { "FAIL" }
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes() {
        let cfg = LossCheckConfig {
            batches: 20, // smaller here; the acceptance suite runs the full 100
            ..LossCheckConfig::default()
        };
        let report = run_loss_checks(&cfg);
        assert!(report.all_passed, "{}", report.render_text());
    }

    #[test]
    fn perturbed_gradients_are_detected() {
        let cfg = LossCheckConfig {
            batches: 6,
            perturb_gradients: true,
            ..LossCheckConfig::default()
        };
        let report = run_loss_checks(&cfg);
        assert!(!report.all_passed);
        assert!(report.gradient_checks.iter().any(|g| !g.passed));
    }

    #[test]
    fn report_contains_complexity_rows() {
        let report = run_loss_checks(&LossCheckConfig {
            batches: 2,
            ..LossCheckConfig::default()
        });
        assert_eq!(report.complexity.len(), 3);
        assert!(report.complexity.iter().all(|r| r.passed));
        let text = report.render_text();
        assert!(text.contains("n=32"));
        assert!(text.contains("overall"));
    }
}
