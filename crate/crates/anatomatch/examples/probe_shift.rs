// shift-only sweep over gain and radius
use anatomatch::experiment::{run_ablation, CorruptionConfig, ExperimentConfig};

fn main() {
    let base = ExperimentConfig {
        seed: 0,
        eval_pairs: 6,
        ..ExperimentConfig::default()
    };
    for (gain, radius) in [(1.2, 1.2), (1.2, 1.8), (1.5, 1.2)] {
        let cfg = ExperimentConfig {
            corruption: CorruptionConfig {
                erase_frac: 0.0,
                shift_frac: 1.0,
                deform_frac: 0.0,
                shift_gain: gain,
                shift_radius_frac: radius,
                ..CorruptionConfig::default()
            },
            ..base.clone()
        };
        let report = run_ablation(&cfg).unwrap();
        println!("--- gain {gain} radius x{radius} ---");
        for row in &report.rows {
            println!("{:<22} CPM@R {:6.2}  MED {:6.2}", row.name, row.summary.cpm_at_radius, row.summary.med.mean);
        }
    }
}
