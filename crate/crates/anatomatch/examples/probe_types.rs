// per-corruption-type accuracy: clean / erase-only / shift-only suites
use anatomatch::experiment::{run_ablation, CorruptionConfig, ExperimentConfig};

fn main() {
    let base = ExperimentConfig {
        seed: 0,
        eval_pairs: 6,
        ..ExperimentConfig::default()
    };
    let cases = [
        ("clean", CorruptionConfig { erase_frac: 0.0, shift_frac: 0.0, deform_frac: 0.0, ..CorruptionConfig::default() }),
        ("erase", CorruptionConfig { erase_frac: 1.0, shift_frac: 0.0, deform_frac: 0.0, ..CorruptionConfig::default() }),
        ("shift", CorruptionConfig { erase_frac: 0.0, shift_frac: 1.0, deform_frac: 0.0, ..CorruptionConfig::default() }),
        ("deform", CorruptionConfig { erase_frac: 0.0, shift_frac: 0.0, deform_frac: 1.0, ..CorruptionConfig::default() }),
    ];
    for (name, corruption) in cases {
        let cfg = ExperimentConfig { corruption, ..base.clone() };
        let report = run_ablation(&cfg).unwrap();
        println!("--- {name} ---");
        for row in &report.rows {
            println!("{:<22} CPM@R {:6.2}  MED {:6.2}", row.name, row.summary.cpm_at_radius, row.summary.med.mean);
        }
    }
}
