// diagnostic: per-correspondence nn vs fixedpoint behavior on one clean pair
use anatomatch::experiment::{train_heads, ExperimentConfig};
use anatomatch::fixedpoint::{match_point, MatchMode, MatcherConfig};
use anatomatch::phantom::*;
use anatomatch::trainer::embed_intensity;
use anatomatch::geom::PhysPoint;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.train_pairs = 3;
    cfg.trainer.steps = 400;
    cfg.trainer.batch_pairs = 3;
    cfg.trainer.app_channels = 16;
    cfg.trainer.sem_channels = 8;
    cfg.augment = AugmentConfig {
        max_rotation_deg: 5.0,
        scale_range: (0.95, 1.05),
        overlap_frac: 0.9,
        noise_sigma: 0.01,
        blur_sigma_vox: 0.3,
    };
    let heads = train_heads(&cfg).unwrap();

    let phantom = generate_phantom(&cfg.phantom, 777).unwrap();
    let params = AugmentParams {
        rotation_deg: [4.0, -3.0, 2.0],
        scale: [1.04, 0.97, 1.02],
        translation_mm: [5.0, -4.0, 3.0],
        noise_sigma: 0.01,
        blur_sigma_vox: 0.3,
        seed: 5,
    };
    let pair = augment(&phantom, &params).unwrap();
    let corrs = sample_correspondences(&pair, 12, 3).unwrap();
    let (app_a, _sem_a, uni_a) = embed_intensity(&pair.view_a.intensity, &heads.appearance, &heads.semantic, 0.5).unwrap();
    let (app_b, _sem_b, uni_b) = embed_intensity(&pair.view_b.intensity, &heads.appearance, &heads.semantic, 0.5).unwrap();
    let _ = (uni_a, uni_b);
    let spacing = pair.view_a.intensity.spacing_mm();
    let nn_cfg = MatcherConfig { mode: MatchMode::Nn, ..MatcherConfig::default() };
    let fp_cfg = MatcherConfig { mode: MatchMode::FixedPoint, collect_traces: true, ..MatcherConfig::default() };
    for c in &corrs.pairs {
        let t = c.template.round_to_voxel(spacing);
        let nn = match_point(t, &app_a, &app_b, &nn_cfg).unwrap();
        let fp = match_point(t, &app_a, &app_b, &fp_cfg).unwrap();
        let err = |p: PhysPoint| p.distance_to(c.truth_query);
        let traces = fp.traces.as_ref().unwrap();
        let conv = traces.iter().filter(|t| t.converged).count();
        println!(
            "t={:?} tag={} | nn err {:6.2} | fp err {:6.2} method={:?} trans_only={} n_stable={:3} conv={:3} rms={:.3}",
            t.to_array(), c.tag, err(nn.mm), err(fp.mm), fp.method, fp.translation_only, fp.n_stable, conv,
            fp.affine.as_ref().map(|a| a.residual_rms).unwrap_or(-1.0),
        );
        if let Some(a) = &fp.affine {
            if err(fp.mm) > 6.0 {
                println!("   A = {:?}", a.matrix);
                println!("   f_bar={:?} g_bar={:?} t0={:?}", a.f_centroid, a.g_centroid, t.to_array());
            }
        }
    }
}
