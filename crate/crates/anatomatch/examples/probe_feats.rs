// quick probe: per-channel RMS of current features on a phantom
use anatomatch::embedder::extract_features;
use anatomatch::phantom::{generate_phantom, PhantomConfig};

fn main() {
    let cfg = PhantomConfig { dims: [44, 44, 44], spacing_mm: 2.0, num_classes: 6, n_structures: 9 };
    let p = generate_phantom(&cfg, 0).unwrap();
    let f = extract_features(&p.intensity).unwrap();
    let c = f.channels();
    let n = f.voxel_count();
    let mut rms = vec![0.0f64; c];
    let mut mean = vec![0.0f64; c];
    for i in 0..n {
        let v = f.embedding_at_linear(i);
        for (k, &x) in v.iter().enumerate() {
            mean[k] += x as f64;
            rms[k] += (x as f64) * (x as f64);
        }
    }
    for k in 0..c {
        mean[k] /= n as f64;
        let r = (rms[k] / n as f64).sqrt();
        let sd = (rms[k] / n as f64 - mean[k] * mean[k]).max(0.0).sqrt();
        println!("ch{k}: mean {:+.4} rms {:.4} std {:.4}", mean[k], r, sd);
    }
}
