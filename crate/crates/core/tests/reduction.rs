//! A single all-ones module is plain LoRA.

use capaboost::layers::{CapaBoostLayer, LoraLayer};
use capaboost::{Matrix, RngStream};

const TOL: f64 = 1e-12;

fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b).unwrap() / a.max_abs().max(1.0)
}

#[test]
fn hundred_random_instances_agree() {
    for seed in 0..100u64 {
        let mut rng = RngStream::new(seed);
        let d1 = 2 + rng.below(10) as usize;
        let d2 = 2 + rng.below(10) as usize;
        let r = 1 + rng.below(d1.min(d2) as u64) as usize;
        let scale = 0.25 + rng.next_f64();
        let lora = LoraLayer::new(
            Matrix::gaussian(d1, d2, &mut rng),
            Matrix::gaussian(d1, r, &mut rng),
            Matrix::gaussian(r, d2, &mut rng),
            scale,
        )
        .unwrap();
        let cb = CapaBoostLayer::from_lora(&lora).unwrap();
        let x = Matrix::gaussian(4, d1, &mut rng);
        let u = Matrix::gaussian(4, d2, &mut rng);

        assert!(rel_diff(&lora.forward(&x).unwrap(), &cb.forward(&x, seed).unwrap()) <= TOL);
        assert!(rel_diff(&lora.merge().unwrap(), &cb.merge(seed).unwrap()) <= TOL);
        let gl = lora.backward(&x, &u).unwrap();
        let gc = cb.backward(&x, &u, seed).unwrap();
        assert!(rel_diff(&gl.d_b, &gc.d_b) <= TOL, "seed {seed}");
        assert!(rel_diff(&gl.d_a, &gc.d_a) <= TOL, "seed {seed}");
    }
}
