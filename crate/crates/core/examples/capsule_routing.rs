//! Routes random prediction vectors to three class capsules and prints the
//! coupling coefficients of each iteration.

use bitdnn::capsule::{class_probabilities, route, squash};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bitdnn::Result<()> {
    for norm in [0.5, 1.0, 3.0] {
        let v = squash(&[norm, 0.0]);
        println!("squash length at |u| = {norm}: {:.4}", v[0]);
    }

    let (inputs, n_class, dim) = (6, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut u_hat: Vec<f64> = (0..inputs * n_class * dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    // every input agrees on class 2
    for m in 0..inputs {
        for d in 0..dim {
            u_hat[(m * n_class + 1) * dim + d] += 0.4;
        }
    }

    let state = route(&u_hat, inputs, n_class, dim, 3)?;
    for (it, c) in state.coupling_history.iter().enumerate() {
        let mean: Vec<f64> = (0..n_class)
            .map(|n| (0..inputs).map(|m| c[m * n_class + n]).sum::<f64>() / inputs as f64)
            .collect();
        println!("iteration {}: mean coupling per class {:.3?}", it + 1, mean);
    }
    let (lengths, class) = class_probabilities(&state);
    println!("lengths {lengths:.3?} -> class {class}");
    Ok(())
}
