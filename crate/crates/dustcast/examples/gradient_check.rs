//! Check the analytic backpropagation-through-time gradients against
//! central finite differences on a tiny model.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use dustcast::net::{numerical_gradient, LstmModel};
use dustcast::train::mse_loss_grad;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> dustcast::Result<()> {
    let (hidden, input_dim, t_len) = (4, 6, 5);
    let eps = 1e-5;
    let mut worst = 0.0_f64;

    for seed in 0..5_u64 {
        let model = LstmModel::init_sized(input_dim, hidden, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed + 1000);
        let window = Array2::from_shape_fn((t_len, input_dim), |_| rng.random::<f64>());
        let target = Array1::from_shape_fn(2, |_| rng.random::<f64>());

        let (y, cache) = model.forward(window.view())?;
        let analytic = model.backward(&cache, mse_loss_grad(y.view(), target.view()).view())?;
        let numeric = numerical_gradient(&model, window.view(), target.view(), eps)?;

        let mut seed_worst = 0.0_f64;
        for (a, n) in analytic
            .layers
            .iter()
            .zip(&numeric.layers)
            .flat_map(|(a, n)| {
                a.w_ih
                    .iter()
                    .chain(a.w_hh.iter())
                    .chain(a.bias.iter())
                    .zip(n.w_ih.iter().chain(n.w_hh.iter()).chain(n.bias.iter()))
            })
            .chain(
                analytic
                    .head
                    .weight
                    .iter()
                    .chain(analytic.head.bias.iter())
                    .zip(numeric.head.weight.iter().chain(numeric.head.bias.iter())),
            )
        {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            seed_worst = seed_worst.max(rel);
        }
        println!("seed {seed}: max relative error {seed_worst:.3e} over {} params", model.n_params());
        worst = worst.max(seed_worst);
    }

    println!("worst over all seeds: {worst:.3e} (tolerance 1e-4, step {eps:.0e})");
    assert!(worst < 1e-4);
    println!("analytic BPTT agrees with the finite-difference oracle");
    Ok(())
}
