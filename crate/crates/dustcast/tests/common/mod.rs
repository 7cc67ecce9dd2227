//! Shared test fixtures and the scalar-loop LSTM reference.

use dustcast::ingest::{impute_missing, table_from_records, ObservationTable};
use dustcast::net::LstmModel;
use dustcast::synth::{generate, inject_gaps, SynthConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Plain nested-loop LSTM forward pass over `Vec`s, written independently of
/// the `ndarray` implementation so the two can disagree.
///
/// Same conventions: gate order [i, f, g, o] along the stacked axis, zero
/// initial states, affine head on the last hidden state.
pub fn scalar_reference_forward(model: &LstmModel, window: &[Vec<f64>]) -> Vec<f64> {
    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    let hidden = model.hidden_size();
    let mut sequence: Vec<Vec<f64>> = window.to_vec();
    for layer in &model.layers {
        let d_in = layer.input_dim();
        let w_ih: Vec<Vec<f64>> = (0..4 * hidden)
            .map(|r| (0..d_in).map(|c| layer.w_ih[[r, c]]).collect())
            .collect();
        let w_hh: Vec<Vec<f64>> = (0..4 * hidden)
            .map(|r| (0..hidden).map(|c| layer.w_hh[[r, c]]).collect())
            .collect();
        let bias: Vec<f64> = layer.bias.iter().copied().collect();

        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        let mut outputs = Vec::with_capacity(sequence.len());
        for x in &sequence {
            let mut z = vec![0.0; 4 * hidden];
            for (r, z_r) in z.iter_mut().enumerate() {
                let mut acc = bias[r];
                for (k, &xk) in x.iter().enumerate() {
                    acc += w_ih[r][k] * xk;
                }
                for (k, &hk) in h.iter().enumerate() {
                    acc += w_hh[r][k] * hk;
                }
                *z_r = acc;
            }
            let mut h_next = vec![0.0; hidden];
            let mut c_next = vec![0.0; hidden];
            for j in 0..hidden {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hidden + j]);
                let g = z[2 * hidden + j].tanh();
                let o = sigmoid(z[3 * hidden + j]);
                c_next[j] = f * c[j] + i * g;
                h_next[j] = o * c_next[j].tanh();
            }
            h = h_next;
            c = c_next;
            outputs.push(h.clone());
        }
        sequence = outputs;
    }

    let h_last = sequence.last().expect("non-empty window");
    (0..2)
        .map(|r| {
            let mut acc = model.head.bias[r];
            for (k, &hk) in h_last.iter().enumerate() {
                acc += model.head.weight[[r, k]] * hk;
            }
            acc
        })
        .collect()
}

/// Random window with entries in [0, 1].
pub fn random_window(t_len: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Array2::from_shape_fn((t_len, dim), |_| rng.random::<f64>())
}

/// Random target vector in [0, 1]^2.
pub fn random_target(seed: u64) -> Array1<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    Array1::from_shape_fn(2, |_| rng.random::<f64>())
}

/// Fully imputed synthetic table.
pub fn synth_table(n_hours: usize, seed: u64) -> ObservationTable {
    let config = SynthConfig {
        n_hours,
        seed,
        ..SynthConfig::default()
    };
    let (pollutants, climate) = generate(&config).expect("valid config");
    table_from_records(&pollutants, &climate).expect("complete synthetic data")
}

/// Synthetic table with `gap_fraction` of cells blanked before imputation.
pub fn synth_table_with_gaps(n_hours: usize, seed: u64, gap_fraction: f64) -> ObservationTable {
    let config = SynthConfig {
        n_hours,
        seed,
        ..SynthConfig::default()
    };
    let (mut pollutants, mut climate) = generate(&config).expect("valid config");
    inject_gaps(&mut pollutants, &mut climate, gap_fraction, seed ^ 1).expect("valid fraction");
    let (start, end) = dustcast::ingest::hour_range(&pollutants, &climate).expect("records");
    let aligned =
        dustcast::ingest::align_hourly(&pollutants, &climate, start, end).expect("aligned");
    impute_missing(&aligned).expect("imputable")
}

/// Relative error with a small floor so near-zero gradients compare on an
/// absolute scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
