//! The neural kernel: LSTM parameter initialization, the three-layer stacked
//! forward pass, full backpropagation through time, and a central-difference
//! gradient oracle. Everything is plain `ndarray` math in double precision,
//! no ML framework.
//!
//! Gates are stacked along the leading axis of each weight matrix in the
//! fixed order `[input, forget, candidate, output]`:
//!
//! ```text
//! z = w_ih · x_t + w_hh · h_{t-1} + bias          (4H,)
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! The head is a plain affine map on the last hidden state; outputs are
//! unconstrained even though targets live in `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::{FEATURE_DIM, HIDDEN_SIZE, LSTM_LAYERS, OUTPUT_DIM};

/// Gate stacking order tag written into checkpoints.
pub const GATE_ORDER_TAG: &str = "ifgo";

const CHECKPOINT_MAGIC: &str = "dustcast-checkpoint v1";

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights of one LSTM layer; the same shapes double as gradient storage.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// Input-to-state weights, shape (4H, D_in).
    pub w_ih: Array2<f64>,
    /// State-to-state weights, shape (4H, H).
    pub w_hh: Array2<f64>,
    /// Gate biases, shape (4H,).
    pub bias: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_ih: Array2::zeros((4 * hidden, input_dim)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }
}

/// Affine output head, shape (2, H) weight plus (2,) bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(hidden: usize) -> Self {
        DenseParams {
            weight: Array2::zeros((OUTPUT_DIM, hidden)),
            bias: Array1::zeros(OUTPUT_DIM),
        }
    }
}

/// Full parameter set: three stacked LSTM layers plus the dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub layers: Vec<LstmLayerParams>,
    pub head: DenseParams,
    /// Seed the parameters were drawn from, recorded for reproducibility.
    pub seed: u64,
}

impl LstmModel {
    /// Initialize with the production dimensions (243 → 3×42 → 2).
    pub fn init(seed: u64) -> LstmModel {
        Self::init_sized(FEATURE_DIM, HIDDEN_SIZE, seed)
    }

    /// Initialize a model with custom input/hidden widths (test-sized
    /// instances use this); the layer count stays fixed at three.
    ///
    /// Weights are uniform in ±1/√fan_in; biases are zero except the
    /// forget-gate slice, which starts at 1 so early training does not
    /// flush cell state.
    pub fn init_sized(input_dim: usize, hidden: usize, seed: u64) -> LstmModel {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| -> Array2<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
        };
        let mut layers = Vec::with_capacity(LSTM_LAYERS);
        for l in 0..LSTM_LAYERS {
            let d_in = if l == 0 { input_dim } else { hidden };
            let w_ih = uniform(4 * hidden, d_in, d_in);
            let w_hh = uniform(4 * hidden, hidden, hidden);
            let mut bias = Array1::zeros(4 * hidden);
            bias.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
            layers.push(LstmLayerParams { w_ih, w_hh, bias });
        }
        let head_weight = uniform(OUTPUT_DIM, hidden, hidden);
        LstmModel {
            layers,
            head: DenseParams {
                weight: head_weight,
                bias: Array1::zeros(OUTPUT_DIM),
            },
            seed,
        }
    }

    /// All-zero parameters (useful as a fixture and for gradient storage).
    pub fn zeros(input_dim: usize, hidden: usize) -> LstmModel {
        let layers = (0..LSTM_LAYERS)
            .map(|l| LstmLayerParams::zeros(if l == 0 { input_dim } else { hidden }, hidden))
            .collect();
        LstmModel {
            layers,
            head: DenseParams::zeros(hidden),
            seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_ih.len() + l.w_hh.len() + l.bias.len())
            .sum::<usize>()
            + self.head.weight.len()
            + self.head.bias.len()
    }

    /// Run the stacked forward pass over one window, keeping every
    /// activation needed for backpropagation.
    ///
    /// States start at zero; layer `l` consumes layer `l-1`'s hidden
    /// sequence; the head reads the top layer's last hidden state.
    pub fn forward(&self, window: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let t_len = window.nrows();
        if t_len == 0 || window.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "model_forward window".into(),
                expected: format!("(T >= 1, {})", self.input_dim()),
                got: format!("({t_len}, {})", window.ncols()),
            });
        }
        if !window.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model_forward window".into(),
            });
        }
        let hidden = self.hidden_size();
        let mut layer_input = window.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for params in &self.layers {
            // Input projections for every timestep in one gemm; only the
            // recurrent term stays sequential.
            let mut pre = layer_input.dot(&params.w_ih.t());
            pre += &params.bias;

            let mut gate_i = Array2::zeros((t_len, hidden));
            let mut gate_f = Array2::zeros((t_len, hidden));
            let mut gate_g = Array2::zeros((t_len, hidden));
            let mut gate_o = Array2::zeros((t_len, hidden));
            let mut cell = Array2::zeros((t_len, hidden));
            let mut tanh_cell = Array2::zeros((t_len, hidden));
            let mut hidden_seq = Array2::zeros((t_len, hidden));

            let mut h_prev: Array1<f64> = Array1::zeros(hidden);
            for t in 0..t_len {
                let recurrent = params.w_hh.dot(&h_prev);
                for j in 0..hidden {
                    let i = sigmoid(pre[[t, j]] + recurrent[j]);
                    let f = sigmoid(pre[[t, hidden + j]] + recurrent[hidden + j]);
                    let g = (pre[[t, 2 * hidden + j]] + recurrent[2 * hidden + j]).tanh();
                    let o = sigmoid(pre[[t, 3 * hidden + j]] + recurrent[3 * hidden + j]);
                    let c_prev = if t > 0 { cell[[t - 1, j]] } else { 0.0 };
                    let c = f * c_prev + i * g;
                    let tc = c.tanh();
                    gate_i[[t, j]] = i;
                    gate_f[[t, j]] = f;
                    gate_g[[t, j]] = g;
                    gate_o[[t, j]] = o;
                    cell[[t, j]] = c;
                    tanh_cell[[t, j]] = tc;
                    hidden_seq[[t, j]] = o * tc;
                }
                h_prev.assign(&hidden_seq.row(t));
            }

            let next_input = hidden_seq.clone();
            layers.push(LayerCache {
                inputs: layer_input,
                gate_i,
                gate_f,
                gate_g,
                gate_o,
                cell,
                tanh_cell,
                hidden: hidden_seq,
            });
            layer_input = next_input;
        }
        let head_input = layers
            .last()
            .expect("three layers")
            .hidden
            .row(t_len - 1)
            .to_owned();
        let y = self.head.weight.dot(&head_input) + &self.head.bias;
        Ok((y, ForwardCache { layers, head_input }))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, window: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(window)?.0)
    }

    /// Exact analytic gradients of the squared-error loss with respect to
    /// every parameter, unrolled backwards through all timesteps and layers.
    ///
    /// `dl_dy` is the loss gradient at the head output, e.g. `2(ŷ - y)`.
    pub fn backward(&self, cache: &ForwardCache, dl_dy: ArrayView1<f64>) -> Result<Gradients> {
        if dl_dy.len() != OUTPUT_DIM {
            return Err(Error::ShapeMismatch {
                context: "model_backward upstream gradient".into(),
                expected: format!("({OUTPUT_DIM},)"),
                got: format!("({},)", dl_dy.len()),
            });
        }
        if !dl_dy.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "model_backward upstream gradient".into(),
            });
        }
        let hidden = self.hidden_size();
        let t_len = cache.layers[0].hidden.nrows();
        let mut grads = Gradients::zeros_like(self);

        for (r, &dy) in dl_dy.iter().enumerate() {
            for (c, &h) in cache.head_input.iter().enumerate() {
                grads.head.weight[[r, c]] = dy * h;
            }
            grads.head.bias[r] = dy;
        }

        // Gradient arriving at each timestep's hidden output from above:
        // the head feeds only the last step of the top layer.
        let mut dh_above: Array2<f64> = Array2::zeros((t_len, hidden));
        dh_above
            .row_mut(t_len - 1)
            .assign(&self.head.weight.t().dot(&dl_dy));

        for (l, params) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let mut d_pre = Array2::zeros((t_len, 4 * hidden));
            let mut dh_rec: Array1<f64> = Array1::zeros(hidden);
            let mut dc_rec: Array1<f64> = Array1::zeros(hidden);
            for t in (0..t_len).rev() {
                for j in 0..hidden {
                    let dh = dh_above[[t, j]] + dh_rec[j];
                    let i = lc.gate_i[[t, j]];
                    let f = lc.gate_f[[t, j]];
                    let g = lc.gate_g[[t, j]];
                    let o = lc.gate_o[[t, j]];
                    let tc = lc.tanh_cell[[t, j]];
                    let c_prev = if t > 0 { lc.cell[[t - 1, j]] } else { 0.0 };

                    let d_o = dh * tc;
                    let dc = dc_rec[j] + dh * o * (1.0 - tc * tc);
                    let d_i = dc * g;
                    let d_f = dc * c_prev;
                    let d_g = dc * i;

                    d_pre[[t, j]] = d_i * i * (1.0 - i);
                    d_pre[[t, hidden + j]] = d_f * f * (1.0 - f);
                    d_pre[[t, 2 * hidden + j]] = d_g * (1.0 - g * g);
                    d_pre[[t, 3 * hidden + j]] = d_o * o * (1.0 - o);
                    dc_rec[j] = dc * f;
                }
                dh_rec = params.w_hh.t().dot(&d_pre.row(t));
            }

            // Parameter gradients in bulk: d_preᵀ · inputs and the
            // one-step-shifted hidden sequence.
            let lg = &mut grads.layers[l];
            lg.w_ih = d_pre.t().dot(&lc.inputs);
            let mut h_prev_mat = Array2::zeros((t_len, hidden));
            for t in 1..t_len {
                h_prev_mat.row_mut(t).assign(&lc.hidden.row(t - 1));
            }
            lg.w_hh = d_pre.t().dot(&h_prev_mat);
            lg.bias = d_pre.sum_axis(Axis(0));

            if l > 0 {
                dh_above = d_pre.dot(&params.w_ih);
            }
        }
        Ok(grads)
    }
}

/// Activations of one layer across all timesteps.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Sequence fed into this layer, shape (T, D_in).
    pub inputs: Array2<f64>,
    pub gate_i: Array2<f64>,
    pub gate_f: Array2<f64>,
    pub gate_g: Array2<f64>,
    pub gate_o: Array2<f64>,
    /// Cell states c_t, shape (T, H).
    pub cell: Array2<f64>,
    pub tanh_cell: Array2<f64>,
    /// Hidden states h_t, shape (T, H).
    pub hidden: Array2<f64>,
}

/// Everything [`LstmModel::backward`] needs from the matching forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    /// Top layer's last hidden state, the head's input.
    pub head_input: Array1<f64>,
}

/// Per-parameter gradients, shape-congruent with [`LstmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LstmLayerParams>,
    pub head: DenseParams,
}

impl Gradients {
    pub fn zeros_like(model: &LstmModel) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LstmLayerParams::zeros(l.input_dim(), l.hidden()))
                .collect(),
            head: DenseParams::zeros(model.hidden_size()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_ih += &b.w_ih;
            a.w_hh += &b.w_hh;
            a.bias += &b.bias;
        }
        self.head.weight += &other.head.weight;
        self.head.bias += &other.head.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            l.w_ih *= factor;
            l.w_hh *= factor;
            l.bias *= factor;
        }
        self.head.weight *= factor;
        self.head.bias *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| {
                l.w_ih
                    .iter()
                    .chain(l.w_hh.iter())
                    .chain(l.bias.iter())
            })
            .chain(self.head.weight.iter())
            .chain(self.head.bias.iter())
            .all(|v| v.is_finite())
    }

    /// Largest |entry| over all tensors; handy in divergence checks.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| {
                l.w_ih
                    .iter()
                    .chain(l.w_hh.iter())
                    .chain(l.bias.iter())
            })
            .chain(self.head.weight.iter())
            .chain(self.head.bias.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Single LSTM cell step, exposed for step-wise use and as a seam for tests.
///
/// Returns the new hidden and cell state plus the gate activations.
pub fn lstm_cell_forward(
    params: &LstmLayerParams,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> Result<CellStep> {
    let hidden = params.hidden();
    if x.len() != params.input_dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::ShapeMismatch {
            context: "lstm_cell_forward".into(),
            expected: format!("x ({},), states ({hidden},)", params.input_dim()),
            got: format!("x ({},), h ({},), c ({},)", x.len(), h_prev.len(), c_prev.len()),
        });
    }
    if !(x.iter().chain(h_prev.iter()).chain(c_prev.iter())).all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "lstm_cell_forward".into(),
        });
    }
    let z = params.w_ih.dot(&x) + params.w_hh.dot(&h_prev) + &params.bias;
    let mut step = CellStep {
        gate_i: Array1::zeros(hidden),
        gate_f: Array1::zeros(hidden),
        gate_g: Array1::zeros(hidden),
        gate_o: Array1::zeros(hidden),
        cell: Array1::zeros(hidden),
        hidden: Array1::zeros(hidden),
    };
    for j in 0..hidden {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hidden + j]);
        let g = z[2 * hidden + j].tanh();
        let o = sigmoid(z[3 * hidden + j]);
        let c = f * c_prev[j] + i * g;
        step.gate_i[j] = i;
        step.gate_f[j] = f;
        step.gate_g[j] = g;
        step.gate_o[j] = o;
        step.cell[j] = c;
        step.hidden[j] = o * c.tanh();
    }
    Ok(step)
}

/// One cell step's outputs and gate activations.
#[derive(Debug, Clone)]
pub struct CellStep {
    pub gate_i: Array1<f64>,
    pub gate_f: Array1<f64>,
    pub gate_g: Array1<f64>,
    pub gate_o: Array1<f64>,
    pub cell: Array1<f64>,
    pub hidden: Array1<f64>,
}

/// Number of flat parameter tensors in a model (per layer: w_ih, w_hh,
/// bias; plus head weight and bias).
pub(crate) fn n_param_slots(model: &LstmModel) -> usize {
    3 * model.layers.len() + 2
}

/// Read-only view of parameter tensor `slot`; works for models and for the
/// shape-congruent [`Gradients`].
pub(crate) fn param_slot<'a>(
    layers: &'a [LstmLayerParams],
    head: &'a DenseParams,
    slot: usize,
) -> &'a [f64] {
    let n_layers = layers.len();
    if slot < 3 * n_layers {
        let layer = &layers[slot / 3];
        match slot % 3 {
            0 => layer.w_ih.as_slice().expect("contiguous"),
            1 => layer.w_hh.as_slice().expect("contiguous"),
            _ => layer.bias.as_slice().expect("contiguous"),
        }
    } else if slot == 3 * n_layers {
        head.weight.as_slice().expect("contiguous")
    } else {
        head.bias.as_slice().expect("contiguous")
    }
}

pub(crate) fn param_slot_mut<'a>(
    layers: &'a mut [LstmLayerParams],
    head: &'a mut DenseParams,
    slot: usize,
) -> &'a mut [f64] {
    let n_layers = layers.len();
    if slot < 3 * n_layers {
        let layer = &mut layers[slot / 3];
        match slot % 3 {
            0 => layer.w_ih.as_slice_mut().expect("contiguous"),
            1 => layer.w_hh.as_slice_mut().expect("contiguous"),
            _ => layer.bias.as_slice_mut().expect("contiguous"),
        }
    } else if slot == 3 * n_layers {
        head.weight.as_slice_mut().expect("contiguous")
    } else {
        head.bias.as_slice_mut().expect("contiguous")
    }
}

/// Central-difference estimate of the loss gradient, one scalar parameter at
/// a time: `(L(θ+ε) - L(θ-ε)) / 2ε` with `L = ‖f(window) - target‖²`.
///
/// This is the independent oracle the analytic backward pass is checked
/// against; it is O(parameters × forward) and meant for tiny models.
pub fn numerical_gradient(
    model: &LstmModel,
    window: ArrayView2<f64>,
    target: ArrayView1<f64>,
    eps: f64,
) -> Result<Gradients> {
    if eps <= 0.0 {
        return Err(Error::BadStepSize(eps));
    }
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    let n_slots = 3 * model.layers.len() + 2;
    for slot in 0..n_slots {
        let len = param_slot_mut(&mut probe.layers, &mut probe.head, slot).len();
        for idx in 0..len {
            let original = param_slot_mut(&mut probe.layers, &mut probe.head, slot)[idx];
            let mut loss_at = |v: f64| -> Result<f64> {
                param_slot_mut(&mut probe.layers, &mut probe.head, slot)[idx] = v;
                let (y, _) = probe.forward(window)?;
                let diff = &y - &target;
                Ok(diff.dot(&diff))
            };
            let plus = loss_at(original + eps)?;
            let minus = loss_at(original - eps)?;
            param_slot_mut(&mut probe.layers, &mut probe.head, slot)[idx] = original;
            param_slot_mut(&mut grads.layers, &mut grads.head, slot)[idx] =
                (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    let _ = writeln!(out, "tensor {name} {rows} {cols}");
    for row in data.chunks(cols) {
        let mut line = String::new();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v}");
        }
        out.push_str(&line);
        out.push('\n');
    }
}

impl LstmModel {
    /// Write the versioned flat-text checkpoint format.
    ///
    /// Floats use shortest round-trip formatting, so identical parameters
    /// always produce byte-identical files and loading is bit-exact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "gate_order {GATE_ORDER_TAG}");
        let _ = writeln!(out, "layers {}", self.layers.len());
        let _ = writeln!(out, "hidden {}", self.hidden_size());
        let _ = writeln!(out, "input_dim {}", self.input_dim());
        let _ = writeln!(out, "output_dim {OUTPUT_DIM}");
        let _ = writeln!(out, "seed {}", self.seed);
        for (l, layer) in self.layers.iter().enumerate() {
            let (r, c) = layer.w_ih.dim();
            push_tensor(
                &mut out,
                &format!("layer{l}.w_ih"),
                r,
                c,
                layer.w_ih.as_slice().expect("contiguous"),
            );
            let (r, c) = layer.w_hh.dim();
            push_tensor(
                &mut out,
                &format!("layer{l}.w_hh"),
                r,
                c,
                layer.w_hh.as_slice().expect("contiguous"),
            );
            push_tensor(
                &mut out,
                &format!("layer{l}.bias"),
                1,
                layer.bias.len(),
                layer.bias.as_slice().expect("contiguous"),
            );
        }
        let (r, c) = self.head.weight.dim();
        push_tensor(
            &mut out,
            "head.weight",
            r,
            c,
            self.head.weight.as_slice().expect("contiguous"),
        );
        push_tensor(
            &mut out,
            "head.bias",
            1,
            self.head.bias.len(),
            self.head.bias.as_slice().expect("contiguous"),
        );
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Load a checkpoint, validating the version tag, gate order, and every
    /// tensor dimension against the declared geometry.
    pub fn load(path: impl AsRef<Path>) -> Result<LstmModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fail = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(fail(format!("missing `{CHECKPOINT_MAGIC}` header")));
        }
        let mut kv = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| fail("truncated header".into()))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| fail(format!("expected `{key}` line, got `{line}`")))
        };
        let gate_order = kv("gate_order")?;
        if gate_order != GATE_ORDER_TAG {
            return Err(fail(format!(
                "unsupported gate order `{gate_order}` (expected `{GATE_ORDER_TAG}`)"
            )));
        }
        let parse_usize = |s: String, what: &str| -> Result<usize> {
            s.parse().map_err(|_| fail(format!("bad {what} `{s}`")))
        };
        let n_layers = parse_usize(kv("layers")?, "layer count")?;
        let hidden = parse_usize(kv("hidden")?, "hidden size")?;
        let input_dim = parse_usize(kv("input_dim")?, "input dim")?;
        let output_dim = parse_usize(kv("output_dim")?, "output dim")?;
        let seed: u64 = kv("seed")?
            .parse()
            .map_err(|_| fail("bad seed".into()))?;
        if n_layers != LSTM_LAYERS {
            return Err(fail(format!("expected {LSTM_LAYERS} layers, got {n_layers}")));
        }
        if output_dim != OUTPUT_DIM {
            return Err(fail(format!("expected output dim {OUTPUT_DIM}, got {output_dim}")));
        }
        if hidden == 0 || input_dim == 0 {
            return Err(fail("zero dimension".into()));
        }

        let mut read_tensor = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let header = lines.next().ok_or_else(|| fail("missing tensor".into()))?;
            let expected = format!("tensor {name} {rows} {cols}");
            if header != expected {
                return Err(fail(format!("expected `{expected}`, got `{header}`")));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines
                    .next()
                    .ok_or_else(|| fail(format!("tensor {name} truncated")))?;
                let before = data.len();
                for field in line.split(' ') {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| fail(format!("bad float `{field}` in {name}")))?;
                    if !v.is_finite() {
                        return Err(fail(format!("non-finite entry in {name}")));
                    }
                    data.push(v);
                }
                if data.len() - before != cols {
                    return Err(fail(format!(
                        "tensor {name}: expected {cols} columns, got {}",
                        data.len() - before
                    )));
                }
            }
            Ok(data)
        };

        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let d_in = if l == 0 { input_dim } else { hidden };
            let w_ih = read_tensor(&format!("layer{l}.w_ih"), 4 * hidden, d_in)?;
            let w_hh = read_tensor(&format!("layer{l}.w_hh"), 4 * hidden, hidden)?;
            let bias = read_tensor(&format!("layer{l}.bias"), 1, 4 * hidden)?;
            layers.push(LstmLayerParams {
                w_ih: Array2::from_shape_vec((4 * hidden, d_in), w_ih).expect("validated"),
                w_hh: Array2::from_shape_vec((4 * hidden, hidden), w_hh).expect("validated"),
                bias: Array1::from_vec(bias),
            });
        }
        let head_weight = read_tensor("head.weight", OUTPUT_DIM, hidden)?;
        let head_bias = read_tensor("head.bias", 1, OUTPUT_DIM)?;
        if lines.next().is_some() {
            return Err(fail("trailing data after tensors".into()));
        }
        Ok(LstmModel {
            layers,
            head: DenseParams {
                weight: Array2::from_shape_vec((OUTPUT_DIM, hidden), head_weight)
                    .expect("validated"),
                bias: Array1::from_vec(head_bias),
            },
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_window(t_len: usize, dim: usize, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((t_len, dim), |(t, d)| {
            ((t * 31 + d * 17 + 7) % 13) as f64 / 13.0 * scale
        })
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = LstmModel::init_sized(6, 4, 9);
        let b = LstmModel::init_sized(6, 4, 9);
        let c = LstmModel::init_sized(6, 4, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_zero_except_forget_slice() {
        let m = LstmModel::init_sized(6, 4, 1);
        for layer in &m.layers {
            let b = &layer.bias;
            assert!(b.slice(ndarray::s![0..4]).iter().all(|&v| v == 0.0));
            assert!(b.slice(ndarray::s![4..8]).iter().all(|&v| v == 1.0));
            assert!(b.slice(ndarray::s![8..16]).iter().all(|&v| v == 0.0));
        }
        assert!(m.head.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_production_shapes() {
        let m = LstmModel::init(42);
        assert_eq!(m.layers.len(), 3);
        assert_eq!(m.layers[0].w_ih.dim(), (168, 243));
        assert_eq!(m.layers[1].w_ih.dim(), (168, 42));
        assert_eq!(m.layers[2].w_hh.dim(), (168, 42));
        assert_eq!(m.head.weight.dim(), (2, 42));
        assert_eq!(m.n_params(), 168 * 243 + 168 * 42 + 168 + 2 * (168 * 42 + 168 * 42 + 168) + 2 * 42 + 2);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = LstmModel::init_sized(9, 4, 3);
        let bound = 1.0 / 3.0; // 1/sqrt(9)
        assert!(m.layers[0].w_ih.iter().all(|v| v.abs() <= bound));
        let bound_h = 1.0 / 2.0; // 1/sqrt(4)
        assert!(m.layers[0].w_hh.iter().all(|v| v.abs() <= bound_h));
    }

    #[test]
    fn zero_cell_stays_at_rest() {
        let params = LstmLayerParams::zeros(3, 2);
        let step = lstm_cell_forward(
            &params,
            array![0.0, 0.0, 0.0].view(),
            array![0.0, 0.0].view(),
            array![0.0, 0.0].view(),
        )
        .unwrap();
        assert_eq!(step.hidden, array![0.0, 0.0]);
        assert_eq!(step.cell, array![0.0, 0.0]);
        assert_eq!(step.gate_i, array![0.5, 0.5]);
    }

    #[test]
    fn zero_cell_halves_prior_cell_state() {
        let params = LstmLayerParams::zeros(3, 2);
        let step = lstm_cell_forward(
            &params,
            array![0.3, 0.1, 0.9].view(),
            array![0.0, 0.0].view(),
            array![1.0, 1.0].view(),
        )
        .unwrap();
        let expected_h = 0.5 * 0.5_f64.tanh();
        for j in 0..2 {
            assert!((step.cell[j] - 0.5).abs() < 1e-15);
            assert!((step.hidden[j] - expected_h).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_rejects_non_finite_and_bad_shapes() {
        let params = LstmLayerParams::zeros(3, 2);
        assert!(matches!(
            lstm_cell_forward(
                &params,
                array![f64::NAN, 0.0, 0.0].view(),
                array![0.0, 0.0].view(),
                array![0.0, 0.0].view(),
            ),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            lstm_cell_forward(
                &params,
                array![0.0, 0.0].view(),
                array![0.0, 0.0].view(),
                array![0.0, 0.0].view(),
            ),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_model_outputs_head_bias() {
        let mut m = LstmModel::zeros(5, 3);
        m.head.bias = array![0.25, -0.5];
        let window = tiny_window(4, 5, 1.0);
        let (y, _) = m.forward(window.view()).unwrap();
        assert_eq!(y, array![0.25, -0.5]);
    }

    #[test]
    fn forward_single_step_matches_cell_chain() {
        let m = LstmModel::init_sized(5, 3, 21);
        let window = tiny_window(1, 5, 0.8);
        let (y, cache) = m.forward(window.view()).unwrap();

        let zeros = Array1::zeros(3);
        let mut x = window.row(0).to_owned();
        for layer in &m.layers {
            let step = lstm_cell_forward(layer, x.view(), zeros.view(), zeros.view()).unwrap();
            x = step.hidden;
        }
        let expected = m.head.weight.dot(&x) + &m.head.bias;
        for j in 0..2 {
            assert!((y[j] - expected[j]).abs() < 1e-15);
        }
        assert_eq!(cache.layers.len(), 3);
        assert_eq!(cache.layers[0].hidden.dim(), (1, 3));
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let m = LstmModel::init_sized(6, 4, 77);
        let window = tiny_window(5, 6, 1.0);
        let (a, _) = m.forward(window.view()).unwrap();
        let (b, _) = m.forward(window.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = LstmModel::init_sized(6, 4, 1);
        let bad = Array2::zeros((3, 5));
        assert!(matches!(
            m.forward(bad.view()),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut nan = Array2::zeros((3, 6));
        nan[[1, 2]] = f64::NAN;
        assert!(matches!(m.forward(nan.view()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn hidden_states_stay_bounded() {
        // |h| <= 1 because o <= 1 and |tanh| <= 1, regardless of weights.
        for seed in 0..4 {
            let mut m = LstmModel::init_sized(6, 4, seed);
            for l in m.layers.iter_mut() {
                l.w_ih *= 50.0;
                l.w_hh *= 50.0;
            }
            let window = tiny_window(12, 6, 40.0);
            let (_, cache) = m.forward(window.view()).unwrap();
            for lc in &cache.layers {
                assert!(lc.hidden.iter().all(|h| h.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_yields_zero_grads() {
        let m = LstmModel::init_sized(6, 4, 5);
        let window = tiny_window(5, 6, 1.0);
        let (_, cache) = m.forward(window.view()).unwrap();
        let grads = m.backward(&cache, array![0.0, 0.0].view()).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn head_gradient_is_outer_product() {
        let m = LstmModel::init_sized(6, 4, 11);
        let window = tiny_window(5, 6, 1.0);
        let (_, cache) = m.forward(window.view()).unwrap();
        let dl_dy = array![0.4, -0.6];
        let grads = m.backward(&cache, dl_dy.view()).unwrap();
        for r in 0..2 {
            for c in 0..4 {
                let expected = dl_dy[r] * cache.head_input[c];
                assert!((grads.head.weight[[r, c]] - expected).abs() < 1e-15);
            }
            assert_eq!(grads.head.bias[r], dl_dy[r]);
        }
    }

    #[test]
    fn backward_rejects_non_finite_upstream() {
        let m = LstmModel::init_sized(6, 4, 5);
        let window = tiny_window(5, 6, 1.0);
        let (_, cache) = m.forward(window.view()).unwrap();
        assert!(matches!(
            m.backward(&cache, array![f64::NAN, 0.0].view()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn numerical_gradient_rejects_zero_step() {
        let m = LstmModel::init_sized(4, 2, 1);
        let window = tiny_window(2, 4, 1.0);
        assert!(matches!(
            numerical_gradient(&m, window.view(), array![0.1, 0.2].view(), 0.0),
            Err(Error::BadStepSize(_))
        ));
    }

    #[test]
    fn numerical_gradient_exact_on_quadratic_head() {
        // With zero weights the loss is exactly quadratic in the head bias,
        // so the central difference is exact up to rounding.
        let mut m = LstmModel::zeros(4, 2);
        m.head.bias = array![0.3, -0.2];
        let window = tiny_window(3, 4, 1.0);
        let target = array![0.1, 0.5];
        let grads = numerical_gradient(&m, window.view(), target.view(), 1e-5).unwrap();
        let expected = [2.0 * (0.3 - 0.1), 2.0 * (-0.2 - 0.5)];
        for j in 0..2 {
            assert!(
                (grads.head.bias[j] - expected[j]).abs() < 1e-9,
                "bias grad {j}: {} vs {}",
                grads.head.bias[j],
                expected[j]
            );
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = LstmModel::init_sized(6, 4, 123);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save(&path).unwrap();
        let loaded = LstmModel::load(&path).unwrap();
        assert_eq!(loaded, m);

        let window = tiny_window(5, 6, 1.0);
        let a = m.predict(window.view()).unwrap();
        let b = loaded.predict(window.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_save_is_byte_stable() {
        let m = LstmModel::init_sized(6, 4, 123);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        m.save(&p1).unwrap();
        m.save(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn checkpoint_load_validates_dimensions() {
        let m = LstmModel::init_sized(6, 4, 123);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let truncated = text.lines().take(10).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(
            LstmModel::load(&path),
            Err(Error::Checkpoint { .. })
        ));

        let wrong_gate = text.replace("gate_order ifgo", "gate_order iofg");
        std::fs::write(&path, wrong_gate).unwrap();
        assert!(matches!(
            LstmModel::load(&path),
            Err(Error::Checkpoint { .. })
        ));

        let wrong_dim = text.replace("tensor layer0.w_ih 16 6", "tensor layer0.w_ih 16 7");
        std::fs::write(&path, wrong_dim).unwrap();
        assert!(matches!(
            LstmModel::load(&path),
            Err(Error::Checkpoint { .. })
        ));
    }
}
