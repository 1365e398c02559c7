use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{accumulate_outer, accumulate_product, accumulate_transposed, sigmoid, softmax};
use super::predict::{cross_entropy, PredictionDistribution};
use super::TrainingConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate names in storage order.
    pub fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "g", "o"],
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Config(format!("unknown cell {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Parameter offsets of one recurrent layer, one entry per gate.
#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    input: usize,
    hidden: usize,
    w: Vec<usize>,
    u: Vec<usize>,
    b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct HeadLayout {
    hidden: usize,
    width: usize,
    out: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Borrowed weights of one recurrent cell. Input weights are `input × hidden`,
/// recurrent weights `hidden × hidden`, both input-major.
#[derive(Debug, Clone)]
pub struct CellParams<'a> {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<&'a [f64]>,
    pub u: Vec<&'a [f64]>,
    pub b: Vec<&'a [f64]>,
}

/// Everything the backward pass needs from one time step.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gate values, one vector per gate.
    acts: Vec<Vec<f64>>,
    /// GRU: `U_n h_prev`. LSTM: `tanh(c)`.
    aux: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

fn pre_activation(p: &CellParams, gate: usize, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = p.b[gate].to_vec();
    accumulate_product(&mut a, p.w[gate], x);
    accumulate_product(&mut a, p.u[gate], h);
    a
}

fn gru_step(p: &CellParams, x: &[f64], h: &[f64]) -> StepCache {
    let z: Vec<f64> = pre_activation(p, 0, x, h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = pre_activation(p, 1, x, h).into_iter().map(sigmoid).collect();
    let mut uh_n = vec![0.0; p.hidden];
    accumulate_product(&mut uh_n, p.u[2], h);
    let mut a_n = p.b[2].to_vec();
    accumulate_product(&mut a_n, p.w[2], x);
    let n: Vec<f64> = a_n
        .iter()
        .zip(&r)
        .zip(&uh_n)
        .map(|((a, r), u)| (a + r * u).tanh())
        .collect();
    let h_new = (0..p.hidden).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: Vec::new(),
        acts: vec![z, r, n],
        aux: uh_n,
        h: h_new,
        c: Vec::new(),
    }
}

fn lstm_step(p: &CellParams, x: &[f64], h: &[f64], c: &[f64]) -> StepCache {
    let gate = |k: usize, f: fn(f64) -> f64| -> Vec<f64> {
        pre_activation(p, k, x, h).into_iter().map(f).collect()
    };
    let i = gate(0, sigmoid);
    let f = gate(1, sigmoid);
    let g = gate(2, f64::tanh);
    let o = gate(3, sigmoid);
    let c_new: Vec<f64> = (0..p.hidden).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
    let tc: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new = o.iter().zip(&tc).map(|(o, t)| o * t).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        acts: vec![i, f, g, o],
        aux: tc,
        h: h_new,
        c: c_new,
    }
}

/// One GRU step:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `n = tanh(W_n x + r∘(U_n h) + b_n)`, `h' = (1−z)∘n + z∘h`.
pub fn gru_forward(p: &CellParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    assert_eq!(p.kind, CellKind::Gru);
    gru_step(p, x, h).h
}

/// One LSTM step, returning `(h', c')`.
pub fn lstm_forward(p: &CellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p.kind, CellKind::Lstm);
    let s = lstm_step(p, x, h, c);
    (s.h, s.c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: TrainingConfig,
    n_actions: usize,
    n_apps: usize,
    tensors: Vec<TensorInfo>,
    layers: Vec<LayerLayout>,
    head: HeadLayout,
    params: Vec<f64>,
}

impl Model {
    /// Randomly initialized model: every parameter uniform in ±1/√hidden_size.
    pub fn new(config: TrainingConfig, n_actions: usize, n_apps: usize) -> Result<Self> {
        let mut model = Self::zeros(config, n_actions, n_apps)?;
        let k = 1.0 / (model.config.hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        for p in &mut model.params {
            *p = rng.gen_range(-k..=k);
        }
        Ok(model)
    }

    pub fn zeros(config: TrainingConfig, n_actions: usize, n_apps: usize) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 {
            return Err(Error::Dimension("vocabulary must not be empty".into()));
        }
        let input = n_actions + n_apps + 3;
        let hidden = config.hidden_size;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let t = TensorInfo { name, shape, offset };
            offset += t.len();
            let off = t.offset;
            tensors.push(t);
            off
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let layer_in = if l == 0 { input } else { hidden };
            let gates = config.cell.gates();
            let w = gates.iter().map(|g| push(format!("l{l}.W_{g}"), vec![layer_in, hidden])).collect();
            let u = gates.iter().map(|g| push(format!("l{l}.U_{g}"), vec![hidden, hidden])).collect();
            let b = gates.iter().map(|g| push(format!("l{l}.b_{g}"), vec![hidden])).collect();
            layers.push(LayerLayout { input: layer_in, hidden, w, u, b });
        }
        let width = config.head_width();
        let head = HeadLayout {
            hidden,
            width,
            out: n_actions,
            w1: push("head.W1".into(), vec![hidden, width]),
            b1: push("head.b1".into(), vec![width]),
            w2: push("head.W2".into(), vec![width, n_actions]),
            b2: push("head.b2".into(), vec![n_actions]),
        };
        Ok(Self {
            config,
            n_actions,
            n_apps,
            tensors,
            layers,
            head,
            params: vec![0.0; offset],
        })
    }

    /// Rebuilds a model from a flat parameter vector in layout order.
    pub fn from_params(config: TrainingConfig, n_actions: usize, n_apps: usize, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(config, n_actions, n_apps)?;
        if params.len() != model.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_apps(&self) -> usize {
        self.n_apps
    }

    pub fn input_dim(&self) -> usize {
        self.n_actions + self.n_apps + 3
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.tensors.iter().find(|t| t.name == name)?.range();
        Some(&mut self.params[range])
    }

    pub fn cell(&self, layer: usize) -> CellParams<'_> {
        let lay = &self.layers[layer];
        let (inp, hid) = (lay.input, lay.hidden);
        let slice = |off: usize, len: usize| &self.params[off..off + len];
        CellParams {
            kind: self.config.cell,
            input: inp,
            hidden: hid,
            w: lay.w.iter().map(|&o| slice(o, inp * hid)).collect(),
            u: lay.u.iter().map(|&o| slice(o, hid * hid)).collect(),
            b: lay.b.iter().map(|&o| slice(o, hid)).collect(),
        }
    }

    fn check_window(&self, window: &[&[f64]]) -> Result<()> {
        if window.len() != self.config.n_past {
            return Err(Error::Dimension(format!(
                "window has {} steps, model expects {}",
                window.len(),
                self.config.n_past
            )));
        }
        if let Some(bad) = window.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::Dimension(format!(
                "feature vector of length {}, model expects {}",
                bad.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs every layer over the window from a zero state, keeping all step caches.
    fn trace(&self, window: &[&[f64]]) -> Vec<Vec<StepCache>> {
        let hidden = self.config.hidden_size;
        let mut traces: Vec<Vec<StepCache>> = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let p = self.cell(l);
            let mut h = vec![0.0; hidden];
            let mut c = vec![0.0; hidden];
            let mut steps = Vec::with_capacity(window.len());
            for t in 0..window.len() {
                let x: &[f64] = if l == 0 { window[t] } else { &traces[l - 1][t].h };
                let s = match p.kind {
                    CellKind::Gru => gru_step(&p, x, &h),
                    CellKind::Lstm => lstm_step(&p, x, &h, &c),
                };
                h.clone_from(&s.h);
                c.clone_from(&s.c);
                steps.push(s);
            }
            traces.push(steps);
        }
        traces
    }

    /// Returns the head's hidden activation and the output distribution.
    fn head_forward(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = &self.head;
        let mut a1 = self.params[hd.b1..hd.b1 + hd.width].to_vec();
        accumulate_product(&mut a1, &self.params[hd.w1..hd.w1 + hd.hidden * hd.width], h);
        let m: Vec<f64> = a1.into_iter().map(f64::tanh).collect();
        let mut logits = self.params[hd.b2..hd.b2 + hd.out].to_vec();
        accumulate_product(&mut logits, &self.params[hd.w2..hd.w2 + hd.width * hd.out], &m);
        (m, softmax(&logits))
    }

    pub fn forward(&self, window: &[&[f64]]) -> Result<PredictionDistribution> {
        self.check_window(window)?;
        let traces = self.trace(window);
        let last = &traces.last().expect("at least one layer").last().expect("n_past >= 1").h;
        Ok(PredictionDistribution::new(self.head_forward(last).1))
    }

    /// Loss and exact gradient of the cross-entropy of the prediction for `target`.
    pub fn backward(&self, window: &[&[f64]], target: usize) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(window, target, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale ·` the gradient for one example into `grad`; returns the loss.
    pub fn accumulate_gradient(&self, window: &[&[f64]], target: usize, scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_window(window)?;
        if target >= self.n_actions {
            return Err(Error::Dimension(format!("target {target} outside vocabulary of {}", self.n_actions)));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension("gradient buffer has the wrong length".into()));
        }
        let traces = self.trace(window);
        let h_last = &traces.last().expect("layer").last().expect("step").h;
        let (m, probs) = self.head_forward(h_last);
        let loss = cross_entropy(&PredictionDistribution::new(probs.clone()), target);

        let hd = &self.head;
        let mut dlogits = probs;
        dlogits[target] -= 1.0;
        for d in &mut dlogits {
            *d *= scale;
        }
        accumulate_outer(&mut grad[hd.w2..hd.w2 + hd.width * hd.out], &m, &dlogits);
        add_into(&mut grad[hd.b2..hd.b2 + hd.out], &dlogits);
        let mut dm = vec![0.0; hd.width];
        accumulate_transposed(&mut dm, &self.params[hd.w2..hd.w2 + hd.width * hd.out], &dlogits);
        let da1: Vec<f64> = dm.iter().zip(&m).map(|(d, m)| d * (1.0 - m * m)).collect();
        accumulate_outer(&mut grad[hd.w1..hd.w1 + hd.hidden * hd.width], h_last, &da1);
        add_into(&mut grad[hd.b1..hd.b1 + hd.width], &da1);
        let mut dh_last = vec![0.0; hd.hidden];
        accumulate_transposed(&mut dh_last, &self.params[hd.w1..hd.w1 + hd.hidden * hd.width], &da1);

        let steps = window.len();
        let mut dh_out = vec![vec![0.0; self.config.hidden_size]; steps];
        dh_out[steps - 1] = dh_last;
        for l in (0..self.layers.len()).rev() {
            dh_out = self.layer_backward(l, &traces[l], &dh_out, grad, l > 0);
        }
        Ok(loss)
    }

    /// Back-propagation through time for one layer. `dh_out[t]` is the loss
    /// gradient with respect to that layer's output at step `t` from above.
    /// Returns the gradient with respect to the layer inputs when `need_dx`.
    fn layer_backward(
        &self,
        layer: usize,
        steps: &[StepCache],
        dh_out: &[Vec<f64>],
        grad: &mut [f64],
        need_dx: bool,
    ) -> Vec<Vec<f64>> {
        let lay = &self.layers[layer];
        let p = self.cell(layer);
        let (inp, hid) = (lay.input, lay.hidden);
        let mut dh_next = vec![0.0; hid];
        let mut dc_next = vec![0.0; hid];
        let mut dxs = vec![Vec::new(); steps.len()];

        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let dh: Vec<f64> = dh_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let mut dh_prev = vec![0.0; hid];
            // gradients w.r.t. gate pre-activations; for the GRU candidate gate the
            // recurrent part is gated by r, so it gets its own vector
            let mut da: Vec<Vec<f64>> = Vec::with_capacity(p.w.len());
            let mut d_recurrent: Vec<Vec<f64>> = Vec::with_capacity(p.w.len());
            match p.kind {
                CellKind::Gru => {
                    let (z, r, n) = (&s.acts[0], &s.acts[1], &s.acts[2]);
                    let mut da_z = vec![0.0; hid];
                    let mut da_r = vec![0.0; hid];
                    let mut da_n = vec![0.0; hid];
                    let mut d_uhn = vec![0.0; hid];
                    for j in 0..hid {
                        dh_prev[j] = dh[j] * z[j];
                        da_z[j] = dh[j] * (s.h_prev[j] - n[j]) * z[j] * (1.0 - z[j]);
                        da_n[j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                        d_uhn[j] = da_n[j] * r[j];
                        da_r[j] = da_n[j] * s.aux[j] * r[j] * (1.0 - r[j]);
                    }
                    d_recurrent.extend([da_z.clone(), da_r.clone(), d_uhn]);
                    da.extend([da_z, da_r, da_n]);
                }
                CellKind::Lstm => {
                    let (i, f, g, o) = (&s.acts[0], &s.acts[1], &s.acts[2], &s.acts[3]);
                    let tc = &s.aux;
                    let mut gates = vec![vec![0.0; hid]; 4];
                    for j in 0..hid {
                        let dc = dc_next[j] + dh[j] * o[j] * (1.0 - tc[j] * tc[j]);
                        gates[0][j] = dc * g[j] * i[j] * (1.0 - i[j]);
                        gates[1][j] = dc * s.c_prev[j] * f[j] * (1.0 - f[j]);
                        gates[2][j] = dc * i[j] * (1.0 - g[j] * g[j]);
                        gates[3][j] = dh[j] * tc[j] * o[j] * (1.0 - o[j]);
                        dc_next[j] = dc * f[j];
                    }
                    d_recurrent.extend(gates.iter().cloned());
                    da = gates;
                }
            }
            for k in 0..da.len() {
                accumulate_outer(&mut grad[lay.w[k]..lay.w[k] + inp * hid], &s.x, &da[k]);
                accumulate_outer(&mut grad[lay.u[k]..lay.u[k] + hid * hid], &s.h_prev, &d_recurrent[k]);
                add_into(&mut grad[lay.b[k]..lay.b[k] + hid], &da[k]);
                accumulate_transposed(&mut dh_prev, p.u[k], &d_recurrent[k]);
            }
            if need_dx {
                let mut dx = vec![0.0; inp];
                for k in 0..da.len() {
                    accumulate_transposed(&mut dx, p.w[k], &da[k]);
                }
                dxs[t] = dx;
            }
            dh_next = dh_prev;
        }
        dxs
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
