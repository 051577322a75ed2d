//! Single-layer LSTM with a linear count head, and exact gradients by
//! backpropagation through time.
//!
//! Per step, with `σ` the logistic function:
//!
//! ```text
//! i = σ(W_i h + U_i x + b_i)      f = σ(W_f h + U_f x + b_f)
//! o = σ(W_o h + U_o x + b_o)      g = tanh(W_c h + U_c x + b_c)
//! c' = i ⊙ g + f ⊙ c
//! h' = o ⊙ c'            (default)
//! h' = o ⊙ tanh(c')      (with `follow_paper_hidden_update = false`)
//! ```
//!
//! The prediction after the last step is `z = W_p · h + b_p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ByteCursor, NormStats};
use crate::error::{Error, Result};
use crate::ingest::{FEATURE_DIM, FEATURE_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `h = o ⊙ c` when true, the conventional `h = o ⊙ tanh(c)` when false.
    pub follow_paper_hidden_update: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: FEATURE_DIM,
            hidden_dim: 32,
            follow_paper_hidden_update: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "model dims must be positive, got input {} hidden {}",
                self.input_dim, self.hidden_dim
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        4 * (h * h + h * self.input_dim + h) + h + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];
}

/// All weights in one flat buffer, laid out as
/// `W_i W_f W_o W_c | U_i U_f U_o U_c | b_i b_f b_o b_c | W_p | b_p`,
/// matrices row-major. Gradients share the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    data: Vec<f64>,
}

pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        ModelParams {
            config,
            data: vec![0.0; config.param_count()],
        }
    }

    pub fn from_flat(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                config.param_count(),
                data.len()
            )));
        }
        Ok(ModelParams { config, data })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn hh(&self) -> usize {
        self.config.hidden_dim * self.config.hidden_dim
    }

    fn hx(&self) -> usize {
        self.config.hidden_dim * self.config.input_dim
    }

    fn w_range(&self, g: Gate) -> std::ops::Range<usize> {
        let s = g as usize * self.hh();
        s..s + self.hh()
    }

    fn u_range(&self, g: Gate) -> std::ops::Range<usize> {
        let s = 4 * self.hh() + g as usize * self.hx();
        s..s + self.hx()
    }

    fn b_range(&self, g: Gate) -> std::ops::Range<usize> {
        let h = self.config.hidden_dim;
        let s = 4 * (self.hh() + self.hx()) + g as usize * h;
        s..s + h
    }

    fn wp_range(&self) -> std::ops::Range<usize> {
        let h = self.config.hidden_dim;
        let s = 4 * (self.hh() + self.hx() + h);
        s..s + h
    }

    /// Recurrent weights, hidden × hidden.
    pub fn w(&self, g: Gate) -> &[f64] {
        &self.data[self.w_range(g)]
    }

    pub fn w_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.w_range(g);
        &mut self.data[r]
    }

    /// Input weights, hidden × input.
    pub fn u(&self, g: Gate) -> &[f64] {
        &self.data[self.u_range(g)]
    }

    pub fn u_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.u_range(g);
        &mut self.data[r]
    }

    pub fn b(&self, g: Gate) -> &[f64] {
        &self.data[self.b_range(g)]
    }

    pub fn b_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.b_range(g);
        &mut self.data[r]
    }

    pub fn w_p(&self) -> &[f64] {
        &self.data[self.wp_range()]
    }

    pub fn w_p_mut(&mut self) -> &mut [f64] {
        let r = self.wp_range();
        &mut self.data[r]
    }

    pub fn b_p(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    pub fn set_b_p(&mut self, v: f64) {
        let n = self.data.len();
        self.data[n - 1] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += other`, elementwise.
    pub fn accumulate(&mut self, other: &ModelParams) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        if self.config.input_dim != other.config.input_dim
            || self.config.hidden_dim != other.config.hidden_dim
        {
            return Err(Error::Shape(format!(
                "parameter sets differ: {}x{} vs {}x{}",
                self.config.hidden_dim,
                self.config.input_dim,
                other.config.hidden_dim,
                other.config.input_dim
            )));
        }
        Ok(())
    }
}

/// Weights uniform in ±1/√hidden; biases zero except the forget-gate bias, which starts at 1.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (config.hidden_dim as f64).sqrt();
    let mut p = ModelParams::zeros(config);
    for g in Gate::ALL {
        p.w_mut(g)
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..=bound));
    }
    for g in Gate::ALL {
        p.u_mut(g)
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..=bound));
    }
    p.w_p_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-bound..=bound));
    p.b_mut(Gate::Forget).iter_mut().for_each(|v| *v = 1.0);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Gate activations for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub candidate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub x: Vec<f64>,
    pub prev: CellState,
    pub gates: GateRecord,
    pub next: CellState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hidden_dim: usize,
    pub steps: Vec<StepTrace>,
    pub z: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `out = W h + U x + b` for one gate.
fn preactivation(params: &ModelParams, g: Gate, h: &[f64], x: &[f64], out: &mut [f64]) {
    let n_h = params.config.hidden_dim;
    let n_x = params.config.input_dim;
    let w = params.w(g);
    let u = params.u(g);
    let b = params.b(g);
    for r in 0..n_h {
        let wr = &w[r * n_h..(r + 1) * n_h];
        let ur = &u[r * n_x..(r + 1) * n_x];
        let mut acc = b[r];
        for (a, v) in wr.iter().zip(h) {
            acc += a * v;
        }
        for (a, v) in ur.iter().zip(x) {
            acc += a * v;
        }
        out[r] = acc;
    }
}

pub fn cell_forward(
    x: &[f64],
    prev: &CellState,
    params: &ModelParams,
) -> Result<(CellState, GateRecord)> {
    let cfg = params.config;
    if x.len() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            cfg.input_dim
        )));
    }
    if prev.h.len() != cfg.hidden_dim || prev.c.len() != cfg.hidden_dim {
        return Err(Error::Shape(format!(
            "state has sizes h={} c={}, model hidden is {}",
            prev.h.len(),
            prev.c.len(),
            cfg.hidden_dim
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input feature {i}")));
    }

    let n = cfg.hidden_dim;
    let mut gates = GateRecord {
        input: vec![0.0; n],
        forget: vec![0.0; n],
        output: vec![0.0; n],
        candidate: vec![0.0; n],
    };
    preactivation(params, Gate::Input, &prev.h, x, &mut gates.input);
    preactivation(params, Gate::Forget, &prev.h, x, &mut gates.forget);
    preactivation(params, Gate::Output, &prev.h, x, &mut gates.output);
    preactivation(params, Gate::Candidate, &prev.h, x, &mut gates.candidate);
    for r in 0..n {
        gates.input[r] = sigmoid(gates.input[r]);
        gates.forget[r] = sigmoid(gates.forget[r]);
        gates.output[r] = sigmoid(gates.output[r]);
        gates.candidate[r] = gates.candidate[r].tanh();
    }

    let mut next = CellState::zeros(n);
    for r in 0..n {
        let c = gates.input[r] * gates.candidate[r] + gates.forget[r] * prev.c[r];
        next.c[r] = c;
        next.h[r] = if cfg.follow_paper_hidden_update {
            gates.output[r] * c
        } else {
            gates.output[r] * c.tanh()
        };
    }
    Ok((next, gates))
}

/// Runs the recurrence from a zero state over `inputs` and applies the head
/// to the final hidden state.
pub fn forward<X: AsRef<[f64]>>(inputs: &[X], params: &ModelParams) -> Result<(f64, ForwardTrace)> {
    let n = params.config.hidden_dim;
    let mut state = CellState::zeros(n);
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let x = x.as_ref();
        let (next, gates) = cell_forward(x, &state, params)?;
        steps.push(StepTrace {
            x: x.to_vec(),
            prev: state,
            gates,
            next: next.clone(),
        });
        state = next;
    }
    let z = head(&state.h, params);
    Ok((
        z,
        ForwardTrace {
            hidden_dim: n,
            steps,
            z,
        },
    ))
}

pub fn predict<X: AsRef<[f64]>>(inputs: &[X], params: &ModelParams) -> Result<f64> {
    forward(inputs, params).map(|(z, _)| z)
}

fn head(h: &[f64], params: &ModelParams) -> f64 {
    params.w_p().iter().zip(h).map(|(a, b)| a * b).sum::<f64>() + params.b_p()
}

/// Gradient of `dloss_dz · z` with respect to every parameter.
pub fn backward(trace: &ForwardTrace, dloss_dz: f64, params: &ModelParams) -> Result<Gradients> {
    let mut grads = ModelParams::zeros(params.config);
    backward_accumulate(trace, dloss_dz, params, &mut grads)?;
    Ok(grads)
}

/// As [`backward`], adding into an existing gradient buffer.
pub fn backward_accumulate(
    trace: &ForwardTrace,
    dloss_dz: f64,
    params: &ModelParams,
    grads: &mut Gradients,
) -> Result<()> {
    let cfg = params.config;
    let n = cfg.hidden_dim;
    let n_x = cfg.input_dim;
    if trace.hidden_dim != n {
        return Err(Error::Shape(format!(
            "trace hidden dim {} does not match params {}",
            trace.hidden_dim, n
        )));
    }
    if let Some(s) = trace.steps.iter().find(|s| s.x.len() != n_x) {
        return Err(Error::Shape(format!(
            "trace input dim {} does not match params {}",
            s.x.len(),
            n_x
        )));
    }
    params.check_same_shape(grads)?;
    if !dloss_dz.is_finite() {
        return Err(Error::NonFinite("loss gradient".into()));
    }

    let h_last = trace.steps.last().map(|s| s.next.h.as_slice());
    {
        let gp = grads.w_p_mut();
        if let Some(h) = h_last {
            for r in 0..n {
                gp[r] += dloss_dz * h[r];
            }
        }
    }
    let b_p = grads.b_p();
    grads.set_b_p(b_p + dloss_dz);
    if dloss_dz == 0.0 {
        return Ok(());
    }

    let mut dh: Vec<f64> = params.w_p().iter().map(|w| w * dloss_dz).collect();
    let mut dc = vec![0.0; n];
    // Pre-activation gradients, gate order i, f, o, c.
    let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];

    for step in trace.steps.iter().rev() {
        let gt = &step.gates;
        for r in 0..n {
            let c = step.next.c[r];
            let (d_out, dc_total) = if cfg.follow_paper_hidden_update {
                (dh[r] * c, dc[r] + dh[r] * gt.output[r])
            } else {
                let t = c.tanh();
                (dh[r] * t, dc[r] + dh[r] * gt.output[r] * (1.0 - t * t))
            };
            let d_in = dc_total * gt.candidate[r];
            let d_forget = dc_total * step.prev.c[r];
            let d_cand = dc_total * gt.input[r];
            dc[r] = dc_total * gt.forget[r];

            da[0][r] = d_in * gt.input[r] * (1.0 - gt.input[r]);
            da[1][r] = d_forget * gt.forget[r] * (1.0 - gt.forget[r]);
            da[2][r] = d_out * gt.output[r] * (1.0 - gt.output[r]);
            da[3][r] = d_cand * (1.0 - gt.candidate[r] * gt.candidate[r]);
        }

        for (gi, g) in Gate::ALL.into_iter().enumerate() {
            let a = &da[gi];
            {
                let gw = grads.w_mut(g);
                for r in 0..n {
                    let row = &mut gw[r * n..(r + 1) * n];
                    for (slot, hp) in row.iter_mut().zip(&step.prev.h) {
                        *slot += a[r] * hp;
                    }
                }
            }
            {
                let gu = grads.u_mut(g);
                for r in 0..n {
                    let row = &mut gu[r * n_x..(r + 1) * n_x];
                    for (slot, xv) in row.iter_mut().zip(&step.x) {
                        *slot += a[r] * xv;
                    }
                }
            }
            let gb = grads.b_mut(g);
            for r in 0..n {
                gb[r] += a[r];
            }
        }

        dh.iter_mut().for_each(|v| *v = 0.0);
        for (gi, g) in Gate::ALL.into_iter().enumerate() {
            let w = params.w(g);
            let a = &da[gi];
            for r in 0..n {
                let row = &w[r * n..(r + 1) * n];
                for (k, wv) in row.iter().enumerate() {
                    dh[k] += wv * a[r];
                }
            }
        }
    }
    Ok(())
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LCSTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_HEADER: usize = 8 + 4 * 5 + 8;

/// A trained model with the input normalisation it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub params: ModelParams,
    pub norm: NormStats,
}

impl Checkpoint {
    pub fn new(params: ModelParams, norm: NormStats) -> Self {
        Checkpoint {
            schema_version: FEATURE_SCHEMA_VERSION,
            params,
            norm,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }
}

/// Serialises a checkpoint. Layout, all little-endian:
///
/// ```text
/// magic "LCSTCKPT" | version u32 | schema u32 | input_dim u32 | hidden_dim u32
/// | flags u32 (bit 0: h = o * c) | param_count u64
/// | params f64 × param_count (ModelParams order)
/// | norm mean f64 × input_dim | norm std f64 × input_dim
/// ```
pub fn save_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let cfg = ckpt.params.config();
    if cfg.input_dim != FEATURE_DIM {
        return Err(Error::Checkpoint(format!(
            "checkpoints carry {FEATURE_DIM}-dim normalisation, model input is {}",
            cfg.input_dim
        )));
    }
    let mut buf = Vec::with_capacity(CHECKPOINT_HEADER + 8 * (ckpt.params.len() + 2 * FEATURE_DIM));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let flags = cfg.follow_paper_hidden_update as u32;
    for v in [
        CHECKPOINT_VERSION,
        ckpt.schema_version,
        cfg.input_dim as u32,
        cfg.hidden_dim as u32,
        flags,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(ckpt.params.len() as u64).to_le_bytes());
    for v in ckpt
        .params
        .as_slice()
        .iter()
        .chain(&ckpt.norm.mean)
        .chain(&ckpt.norm.std)
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = ByteCursor::new(bytes, "checkpoint");
    cur.require(CHECKPOINT_HEADER)?;
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let schema_version = cur.u32()?;
    let input_dim = cur.u32()? as usize;
    let hidden_dim = cur.u32()? as usize;
    let flags = cur.u32()?;
    let count = cur.u64()? as usize;
    if flags > 1 {
        return Err(Error::Checkpoint(format!("unknown flag bits {flags:#x}")));
    }
    let config = ModelConfig {
        input_dim,
        hidden_dim,
        follow_paper_hidden_update: flags & 1 == 1,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if input_dim != FEATURE_DIM || count != config.param_count() {
        return Err(Error::Checkpoint(format!(
            "inconsistent header: input {input_dim}, hidden {hidden_dim}, {count} parameters"
        )));
    }
    let expected = CHECKPOINT_HEADER + 8 * (count + 2 * FEATURE_DIM);
    cur.require(expected)?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "trailing data: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let data = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let mut norm = NormStats::identity();
    for v in norm.mean.iter_mut() {
        *v = cur.f64()?;
    }
    for v in norm.std.iter_mut() {
        *v = cur.f64()?;
    }
    Ok(Checkpoint {
        schema_version,
        params: ModelParams::from_flat(config, data)?,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(input: usize, hidden: usize, raw_cell: bool) -> ModelConfig {
        ModelConfig {
            input_dim: input,
            hidden_dim: hidden,
            follow_paper_hidden_update: raw_cell,
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = ModelConfig::default();
        let a = init_params(c, 7).unwrap();
        let b = init_params(c, 7).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, init_params(c, 8).unwrap());
        let bound = 1.0 / 32f64.sqrt();
        for g in Gate::ALL {
            assert!(a.w(g).iter().chain(a.u(g)).all(|v| v.abs() <= bound));
        }
        assert!(a.w_p().iter().all(|v| v.abs() <= bound));
        assert!(a.b(Gate::Forget).iter().all(|v| *v == 1.0));
        for g in [Gate::Input, Gate::Output, Gate::Candidate] {
            assert!(a.b(g).iter().all(|v| *v == 0.0));
        }
        assert_eq!(a.b_p(), 0.0);
    }

    #[test]
    fn zero_params_from_zero_state() {
        let p = ModelParams::zeros(cfg(3, 2, true));
        let (next, g) = cell_forward(&[1.0, -2.0, 0.3], &CellState::zeros(2), &p).unwrap();
        assert_eq!(g.input, vec![0.5, 0.5]);
        assert_eq!(g.forget, vec![0.5, 0.5]);
        assert_eq!(g.output, vec![0.5, 0.5]);
        assert_eq!(g.candidate, vec![0.0, 0.0]);
        assert_eq!(next, CellState::zeros(2));
    }

    #[test]
    fn zero_params_carry_cell_state() {
        let p = ModelParams::zeros(cfg(3, 2, true));
        let prev = CellState {
            h: vec![0.0; 2],
            c: vec![1.0; 2],
        };
        let (next, _) = cell_forward(&[0.4, 0.0, 9.0], &prev, &p).unwrap();
        assert_eq!(next.c, vec![0.5, 0.5]);
        assert_eq!(next.h, vec![0.25, 0.25]);
    }

    #[test]
    fn scalar_cell_hand_values() {
        let mut p = ModelParams::zeros(cfg(1, 1, true));
        for g in Gate::ALL {
            p.u_mut(g)[0] = 1.0;
        }
        let (next, g) = cell_forward(&[0.5], &CellState::zeros(1), &p).unwrap();
        assert!((g.input[0] - 0.622459).abs() < 1e-6);
        assert!((g.candidate[0] - 0.462117).abs() < 1e-6);
        assert!((next.c[0] - 0.287649).abs() < 1e-6);
        assert!((next.h[0] - 0.179050).abs() < 1e-6);
    }

    #[test]
    fn cell_rejects_bad_inputs() {
        let p = ModelParams::zeros(cfg(2, 2, true));
        assert!(matches!(
            cell_forward(&[1.0], &CellState::zeros(2), &p),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cell_forward(&[1.0, 0.0], &CellState::zeros(3), &p),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cell_forward(&[f64::NAN, 0.0], &CellState::zeros(2), &p),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn forward_head_cases() {
        let mut p = ModelParams::zeros(cfg(15, 4, true));
        let xs = vec![[1.0; 15]; 12];
        assert_eq!(predict(&xs, &p).unwrap(), 0.0);
        p.set_b_p(3.5);
        assert_eq!(predict(&xs, &p).unwrap(), 3.5);
    }

    #[test]
    fn backward_trivial_cases() {
        let p = init_params(cfg(3, 4, true), 1).unwrap();
        let xs = vec![vec![0.3, -0.1, 0.7]; 5];
        let (_, trace) = forward(&xs, &p).unwrap();
        let g0 = backward(&trace, 0.0, &p).unwrap();
        assert!(g0.as_slice().iter().all(|v| *v == 0.0));
        let g = backward(&trace, 1.7, &p).unwrap();
        assert_eq!(g.b_p(), 1.7);

        let other = init_params(cfg(3, 5, true), 1).unwrap();
        assert!(backward(&trace, 1.0, &other).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let p = init_params(ModelConfig::default(), 3).unwrap();
        let mut norm = NormStats::identity();
        norm.mean[0] = 0.25;
        norm.std[2] = 7.5;
        let ck = Checkpoint::new(p, norm);
        let bytes = save_checkpoint(&ck).unwrap();
        let back = load_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert!(back
            .params
            .as_slice()
            .iter()
            .zip(ck.params.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));

        match load_checkpoint(&bytes[..bytes.len() - 5]) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, bytes.len() - 5);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(matches!(
            load_checkpoint(&bytes[..10]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[3] ^= 0xff;
        assert!(matches!(load_checkpoint(&bad), Err(Error::Checkpoint(_))));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(
            load_checkpoint(&bad_version),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn checkpoint_keeps_variant_flag() {
        let p = init_params(cfg(15, 3, false), 3).unwrap();
        let ck = Checkpoint::new(p, NormStats::identity());
        let back = load_checkpoint(&save_checkpoint(&ck).unwrap()).unwrap();
        assert!(!back.config().follow_paper_hidden_update);
    }

    proptest! {
        #[test]
        fn gates_stay_in_range(seed in any::<u64>(), xs in prop::collection::vec(-20.0f64..20.0, 3), raw_cell in any::<bool>()) {
            let p = init_params(cfg(3, 4, raw_cell), seed).unwrap();
            let steps: Vec<Vec<f64>> = (0..6).map(|i| xs.iter().map(|v| v * (i as f64 - 2.5)).collect()).collect();
            let (z1, trace) = forward(&steps, &p).unwrap();
            for s in &trace.steps {
                for v in s.gates.input.iter().chain(&s.gates.forget).chain(&s.gates.output) {
                    prop_assert!(*v >= 0.0 && *v <= 1.0);
                }
                for v in &s.gates.candidate {
                    prop_assert!(*v >= -1.0 && *v <= 1.0);
                }
                if !raw_cell {
                    prop_assert!(s.next.h.iter().all(|h| h.abs() < 1.0));
                }
            }
            let z2 = predict(&steps, &p).unwrap();
            prop_assert_eq!(z1.to_bits(), z2.to_bits());
        }
    }
}
