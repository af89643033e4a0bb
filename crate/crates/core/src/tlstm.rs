//! Time-aware LSTM: a standard LSTM cell whose previous memory is scaled by
//! a learned sigmoid gate of the elapsed time since the last observation.

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, SeededRng, Tensor, Var};

const GATES: [&str; 4] = ["i", "f", "o", "c"];
const I: usize = 0;
const F: usize = 1;
const O: usize = 2;
const C: usize = 3;

/// Parameter handles for one encoder. Matrices are stored output-major, so
/// `W_*` is `h×d`, `U_*` is `h×h` and `W_T` is `h×1`; biases are `1×h`.
#[derive(Clone, Debug)]
pub struct TLstm {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Forces the decay gate to 1, giving a plain LSTM.
    pub bypass_decay: bool,
    pub w_t: ParamId,
    pub b_t: ParamId,
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TLstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl TLstmState {
    pub fn zeros(h: usize) -> Self {
        Self {
            c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

pub(crate) fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut SeededRng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

impl TLstm {
    /// Registers parameters under `prefix`. Matrices are uniform in
    /// `±1/sqrt(h)`, biases zero except the forget bias at 1.
    pub fn new(store: &mut ParamStore, prefix: &str, input_size: usize, hidden_size: usize, rng: &mut SeededRng) -> Self {
        let h = hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let w_t = store.add(format!("{prefix}.W_T"), uniform(h, 1, bound, rng));
        let b_t = store.add(format!("{prefix}.b_T"), Tensor::zeros(1, h));
        let w = GATES.map(|g| store.add(format!("{prefix}.W_{g}"), uniform(h, input_size, bound, rng)));
        let u = GATES.map(|g| store.add(format!("{prefix}.U_{g}"), uniform(h, h, bound, rng)));
        let b = GATES.map(|g| {
            let init = if g == "f" { 1.0 } else { 0.0 };
            store.add(format!("{prefix}.b_{g}"), Tensor::filled(1, h, init))
        });
        Self {
            input_size,
            hidden_size,
            bypass_decay: false,
            w_t,
            b_t,
            w,
            u,
            b,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.w_t, self.b_t];
        v.extend(self.w);
        v.extend(self.u);
        v.extend(self.b);
        v
    }

    /// `sigmoid(W_T·Δt + b_T)` for a `B×1` column of gaps.
    pub fn decay_gate_var(&self, g: &mut Graph, store: &ParamStore, dt: Var) -> Var {
        let w_t = g.param(store, self.w_t);
        let b_t = g.param(store, self.b_t);
        let a = g.affine(dt, w_t, b_t);
        g.sigmoid(a)
    }

    fn gate(&self, g: &mut Graph, store: &ParamStore, k: usize, x: Var, h: Var) -> Var {
        let w = g.param(store, self.w[k]);
        let u = g.param(store, self.u[k]);
        let b = g.param(store, self.b[k]);
        let wx = g.affine(x, w, b);
        let uh = g.matmul_t(h, u);
        g.add(wx, uh)
    }

    /// One batched cell update. `x` is `B×d`, `dt` is `B×1`, `c`/`h` are
    /// `B×h`. Returns the new `(c, h)`.
    pub fn step_var(&self, g: &mut Graph, store: &ParamStore, x: Var, dt: Var, c: Var, h: Var) -> (Var, Var) {
        let c_decayed = if self.bypass_decay {
            c
        } else {
            let t = self.decay_gate_var(g, store, dt);
            g.mul(t, c)
        };
        let pre_i = self.gate(g, store, I, x, h);
        let pre_f = self.gate(g, store, F, x, h);
        let pre_o = self.gate(g, store, O, x, h);
        let pre_c = self.gate(g, store, C, x, h);
        let i = g.sigmoid(pre_i);
        let f = g.sigmoid(pre_f);
        let o = g.sigmoid(pre_o);
        let cand = g.tanh(pre_c);
        let keep = g.mul(f, c_decayed);
        let write = g.mul(i, cand);
        let c_new = g.add(keep, write);
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc);
        (c_new, h_new)
    }

    /// Runs the encoder over a padded batch. `xs[t]` is `B×d`, `dts[t]` is
    /// `B×1` and `masks[t][b]` marks valid steps; invalid steps carry the
    /// state through unchanged.
    pub fn encode_var(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        xs: &[Var],
        dts: &[Var],
        masks: &[Vec<bool>],
        ids: &[String],
    ) -> Result<Encoded> {
        let b = ids.len();
        if xs.len() != dts.len() || xs.len() != masks.len() {
            return Err(Error::shape("encode", "steps, gaps and masks differ in length"));
        }
        for (r, id) in ids.iter().enumerate() {
            if !masks.iter().any(|m| m[r]) {
                return Err(Error::EmptySequence(id.clone()));
            }
        }
        let mut c = g.constant(Tensor::zeros(b, self.hidden_size));
        let mut h = g.constant(Tensor::zeros(b, self.hidden_size));
        let mut h_all = Vec::with_capacity(xs.len());
        let mut c_all = Vec::with_capacity(xs.len());
        for ((x, dt), mask) in xs.iter().zip(dts).zip(masks) {
            let (c_new, h_new) = self.step_var(g, store, *x, *dt, c, h);
            if mask.iter().all(|m| *m) {
                c = c_new;
                h = h_new;
            } else {
                c = g.select(mask, c_new, c);
                h = g.select(mask, h_new, h);
            }
            h_all.push(h);
            c_all.push(c);
        }
        Ok(Encoded { h_last: h, h_all, c_all })
    }

    fn check_input(&self, x: &[f64], delta_t: f64, state: &TLstmState) -> Result<()> {
        if delta_t < 0.0 || !delta_t.is_finite() {
            return Err(Error::invalid(format!("delta_t must be a finite non-negative gap, got {delta_t}")));
        }
        if x.len() != self.input_size || state.c.len() != self.hidden_size || state.h.len() != self.hidden_size {
            return Err(Error::invalid(format!(
                "cell_step expects input {} and state {}, got {} and {}/{}",
                self.input_size,
                self.hidden_size,
                x.len(),
                state.c.len(),
                state.h.len()
            )));
        }
        Ok(())
    }

    /// Decay gate for a single gap in months.
    pub fn decay_gate(&self, store: &ParamStore, delta_t: f64) -> Result<Vec<f64>> {
        if delta_t < 0.0 || !delta_t.is_finite() {
            return Err(Error::invalid(format!("delta_t must be a finite non-negative gap, got {delta_t}")));
        }
        let mut g = Graph::new();
        let dt = g.constant(Tensor::scalar(delta_t));
        let t = self.decay_gate_var(&mut g, store, dt);
        Ok(g.value(t).data().to_vec())
    }

    /// Single-sample cell update.
    pub fn cell_step(&self, store: &ParamStore, x: &[f64], delta_t: f64, state: &TLstmState) -> Result<TLstmState> {
        self.check_input(x, delta_t, state)?;
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row_vector(x.to_vec()));
        let dt = g.constant(Tensor::scalar(delta_t));
        let c = g.constant(Tensor::row_vector(state.c.clone()));
        let h = g.constant(Tensor::row_vector(state.h.clone()));
        let (c, h) = self.step_var(&mut g, store, xv, dt, c, h);
        Ok(TLstmState {
            c: g.value(c).data().to_vec(),
            h: g.value(h).data().to_vec(),
        })
    }

    /// Encodes one sequence given per-step inputs, gaps and a validity mask.
    /// Returns the last hidden state and the state after every step.
    pub fn encode(
        &self,
        store: &ParamStore,
        firm_id: &str,
        xs: &[Vec<f64>],
        dts: &[f64],
        mask: &[bool],
    ) -> Result<(Vec<f64>, Vec<TLstmState>)> {
        if xs.len() != dts.len() || xs.len() != mask.len() {
            return Err(Error::invalid("encode: inputs, gaps and mask differ in length"));
        }
        if !mask.iter().any(|m| *m) {
            return Err(Error::EmptySequence(firm_id.to_string()));
        }
        let mut state = TLstmState::zeros(self.hidden_size);
        let mut states = Vec::with_capacity(xs.len());
        for ((x, dt), valid) in xs.iter().zip(dts).zip(mask) {
            if *valid {
                state = self.cell_step(store, x, *dt, &state)?;
            }
            states.push(state.clone());
        }
        Ok((state.h.clone(), states))
    }
}

/// Graph handles produced by [`TLstm::encode_var`].
#[derive(Clone, Debug)]
pub struct Encoded {
    pub h_last: Var,
    pub h_all: Vec<Var>,
    pub c_all: Vec<Var>,
}
