use super::{ParamId, ParamStore, Tensor};

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Updates every parameter in the store from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        let ids: Vec<ParamId> = store.ids().collect();
        self.step_ids(store, &ids);
    }

    /// Updates only `ids`; the others keep their values and moments.
    pub fn step_ids(&mut self, store: &mut ParamStore, ids: &[ParamId]) {
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for &id in ids {
            let grad = store.grad(id).clone();
            let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));
            let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));
            let value = store.value_mut(id);
            for (((p, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *p);
            }
        }
    }
}
