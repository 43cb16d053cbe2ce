//! Adam optimizer with bias correction.

/// Adam state for one group of parameters updated at a shared learning rate.
/// Moment buffers are keyed by slot index and allocated on first use; the
/// step counter advances once per [`AdamState::begin_step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<Option<Moments>>,
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// Defaults β1 = 0.9, β2 = 0.999, ε = 1e-8; only the learning rate varies
    /// between parameter groups.
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advances the shared step counter. Call once per optimization step,
    /// before updating the group's slots.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update to the parameter in `slot`.
    pub fn update_slot(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        assert_eq!(param.len(), grad.len(), "param/grad length mismatch");
        assert!(self.step > 0, "begin_step must run before update_slot");
        if slot >= self.moments.len() {
            self.moments.resize(slot + 1, None);
        }
        let entry = self.moments[slot].get_or_insert_with(|| Moments {
            m: vec![0.0; param.len()],
            v: vec![0.0; param.len()],
        });
        assert_eq!(entry.m.len(), param.len(), "moment shape mismatch");

        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..param.len() {
            let g = grad[i];
            entry.m[i] = self.beta1 * entry.m[i] + (1.0 - self.beta1) * g;
            entry.v[i] = self.beta2 * entry.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = entry.m[i] / bc1;
            let v_hat = entry.v[i] / bc2;
            param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// Convenience for a single-tensor group.
    pub fn step_single(&mut self, param: &mut [f64], grad: &[f64]) {
        self.begin_step();
        self.update_slot(0, param, grad);
    }
}
