use crate::error::{Error, Result};
use crate::nd::{ParamGrads, ParamStore, Tensor, TensorArchive};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias correction. Parameters without a gradient slot are
/// updated as if their gradient were zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub steps: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            cfg,
            steps: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = grads.get(id);
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }

    pub fn save_into(&self, archive: &mut TensorArchive, prefix: &str) {
        archive.push_meta(format!("{prefix}steps"), self.steps.to_string());
        for (k, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            archive.push_tensor(format!("{prefix}m{k}"), m.clone());
            archive.push_tensor(format!("{prefix}v{k}"), v.clone());
        }
    }

    pub fn load_from(archive: &TensorArchive, prefix: &str, store: &ParamStore, cfg: AdamConfig) -> Result<Self> {
        let mut adam = Adam::new(store, cfg);
        adam.steps = archive
            .require_meta(&format!("{prefix}steps"))?
            .parse()
            .map_err(|_| Error::Checkpoint("bad optimizer step count".into()))?;
        for k in 0..adam.m.len() {
            for (slot, tag) in [(&mut adam.m[k], "m"), (&mut adam.v[k], "v")] {
                let name = format!("{prefix}{tag}{k}");
                let t = archive
                    .tensor(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer tensor {name} has the wrong shape"
                    )));
                }
                *slot = t.clone();
            }
        }
        Ok(adam)
    }
}
