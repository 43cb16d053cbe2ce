//! Named parameter store shared by all model components.
//!
//! Every learnable tensor is registered under a unique name. Initialization is
//! seeded per name, so the initial values of one component never depend on
//! which other components exist — ablation arms that drop a module leave all
//! remaining initializations untouched.

use crate::tensor::{AdamState, Gradients, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Handle to one parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Initialization scheme for a new parameter.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Xavier-uniform over ±√(6/(fan_in+fan_out)).
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
}

#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

/// FNV-1a hash; used to derive per-name RNG streams and config hashes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: &str, shape: Vec<usize>, init: Init, seed: u64) -> ParamId {
        assert!(
            self.find(name).is_none(),
            "duplicate parameter name {name:?}"
        );
        let count: usize = shape.iter().product();
        let values = match init {
            Init::Zeros => vec![0.0; count],
            Init::Xavier { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()));
                (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
            }
        };
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            values,
        });
        id
    }

    /// Registers a parameter with explicit values (checkpoint loading).
    pub fn insert_raw(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        assert!(
            self.find(name).is_none(),
            "duplicate parameter name {name:?}"
        );
        let count: usize = shape.iter().product();
        assert_eq!(count, values.len(), "value count mismatch for {name:?}");
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            values,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.entries[id.0].values
    }

    pub fn set_values(&mut self, id: ParamId, values: Vec<f64>) {
        assert_eq!(values.len(), self.entries[id.0].values.len());
        self.entries[id.0].values = values;
    }

    /// Tracked leaves for every parameter, indexed by [`ParamId`].
    pub fn leaves(&self, tape: &mut Tape) -> Leaves {
        Leaves {
            tensors: self
                .entries
                .iter()
                .map(|e| {
                    let t = Tensor::from_vec(e.shape.clone(), e.values.clone())
                        .expect("store shapes are consistent");
                    tape.leaf(&t)
                })
                .collect(),
        }
    }

    /// Untracked leaves for evaluation-mode forwards; nothing is recorded.
    pub fn frozen_leaves(&self) -> Leaves {
        Leaves {
            tensors: self
                .entries
                .iter()
                .map(|e| {
                    Tensor::from_vec(e.shape.clone(), e.values.clone())
                        .expect("store shapes are consistent")
                })
                .collect(),
        }
    }

    /// One Adam update over a parameter group. Slot order follows `ids`, so
    /// the same group always maps to the same moment buffers.
    pub fn adam_step(
        &mut self,
        ids: &[ParamId],
        leaves: &Leaves,
        grads: &Gradients,
        state: &mut AdamState,
    ) {
        state.begin_step();
        for (slot, &id) in ids.iter().enumerate() {
            let g = grads.wrt_or_zeros(leaves.get(id));
            state.update_slot(slot, &mut self.entries[id.0].values, &g);
        }
    }

    /// Copies values for equally named, equally shaped parameters from
    /// `source`, returning the names that were transferred.
    pub fn copy_matching(&mut self, source: &ParamStore) -> Vec<String> {
        let mut copied = Vec::new();
        for e in &mut self.entries {
            if let Some(src_id) = source.find(&e.name) {
                let src = source.entry(src_id);
                if src.shape == e.shape {
                    e.values = src.values.clone();
                    copied.push(e.name.clone());
                }
            }
        }
        copied
    }
}

/// Per-epoch leaf tensors, indexed by [`ParamId`].
pub struct Leaves {
    tensors: Vec<Tensor>,
}

impl Leaves {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_per_name_and_seed_deterministic() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        // registration order differs; same names and seed
        let ax = a.add("x", vec![4, 4], Init::Xavier { fan_in: 4, fan_out: 4 }, 7);
        let _ay = a.add("y", vec![2, 2], Init::Xavier { fan_in: 2, fan_out: 2 }, 7);
        let _by = b.add("y", vec![2, 2], Init::Xavier { fan_in: 2, fan_out: 2 }, 7);
        let bx = b.add("x", vec![4, 4], Init::Xavier { fan_in: 4, fan_out: 4 }, 7);
        assert_eq!(a.entry(ax).values, b.entry(bx).values);

        let mut c = ParamStore::new();
        let cx = c.add("x", vec![4, 4], Init::Xavier { fan_in: 4, fan_out: 4 }, 8);
        assert_ne!(a.entry(ax).values, c.entry(cx).values);
    }

    #[test]
    fn xavier_respects_fan_limit() {
        let mut s = ParamStore::new();
        let id = s.add(
            "w",
            vec![10, 20],
            Init::Xavier {
                fan_in: 10,
                fan_out: 20,
            },
            1,
        );
        let limit = (6.0 / 30.0f64).sqrt();
        assert!(s.entry(id).values.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn copy_matching_transfers_by_name_and_shape() {
        let mut src = ParamStore::new();
        src.add("enc.w", vec![2, 2], Init::Xavier { fan_in: 2, fan_out: 2 }, 3);
        src.add("head.w", vec![2, 3], Init::Xavier { fan_in: 2, fan_out: 3 }, 3);
        let mut dst = ParamStore::new();
        let enc = dst.add("enc.w", vec![2, 2], Init::Zeros, 0);
        let other = dst.add("other", vec![1, 1], Init::Zeros, 0);
        let copied = dst.copy_matching(&src);
        assert_eq!(copied, vec!["enc.w".to_string()]);
        assert_eq!(dst.entry(enc).values, src.entry(src.find("enc.w").unwrap()).values);
        assert_eq!(dst.entry(other).values, vec![0.0]);
    }
}
