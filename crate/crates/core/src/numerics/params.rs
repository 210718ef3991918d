use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::util::fnv1a;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    /// Graph encoders and attention blocks.
    Graph,
    /// Classification heads.
    Classifier,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Slot {
    name: String,
    group: ParamGroup,
    value: Tensor,
    #[serde(skip)]
    first_moment: Option<Tensor>,
    #[serde(skip)]
    second_moment: Option<Tensor>,
}

/// Named trainable tensors with Adam moment accumulators.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    slots: Vec<Slot>,
    #[serde(default)]
    step: u64,
}

/// Moment decay rates and denominator offset for [`ParamStore::adam_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "parameter `{name}` registered twice"
        );
        self.slots.push(Slot {
            name,
            group,
            value,
            first_moment: None,
            second_moment: None,
        });
        ParamId(self.slots.len() - 1)
    }

    /// Registers a Glorot-uniform `rows × cols` weight. The random stream is
    /// derived from `seed` and the parameter name only, so adding or removing
    /// other parameters never shifts it.
    pub fn glorot(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        rows: usize,
        cols: usize,
        seed: u64,
    ) -> ParamId {
        let name = name.into();
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        let value = Tensor::from_vec(rows, cols, data).expect("sized buffer");
        self.insert(name, group, value)
    }

    pub fn zeros(&mut self, name: impl Into<String>, group: ParamGroup, rows: usize, cols: usize) -> ParamId {
        self.insert(name, group, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.slots[id.0].group
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        value.expect_shape(self.slots[id.0].value.shape(), &self.slots[id.0].name)?;
        self.slots[id.0].value = value;
        Ok(())
    }

    /// Number of Adam steps taken.
    /// Copies values from `saved` by name. Every parameter of `self` must be
    /// present in `saved` with the same shape.
    pub fn load_values(&mut self, saved: &ParamStore) -> Result<()> {
        if saved.len() != self.len() {
            return Err(Error::Validation(format!(
                "saved store has {} parameters, model expects {}",
                saved.len(),
                self.len()
            )));
        }
        for id in self.ids().collect::<Vec<_>>() {
            let name = self.name(id).to_string();
            let src = saved
                .find(&name)
                .ok_or_else(|| Error::Validation(format!("saved store lacks parameter `{name}`")))?;
            if saved.value(src).shape() != self.value(id).shape() {
                return Err(Error::Validation(format!(
                    "parameter `{name}` saved as {:?}, model expects {:?}",
                    saved.value(src).shape(),
                    self.value(id).shape()
                )));
            }
            self.set_value(id, saved.value(src).clone())?;
        }
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    /// One bias-corrected Adam update. `lr` maps each parameter group to
    /// its learning rate for this step.
    pub fn adam_step(
        &mut self,
        grads: &Gradients,
        lr: impl Fn(ParamGroup) -> f64,
        config: AdamConfig,
    ) -> Result<()> {
        if grads.grads.len() != self.slots.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.grads.len(),
                self.slots.len()
            )));
        }
        for (slot, g) in self.slots.iter().zip(&grads.grads) {
            g.expect_shape(slot.value.shape(), &slot.name)
                .map_err(|e| Error::Contract(e.to_string()))?;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for (slot, g) in self.slots.iter_mut().zip(&grads.grads) {
            let [r, c] = slot.value.shape();
            let m = slot.first_moment.get_or_insert_with(|| Tensor::zeros(r, c));
            let v = slot.second_moment.get_or_insert_with(|| Tensor::zeros(r, c));
            let rate = lr(slot.group);
            for (((w, m), v), &g) in slot
                .value
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= rate * m_hat / (v_hat.sqrt() + config.eps);
            }
        }
        Ok(())
    }
}

/// One gradient tensor per parameter of a store, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .slots
                .iter()
                .map(|s| Tensor::zeros(s.value.rows(), s.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor) -> Result<()> {
        self.grads[id.0].add_assign(g)
    }

    /// Drops the entry for `id`, leaving a store/gradient mismatch.
    pub fn truncate(&mut self, len: usize) {
        self.grads.truncate(len);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

/// Central-difference gradient estimate `(f(θ+h) − f(θ−h)) / 2h` for every
/// scalar of every parameter.
pub fn finite_diff_grad<F>(store: &ParamStore, h: f64, mut f: F) -> Result<Gradients>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut probe = store.clone();
    let mut out = Gradients::zeros_like(store);
    for id in store.ids() {
        for k in 0..store.value(id).len() {
            let original = probe.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = original + h;
            let up = f(&probe)?;
            probe.value_mut(id).data_mut()[k] = original - h;
            let down = f(&probe)?;
            probe.value_mut(id).data_mut()[k] = original;
            out.get_mut(id).data_mut()[k] = (up - down) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Floor on the denominator of [`relative_error`], below which differences
/// are effectively judged in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest [`relative_error`] over all scalars, with the parameter name and
/// flat index where it occurs.
pub fn max_relative_error(
    store: &ParamStore,
    analytic: &Gradients,
    numeric: &Gradients,
) -> (f64, Option<(String, usize)>) {
    let mut worst = (0.0, None);
    for id in store.ids() {
        for (k, (&a, &n)) in analytic
            .get(id)
            .data()
            .iter()
            .zip(numeric.get(id).data())
            .enumerate()
        {
            let e = relative_error(a, n);
            if e > worst.0 || worst.1.is_none() {
                worst = (e.max(worst.0), Some((store.name(id).to_string(), k)));
            }
        }
    }
    worst
}
