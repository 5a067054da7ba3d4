use ndarray::Array2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) struct AdamMoments {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
}

/// Named parameter blocks with same-shaped gradient accumulators.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Array2<f64>>,
    pub(crate) grads: Vec<Array2<f64>>,
    pub(crate) lr_scale: Vec<f64>,
    pub(crate) moments: Vec<Option<AdamMoments>>,
    pub(crate) step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter block `{name}`"
        );
        self.grads.push(Array2::zeros(value.raw_dim()));
        self.values.push(value);
        self.names.push(name);
        self.lr_scale.push(1.0);
        self.moments.push(None);
        ParamId(self.values.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.grads[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Multiplier applied to the global learning rate for one block.
    pub fn set_lr_scale(&mut self, id: ParamId, scale: f64) {
        self.lr_scale[id.0] = scale;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn num_blocks(&self) -> usize {
        self.values.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// All parameter values in block order, row-major.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn values_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flat_map(|v| v.iter().copied())
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut it = flat.iter();
        for v in &mut self.values {
            for x in v.iter_mut() {
                *x = *it.next().unwrap();
            }
        }
    }

    /// Copies values and optimizer state from `other`, which must have the
    /// same block layout.
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.names, other.names);
        self.values.clone_from(&other.values);
        self.moments.clone_from(&other.moments);
        self.step_count = other.step_count;
    }
}
