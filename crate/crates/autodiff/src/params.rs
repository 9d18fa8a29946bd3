use std::collections::HashMap;

use rand::Rng;

use crate::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// AdaDelta decay rate and conditioning constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdaDelta {
    fn default() -> Self {
        AdaDelta { rho: 0.95, eps: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Running average of squared gradients.
    pub sq_grad: Vec<f64>,
    /// Running average of squared updates.
    pub sq_delta: Vec<f64>,
}

/// Named trainable tensors plus their optimizer state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
    pub optimizer: AdaDelta,
}

impl ParamStore {
    pub fn new(optimizer: AdaDelta) -> Self {
        ParamStore { optimizer, ..Default::default() }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        if self.by_name.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_owned()));
        }
        let n = value.len();
        self.insert(Param { name: name.to_owned(), value, sq_grad: vec![0.0; n], sq_delta: vec![0.0; n] })
    }

    /// Adds a parameter filled from `uniform(-scale, scale)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId, AutodiffError> {
        let mut t = Tensor::zeros(shape)?;
        if scale > 0.0 {
            for x in t.data_mut() {
                *x = rng.gen_range(-scale..scale);
            }
        }
        self.add(name, t)
    }

    pub fn add_filled(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId, AutodiffError> {
        let mut t = Tensor::zeros(shape)?;
        t.data_mut().fill(value);
        self.add(name, t)
    }

    /// Inserts a parameter with existing optimizer state.
    pub fn insert(&mut self, param: Param) -> Result<ParamId, AutodiffError> {
        if self.by_name.contains_key(&param.name) {
            return Err(AutodiffError::DuplicateParam(param.name));
        }
        let n = param.value.len();
        if param.sq_grad.len() != n || param.sq_delta.len() != n {
            return Err(AutodiffError::ShapeMismatch {
                expected: param.value.shape().to_vec(),
                got: vec![param.sq_grad.len()],
            });
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(param.name.clone(), id);
        self.params.push(param);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// First parameter holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.params.iter().find(|p| !p.value.is_finite()).map(|p| p.name.as_str())
    }

    /// One AdaDelta update per entry:
    ///
    /// ```text
    /// E[g²]  ← ρ E[g²] + (1-ρ) g²
    /// Δ      ← -sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g
    /// E[Δ²]  ← ρ E[Δ²] + (1-ρ) Δ²
    /// x      ← x + Δ
    /// ```
    pub fn adadelta_step(&mut self, grads: &Gradients) -> Result<(), AutodiffError> {
        if grads.bufs.len() != self.params.len() {
            return Err(AutodiffError::ShapeMismatch {
                expected: vec![self.params.len()],
                got: vec![grads.bufs.len()],
            });
        }
        for (p, g) in self.params.iter().zip(&grads.bufs) {
            if g.len() != p.value.len() {
                return Err(AutodiffError::ShapeMismatch { expected: p.value.shape().to_vec(), got: vec![g.len()] });
            }
        }
        let AdaDelta { rho, eps } = self.optimizer;
        for (p, g) in self.params.iter_mut().zip(&grads.bufs) {
            let Param { value, sq_grad, sq_delta, .. } = p;
            for (((x, eg), ed), &gi) in value.data_mut().iter_mut().zip(sq_grad).zip(sq_delta).zip(g) {
                *eg = rho * *eg + (1.0 - rho) * gi * gi;
                let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * gi;
                *ed = rho * *ed + (1.0 - rho) * delta * delta;
                *x += delta;
            }
        }
        Ok(())
    }

    /// `λ/2 · Σ w²` over every parameter, embeddings included.
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let sq: f64 = self.params.iter().map(|p| p.value.data().iter().map(|w| w * w).sum::<f64>()).sum();
        0.5 * lambda * sq
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) bufs: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients { bufs: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect() }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    pub fn zero(&mut self) {
        for b in &mut self.bufs {
            b.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for b in &mut self.bufs {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
    }

    /// Adds the gradient of [`ParamStore::l2_penalty`], `λ·w`.
    pub fn add_l2(&mut self, store: &ParamStore, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for (g, p) in self.bufs.iter_mut().zip(&store.params) {
            for (gi, w) in g.iter_mut().zip(p.value.data()) {
                *gi += lambda * w;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.bufs.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64, opt: AdaDelta) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new(opt);
        let id = s.add("w", Tensor::scalar(x)).unwrap();
        (s, id)
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::default();
        s.add("a", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(s.add("a", Tensor::scalar(1.0)), Err(AutodiffError::DuplicateParam(_))));
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_accumulators() {
        let (mut s, id) = scalar_store(0.7, AdaDelta::default());
        s.params[0].sq_grad[0] = 2.0;
        s.params[0].sq_delta[0] = 4.0;
        let g = Gradients::zeros_like(&s);
        s.adadelta_step(&g).unwrap();
        assert_eq!(s.value(id).data()[0], 0.7);
        assert!((s.param(id).sq_grad[0] - 0.95 * 2.0).abs() < 1e-15);
        assert!((s.param(id).sq_delta[0] - 0.95 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn first_step_value() {
        let (mut s, id) = scalar_store(0.0, AdaDelta { rho: 0.95, eps: 1e-6 });
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id)[0] = 1.0;
        s.adadelta_step(&g).unwrap();
        // -sqrt(1e-6) / sqrt(0.05 + 1e-6)
        let expected = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        let delta = s.value(id).data()[0];
        assert!((delta - expected).abs() < 1e-15);
        assert!((delta - -4.4721e-3).abs() < 1e-7);
    }

    #[test]
    fn step_opposes_gradient_and_is_sublinear() {
        for g0 in [-3.0, -0.1, 1e-4, 0.5, 7.0] {
            let mut deltas = Vec::new();
            for scale in [1.0, 2.0] {
                let (mut s, id) = scalar_store(0.0, AdaDelta::default());
                let mut g = Gradients::zeros_like(&s);
                g.get_mut(id)[0] = g0 * scale;
                s.adadelta_step(&g).unwrap();
                deltas.push(s.value(id).data()[0]);
            }
            assert!(deltas[0] * g0 < 0.0);
            assert!(deltas[1].abs() < 2.0 * deltas[0].abs());
        }
    }

    #[test]
    fn adadelta_rejects_mismatched_gradients() {
        let (mut s, _) = scalar_store(0.0, AdaDelta::default());
        let g = Gradients { bufs: vec![vec![0.0; 2]] };
        assert!(s.adadelta_step(&g).is_err());
        let g = Gradients { bufs: vec![] };
        assert!(s.adadelta_step(&g).is_err());
    }

    #[test]
    fn l2_values() {
        let mut s = ParamStore::default();
        s.add("v", Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(s.l2_penalty(0.0), 0.0);
        assert_eq!(s.l2_penalty(2.0), 25.0);
        s.add("u", Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(s.l2_penalty(2.0), 26.0);
        let mut g = Gradients::zeros_like(&s);
        g.add_l2(&s, 2.0);
        assert_eq!(g.bufs, vec![vec![6.0, 8.0], vec![2.0]]);
    }
}
