//! Parameter declaration and lookup shared by encoders and the classifier.

use propnli_autodiff::{AdaDelta, Graph, NodeId, ParamId, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ModelError;

/// Half-width of the uniform weight initializer. At ±0.05 the sentence
/// vectors start nearly constant and AdaDelta sits on the majority-class
/// plateau for dozens of epochs; ±0.2 breaks symmetry fast enough to fit
/// small sets within 30 epochs.
pub const INIT_SCALE: f64 = 0.2;
/// Initial forget-gate bias for both LSTM variants.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform(f64),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn weight(name: &str, shape: &[usize]) -> Self {
        ParamSpec { name: name.to_owned(), shape: shape.to_vec(), init: Init::Uniform(INIT_SCALE) }
    }

    pub fn bias(name: &str, n: usize, value: f64) -> Self {
        ParamSpec { name: name.to_owned(), shape: vec![n], init: Init::Constant(value) }
    }

    /// `{prefix}.W` of shape `[out, inp]` and a zero `{prefix}.b`.
    pub fn affine(prefix: &str, out: usize, inp: usize) -> [ParamSpec; 2] {
        [Self::weight(&format!("{prefix}.W"), &[out, inp]), Self::bias(&format!("{prefix}.b"), out, 0.0)]
    }

    /// Like [`ParamSpec::affine`] with the bias starting at [`FORGET_BIAS`].
    pub fn affine_forget(prefix: &str, out: usize, inp: usize) -> [ParamSpec; 2] {
        [Self::weight(&format!("{prefix}.W"), &[out, inp]), Self::bias(&format!("{prefix}.b"), out, FORGET_BIAS)]
    }
}

/// Creates every parameter in declaration order from one seeded stream.
pub fn init_store(specs: &[ParamSpec], seed: u64, optimizer: AdaDelta) -> Result<ParamStore, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new(optimizer);
    for spec in specs {
        match spec.init {
            Init::Uniform(scale) => store.add_uniform(&spec.name, &spec.shape, scale, &mut rng)?,
            Init::Constant(v) => store.add_filled(&spec.name, &spec.shape, v)?,
        };
    }
    Ok(store)
}

/// Checks that a store holds exactly the declared parameters with the declared shapes.
pub fn check_store(specs: &[ParamSpec], store: &ParamStore) -> Result<(), ModelError> {
    if store.len() != specs.len() {
        return Err(ModelError::Incompatible(format!("expected {} parameters, found {}", specs.len(), store.len())));
    }
    for spec in specs {
        let t = store
            .get(&spec.name)
            .ok_or_else(|| ModelError::Incompatible(format!("missing parameter {}", spec.name)))?;
        if t.shape() != spec.shape.as_slice() {
            return Err(ModelError::Incompatible(format!(
                "parameter {} has shape {:?}, expected {:?}",
                spec.name,
                t.shape(),
                spec.shape
            )));
        }
    }
    Ok(())
}

/// Name-based lookup into a store.
pub struct Registry<'a> {
    store: &'a ParamStore,
}

impl<'a> Registry<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Registry { store }
    }

    pub fn id(&self, name: &str) -> Result<ParamId, ModelError> {
        self.store.id(name).ok_or_else(|| ModelError::Incompatible(format!("missing parameter {name}")))
    }

    pub fn affine(&self, prefix: &str) -> Result<Affine, ModelError> {
        Ok(Affine { w: self.id(&format!("{prefix}.W"))?, b: self.id(&format!("{prefix}.b"))? })
    }
}

/// `W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
}

impl Affine {
    pub fn apply(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId, ModelError> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let wx = g.matmul(w, x)?;
        Ok(g.add(wx, b)?)
    }
}
