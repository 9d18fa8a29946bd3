//! Siamese classifier: one encoder applied to both sentences, an NTN
//! combining layer, two tanh layers and a 7-way softmax.

use std::cell::RefCell;
use std::path::Path;

use propnli_autodiff::checkpoint::{self, Checkpoint};
use propnli_autodiff::{
    gradient_check, gradient_check_sampled, AdaDelta, AutodiffError, CheckReport, Graph, NodeId, ParamId, ParamStore,
};
use propnli_core::{Example, Formula, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, EncoderKind, LeafCache};
use crate::params::{check_store, init_store, Affine, ParamSpec, Registry};
use crate::ModelError;

pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Width of the combining layer and of both hidden layers.
    pub d_c: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(kind: EncoderKind, seed: u64) -> Self {
        ModelConfig { encoder: EncoderConfig::new(kind), d_c: 64, seed }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.d_c == 0 {
            return Err(ModelError::InvalidConfig("d_c must be positive".into()));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (h, c) = (self.encoder.d_hidden, self.d_c);
        let mut specs = self.encoder.param_specs();
        specs.extend(ParamSpec::affine("comb", c, 2 * h));
        specs.push(ParamSpec::weight("comb.T", &[c, h, h]));
        specs.extend(ParamSpec::affine("hid1", c, c));
        specs.extend(ParamSpec::affine("hid2", c, c));
        specs.extend(ParamSpec::affine("out", NUM_CLASSES, c));
        specs
    }
}

#[derive(Debug, Clone, Copy)]
struct Head {
    comb: Affine,
    comb_t: ParamId,
    hid1: Affine,
    hid2: Affine,
    out: Affine,
}

/// Parameters plus the handles needed to run them.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    encoder: Encoder,
    head: Head,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        Self::with_optimizer(config, AdaDelta::default())
    }

    pub fn with_optimizer(config: ModelConfig, optimizer: AdaDelta) -> Result<Self, ModelError> {
        config.validate()?;
        let store = init_store(&config.param_specs(), config.seed, optimizer)?;
        Self::from_store(config, store)
    }

    /// Binds an existing store, which must match the config exactly.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        check_store(&config.param_specs(), &store)?;
        let reg = Registry::new(&store);
        let encoder = Encoder::bind(config.encoder.clone(), &reg)?;
        let head = Head {
            comb: reg.affine("comb")?,
            comb_t: reg.id("comb.T")?,
            hid1: reg.affine("hid1")?,
            hid2: reg.affine("hid2")?,
            out: reg.affine("out")?,
        };
        Ok(Model { config, store, encoder, head })
    }

    pub fn kind(&self) -> EncoderKind {
        self.config.encoder.kind
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// `tanh(M_c [l; r] + b_c) + tanh(lᵀ T_c r)`
    pub fn combine_ntn(&self, g: &mut Graph<'_>, left: NodeId, right: NodeId) -> Result<NodeId, ModelError> {
        let x = g.concat(left, right)?;
        let nn = self.head.comb.apply(g, x)?;
        let nn = g.tanh(nn)?;
        let t = g.param(self.head.comb_t);
        let bil = g.bilinear(left, t, right)?;
        let bil = g.tanh(bil)?;
        Ok(g.add(nn, bil)?)
    }

    /// Adds the forward pass for one pair to `g` and returns the logits node.
    pub fn logits_node(
        &self,
        g: &mut Graph<'_>,
        premise: &Formula,
        hypothesis: &Formula,
    ) -> Result<NodeId, ModelError> {
        let mut cache = LeafCache::default();
        let p = self.encoder.encode(g, premise, &mut cache)?;
        let h = self.encoder.encode(g, hypothesis, &mut cache)?;
        let mut x = self.combine_ntn(g, p, h)?;
        for layer in [self.head.hid1, self.head.hid2] {
            let z = layer.apply(g, x)?;
            x = g.tanh(z)?;
        }
        self.head.out.apply(g, x)
    }

    /// NLL of the gold label; the L2 term is added per minibatch by the trainer.
    pub fn example_loss(&self, g: &mut Graph<'_>, example: &Example) -> Result<NodeId, ModelError> {
        let logits = self.logits_node(g, &example.premise, &example.hypothesis)?;
        Ok(g.softmax_nll(logits, example.label.index())?)
    }

    /// Mean NLL over `examples` plus `λ/2 · Σ w²`: one minibatch objective.
    pub fn batch_objective(&self, g: &mut Graph<'_>, examples: &[Example], lambda: f64) -> Result<NodeId, ModelError> {
        let (first, rest) = examples.split_first().ok_or(ModelError::EmptyDataset)?;
        let mut total = self.example_loss(g, first)?;
        for e in rest {
            let l = self.example_loss(g, e)?;
            total = g.add(total, l)?;
        }
        let mean = g.scale(1.0 / examples.len() as f64, total)?;
        let l2 = g.l2_penalty(lambda);
        Ok(g.add(mean, l2)?)
    }

    /// Finite-difference check of [`Model::batch_objective`]. Checks every
    /// entry, or `sample` entries drawn with `seed` when given.
    pub fn check_gradients(
        &self,
        examples: &[Example],
        lambda: f64,
        sample: Option<(usize, u64)>,
    ) -> Result<CheckReport, ModelError> {
        let failure: RefCell<Option<ModelError>> = RefCell::new(None);
        let build = |g: &mut Graph<'_>| {
            self.batch_objective(g, examples, lambda).map_err(|e| match e {
                ModelError::Autodiff(a) => a,
                other => {
                    let msg = other.to_string();
                    failure.borrow_mut().get_or_insert(other);
                    AutodiffError::BadShape(vec![msg.len()])
                }
            })
        };
        let result = match sample {
            None => gradient_check(&self.store, build),
            Some((n, seed)) => gradient_check_sampled(&self.store, build, n, seed),
        };
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(result?)
    }

    /// Refills every parameter from `uniform(-scale, scale)`. Gradient checks
    /// use this to move away from the small initialization, where many
    /// gradients sit below the finite-difference noise floor.
    pub fn randomize(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<ParamId> = self.store.iter().map(|(id, _)| id).collect();
        for id in ids {
            for x in self.store.value_mut(id).data_mut() {
                *x = rng.gen_range(-scale..scale);
            }
        }
    }

    pub fn predict_logits(&self, premise: &Formula, hypothesis: &Formula) -> Result<[f64; NUM_CLASSES], ModelError> {
        let mut g = Graph::new(&self.store);
        let node = self.logits_node(&mut g, premise, hypothesis)?;
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(g.value(node).data());
        Ok(out)
    }

    pub fn predict(&self, example: &Example) -> Result<Relation, ModelError> {
        Ok(argmax_relation(&self.predict_logits(&example.premise, &example.hypothesis)?))
    }

    /// Checkpoint bytes; the config travels as JSON.
    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        checkpoint::encode(&config, &self.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let Checkpoint { config, store } = checkpoint::decode(bytes)?;
        let config: ModelConfig =
            serde_json::from_str(&config).map_err(|e| ModelError::Incompatible(format!("checkpoint config: {e}")))?;
        Self::from_store(config, store)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Index of the largest logit; ties go to the lowest relation index.
pub fn argmax_relation(logits: &[f64; NUM_CLASSES]) -> Relation {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = i;
        }
    }
    Relation::from_index(best).expect("index below 7")
}
