//! Sentence encoders.
//!
//! Tree encoders read the [`Formula`] directly. Every word is a leaf,
//! connectives included, and each internal node of the canonical binary
//! bracketing is one composition:
//!
//! ```text
//! ( not X )        → compose(leaf(not), X)
//! ( L ( op R ) )   → compose(L, compose(leaf(op), R))
//! ```
//!
//! Sequence encoders read the rendered token stream, parentheses included.

use std::fmt;
use std::str::FromStr;

use propnli_autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use propnli_core::logic::{BinOp, Formula, Token};
use serde::{Deserialize, Serialize};

use crate::params::{Affine, ParamSpec, Registry};
use crate::ModelError;

/// Words seen by tree encoders: six variables and three connectives.
pub const TREE_VOCAB: usize = 9;
/// Words seen by sequence encoders: the tree vocabulary plus `(` and `)`.
pub const SEQ_VOCAB: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    TreeRnn,
    TreeRntn,
    TreeLstm,
    /// Single-layer LSTM over the bracketed token sequence.
    #[serde(rename = "lstm")]
    SeqLstm,
    /// Plain tanh RNN over tokens. Optional; not part of the main comparison.
    #[serde(rename = "rnn")]
    SeqRnn,
    Nbow,
}

impl EncoderKind {
    /// The four sentence models of the tree-vs-sequence comparison.
    pub const MAIN: [EncoderKind; 4] =
        [EncoderKind::TreeRnn, EncoderKind::TreeRntn, EncoderKind::TreeLstm, EncoderKind::SeqLstm];

    /// Every kind covered by the gradient and fitting checks.
    pub const CHECKED: [EncoderKind; 5] =
        [EncoderKind::TreeRnn, EncoderKind::TreeRntn, EncoderKind::TreeLstm, EncoderKind::SeqLstm, EncoderKind::Nbow];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::TreeRnn => "treernn",
            EncoderKind::TreeRntn => "treerntn",
            EncoderKind::TreeLstm => "treelstm",
            EncoderKind::SeqLstm => "lstm",
            EncoderKind::SeqRnn => "rnn",
            EncoderKind::Nbow => "nbow",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, EncoderKind::TreeRnn | EncoderKind::TreeRntn | EncoderKind::TreeLstm)
    }

    pub fn vocab_size(self) -> usize {
        if self.is_tree() {
            TREE_VOCAB
        } else {
            SEQ_VOCAB
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            EncoderKind::TreeRnn,
            EncoderKind::TreeRntn,
            EncoderKind::TreeLstm,
            EncoderKind::SeqLstm,
            EncoderKind::SeqRnn,
            EncoderKind::Nbow,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| ModelError::InvalidConfig(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub d_emb: usize,
    pub d_hidden: usize,
}

impl EncoderConfig {
    /// Default widths: 32 for TreeRNN/TreeRNTN/NBOW, 32→64 for the LSTMs.
    pub fn new(kind: EncoderKind) -> Self {
        let (d_emb, d_hidden) = match kind {
            EncoderKind::TreeRnn | EncoderKind::TreeRntn | EncoderKind::Nbow => (32, 32),
            EncoderKind::TreeLstm | EncoderKind::SeqLstm | EncoderKind::SeqRnn => (32, 64),
        };
        EncoderConfig { kind, d_emb, d_hidden }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_emb == 0 || self.d_hidden == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be positive".into()));
        }
        if matches!(self.kind, EncoderKind::TreeRnn | EncoderKind::TreeRntn) && self.d_emb != self.d_hidden {
            return Err(ModelError::InvalidConfig(format!(
                "{} needs d_emb == d_hidden (got {} and {})",
                self.kind, self.d_emb, self.d_hidden
            )));
        }
        Ok(())
    }

    /// Every parameter this encoder owns, with its initializer.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (e, h) = (self.d_emb, self.d_hidden);
        let mut specs = vec![ParamSpec::weight("emb", &[self.kind.vocab_size(), e])];
        match self.kind {
            EncoderKind::TreeRnn => specs.extend(ParamSpec::affine("comp", h, 2 * h)),
            EncoderKind::TreeRntn => {
                specs.extend(ParamSpec::affine("comp", h, 2 * h));
                specs.push(ParamSpec::weight("comp.T", &[h, h, h]));
            }
            EncoderKind::TreeLstm => {
                specs.extend(ParamSpec::affine("leaf.c", h, e));
                specs.extend(ParamSpec::affine("leaf.o", h, e));
                for gate in ["i", "o", "u"] {
                    specs.extend(ParamSpec::affine(&format!("tree.{gate}"), h, 2 * h));
                }
                for gate in ["fl", "fr"] {
                    specs.extend(ParamSpec::affine_forget(&format!("tree.{gate}"), h, 2 * h));
                }
            }
            EncoderKind::SeqLstm => {
                for gate in ["i", "o", "u"] {
                    specs.extend(ParamSpec::affine(&format!("lstm.{gate}"), h, e + h));
                }
                specs.extend(ParamSpec::affine_forget("lstm.f", h, e + h));
            }
            EncoderKind::SeqRnn => specs.extend(ParamSpec::affine("rnn", h, e + h)),
            EncoderKind::Nbow => specs.extend(ParamSpec::affine("nbow", h, e)),
        }
        specs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub input: Affine,
    pub forget: Affine,
    pub output: Affine,
    pub update: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeLstmGates {
    pub input: Affine,
    pub forget_left: Affine,
    pub forget_right: Affine,
    pub output: Affine,
    pub update: Affine,
    pub leaf_cell: Affine,
    pub leaf_output: Affine,
}

#[derive(Debug, Clone, Copy)]
enum Composition {
    TreeRnn { comp: Affine },
    TreeRntn { comp: Affine, tensor: ParamId },
    TreeLstm(TreeLstmGates),
    SeqLstm(LstmGates),
    SeqRnn { cell: Affine },
    Nbow { proj: Affine },
}

/// A (hidden, cell) pair of LSTM state nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Parameter handles for one encoder, resolved against a store.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    emb: ParamId,
    comp: Composition,
}

/// Per-graph memo of leaf nodes, so a word used twice in a pair is
/// looked up (and, for TreeLSTM, transformed) once.
#[derive(Debug, Default)]
pub struct LeafCache {
    embeddings: [Option<NodeId>; SEQ_VOCAB],
    tree_lstm: [Option<LstmState>; SEQ_VOCAB],
}

impl Encoder {
    pub fn bind(config: EncoderConfig, reg: &Registry<'_>) -> Result<Self, ModelError> {
        config.validate()?;
        let lstm = |p: &str| -> Result<LstmGates, ModelError> {
            Ok(LstmGates {
                input: reg.affine(&format!("{p}.i"))?,
                forget: reg.affine(&format!("{p}.f"))?,
                output: reg.affine(&format!("{p}.o"))?,
                update: reg.affine(&format!("{p}.u"))?,
            })
        };
        let comp = match config.kind {
            EncoderKind::TreeRnn => Composition::TreeRnn { comp: reg.affine("comp")? },
            EncoderKind::TreeRntn => Composition::TreeRntn { comp: reg.affine("comp")?, tensor: reg.id("comp.T")? },
            EncoderKind::TreeLstm => Composition::TreeLstm(TreeLstmGates {
                input: reg.affine("tree.i")?,
                forget_left: reg.affine("tree.fl")?,
                forget_right: reg.affine("tree.fr")?,
                output: reg.affine("tree.o")?,
                update: reg.affine("tree.u")?,
                leaf_cell: reg.affine("leaf.c")?,
                leaf_output: reg.affine("leaf.o")?,
            }),
            EncoderKind::SeqLstm => Composition::SeqLstm(lstm("lstm")?),
            EncoderKind::SeqRnn => Composition::SeqRnn { cell: reg.affine("rnn")? },
            EncoderKind::Nbow => Composition::Nbow { proj: reg.affine("nbow")? },
        };
        Ok(Encoder { emb: reg.id("emb")?, config, comp })
    }

    pub fn kind(&self) -> EncoderKind {
        self.config.kind
    }

    pub fn embedding(&self, g: &mut Graph<'_>, token: Token, cache: &mut LeafCache) -> Result<NodeId, ModelError> {
        let idx = token.index();
        if idx >= self.config.kind.vocab_size() {
            return Err(ModelError::InvalidConfig(format!("token {token} is not in the {} vocabulary", self.kind())));
        }
        if let Some(n) = cache.embeddings[idx] {
            return Ok(n);
        }
        let table = g.param(self.emb);
        let n = g.row(table, idx)?;
        cache.embeddings[idx] = Some(n);
        Ok(n)
    }

    /// `tanh(M [l; r] + b)`
    pub fn compose_tree_rnn(&self, g: &mut Graph<'_>, left: NodeId, right: NodeId) -> Result<NodeId, ModelError> {
        let comp = match self.comp {
            Composition::TreeRnn { comp } | Composition::TreeRntn { comp, .. } => comp,
            _ => return Err(self.wrong_kind("compose_tree_rnn")),
        };
        let x = g.concat(left, right)?;
        let pre = comp.apply(g, x)?;
        Ok(g.tanh(pre)?)
    }

    /// `tanh(M [l; r] + b) + tanh(lᵀ T r)`
    pub fn compose_tree_rntn(&self, g: &mut Graph<'_>, left: NodeId, right: NodeId) -> Result<NodeId, ModelError> {
        let Composition::TreeRntn { tensor, .. } = self.comp else {
            return Err(self.wrong_kind("compose_tree_rntn"));
        };
        let nn = self.compose_tree_rnn(g, left, right)?;
        let t = g.param(tensor);
        let bil = g.bilinear(left, t, right)?;
        let bil = g.tanh(bil)?;
        Ok(g.add(nn, bil)?)
    }

    /// Leaf state for TreeLSTM: `c = W_c x + b_c`, `h = σ(W_o x + b_o) ⊙ tanh(c)`.
    pub fn tree_lstm_leaf(&self, g: &mut Graph<'_>, x: NodeId) -> Result<LstmState, ModelError> {
        let Composition::TreeLstm(gates) = self.comp else {
            return Err(self.wrong_kind("tree_lstm_leaf"));
        };
        let c = gates.leaf_cell.apply(g, x)?;
        let o = gates.leaf_output.apply(g, x)?;
        let o = g.sigmoid(o)?;
        let tc = g.tanh(c)?;
        let h = g.hadamard(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// Binary TreeLSTM node with a separate forget gate per child.
    pub fn compose_tree_lstm(
        &self,
        g: &mut Graph<'_>,
        left: LstmState,
        right: LstmState,
    ) -> Result<LstmState, ModelError> {
        let Composition::TreeLstm(gates) = self.comp else {
            return Err(self.wrong_kind("compose_tree_lstm"));
        };
        let hh = g.concat(left.h, right.h)?;
        let sig = |g: &mut Graph<'_>, a: Affine| -> Result<NodeId, ModelError> {
            let pre = a.apply(g, hh)?;
            Ok(g.sigmoid(pre)?)
        };
        let i = sig(g, gates.input)?;
        let fl = sig(g, gates.forget_left)?;
        let fr = sig(g, gates.forget_right)?;
        let o = sig(g, gates.output)?;
        let u = gates.update.apply(g, hh)?;
        let u = g.tanh(u)?;
        let iu = g.hadamard(i, u)?;
        let lc = g.hadamard(fl, left.c)?;
        let rc = g.hadamard(fr, right.c)?;
        let c = g.add(iu, lc)?;
        let c = g.add(c, rc)?;
        let tc = g.tanh(c)?;
        let h = g.hadamard(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// One LSTM step over `[x; h]`: `c' = f⊙c + i⊙u`, `h' = o⊙tanh(c')`.
    pub fn lstm_step(&self, g: &mut Graph<'_>, x: NodeId, state: LstmState) -> Result<LstmState, ModelError> {
        let Composition::SeqLstm(gates) = self.comp else {
            return Err(self.wrong_kind("lstm_step"));
        };
        let xh = g.concat(x, state.h)?;
        let sig = |g: &mut Graph<'_>, a: Affine| -> Result<NodeId, ModelError> {
            let pre = a.apply(g, xh)?;
            Ok(g.sigmoid(pre)?)
        };
        let i = sig(g, gates.input)?;
        let f = sig(g, gates.forget)?;
        let o = sig(g, gates.output)?;
        let u = gates.update.apply(g, xh)?;
        let u = g.tanh(u)?;
        let fc = g.hadamard(f, state.c)?;
        let iu = g.hadamard(i, u)?;
        let c = g.add(fc, iu)?;
        let tc = g.tanh(c)?;
        let h = g.hadamard(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// Zero initial state for the sequence encoders.
    pub fn zero_state(&self, g: &mut Graph<'_>) -> LstmState {
        let zeros = Tensor::vector(vec![0.0; self.config.d_hidden]);
        let h = g.input(zeros.clone());
        let c = g.input(zeros);
        LstmState { h, c }
    }

    /// Encodes a sentence into a `d_hidden` vector node.
    pub fn encode(&self, g: &mut Graph<'_>, sentence: &Formula, cache: &mut LeafCache) -> Result<NodeId, ModelError> {
        match self.comp {
            Composition::TreeRnn { .. } | Composition::TreeRntn { .. } => self.encode_tree_plain(g, sentence, cache),
            Composition::TreeLstm(_) => Ok(self.encode_tree_lstm(g, sentence, cache)?.h),
            _ => self.encode_tokens(g, &sentence.render_tokens(), cache),
        }
    }

    fn compose_plain(&self, g: &mut Graph<'_>, l: NodeId, r: NodeId) -> Result<NodeId, ModelError> {
        match self.comp {
            Composition::TreeRntn { .. } => self.compose_tree_rntn(g, l, r),
            _ => self.compose_tree_rnn(g, l, r),
        }
    }

    fn encode_tree_plain(&self, g: &mut Graph<'_>, f: &Formula, cache: &mut LeafCache) -> Result<NodeId, ModelError> {
        match f {
            Formula::Var(i) => self.embedding(g, Token::Var(*i), cache),
            Formula::Not(c) => {
                let not = self.embedding(g, Token::Not, cache)?;
                let c = self.encode_tree_plain(g, c, cache)?;
                self.compose_plain(g, not, c)
            }
            Formula::Bin(op, l, r) => {
                let l = self.encode_tree_plain(g, l, cache)?;
                let op = self.embedding(g, op_token(*op), cache)?;
                let r = self.encode_tree_plain(g, r, cache)?;
                let opr = self.compose_plain(g, op, r)?;
                self.compose_plain(g, l, opr)
            }
        }
    }

    fn tree_lstm_word(&self, g: &mut Graph<'_>, token: Token, cache: &mut LeafCache) -> Result<LstmState, ModelError> {
        if let Some(s) = cache.tree_lstm[token.index()] {
            return Ok(s);
        }
        let x = self.embedding(g, token, cache)?;
        let s = self.tree_lstm_leaf(g, x)?;
        cache.tree_lstm[token.index()] = Some(s);
        Ok(s)
    }

    fn encode_tree_lstm(&self, g: &mut Graph<'_>, f: &Formula, cache: &mut LeafCache) -> Result<LstmState, ModelError> {
        match f {
            Formula::Var(i) => self.tree_lstm_word(g, Token::Var(*i), cache),
            Formula::Not(c) => {
                let not = self.tree_lstm_word(g, Token::Not, cache)?;
                let c = self.encode_tree_lstm(g, c, cache)?;
                self.compose_tree_lstm(g, not, c)
            }
            Formula::Bin(op, l, r) => {
                let l = self.encode_tree_lstm(g, l, cache)?;
                let op = self.tree_lstm_word(g, op_token(*op), cache)?;
                let r = self.encode_tree_lstm(g, r, cache)?;
                let opr = self.compose_tree_lstm(g, op, r)?;
                self.compose_tree_lstm(g, l, opr)
            }
        }
    }

    /// Sequence encoders: final LSTM/RNN hidden state, or the NBOW projection.
    pub fn encode_tokens(
        &self,
        g: &mut Graph<'_>,
        tokens: &[Token],
        cache: &mut LeafCache,
    ) -> Result<NodeId, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        match self.comp {
            Composition::SeqLstm(_) => {
                let mut state = self.zero_state(g);
                for &t in tokens {
                    let x = self.embedding(g, t, cache)?;
                    state = self.lstm_step(g, x, state)?;
                }
                Ok(state.h)
            }
            Composition::SeqRnn { cell } => {
                let mut h = self.zero_state(g).h;
                for &t in tokens {
                    let x = self.embedding(g, t, cache)?;
                    let xh = g.concat(x, h)?;
                    let pre = cell.apply(g, xh)?;
                    h = g.tanh(pre)?;
                }
                Ok(h)
            }
            Composition::Nbow { proj } => {
                let mut sum = self.embedding(g, tokens[0], cache)?;
                for &t in &tokens[1..] {
                    let x = self.embedding(g, t, cache)?;
                    sum = g.add(sum, x)?;
                }
                let mean = g.scale(1.0 / tokens.len() as f64, sum)?;
                let pre = proj.apply(g, mean)?;
                Ok(g.tanh(pre)?)
            }
            _ => {
                let f = propnli_core::logic::parse(tokens).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
                self.encode(g, &f, cache)
            }
        }
    }

    fn wrong_kind(&self, op: &str) -> ModelError {
        ModelError::InvalidConfig(format!("{op} is not defined for {}", self.kind()))
    }
}

fn op_token(op: BinOp) -> Token {
    op.token()
}

/// Builds a fresh store holding only this encoder's parameters.
pub fn standalone(config: &EncoderConfig, seed: u64) -> Result<(ParamStore, Encoder), ModelError> {
    let store = crate::params::init_store(&config.param_specs(), seed, Default::default())?;
    let enc = Encoder::bind(config.clone(), &Registry::new(&store))?;
    Ok((store, enc))
}
