use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MixtureNodes, VARIANCE_FLOOR};
use crate::encoders::GruCell;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamId, ParamStore};

fn variance(g: &mut Graph<'_>, pre: NodeId) -> Result<NodeId> {
    let sp = g.softplus(pre)?;
    g.add_scalar(sp, VARIANCE_FLOOR)
}

fn lin(g: &mut Graph<'_>, w: ParamId, x: NodeId) -> Result<NodeId> {
    let w = g.param(w);
    g.matmul(w, x)
}

fn matrix(store: &ParamStore, name: &str, shape: [usize; 2]) -> Result<ParamId> {
    let id = store.id(name)?;
    if store.get(id).shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "decoder_weights",
            left: shape.to_vec(),
            right: store.get(id).shape().to_vec(),
        });
    }
    Ok(id)
}

fn check_components(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    Ok(())
}

/// Separate output heads per component:
/// `μ_i = tanh(W_μi p)`, `σ²_i = softplus(W_Σi p) + floor`, `α = softmax(W_αi p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfDecoder {
    pub mu: Vec<ParamId>,
    pub sigma: Vec<ParamId>,
    pub alpha: Vec<ParamId>,
    hidden_dim: usize,
}

impl FfDecoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        components: usize,
        hidden_dim: usize,
        emb_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_components(components)?;
        for i in 0..components {
            store.insert_uniform(format!("{prefix}.mu.{i}"), &[emb_dim, hidden_dim], scale, rng)?;
            store.insert_uniform(format!("{prefix}.sigma.{i}"), &[emb_dim, hidden_dim], scale, rng)?;
            store.insert_uniform(format!("{prefix}.alpha.{i}"), &[1, hidden_dim], scale, rng)?;
        }
        Self::from_store(store, prefix, components, hidden_dim, emb_dim)
    }

    pub fn from_store(
        store: &ParamStore,
        prefix: &str,
        components: usize,
        hidden_dim: usize,
        emb_dim: usize,
    ) -> Result<Self> {
        check_components(components)?;
        let heads = |head: &str, rows: usize| {
            (0..components)
                .map(|i| matrix(store, &format!("{prefix}.{head}.{i}"), [rows, hidden_dim]))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            mu: heads("mu", emb_dim)?,
            sigma: heads("sigma", emb_dim)?,
            alpha: heads("alpha", 1)?,
            hidden_dim,
        })
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    pub fn decode(&self, g: &mut Graph<'_>, p: NodeId) -> Result<MixtureNodes> {
        if g.shape(p) != [self.hidden_dim] {
            return Err(Error::ShapeMismatch {
                op: "decode_ff",
                left: vec![self.hidden_dim],
                right: g.shape(p).to_vec(),
            });
        }
        let mut means = Vec::new();
        let mut variances = Vec::new();
        let mut scores = Vec::new();
        for i in 0..self.components() {
            let pre = lin(g, self.mu[i], p)?;
            means.push(g.tanh(pre)?);
            let pre = lin(g, self.sigma[i], p)?;
            variances.push(variance(g, pre)?);
            scores.push(lin(g, self.alpha[i], p)?);
        }
        let logits = g.concat(&scores)?;
        let weights = g.softmax(logits)?;
        Ok(MixtureNodes {
            logits,
            weights,
            means,
            variances,
            attention: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Dot,
    Additive,
}

/// Relevance of an annotation to the decoder state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionScorer {
    /// `a · s`
    Dot,
    /// `vᵀ tanh(W_a a + W_s s)`
    Additive { w_a: ParamId, w_s: ParamId, v: ParamId },
}

impl AttentionScorer {
    pub fn register<R: Rng + ?Sized>(
        kind: ScorerKind,
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if kind == ScorerKind::Additive {
            store.insert_uniform(format!("{prefix}.w_a"), &[dim, dim], scale, rng)?;
            store.insert_uniform(format!("{prefix}.w_s"), &[dim, dim], scale, rng)?;
            store.insert_uniform(format!("{prefix}.v"), &[dim], scale, rng)?;
        }
        Self::from_store(kind, store, prefix, dim)
    }

    pub fn from_store(kind: ScorerKind, store: &ParamStore, prefix: &str, dim: usize) -> Result<Self> {
        Ok(match kind {
            ScorerKind::Dot => Self::Dot,
            ScorerKind::Additive => Self::Additive {
                w_a: matrix(store, &format!("{prefix}.w_a"), [dim, dim])?,
                w_s: matrix(store, &format!("{prefix}.w_s"), [dim, dim])?,
                v: store.id(&format!("{prefix}.v"))?,
            },
        })
    }

    pub fn score(&self, g: &mut Graph<'_>, a: NodeId, state: NodeId) -> Result<NodeId> {
        match *self {
            Self::Dot => g.dot(a, state).map_err(|_| Error::ShapeMismatch {
                op: "score_attention",
                left: g.shape(a).to_vec(),
                right: g.shape(state).to_vec(),
            }),
            Self::Additive { w_a, w_s, v } => {
                let x = lin(g, w_a, a)?;
                let y = lin(g, w_s, state)?;
                let s = g.add(x, y)?;
                let t = g.tanh(s)?;
                let v = g.param(v);
                g.dot(v, t)
            }
        }
    }
}

/// What the recurrent decoder reads at every step.
#[derive(Debug, Clone, Copy)]
pub enum DecoderInput<'a> {
    /// The same pooled history vector at every step.
    Pooled(NodeId),
    /// A fresh attention-weighted sum of `states` per step, scored through
    /// `annotations`.
    Attention {
        states: &'a [NodeId],
        annotations: &'a [NodeId],
    },
}

/// A GRU run for `m` steps; step `l` yields component `l` through shared
/// heads `W_μ`, `W_Σ`, `W_α`, and the weights are a softmax over all steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnDecoder {
    pub cell: GruCell,
    pub mu: ParamId,
    pub sigma: ParamId,
    pub alpha: ParamId,
    pub scorer: Option<AttentionScorer>,
    components: usize,
}

impl RnnDecoder {
    #[allow(clippy::too_many_arguments)]
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        components: usize,
        hidden_dim: usize,
        emb_dim: usize,
        scorer: Option<ScorerKind>,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_components(components)?;
        GruCell::register(store, &format!("{prefix}.cell"), hidden_dim, hidden_dim, scale, rng)?;
        store.insert_uniform(format!("{prefix}.mu"), &[emb_dim, hidden_dim], scale, rng)?;
        store.insert_uniform(format!("{prefix}.sigma"), &[emb_dim, hidden_dim], scale, rng)?;
        store.insert_uniform(format!("{prefix}.alpha"), &[1, hidden_dim], scale, rng)?;
        if let Some(kind) = scorer {
            AttentionScorer::register(kind, store, &format!("{prefix}.att"), hidden_dim, scale, rng)?;
        }
        Self::from_store(store, prefix, components, emb_dim, scorer)
    }

    pub fn from_store(
        store: &ParamStore,
        prefix: &str,
        components: usize,
        emb_dim: usize,
        scorer: Option<ScorerKind>,
    ) -> Result<Self> {
        check_components(components)?;
        let cell = GruCell::from_store(store, &format!("{prefix}.cell"))?;
        let h = cell.hidden_dim();
        if cell.input_dim() != h {
            return Err(Error::ShapeMismatch {
                op: "decode_rnn",
                left: vec![h, h],
                right: vec![h, cell.input_dim()],
            });
        }
        Ok(Self {
            cell,
            mu: matrix(store, &format!("{prefix}.mu"), [emb_dim, h])?,
            sigma: matrix(store, &format!("{prefix}.sigma"), [emb_dim, h])?,
            alpha: matrix(store, &format!("{prefix}.alpha"), [1, h])?,
            scorer: scorer
                .map(|k| AttentionScorer::from_store(k, store, &format!("{prefix}.att"), h))
                .transpose()?,
            components,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn decode(&self, g: &mut Graph<'_>, input: DecoderInput<'_>) -> Result<MixtureNodes> {
        let mut state = self.cell.zero_state(g)?;
        let mut means = Vec::with_capacity(self.components);
        let mut variances = Vec::with_capacity(self.components);
        let mut scores = Vec::with_capacity(self.components);
        let mut attention = Vec::new();
        for _ in 0..self.components {
            let x = match input {
                DecoderInput::Pooled(p) => p,
                DecoderInput::Attention { states, annotations } => {
                    let scorer = self.scorer.as_ref().ok_or_else(|| {
                        Error::Config("attention input needs a decoder built with a scorer".into())
                    })?;
                    if states.is_empty() || states.len() != annotations.len() {
                        return Err(Error::Empty("attention history"));
                    }
                    let s = annotations
                        .iter()
                        .map(|&a| scorer.score(g, a, state))
                        .collect::<Result<Vec<_>>>()?;
                    let s = g.concat(&s)?;
                    let w = g.softmax(s)?;
                    attention.push(w);
                    let mut acc = None;
                    for (i, &z) in states.iter().enumerate() {
                        let wi = g.slice(w, i, 1)?;
                        let wi = g.sum(wi)?;
                        let term = g.scale_by(wi, z)?;
                        acc = Some(match acc {
                            None => term,
                            Some(a) => g.add(a, term)?,
                        });
                    }
                    acc.expect("non-empty history")
                }
            };
            state = self.cell.step(g, x, state)?;
            let pre = lin(g, self.mu, state)?;
            means.push(g.tanh(pre)?);
            let pre = lin(g, self.sigma, state)?;
            variances.push(variance(g, pre)?);
            scores.push(lin(g, self.alpha, state)?);
        }
        let logits = g.concat(&scores)?;
        let weights = g.softmax(logits)?;
        Ok(MixtureNodes {
            logits,
            weights,
            means,
            variances,
            attention,
        })
    }
}
