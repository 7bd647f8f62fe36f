use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::InteractionSequence;
use crate::embeddings::EmbeddingMatrix;
use crate::encoders::{encode_annotations, encode_cboi, encode_recurrent, GruCell};
use crate::error::{Error, Result};
use crate::evaluation::{rank_items, RankedRecommendations, Recommender};
use crate::mdn::{DecoderInput, FfDecoder, MixtureNodes, MixtureParameters, RnnDecoder, ScorerKind};
use crate::numerics::{Checkpoint, Graph, NodeId, ParamId, ParamStore, Precision};
use crate::seed::{Rng, SeedStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    #[serde(rename = "CBoI")]
    Cboi,
    #[serde(rename = "RNN")]
    Rnn,
    #[serde(rename = "RNN-ATT")]
    RnnAtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderKind {
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "RNN")]
    Rnn,
}

/// Architecture of one model, written `ENCODER-DECODER-m` (e.g. `RNN-ATT-RNN-4`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub components: usize,
    #[serde(default = "default_hidden")]
    pub d_hidden: usize,
    #[serde(default = "default_emb")]
    pub d_emb: usize,
    #[serde(default = "default_init")]
    pub init_scale: f64,
    #[serde(default)]
    pub scorer: ScorerKind,
}

fn default_hidden() -> usize {
    256
}

fn default_emb() -> usize {
    100
}

fn default_init() -> f64 {
    0.08
}

impl ModelConfig {
    pub fn new(encoder: EncoderKind, decoder: DecoderKind, components: usize) -> Self {
        Self {
            encoder,
            decoder,
            components,
            d_hidden: default_hidden(),
            d_emb: default_emb(),
            init_scale: default_init(),
            scorer: ScorerKind::Dot,
        }
    }

    pub fn with_dims(mut self, d_emb: usize, d_hidden: usize) -> Self {
        self.d_emb = d_emb;
        self.d_hidden = d_hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("a model needs at least one mixture component".into()));
        }
        if self.encoder == EncoderKind::RnnAtt && self.decoder != DecoderKind::Rnn {
            return Err(Error::Config("the attention encoder needs the RNN decoder".into()));
        }
        if self.d_emb == 0 || self.d_hidden == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.encoder == EncoderKind::RnnAtt && self.d_hidden % 2 != 0 {
            return Err(Error::Config("the bidirectional annotator needs an even d_hidden".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be non-negative".into()));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        let enc = match self.encoder {
            EncoderKind::Cboi => "CBoI",
            EncoderKind::Rnn => "RNN",
            EncoderKind::RnnAtt => "RNN-ATT",
        };
        let dec = match self.decoder {
            DecoderKind::Ff => "FF",
            DecoderKind::Rnn => "RNN",
        };
        format!("{enc}-{dec}-{}", self.components)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ModelConfig {
    type Err = Error;

    /// Parses names like `CBoI-FF-2` or `rnn-att-rnn-4` with default dims.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown model `{s}`; expected e.g. CBoI-FF-2, RNN-RNN-4, RNN-ATT-RNN-8"));
        let upper = s.to_ascii_uppercase();
        let (arch, m) = upper.rsplit_once('-').ok_or_else(bad)?;
        let components: usize = m.parse().map_err(|_| bad())?;
        let (encoder, decoder) = match arch {
            "CBOI-FF" => (EncoderKind::Cboi, DecoderKind::Ff),
            "CBOI-RNN" => (EncoderKind::Cboi, DecoderKind::Rnn),
            "RNN-FF" => (EncoderKind::Rnn, DecoderKind::Ff),
            "RNN-RNN" => (EncoderKind::Rnn, DecoderKind::Rnn),
            "RNN-ATT-RNN" => (EncoderKind::RnnAtt, DecoderKind::Rnn),
            "RNN-ATT-FF" => (EncoderKind::RnnAtt, DecoderKind::Ff),
            _ => return Err(bad()),
        };
        let cfg = Self::new(encoder, decoder, components);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Cboi { proj: ParamId },
    Rnn { cell: GruCell },
    RnnAtt { cell: GruCell, fwd: GruCell, bwd: GruCell },
}

#[derive(Debug, Clone, PartialEq)]
enum Decoder {
    Ff(FfDecoder),
    Rnn(RnnDecoder),
}

/// Encoder, decoder and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

fn register(config: &ModelConfig, store: &mut ParamStore, scale: f64, rng: &mut Rng) -> Result<()> {
    let (h, d) = (config.d_hidden, config.d_emb);
    match config.encoder {
        EncoderKind::Cboi => {
            store.insert_uniform("enc.proj", &[h, d], scale, rng)?;
        }
        EncoderKind::Rnn => {
            GruCell::register(store, "enc.gru", d, h, scale, rng)?;
        }
        EncoderKind::RnnAtt => {
            GruCell::register(store, "enc.gru", d, h, scale, rng)?;
            GruCell::register(store, "enc.fwd", d, h / 2, scale, rng)?;
            GruCell::register(store, "enc.bwd", d, h / 2, scale, rng)?;
        }
    }
    match config.decoder {
        DecoderKind::Ff => {
            FfDecoder::register(store, "dec", config.components, h, d, scale, rng)?;
        }
        DecoderKind::Rnn => {
            RnnDecoder::register(store, "dec", config.components, h, d, attention(config), scale, rng)?;
        }
    }
    Ok(())
}

fn attention(config: &ModelConfig) -> Option<ScorerKind> {
    (config.encoder == EncoderKind::RnnAtt).then_some(config.scorer)
}

impl Model {
    /// Fresh parameters drawn from `uniform(-init_scale, init_scale)`.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        register(&config, &mut params, config.init_scale, rng)?;
        Self::bind(config, params)
    }

    /// Binds existing parameters; names and shapes must match the
    /// architecture exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut reference = ParamStore::new();
        register(&config, &mut reference, 0.0, &mut SeedStreams::new(0).stream("init"))?;
        for (_, name, t) in reference.iter() {
            let got = params.get(params.id(name)?);
            if got.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "model_params",
                    left: t.shape().to_vec(),
                    right: got.shape().to_vec(),
                });
            }
        }
        if params.len() != reference.len() {
            return Err(Error::Config(format!(
                "{} expects {} tensors, got {}",
                config.name(),
                reference.len(),
                params.len()
            )));
        }
        Self::bind(config, params)
    }

    fn bind(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let (h, d) = (config.d_hidden, config.d_emb);
        let encoder = match config.encoder {
            EncoderKind::Cboi => Encoder::Cboi {
                proj: params.id("enc.proj")?,
            },
            EncoderKind::Rnn => Encoder::Rnn {
                cell: GruCell::from_store(&params, "enc.gru")?,
            },
            EncoderKind::RnnAtt => Encoder::RnnAtt {
                cell: GruCell::from_store(&params, "enc.gru")?,
                fwd: GruCell::from_store(&params, "enc.fwd")?,
                bwd: GruCell::from_store(&params, "enc.bwd")?,
            },
        };
        let decoder = match config.decoder {
            DecoderKind::Ff => Decoder::Ff(FfDecoder::from_store(&params, "dec", config.components, h, d)?),
            DecoderKind::Rnn => Decoder::Rnn(RnnDecoder::from_store(
                &params,
                "dec",
                config.components,
                d,
                attention(&config),
            )?),
        };
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn name(&self) -> String {
        self.config.name()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Encodes `history` and decodes a mixture on `g`, which must borrow
    /// this model's parameters.
    pub fn forward(&self, g: &mut Graph<'_>, history: &[usize], e: &EmbeddingMatrix) -> Result<MixtureNodes> {
        if e.dim() != self.config.d_emb {
            return Err(Error::ShapeMismatch {
                op: "model_forward",
                left: vec![self.config.d_emb],
                right: vec![e.dim()],
            });
        }
        match (&self.encoder, &self.decoder) {
            (Encoder::RnnAtt { cell, fwd, bwd }, Decoder::Rnn(dec)) => {
                let enc = encode_recurrent(g, history, e, cell)?;
                let ann = encode_annotations(g, history, e, fwd, bwd)?;
                dec.decode(
                    g,
                    DecoderInput::Attention {
                        states: &enc.states,
                        annotations: &ann,
                    },
                )
            }
            (enc, dec) => {
                let p = self.pooled(g, enc, history, e)?;
                match dec {
                    Decoder::Ff(d) => d.decode(g, p),
                    Decoder::Rnn(d) => d.decode(g, DecoderInput::Pooled(p)),
                }
            }
        }
    }

    fn pooled(&self, g: &mut Graph<'_>, enc: &Encoder, history: &[usize], e: &EmbeddingMatrix) -> Result<NodeId> {
        match enc {
            Encoder::Cboi { proj } => {
                let bag = encode_cboi(g, history, e)?;
                let w = g.param(*proj);
                g.matmul(w, bag)
            }
            Encoder::Rnn { cell } | Encoder::RnnAtt { cell, .. } => Ok(encode_recurrent(g, history, e, cell)?.pooled),
        }
    }

    /// `-(1/|future|) Σ log f(v_i | history)` with one decode per sequence.
    pub fn sequence_loss(&self, g: &mut Graph<'_>, seq: &InteractionSequence, e: &EmbeddingMatrix) -> Result<NodeId> {
        if seq.future.is_empty() {
            return Err(Error::Empty("future"));
        }
        let mixture = self.forward(g, &seq.history, e)?;
        let terms = mixture.density_terms(g)?;
        let logs = seq
            .future
            .iter()
            .map(|&i| {
                let v = g.vector(e.lookup(i)?.to_vec())?;
                terms.log_density(g, v)
            })
            .collect::<Result<Vec<_>>>()?;
        let all = g.concat(&logs)?;
        let mean = g.mean(all)?;
        g.scale(mean, -1.0)
    }

    /// The decoded mixture for `history`, outside of training.
    pub fn mixture(&self, history: &[usize], e: &EmbeddingMatrix) -> Result<MixtureParameters> {
        let mut g = Graph::inference(&self.params);
        let nodes = self.forward(&mut g, history, e)?;
        Ok(nodes.values(&g))
    }

    /// Mean over future items of their log-density.
    pub fn sequence_log_likelihood(&self, seq: &InteractionSequence, e: &EmbeddingMatrix) -> Result<f64> {
        if seq.future.is_empty() {
            return Err(Error::Empty("future"));
        }
        let params = self.mixture(&seq.history, e)?;
        let mut scorer = params.scorer()?;
        let total = seq
            .future
            .iter()
            .map(|&i| Ok(scorer.log_density(e.lookup(i)?)))
            .sum::<Result<f64>>()?;
        Ok(total / seq.future.len() as f64)
    }

    /// Average of [`Model::sequence_log_likelihood`] over `sequences`.
    pub fn mean_log_likelihood(&self, sequences: &[InteractionSequence], e: &EmbeddingMatrix) -> Result<f64> {
        if sequences.is_empty() {
            return Err(Error::Empty("sequences"));
        }
        let total = sequences
            .iter()
            .map(|s| self.sequence_log_likelihood(s, e))
            .sum::<Result<f64>>()?;
        Ok(total / sequences.len() as f64)
    }

    pub fn recommender<'a>(&'a self, e: &'a EmbeddingMatrix) -> ModelRecommender<'a> {
        ModelRecommender { model: self, e }
    }

    pub fn to_checkpoint(&self, precision: Precision) -> Checkpoint {
        let c = &self.config;
        Checkpoint::from_params(&self.params, precision)
            .with_metadata("kind", "model")
            .with_metadata("model", c.name())
            .with_metadata("d_emb", c.d_emb.to_string())
            .with_metadata("d_hidden", c.d_hidden.to_string())
            .with_metadata("init_scale", format!("{:?}", c.init_scale))
            .with_metadata("scorer", serde_json::to_string(&c.scorer).expect("enum serializes"))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ckpt.metadata
                .get(k)
                .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            meta(k)?
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint metadata `{k}` is not a number")))
        };
        let mut config: ModelConfig = meta("model")?.parse()?;
        config.d_emb = num("d_emb")?;
        config.d_hidden = num("d_hidden")?;
        config.init_scale = meta("init_scale")?
            .parse()
            .map_err(|_| Error::Config("checkpoint metadata `init_scale` is not a number".into()))?;
        config.scorer = serde_json::from_str(meta("scorer")?)?;
        Self::from_params(config, ckpt.to_params()?)
    }
}

/// A trained model paired with the item vectors it ranks.
#[derive(Debug, Clone, Copy)]
pub struct ModelRecommender<'a> {
    pub model: &'a Model,
    pub e: &'a EmbeddingMatrix,
}

impl Recommender for ModelRecommender<'_> {
    fn name(&self) -> String {
        self.model.name()
    }

    fn components(&self) -> Option<usize> {
        Some(self.model.config.components)
    }

    fn recommend(&self, history: &[usize], k: usize, exclude: Option<&HashSet<usize>>) -> Result<RankedRecommendations> {
        let params = self.model.mixture(history, self.e)?;
        rank_items(&params, self.e, k, exclude)
    }
}
