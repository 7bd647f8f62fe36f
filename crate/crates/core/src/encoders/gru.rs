use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamId, ParamStore, Tensor};

/// Bias-free gated recurrent unit:
///
/// ```text
/// r = σ(W_r x + U_r h)
/// u = σ(W_u x + U_u (r ⊙ h))
/// h̃ = tanh(W x + U (r ⊙ h))
/// h' = (1 - u) ⊙ h + u ⊙ h̃
/// ```
///
/// The reset gate also enters the update gate's recurrent term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub w_u: ParamId,
    pub u_u: ParamId,
    pub w: ParamId,
    pub u: ParamId,
    input_dim: usize,
    hidden_dim: usize,
}

const NAMES: [&str; 6] = ["w_r", "u_r", "w_u", "u_u", "w", "u"];

impl GruCell {
    /// Registers the six matrices as `{prefix}.w_r`, `{prefix}.u_r`, ...
    /// drawn from `uniform(-scale, scale)`.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("gru dimensions must be positive".into()));
        }
        let mut ids = Vec::with_capacity(6);
        for (k, name) in NAMES.iter().enumerate() {
            let cols = if k % 2 == 0 { input_dim } else { hidden_dim };
            ids.push(store.insert_uniform(format!("{prefix}.{name}"), &[hidden_dim, cols], scale, rng)?);
        }
        Self::from_ids(store, &ids)
    }

    /// Looks up an existing cell registered under `prefix`.
    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let ids = NAMES
            .iter()
            .map(|n| store.id(&format!("{prefix}.{n}")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(store, &ids)
    }

    fn from_ids(store: &ParamStore, ids: &[ParamId]) -> Result<Self> {
        let shape = |i: usize| store.get(ids[i]).shape().to_vec();
        let [hidden_dim, input_dim] = shape(0)[..] else {
            return Err(Error::InvalidOperand {
                op: "gru_cell",
                message: format!("w_r must be a matrix, got {:?}", shape(0)),
            });
        };
        for (k, &id) in ids.iter().enumerate() {
            let want = [hidden_dim, if k % 2 == 0 { input_dim } else { hidden_dim }];
            if store.get(id).shape() != want {
                return Err(Error::ShapeMismatch {
                    op: "gru_cell",
                    left: want.to_vec(),
                    right: store.get(id).shape().to_vec(),
                });
            }
        }
        Ok(Self {
            w_r: ids[0],
            u_r: ids[1],
            w_u: ids[2],
            u_u: ids[3],
            w: ids[4],
            u: ids[5],
            input_dim,
            hidden_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// The zero state `h_0`.
    pub fn zero_state(&self, g: &mut Graph<'_>) -> Result<NodeId> {
        g.input(Tensor::zeros(&[self.hidden_dim]))
    }

    /// One recurrence step on the tape.
    pub fn step(&self, g: &mut Graph<'_>, x: NodeId, h: NodeId) -> Result<NodeId> {
        if g.shape(x) != [self.input_dim] || g.shape(h) != [self.hidden_dim] {
            return Err(Error::ShapeMismatch {
                op: "gru_step",
                left: vec![self.input_dim, self.hidden_dim],
                right: [g.shape(x), g.shape(h)].concat(),
            });
        }
        let lin = |g: &mut Graph<'_>, w: ParamId, v: NodeId| {
            let w = g.param(w);
            g.matmul(w, v)
        };

        let a = lin(g, self.w_r, x)?;
        let b = lin(g, self.u_r, h)?;
        let s = g.add(a, b)?;
        let r = g.sigmoid(s)?;
        let rh = g.mul(r, h)?;

        let a = lin(g, self.w_u, x)?;
        let b = lin(g, self.u_u, rh)?;
        let s = g.add(a, b)?;
        let u = g.sigmoid(s)?;

        let a = lin(g, self.w, x)?;
        let b = lin(g, self.u, rh)?;
        let s = g.add(a, b)?;
        let cand = g.tanh(s)?;

        let keep = g.one_minus(u)?;
        let old = g.mul(keep, h)?;
        let new = g.mul(u, cand)?;
        g.add(old, new)
    }
}

/// Evaluates a single step outside of any training tape.
pub fn gru_step(store: &ParamStore, cell: &GruCell, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::inference(store);
    let x = g.vector(x.to_vec())?;
    let h = g.vector(h_prev.to_vec())?;
    let out = cell.step(&mut g, x, h)?;
    Ok(g.value(out).data().to_vec())
}
