//! History encoders: continuous bag-of-items, mean-pooled GRU states and
//! bidirectional GRU annotations.

mod gru;

pub use gru::{gru_step, GruCell};

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};

/// Per-step GRU states and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentEncoding {
    pub states: Vec<NodeId>,
    pub pooled: NodeId,
}

fn check_history(history: &[usize]) -> Result<()> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    Ok(())
}

fn embed(g: &mut Graph<'_>, history: &[usize], e: &EmbeddingMatrix) -> Result<Vec<NodeId>> {
    history.iter().map(|&i| g.vector(e.lookup(i)?.to_vec())).collect()
}

/// `Eᵀ s` where `s[i]` counts how often item `i` occurs in the history.
pub fn cboi(history: &[usize], e: &EmbeddingMatrix) -> Result<Vec<f64>> {
    check_history(history)?;
    let mut p = vec![0.0; e.dim()];
    for &i in history {
        for (acc, v) in p.iter_mut().zip(e.lookup(i)?) {
            *acc += v;
        }
    }
    Ok(p)
}

/// Records the bag-of-items vector as a constant on the tape.
pub fn encode_cboi(g: &mut Graph<'_>, history: &[usize], e: &EmbeddingMatrix) -> Result<NodeId> {
    let p = cboi(history, e)?;
    g.input(Tensor::vector(p))
}

/// Runs `cell` over the history from a zero state and averages the states.
pub fn encode_recurrent(
    g: &mut Graph<'_>,
    history: &[usize],
    e: &EmbeddingMatrix,
    cell: &GruCell,
) -> Result<RecurrentEncoding> {
    check_history(history)?;
    let xs = embed(g, history, e)?;
    let states = run(g, &xs, cell)?;
    let sum = states[1..].iter().try_fold(states[0], |acc, &z| g.add(acc, z))?;
    let pooled = g.scale(sum, 1.0 / states.len() as f64)?;
    Ok(RecurrentEncoding { states, pooled })
}

fn run(g: &mut Graph<'_>, xs: &[NodeId], cell: &GruCell) -> Result<Vec<NodeId>> {
    let mut h = cell.zero_state(g)?;
    let mut states = Vec::with_capacity(xs.len());
    for &x in xs {
        h = cell.step(g, x, h)?;
        states.push(h);
    }
    Ok(states)
}

/// Annotation `a_i = [forward_i ; backward_i]` for every history position,
/// where the backward cell reads the history in reverse.
pub fn encode_annotations(
    g: &mut Graph<'_>,
    history: &[usize],
    e: &EmbeddingMatrix,
    fwd: &GruCell,
    bwd: &GruCell,
) -> Result<Vec<NodeId>> {
    check_history(history)?;
    let xs = embed(g, history, e)?;
    let forward = run(g, &xs, fwd)?;
    let rev: Vec<NodeId> = xs.iter().rev().copied().collect();
    let mut backward = run(g, &rev, bwd)?;
    backward.reverse();
    forward
        .iter()
        .zip(&backward)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect()
}
