use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Graph, NodeId, Tensor};

/// Lower bound added to every decoded variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Tolerance on the mixture weights summing to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// A diagonal Gaussian mixture over item vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParameters {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl MixtureParameters {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Checks shapes, the simplex, the variance floor and `|μ| ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 {
            return Err(Error::Empty("mixture components"));
        }
        let d = self.dim();
        if self.means.len() != m || self.variances.len() != m {
            return Err(Error::ShapeMismatch {
                op: "mixture",
                left: vec![m],
                right: vec![self.means.len(), self.variances.len()],
            });
        }
        if d == 0 || self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::InvalidOperand {
                op: "mixture",
                message: "every mean and variance vector must share one positive dimension".into(),
            });
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE || self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidOperand {
                op: "mixture",
                message: format!("weights {:?} are not a strictly positive distribution", self.weights),
            });
        }
        if self.means.iter().flatten().any(|&v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidOperand {
                op: "mixture",
                message: "means must lie in [-1, 1]".into(),
            });
        }
        self.check_floor()
    }

    fn check_floor(&self) -> Result<()> {
        match self.variances.iter().flatten().find(|&&v| !(v >= VARIANCE_FLOOR)) {
            Some(&value) => Err(Error::VarianceBelowFloor {
                value,
                floor: VARIANCE_FLOOR,
            }),
            None => Ok(()),
        }
    }

    /// `log Σ_j α_j N(v; μ_j, diag σ²_j)` via log-sum-exp.
    pub fn log_density(&self, v: &[f64]) -> Result<f64> {
        self.check_floor()?;
        if v.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "log_density",
                left: vec![self.dim()],
                right: vec![v.len()],
            });
        }
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let terms: Vec<f64> = (0..self.components())
            .map(|j| {
                let mut acc = self.weights[j].ln();
                for ((x, mu), var) in v.iter().zip(&self.means[j]).zip(&self.variances[j]) {
                    acc -= 0.5 * (x - mu).powi(2) / var + 0.5 * var.ln() + half_log_2pi;
                }
                acc
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Precomputes what [`MixtureParameters::log_density`] repeats per call.
    pub fn scorer(&self) -> Result<DensityScorer<'_>> {
        self.check_floor()?;
        let d = self.dim() as f64;
        let constants = (0..self.components())
            .map(|j| {
                self.weights[j].ln()
                    - 0.5 * self.variances[j].iter().map(|v| v.ln()).sum::<f64>()
                    - 0.5 * d * (2.0 * PI).ln()
            })
            .collect();
        let inverse = self.variances.iter().map(|v| v.iter().map(|x| 1.0 / x).collect()).collect();
        Ok(DensityScorer {
            params: self,
            constants,
            inverse,
            terms: vec![0.0; self.components()],
        })
    }
}

/// Repeated log-density evaluation against one mixture.
#[derive(Debug, Clone)]
pub struct DensityScorer<'a> {
    params: &'a MixtureParameters,
    constants: Vec<f64>,
    inverse: Vec<Vec<f64>>,
    terms: Vec<f64>,
}

impl DensityScorer<'_> {
    pub fn log_density(&mut self, v: &[f64]) -> f64 {
        for (j, t) in self.terms.iter_mut().enumerate() {
            let q: f64 = v
                .iter()
                .zip(&self.params.means[j])
                .zip(&self.inverse[j])
                .map(|((x, mu), iv)| (x - mu) * (x - mu) * iv)
                .sum();
            *t = self.constants[j] - 0.5 * q;
        }
        log_sum_exp(&self.terms)
    }
}

/// Mixture parameters living on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureNodes {
    /// Unnormalized mixture weights; `weights = softmax(logits)`.
    pub logits: NodeId,
    pub weights: NodeId,
    pub means: Vec<NodeId>,
    pub variances: Vec<NodeId>,
    /// Attention distribution over history positions at each decoder step.
    pub attention: Vec<NodeId>,
}

impl MixtureNodes {
    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn values(&self, g: &Graph<'_>) -> MixtureParameters {
        let read = |ids: &[NodeId]| ids.iter().map(|&n| g.value(n).data().to_vec()).collect();
        MixtureParameters {
            weights: g.value(self.weights).data().to_vec(),
            means: read(&self.means),
            variances: read(&self.variances),
        }
    }

    /// Records the per-component constants needed by
    /// [`DensityTerms::log_density`].
    pub fn density_terms(&self, g: &mut Graph<'_>) -> Result<DensityTerms> {
        let lse = g.log_sum_exp(self.logits)?;
        let d = g.shape(self.means[0])[0] as f64;
        let ones = g.input(Tensor::full(&[d as usize], 1.0))?;
        let mut constants = Vec::with_capacity(self.components());
        let mut inverse = Vec::with_capacity(self.components());
        for j in 0..self.components() {
            let logit = g.slice(self.logits, j, 1)?;
            let logit = g.sum(logit)?;
            let log_alpha = g.sub(logit, lse)?;
            let logs = g.log(self.variances[j])?;
            let logdet = g.sum(logs)?;
            let half = g.scale(logdet, -0.5)?;
            let c = g.add(log_alpha, half)?;
            constants.push(g.add_scalar(c, -0.5 * d * (2.0 * PI).ln())?);
            inverse.push(g.div(ones, self.variances[j])?);
        }
        Ok(DensityTerms {
            means: self.means.clone(),
            constants,
            inverse,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTerms {
    means: Vec<NodeId>,
    constants: Vec<NodeId>,
    inverse: Vec<NodeId>,
}

impl DensityTerms {
    /// Scalar node holding the mixture log-density of `v`.
    pub fn log_density(&self, g: &mut Graph<'_>, v: NodeId) -> Result<NodeId> {
        let mut terms = Vec::with_capacity(self.means.len());
        for j in 0..self.means.len() {
            let diff = g.sub(v, self.means[j])?;
            let sq = g.square(diff)?;
            let q = g.dot(sq, self.inverse[j])?;
            let q = g.scale(q, -0.5)?;
            terms.push(g.add(self.constants[j], q)?);
        }
        let all = g.concat(&terms)?;
        g.log_sum_exp(all)
    }
}
