//! Browser bindings: mixture density heatmaps, a toy mixture fit and a
//! ranking-metric calculator. Plain functions over flat `f64` arrays so the
//! page needs no glue beyond the generated module.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;

use mixrec::evaluation::{f1, ndcg_at_k, precision_at_k, recall_at_k};
use mixrec::mdn::{MixtureNodes, MixtureParameters, VARIANCE_FLOOR};
use mixrec::numerics::{Adam, AdamConfig, Graph, ParamStore, Tensor};
use mixrec::seed::SeedStreams;

fn unflatten(flat: &[f64], m: usize, what: &str) -> Result<Vec<Vec<f64>>, String> {
    if m == 0 || flat.len() % m != 0 {
        return Err(format!("{what}: {} values do not split into {m} components", flat.len()));
    }
    Ok(flat.chunks(flat.len() / m).map(<[f64]>::to_vec).collect())
}

/// Log-density of a 2-D diagonal mixture on an `nx` by `ny` grid, row-major
/// from `(x0, y0)`. `means` and `variances` hold two values per component.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn density_grid(
    weights: &[f64],
    means: &[f64],
    variances: &[f64],
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: usize,
    ny: usize,
) -> Result<Vec<f64>, String> {
    let m = weights.len();
    let params = MixtureParameters {
        weights: weights.to_vec(),
        means: unflatten(means, m, "means")?,
        variances: unflatten(variances, m, "variances")?,
    };
    if params.dim() != 2 {
        return Err("the grid needs two-dimensional components".into());
    }
    params.validate().map_err(|e| e.to_string())?;
    let mut scorer = params.scorer().map_err(|e| e.to_string())?;
    let step = |a: f64, b: f64, n: usize, i: usize| if n > 1 { a + (b - a) * i as f64 / (n - 1) as f64 } else { a };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(scorer.log_density(&[step(x0, x1, nx, i), step(y0, y1, ny, j)]));
        }
    }
    Ok(out)
}

/// `n` points, half around `(-s, -s)` and half around `(s, s)`, flattened.
#[wasm_bindgen]
pub fn sample_bimodal(n: usize, separation: f64, spread: f64, seed: u64) -> Result<Vec<f64>, String> {
    let noise = Normal::new(0.0, spread).map_err(|e| e.to_string())?;
    let mut rng = SeedStreams::new(seed).stream("demo");
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let c = if i % 2 == 0 { -separation } else { separation };
        for _ in 0..2 {
            out.push((c + noise.sample(&mut rng)).clamp(-0.99, 0.99));
        }
    }
    Ok(out)
}

/// Fits an `m`-component mixture to flattened 2-D points by maximum
/// likelihood with Adam. Returns `[mean log-likelihood, weights.., means..,
/// variances..]`.
#[wasm_bindgen]
pub fn fit_mixture(points: &[f64], m: usize, steps: usize, lr: f64, seed: u64) -> Result<Vec<f64>, String> {
    let err = |e: mixrec::Error| e.to_string();
    if m == 0 || points.is_empty() || points.len() % 2 != 0 {
        return Err("need m >= 1 and a non-empty list of (x, y) pairs".into());
    }
    let mut rng = SeedStreams::new(seed).stream("init");
    let mut store = ParamStore::new();
    let logits = store.insert("logits", Tensor::zeros(&[m])).map_err(err)?;
    let init: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let means = store.insert("means", Tensor::vector(init)).map_err(err)?;
    let vars = store.insert("variances", Tensor::zeros(&[2 * m])).map_err(err)?;
    let mut adam = Adam::new(AdamConfig { lr, ..Default::default() }, &store);

    let build = |g: &mut Graph<'_>| -> mixrec::Result<(MixtureNodes, mixrec::numerics::NodeId)> {
        let l = g.param(logits);
        let mu_raw = g.param(means);
        let var_raw = g.param(vars);
        let mut mu = Vec::with_capacity(m);
        let mut var = Vec::with_capacity(m);
        for j in 0..m {
            let s = g.slice(mu_raw, 2 * j, 2)?;
            mu.push(g.tanh(s)?);
            let s = g.slice(var_raw, 2 * j, 2)?;
            let s = g.softplus(s)?;
            var.push(g.add_scalar(s, VARIANCE_FLOOR)?);
        }
        let weights = g.softmax(l)?;
        let nodes = MixtureNodes {
            logits: l,
            weights,
            means: mu,
            variances: var,
            attention: Vec::new(),
        };
        let terms = nodes.density_terms(g)?;
        let mut lls = Vec::with_capacity(points.len() / 2);
        for p in points.chunks(2) {
            let v = g.vector(p.to_vec())?;
            lls.push(terms.log_density(g, v)?);
        }
        let all = g.concat(&lls)?;
        let mean = g.mean(all)?;
        Ok((nodes, mean))
    };

    for _ in 0..steps {
        let grads = {
            let mut g = Graph::new(&store);
            let (_, mean) = build(&mut g).map_err(err)?;
            let loss = g.scale(mean, -1.0).map_err(err)?;
            g.backward(loss).map_err(err)?
        };
        adam.step(&mut store, &grads).map_err(err)?;
    }
    let mut g = Graph::inference(&store);
    let (nodes, mean) = build(&mut g).map_err(err)?;
    let fitted = nodes.values(&g);
    let mut out = vec![g.value(mean).item()];
    out.extend(&fitted.weights);
    out.extend(fitted.means.concat());
    out.extend(fitted.variances.concat());
    Ok(out)
}

/// `[precision, recall, nDCG, F1]` at `k`; recall, nDCG and F1 are NaN for
/// an empty target set.
#[wasm_bindgen]
pub fn ranking_metrics(ranked: &[u32], targets: &[u32], k: usize) -> Vec<f64> {
    let ranked: Vec<usize> = ranked.iter().map(|&i| i as usize).collect();
    let t: HashSet<usize> = targets.iter().map(|&i| i as usize).collect();
    let p = precision_at_k(&ranked, &t, k);
    let r = recall_at_k(&ranked, &t, k);
    let n = ndcg_at_k(&ranked, &t, k);
    vec![p, r.unwrap_or(f64::NAN), n.unwrap_or(f64::NAN), r.map_or(f64::NAN, |r| f1(p, r))]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_matches_closed_form() {
        let g = density_grid(&[1.0], &[0.0, 0.0], &[1.0, 1.0], -1.0, 1.0, 0.0, 0.0, 3, 1).unwrap();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        assert!((g[1] + ln2pi).abs() < 1e-12);
        assert!((g[0] - (-ln2pi - 0.5)).abs() < 1e-12);
        assert!(density_grid(&[0.5], &[0.0, 0.0], &[1.0, 1.0], 0.0, 1.0, 0.0, 1.0, 2, 2).is_err());
        assert!(density_grid(&[1.0], &[0.0], &[1.0], 0.0, 1.0, 0.0, 1.0, 2, 2).is_err());
    }

    #[test]
    fn two_components_fit_bimodal_points_better() {
        let pts = sample_bimodal(200, 0.5, 0.08, 3).unwrap();
        let one = fit_mixture(&pts, 1, 300, 0.05, 0).unwrap();
        let two = fit_mixture(&pts, 2, 300, 0.05, 0).unwrap();
        assert!(two[0] > one[0] + 0.5, "m=1 {} m=2 {}", one[0], two[0]);
        // weights sit near one half, means near the two centers
        assert!((two[1] - 0.5).abs() < 0.1);
        let mut xs = [two[3], two[5]];
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 0.5).abs() < 0.1 && (xs[1] - 0.5).abs() < 0.1, "{two:?}");
    }

    #[test]
    fn metrics_hand_case() {
        let v = ranking_metrics(&[9, 1], &[1, 2], 2);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[1], 0.5);
        assert!((v[2] - 0.386_852_807_234_541_6).abs() < 1e-12);
        assert!((v[3] - 0.5).abs() < 1e-12);
        assert!(ranking_metrics(&[1], &[], 1)[1].is_nan());
    }
}
