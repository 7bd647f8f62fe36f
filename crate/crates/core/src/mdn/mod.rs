//! Mixture density decoders and the diagonal Gaussian mixture likelihood.

mod decoders;
mod mixture;

pub use decoders::{AttentionScorer, DecoderInput, FfDecoder, RnnDecoder, ScorerKind};
pub use mixture::{DensityScorer, DensityTerms, MixtureNodes, MixtureParameters, SIMPLEX_TOLERANCE, VARIANCE_FLOOR};

#[cfg(test)]
mod tests {
    use std::f64::consts::{LN_2, PI};

    use super::*;
    use crate::error::Error;
    use crate::numerics::gradcheck::check_gradients;
    use crate::numerics::{Graph, ParamStore};
    use crate::seed::{Rng, SeedStreams};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn rng(seed: u64) -> Rng {
        SeedStreams::new(seed).stream("init")
    }

    fn random_vec(rng: &mut Rng, n: usize, r: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-r..r)).collect()
    }

    fn mv(w: &[f64], x: &[f64]) -> Vec<f64> {
        w.chunks(x.len()).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn softplus(x: f64) -> f64 {
        (1.0 + x.exp()).ln()
    }

    fn naive_density(p: &MixtureParameters, v: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..p.components() {
            let mut det = 1.0;
            let mut q = 0.0;
            for k in 0..v.len() {
                det *= 2.0 * PI * p.variances[j][k];
                q += (v[k] - p.means[j][k]).powi(2) / p.variances[j][k];
            }
            total += p.weights[j] * (-0.5 * q).exp() / det.sqrt();
        }
        total.ln()
    }

    fn random_mixture(rng: &mut Rng, m: usize, d: usize) -> MixtureParameters {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        MixtureParameters {
            weights: raw.iter().map(|w| w / total).collect(),
            means: (0..m).map(|_| random_vec(rng, d, 0.9)).collect(),
            variances: (0..m)
                .map(|_| (0..d).map(|_| rng.random_range(0.05..0.6)).collect())
                .collect(),
        }
    }

    #[test]
    fn standard_normal_at_mean() {
        let p = MixtureParameters {
            weights: vec![1.0],
            means: vec![vec![0.0, 0.0]],
            variances: vec![vec![1.0, 1.0]],
        };
        let got = p.log_density(&[0.0, 0.0]).unwrap();
        assert!((got - (1.0 / (2.0 * PI)).ln()).abs() < 1e-12);
        assert!((got + 1.837877).abs() < 1e-6);
    }

    #[test]
    fn duplicated_component_equals_single() {
        let one = MixtureParameters {
            weights: vec![1.0],
            means: vec![vec![0.2, -0.4, 0.1]],
            variances: vec![vec![0.3, 0.5, 0.2]],
        };
        let two = MixtureParameters {
            weights: vec![0.5, 0.5],
            means: vec![one.means[0].clone(); 2],
            variances: vec![one.variances[0].clone(); 2],
        };
        let v = [0.7, 0.1, -0.3];
        assert!((one.log_density(&v).unwrap() - two.log_density(&v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn variance_below_floor_is_rejected() {
        let p = MixtureParameters {
            weights: vec![1.0],
            means: vec![vec![0.0]],
            variances: vec![vec![1e-6]],
        };
        assert!(matches!(p.log_density(&[0.0]), Err(Error::VarianceBelowFloor { .. })));
    }

    #[test]
    fn monte_carlo_normalization() {
        // importance sampling from a broad Gaussian that covers every component
        let mut rng = rng(17);
        for d in [2, 3] {
            let p = random_mixture(&mut rng, 3, d);
            p.validate().unwrap();
            let s = 1.2;
            let proposal = Normal::new(0.0, s).unwrap();
            let n = 1_000_000;
            let mut scorer = p.scorer().unwrap();
            let mut x = vec![0.0; d];
            let mut acc = 0.0;
            for _ in 0..n {
                let mut log_q = -0.5 * d as f64 * (2.0 * PI * s * s).ln();
                for xi in x.iter_mut() {
                    *xi = proposal.sample(&mut rng);
                    log_q -= 0.5 * *xi * *xi / (s * s);
                }
                acc += (scorer.log_density(&x) - log_q).exp();
            }
            let integral = acc / n as f64;
            assert!((integral - 1.0).abs() < 0.01, "d={d}: {integral}");
        }
    }

    fn ff_setup(seed: u64, m: usize, h: usize, d: usize) -> (ParamStore, FfDecoder) {
        let mut store = ParamStore::new();
        let dec = FfDecoder::register(&mut store, "ff", m, h, d, 0.7, &mut rng(seed)).unwrap();
        (store, dec)
    }

    #[test]
    fn ff_zero_input() {
        let (store, dec) = ff_setup(1, 4, 5, 3);
        let mut g = Graph::inference(&store);
        let p = g.vector(vec![0.0; 5]).unwrap();
        let out = dec.decode(&mut g, p).unwrap().values(&g);
        for j in 0..4 {
            assert!(out.means[j].iter().all(|&m| m == 0.0));
            assert!(out.variances[j].iter().all(|&v| (v - (LN_2 + VARIANCE_FLOOR)).abs() < 1e-15));
            assert!((out.weights[j] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn ff_matches_oracle() {
        for (seed, m) in [(2, 1), (3, 2), (4, 4)] {
            let (store, dec) = ff_setup(seed, m, 5, 3);
            let p = random_vec(&mut rng(seed + 100), 5, 1.0);
            let mut g = Graph::inference(&store);
            let node = g.vector(p.clone()).unwrap();
            let out = dec.decode(&mut g, node).unwrap().values(&g);
            out.validate().unwrap();
            let logits: Vec<f64> = (0..m).map(|i| mv(store.get(dec.alpha[i]).data(), &p)[0]).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for i in 0..m {
                let mu: Vec<f64> = mv(store.get(dec.mu[i]).data(), &p).iter().map(|x| x.tanh()).collect();
                let var: Vec<f64> = mv(store.get(dec.sigma[i]).data(), &p)
                    .iter()
                    .map(|&x| softplus(x) + VARIANCE_FLOOR)
                    .collect();
                for k in 0..3 {
                    assert!((out.means[i][k] - mu[k]).abs() < 1e-12);
                    assert!((out.variances[i][k] - var[k]).abs() < 1e-12);
                }
                assert!((out.weights[i] - logits[i].exp() / z).abs() < 1e-12);
            }
            if m == 1 {
                assert_eq!(out.weights, vec![1.0]);
            }
        }
    }

    #[test]
    fn ff_rejects_wrong_input_dim() {
        let (store, dec) = ff_setup(1, 2, 5, 3);
        let mut g = Graph::inference(&store);
        let p = g.vector(vec![0.0; 4]).unwrap();
        assert!(matches!(dec.decode(&mut g, p), Err(Error::ShapeMismatch { .. })));
    }

    fn rnn_setup(seed: u64, m: usize, h: usize, d: usize, scorer: Option<ScorerKind>) -> (ParamStore, RnnDecoder) {
        let mut store = ParamStore::new();
        let dec = RnnDecoder::register(&mut store, "dec", m, h, d, scorer, 0.7, &mut rng(seed)).unwrap();
        (store, dec)
    }

    #[test]
    fn rnn_zero_components_is_an_error() {
        let mut store = ParamStore::new();
        assert!(RnnDecoder::register(&mut store, "dec", 0, 3, 2, None, 0.1, &mut rng(0)).is_err());
    }

    #[test]
    fn rnn_single_component_is_one_gru_step() {
        let (store, dec) = rnn_setup(5, 1, 4, 3, None);
        let p = random_vec(&mut rng(6), 4, 1.0);
        let mut g = Graph::inference(&store);
        let node = g.vector(p.clone()).unwrap();
        let out = dec.decode(&mut g, DecoderInput::Pooled(node)).unwrap().values(&g);
        assert_eq!(out.weights, vec![1.0]);
        let m1 = crate::encoders::gru_step(&store, &dec.cell, &p, &[0.0; 4]).unwrap();
        let mu: Vec<f64> = mv(store.get(dec.mu).data(), &m1).iter().map(|x| x.tanh()).collect();
        for k in 0..3 {
            assert!((out.means[0][k] - mu[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rnn_without_recurrent_weights_follows_closed_form() {
        // with U = 0 the gates see only p, so m_l = (1 - (1-u)^l) h̃
        let (mut store, dec) = rnn_setup(7, 3, 4, 3, None);
        for id in [dec.cell.u_r, dec.cell.u_u, dec.cell.u] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let p = random_vec(&mut rng(8), 4, 1.0);
        let mut g = Graph::inference(&store);
        let node = g.vector(p.clone()).unwrap();
        let nodes = dec.decode(&mut g, DecoderInput::Pooled(node)).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let u: Vec<f64> = mv(store.get(dec.cell.w_u).data(), &p).into_iter().map(sig).collect();
        let cand: Vec<f64> = mv(store.get(dec.cell.w).data(), &p).into_iter().map(f64::tanh).collect();
        let out = nodes.values(&g);
        for l in 0..3 {
            let m: Vec<f64> = (0..4).map(|k| (1.0 - (1.0 - u[k]).powi(l as i32 + 1)) * cand[k]).collect();
            let mu: Vec<f64> = mv(store.get(dec.mu).data(), &m).iter().map(|x| x.tanh()).collect();
            for k in 0..3 {
                assert!((out.means[l][k] - mu[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rnn_zero_input_gives_identical_components() {
        let (store, dec) = rnn_setup(9, 4, 4, 3, None);
        let mut g = Graph::inference(&store);
        let node = g.vector(vec![0.0; 4]).unwrap();
        let out = dec.decode(&mut g, DecoderInput::Pooled(node)).unwrap().values(&g);
        for j in 0..4 {
            assert_eq!(out.means[j], out.means[0]);
            assert_eq!(out.variances[j], out.variances[0]);
            assert!((out.weights[j] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_over_single_position_copies_the_state() {
        for kind in [ScorerKind::Dot, ScorerKind::Additive] {
            let (store, dec) = rnn_setup(10, 3, 4, 3, Some(kind));
            let z = random_vec(&mut rng(11), 4, 0.9);
            let a = random_vec(&mut rng(12), 4, 0.9);
            let mut g = Graph::inference(&store);
            let zn = g.vector(z.clone()).unwrap();
            let an = g.vector(a).unwrap();
            let att = dec
                .decode(&mut g, DecoderInput::Attention { states: &[zn], annotations: &[an] })
                .unwrap();
            let pooled = {
                let pn = g.vector(z).unwrap();
                dec.decode(&mut g, DecoderInput::Pooled(pn)).unwrap()
            };
            assert_eq!(att.attention.len(), 3);
            for &w in &att.attention {
                assert_eq!(g.value(w).data(), &[1.0]);
            }
            assert_eq!(att.values(&g), pooled.values(&g));
        }
    }

    #[test]
    fn attention_needs_history_and_scorer() {
        let (store, dec) = rnn_setup(10, 2, 4, 3, Some(ScorerKind::Dot));
        let mut g = Graph::inference(&store);
        assert!(dec
            .decode(&mut g, DecoderInput::Attention { states: &[], annotations: &[] })
            .is_err());
        let (store, plain) = rnn_setup(10, 2, 4, 3, None);
        let mut g = Graph::inference(&store);
        let z = g.vector(vec![0.1; 4]).unwrap();
        assert!(matches!(
            plain.decode(&mut g, DecoderInput::Attention { states: &[z], annotations: &[z] }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dot_scorer_cases() {
        let store = ParamStore::new();
        let mut g = Graph::inference(&store);
        let a = g.vector(vec![1.0, 0.0]).unwrap();
        let b = g.vector(vec![0.0, 1.0]).unwrap();
        let s = AttentionScorer::Dot.score(&mut g, a, b).unwrap();
        assert_eq!(g.value(s).item(), 0.0);
        let u = g.vector(vec![0.6, 0.8]).unwrap();
        let s = AttentionScorer::Dot.score(&mut g, u, u).unwrap();
        assert!((g.value(s).item() - 1.0).abs() < 1e-15);
        let c = g.vector(vec![1.0; 3]).unwrap();
        assert!(AttentionScorer::Dot.score(&mut g, a, c).is_err());
        let w = g.softmax(c).unwrap();
        assert!(g.value(w).data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn graph_density_matches_plain() {
        let (store, dec) = ff_setup(13, 3, 5, 4);
        let mut g = Graph::inference(&store);
        let p = g.vector(random_vec(&mut rng(14), 5, 1.0)).unwrap();
        let nodes = dec.decode(&mut g, p).unwrap();
        let terms = nodes.density_terms(&mut g).unwrap();
        let params = nodes.values(&g);
        for s in 0..5 {
            let v = random_vec(&mut rng(20 + s), 4, 1.0);
            let vn = g.vector(v.clone()).unwrap();
            let ld = terms.log_density(&mut g, vn).unwrap();
            let plain = params.log_density(&v).unwrap();
            assert!((g.value(ld).item() - plain).abs() < 1e-12);
            assert!((params.scorer().unwrap().log_density(&v) - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn decoders_pass_gradient_check() {
        let v = [0.3, -0.5, 0.1];
        for kind in [None, Some(ScorerKind::Dot), Some(ScorerKind::Additive)] {
            let (store, dec) = rnn_setup(15, 2, 4, 3, kind);
            let z: Vec<Vec<f64>> = (0..3).map(|i| random_vec(&mut rng(30 + i), 4, 0.9)).collect();
            let report = check_gradients(&store, 1e-5, |g| {
                let zs = z.iter().map(|x| g.vector(x.clone())).collect::<crate::Result<Vec<_>>>()?;
                let input = match kind {
                    None => DecoderInput::Pooled(zs[0]),
                    Some(_) => DecoderInput::Attention { states: &zs, annotations: &zs },
                };
                let nodes = dec.decode(g, input)?;
                let terms = nodes.density_terms(g)?;
                let vn = g.vector(v.to_vec())?;
                terms.log_density(g, vn)
            })
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{kind:?} {report:?}");
        }
        let (store, dec) = ff_setup(16, 2, 4, 3);
        let report = check_gradients(&store, 1e-5, |g| {
            let p = g.vector(vec![0.4, -0.2, 0.9, 0.1])?;
            let nodes = dec.decode(g, p)?;
            let terms = nodes.density_terms(g)?;
            let vn = g.vector(v.to_vec())?;
            terms.log_density(g, vn)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    proptest! {
        #[test]
        fn log_sum_exp_agrees_with_naive(seed in 0u64..10_000, m in 1usize..5, d in 1usize..6) {
            let mut r = rng(seed);
            let p = random_mixture(&mut r, m, d);
            let v = random_vec(&mut r, d, 1.0);
            let naive = naive_density(&p, &v);
            prop_assume!(naive.is_finite());
            prop_assert!((p.log_density(&v).unwrap() - naive).abs() < 1e-9);
        }

        #[test]
        fn decoded_weights_are_on_the_simplex(seed in 0u64..10_000, m in 1usize..9, att in 0usize..3) {
            let mut r = rng(seed);
            let z: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut r, 4, 2.0)).collect();
            let store_ff = ff_setup(seed, m, 4, 3);
            let kind = [None, Some(ScorerKind::Dot), Some(ScorerKind::Additive)][att];
            let store_rnn = rnn_setup(seed, m, 4, 3, kind);
            let mut g = Graph::inference(&store_ff.0);
            let p = g.vector(z[0].clone()).unwrap();
            let ff = store_ff.1.decode(&mut g, p).unwrap().values(&g);
            prop_assert!(ff.validate().is_ok());
            let mut g = Graph::inference(&store_rnn.0);
            let zs: Vec<_> = z.iter().map(|x| g.vector(x.clone()).unwrap()).collect();
            let input = match kind {
                None => DecoderInput::Pooled(zs[0]),
                Some(_) => DecoderInput::Attention { states: &zs, annotations: &zs },
            };
            let nodes = store_rnn.1.decode(&mut g, input).unwrap();
            prop_assert!(nodes.values(&g).validate().is_ok());
            for &w in &nodes.attention {
                let total: f64 = g.value(w).data().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }
}
