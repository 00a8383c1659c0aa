//! Post-hoc OOD scores over a trained K+1 network: MSP, ODIN, EBO, KNN, KLM.
//! Higher always means "more ID".
//!
//! By default every softmax/logit detector scores the first K dimensions
//! only; the unknown slot influences scores through the softmax
//! normalization. `ScoreOptions::include_unknown` flips that for ablations.

use crate::error::{Error, Result};
use crate::moon::LOG_CLAMP;
use crate::network::{ProbVector, SparseNetwork};
use crate::tensor::{log_sum_exp_scaled, softmax_slice, Tensor};

/// Detector selection plus shared switches, as wired from a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorKind {
    Msp,
    Odin { temperature: f64, epsilon: f64 },
    Ebo { temperature: f64 },
    Knn { k: usize },
    Klm,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Msp => "msp",
            DetectorKind::Odin { .. } => "odin",
            DetectorKind::Ebo { .. } => "ebo",
            DetectorKind::Knn { .. } => "knn",
            DetectorKind::Klm => "klm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DetectorKind::Odin { temperature, epsilon } => {
                if temperature <= 0.0 {
                    return Err(Error::Config("odin temperature must be positive".into()));
                }
                if epsilon < 0.0 {
                    return Err(Error::Config("odin epsilon must be nonnegative".into()));
                }
            }
            DetectorKind::Ebo { temperature } => {
                if temperature <= 0.0 {
                    return Err(Error::Config("ebo temperature must be positive".into()));
                }
            }
            DetectorKind::Knn { k: 0 } => {
                return Err(Error::Config("knn k must be at least 1".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    /// Score over all K+1 dimensions instead of the first K.
    pub include_unknown: bool,
}

fn scored_dims(net: &SparseNetwork, opts: ScoreOptions) -> usize {
    if opts.include_unknown {
        net.num_classes() + 1
    } else {
        net.num_classes()
    }
}

/// Maximum softmax probability over the scored dimensions of the K+1 head.
pub fn score_msp(net: &SparseNetwork, x: &Tensor, opts: ScoreOptions) -> Result<f64> {
    let probs = net.probabilities(x)?;
    Ok(probs.max_first(scored_dims(net, opts)))
}

/// Negative energy: `T * log sum_k exp(logit_k / T)` over the scored logits.
pub fn score_ebo(net: &SparseNetwork, x: &Tensor, temperature: f64, opts: ScoreOptions) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(Error::Precondition("ebo temperature must be positive".into()));
    }
    let (logits, _, _) = net.forward(x)?;
    Ok(log_sum_exp_scaled(
        &logits.data()[..scored_dims(net, opts)],
        temperature,
    ))
}

/// Temperature-scaled MSP after one sign-gradient input perturbation that
/// ascends the confidence. With `epsilon = 0` and `temperature = 1` this is
/// exactly [`score_msp`].
pub fn score_odin(
    net: &SparseNetwork,
    x: &Tensor,
    temperature: f64,
    epsilon: f64,
    opts: ScoreOptions,
) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(Error::Precondition("odin temperature must be positive".into()));
    }
    let dims = scored_dims(net, opts);
    let scaled_msp = |logits: &[f64]| -> f64 {
        let scaled: Vec<f64> = logits.iter().map(|&z| z / temperature).collect();
        let probs = softmax_slice(&scaled);
        probs[..dims].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };

    if epsilon == 0.0 {
        let (logits, _, _) = net.forward(x)?;
        return Ok(scaled_msp(logits.data()));
    }

    // gradient of -log max-softmax at temperature T with respect to the input
    let (logits, _, cache) = net.forward(x)?;
    let scaled: Vec<f64> = logits.data().iter().map(|&z| z / temperature).collect();
    let probs = softmax_slice(&scaled);
    let mut best = 0;
    for i in 1..dims {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| (p - if j == best { 1.0 } else { 0.0 }) / temperature)
        .collect();
    let (_, input_grad) = net.backward(&cache, &Tensor::vector(dlogits))?;
    let perturbed: Vec<f64> = x
        .data()
        .iter()
        .zip(input_grad.data())
        .map(|(&xi, &gi)| xi - epsilon * gi.signum())
        .collect();
    let (logits2, _, _) = net.forward(&Tensor::vector(perturbed))?;
    Ok(scaled_msp(logits2.data()))
}

/// L2-normalized reference features for the KNN detector.
#[derive(Debug, Clone)]
pub struct KnnBank {
    features: Vec<Vec<f64>>,
    dim: usize,
}

fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

impl KnnBank {
    pub fn fit(features: &[Tensor]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::State("empty knn bank".into()));
        }
        let dim = features[0].len();
        let stored = features
            .iter()
            .map(|f| {
                if f.len() != dim {
                    return Err(Error::Dimension("bank feature dims disagree".into()));
                }
                Ok(l2_normalize(f.data()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features: stored, dim })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Default neighbor count: `max(1, floor(sqrt(bank size)))`.
    pub fn default_k(&self) -> usize {
        ((self.features.len() as f64).sqrt().floor() as usize).max(1)
    }

    /// Negative Euclidean distance from the normalized query to its k-th
    /// nearest bank vector.
    pub fn score(&self, feature: &Tensor, k: usize) -> Result<f64> {
        if self.features.is_empty() {
            return Err(Error::State("empty knn bank".into()));
        }
        if k == 0 || k > self.features.len() {
            return Err(Error::Precondition(format!(
                "k={} outside 1..={}",
                k,
                self.features.len()
            )));
        }
        if feature.len() != self.dim {
            return Err(Error::Dimension("query feature dim mismatch".into()));
        }
        let q = l2_normalize(feature.data());
        let mut dists: Vec<f64> = self
            .features
            .iter()
            .map(|f| {
                f.iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        Ok(-*kth)
    }
}

/// Mean K+1 softmax vector per predicted class, with a global-mean fallback
/// for classes never predicted on the fitting split.
#[derive(Debug, Clone)]
pub struct KlmTemplates {
    templates: Vec<Vec<f64>>,
}

impl KlmTemplates {
    pub fn fit(probs: &[ProbVector], predictions: &[usize], num_classes: usize) -> Result<Self> {
        if probs.is_empty() || probs.len() != predictions.len() {
            return Err(Error::Input("empty or mismatched klm fitting set".into()));
        }
        let width = probs[0].probs().len();
        let mut sums = vec![vec![0.0; width]; num_classes];
        let mut counts = vec![0usize; num_classes];
        let mut global = vec![0.0; width];
        for (p, &c) in probs.iter().zip(predictions) {
            if c == 0 || c > num_classes {
                return Err(Error::Label(format!("prediction {} outside 1..={}", c, num_classes)));
            }
            for (i, &v) in p.probs().iter().enumerate() {
                sums[c - 1][i] += v;
                global[i] += v;
            }
            counts[c - 1] += 1;
        }
        let n = probs.len() as f64;
        for v in global.iter_mut() {
            *v /= n;
        }
        let templates = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    global.clone()
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        Ok(Self { templates })
    }

    /// `-min_c KL(probs || template_c)`, probabilities floored at 1e-12
    /// inside the logs. Always <= 0.
    pub fn score(&self, probs: &ProbVector) -> Result<f64> {
        if self.templates.is_empty() {
            return Err(Error::State("no klm templates".into()));
        }
        let p = probs.probs();
        let mut best = f64::INFINITY;
        for t in &self.templates {
            if t.len() != p.len() {
                return Err(Error::Dimension("template width mismatch".into()));
            }
            let mut kl = 0.0;
            for (&pi, &qi) in p.iter().zip(t) {
                let pf = pi.max(LOG_CLAMP);
                let qf = qi.max(LOG_CLAMP);
                kl += pf * (pf / qf).ln();
            }
            // flooring can push the sum a hair below zero
            if kl < 0.0 {
                kl = 0.0;
            }
            if kl < best {
                best = kl;
            }
        }
        Ok(-best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::sparsity::BitMatrix;

    fn dense_net(dims: &[usize], k: usize, seed: u64) -> SparseNetwork {
        let mut rng = SeededRng::new(seed);
        let masks = SparseNetwork::layer_dims(dims, k)
            .into_iter()
            .map(|(o, i)| BitMatrix::ones(o, i))
            .collect();
        SparseNetwork::new(dims, k, masks, &mut rng).unwrap()
    }

    /// Single linear layer with hand-set weights so logits equal chosen values.
    fn logit_net(logits: &[f64], k: usize) -> SparseNetwork {
        let mut net = dense_net(&[1], k, 0);
        {
            let layers = net.layers_mut();
            for w in layers[0].weight.data_mut() {
                *w = 0.0;
            }
            layers[0].bias.data_mut().copy_from_slice(logits);
        }
        net
    }

    #[test]
    fn msp_examples() {
        let net = logit_net(&[0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()], 2);
        let x = Tensor::vector(vec![0.0]);
        let s = score_msp(&net, &x, ScoreOptions::default()).unwrap();
        assert!((s - 0.7).abs() < 1e-12);

        let uniform = logit_net(&[0.0, 0.0, 0.0], 2);
        let s = score_msp(&uniform, &x, ScoreOptions::default()).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ebo_examples() {
        let x = Tensor::vector(vec![0.0]);
        let net = logit_net(&[0.0, 0.0, -5.0], 2);
        let s = score_ebo(&net, &x, 1.0, ScoreOptions::default()).unwrap();
        assert!((s - 2.0f64.ln()).abs() < 1e-12);

        let net = logit_net(&[10.0, 0.0, -5.0], 2);
        let s = score_ebo(&net, &x, 1.0, ScoreOptions::default()).unwrap();
        assert!((s - (10f64.exp() + 1.0).ln()).abs() < 1e-10);

        // shifting the scored logits by +c shifts the score by +c
        let shifted = logit_net(&[10.0 + 2.5, 0.0 + 2.5, -5.0], 2);
        let s2 = score_ebo(&shifted, &x, 1.0, ScoreOptions::default()).unwrap();
        assert!((s2 - (s + 2.5)).abs() < 1e-10);
    }

    #[test]
    fn ebo_approaches_max_logit_at_large_margin() {
        let x = Tensor::vector(vec![0.0]);
        let net = logit_net(&[20.0, 2.0, 1.0], 2);
        let s = score_ebo(&net, &x, 1.0, ScoreOptions::default()).unwrap();
        assert!((s - 20.0).abs() < 1e-3);
    }

    #[test]
    fn odin_reduces_to_msp_exactly() {
        let net = dense_net(&[4, 6], 3, 11);
        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let x = Tensor::vector((0..4).map(|_| rng.next_normal()).collect());
            let msp = score_msp(&net, &x, ScoreOptions::default()).unwrap();
            let odin = score_odin(&net, &x, 1.0, 0.0, ScoreOptions::default()).unwrap();
            assert_eq!(msp.to_bits(), odin.to_bits());
        }
    }

    #[test]
    fn odin_high_temperature_flattens_to_uniform() {
        let net = dense_net(&[4, 6], 3, 11);
        let x = Tensor::vector(vec![0.5, -0.2, 0.9, 0.1]);
        let s = score_odin(&net, &x, 1e9, 0.0, ScoreOptions::default()).unwrap();
        // softmax over the K+1 head flattens to 1/(K+1)
        assert!((s - 1.0 / 4.0).abs() < 1e-6);
    }

    #[test]
    fn odin_perturbation_raises_confidence_on_most_points() {
        let net = dense_net(&[6, 10], 4, 23);
        let mut rng = SeededRng::new(7);
        let mut raised = 0;
        let total = 200;
        for _ in 0..total {
            let x = Tensor::vector((0..6).map(|_| rng.next_normal()).collect());
            let base = score_odin(&net, &x, 1000.0, 0.0, ScoreOptions::default()).unwrap();
            let perturbed = score_odin(&net, &x, 1000.0, 0.0014, ScoreOptions::default()).unwrap();
            if perturbed >= base {
                raised += 1;
            }
        }
        assert!(raised >= total * 9 / 10, "only {}/{} raised", raised, total);
    }

    #[test]
    fn msp_and_odin_stay_in_unit_interval() {
        let net = dense_net(&[3, 5], 2, 31);
        let mut rng = SeededRng::new(9);
        for _ in 0..50 {
            let x = Tensor::vector((0..3).map(|_| 2.0 * rng.next_normal()).collect());
            let m = score_msp(&net, &x, ScoreOptions::default()).unwrap();
            let o = score_odin(&net, &x, 1000.0, 0.0014, ScoreOptions::default()).unwrap();
            assert!(m > 0.0 && m <= 1.0);
            assert!(o > 0.0 && o <= 1.0);
        }
    }

    #[test]
    fn knn_zero_distance_to_bank_member() {
        let bank = KnnBank::fit(&[
            Tensor::vector(vec![1.0, 0.0]),
            Tensor::vector(vec![0.0, 1.0]),
        ])
        .unwrap();
        let s = bank.score(&Tensor::vector(vec![1.0, 0.0]), 1).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn knn_hand_geometry() {
        // normalized (1,0) vs (0,1): distance sqrt(2)
        let bank = KnnBank::fit(&[
            Tensor::vector(vec![1.0, 0.0]),
            Tensor::vector(vec![0.0, 1.0]),
        ])
        .unwrap();
        let s = bank.score(&Tensor::vector(vec![1.0, 0.0]), 2).unwrap();
        assert!((s - -(2.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn knn_score_nonincreasing_in_k() {
        let mut rng = SeededRng::new(13);
        let feats: Vec<Tensor> = (0..30)
            .map(|_| Tensor::vector((0..4).map(|_| rng.next_normal()).collect()))
            .collect();
        let bank = KnnBank::fit(&feats).unwrap();
        let q = Tensor::vector(vec![0.1, 0.2, -0.4, 0.8]);
        let mut prev = f64::INFINITY;
        for k in 1..=30 {
            let s = bank.score(&q, k).unwrap();
            assert!(s <= prev + 1e-15);
            assert!(s <= 0.0);
            prev = s;
        }
    }

    #[test]
    fn knn_default_k_rule() {
        let feats: Vec<Tensor> = (0..100).map(|i| Tensor::vector(vec![i as f64])).collect();
        assert_eq!(KnnBank::fit(&feats).unwrap().default_k(), 10);
        assert_eq!(KnnBank::fit(&feats[..2]).unwrap().default_k(), 1);
    }

    fn pv(probs: &[f64]) -> ProbVector {
        ProbVector::from_logits(&probs.iter().map(|p| p.max(1e-300).ln()).collect::<Vec<_>>())
    }

    #[test]
    fn klm_perfect_match_scores_zero() {
        let fit_probs = vec![pv(&[0.6, 0.3, 0.1]), pv(&[0.6, 0.3, 0.1])];
        let templates = KlmTemplates::fit(&fit_probs, &[1, 1], 2).unwrap();
        let s = templates.score(&pv(&[0.6, 0.3, 0.1])).unwrap();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn klm_floored_one_hot_against_uniform() {
        let uniform = pv(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let templates = KlmTemplates::fit(&[uniform.clone(), uniform], &[1, 2], 2).unwrap();
        let s = templates.score(&pv(&[1.0, 0.0, 0.0])).unwrap();
        assert!((s - -(3.0f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn klm_never_positive_and_falls_back_to_global_mean() {
        let probs = vec![pv(&[0.7, 0.2, 0.1]), pv(&[0.2, 0.7, 0.1])];
        // class 2 never predicted: its template is the global mean
        let templates = KlmTemplates::fit(&probs, &[1, 1], 2).unwrap();
        let mut rng = SeededRng::new(17);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..3).map(|_| rng.next_normal()).collect();
            let s = templates.score(&ProbVector::from_logits(&logits)).unwrap();
            assert!(s <= 0.0);
        }
    }
}
