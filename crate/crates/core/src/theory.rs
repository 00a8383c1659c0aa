//! Numerical probes of the Gaussian-mixture reliability theory: the local
//! confidence/accuracy gap around an anchor and directional comparisons
//! between a cross-entropy model and an unknown-aware one.
//!
//! Inputs double as features here — the mixture assumption is realized
//! directly in input space, so the classifier under test is probed exactly
//! where the theory lives.

use crate::data::GaussianMixtureSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::network::SparseNetwork;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Minimum in-ball sample count below which a gap estimate is refused.
pub const MIN_BALL_SAMPLES: usize = 30;
/// Rejection-sampling budget as a multiple of the requested sample count.
pub const BUDGET_FACTOR: usize = 100;

/// Where and how tightly to probe.
#[derive(Debug, Clone)]
pub struct UnreliabilityProbe {
    /// Anchor point in feature space.
    pub anchor: Tensor,
    /// Ball radius (Euclidean).
    pub radius: f64,
    /// Unreliability threshold `eta`.
    pub threshold: f64,
    /// Requested in-ball sample count.
    pub samples: usize,
}

impl UnreliabilityProbe {
    pub fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 || self.threshold <= 0.0 {
            return Err(Error::Precondition(
                "probe radius and threshold must be positive".into(),
            ));
        }
        if self.samples < 100 {
            return Err(Error::Precondition(
                "probe needs a sample budget of at least 100".into(),
            ));
        }
        Ok(())
    }
}

/// Monte-Carlo estimate of the local confidence/accuracy discrepancy.
///
/// Two confidence readings are reported. `confidence_term` is the mixture
/// density itself (model-independent, may exceed one); `gap` subtracts the
/// ball accuracy from it. `model_confidence_term` is the model's own
/// max-first-K softmax probability, and `model_gap` the discrepancy between
/// that and the ball accuracy — the quantity the unknown slot can actually
/// pull down.
#[derive(Debug, Clone, Copy)]
pub struct GapEstimate {
    /// `confidence_term - correctness_term`.
    pub gap: f64,
    /// Mean max-component density over the ball (used as-is, unnormalized).
    pub confidence_term: f64,
    /// Mean prediction correctness over the ball; always in [0, 1].
    pub correctness_term: f64,
    /// Mean max-first-K softmax probability over the ball.
    pub model_confidence_term: f64,
    /// `model_confidence_term - correctness_term`.
    pub model_gap: f64,
    /// Mean unknown-slot probability over the ball.
    pub unknown_mean: f64,
    pub used_samples: usize,
    /// Set when any density value exceeded one (flagged, never clamped).
    pub density_exceeded_one: bool,
    /// `gap > threshold`, the unreliability verdict at this probe.
    pub unreliable: bool,
}

fn sample_ball(
    gm: &GaussianMixtureSpec,
    probe: &UnreliabilityProbe,
    rng: &mut SeededRng,
) -> Result<Vec<(Tensor, usize)>> {
    probe.validate()?;
    if probe.anchor.len() != gm.dim {
        return Err(Error::Dimension("anchor dim does not match mixture".into()));
    }
    let mut kept = Vec::with_capacity(probe.samples);
    let budget = BUDGET_FACTOR * probe.samples;
    for _ in 0..budget {
        if kept.len() == probe.samples {
            break;
        }
        let (x, y) = gm.draw(rng)?;
        let dist2: f64 = x
            .data()
            .iter()
            .zip(probe.anchor.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist2.sqrt() < probe.radius {
            kept.push((x, y));
        }
    }
    if kept.len() < MIN_BALL_SAMPLES {
        return Err(Error::InsufficientSamples {
            achieved: kept.len(),
            required: MIN_BALL_SAMPLES,
        });
    }
    Ok(kept)
}

fn gap_from_samples(
    model: &SparseNetwork,
    gm: &GaussianMixtureSpec,
    probe: &UnreliabilityProbe,
    samples: &[(Tensor, usize)],
) -> Result<GapEstimate> {
    let per_sample = exec::map_collect(samples, |(x, y)| {
        let density = gm.max_component_density(x);
        let probs = model.probabilities(x).expect("dims checked");
        let k = model.num_classes();
        let correct = probs.argmax_first(k) == *y;
        (density, correct, probs.unknown(), probs.max_first(k))
    });
    let n = per_sample.len() as f64;
    let confidence_term = per_sample.iter().map(|p| p.0).sum::<f64>() / n;
    let correctness_term =
        per_sample.iter().filter(|p| p.1).count() as f64 / n;
    let unknown_mean = per_sample.iter().map(|p| p.2).sum::<f64>() / n;
    let model_confidence_term = per_sample.iter().map(|p| p.3).sum::<f64>() / n;
    let gap = confidence_term - correctness_term;
    Ok(GapEstimate {
        gap,
        confidence_term,
        correctness_term,
        model_confidence_term,
        model_gap: model_confidence_term - correctness_term,
        unknown_mean,
        used_samples: per_sample.len(),
        density_exceeded_one: per_sample.iter().any(|p| p.0 > 1.0),
        unreliable: gap > probe.threshold,
    })
}

/// Estimates the gap at one probe: the expectation, over mixture samples
/// restricted to the radius-ball around the anchor, of the max-component
/// density minus prediction correctness.
pub fn gap(
    model: &SparseNetwork,
    gm: &GaussianMixtureSpec,
    probe: &UnreliabilityProbe,
    rng: &mut SeededRng,
) -> Result<GapEstimate> {
    if gm.components.iter().any(|c| c.label > 2) || model.num_classes() != 2 {
        return Err(Error::Precondition(
            "gap probes a 2-class mixture against a 2-class model".into(),
        ));
    }
    let samples = sample_ball(gm, probe, rng)?;
    gap_from_samples(model, gm, probe, &samples)
}

/// Paired gap comparison at one anchor; both models see identical ball
/// samples.
#[derive(Debug, Clone, Copy)]
pub struct HardIdRow {
    pub anchor_index: usize,
    pub ce: GapEstimate,
    pub moon: GapEstimate,
}

/// Gap comparison at misclassified-region anchors for a CE/unknown-aware
/// model pair trained on the same data and seed.
pub fn insight_check_hard_id(
    ce_model: &SparseNetwork,
    moon_model: &SparseNetwork,
    gm: &GaussianMixtureSpec,
    probes: &[UnreliabilityProbe],
    rng: &mut SeededRng,
) -> Result<Vec<HardIdRow>> {
    let mut rows = Vec::with_capacity(probes.len());
    for (anchor_index, probe) in probes.iter().enumerate() {
        let samples = sample_ball(gm, probe, rng)?;
        rows.push(HardIdRow {
            anchor_index,
            ce: gap_from_samples(ce_model, gm, probe, &samples)?,
            moon: gap_from_samples(moon_model, gm, probe, &samples)?,
        });
    }
    Ok(rows)
}

/// Mean max-first-K confidence of both models on samples from an unseen
/// component.
#[derive(Debug, Clone, Copy)]
pub struct OodConfidenceReport {
    pub msp_ce_mean: f64,
    pub msp_moon_mean: f64,
    pub samples: usize,
}

pub fn insight_check_ood(
    ce_model: &SparseNetwork,
    moon_model: &SparseNetwork,
    ood_samples: &[Tensor],
) -> Result<OodConfidenceReport> {
    if ood_samples.is_empty() {
        return Err(Error::Input("no OOD samples".into()));
    }
    let scores = exec::map_collect(ood_samples, |x| {
        let ce = ce_model.probabilities(x).expect("dims checked");
        let moon = moon_model.probabilities(x).expect("dims checked");
        (
            ce.max_first(ce_model.num_classes()),
            moon.max_first(moon_model.num_classes()),
        )
    });
    let n = scores.len() as f64;
    Ok(OodConfidenceReport {
        msp_ce_mean: scores.iter().map(|s| s.0).sum::<f64>() / n,
        msp_moon_mean: scores.iter().map(|s| s.1).sum::<f64>() / n,
        samples: scores.len(),
    })
}
