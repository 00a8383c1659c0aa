//! Unknown-aware training pieces: the two-branch loss over the K+1 head,
//! its exact gradient, the per-epoch weight scheduler, and the
//! weight-averaging voter.
//!
//! The loss keeps plain cross-entropy on correctly predicted samples and
//! scales the cross-entropy of misclassified ones by `1 + w / (1 + w * p_u)`
//! where `p_u` is the unknown-slot probability: the model can cut the loss
//! either by fixing the prediction or by raising `p_u`.

use crate::error::{Error, Result};
use crate::network::{Layer, ProbVector, SparseNetwork};
use crate::sparsity::BitMatrix;
use crate::tensor::Tensor;

/// Floor applied to probabilities before any log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MoonConfig {
    /// Total training epochs `T`.
    pub total_epochs: usize,
    /// Unknown-free warm-up epochs `T_e`. May be >= `total_epochs`, in which
    /// case the weight never leaves zero.
    pub unknown_free_epochs: usize,
    /// Final weight `w_f`.
    pub final_weight: f64,
    /// Init factor `r`; the first post-warm-up weight is `beta_tilde / r`.
    pub init_factor: f64,
    /// Moving-average smoothing `alpha` in (0, 1].
    pub smoothing: f64,
    /// Ablation switch: treat the weight factor as a constant during
    /// differentiation instead of chaining through `p_u`.
    pub stop_gradient: bool,
}

impl MoonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Config("total epochs must be positive".into()));
        }
        if self.unknown_free_epochs == 0 {
            return Err(Error::Config("unknown-free epochs must be positive".into()));
        }
        if self.final_weight < 0.0 {
            return Err(Error::Config("final weight must be nonnegative".into()));
        }
        if self.init_factor <= 0.0 {
            return Err(Error::Config("init factor must be positive".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::Config("smoothing factor must be in (0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for MoonConfig {
    fn default() -> Self {
        Self {
            total_epochs: 100,
            unknown_free_epochs: 5,
            final_weight: 1.0,
            init_factor: 64.0,
            smoothing: 0.1,
            stop_gradient: false,
        }
    }
}

/// Scheduler state. `step` keeps the -1 sentinel until the transition epoch
/// computes it; afterwards the weight is affine in the epoch index.
#[derive(Debug, Clone)]
pub struct WState {
    pub w: f64,
    pub beta_tilde: f64,
    pub w_init: f64,
    pub step: f64,
}

impl Default for WState {
    fn default() -> Self {
        Self {
            w: 0.0,
            beta_tilde: 0.0,
            w_init: 0.0,
            step: -1.0,
        }
    }
}

/// Per-epoch aggregates feeding the scheduler.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub mean_unknown: f64,
    pub mean_loss: f64,
}

/// Advances the scheduler at the boundary after epoch `t` (0-based) using
/// that epoch's aggregated stats.
///
/// Warm-up epochs fold `beta = (1 - mean_p_unknown) * mean_loss` into the
/// moving average and keep `w` at zero. The first boundary at `t >=
/// unknown_free_epochs` sets `w_init = beta_tilde / r` and the step size
/// `(w_f - w_init) / (T - T_e)`; later boundaries evaluate the affine form
/// `w_init + (t - T_e) * step`.
pub fn w_step(state: &mut WState, cfg: &MoonConfig, t: usize, stats: EpochStats) -> Result<()> {
    if t >= cfg.total_epochs {
        return Err(Error::Precondition(format!(
            "epoch {} outside [0, {})",
            t, cfg.total_epochs
        )));
    }
    if t < cfg.unknown_free_epochs {
        let beta = (1.0 - stats.mean_unknown) * stats.mean_loss;
        state.beta_tilde = (1.0 - cfg.smoothing) * state.beta_tilde + cfg.smoothing * beta;
        state.w = 0.0;
    } else if state.step == -1.0 {
        state.w_init = state.beta_tilde / cfg.init_factor;
        state.w = state.w_init;
        state.step = (cfg.final_weight - state.w_init)
            / (cfg.total_epochs - cfg.unknown_free_epochs) as f64;
    } else {
        state.w = state.w_init + (t - cfg.unknown_free_epochs) as f64 * state.step;
    }
    Ok(())
}

fn check_label(label: usize, k: usize, what: &str) -> Result<()> {
    if label == 0 || label > k {
        return Err(Error::Label(format!(
            "{} {} outside 1..={}",
            what, label, k
        )));
    }
    Ok(())
}

/// Two-branch unknown-aware loss. `y` and `y_hat` are 1-based classes over
/// the K real classes; `k` is the number of real classes.
pub fn moon_loss(probs: &ProbVector, k: usize, y: usize, y_hat: usize, w: f64) -> Result<f64> {
    check_label(y, k, "label")?;
    check_label(y_hat, k, "prediction")?;
    let p_y = probs.class(y).max(LOG_CLAMP);
    if y_hat == y {
        Ok(-p_y.ln())
    } else {
        let p_u = probs.unknown();
        let factor = 1.0 + w / (1.0 + w * p_u);
        Ok(-factor * p_y.ln())
    }
}

/// Exact gradient of [`moon_loss`] with respect to the K+1 logits, chaining
/// through `p_u` in the weight factor unless `stop_gradient` is set. The
/// branch choice (`y_hat` vs `y`) is held fixed.
pub fn moon_loss_grad(
    probs: &ProbVector,
    k: usize,
    y: usize,
    y_hat: usize,
    w: f64,
    stop_gradient: bool,
) -> Result<Tensor> {
    check_label(y, k, "label")?;
    check_label(y_hat, k, "prediction")?;
    let p = probs.probs();
    let n = p.len();
    let yi = y - 1;
    let clamped = p[yi] <= LOG_CLAMP;

    // Correct branch and w == 0 reduce to plain softmax cross-entropy; the
    // code path is shared so the w = 0 trajectory is bit-identical to CE.
    if y_hat == y || w == 0.0 {
        let mut g = vec![0.0; n];
        if !clamped {
            for j in 0..n {
                g[j] = p[j] - if j == yi { 1.0 } else { 0.0 };
            }
        }
        return Ok(Tensor::vector(g));
    }

    let p_u = p[n - 1];
    let log_py = p[yi].max(LOG_CLAMP).ln();
    let factor = 1.0 + w / (1.0 + w * p_u);
    // d factor / d p_u = -w^2 / (1 + w p_u)^2
    let dfactor = -w * w / ((1.0 + w * p_u) * (1.0 + w * p_u));
    let mut g = vec![0.0; n];
    for j in 0..n {
        let dy = if j == yi { 1.0 } else { 0.0 };
        let du = if j == n - 1 { 1.0 } else { 0.0 };
        let mut grad = 0.0;
        if !clamped {
            grad += -factor * (dy - p[j]);
        }
        if !stop_gradient {
            grad += -log_py * dfactor * p_u * (du - p[j]);
        }
        g[j] = grad;
    }
    Ok(Tensor::vector(g))
}

/// Uniform parameter averaging over the trailing window of training.
///
/// The mean is kept incrementally (`mean += (x - mean) / n`), which makes
/// averaging N identical checkpoints return the checkpoint bit-for-bit.
#[derive(Debug, Clone)]
pub struct Voter {
    means: Vec<(Tensor, Tensor)>,
    masks: Vec<BitMatrix>,
    num_classes: usize,
    count: usize,
    start_epoch: usize,
}

impl Voter {
    /// `start_epoch` is the first epoch whose end-of-epoch model enters the
    /// average.
    pub fn new(start_epoch: usize) -> Self {
        Self {
            means: Vec::new(),
            masks: Vec::new(),
            num_classes: 0,
            count: 0,
            start_epoch,
        }
    }

    pub fn start_epoch(&self) -> usize {
        self.start_epoch
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one checkpoint. Masks must be frozen by the time voting starts;
    /// a mask change between accumulations is a caller bug.
    pub fn accumulate(&mut self, net: &SparseNetwork) -> Result<()> {
        if self.count == 0 {
            self.num_classes = net.num_classes();
            self.masks = net.layers().iter().map(|l| l.mask.clone()).collect();
            self.means = net
                .layers()
                .iter()
                .map(|l| (l.weight.clone(), l.bias.clone()))
                .collect();
            self.count = 1;
            return Ok(());
        }
        if net.layers().len() != self.means.len() {
            return Err(Error::Dimension("voter layer count mismatch".into()));
        }
        for (layer, stored) in net.layers().iter().zip(&self.masks) {
            if layer.mask != *stored {
                return Err(Error::Precondition(
                    "mask changed between voter accumulations".into(),
                ));
            }
        }
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (layer, (ws, bs)) in net.layers().iter().zip(self.means.iter_mut()) {
            for (acc, v) in ws.data_mut().iter_mut().zip(layer.weight.data()) {
                *acc += (v - *acc) * inv;
            }
            for (acc, v) in bs.data_mut().iter_mut().zip(layer.bias.data()) {
                *acc += (v - *acc) * inv;
            }
        }
        Ok(())
    }

    /// Elementwise mean of the accumulated parameters with the frozen mask
    /// applied.
    pub fn finalize(&self) -> Result<SparseNetwork> {
        if self.count == 0 {
            return Err(Error::State("voter finalized with no checkpoints".into()));
        }
        let layers: Vec<Layer> = self
            .means
            .iter()
            .zip(&self.masks)
            .map(|((ws, bs), mask)| {
                let mut layer = Layer {
                    weight: ws.clone(),
                    bias: bs.clone(),
                    mask: mask.clone(),
                };
                layer.apply_mask();
                layer
            })
            .collect();
        SparseNetwork::from_parts(layers, self.num_classes)
    }
}

/// Voting starts at `ceil(0.8 T)`, capped so the final epoch always
/// contributes at least one checkpoint on short runs.
pub fn voting_start_epoch(total_epochs: usize) -> usize {
    let start = (0.8 * total_epochs as f64).ceil() as usize;
    start.min(total_epochs.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn probs(v: Vec<f64>) -> ProbVector {
        ProbVector::from_logits(&v.iter().map(|p| p.ln()).collect::<Vec<_>>())
    }

    #[test]
    fn loss_correct_certain_is_zero() {
        let p = ProbVector::from_logits(&[100.0, 0.0, 0.0]);
        let l = moon_loss(&p, 2, 1, 1, 1.0).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn loss_wrong_with_zero_weight_is_cross_entropy() {
        let p = probs(vec![0.25, 0.5, 0.25]);
        let l = moon_loss(&p, 2, 1, 2, 0.0).unwrap();
        assert!((l - -(0.25f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn loss_wrong_branch_worked_example() {
        // w = 1, p_u = 0.5, p_y = 0.25: (1 + 1/1.5) * (-ln 0.25) ~= 2.310491
        let p = probs(vec![0.25, 0.25, 0.5]);
        let l = moon_loss(&p, 2, 1, 2, 1.0).unwrap();
        assert!((l - (1.0 + 1.0 / 1.5) * 1.386294).abs() < 1e-5);
        assert!((l - 2.310491).abs() < 1e-5);
    }

    #[test]
    fn loss_rejects_bad_labels() {
        let p = probs(vec![0.25, 0.25, 0.5]);
        assert!(matches!(moon_loss(&p, 2, 0, 1, 1.0), Err(Error::Label(_))));
        assert!(matches!(moon_loss(&p, 2, 3, 1, 1.0), Err(Error::Label(_))));
    }

    #[test]
    fn grad_at_zero_weight_is_ce_gradient() {
        let p = probs(vec![0.2, 0.3, 0.5]);
        let g = moon_loss_grad(&p, 2, 1, 2, 0.0, false).unwrap();
        let expect = [0.2 - 1.0, 0.3, 0.5];
        for (a, b) in g.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn fd_grad(probs_logits: &[f64], k: usize, y: usize, y_hat: usize, w: f64) -> Vec<f64> {
        let h = 1e-5;
        let mut out = Vec::new();
        for j in 0..probs_logits.len() {
            let mut zp = probs_logits.to_vec();
            zp[j] += h;
            let mut zm = probs_logits.to_vec();
            zm[j] -= h;
            let lp = moon_loss(&ProbVector::from_logits(&zp), k, y, y_hat, w).unwrap();
            let lm = moon_loss(&ProbVector::from_logits(&zm), k, y, y_hat, w).unwrap();
            out.push((lp - lm) / (2.0 * h));
        }
        out
    }

    #[test]
    fn grad_matches_finite_differences_both_branches() {
        let mut rng = SeededRng::new(21);
        for _ in 0..60 {
            let k = 2 + rng.next_below(4);
            let logits: Vec<f64> = (0..k + 1).map(|_| 2.0 * rng.next_normal()).collect();
            let y = 1 + rng.next_below(k);
            let wrong = 1 + (y % k); // some class != y
            for &w in &[0.0, 0.5, 2.0] {
                for &y_hat in &[y, wrong] {
                    let p = ProbVector::from_logits(&logits);
                    let g = moon_loss_grad(&p, k, y, y_hat, w, false).unwrap();
                    let fd = fd_grad(&logits, k, y, y_hat, w);
                    for (a, f) in g.data().iter().zip(&fd) {
                        let err = (a - f).abs() / a.abs().max(f.abs()).max(1.0);
                        assert!(err < 1e-6, "k={} w={} analytic={} fd={}", k, w, a, f);
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_logit_gradient_negative_when_raising_p_u_helps() {
        // wrong branch, sizeable w: raising the unknown logit lowers the loss
        let logits = [2.0, 0.0, 0.0];
        let p = ProbVector::from_logits(&logits);
        let g = moon_loss_grad(&p, 2, 2, 1, 2.0, false).unwrap();
        let fd = fd_grad(&logits, 2, 2, 1, 2.0);
        assert!(g.data()[2] < 0.0);
        assert!(fd[2] < 0.0);
    }

    #[test]
    fn stop_gradient_drops_the_chain_term() {
        let logits = [2.0, 0.0, 0.0];
        let p = ProbVector::from_logits(&logits);
        let full = moon_loss_grad(&p, 2, 2, 1, 2.0, false).unwrap();
        let stopped = moon_loss_grad(&p, 2, 2, 1, 2.0, true).unwrap();
        assert!((full.data()[2] - stopped.data()[2]).abs() > 1e-6);
        // the stopped variant is the plain scaled-CE gradient
        let pu = p.probs()[2];
        let factor = 1.0 + 2.0 / (1.0 + 2.0 * pu);
        assert!((stopped.data()[0] - -factor * (0.0 - p.probs()[0])).abs() < 1e-12);
    }

    #[test]
    fn loss_nondecreasing_in_w_on_wrong_branch() {
        let p = probs(vec![0.3, 0.4, 0.3]);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let w = i as f64 * 0.2;
            let l = moon_loss(&p, 2, 1, 2, w).unwrap();
            assert!(l >= prev - 1e-12);
            prev = l;
        }
    }

    #[test]
    fn loss_decreasing_in_p_unknown_on_wrong_branch() {
        // fixed p_y, growing p_u, w > 0
        let p_y = 0.2;
        let mut prev = f64::INFINITY;
        for i in 1..8 {
            let p_u = 0.1 * i as f64;
            let rest = 1.0 - p_y - p_u;
            let p = probs(vec![p_y, rest, p_u]);
            let l = moon_loss(&p, 2, 1, 2, 1.5).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn w_step_moving_average_from_zero() {
        let cfg = MoonConfig {
            total_epochs: 10,
            unknown_free_epochs: 5,
            smoothing: 0.1,
            ..MoonConfig::default()
        };
        let mut state = WState::default();
        // beta = (1 - 0) * 2.0 = 2.0 -> beta_tilde = 0.2
        w_step(
            &mut state,
            &cfg,
            0,
            EpochStats {
                mean_unknown: 0.0,
                mean_loss: 2.0,
            },
        )
        .unwrap();
        assert!((state.beta_tilde - 0.2).abs() < 1e-15);
        assert_eq!(state.w, 0.0);
    }

    #[test]
    fn w_step_worked_schedule() {
        let cfg = MoonConfig {
            total_epochs: 100,
            unknown_free_epochs: 5,
            final_weight: 1.0,
            init_factor: 64.0,
            smoothing: 0.1,
            stop_gradient: false,
        };
        let mut state = WState {
            beta_tilde: 0.32,
            ..WState::default()
        };
        let stats = EpochStats {
            mean_unknown: 0.1,
            mean_loss: 1.0,
        };
        w_step(&mut state, &cfg, 5, stats).unwrap();
        assert!((state.w_init - 0.005).abs() < 1e-15);
        assert!((state.step - 0.995 / 95.0).abs() < 1e-15);
        assert!((state.w - 0.005).abs() < 1e-15);
        for t in 6..=10 {
            w_step(&mut state, &cfg, t, stats).unwrap();
        }
        assert!((state.w - 0.0573684210526).abs() < 1e-10);
    }

    #[test]
    fn w_schedule_endpoint_reaches_final_weight() {
        let cfg = MoonConfig {
            total_epochs: 100,
            unknown_free_epochs: 5,
            final_weight: 1.0,
            init_factor: 64.0,
            smoothing: 0.1,
            stop_gradient: false,
        };
        let mut state = WState {
            beta_tilde: 0.32,
            ..WState::default()
        };
        let stats = EpochStats {
            mean_unknown: 0.0,
            mean_loss: 0.0,
        };
        for t in 5..cfg.total_epochs {
            w_step(&mut state, &cfg, t, stats).unwrap();
        }
        // last boundary sits one step below w_f; the affine form lands on
        // w_f exactly at t = T
        assert!((state.w - (cfg.final_weight - state.step)).abs() < 1e-12);
        let extrapolated = state.w_init
            + (cfg.total_epochs - cfg.unknown_free_epochs) as f64 * state.step;
        assert!((extrapolated - cfg.final_weight).abs() < 1e-12);
    }

    #[test]
    fn w_step_rejects_out_of_range_epoch() {
        let cfg = MoonConfig::default();
        let mut state = WState::default();
        let stats = EpochStats {
            mean_unknown: 0.0,
            mean_loss: 1.0,
        };
        assert!(matches!(
            w_step(&mut state, &cfg, cfg.total_epochs, stats),
            Err(Error::Precondition(_))
        ));
    }

    fn tiny_net(seed: u64) -> SparseNetwork {
        let mut rng = SeededRng::new(seed);
        let dims = [3, 4];
        let masks = crate::sparsity::erk_init(
            &SparseNetwork::layer_dims(&dims, 2),
            0.4,
            &mut rng,
        )
        .unwrap();
        SparseNetwork::new(&dims, 2, masks, &mut rng).unwrap()
    }

    #[test]
    fn voter_identity_on_identical_checkpoints() {
        let net = tiny_net(4);
        let mut voter = Voter::new(0);
        for _ in 0..5 {
            voter.accumulate(&net).unwrap();
        }
        let avg = voter.finalize().unwrap();
        for (a, b) in avg.layers().iter().zip(net.layers()) {
            assert_eq!(a.weight.data(), b.weight.data());
            assert_eq!(a.bias.data(), b.bias.data());
        }
    }

    #[test]
    fn voter_averages_two_checkpoints() {
        let mut net1 = tiny_net(4);
        let mut net2 = net1.clone();
        // pick an active slot; set 2 and 4
        let idx = net1.layers()[0].mask.active_indices()[0];
        net1.layers_mut()[0].weight.data_mut()[idx] = 2.0;
        net2.layers_mut()[0].weight.data_mut()[idx] = 4.0;
        let mut voter = Voter::new(0);
        voter.accumulate(&net1).unwrap();
        voter.accumulate(&net2).unwrap();
        let avg = voter.finalize().unwrap();
        assert_eq!(avg.layers()[0].weight.data()[idx], 3.0);
    }

    #[test]
    fn voter_preserves_support_exactly() {
        let net = tiny_net(9);
        let mut voter = Voter::new(0);
        voter.accumulate(&net).unwrap();
        voter.accumulate(&net).unwrap();
        let avg = voter.finalize().unwrap();
        for (a, b) in avg.layers().iter().zip(net.layers()) {
            assert_eq!(a.mask.fingerprint(), b.mask.fingerprint());
            assert_eq!(a.mask.count_ones(), b.mask.count_ones());
            for idx in 0..a.weight.len() {
                if !a.mask.get_flat(idx) {
                    assert_eq!(a.weight.data()[idx], 0.0);
                }
            }
        }
    }

    #[test]
    fn voter_empty_finalize_fails() {
        let voter = Voter::new(0);
        assert!(matches!(voter.finalize(), Err(Error::State(_))));
    }

    #[test]
    fn voting_window() {
        assert_eq!(voting_start_epoch(100), 80);
        assert_eq!(voting_start_epoch(20), 16);
        // short runs still vote at least once
        assert_eq!(voting_start_epoch(3), 2);
        assert_eq!(voting_start_epoch(1), 0);
    }
}
