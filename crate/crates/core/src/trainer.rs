//! The training loop: SGD with momentum under a cosine learning-rate
//! schedule, per-iteration re-masking, SET/RigL topology updates, the
//! unknown-aware loss with its per-epoch weight scheduler, trailing-window
//! weight averaging, and analytic FLOPs accounting.
//!
//! Batch gradients are reduced through [`crate::exec::fold_chunks`], so the
//! whole run is a pure function of the config and seed regardless of the
//! thread count.

use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::moon::{
    moon_loss, moon_loss_grad, voting_start_epoch, w_step, EpochStats, MoonConfig, Voter, WState,
};
use crate::network::{ParamGrads, ProbVector, SparseNetwork};
use crate::rng::SeededRng;
use crate::sparsity::{erk_init, prune_grow, BitMatrix, TopologySchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    Moon,
    CrossEntropy,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    /// Hidden layer widths; input and K+1 output are taken from the data.
    pub hidden: Vec<usize>,
    pub topology: TopologySchedule,
    pub moon: MoonConfig,
    pub loss_variant: LossVariant,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr_max >= self.lr_min && self.lr_min > 0.0) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_max >= lr_min > 0, got {} / {}",
                self.lr_max, self.lr_min
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.topology.global_sparsity) {
            return Err(Error::Config("sparsity must be in [0, 1)".into()));
        }
        if self.topology.update_interval == 0 {
            return Err(Error::Config("update interval must be positive".into()));
        }
        if self.loss_variant == LossVariant::Moon {
            self.moon.validate()?;
        }
        Ok(())
    }

    /// Cosine-annealed learning rate at epoch `t`:
    /// `lr_min + (lr_max - lr_min)/2 * (1 + cos(pi t / T))`.
    pub fn lr_at(&self, t: usize) -> f64 {
        self.lr_min
            + (self.lr_max - self.lr_min) / 2.0
                * (1.0 + (std::f64::consts::PI * t as f64 / self.epochs as f64).cos())
    }
}

/// One epoch of the training trace. `wall_ms` is measured and therefore not
/// part of the deterministic contract; everything else is a pure function of
/// config and seed.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub w: f64,
    pub sparsity_actual: f64,
    pub wall_ms: f64,
    pub flops_estimate: f64,
    /// Exact nonzero weight count behind `sparsity_actual`.
    pub nonzero_weights: usize,
    /// Order-sensitive digest of all masks at epoch end.
    pub mask_fingerprint: u64,
    /// Epoch mean of the unknown-slot probability over training samples.
    pub mean_unknown: f64,
}

pub struct TrainOutput {
    /// Weight-averaged model from the trailing voting window.
    pub voted: SparseNetwork,
    /// Final-epoch model before averaging.
    pub raw: SparseNetwork,
    pub logs: Vec<EpochLog>,
}

/// One SGD-with-momentum step: `v <- momentum v + g`, `theta <- theta - lr v`,
/// then re-mask the weights so sparsity stays exact.
pub fn sgd_step(
    net: &mut SparseNetwork,
    grads: &ParamGrads,
    velocity: &mut ParamGrads,
    lr: f64,
    momentum: f64,
) {
    let layers = net.layers_mut();
    for (l, layer) in layers.iter_mut().enumerate() {
        let vw = velocity.weights[l].data_mut();
        let gw = grads.weights[l].data();
        let w = layer.weight.data_mut();
        for i in 0..w.len() {
            vw[i] = momentum * vw[i] + gw[i];
            w[i] -= lr * vw[i];
        }
        layer.apply_mask();
        let vb = velocity.biases[l].data_mut();
        let gb = grads.biases[l].data();
        let b = layer.bias.data_mut();
        for i in 0..b.len() {
            vb[i] = momentum * vb[i] + gb[i];
            b[i] -= lr * vb[i];
        }
    }
}

struct BatchAccumulator {
    grads: ParamGrads,
    loss_sum: f64,
    unknown_sum: f64,
}

/// Analytic FLOPs for one epoch: per-layer dense matmul cost scaled by mask
/// density, times three for forward plus backward, times the samples seen.
/// The unknown-aware loss and the voter add their own (tiny) terms.
fn epoch_flops(
    net: &SparseNetwork,
    samples: usize,
    moon_active: bool,
    voting_epoch: bool,
) -> f64 {
    let mut per_sample = 0.0;
    for layer in net.layers() {
        let dense = 2.0 * (layer.n_in() * layer.n_out()) as f64;
        let density = layer.mask.count_ones() as f64 / layer.weight.len() as f64;
        per_sample += dense * density;
    }
    let mut total = 3.0 * per_sample * samples as f64;
    if moon_active {
        // weight factor plus the scaled gradient over K+1 logits
        total += samples as f64 * (8.0 + 2.0 * (net.num_classes() + 1) as f64);
    }
    if voting_epoch {
        let params: usize = net
            .layers()
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum();
        total += 2.0 * params as f64;
    }
    total
}

fn mask_fingerprint(net: &SparseNetwork) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for layer in net.layers() {
        h ^= layer.mask.fingerprint();
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Runs the full loop. Deterministic under `cfg.seed`; aborts with a
/// diagnostic on the first non-finite loss.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Input("empty training or validation set".into()));
    }
    let k = train_set.num_classes();
    if k < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if val_set.labels.iter().any(|&l| l > k) {
        return Err(Error::Label(format!(
            "validation label outside 1..={}",
            k
        )));
    }
    if val_set.dim() != train_set.dim() {
        return Err(Error::Dimension("train/val input dims disagree".into()));
    }

    let mut dims = vec![train_set.dim()];
    dims.extend_from_slice(&cfg.hidden);

    let mut rng = SeededRng::new(cfg.seed);
    let mut rng_init = rng.split();
    let mut rng_mask = rng.split();
    let mut rng_shuffle = rng.split();
    let mut rng_topology = rng.split();

    let layer_dims = SparseNetwork::layer_dims(&dims, k);
    let masks = if cfg.topology.global_sparsity == 0.0 {
        layer_dims
            .iter()
            .map(|&(o, i)| BitMatrix::ones(o, i))
            .collect()
    } else {
        erk_init(&layer_dims, cfg.topology.global_sparsity, &mut rng_mask)?
    };
    let mut net = SparseNetwork::new(&dims, k, masks, &mut rng_init)?;
    let total_weights = net.weight_param_count();
    let target_nonzeros = net.nonzero_weight_count();

    let mut velocity = ParamGrads::zeros_like(&net);
    let mut voter = Voter::new(voting_start_epoch(cfg.epochs));
    let mut wstate = WState::default();
    let moon_on = cfg.loss_variant == LossVariant::Moon;
    let stop_gradient = moon_on && cfg.moon.stop_gradient;

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut global_iter = 0usize;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let w_used = if moon_on { wstate.w } else { 0.0 };
        rng_shuffle.shuffle(&mut order);

        let mut epoch_loss_sum = 0.0;
        let mut epoch_unknown_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let partials = exec::fold_chunks(
                batch,
                || BatchAccumulator {
                    grads: ParamGrads::zeros_like(&net),
                    loss_sum: 0.0,
                    unknown_sum: 0.0,
                },
                |mut acc, &idx| {
                    let x = train_set.sample(idx);
                    let y = train_set.labels[idx];
                    let (logits, _, cache) = net.forward(&x).expect("shape checked above");
                    let probs = ProbVector::from_logits(logits.data());
                    let predicted = probs.argmax_first(k);
                    let loss = moon_loss(&probs, k, y, predicted, w_used)
                        .expect("labels validated");
                    let dlogits = moon_loss_grad(&probs, k, y, predicted, w_used, stop_gradient)
                        .expect("labels validated");
                    let (grads, _) = net.backward(&cache, &dlogits).expect("fresh cache");
                    acc.grads.add_assign(&grads);
                    acc.loss_sum += loss;
                    acc.unknown_sum += probs.unknown();
                    acc
                },
            );
            let mut batch_grads = ParamGrads::zeros_like(&net);
            let mut batch_loss = 0.0;
            for p in partials {
                batch_grads.add_assign(&p.grads);
                batch_loss += p.loss_sum;
                epoch_unknown_sum += p.unknown_sum;
            }
            epoch_loss_sum += batch_loss;
            if !batch_loss.is_finite() || !batch_grads.is_finite() {
                return Err(Error::NumericAbort {
                    epoch,
                    iteration: global_iter,
                    lr,
                    w: w_used,
                });
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut net, &batch_grads, &mut velocity, lr, cfg.momentum);
            global_iter += 1;

            let frozen = cfg.topology.frozen_at(epoch as f64, cfg.epochs);
            if !frozen
                && cfg.topology.global_sparsity > 0.0
                && global_iter % cfg.topology.update_interval == 0
            {
                let fraction = cfg.topology.fraction_at(epoch as f64, cfg.epochs);
                if fraction > 0.0 {
                    let before: Vec<BitMatrix> =
                        net.layers().iter().map(|l| l.mask.clone()).collect();
                    {
                        let layers = net.layers_mut();
                        let (mut weights, mut masks): (Vec<_>, Vec<_>) = layers
                            .iter()
                            .map(|l| (l.weight.clone(), l.mask.clone()))
                            .unzip();
                        prune_grow(
                            &mut weights,
                            &mut masks,
                            cfg.topology.method,
                            fraction,
                            Some(&batch_grads.weights),
                            &mut rng_topology,
                        )?;
                        for (layer, (w, m)) in
                            layers.iter_mut().zip(weights.into_iter().zip(masks))
                        {
                            layer.weight = w;
                            layer.mask = m;
                        }
                    }
                    // newly grown slots start with fresh momentum
                    for (l, prev) in before.iter().enumerate() {
                        let layer = &net.layers()[l];
                        for idx in 0..layer.weight.len() {
                            if layer.mask.get_flat(idx) && !prev.get_flat(idx) {
                                velocity.weights[l].data_mut()[idx] = 0.0;
                            }
                        }
                    }
                }
            }
        }

        let n = train_set.len() as f64;
        if moon_on {
            w_step(
                &mut wstate,
                &cfg.moon,
                epoch,
                EpochStats {
                    mean_unknown: epoch_unknown_sum / n,
                    mean_loss: epoch_loss_sum / n,
                },
            )?;
        }

        let correct: Vec<bool> = {
            let indices: Vec<usize> = (0..val_set.len()).collect();
            exec::map_collect(&indices, |&i| {
                net.predict(&val_set.sample(i)).expect("dims checked") == val_set.labels[i]
            })
        };
        let val_accuracy =
            correct.iter().filter(|&&c| c).count() as f64 / val_set.len() as f64;

        let nonzeros = net.nonzero_weight_count();
        debug_assert!(nonzeros.abs_diff(target_nonzeros) <= 1);
        let voting_epoch = epoch >= voter.start_epoch();
        logs.push(EpochLog {
            epoch,
            train_loss: epoch_loss_sum / n,
            val_accuracy,
            w: if moon_on { wstate.w } else { 0.0 },
            sparsity_actual: 1.0 - nonzeros as f64 / total_weights as f64,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            flops_estimate: epoch_flops(&net, train_set.len(), moon_on, voting_epoch),
            nonzero_weights: nonzeros,
            mask_fingerprint: mask_fingerprint(&net),
            mean_unknown: epoch_unknown_sum / n,
        });

        if voting_epoch {
            voter.accumulate(&net)?;
        }
    }

    let voted = voter.finalize()?;
    Ok(TrainOutput {
        voted,
        raw: net,
        logs,
    })
}

/// Overhead comparison between an unknown-aware run and its matched
/// cross-entropy baseline.
#[derive(Debug, Clone)]
pub struct OverheadReport {
    /// Analytic FLOPs ratio (unknown-aware / baseline), `None` on empty logs.
    pub flops_ratio: Option<f64>,
    /// Measured wall-time ratio, `None` on empty logs.
    pub wall_ratio: Option<f64>,
    /// Set when either run produced no epochs.
    pub undefined: bool,
}

/// Compares two runs that must differ only in the loss variant.
pub fn flops_report(
    moon_cfg: &TrainConfig,
    moon_logs: &[EpochLog],
    base_cfg: &TrainConfig,
    base_logs: &[EpochLog],
) -> Result<OverheadReport> {
    let matched = moon_cfg.epochs == base_cfg.epochs
        && moon_cfg.batch_size == base_cfg.batch_size
        && moon_cfg.lr_max == base_cfg.lr_max
        && moon_cfg.lr_min == base_cfg.lr_min
        && moon_cfg.momentum == base_cfg.momentum
        && moon_cfg.hidden == base_cfg.hidden
        && moon_cfg.seed == base_cfg.seed
        && moon_cfg.topology.global_sparsity == base_cfg.topology.global_sparsity;
    if !matched {
        return Err(Error::Comparison(
            "runs differ beyond the loss variant".into(),
        ));
    }
    if moon_logs.is_empty() || base_logs.is_empty() {
        return Ok(OverheadReport {
            flops_ratio: None,
            wall_ratio: None,
            undefined: true,
        });
    }
    let sum = |logs: &[EpochLog], f: fn(&EpochLog) -> f64| logs.iter().map(f).sum::<f64>();
    let flops_ratio = sum(moon_logs, |l| l.flops_estimate) / sum(base_logs, |l| l.flops_estimate);
    let wall_ratio = sum(moon_logs, |l| l.wall_ms) / sum(base_logs, |l| l.wall_ms);
    Ok(OverheadReport {
        flops_ratio: Some(flops_ratio),
        wall_ratio: Some(wall_ratio),
        undefined: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gm, GaussianMixtureSpec, GmComponent};
    use crate::sparsity::SparsityMethod;
    use crate::tensor::Tensor;

    fn blob_spec(classes: usize, dim: usize, separation: f64, seed: u64) -> GaussianMixtureSpec {
        let mut rng = SeededRng::new(seed);
        let mut chol = Tensor::zeros(vec![dim, dim]);
        for i in 0..dim {
            chol.set(i, i, 1.0);
        }
        let components = (0..classes)
            .map(|c| {
                let dir: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                GmComponent {
                    mean: Tensor::vector(dir.iter().map(|v| v / norm * separation).collect()),
                    chol_cov: chol.clone(),
                    weight: 1.0 / classes as f64,
                    label: c + 1,
                }
            })
            .collect();
        GaussianMixtureSpec::new(components).unwrap()
    }

    fn small_cfg(seed: u64, epochs: usize, variant: LossVariant) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr_max: 0.1,
            lr_min: 0.01,
            momentum: 0.9,
            hidden: vec![12],
            topology: TopologySchedule {
                initial_fraction: 0.3,
                freeze_point: 0.7,
                update_interval: 5,
                method: SparsityMethod::Rigl,
                global_sparsity: 0.5,
            },
            moon: MoonConfig {
                total_epochs: epochs,
                unknown_free_epochs: 2.min(epochs),
                final_weight: 1.0,
                init_factor: 64.0,
                smoothing: 0.1,
                stop_gradient: false,
            },
            loss_variant: variant,
            seed,
        }
    }

    fn small_data(seed: u64) -> (Dataset, Dataset) {
        let spec = blob_spec(3, 4, 2.0, 500 + seed);
        let mut rng = SeededRng::new(seed);
        let train = synth_gm(&spec, 60, &mut rng, "train").unwrap();
        let val = synth_gm(&spec, 20, &mut rng, "val").unwrap();
        (train, val)
    }

    #[test]
    fn lr_schedule_endpoints_and_midpoint() {
        let mut cfg = small_cfg(1, 100, LossVariant::CrossEntropy);
        cfg.lr_max = 1.2;
        cfg.lr_min = 0.08;
        assert!((cfg.lr_at(0) - 1.2).abs() < 1e-15);
        assert!((cfg.lr_at(100) - 0.08).abs() < 1e-12);
        assert!((cfg.lr_at(50) - 0.64).abs() < 1e-12);
    }

    #[test]
    fn sgd_step_matches_scalar_recurrence() {
        // single 1x1 layer, hand-unrolled momentum recurrence
        let mut rng = SeededRng::new(1);
        let masks = vec![BitMatrix::ones(2, 1)];
        let mut net = SparseNetwork::new(&[1], 1, masks, &mut rng).unwrap();
        {
            let layers = net.layers_mut();
            layers[0].weight.data_mut().copy_from_slice(&[0.5, -0.25]);
        }
        let mut velocity = ParamGrads::zeros_like(&net);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.weights[0].data_mut().copy_from_slice(&[0.3, 0.1]);

        let (lr, momentum) = (0.1, 0.9);
        let (mut theta, mut v) = (0.5f64, 0.0f64);
        for _ in 0..2 {
            sgd_step(&mut net, &grads, &mut velocity, lr, momentum);
            v = momentum * v + 0.3;
            theta -= lr * v;
        }
        assert!((net.layers()[0].weight.data()[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_zero_velocity_is_identity() {
        let mut rng = SeededRng::new(2);
        let masks = vec![BitMatrix::ones(2, 2)];
        let mut net = SparseNetwork::new(&[2], 1, masks, &mut rng).unwrap();
        let before: Vec<f64> = net.layers()[0].weight.data().to_vec();
        let mut velocity = ParamGrads::zeros_like(&net);
        let grads = ParamGrads::zeros_like(&net);
        sgd_step(&mut net, &grads, &mut velocity, 0.5, 0.9);
        assert_eq!(net.layers()[0].weight.data(), &before[..]);
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let (train_set, val_set) = small_data(3);
        let cfg = small_cfg(7, 4, LossVariant::Moon);
        let a = train(&cfg, &train_set, &val_set).unwrap();
        let b = train(&cfg, &train_set, &val_set).unwrap();
        for (la, lb) in a.logs.iter().zip(&b.logs) {
            assert_eq!(la.train_loss.to_bits(), lb.train_loss.to_bits());
            assert_eq!(la.w.to_bits(), lb.w.to_bits());
            assert_eq!(la.mask_fingerprint, lb.mask_fingerprint);
        }
        for (la, lb) in a.raw.layers().iter().zip(b.raw.layers()) {
            assert_eq!(la.weight.data(), lb.weight.data());
        }
        for (la, lb) in a.voted.layers().iter().zip(b.voted.layers()) {
            assert_eq!(la.weight.data(), lb.weight.data());
        }
    }

    #[test]
    fn zero_final_weight_matches_cross_entropy_bitwise() {
        // T_e >= T keeps w at zero for the whole run, which must reproduce
        // the cross-entropy trajectory exactly.
        let (train_set, val_set) = small_data(4);
        let mut moon_cfg = small_cfg(11, 3, LossVariant::Moon);
        moon_cfg.moon.final_weight = 0.0;
        moon_cfg.moon.unknown_free_epochs = 5;
        let ce_cfg = TrainConfig {
            loss_variant: LossVariant::CrossEntropy,
            ..moon_cfg.clone()
        };
        let a = train(&moon_cfg, &train_set, &val_set).unwrap();
        let b = train(&ce_cfg, &train_set, &val_set).unwrap();
        for (la, lb) in a.raw.layers().iter().zip(b.raw.layers()) {
            assert_eq!(la.weight.data(), lb.weight.data());
            assert_eq!(la.bias.data(), lb.bias.data());
        }
        for (la, lb) in a.voted.layers().iter().zip(b.voted.layers()) {
            assert_eq!(la.weight.data(), lb.weight.data());
        }
    }

    #[test]
    fn sparsity_exact_and_masks_freeze() {
        let (train_set, val_set) = small_data(5);
        let mut cfg = small_cfg(13, 10, LossVariant::Moon);
        cfg.topology.global_sparsity = 0.6;
        let out = train(&cfg, &train_set, &val_set).unwrap();
        let total: usize = out.raw.weight_param_count();
        let target = ((1.0 - 0.6) * total as f64).round() as usize;
        for log in &out.logs {
            assert!(log.nonzero_weights.abs_diff(target) <= 1);
        }
        // topology freeze: no fingerprint change from epoch ceil(0.7 T) on
        let freeze = (0.7 * cfg.epochs as f64).ceil() as usize;
        let frozen = out.logs[freeze].mask_fingerprint;
        for log in &out.logs[freeze..] {
            assert_eq!(log.mask_fingerprint, frozen);
        }
    }

    #[test]
    fn w_trace_has_three_segments() {
        let (train_set, val_set) = small_data(6);
        let mut cfg = small_cfg(17, 12, LossVariant::Moon);
        cfg.moon.unknown_free_epochs = 4;
        cfg.moon.total_epochs = 12;
        let out = train(&cfg, &train_set, &val_set).unwrap();
        for log in &out.logs[..4] {
            assert_eq!(log.w, 0.0);
        }
        let w_init = out.logs[4].w;
        assert!(w_init > 0.0);
        let step = (cfg.moon.final_weight - w_init) / (12 - 4) as f64;
        for (i, log) in out.logs.iter().enumerate().skip(4) {
            let expected = w_init + (i - 4) as f64 * step;
            assert!((log.w - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_aborts_with_diagnostics() {
        let (mut train_set, val_set) = small_data(7);
        train_set.inputs.data_mut()[0] = f64::NAN;
        let cfg = small_cfg(19, 3, LossVariant::CrossEntropy);
        match train(&cfg, &train_set, &val_set) {
            Err(Error::NumericAbort { epoch, lr, .. }) => {
                assert_eq!(epoch, 0);
                assert!(lr > 0.0);
            }
            other => panic!("expected numeric abort, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn voted_model_comes_from_frozen_window() {
        let (train_set, val_set) = small_data(8);
        let cfg = small_cfg(23, 10, LossVariant::Moon);
        let out = train(&cfg, &train_set, &val_set).unwrap();
        // voting support equals the frozen raw support
        for (v, r) in out.voted.layers().iter().zip(out.raw.layers()) {
            assert_eq!(v.mask.fingerprint(), r.mask.fingerprint());
        }
    }

    #[test]
    fn flops_ratio_tracks_density_on_single_layer_nets() {
        // wide single-layer net so per-layer rounding is negligible
        let spec = blob_spec(3, 100, 2.5, 42);
        let mut rng = SeededRng::new(42);
        let train_set = synth_gm(&spec, 60, &mut rng, "train").unwrap();
        let val_set = synth_gm(&spec, 10, &mut rng, "val").unwrap();
        let mut dense_cfg = small_cfg(29, 1, LossVariant::CrossEntropy);
        dense_cfg.hidden = vec![];
        dense_cfg.topology.global_sparsity = 0.0;
        let mut sparse_cfg = dense_cfg.clone();
        sparse_cfg.topology.global_sparsity = 0.9;
        let dense = train(&dense_cfg, &train_set, &val_set).unwrap();
        let sparse = train(&sparse_cfg, &train_set, &val_set).unwrap();
        let ratio = dense.logs[0].flops_estimate / sparse.logs[0].flops_estimate;
        assert!((ratio - 10.0).abs() < 0.5, "ratio {}", ratio);
    }

    #[test]
    fn overhead_report_and_mismatch_error() {
        let (train_set, val_set) = small_data(10);
        let moon_cfg = small_cfg(31, 3, LossVariant::Moon);
        let ce_cfg = TrainConfig {
            loss_variant: LossVariant::CrossEntropy,
            ..moon_cfg.clone()
        };
        let a = train(&moon_cfg, &train_set, &val_set).unwrap();
        let b = train(&ce_cfg, &train_set, &val_set).unwrap();
        let report = flops_report(&moon_cfg, &a.logs, &ce_cfg, &b.logs).unwrap();
        let ratio = report.flops_ratio.unwrap();
        assert!((1.0..1.10).contains(&ratio), "flops ratio {}", ratio);

        let report = flops_report(&moon_cfg, &[], &ce_cfg, &[]).unwrap();
        assert!(report.undefined);
        assert!(report.flops_ratio.is_none());

        let mut other = ce_cfg.clone();
        other.batch_size += 1;
        assert!(matches!(
            flops_report(&moon_cfg, &a.logs, &other, &b.logs),
            Err(Error::Comparison(_))
        ));
    }
}
