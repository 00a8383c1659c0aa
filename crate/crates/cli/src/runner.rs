//! Subcommand pipelines: dataset construction from a config, training with
//! artifact persistence, OOD evaluation, theory probes, and feature export.

use std::path::Path;

use moon_core::data::{
    make_ood_uniform, parse_idx, split_held_out, synth_gm, Dataset, GaussianMixtureSpec,
    GmComponent,
};
use moon_core::detect::{score_ebo, score_msp, score_odin, DetectorKind, KlmTemplates, KnnBank, ScoreOptions};
use moon_core::exec;
use moon_core::metrics::{accuracy, auroc, aupr, ece, fpr_at_tpr, MetricsReport};
use moon_core::moon::MoonConfig;
use moon_core::network::ProbVector;
use moon_core::rng::{gaussian_sample, SeededRng};
use moon_core::sparsity::{SparsityMethod, TopologySchedule};
use moon_core::tensor::Tensor;
use moon_core::theory::{
    insight_check_hard_id, insight_check_ood, UnreliabilityProbe,
};
use moon_core::trainer::{train, EpochLog, LossVariant, TrainConfig, TrainOutput};
use moon_core::SparseNetwork;

use crate::config::RunConfig;
use crate::report::{self, EvalRows, TheoryRows};
use crate::{checkpoint, CliError};

pub const TRAIN_REQUIRED: &[&str] = &["seed", "dataset.kind", "model.hidden", "train.epochs"];

/// Everything a run needs from the `dataset.*` keys. The OOD stream is the
/// seeded generator reserved for synthetic evaluation sets.
pub struct BuiltData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub holdout_test: Option<Dataset>,
    pub gm_spec: Option<GaussianMixtureSpec>,
    pub ood_rng: SeededRng,
    pub num_classes: usize,
}

fn diagonal(dim: usize, value: f64) -> Tensor {
    let mut t = Tensor::zeros(vec![dim, dim]);
    for i in 0..dim {
        t.set(i, i, value);
    }
    t
}

/// Seeded random-direction blob mixture: one component per class, means at
/// `separation` times a unit direction, isotropic `spread` covariance.
fn blob_spec(
    classes: usize,
    dim: usize,
    separation: f64,
    spread: f64,
    rng: &mut SeededRng,
) -> Result<GaussianMixtureSpec, CliError> {
    if classes < 2 {
        return Err(CliError::config("dataset.gm.classes must be at least 2"));
    }
    let chol = diagonal(dim, spread);
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
    Ok(GaussianMixtureSpec::new(components)?)
}

/// Restricts a mixture to the classes kept after a hold-out split and
/// renormalizes the weights; labels are remapped to stay contiguous.
fn restrict_spec(
    spec: &GaussianMixtureSpec,
    held_out: &[usize],
) -> Result<GaussianMixtureSpec, CliError> {
    let kept: Vec<&GmComponent> = spec
        .components
        .iter()
        .filter(|c| !held_out.contains(&c.label))
        .collect();
    let total: f64 = kept.iter().map(|c| c.weight).sum();
    let components = kept
        .iter()
        .enumerate()
        .map(|(i, c)| GmComponent {
            mean: c.mean.clone(),
            chol_cov: c.chol_cov.clone(),
            weight: c.weight / total,
            label: i + 1,
        })
        .collect();
    Ok(GaussianMixtureSpec::new(components)?)
}

pub fn build_dataset(cfg: &RunConfig) -> Result<BuiltData, CliError> {
    let seed = cfg.u64("seed")?;
    let mut master = SeededRng::new(seed);
    let mut rng_spec = master.split();
    let mut rng_train = master.split();
    let mut rng_test = master.split();
    let mut rng_split = master.split();
    let ood_rng = master.split();

    let holdout = cfg.list_usize("dataset.holdout_classes")?;
    let val_fraction = cfg.f64_or("dataset.val_fraction", 0.1)?;
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(CliError::config("dataset.val_fraction must be in [0, 1)"));
    }

    let (full_train, full_test, gm_spec) = match cfg.str("dataset.kind")? {
        "idx" => {
            cfg.require(&[
                "dataset.idx.train_images",
                "dataset.idx.train_labels",
                "dataset.idx.test_images",
                "dataset.idx.test_labels",
            ])?;
            let tr = parse_idx(
                Path::new(cfg.str("dataset.idx.train_images")?),
                Path::new(cfg.str("dataset.idx.train_labels")?),
            )?;
            let te = parse_idx(
                Path::new(cfg.str("dataset.idx.test_images")?),
                Path::new(cfg.str("dataset.idx.test_labels")?),
            )?;
            (tr, te, None)
        }
        "gm-blobs" => {
            let classes = cfg.usize_or("dataset.gm.classes", 10)?;
            let dim = cfg.usize_or("dataset.gm.dim", 784)?;
            let separation = cfg.f64_or("dataset.gm.separation", 2.4)?;
            let spread = cfg.f64_or("dataset.gm.spread", 1.0)?;
            let train_per_class = cfg.usize_or("dataset.gm.train_per_class", 400)?;
            let test_per_class = cfg.usize_or("dataset.gm.test_per_class", 150)?;
            let spec = blob_spec(classes, dim, separation, spread, &mut rng_spec)?;
            let tr = synth_gm(&spec, train_per_class, &mut rng_train, "gm-train")?;
            let te = synth_gm(&spec, test_per_class, &mut rng_test, "gm-test")?;
            (tr, te, Some(spec))
        }
        other => {
            return Err(CliError::config(format!(
                "dataset.kind must be idx or gm-blobs, got {:?}",
                other
            )))
        }
    };

    let (id_train, id_test, holdout_test, gm_spec) = if holdout.is_empty() {
        (full_train, full_test, None, gm_spec)
    } else {
        let (id_train, _) = split_held_out(&full_train, &holdout)?;
        let (id_test, ood_test) = split_held_out(&full_test, &holdout)?;
        let spec = gm_spec
            .as_ref()
            .map(|s| restrict_spec(s, &holdout))
            .transpose()?;
        (id_train, id_test, Some(ood_test), spec)
    };

    let (train_split, val_split) = id_train.split(val_fraction, &mut rng_split);
    if train_split.is_empty() || val_split.is_empty() {
        return Err(CliError::config(
            "train/val split left an empty side; adjust dataset sizes or val_fraction",
        ));
    }
    let num_classes = train_split.num_classes();
    Ok(BuiltData {
        train: train_split,
        val: val_split,
        test: id_test,
        holdout_test,
        gm_spec,
        ood_rng,
        num_classes,
    })
}

pub fn train_config_from(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let epochs = cfg.usize("train.epochs")?;
    let method = match cfg.str_or("sparsity.method", "rigl") {
        "rigl" => SparsityMethod::Rigl,
        "set" => SparsityMethod::Set,
        other => {
            return Err(CliError::config(format!(
                "sparsity.method must be rigl or set, got {:?}",
                other
            )))
        }
    };
    let tc = TrainConfig {
        epochs,
        batch_size: cfg.usize_or("train.batch_size", 64)?,
        lr_max: cfg.f64_or("train.lr_max", 0.1)?,
        lr_min: cfg.f64_or("train.lr_min", 0.001)?,
        momentum: cfg.f64_or("train.momentum", 0.9)?,
        hidden: cfg.list_usize("model.hidden")?,
        topology: TopologySchedule {
            initial_fraction: cfg.f64_or("sparsity.initial_fraction", 0.3)?,
            freeze_point: cfg.f64_or("sparsity.freeze_point", 0.7)?,
            update_interval: cfg.usize_or("sparsity.update_interval", 100)?,
            method,
            global_sparsity: cfg.f64_or("sparsity.sparsity", 0.9)?,
        },
        moon: MoonConfig {
            total_epochs: epochs,
            unknown_free_epochs: cfg.usize_or("moon.t_e", 5)?,
            final_weight: cfg.f64_or("moon.w_f", 1.0)?,
            init_factor: cfg.f64_or("moon.r", 64.0)?,
            smoothing: cfg.f64_or("moon.alpha", 0.1)?,
            stop_gradient: cfg.bool_or("moon.stop_gradient", false)?,
        },
        loss_variant: if cfg.bool_or("moon.enabled", true)? {
            LossVariant::Moon
        } else {
            LossVariant::CrossEntropy
        },
        seed: cfg.u64("seed")?,
    };
    tc.validate()?;
    Ok(tc)
}

/// Runs training and returns the artifacts without touching the filesystem.
pub fn train_from_config(cfg: &RunConfig) -> Result<(TrainConfig, BuiltData, TrainOutput), CliError> {
    cfg.require(TRAIN_REQUIRED)?;
    let data = build_dataset(cfg)?;
    let tc = train_config_from(cfg)?;
    let out = train(&tc, &data.train, &data.val)?;
    Ok((tc, data, out))
}

/// `train --config --out`: writes `checkpoint` (voted), `checkpoint-raw`
/// (final epoch), `epoch_log.csv`, and `config-echo`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<EpochLog>, CliError> {
    let (_, _, out) = train_from_config(cfg)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::other(format!("create {}: {}", out_dir.display(), e)))?;
    let digest = cfg.digest();
    checkpoint::save(&out_dir.join("checkpoint"), &out.voted, &digest)?;
    checkpoint::save(&out_dir.join("checkpoint-raw"), &out.raw, &digest)?;
    report::atomic_write(
        &out_dir.join("epoch_log.csv"),
        &report::epoch_log_csv(&out.logs)?,
    )?;
    let mut echo = cfg.canonical_text();
    if report::timing_enabled() {
        let total: f64 = out.logs.iter().map(|l| l.wall_ms).sum();
        echo.push_str(&format!("# total_wall_ms={}\n", total));
    }
    report::atomic_write(&out_dir.join("config-echo"), echo.as_bytes())?;
    Ok(out.logs)
}

fn detector_list(cfg: &RunConfig) -> Result<Vec<DetectorKind>, CliError> {
    let names = cfg
        .list_str("ood.detectors")
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::config("ood.detectors must list at least one detector"))?;
    names
        .iter()
        .map(|name| {
            let kind = match name.as_str() {
                "msp" => DetectorKind::Msp,
                "odin" => DetectorKind::Odin {
                    temperature: cfg.f64_or("ood.odin.temperature", 1000.0)?,
                    epsilon: cfg.f64_or("ood.odin.epsilon", 0.0014)?,
                },
                "ebo" => DetectorKind::Ebo {
                    temperature: cfg.f64_or("ood.ebo.temperature", 1.0)?,
                },
                "knn" => DetectorKind::Knn {
                    k: cfg.usize_or("ood.knn.k", 0)?,
                },
                "klm" => DetectorKind::Klm,
                other => {
                    return Err(CliError::config(format!(
                        "unknown detector {:?} (expected msp, odin, ebo, knn, klm)",
                        other
                    )))
                }
            };
            Ok(kind)
        })
        .collect()
}

/// Builds the named OOD evaluation sets in config order.
fn build_ood_sets(
    cfg: &RunConfig,
    data: &mut BuiltData,
) -> Result<Vec<(String, Dataset)>, CliError> {
    let names = cfg
        .list_str("ood.sets")
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::config("ood.sets must list at least one OOD set"))?;
    let mut sets = Vec::new();
    for name in names {
        let mut rng = data.ood_rng.split();
        let kind_key = format!("ood.{}.kind", name);
        let kind = cfg.str(&kind_key)?;
        let n = cfg.usize_or(&format!("ood.{}.n", name), 1000)?;
        let ds = match kind {
            "held-out" => data
                .holdout_test
                .as_ref()
                .ok_or_else(|| {
                    CliError::config(format!(
                        "ood set {} is held-out but dataset.holdout_classes is empty",
                        name
                    ))
                })?
                .clone(),
            "shifted-mixture" => {
                let spec = data.gm_spec.as_ref().ok_or_else(|| {
                    CliError::config(format!(
                        "ood set {} needs a gm-blobs dataset for shifted-mixture",
                        name
                    ))
                })?;
                let offset = cfg.f64_or(&format!("ood.{}.offset", name), 0.0)?;
                let per_coord = offset / (spec.dim as f64).sqrt();
                let shifted = spec.shifted(&Tensor::vector(vec![per_coord; spec.dim]))?;
                let mut inputs = Vec::with_capacity(n * spec.dim);
                for _ in 0..n {
                    let (x, _) = shifted.draw(&mut rng)?;
                    inputs.extend_from_slice(x.data());
                }
                Dataset::new(
                    Tensor::new(vec![n, spec.dim], inputs)?,
                    vec![1; n],
                    format!("shifted-{}", name),
                )?
            }
            "uniform-box" => {
                let bounds = data.train.bounding_box();
                make_ood_uniform(&bounds, n, &mut rng, format!("uniform-{}", name))?
            }
            other => {
                return Err(CliError::config(format!(
                    "ood set {}: kind must be held-out, shifted-mixture, or uniform-box, got {:?}",
                    name, other
                )))
            }
        };
        if ds.is_empty() {
            return Err(CliError::config(format!("ood set {} is empty", name)));
        }
        sets.push((name, ds));
    }
    Ok(sets)
}

fn penultimate_features(net: &SparseNetwork, ds: &Dataset) -> Vec<Tensor> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    exec::map_collect(&indices, |&i| {
        let (_, features, _) = net.forward(&ds.sample(i)).expect("dims validated");
        features
    })
}

fn detector_scores(
    net: &SparseNetwork,
    ds: &Dataset,
    kind: &DetectorKind,
    opts: ScoreOptions,
    knn_bank: Option<&KnnBank>,
    klm: Option<&KlmTemplates>,
) -> Result<Vec<f64>, CliError> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let scores: Vec<Result<f64, moon_core::Error>> = exec::map_collect(&indices, |&i| {
        let x = ds.sample(i);
        match kind {
            DetectorKind::Msp => score_msp(net, &x, opts),
            DetectorKind::Odin { temperature, epsilon } => {
                score_odin(net, &x, *temperature, *epsilon, opts)
            }
            DetectorKind::Ebo { temperature } => score_ebo(net, &x, *temperature, opts),
            DetectorKind::Knn { k } => {
                let bank = knn_bank.expect("bank fitted for knn runs");
                let (_, features, _) = net.forward(&x)?;
                let k = if *k == 0 { bank.default_k() } else { *k };
                bank.score(&features, k)
            }
            DetectorKind::Klm => {
                let templates = klm.expect("templates fitted for klm runs");
                let probs = net.probabilities(&x)?;
                templates.score(&probs)
            }
        }
    });
    let mut out = Vec::with_capacity(scores.len());
    for s in scores {
        out.push(s?);
    }
    Ok(out)
}

/// Scores the ID test split and every configured OOD set with every
/// configured detector, then appends the ID accuracy/ECE row.
pub fn evaluate(
    cfg: &RunConfig,
    net: &SparseNetwork,
    data: &mut BuiltData,
) -> Result<EvalRows, CliError> {
    if net.input_dim() != data.train.dim() {
        return Err(CliError::config(format!(
            "checkpoint expects input dim {}, dataset provides {}",
            net.input_dim(),
            data.train.dim()
        )));
    }
    if net.num_classes() != data.num_classes {
        return Err(CliError::config(format!(
            "checkpoint has {} classes, dataset has {}",
            net.num_classes(),
            data.num_classes
        )));
    }
    let detectors = detector_list(cfg)?;
    for d in &detectors {
        if !matches!(d, DetectorKind::Knn { k: 0 }) {
            d.validate()?;
        }
    }
    let opts = ScoreOptions {
        include_unknown: cfg.bool_or("ood.include_unknown_dim", false)?,
    };
    let ood_sets = build_ood_sets(cfg, data)?;

    let needs_knn = detectors.iter().any(|d| matches!(d, DetectorKind::Knn { .. }));
    let knn_bank = if needs_knn {
        Some(KnnBank::fit(&penultimate_features(net, &data.train))?)
    } else {
        None
    };
    let needs_klm = detectors.iter().any(|d| matches!(d, DetectorKind::Klm));
    let klm = if needs_klm {
        let indices: Vec<usize> = (0..data.val.len()).collect();
        let fitted: Vec<(ProbVector, usize)> = exec::map_collect(&indices, |&i| {
            let probs = net.probabilities(&data.val.sample(i)).expect("dims validated");
            let predicted = probs.argmax_first(net.num_classes());
            (probs, predicted)
        });
        let (probs, preds): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
        Some(KlmTemplates::fit(&probs, &preds, net.num_classes())?)
    } else {
        None
    };

    // ID metrics on the test split
    let test_indices: Vec<usize> = (0..data.test.len()).collect();
    let (confidences, predictions): (Vec<f64>, Vec<usize>) =
        exec::map_collect(&test_indices, |&i| {
            let probs = net
                .probabilities(&data.test.sample(i))
                .expect("dims validated");
            (
                probs.max_first(net.num_classes()),
                probs.argmax_first(net.num_classes()),
            )
        })
        .into_iter()
        .unzip();
    let id_accuracy = accuracy(&predictions, &data.test.labels)?;
    let correct: Vec<bool> = predictions
        .iter()
        .zip(&data.test.labels)
        .map(|(p, l)| p == l)
        .collect();
    let id_ece = ece(&confidences, &correct, 15)?;

    let mut detector_rows = Vec::new();
    for kind in &detectors {
        let id_scores = detector_scores(net, &data.test, kind, opts, knn_bank.as_ref(), klm.as_ref())?;
        for (set_name, ds) in &ood_sets {
            let ood_scores = detector_scores(net, ds, kind, opts, knn_bank.as_ref(), klm.as_ref())?;
            detector_rows.push((
                kind.name().to_string(),
                set_name.clone(),
                MetricsReport {
                    auroc: auroc(&id_scores, &ood_scores)?,
                    fpr95: fpr_at_tpr(&id_scores, &ood_scores, 0.95)?,
                    aupr: aupr(&id_scores, &ood_scores)?,
                    ece: id_ece,
                    accuracy: id_accuracy,
                },
            ));
        }
    }
    Ok(EvalRows {
        detector_rows,
        id_accuracy,
        id_ece,
    })
}

pub const EVAL_REQUIRED: &[&str] = &["seed", "dataset.kind", "model.hidden", "train.epochs", "ood.sets", "ood.detectors"];

pub fn run_eval_ood(
    cfg: &RunConfig,
    ckpt_path: &Path,
    out_csv: &Path,
    force: bool,
) -> Result<EvalRows, CliError> {
    cfg.require(EVAL_REQUIRED)?;
    let (net, ckpt_digest) = checkpoint::load(ckpt_path)?;
    if ckpt_digest != cfg.digest() {
        if force {
            eprintln!(
                "warning: checkpoint/config digest mismatch ({} vs current config); proceeding under --force",
                hex(&ckpt_digest)
            );
        } else {
            return Err(CliError::integrity(
                "checkpoint was trained under a different config (digest mismatch); pass --force to override",
            ));
        }
    }
    let mut data = build_dataset(cfg)?;
    let rows = evaluate(cfg, &net, &mut data)?;
    report::atomic_write(out_csv, &report::eval_csv(&rows)?)?;
    Ok(rows)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Two-component mixture for the theory runs: means split along the first
/// axis by `mean_distance` sigmas, isotropic `spread` covariance.
pub fn theory_spec(cfg: &RunConfig) -> Result<GaussianMixtureSpec, CliError> {
    let dim = cfg.usize_or("theory.dim", 2)?;
    if dim < 2 {
        return Err(CliError::config("theory.dim must be at least 2"));
    }
    let spread = cfg.f64_or("theory.spread", 0.4)?;
    let distance = cfg.f64_or("theory.mean_distance", 1.0)? * spread;
    let chol = diagonal(dim, spread);
    let mut mean_lo = vec![0.0; dim];
    mean_lo[0] = -distance / 2.0;
    let mut mean_hi = vec![0.0; dim];
    mean_hi[0] = distance / 2.0;
    Ok(GaussianMixtureSpec::new(vec![
        GmComponent {
            mean: Tensor::vector(mean_lo),
            chol_cov: chol.clone(),
            weight: 0.5,
            label: 1,
        },
        GmComponent {
            mean: Tensor::vector(mean_hi),
            chol_cov: chol,
            weight: 0.5,
            label: 2,
        },
    ])?)
}

pub const THEORY_REQUIRED: &[&str] = &["seed", "model.hidden", "train.epochs"];

/// Trains paired CE/unknown-aware models per seed and runs both insight
/// probes. Shared by `theory-sim` and the acceptance suite.
pub fn theory_run(cfg: &RunConfig) -> Result<TheoryRows, CliError> {
    cfg.require(THEORY_REQUIRED)?;
    let spec = theory_spec(cfg)?;
    let spread = cfg.f64_or("theory.spread", 0.4)?;
    let dim = spec.dim;
    let mut seeds = cfg.list_u64("theory.seeds")?;
    if seeds.is_empty() {
        seeds = vec![1, 2, 3];
    }
    let anchors_wanted = cfg.usize_or("theory.anchors", 20)?;
    let radius = cfg.f64_or("theory.radius", 0.3)?;
    let eta = cfg.f64_or("theory.eta", 0.05)?;
    let samples = cfg.usize_or("theory.samples", 400)?;
    let train_per_class = cfg.usize_or("theory.train_per_class", 1000)?;
    let val_per_class = cfg.usize_or("theory.val_per_class", 300)?;
    let ood_offset = cfg.f64_or("theory.ood_offset", 3.0)? * spread;
    let ood_n = cfg.usize_or("theory.ood_n", 500)?;

    let mut rows = TheoryRows {
        hard_id: Vec::new(),
        ood: Vec::new(),
    };
    for &seed in &seeds {
        let mut master = SeededRng::new(seed);
        let mut rng_train = master.split();
        let mut rng_eval = master.split();
        let mut rng_ball = master.split();
        let mut rng_ood = master.split();

        let train_set = synth_gm(&spec, train_per_class, &mut rng_train, "theory-train")?;
        let val_set = synth_gm(&spec, val_per_class, &mut rng_eval, "theory-val")?;

        let mut tc = train_config_from(cfg)?;
        tc.seed = seed;
        tc.loss_variant = LossVariant::Moon;
        let ce_tc = TrainConfig {
            loss_variant: LossVariant::CrossEntropy,
            ..tc.clone()
        };
        let moon_out = train(&tc, &train_set, &val_set)?;
        let ce_out = train(&ce_tc, &train_set, &val_set)?;
        let (moon_net, ce_net) = (moon_out.voted, ce_out.voted);

        // anchors at samples the CE model gets wrong, drawn in shuffled
        // order so both mixture components contribute
        let mut candidate_order: Vec<usize> = (0..val_set.len()).collect();
        rng_eval.shuffle(&mut candidate_order);
        let mut probes = Vec::new();
        for i in candidate_order {
            if probes.len() == anchors_wanted {
                break;
            }
            let x = val_set.sample(i);
            if ce_net.predict(&x)? != val_set.labels[i] {
                probes.push(UnreliabilityProbe {
                    anchor: x,
                    radius,
                    threshold: eta,
                    samples,
                });
            }
        }
        if probes.is_empty() {
            return Err(CliError::config(
                "no misclassified anchors found; increase overlap or validation size",
            ));
        }
        let hard = insight_check_hard_id(&ce_net, &moon_net, &spec, &probes, &mut rng_ball)?;
        rows.hard_id.push((seed, hard));

        // unseen third component off the class axis
        let mut ood_mean = vec![0.0; dim];
        ood_mean[1] = ood_offset;
        let ood_mean = Tensor::vector(ood_mean);
        let chol = diagonal(dim, spread);
        let ood_samples: Vec<Tensor> = (0..ood_n)
            .map(|_| gaussian_sample(&mut rng_ood, &ood_mean, &chol))
            .collect::<moon_core::Result<_>>()?;
        rows.ood
            .push((seed, insight_check_ood(&ce_net, &moon_net, &ood_samples)?));
    }
    Ok(rows)
}

pub fn run_theory_sim(cfg: &RunConfig, out_csv: &Path) -> Result<TheoryRows, CliError> {
    let rows = theory_run(cfg)?;
    report::atomic_write(out_csv, &report::theory_csv(&rows)?)?;
    Ok(rows)
}

pub const EXPORT_REQUIRED: &[&str] = &["seed", "dataset.kind"];

pub fn run_export_features(
    ckpt_path: &Path,
    data_cfg: &RunConfig,
    out_csv: &Path,
) -> Result<usize, CliError> {
    data_cfg.require(EXPORT_REQUIRED)?;
    let (net, _) = checkpoint::load(ckpt_path)?;
    let data = build_dataset(data_cfg)?;
    let ds = match data_cfg.str_or("dataset.export_split", "test") {
        "train" => &data.train,
        "val" => &data.val,
        "test" => &data.test,
        other => {
            return Err(CliError::config(format!(
                "dataset.export_split must be train, val, or test, got {:?}",
                other
            )))
        }
    };
    if net.input_dim() != ds.dim() {
        return Err(CliError::config(format!(
            "checkpoint expects input dim {}, dataset provides {}",
            net.input_dim(),
            ds.dim()
        )));
    }
    let features = penultimate_features(&net, ds);
    let rows: Vec<Vec<f64>> = features.into_iter().map(|t| t.data().to_vec()).collect();
    report::atomic_write(out_csv, &report::features_csv(&rows, &ds.labels)?)?;
    Ok(ds.len())
}
