//! CSV report writers and atomic file output.
//!
//! Every CSV gets a header row with a stable column order; numbers are
//! written in Rust's shortest round-trip form. Files land via temp + rename
//! in the target directory.

use std::path::Path;

use moon_core::metrics::MetricsReport;
use moon_core::theory::{HardIdRow, OodConfidenceReport};
use moon_core::trainer::EpochLog;

use crate::CliError;

/// Writes through a temp file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.map(|p| p.to_path_buf()).unwrap_or_else(|| ".".into());
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::other(format!("temp file in {}: {}", dir.display(), e)))?;
    use std::io::Write;
    tmp.write_all(bytes)
        .map_err(|e| CliError::other(format!("write {}: {}", path.display(), e)))?;
    tmp.persist(path)
        .map_err(|e| CliError::other(format!("rename into {}: {}", path.display(), e)))?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{}", v)
}

/// Whether measured wall times go into epoch_log.csv. Off by default so the
/// training artifacts are bit-reproducible; set `MOON_TIMING=1` to record
/// real timings (in-memory logs always carry them).
pub fn timing_enabled() -> bool {
    std::env::var("MOON_TIMING").map(|v| v == "1").unwrap_or(false)
}

pub fn epoch_log_csv(logs: &[EpochLog]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_acc", "w", "sparsity", "wall_ms", "flops"])
        .map_err(|e| CliError::other(e.to_string()))?;
    let timing = timing_enabled();
    for log in logs {
        w.write_record([
            log.epoch.to_string(),
            fmt(log.train_loss),
            fmt(log.val_accuracy),
            fmt(log.w),
            fmt(log.sparsity_actual),
            if timing { fmt(log.wall_ms) } else { "0".to_string() },
            fmt(log.flops_estimate),
        ])
        .map_err(|e| CliError::other(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::other(e.to_string()))
}

/// One row per detector and OOD set, plus a trailing `id-metrics` row
/// carrying accuracy and ECE of the checkpoint on the ID test split.
pub struct EvalRows {
    pub detector_rows: Vec<(String, String, MetricsReport)>,
    pub id_accuracy: f64,
    pub id_ece: f64,
}

pub fn eval_csv(rows: &EvalRows) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["detector", "ood_set", "auroc", "fpr95", "aupr", "accuracy", "ece"])
        .map_err(|e| CliError::other(e.to_string()))?;
    for (detector, ood_set, m) in &rows.detector_rows {
        w.write_record([
            detector.clone(),
            ood_set.clone(),
            fmt(m.auroc),
            fmt(m.fpr95),
            fmt(m.aupr),
            String::new(),
            String::new(),
        ])
        .map_err(|e| CliError::other(e.to_string()))?;
    }
    w.write_record([
        "id-metrics".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fmt(rows.id_accuracy),
        fmt(rows.id_ece),
    ])
    .map_err(|e| CliError::other(e.to_string()))?;
    w.into_inner().map_err(|e| CliError::other(e.to_string()))
}

/// Theory-sim rows: `hard-id` rows carry paired gap estimates per anchor,
/// `ood` rows carry mean max-first-K confidences on the unseen component.
pub struct TheoryRows {
    pub hard_id: Vec<(u64, Vec<HardIdRow>)>,
    pub ood: Vec<(u64, OodConfidenceReport)>,
}

pub fn theory_csv(rows: &TheoryRows) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "seed",
        "kind",
        "anchor",
        "gap_ce",
        "gap_moon",
        "model_gap_ce",
        "model_gap_moon",
        "unknown_ce",
        "unknown_moon",
        "density_flag",
        "msp_ce",
        "msp_moon",
    ])
    .map_err(|e| CliError::other(e.to_string()))?;
    for (seed, anchors) in &rows.hard_id {
        for row in anchors {
            w.write_record([
                seed.to_string(),
                "hard-id".to_string(),
                row.anchor_index.to_string(),
                fmt(row.ce.gap),
                fmt(row.moon.gap),
                fmt(row.ce.model_gap),
                fmt(row.moon.model_gap),
                fmt(row.ce.unknown_mean),
                fmt(row.moon.unknown_mean),
                (row.ce.density_exceeded_one || row.moon.density_exceeded_one).to_string(),
                String::new(),
                String::new(),
            ])
            .map_err(|e| CliError::other(e.to_string()))?;
        }
    }
    for (seed, report) in &rows.ood {
        w.write_record([
            seed.to_string(),
            "ood".to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            fmt(report.msp_ce_mean),
            fmt(report.msp_moon_mean),
        ])
        .map_err(|e| CliError::other(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::other(e.to_string()))
}

/// Penultimate features, one row per sample, label last.
pub fn features_csv(features: &[Vec<f64>], labels: &[usize]) -> Result<Vec<u8>, CliError> {
    let width = features.first().map_or(0, |f| f.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..width).map(|i| format!("f{}", i)).collect();
    header.push("label".to_string());
    w.write_record(&header)
        .map_err(|e| CliError::other(e.to_string()))?;
    for (f, &l) in features.iter().zip(labels) {
        let mut row: Vec<String> = f.iter().map(|&v| fmt(v)).collect();
        row.push(l.to_string());
        w.write_record(&row)
            .map_err(|e| CliError::other(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::other(e.to_string()))
}
