//! Sparse mask lifecycle: ERK initialization, cosine-decayed prune/grow
//! fractions, and the SET/RigL update step.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Packed row-major bit matrix; bit `(i, j)` lives at flat index
/// `i * cols + j`, LSB-first within each 64-bit word.
#[derive(Debug, Clone, PartialEq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self {
            rows,
            cols,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for idx in 0..rows * cols {
            m.set_flat(idx, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_flat(&self, idx: usize) -> bool {
        debug_assert!(idx < self.len());
        (self.words[idx / 64] >> (idx % 64)) & 1 == 1
    }

    pub fn set_flat(&mut self, idx: usize, value: bool) {
        debug_assert!(idx < self.len());
        let (w, b) = (idx / 64, idx % 64);
        if value {
            self.words[w] |= 1 << b;
        } else {
            self.words[w] &= !(1 << b);
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.get_flat(i * self.cols + j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.set_flat(i * self.cols + j, value);
    }

    /// Exact nonzero count.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Flat indices of set bits, ascending.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.get_flat(i)).collect()
    }

    /// Flat indices of clear bits, ascending.
    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.get_flat(i)).collect()
    }

    /// Cheap order-sensitive fingerprint (FNV-1a over the packed words).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &w in &self.words {
            for byte in w.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Prune/grow criterion pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsityMethod {
    /// Grow uniformly at random among inactive slots.
    Set,
    /// Grow at the largest-|gradient| inactive slots.
    Rigl,
}

/// When and how much of the topology is rewired.
#[derive(Debug, Clone)]
pub struct TopologySchedule {
    /// Fraction of active weights rewired at t = 0.
    pub initial_fraction: f64,
    /// Fraction of total epochs after which the topology freezes.
    pub freeze_point: f64,
    /// Iterations between mask updates.
    pub update_interval: usize,
    pub method: SparsityMethod,
    /// Global sparsity (fraction of zero weights); 0 means dense.
    pub global_sparsity: f64,
}

impl TopologySchedule {
    /// Rewiring fraction at (possibly fractional) epoch `t`:
    /// `f0/2 * (1 + cos(pi * t / (freeze_point * total)))` before the freeze
    /// point, exactly zero at and after it.
    pub fn fraction_at(&self, t: f64, total_epochs: usize) -> f64 {
        let freeze = self.freeze_point * total_epochs as f64;
        if t >= freeze {
            return 0.0;
        }
        self.initial_fraction / 2.0 * (1.0 + (std::f64::consts::PI * t / freeze).cos())
    }

    pub fn frozen_at(&self, t: f64, total_epochs: usize) -> bool {
        t >= self.freeze_point * total_epochs as f64
    }
}

/// Per-layer masks from the Erdős–Rényi-kernel allocation.
///
/// Layer density is proportional to `(n_in + n_out) / (n_in * n_out)`,
/// scaled so the global nonzero count equals `round((1 - s) * total)`
/// exactly; layers whose raw density would exceed one are clamped dense and
/// the scale re-solved on the rest. Positions are chosen uniformly per layer.
pub fn erk_init(
    layer_dims: &[(usize, usize)],
    global_sparsity: f64,
    rng: &mut SeededRng,
) -> Result<Vec<BitMatrix>> {
    if !(0.0..1.0).contains(&global_sparsity) {
        return Err(Error::Config(format!(
            "global sparsity must be in [0, 1), got {}",
            global_sparsity
        )));
    }
    let params: Vec<usize> = layer_dims.iter().map(|&(o, i)| o * i).collect();
    let total: usize = params.iter().sum();
    let target = ((1.0 - global_sparsity) * total as f64).round() as usize;
    if target == 0 {
        return Err(Error::Config(format!(
            "sparsity {} leaves no nonzero weights",
            global_sparsity
        )));
    }

    // Solve the shared scale, clamping saturated layers to dense.
    let scores: Vec<f64> = layer_dims
        .iter()
        .map(|&(o, i)| (o + i) as f64 / (o * i) as f64)
        .collect();
    let mut dense = vec![false; layer_dims.len()];
    let densities: Vec<f64> = loop {
        let dense_count: usize = dense
            .iter()
            .zip(&params)
            .filter(|(d, _)| **d)
            .map(|(_, p)| p)
            .sum();
        let rest_target = target as f64 - dense_count as f64;
        let rest_mass: f64 = scores
            .iter()
            .zip(&params)
            .zip(&dense)
            .filter(|(_, d)| !**d)
            .map(|((s, p), _)| s * *p as f64)
            .sum();
        if rest_mass == 0.0 {
            break scores
                .iter()
                .zip(&dense)
                .map(|(_, &d)| if d { 1.0 } else { 0.0 })
                .collect();
        }
        let eps = rest_target / rest_mass;
        let mut clamped = false;
        for l in 0..scores.len() {
            if !dense[l] && scores[l] * eps > 1.0 {
                dense[l] = true;
                clamped = true;
            }
        }
        if !clamped {
            break scores
                .iter()
                .zip(&dense)
                .map(|(&s, &d)| if d { 1.0 } else { s * eps })
                .collect();
        }
    };

    // Per-layer rounding, then repair the total on the slackest layers so
    // the global count is exact.
    let mut counts: Vec<usize> = densities
        .iter()
        .zip(&params)
        .map(|(&d, &p)| ((d * p as f64).round() as usize).min(p))
        .collect();
    let mut diff = target as i64 - counts.iter().sum::<usize>() as i64;
    while diff != 0 {
        let mut adjusted = false;
        for l in 0..counts.len() {
            if diff > 0 && counts[l] < params[l] {
                counts[l] += 1;
                diff -= 1;
                adjusted = true;
            } else if diff < 0 && counts[l] > 1 {
                counts[l] -= 1;
                diff += 1;
                adjusted = true;
            }
            if diff == 0 {
                break;
            }
        }
        if !adjusted {
            return Err(Error::Config(
                "no feasible ERK allocation for the requested sparsity".into(),
            ));
        }
    }

    let mut masks = Vec::with_capacity(layer_dims.len());
    for (l, &(o, i)) in layer_dims.iter().enumerate() {
        let mut mask = BitMatrix::zeros(o, i);
        let mut slots: Vec<usize> = (0..o * i).collect();
        rng.shuffle(&mut slots);
        for &idx in slots.iter().take(counts[l]) {
            mask.set_flat(idx, true);
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// What a mask update actually did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneGrowReport {
    /// Weights rewired per layer.
    pub rewired: Vec<usize>,
    /// Requested minus performed rewires, summed over layers (nonzero only
    /// when a layer ran out of inactive slots).
    pub shortfall: usize,
}

/// One prune/grow step over every layer, in place.
///
/// Per layer: `k = round(f * nonzeros)` capped by the number of inactive
/// slots; the `k` smallest-|weight| active entries are pruned (mask and
/// weight zeroed) and `k` inactive slots are grown at zero — uniformly at
/// random for SET, by largest |dense gradient| for RigL. Grow candidates are
/// the slots inactive before the update, so nothing pruned this step regrows
/// immediately and per-layer nonzero counts never change. Ties in either
/// ordering break on the lower flat index.
pub fn prune_grow(
    weights: &mut [Tensor],
    masks: &mut [BitMatrix],
    method: SparsityMethod,
    fraction: f64,
    dense_grads: Option<&[Tensor]>,
    rng: &mut SeededRng,
) -> Result<PruneGrowReport> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Precondition(format!(
            "prune fraction must be in [0, 1], got {}",
            fraction
        )));
    }
    if method == SparsityMethod::Rigl && dense_grads.is_none() && fraction > 0.0 {
        return Err(Error::Precondition(
            "RigL growth requires dense gradients".into(),
        ));
    }
    let mut report = PruneGrowReport {
        rewired: vec![0; weights.len()],
        shortfall: 0,
    };
    if fraction == 0.0 {
        return Ok(report);
    }

    for l in 0..weights.len() {
        let mask = &mut masks[l];
        let weight = &mut weights[l];
        let active = mask.active_indices();
        let inactive = mask.inactive_indices();
        let k_requested = (fraction * active.len() as f64).round() as usize;
        let k = k_requested.min(inactive.len());
        report.shortfall += k_requested - k;
        report.rewired[l] = k;
        if k == 0 {
            continue;
        }

        // Prune: smallest |magnitude| first, ties by flat index.
        let mut by_magnitude: Vec<usize> = active;
        by_magnitude.sort_by(|&a, &b| {
            let (ma, mb) = (weight.data()[a].abs(), weight.data()[b].abs());
            ma.partial_cmp(&mb).unwrap().then(a.cmp(&b))
        });
        for &idx in by_magnitude.iter().take(k) {
            mask.set_flat(idx, false);
            weight.data_mut()[idx] = 0.0;
        }

        // Grow among slots that were inactive before this update.
        let grown: Vec<usize> = match method {
            SparsityMethod::Set => {
                let mut slots = inactive;
                rng.shuffle(&mut slots);
                slots.truncate(k);
                slots
            }
            SparsityMethod::Rigl => {
                let grads = &dense_grads.unwrap()[l];
                if grads.shape() != weight.shape() {
                    return Err(Error::Dimension(format!(
                        "gradient shape {:?} vs weight shape {:?} in layer {}",
                        grads.shape(),
                        weight.shape(),
                        l
                    )));
                }
                let mut slots = inactive;
                slots.sort_by(|&a, &b| {
                    let (ga, gb) = (grads.data()[a].abs(), grads.data()[b].abs());
                    gb.partial_cmp(&ga).unwrap().then(a.cmp(&b))
                });
                slots.truncate(k);
                slots
            }
        };
        for idx in grown {
            mask.set_flat(idx, true);
            weight.data_mut()[idx] = 0.0;
        }
    }
    Ok(report)
}
