//! Dataset ingestion: IDX image/label files (plain or gzipped), synthetic
//! Gaussian-mixture generation, OOD stand-in construction, and splitting.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{gaussian_sample, SeededRng};
use crate::tensor::Tensor;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Immutable labeled dataset; labels are 1-based class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `N x d`, row-major; image data scaled to `[0, 1]`.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} inputs vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if labels.contains(&0) {
            return Err(Error::Label("labels are 1-based".into()));
        }
        Ok(Self {
            inputs,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Largest label value present.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn sample(&self, i: usize) -> Tensor {
        let d = self.dim();
        Tensor::vector(self.inputs.data()[i * d..(i + 1) * d].to_vec())
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs.data()[i * d..(i + 1) * d]);
            labels.push(self.labels[i]);
        }
        Dataset {
            inputs: Tensor::new(vec![indices.len(), d], data).unwrap(),
            labels,
            name: name.into(),
        }
    }

    /// Seeded disjoint split; the two halves cover the input exactly once.
    pub fn split(&self, second_fraction: f64, rng: &mut SeededRng) -> (Dataset, Dataset) {
        let n = self.len();
        let second = ((second_fraction * n as f64).round() as usize).min(n);
        let mut indices: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut indices);
        let (rest, taken) = indices.split_at(n - second);
        (
            self.subset(rest, format!("{}-a", self.name)),
            self.subset(taken, format!("{}-b", self.name)),
        )
    }

    /// Per-dimension `(min, max)` over all samples.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let d = self.dim();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for i in 0..self.len() {
            for j in 0..d {
                let v = self.inputs.at(i, j);
                if v < bounds[j].0 {
                    bounds[j].0 = v;
                }
                if v > bounds[j].1 {
                    bounds[j].1 = v;
                }
            }
        }
        bounds
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    if bytes.len() < offset + 4 {
        return Err(Error::Length(format!(
            "file ends before the {} field at byte {}",
            what, offset
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Parses an IDX image/label pair. Pixels are scaled by 1/255 and labels
/// remapped from 0-based bytes to 1-based classes. Gzip-compressed files are
/// detected by their magic and decompressed first.
pub fn parse_idx(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let images = maybe_gunzip(std::fs::read(image_path)?)?;
    let labels = maybe_gunzip(std::fs::read(label_path)?)?;
    parse_idx_bytes(&images, &labels, image_path.display().to_string())
}

pub fn parse_idx_bytes(images: &[u8], labels: &[u8], name: impl Into<String>) -> Result<Dataset> {
    let magic = read_be_u32(images, 0, "image magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format {
            msg: format!(
                "image magic {:#010x}, expected {:#010x}",
                magic, IDX_IMAGE_MAGIC
            ),
            offset: 0,
        });
    }
    let count = read_be_u32(images, 4, "image count")? as usize;
    let rows = read_be_u32(images, 8, "image rows")? as usize;
    let cols = read_be_u32(images, 12, "image cols")? as usize;
    let pixel_count = count * rows * cols;
    if images.len() < 16 + pixel_count {
        return Err(Error::Length(format!(
            "image file holds {} pixel bytes, header promises {}",
            images.len().saturating_sub(16),
            pixel_count
        )));
    }

    let lmagic = read_be_u32(labels, 0, "label magic")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::Format {
            msg: format!(
                "label magic {:#010x}, expected {:#010x}",
                lmagic, IDX_LABEL_MAGIC
            ),
            offset: 0,
        });
    }
    let lcount = read_be_u32(labels, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            count, lcount
        )));
    }
    if labels.len() < 8 + lcount {
        return Err(Error::Length(format!(
            "label file holds {} label bytes, header promises {}",
            labels.len().saturating_sub(8),
            lcount
        )));
    }

    let data: Vec<f64> = images[16..16 + pixel_count]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let label_vec: Vec<usize> = labels[8..8 + lcount].iter().map(|&b| b as usize + 1).collect();
    Dataset::new(
        Tensor::new(vec![count, rows * cols], data)?,
        label_vec,
        name,
    )
}

/// Serializes a dataset back to IDX bytes (`rows x cols` must multiply to
/// the input dimension). Pixel values round to the nearest byte, which makes
/// parse -> write -> parse lossless.
pub fn write_idx_bytes(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::Dimension(format!(
            "{}x{} does not match input dim {}",
            rows,
            cols,
            ds.dim()
        )));
    }
    let n = ds.len();
    let mut images = Vec::with_capacity(16 + n * rows * cols);
    images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in ds.inputs.data() {
        images.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for &l in &ds.labels {
        if l == 0 || l > 256 {
            return Err(Error::Label(format!("label {} not byte-representable", l)));
        }
        labels.push((l - 1) as u8);
    }
    Ok((images, labels))
}

/// One mixture component.
#[derive(Debug, Clone)]
pub struct GmComponent {
    pub mean: Tensor,
    /// Lower-triangular Cholesky factor of the covariance.
    pub chol_cov: Tensor,
    pub weight: f64,
    pub label: usize,
}

/// Gaussian-mixture description of an input (or feature) space.
#[derive(Debug, Clone)]
pub struct GaussianMixtureSpec {
    pub components: Vec<GmComponent>,
    pub dim: usize,
}

impl GaussianMixtureSpec {
    pub fn new(components: Vec<GmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        let dim = components[0].mean.len();
        for c in &components {
            if c.mean.len() != dim || c.chol_cov.shape() != [dim, dim] {
                return Err(Error::Dimension("component dims disagree".into()));
            }
            if c.weight <= 0.0 {
                return Err(Error::Config("component weights must be positive".into()));
            }
            if c.label == 0 {
                return Err(Error::Label("component labels are 1-based".into()));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "component weights sum to {}, expected 1",
                total
            )));
        }
        Ok(Self { components, dim })
    }

    /// Spec with every mean translated by `offset`.
    pub fn shifted(&self, offset: &Tensor) -> Result<GaussianMixtureSpec> {
        if offset.len() != self.dim {
            return Err(Error::Dimension("offset dim mismatch".into()));
        }
        let components = self
            .components
            .iter()
            .map(|c| {
                let mean = Tensor::vector(
                    c.mean
                        .data()
                        .iter()
                        .zip(offset.data())
                        .map(|(a, b)| a + b)
                        .collect(),
                );
                GmComponent {
                    mean,
                    chol_cov: c.chol_cov.clone(),
                    weight: c.weight,
                    label: c.label,
                }
            })
            .collect();
        GaussianMixtureSpec::new(components)
    }

    /// Density of one component at `x` (via the Cholesky factor).
    pub fn component_density(&self, c: usize, x: &Tensor) -> f64 {
        let comp = &self.components[c];
        let d = self.dim;
        let mut diff: Vec<f64> = x
            .data()
            .iter()
            .zip(comp.mean.data())
            .map(|(a, b)| a - b)
            .collect();
        // forward substitution: solve L z = diff
        let mut logdet = 0.0;
        for i in 0..d {
            let lii = comp.chol_cov.at(i, i);
            logdet += lii.ln();
            let mut acc = diff[i];
            for j in 0..i {
                acc -= comp.chol_cov.at(i, j) * diff[j];
            }
            diff[i] = acc / lii;
        }
        let quad: f64 = diff.iter().map(|z| z * z).sum();
        let log_norm = -(d as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() - logdet;
        (log_norm - 0.5 * quad).exp()
    }

    /// Largest component density at `x`.
    pub fn max_component_density(&self, x: &Tensor) -> f64 {
        (0..self.components.len())
            .map(|c| self.component_density(c, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Draws one `(sample, label)` pair: component by weight, then the
    /// component Gaussian.
    pub fn draw(&self, rng: &mut SeededRng) -> Result<(Tensor, usize)> {
        let u = rng.next_f64();
        let mut cum = 0.0;
        let mut chosen = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            cum += c.weight;
            if u < cum {
                chosen = i;
                break;
            }
        }
        let c = &self.components[chosen];
        Ok((gaussian_sample(rng, &c.mean, &c.chol_cov)?, c.label))
    }
}

/// `n` samples from every component, labeled by component, in component
/// order. Deterministic under the seed.
pub fn synth_gm(
    spec: &GaussianMixtureSpec,
    n_per_component: usize,
    rng: &mut SeededRng,
    name: impl Into<String>,
) -> Result<Dataset> {
    let d = spec.dim;
    let n = n_per_component * spec.components.len();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for c in &spec.components {
        for _ in 0..n_per_component {
            let s = gaussian_sample(rng, &c.mean, &c.chol_cov)?;
            data.extend_from_slice(s.data());
            labels.push(c.label);
        }
    }
    Dataset::new(Tensor::new(vec![n, d], data)?, labels, name)
}

/// Uniform samples over an axis-aligned box (the far-OOD stand-in). Labels
/// are a placeholder `1`.
pub fn make_ood_uniform(
    bounds: &[(f64, f64)],
    n: usize,
    rng: &mut SeededRng,
    name: impl Into<String>,
) -> Result<Dataset> {
    let d = bounds.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for &(lo, hi) in bounds {
            data.push(lo + (hi - lo) * rng.next_f64());
        }
    }
    Dataset::new(Tensor::new(vec![n, d], data)?, vec![1; n], name)
}

/// Splits the given classes out of a dataset: the first return keeps the
/// remaining classes with labels remapped to a contiguous `1..=K'` (original
/// order preserved), the second holds the ejected samples with their
/// original labels.
pub fn split_held_out(ds: &Dataset, held_out: &[usize]) -> Result<(Dataset, Dataset)> {
    for &c in held_out {
        if !ds.labels.contains(&c) {
            return Err(Error::Config(format!(
                "held-out class {} absent from {}",
                c, ds.name
            )));
        }
    }
    let mut kept_classes: Vec<usize> = (1..=ds.num_classes())
        .filter(|c| !held_out.contains(c))
        .collect();
    kept_classes.sort_unstable();
    if kept_classes.is_empty() {
        return Err(Error::Config("holding out every class".into()));
    }
    let remap = |label: usize| kept_classes.iter().position(|&c| c == label).map(|i| i + 1);

    let id_indices: Vec<usize> = (0..ds.len())
        .filter(|&i| !held_out.contains(&ds.labels[i]))
        .collect();
    let ood_indices: Vec<usize> = (0..ds.len())
        .filter(|&i| held_out.contains(&ds.labels[i]))
        .collect();
    let mut id = ds.subset(&id_indices, format!("{}-id", ds.name));
    for l in id.labels.iter_mut() {
        *l = remap(*l).unwrap();
    }
    let ood = ds.subset(&ood_indices, format!("{}-heldout", ds.name));
    Ok((id, ood))
}
