//! Dataset ingestion: the manifest-driven image corpus, the synthetic
//! spectrally-separable stand-in dataset, and stratified splitting.

pub mod image;

use crate::checkpoint::{Checkpoint, Dtype};
use crate::error::{Error, Result};
use crate::frequency::idct2d_tensor;
use crate::rng::RngState;
use crate::tensor::Tensor;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

/// Which label set a manifest is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    /// Canonical label names, index order fixed. Binary: benign = 0,
    /// malignant = 1 (the positive class). Multiclass: the eight tumor
    /// subtypes in their table order.
    pub fn labels(&self) -> &'static [&'static str] {
        match self {
            Task::Binary => &["benign", "malignant"],
            Task::Multiclass => &["FA", "TA", "PT", "AD", "DC", "PC", "LC", "MC"],
        }
    }

    pub fn classes(&self) -> usize {
        self.labels().len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels()
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
    }
}

pub const MAGNIFICATIONS: [u32; 4] = [40, 100, 200, 400];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub label: usize,
    pub magnification: u32,
    pub split: Split,
}

/// Validated image manifest with per-class, per-magnification counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub task: Task,
    pub rows: Vec<ManifestRow>,
    /// (label index, magnification) -> image count.
    pub counts: BTreeMap<(usize, u32), u64>,
}

impl Manifest {
    pub fn count(&self, label: usize, magnification: u32) -> u64 {
        *self.counts.get(&(label, magnification)).unwrap_or(&0)
    }

    pub fn class_total(&self, label: usize) -> u64 {
        self.counts
            .iter()
            .filter(|((l, _), _)| *l == label)
            .map(|(_, c)| c)
            .sum()
    }

    /// Per-class-per-magnification count table.
    pub fn summary(&self) -> String {
        let mut s = String::from("label");
        for m in MAGNIFICATIONS {
            let _ = write!(s, " {:>6}", format!("{m}x"));
        }
        let _ = writeln!(s, " {:>6}", "all");
        for (i, name) in self.task.labels().iter().enumerate() {
            let _ = write!(s, "{name:<5}");
            for m in MAGNIFICATIONS {
                let _ = write!(s, " {:>6}", self.count(i, m));
            }
            let _ = writeln!(s, " {:>6}", self.class_total(i));
        }
        let _ = writeln!(s, "total rows: {}", self.rows.len());
        s
    }
}

pub const MANIFEST_HEADER: &str = "path,label,magnification,split";

/// Parse and validate a manifest CSV. Every malformed input yields a
/// row-addressed error (1-based file line numbers, header included); a
/// valid file with no data rows is rejected as empty.
pub fn load_manifest(path: &Path, task: Task) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(&text, task)
}

pub fn parse_manifest(text: &str, task: Task) -> Result<Manifest> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                row: 1,
                message: format!("header must be exactly '{MANIFEST_HEADER}', got '{header}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                row: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    let mut counts: BTreeMap<(usize, u32), u64> = BTreeMap::new();
    let mut seen_paths: HashSet<String> = HashSet::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based file line number
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                row,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let path = fields[0].trim().to_string();
        if path.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty path".into(),
            });
        }
        if !seen_paths.insert(path.clone()) {
            return Err(Error::Parse {
                row,
                message: format!("duplicate path '{path}'"),
            });
        }
        let label = task.label_index(fields[1].trim()).ok_or_else(|| Error::Parse {
            row,
            message: format!(
                "unknown label '{}' for task labels {:?}",
                fields[1].trim(),
                task.labels()
            ),
        })?;
        let magnification: u32 = fields[2].trim().parse().map_err(|_| Error::Parse {
            row,
            message: format!("bad magnification '{}'", fields[2].trim()),
        })?;
        if !MAGNIFICATIONS.contains(&magnification) {
            return Err(Error::Parse {
                row,
                message: format!(
                    "magnification {magnification} not in {MAGNIFICATIONS:?}"
                ),
            });
        }
        let split = match fields[3].trim() {
            "train" => Split::Train,
            "val" => Split::Val,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("split must be train or val, got '{other}'"),
                })
            }
        };
        *counts.entry((label, magnification)).or_insert(0) += 1;
        rows.push(ManifestRow {
            path,
            label,
            magnification,
            split,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "manifest has no data rows".into(),
        });
    }
    Ok(Manifest { task, rows, counts })
}

/// One labeled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

/// Indexed access to labeled examples. Manifest-backed sources decode
/// images on demand so a full-size corpus never has to fit in memory.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn get(&self, idx: usize) -> Result<Sample>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }
    fn get(&self, idx: usize) -> Result<Sample> {
        Ok(self[idx].clone())
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }
    fn get(&self, idx: usize) -> Result<Sample> {
        Ok(self[idx].clone())
    }
}

/// Lazily decoded manifest rows, resolved against the manifest's directory
/// and resized to the model input.
pub struct ManifestSource {
    pub rows: Vec<ManifestRow>,
    pub root: std::path::PathBuf,
    pub target: (usize, usize),
}

impl ManifestSource {
    /// Rows filtered to one split (and optionally one magnification).
    pub fn from_manifest(
        manifest: &Manifest,
        manifest_path: &Path,
        target: (usize, usize),
        split: Option<Split>,
        magnification: Option<u32>,
    ) -> ManifestSource {
        let root = manifest_path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_default();
        let rows = manifest
            .rows
            .iter()
            .filter(|r| split.map_or(true, |s| r.split == s))
            .filter(|r| magnification.map_or(true, |m| r.magnification == m))
            .cloned()
            .collect();
        ManifestSource { rows, root, target }
    }
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.rows.len()
    }
    fn get(&self, idx: usize) -> Result<Sample> {
        let row = &self.rows[idx];
        let path = self.root.join(&row.path);
        Ok(Sample {
            image: image::load_image(&path, self.target)?,
            label: row.label,
        })
    }
}

/// Synthetic dataset shape: classes separable by spectral content.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    /// 2 or 8.
    pub classes: usize,
    pub n_per_class: usize,
    /// Square image side length.
    pub size: usize,
}

/// Radial frequency band (lo, hi) assigned to a class, in normalized
/// radius sqrt((u/M)^2 + (v/N)^2). Bands are disjoint and low enough to
/// survive the r = 2 low-pass crop.
pub fn class_band(classes: usize, class: usize) -> (f64, f64) {
    let width = if classes <= 2 { 0.07 } else { 0.04 };
    let span = 0.30;
    let step = if classes > 1 {
        span / (classes - 1) as f64
    } else {
        0.0
    };
    let center = 0.12 + class as f64 * step;
    (center - width / 2.0, center + width / 2.0)
}

/// Generate the labeled synthetic dataset: class i is band-limited noise
/// concentrated in its radial frequency band plus unlabeled blob
/// structures, normalized to [0, 1]. Deterministic in the RNG state.
pub fn synth_dataset(rng: &mut RngState, spec: &SynthSpec) -> Result<Vec<Sample>> {
    if spec.classes != 2 && spec.classes != 8 {
        return Err(Error::Input(format!(
            "synth_dataset: classes must be 2 or 8, got {}",
            spec.classes
        )));
    }
    if spec.n_per_class == 0 || spec.size == 0 {
        return Err(Error::Input("synth_dataset: empty shape".into()));
    }
    let s = spec.size;
    let mut out = Vec::with_capacity(spec.classes * spec.n_per_class);
    for class in 0..spec.classes {
        let (lo, hi) = class_band(spec.classes, class);
        for _ in 0..spec.n_per_class {
            // band-limited noise in the class band, built in DCT space
            let mut coeffs = Tensor::zeros(&[1, s, s]);
            for u in 0..s {
                for v in 0..s {
                    let rho = ((u as f64 / s as f64).powi(2) + (v as f64 / s as f64).powi(2))
                        .sqrt();
                    if rho >= lo && rho < hi {
                        coeffs.set3(0, u, v, rng.normal());
                    }
                }
            }
            let band = idct2d_tensor(&coeffs)?;

            // blob structures shared across classes
            let n_blobs = 2 + (rng.next_u64() % 3) as usize;
            let mut blobs = Tensor::zeros(&[1, s, s]);
            for _ in 0..n_blobs {
                let cy = rng.uniform(0.0, s as f64);
                let cx = rng.uniform(0.0, s as f64);
                let sigma = rng.uniform(s as f64 / 16.0, s as f64 / 8.0);
                let amp = rng.uniform(0.1, 0.25);
                for i in 0..s {
                    for j in 0..s {
                        let d2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
                        let v = blobs.at3(0, i, j) + amp * (-d2 / (2.0 * sigma * sigma)).exp();
                        blobs.set3(0, i, j, v);
                    }
                }
            }

            // replicate to 3 channels with slight per-channel gain
            let mut image = Tensor::zeros(&[3, s, s]);
            for c in 0..3 {
                let gain = 1.0 + 0.1 * rng.normal();
                for i in 0..s {
                    for j in 0..s {
                        image.set3(c, i, j, gain * band.at3(0, i, j) + blobs.at3(0, i, j));
                    }
                }
            }
            // normalize jointly to [0, 1]
            let min = image.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let max = image.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = (max - min).max(1e-9);
            let image = image.map(|v| (v - min) / range);
            out.push(Sample {
                image,
                label: class,
            });
        }
    }
    Ok(out)
}

/// Per-class shuffled split into (train indices, val indices).
pub fn stratified_split(
    samples: &[Sample],
    classes: usize,
    train_fraction: f64,
    rng: &mut RngState,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..classes {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut idx);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..n_train.min(idx.len())]);
        val.extend_from_slice(&idx[n_train.min(idx.len())..]);
    }
    (train, val)
}

/// Dump a dataset in the checkpoint tensor format (fixture interchange).
pub fn dataset_to_checkpoint(samples: &[Sample]) -> Checkpoint {
    let mut ckpt = Checkpoint::new();
    for (i, s) in samples.iter().enumerate() {
        ckpt.push(format!("image/{i:05}"), Dtype::F64, s.image.clone());
        ckpt.push(
            format!("label/{i:05}"),
            Dtype::F64,
            Tensor::new(vec![1], vec![s.label as f64]).expect("scalar"),
        );
    }
    ckpt
}

/// Inverse of [`dataset_to_checkpoint`].
pub fn dataset_from_checkpoint(ckpt: &Checkpoint) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let img = ckpt.get(&format!("image/{i:05}"));
        let lab = ckpt.get(&format!("label/{i:05}"));
        match (img, lab) {
            (Some(img), Some(lab)) => {
                out.push(Sample {
                    image: img.clone(),
                    label: lab.data()[0] as usize,
                });
                i += 1;
            }
            (None, None) => break,
            _ => {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("dataset checkpoint: image/label pair {i} incomplete"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Input("dataset checkpoint holds no samples".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::dct2d_tensor;

    #[test]
    fn manifest_rejects_empty_data_section() {
        let err = parse_manifest("path,label,magnification,split\n", Task::Binary).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn manifest_two_valid_rows() {
        let text = "path,label,magnification,split\n\
                    a.png,benign,40,train\n\
                    b.png,malignant,400,val\n";
        let m = parse_manifest(text, Task::Binary).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.count(0, 40), 1);
        assert_eq!(m.count(1, 400), 1);
        assert_eq!(m.class_total(0), 1);
    }

    #[test]
    fn manifest_errors_carry_row_numbers() {
        let dup = "path,label,magnification,split\na.png,benign,40,train\na.png,benign,40,val\n";
        match parse_manifest(dup, Task::Binary) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 3);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad_label = "path,label,magnification,split\na.png,weird,40,train\n";
        match parse_manifest(bad_label, Task::Binary) {
            Err(Error::Parse { row: 2, message }) => {
                assert!(message.contains("unknown label"), "{message}")
            }
            other => panic!("{other:?}"),
        }
        let bad_mag = "path,label,magnification,split\na.png,benign,60,train\n";
        assert!(matches!(
            parse_manifest(bad_mag, Task::Binary),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn multiclass_labels_accept_table_codes() {
        let text = "path,label,magnification,split\na.png,FA,40,train\nb.png,mc,200,val\n";
        let m = parse_manifest(text, Task::Multiclass).unwrap();
        assert_eq!(m.rows[0].label, 0);
        assert_eq!(m.rows[1].label, 7);
    }

    #[test]
    fn synth_dataset_counts_and_balance() {
        let mut rng = RngState::new(1);
        let samples = synth_dataset(
            &mut rng,
            &SynthSpec {
                classes: 2,
                n_per_class: 100,
                size: 16,
            },
        )
        .unwrap();
        assert_eq!(samples.len(), 200);
        assert_eq!(samples.iter().filter(|s| s.label == 0).count(), 100);
        for s in &samples {
            assert_eq!(s.image.shape(), &[3, 16, 16]);
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn synth_dataset_is_deterministic() {
        let spec = SynthSpec {
            classes: 2,
            n_per_class: 3,
            size: 16,
        };
        let a = synth_dataset(&mut RngState::new(9), &spec).unwrap();
        let b = synth_dataset(&mut RngState::new(9), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_classes_are_spectrally_separated() {
        let classes = 2;
        let spec = SynthSpec {
            classes,
            n_per_class: 12,
            size: 32,
        };
        let mut rng = RngState::new(4);
        let samples = synth_dataset(&mut rng, &spec).unwrap();
        // measure per-band mean energy with the tested transform
        let band_energy = |img: &Tensor, band: (f64, f64)| -> f64 {
            let spec_t = dct2d_tensor(img).unwrap();
            let s = img.shape()[1];
            let mut acc = 0.0;
            let mut count = 0u64;
            for c in 0..img.shape()[0] {
                for u in 0..s {
                    for v in 0..s {
                        let rho = ((u as f64 / s as f64).powi(2)
                            + (v as f64 / s as f64).powi(2))
                        .sqrt();
                        if rho >= band.0 && rho < band.1 {
                            acc += spec_t.at3(c, u, v).powi(2);
                            count += 1;
                        }
                    }
                }
            }
            acc / count as f64
        };
        for class in 0..classes {
            let own_band = class_band(classes, class);
            let mut own = 0.0;
            let mut other = 0.0f64;
            let mut n = 0;
            for s in samples.iter().filter(|s| s.label == class) {
                own += band_energy(&s.image, own_band);
                for oc in 0..classes {
                    if oc != class {
                        other = other.max(band_energy(&s.image, class_band(classes, oc)));
                    }
                }
                n += 1;
            }
            own /= n as f64;
            assert!(
                own >= 3.0 * other,
                "class {class}: own band {own} not 3x above strongest other {other}"
            );
        }
    }

    #[test]
    fn stratified_split_respects_fraction_per_class() {
        let mut rng = RngState::new(2);
        let samples = synth_dataset(
            &mut rng,
            &SynthSpec {
                classes: 2,
                n_per_class: 150,
                size: 8,
            },
        )
        .unwrap();
        let (train, val) = stratified_split(&samples, 2, 2.0 / 3.0, &mut rng);
        assert_eq!(train.len(), 200);
        assert_eq!(val.len(), 100);
        for class in 0..2 {
            let t = train.iter().filter(|&&i| samples[i].label == class).count();
            assert_eq!(t, 100);
        }
    }

    #[test]
    fn dataset_checkpoint_roundtrip() {
        let mut rng = RngState::new(3);
        let samples = synth_dataset(
            &mut rng,
            &SynthSpec {
                classes: 2,
                n_per_class: 2,
                size: 8,
            },
        )
        .unwrap();
        let ckpt = dataset_to_checkpoint(&samples);
        let back = dataset_from_checkpoint(&ckpt).unwrap();
        assert_eq!(back, samples);
    }
}
