//! Labelled image collections: a directory of PGM/PPM files with a
//! `labels.csv`, or synthetic Gaussian-blob classes.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::pnm::{read_pnm, write_pnm};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    /// `(C, H, W)` in `[0, 1]`.
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    PpmDir,
    SyntheticBlobs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

/// Parameters of the synthetic blob dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 10,
            side: 16,
            seed: 7,
        }
    }
}

/// Where a dataset comes from: `synthetic:classes=3,per_class=10,side=16,seed=7`
/// (any subset of keys) or a directory path.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Dir(PathBuf),
    Synthetic(BlobSpec),
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("synthetic") else {
            return Ok(DatasetSource::Dir(PathBuf::from(s)));
        };
        let mut spec = BlobSpec::default();
        let rest = rest.trim_start_matches(':');
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad synthetic option `{kv}`")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::invalid(format!("bad value `{v}` for `{k}`")))
            };
            match k.trim() {
                "classes" => spec.classes = num(v)? as usize,
                "per_class" | "n" => spec.per_class = num(v)? as usize,
                "side" | "s" => spec.side = num(v)? as usize,
                "seed" => spec.seed = num(v)?,
                other => return Err(Error::invalid(format!("unknown synthetic option `{other}`"))),
            }
        }
        Ok(DatasetSource::Synthetic(spec))
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Dir(p) => write!(f, "{}", p.display()),
            DatasetSource::Synthetic(s) => write!(
                f,
                "synthetic:classes={},per_class={},side={},seed={}",
                s.classes, s.per_class, s.side, s.seed
            ),
        }
    }
}

impl Dataset {
    pub fn load(source: &DatasetSource) -> Result<Self> {
        match source {
            DatasetSource::Dir(p) => load_dir(p),
            DatasetSource::Synthetic(spec) => synthetic_blobs(spec),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.image.shape())
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.samples.iter().find(|s| s.label >= num_classes) {
            Some(s) => Err(Error::invalid(format!(
                "{}: label {} out of range for {num_classes} classes",
                s.name, s.label
            ))),
            None => Ok(()),
        }
    }

    /// `(image, label)` pairs for training.
    pub fn pairs(&self) -> Vec<(Tensor, usize)> {
        self.samples.iter().map(|s| (s.image.clone(), s.label)).collect()
    }

    /// Writes every sample as an 8-bit PGM/PPM plus `labels.csv`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let labels = dir.join("labels.csv");
        let mut w = csv::Writer::from_path(&labels)?;
        w.write_record(["filename", "label"])?;
        for s in &self.samples {
            let ext = if s.image.shape()[0] == 3 { "ppm" } else { "pgm" };
            let file = format!("{}.{ext}", s.name);
            write_pnm(dir.join(&file), &s.image)?;
            w.write_record([file, s.label.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&labels, e))
    }
}

/// Class `c` of `classes` puts a blob at angle `2*pi*c/classes` on a circle of
/// radius `side/4` around the image centre.
pub fn blob_center(c: usize, classes: usize, side: usize) -> (f64, f64) {
    let mid = (side as f64 - 1.0) / 2.0;
    let r = side as f64 / 4.0;
    let theta = std::f64::consts::TAU * c as f64 / classes as f64;
    (mid - r * theta.cos(), mid + r * theta.sin())
}

/// `classes * per_class` single-channel images; sample `j` has class
/// `j % classes`. Each is a unit-peak Gaussian bump (std `side/6`) at the
/// class centre over `N(0.1, 0.02^2)` background noise, clamped to `[0, 1]`.
pub fn synthetic_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.per_class == 0 || spec.side < 2 {
        return Err(Error::invalid(format!("degenerate synthetic spec {spec:?}")));
    }
    let s = spec.side;
    let std = s as f64 / 6.0;
    let mut rng = Rng::new(spec.seed);
    let bumps: Vec<Vec<f64>> = (0..spec.classes)
        .map(|c| {
            let (cy, cx) = blob_center(c, spec.classes, s);
            (0..s * s)
                .map(|p| {
                    let (dy, dx) = ((p / s) as f64 - cy, (p % s) as f64 - cx);
                    (-(dy * dy + dx * dx) / (2.0 * std * std)).exp()
                })
                .collect()
        })
        .collect();
    let samples = (0..spec.classes * spec.per_class)
        .map(|j| {
            let label = j % spec.classes;
            let data = bumps[label]
                .iter()
                .map(|&b| (0.1 + 0.02 * rng.next_gaussian() + b).clamp(0.0, 1.0) as f32)
                .collect();
            Ok(Sample {
                name: format!("blob_{j:05}"),
                image: Tensor::new(vec![1, s, s], data)?,
                label,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        samples,
        provenance: Provenance::SyntheticBlobs,
    })
}

fn load_dir(dir: &Path) -> Result<Dataset> {
    let labels_path = dir.join("labels.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(&labels_path)?;
    let mut labels = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (name, label) = match (rec.get(0), rec.get(1)) {
            (Some(n), Some(l)) => (n, l),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{}: expected `filename,label`", labels_path.display()),
                })
            }
        };
        match label.parse::<usize>() {
            Ok(l) => {
                labels.insert(name.to_string(), l);
            }
            // Header row.
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{}: bad label `{label}`", labels_path.display()),
                })
            }
        }
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm" | "ppm" | "pnm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir, "no PGM/PPM images found"));
    }

    let mut samples = Vec::with_capacity(files.len());
    for path in files {
        let fname = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let label = *labels
            .get(&fname)
            .ok_or_else(|| Error::format(&path, "missing label row in labels.csv"))?;
        let image = read_pnm(&path)?;
        if let Some(first) = samples.first().map(|s: &Sample| s.image.shape().to_vec()) {
            if image.shape() != first.as_slice() {
                return Err(Error::format(
                    &path,
                    format!("shape {:?} differs from {:?}", image.shape(), first),
                ));
            }
        }
        let name = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        samples.push(Sample { name, image, label });
    }
    Ok(Dataset {
        samples,
        provenance: Provenance::PpmDir,
    })
}
