//! Synthetic 2D datasets and CSV/IDX loading.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use hebm_core::rng::{phase, RngStream};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::idx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Pinwheel,
    Ring8,
    Checkerboard,
    TwoMoons,
    IdxImages,
    Csv,
}

impl std::str::FromStr for DatasetKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| HarnessError::Usage(format!("unknown dataset kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub size: usize,
    pub noise: f64,
    /// Number of classes for labelled data.
    pub label_arity: Option<usize>,
    pub seed: u64,
    /// Translation applied to synthetic points.
    pub offset: [f64; 2],
    /// Source file for `idx-images` and `csv`.
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn synthetic(kind: DatasetKind, size: usize, noise: f64, seed: u64) -> Self {
        DatasetSpec {
            kind,
            size,
            noise,
            label_arity: None,
            seed,
            offset: [0.0, 0.0],
            path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(HarnessError::Usage("dataset size must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(HarnessError::Usage("dataset noise must be finite and non-negative".into()));
        }
        if matches!(self.kind, DatasetKind::IdxImages | DatasetKind::Csv) && self.path.is_none() {
            return Err(HarnessError::Usage(format!("dataset kind {:?} needs a path", self.kind)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    /// One row of label columns per point.
    pub labels: Option<Vec<Vec<usize>>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// First-column labels.
    pub fn classes(&self) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| l.iter().map(|r| r[0]).collect())
    }
}

pub const PINWHEEL_ARMS: usize = 5;
pub const PINWHEEL_RADIAL_STD: f64 = 0.3;
pub const PINWHEEL_RATE: f64 = 0.25;
pub const PINWHEEL_SCALE: f64 = 2.0;
pub const RING_MODES: usize = 8;
pub const RING_RADIUS: f64 = 2.5;

fn arm_angle(k: usize) -> f64 {
    2.0 * PI * k as f64 / PINWHEEL_ARMS as f64
}

/// Point on arm `k` at radial coordinate `r` with tangential offset `w`.
pub fn pinwheel_point(k: usize, r: f64, w: f64) -> [f64; 2] {
    let a = arm_angle(k) + PINWHEEL_RATE * r.exp();
    let (s, c) = a.sin_cos();
    [PINWHEEL_SCALE * (c * r - s * w), PINWHEEL_SCALE * (s * r + c * w)]
}

/// Tangential distance of `p` to the nearest pinwheel arm.
pub fn pinwheel_residual(p: &[f64]) -> f64 {
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt() / PINWHEEL_SCALE;
    let phi = p[1].atan2(p[0]);
    (0..PINWHEEL_ARMS)
        .map(|k| {
            let d = phi - arm_angle(k) - PINWHEEL_RATE * r.exp();
            let wrapped = d - 2.0 * PI * (d / (2.0 * PI)).round();
            r * wrapped.abs()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn ring_center(mode: usize) -> [f64; 2] {
    let a = 2.0 * PI * mode as f64 / RING_MODES as f64;
    [RING_RADIUS * a.cos(), RING_RADIUS * a.sin()]
}

/// Index of the ring mode closest to `p`.
pub fn nearest_ring_mode(p: &[f64]) -> usize {
    (0..RING_MODES)
        .min_by(|&a, &b| {
            let da = dist2(p, &ring_center(a));
            let db = dist2(p, &ring_center(b));
            da.total_cmp(&db)
        })
        .unwrap()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn gen_synthetic(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let base = RngStream::new(spec.seed).with_phase(phase::DATA);
    let n = spec.size;
    let mut labels = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = base.for_sample(i as u64);
        let (p, label) = match spec.kind {
            DatasetKind::Pinwheel => {
                let k = i % PINWHEEL_ARMS;
                let mut radial = 1.0 + PINWHEEL_RADIAL_STD * r.next_normal();
                while radial <= 0.05 {
                    radial = 1.0 + PINWHEEL_RADIAL_STD * r.next_normal();
                }
                let w = spec.noise * r.next_normal();
                (pinwheel_point(k, radial, w), k)
            }
            DatasetKind::Ring8 => {
                let k = i % RING_MODES;
                let c = ring_center(k);
                (
                    [c[0] + spec.noise * r.next_normal(), c[1] + spec.noise * r.next_normal()],
                    k,
                )
            }
            DatasetKind::Checkerboard => {
                let x = 4.0 * r.next_uniform() - 2.0;
                let y0 = r.next_uniform() - 2.0 * r.below(2) as f64;
                let y = y0 + (x.floor().rem_euclid(2.0));
                let cell = ((x.floor() + 2.0) as usize) % 4;
                (
                    [2.0 * x + spec.noise * r.next_normal(), 2.0 * y + spec.noise * r.next_normal()],
                    cell,
                )
            }
            DatasetKind::TwoMoons => {
                let k = i % 2;
                let a = PI * r.next_uniform();
                let (x, y) = if k == 0 {
                    (a.cos(), a.sin())
                } else {
                    (1.0 - a.cos(), 0.5 - a.sin())
                };
                (
                    [
                        2.0 * (x - 0.5) + spec.noise * r.next_normal(),
                        2.0 * (y - 0.25) + spec.noise * r.next_normal(),
                    ],
                    k,
                )
            }
            DatasetKind::IdxImages | DatasetKind::Csv => {
                return load_file(spec);
            }
        };
        points.push(vec![p[0] + spec.offset[0], p[1] + spec.offset[1]]);
        labels.push(vec![label]);
    }
    Ok(Dataset {
        points,
        labels: Some(labels),
    })
}

fn load_file(spec: &DatasetSpec) -> Result<Dataset> {
    let path = spec.path.as_ref().expect("validated");
    let mut ds = match spec.kind {
        DatasetKind::IdxImages => {
            let images = idx::load_idx(path)?;
            Dataset {
                points: images.flattened(),
                labels: None,
            }
        }
        _ => read_csv(path, spec.label_arity.map_or(0, |_| 1))?,
    };
    ds.points.truncate(spec.size);
    if let Some(l) = ds.labels.as_mut() {
        l.truncate(spec.size);
    }
    Ok(ds)
}

/// Reads a headed CSV whose last `label_columns` columns are integer labels.
pub fn read_csv(path: &Path, label_columns: usize) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::parse(path, format!("row {row}: {e}")))?;
        if rec.len() <= label_columns {
            return Err(HarnessError::parse(path, format!("row {row} has no feature columns")));
        }
        let split = rec.len() - label_columns;
        let feats = rec
            .iter()
            .take(split)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::parse(path, format!("row {row}: {e}")))?;
        let labs = rec
            .iter()
            .skip(split)
            .map(|v| v.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::parse(path, format!("row {row} label: {e}")))?;
        points.push(feats);
        labels.push(labs);
    }
    if points.is_empty() {
        return Err(HarnessError::parse(path, "no data rows"));
    }
    Ok(Dataset {
        points,
        labels: (label_columns > 0).then_some(labels),
    })
}

/// Writes points (and labels, when present) as CSV with a header row.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    let dim = ds.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let label_cols = ds.labels.as_ref().and_then(|l| l.first()).map_or(0, |r| r.len());
    header.extend((0..label_cols).map(|i| format!("label{i}")));
    w.write_record(&header).map_err(|e| HarnessError::io(path, e))?;
    for (i, p) in ds.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = &ds.labels {
            row.extend(l[i].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}
