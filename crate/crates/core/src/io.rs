//! File formats: point-cloud CSV, trajectory JSON, and per-frame scalars CSV.
//!
//! CSV rows are `x1,x2[,...,xd][,w]` with comma delimiter and decimal point.
//! Machine-readable floats are printed with 17 significant digits so that
//! save/load round-trips are exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::flow::{Frame, Trajectory};

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip the first line.
    pub header: bool,
    /// Interpret the trailing column as point weights.
    pub weight_column: bool,
}

/// Formats a float with 17 significant digits (exact f64 round-trip).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<PointCloud> {
    load_csv_with(path, LoadOptions::default())
}

pub fn load_csv_with(path: &Path, opts: LoadOptions) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, opts).map_err(|e| match e {
        Error::EmptyInput(_) => Error::EmptyInput(path.display().to_string()),
        other => other,
    })
}

pub fn parse_csv(text: &str, opts: LoadOptions) -> Result<PointCloud> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if opts.header && idx == 0 {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("cannot parse '{}' as a number", field.trim()),
            })?;
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    let cols = width.unwrap();
    let d = if opts.weight_column {
        if cols < 2 {
            return Err(Error::Parse {
                line: 1,
                message: "weight column requires at least 2 columns".into(),
            });
        }
        cols - 1
    } else {
        cols
    };
    let n = rows.len();
    let points = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    if opts.weight_column {
        let raw = DVector::from_fn(n, |i, _| rows[i][cols - 1]);
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidCloud("weights must have positive mass".into()));
        }
        // normalize so files need not carry exactly unit mass
        PointCloud::new(points, raw / total)
    } else {
        PointCloud::uniform(points)
    }
}

pub fn save_csv(cloud: &PointCloud, path: &Path, include_weights: bool) -> Result<()> {
    write_atomic(path, cloud_to_csv(cloud, include_weights).as_bytes())
}

pub fn cloud_to_csv(cloud: &PointCloud, include_weights: bool) -> String {
    let mut out = String::new();
    for i in 0..cloud.len() {
        let mut fields: Vec<String> = (0..cloud.dim())
            .map(|j| format_float(cloud.points()[(i, j)]))
            .collect();
        if include_weights {
            fields.push(format_float(cloud.weights()[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryJson {
    d: usize,
    tau: f64,
    frames: Vec<FrameJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameJson {
    t: f64,
    points: Vec<Vec<f64>>,
    velocity: Option<Vec<Vec<f64>>>,
    scalars: std::collections::BTreeMap<String, f64>,
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn trajectory_to_json(traj: &Trajectory) -> Result<String> {
    let d = traj
        .frames
        .first()
        .map(|f| f.cloud.dim())
        .ok_or_else(|| Error::EmptyInput("trajectory has no frames".into()))?;
    let frames = traj
        .frames
        .iter()
        .map(|f| FrameJson {
            t: f.t,
            points: matrix_to_rows(f.cloud.points()),
            velocity: f.velocity.as_ref().map(|v| matrix_to_rows(v.values())),
            scalars: f.scalars.clone(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&TrajectoryJson {
        d,
        tau: traj.tau,
        frames,
    })?)
}

pub fn save_trajectory_json(traj: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, trajectory_to_json(traj)?.as_bytes())
}

pub fn load_trajectory_json(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let parsed: TrajectoryJson = serde_json::from_str(&text)?;
    let mut frames = Vec::with_capacity(parsed.frames.len());
    for f in parsed.frames {
        let n = f.points.len();
        if n == 0 {
            return Err(Error::InvalidCloud("frame with no points".into()));
        }
        let points = DMatrix::from_fn(n, parsed.d, |i, j| f.points[i][j]);
        let cloud = PointCloud::uniform(points)?;
        let velocity = match f.velocity {
            Some(rows) => Some(crate::cloud::VectorField::new(DMatrix::from_fn(
                n,
                parsed.d,
                |i, j| rows[i][j],
            ))?),
            None => None,
        };
        frames.push(Frame {
            t: f.t,
            cloud,
            velocity,
            scalars: f.scalars,
        });
    }
    Ok(Trajectory {
        tau: parsed.tau,
        frames,
    })
}

/// Per-frame scalars CSV `t,F,descent,damping,lambda_min`; absent scalars
/// are written as `nan`.
pub fn scalars_to_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,F,descent,damping,lambda_min\n");
    for f in &traj.frames {
        let get = |k: &str| f.scalars.get(k).copied().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(f.t),
            format_float(get("functional_value")),
            format_float(get("descent")),
            format_float(get("damping")),
            format_float(get("lambda_min_sigma")),
        ));
    }
    out
}

pub fn save_scalars_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, scalars_to_csv(traj).as_bytes())
}
