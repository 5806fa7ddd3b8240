//! Leave-one-camera-out CPGD evaluation and the metrics report.

use std::io::Write;
use std::path::Path;

use super::mapping::FrameMapping;
use super::merge::select_sources;
use super::SyncError;
use crate::geometry::{build_nn_index, rmse, Frame, NnIndex};

/// Evaluation of one synchronization method over all (timestamp, camera)
/// cells: for each reference timestamp and camera, the directional CPGD of
/// that camera's mapped points against the union of the other cameras'
/// mapped points (plus the symmetric variant, recorded alongside).
#[derive(Debug, Clone)]
pub struct MethodEval {
    pub method: String,
    pub rmse_directional: f64,
    pub rmse_symmetric: f64,
    /// Per camera id: RMSE over that camera's cells (directional).
    pub per_camera: Vec<(u8, f64)>,
    pub cells: usize,
    pub skipped_cells: usize,
}

/// Evaluates one method's mappings (one per camera, reference camera first
/// with its identity mapping).
pub fn kfold_cpgd_eval(
    frames: &[Vec<Frame>],
    mappings: &[FrameMapping],
    method: &str,
) -> Result<MethodEval, SyncError> {
    assert_eq!(frames.len(), mappings.len(), "one mapping per camera");
    let cameras = frames.len();
    let reference_count = frames.first().map(|f| f.len()).unwrap_or(0);

    let mut directional = Vec::new();
    let mut symmetric = Vec::new();
    let mut per_camera: Vec<Vec<f64>> = vec![Vec::new(); cameras];
    let mut skipped = 0usize;

    for reference_index in 0..reference_count {
        let sources = select_sources(mappings, reference_index);
        let present: Vec<(usize, &Frame)> = sources
            .iter()
            .enumerate()
            .filter_map(|(cam, s)| {
                s.and_then(|src| frames[cam].get(src)).map(|f| (cam, f))
            })
            .filter(|(_, f)| !f.cloud.is_empty())
            .collect();
        if present.len() < 2 {
            skipped += cameras;
            continue;
        }
        let indexes: Vec<(usize, NnIndex)> = present
            .iter()
            .map(|(cam, f)| Ok((*cam, build_nn_index(&f.cloud)?)))
            .collect::<Result<_, SyncError>>()?;

        for (held_out_pos, (cam, frame)) in present.iter().enumerate() {
            let others: Vec<&NnIndex> = indexes
                .iter()
                .enumerate()
                .filter(|(pos, _)| *pos != held_out_pos)
                .map(|(_, (_, idx))| idx)
                .collect();
            if others.is_empty() {
                skipped += 1;
                continue;
            }
            // Directional: held-out camera's points against the union.
            let mut sum = 0.0;
            for p in frame.cloud.points() {
                let nearest = others
                    .iter()
                    .map(|idx| idx.nearest(*p).1)
                    .fold(f64::INFINITY, f64::min);
                sum += nearest;
            }
            let dir = sum / frame.cloud.len() as f64;

            // Reverse direction for the symmetric variant.
            let own_index = &indexes[held_out_pos].1;
            let mut rev_sum = 0.0;
            let mut rev_count = 0usize;
            for (pos, (_, other_frame)) in present.iter().enumerate() {
                if pos == held_out_pos {
                    continue;
                }
                for q in other_frame.cloud.points() {
                    rev_sum += own_index.nearest(*q).1;
                }
                rev_count += other_frame.cloud.len();
            }
            let rev = rev_sum / rev_count as f64;

            directional.push(dir);
            symmetric.push((dir + rev) / 2.0);
            per_camera[*cam].push(dir);
        }
        skipped += cameras - present.len();
    }

    let per_camera_rmse = per_camera
        .iter()
        .enumerate()
        .filter(|(_, values)| !values.is_empty())
        .map(|(cam, values)| {
            let id = frames[cam].first().map(|f| f.camera_id).unwrap_or(cam as u8);
            Ok((id, rmse(values)?))
        })
        .collect::<Result<Vec<_>, SyncError>>()?;

    Ok(MethodEval {
        method: method.to_string(),
        rmse_directional: rmse(&directional)?,
        rmse_symmetric: rmse(&symmetric)?,
        per_camera: per_camera_rmse,
        cells: directional.len(),
        skipped_cells: skipped,
    })
}

/// Evaluations of all methods on one session; percent improvement is
/// relative to the method named `raw`.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub methods: Vec<MethodEval>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodEval> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// `100 · (rmse_raw − rmse_method) / rmse_raw`, directional.
    pub fn percent_improvement(&self, name: &str) -> Option<f64> {
        let raw = self.method("raw")?.rmse_directional;
        let m = self.method(name)?.rmse_directional;
        Some(100.0 * (raw - m) / raw)
    }
}

/// Writes `metrics.csv` (per-method table) and `summary.txt` (structured
/// text with the per-camera breakdown) into `dir`.
pub fn write_metrics(dir: &Path, report: &EvalReport, config_hash: &str) -> Result<(), SyncError> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?);
    writeln!(csv, "method,rmse_mm,rmse_symmetric_mm,percent_improvement,cells,skipped_cells")?;
    for m in &report.methods {
        let pi = report.percent_improvement(&m.method).unwrap_or(0.0);
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{},{}",
            m.method, m.rmse_directional, m.rmse_symmetric, pi, m.cells, m.skipped_cells
        )?;
    }

    let mut summary = std::io::BufWriter::new(std::fs::File::create(dir.join("summary.txt"))?);
    writeln!(summary, "metrics 1")?;
    writeln!(summary, "config_hash {config_hash}")?;
    for m in &report.methods {
        let pi = report.percent_improvement(&m.method).unwrap_or(0.0);
        writeln!(
            summary,
            "method {} rmse_mm {:.6} rmse_symmetric_mm {:.6} percent_improvement {:.6}",
            m.method, m.rmse_directional, m.rmse_symmetric, pi
        )?;
        for (camera, value) in &m.per_camera {
            writeln!(summary, "camera {} {} rmse_mm {:.6}", m.method, camera, value)?;
        }
    }
    Ok(())
}
