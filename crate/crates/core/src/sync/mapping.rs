//! Frame assignments to the reference timeline, with monotonicity by
//! isotonic projection, and their on-disk text form.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::SyncError;

pub const MAPPING_FORMAT_VERSION: u32 = 1;

/// For one camera: which reference frame each source frame is assigned to.
/// Reference indices are non-decreasing in the source index and every source
/// frame appears exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMapping {
    pub camera_id: u8,
    pub method: String,
    pub assignments: Vec<(usize, usize)>,
}

impl FrameMapping {
    /// Builds a mapping from per-source-frame reference targets, enforcing
    /// monotonicity by least-squares isotonic projection and clamping into
    /// `0..reference_count`.
    pub fn from_targets(
        camera_id: u8,
        method: &str,
        targets: &[f64],
        reference_count: usize,
    ) -> Self {
        let projected = isotonic_non_decreasing(targets);
        let assignments = projected
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let clamped = r.round().max(0.0).min(reference_count.saturating_sub(1) as f64);
                (k, clamped as usize)
            })
            .collect();
        Self { camera_id, method: method.to_string(), assignments }
    }

    pub fn reference_of(&self, source: usize) -> Option<usize> {
        self.assignments
            .binary_search_by_key(&source, |a| a.0)
            .ok()
            .map(|i| self.assignments[i].1)
    }

    /// Checks totality over `0..len` and monotone reference indices.
    pub fn is_monotone_total(&self, len: usize) -> bool {
        if self.assignments.len() != len {
            return false;
        }
        let mut prev_ref = 0usize;
        for (i, &(src, reference)) in self.assignments.iter().enumerate() {
            if src != i {
                return false;
            }
            if i > 0 && reference < prev_ref {
                return false;
            }
            prev_ref = reference;
        }
        true
    }
}

/// Least-squares projection onto non-decreasing sequences
/// (pool-adjacent-violators).
pub fn isotonic_non_decreasing(values: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight) merged whenever a predecessor exceeds its
    // successor.
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1.0));
        while blocks.len() > 1 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.0 <= last.0 {
                break;
            }
            let weight = prev.1 + last.1;
            let mean = (prev.0 * prev.1 + last.0 * last.1) / weight;
            blocks.pop();
            *blocks.last_mut().unwrap() = (mean, weight);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (mean, weight) in blocks {
        for _ in 0..weight as usize {
            out.push(mean);
        }
    }
    out
}

pub fn write_frame_mapping(path: &Path, mapping: &FrameMapping) -> Result<(), SyncError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "framemap {MAPPING_FORMAT_VERSION}")?;
    writeln!(out, "camera {}", mapping.camera_id)?;
    writeln!(out, "method {}", mapping.method)?;
    writeln!(out, "assignments {}", mapping.assignments.len())?;
    for &(src, reference) in &mapping.assignments {
        writeln!(out, "assign {src} {reference}")?;
    }
    Ok(())
}

pub fn read_frame_mapping(path: &Path) -> Result<FrameMapping, SyncError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next = || -> Result<(usize, String), SyncError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(SyncError::MappingFormat { line: 0, detail: "unexpected end of file".into() }),
        }
    };
    let bad =
        |line: usize, detail: &str| SyncError::MappingFormat { line, detail: detail.to_string() };

    let (ln, header) = next()?;
    let mut w = header.split_whitespace();
    if w.next() != Some("framemap") {
        return Err(bad(ln, "missing framemap header"));
    }
    let version = w.next().unwrap_or("");
    if version != MAPPING_FORMAT_VERSION.to_string() {
        return Err(SyncError::MappingVersion { found: version.to_string() });
    }

    let (ln, line) = next()?;
    let camera_id: u8 = line
        .strip_prefix("camera ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(ln, "bad camera line"))?;
    let (ln, line) = next()?;
    let method = line
        .strip_prefix("method ")
        .map(|v| v.trim().to_string())
        .ok_or_else(|| bad(ln, "bad method line"))?;
    let (ln, line) = next()?;
    let count: usize = line
        .strip_prefix("assignments ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(ln, "bad assignments line"))?;

    let mut assignments = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, line) = next()?;
        let mut w = line.split_whitespace();
        if w.next() != Some("assign") {
            return Err(bad(ln, "expected assign row"));
        }
        let src: usize =
            w.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad source index"))?;
        let reference: usize =
            w.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(ln, "bad reference index"))?;
        assignments.push((src, reference));
    }
    Ok(FrameMapping { camera_id, method, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotonic_projection_pools_violators() {
        let projected = isotonic_non_decreasing(&[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(projected, vec![1.0, 2.5, 2.5, 4.0]);
        let sorted = isotonic_non_decreasing(&[1.0, 2.0, 3.0]);
        assert_eq!(sorted, vec![1.0, 2.0, 3.0]);
        let reversed = isotonic_non_decreasing(&[3.0, 2.0, 1.0]);
        assert_eq!(reversed, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn from_targets_is_monotone_total_and_clamped() {
        let mapping = FrameMapping::from_targets(2, "test", &[-1.0, 0.2, 3.0, 2.0, 9.0], 5);
        assert!(mapping.is_monotone_total(5));
        assert_eq!(mapping.assignments[0].1, 0);
        assert_eq!(mapping.assignments[4].1, 4);
    }

    #[test]
    fn mapping_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.map");
        let mapping = FrameMapping {
            camera_id: 4,
            method: "learned".into(),
            assignments: vec![(0, 0), (1, 1), (2, 3)],
        };
        write_frame_mapping(&path, &mapping).unwrap();
        assert_eq!(read_frame_mapping(&path).unwrap(), mapping);
    }
}
