//! Session simulation: drifting capture times, rendered frames, and truth.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::{render_view, VirtualCamera};
use super::shape::{shape_at, shape_with_params, DeformingShape};
use super::SimError;
use crate::geometry::{
    load_cloud, save_cloud, save_mesh, Frame, MeshFormat, PlyEncoding, Point3,
};

pub const TRUTH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub shape: DeformingShape,
    pub cameras: Vec<VirtualCamera>,
    pub fps: f64,
    pub duration_s: f64,
    /// Uniform jitter half-width around the accumulative delay, milliseconds.
    pub jitter_ms: f64,
    pub noise_sigma_mm: f64,
    pub points_per_view: usize,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let shape = DeformingShape::default();
        let center = Point3::new(shape.length_mm / 2.0, 0.0, shape.height_mm / 2.0);
        Self {
            cameras: super::camera::default_rig(center, 600.0),
            shape,
            fps: 15.0,
            duration_s: 3.0,
            jitter_ms: 0.5,
            noise_sigma_mm: 0.2,
            points_per_view: 2000,
            seed: 42,
        }
    }
}

/// Truth for one frame: when it was really captured, which reference frame
/// is nearest in true time (as an index offset), and each point's surface
/// parameters.
#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub true_time: f64,
    pub offset_to_reference: i64,
    pub provenance: Vec<(f64, f64)>,
}

/// Per-camera, per-frame truth records.
#[derive(Debug, Clone, Default)]
pub struct CaptureTruth {
    pub per_camera: Vec<Vec<FrameTruth>>,
}

impl CaptureTruth {
    pub fn offset(&self, camera_index: usize, frame: usize) -> i64 {
        self.per_camera[camera_index][frame].offset_to_reference
    }

    pub fn max_abs_offset(&self) -> i64 {
        self.per_camera
            .iter()
            .flat_map(|c| c.iter())
            .map(|f| f.offset_to_reference.abs())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub config: SessionConfig,
    /// Frames per camera, camera-major in rig order.
    pub frames: Vec<Vec<Frame>>,
    pub truth: CaptureTruth,
}

/// Deterministic per-(camera, frame) stream derived from the session seed.
fn stream(seed: u64, camera: usize, frame: usize, salt: u64) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((camera as u64 + 1) << 32) ^ (frame as u64 + 1) ^ (salt << 56));
    ChaCha8Rng::seed_from_u64(mix)
}

/// Simulates an asynchronous capture session. Camera `j` samples frame `k`
/// at `k/fps + ((k + 1)·d_j + jitter)/1000` while its clock stamps the frame
/// `k/fps`; the drift is visible only in the geometry. The truth table maps
/// every frame to the nearest reference-camera frame in true time.
pub fn simulate_session(config: &SessionConfig) -> Session {
    let frame_count = (config.duration_s * config.fps).floor() as usize;
    let mut true_times: Vec<Vec<f64>> = Vec::with_capacity(config.cameras.len());
    for (ci, cam) in config.cameras.iter().enumerate() {
        let mut times = Vec::with_capacity(frame_count);
        for k in 0..frame_count {
            let mut jitter_rng = stream(config.seed, ci, k, 1);
            let jitter = if config.jitter_ms > 0.0 {
                jitter_rng.random_range(-config.jitter_ms..config.jitter_ms)
            } else {
                0.0
            };
            let delay_ms = (k as f64 + 1.0) * cam.delay_per_frame_ms + jitter;
            times.push(k as f64 / config.fps + delay_ms / 1000.0);
        }
        true_times.push(times);
    }

    let mut frames = Vec::with_capacity(config.cameras.len());
    let mut truth = CaptureTruth::default();
    for (ci, cam) in config.cameras.iter().enumerate() {
        let mut cam_frames = Vec::with_capacity(frame_count);
        let mut cam_truth = Vec::with_capacity(frame_count);
        for k in 0..frame_count {
            let t = true_times[ci][k];
            let (mesh, params) = shape_with_params(&config.shape, t);
            let mut sample_rng = stream(config.seed, ci, k, 2);
            let mut noise_rng = stream(config.seed, ci, k, 3);
            let (cloud, face_prov) = render_view(
                &mesh,
                cam,
                config.points_per_view,
                config.noise_sigma_mm,
                &mut sample_rng,
                &mut noise_rng,
            );
            let provenance = face_prov
                .iter()
                .map(|&(face, r1, r2)| {
                    let [ia, ib, ic] = mesh.faces()[face];
                    let (pa, pb, pc) = (params[ia], params[ib], params[ic]);
                    let w0 = 1.0 - r1 - r2;
                    (
                        w0 * pa.0 + r1 * pb.0 + r2 * pc.0,
                        w0 * pa.1 + r1 * pb.1 + r2 * pc.1,
                    )
                })
                .collect();

            // Nearest reference frame in true time; ties take the earlier one.
            let mut best = (f64::INFINITY, 0usize);
            for (m, rt) in true_times[0].iter().enumerate() {
                let d = (rt - t).abs();
                if d < best.0 {
                    best = (d, m);
                }
            }
            cam_frames.push(Frame {
                camera_id: cam.id,
                frame_index: k,
                timestamp: k as f64 / config.fps,
                cloud,
            });
            cam_truth.push(FrameTruth {
                true_time: t,
                offset_to_reference: best.1 as i64 - k as i64,
                provenance,
            });
        }
        frames.push(cam_frames);
        truth.per_camera.push(cam_truth);
    }

    Session { config: config.clone(), frames, truth }
}

/// Writes `cam<j>/frame<k>.ply` files, the base template mesh, and the truth
/// manifest into `dir`.
pub fn export_session(dir: &Path, session: &Session) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    for (ci, cam_frames) in session.frames.iter().enumerate() {
        let cam_dir = dir.join(format!("cam{}", session.config.cameras[ci].id));
        std::fs::create_dir_all(&cam_dir)?;
        for frame in cam_frames {
            let path = cam_dir.join(format!("frame{:04}.ply", frame.frame_index));
            save_cloud(&path, &frame.cloud, PlyEncoding::BinaryLittleEndian)?;
        }
    }

    let template = base_template(&session.config.shape);
    save_mesh(&dir.join("template.obj"), &template, MeshFormat::Obj)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("truth.txt"))?);
    writeln!(out, "truth {TRUTH_FORMAT_VERSION}")?;
    writeln!(out, "cameras {}", session.frames.len())?;
    writeln!(out, "fps {}", session.config.fps)?;
    let frame_count = session.frames.first().map(|f| f.len()).unwrap_or(0);
    writeln!(out, "frames_per_camera {frame_count}")?;
    for (ci, cam_truth) in session.truth.per_camera.iter().enumerate() {
        for (k, t) in cam_truth.iter().enumerate() {
            writeln!(
                out,
                "frame {} {} {} {}",
                session.config.cameras[ci].id, k, t.true_time, t.offset_to_reference
            )?;
        }
    }
    Ok(())
}

/// The undeformed template mesh of a shape (all deformation amplitudes zero).
pub fn base_template(shape: &DeformingShape) -> crate::geometry::TriMesh {
    let frozen =
        DeformingShape { length_amp: 0.0, width_amp: 0.0, bend_mm: 0.0, ..shape.clone() };
    shape_at(&frozen, 0.0)
}

/// Reads back an exported session directory: per-camera frames with nominal
/// timestamps plus the truth manifest (without point provenance, which is
/// not exported).
pub fn load_session(dir: &Path) -> Result<(Vec<Vec<Frame>>, CaptureTruth, f64), SimError> {
    let manifest = std::fs::File::open(dir.join("truth.txt"))?;
    let mut lines = BufReader::new(manifest).lines().enumerate();
    let mut next = || -> Result<(usize, String), SimError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(SimError::Manifest { line: 0, detail: "unexpected end of file".into() }),
        }
    };
    let bad = |line: usize, detail: &str| SimError::Manifest { line, detail: detail.into() };

    let (ln, header) = next()?;
    let mut words = header.split_whitespace();
    if words.next() != Some("truth") {
        return Err(bad(ln, "missing truth header"));
    }
    let version = words.next().unwrap_or("");
    if version != TRUTH_FORMAT_VERSION.to_string() {
        return Err(SimError::ManifestVersion { found: version.to_string() });
    }

    let parse_kv = |line: usize, text: &str, key: &str| -> Result<f64, SimError> {
        let mut w = text.split_whitespace();
        if w.next() != Some(key) {
            return Err(bad(line, &format!("expected {key}")));
        }
        w.next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(line, &format!("bad {key} value")))
    };
    let (ln, text) = next()?;
    let cameras = parse_kv(ln, &text, "cameras")? as usize;
    let (ln, text) = next()?;
    let fps = parse_kv(ln, &text, "fps")?;
    let (ln, text) = next()?;
    let frame_count = parse_kv(ln, &text, "frames_per_camera")? as usize;

    let mut truth = CaptureTruth {
        per_camera: vec![
            vec![
                FrameTruth { true_time: 0.0, offset_to_reference: 0, provenance: Vec::new() };
                frame_count
            ];
            cameras
        ],
    };
    let mut camera_ids = Vec::new();
    for _ in 0..cameras * frame_count {
        let (ln, text) = next()?;
        let mut w = text.split_whitespace();
        if w.next() != Some("frame") {
            return Err(bad(ln, "expected frame row"));
        }
        let cam: u8 = w
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad camera id"))?;
        let k: usize = w
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad frame index"))?;
        let true_time: f64 = w
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad true time"))?;
        let offset: i64 = w
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad offset"))?;
        if !camera_ids.contains(&cam) {
            camera_ids.push(cam);
        }
        let ci = camera_ids.iter().position(|&c| c == cam).unwrap();
        if ci >= cameras || k >= frame_count {
            return Err(bad(ln, "camera or frame out of range"));
        }
        truth.per_camera[ci][k] = FrameTruth { true_time, offset_to_reference: offset, provenance: Vec::new() };
    }

    let mut frames = Vec::with_capacity(cameras);
    for &cam in &camera_ids {
        let cam_dir = dir.join(format!("cam{cam}"));
        let mut cam_frames = Vec::with_capacity(frame_count);
        for k in 0..frame_count {
            let path = cam_dir.join(format!("frame{k:04}.ply"));
            let cloud = load_cloud(&path)?;
            cam_frames.push(Frame {
                camera_id: cam,
                frame_index: k,
                timestamp: k as f64 / fps,
                cloud,
            });
        }
        frames.push(cam_frames);
    }
    Ok((frames, truth, fps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> SessionConfig {
        let mut config = SessionConfig {
            duration_s: 1.0,
            points_per_view: 300,
            seed,
            ..SessionConfig::default()
        };
        config.shape.rings = 16;
        config.shape.segments = 14;
        config
    }

    #[test]
    fn zero_delay_gives_zero_offsets() {
        let mut config = small_config(1);
        config.jitter_ms = 0.0;
        for cam in &mut config.cameras {
            cam.delay_per_frame_ms = 0.0;
        }
        let session = simulate_session(&config);
        assert_eq!(session.truth.max_abs_offset(), 0);
        for cam in &session.truth.per_camera {
            for (k, t) in cam.iter().enumerate() {
                assert!((t.true_time - k as f64 / config.fps).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accumulated_skew_matches_the_delay_arithmetic() {
        // 3 s at 15 fps with a 2 ms accumulative delay: the final frame lags
        // its nominal time by 45 × 2 ms = 90 ms, about 1.35 frame periods.
        let mut config = SessionConfig { seed: 3, ..SessionConfig::default() };
        config.jitter_ms = 0.0;
        config.points_per_view = 50;
        config.shape.rings = 8;
        config.shape.segments = 8;
        let session = simulate_session(&config);
        let frames = session.frames[0].len();
        assert_eq!(frames, 45);
        let last = &session.truth.per_camera[0][frames - 1];
        let nominal = (frames - 1) as f64 / config.fps;
        assert!((last.true_time - nominal - 0.090).abs() < 1e-12);
        // Offsets relative to camera 1 stay within one frame on the default
        // rig but do reach it.
        assert_eq!(session.truth.max_abs_offset(), 1);
    }

    #[test]
    fn same_seed_reproduces_the_session() {
        let config = small_config(11);
        let a = simulate_session(&config);
        let b = simulate_session(&config);
        for (ca, cb) in a.truth.per_camera.iter().zip(&b.truth.per_camera) {
            for (fa, fb) in ca.iter().zip(cb) {
                assert_eq!(fa.true_time, fb.true_time);
                assert_eq!(fa.offset_to_reference, fb.offset_to_reference);
                assert_eq!(fa.provenance, fb.provenance);
            }
        }
        for (ca, cb) in a.frames.iter().zip(&b.frames) {
            for (fa, fb) in ca.iter().zip(cb) {
                assert_eq!(fa.cloud, fb.cloud);
            }
        }
    }

    #[test]
    fn export_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(21);
        let session = simulate_session(&config);
        export_session(dir.path(), &session).unwrap();
        let (frames, truth, fps) = load_session(dir.path()).unwrap();
        assert_eq!(fps, config.fps);
        assert_eq!(frames.len(), session.frames.len());
        for (loaded, original) in frames.iter().zip(&session.frames) {
            assert_eq!(loaded.len(), original.len());
            for (lf, of) in loaded.iter().zip(original) {
                assert_eq!(lf.camera_id, of.camera_id);
                assert_eq!(lf.cloud.len(), of.cloud.len());
                for (lp, op) in lf.cloud.points().iter().zip(of.cloud.points()) {
                    assert_eq!(lp.x, op.x as f32 as f64);
                    assert_eq!(lp.y, op.y as f32 as f64);
                    assert_eq!(lp.z, op.z as f32 as f64);
                }
            }
        }
        for (lt, ot) in truth.per_camera.iter().zip(&session.truth.per_camera) {
            for (lf, of) in lt.iter().zip(ot) {
                assert_eq!(lf.offset_to_reference, of.offset_to_reference);
            }
        }
    }

    #[test]
    fn truth_offsets_beat_any_constant_offset_on_cpgd() {
        use crate::geometry::cpgd_sym;
        let mut config = small_config(31);
        config.duration_s = 1.5;
        config.points_per_view = 350;
        let session = simulate_session(&config);
        // Camera 2 drifts fastest relative to camera 1 on the default rig.
        let reference = &session.frames[0];
        let other = &session.frames[1];
        let truth = &session.truth.per_camera[1];
        let frames = other.len() as i64;

        let alignment_cost = |offset_of: &dyn Fn(usize) -> i64| -> f64 {
            let mut total = 0.0;
            let mut count = 0.0;
            for (k, frame) in other.iter().enumerate() {
                let target = k as i64 + offset_of(k);
                if target < 0 || target >= frames {
                    continue;
                }
                total += cpgd_sym(&frame.cloud, &reference[target as usize].cloud).unwrap();
                count += 1.0;
            }
            total / count
        };

        let truth_cost = alignment_cost(&|k| truth[k].offset_to_reference);
        for constant in -3i64..=3 {
            let cost = alignment_cost(&|_| constant);
            if (-1..=1).contains(&constant) {
                // The drift crosses frame boundaries, so no constant offset
                // can match the per-frame truth.
                assert!(
                    truth_cost <= cost + 1e-9,
                    "constant {constant}: {cost} beats truth {truth_cost}"
                );
            } else {
                assert!(truth_cost < cost);
            }
        }
    }
}
