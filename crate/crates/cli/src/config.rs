//! Versioned pipeline configuration: a TOML document with explicit schema;
//! unknown keys are rejected with their location.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scan4d_core::adgc::{ModelDims, TrainConfig};
use scan4d_core::geometry::Point3;
use scan4d_core::icfp::IcfpParams;
use scan4d_core::registration::RegistrationParams;
use scan4d_core::sim::{default_rig, DeformingShape, SessionConfig};
use scan4d_core::sync::OffsetLabeling;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub icfp: IcfpSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub labeling: LabelingSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub registration: RegistrationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    pub fps: f64,
    pub jitter_ms: f64,
    pub noise_sigma_mm: f64,
    pub points_per_view: usize,
    pub camera_radius_mm: f64,
    /// Per-camera accumulative delay rates (ms per frame); the first camera
    /// is the reference timeline.
    pub delay_rates_ms: Vec<f64>,
    pub shape: ShapeSection,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            duration_s: 3.0,
            fps: 15.0,
            jitter_ms: 0.5,
            noise_sigma_mm: 0.2,
            points_per_view: 2000,
            camera_radius_mm: 600.0,
            delay_rates_ms: vec![2.0, 0.6, 1.2, 2.8, 3.4, 2.0],
            shape: ShapeSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    pub length_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    pub rings: usize,
    pub segments: usize,
    pub length_amp: f64,
    pub width_amp: f64,
    pub bend_mm: f64,
    pub period_s: f64,
}

impl Default for ShapeSection {
    fn default() -> Self {
        let d = DeformingShape::default();
        Self {
            length_mm: d.length_mm,
            width_mm: d.width_mm,
            height_mm: d.height_mm,
            rings: d.rings,
            segments: d.segments,
            length_amp: d.length_amp,
            width_amp: d.width_amp,
            bend_mm: d.bend_mm,
            period_s: d.period_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcfpSection {
    pub zeta: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub min_density_fraction: f64,
}

impl Default for IcfpSection {
    fn default() -> Self {
        let d = IcfpParams::default();
        Self {
            zeta: d.zeta,
            max_iterations: d.max_iterations,
            convergence_tol: d.convergence_tol,
            min_density_fraction: d.min_density_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub knn_edges: usize,
    /// Cap on graph nodes per camera (farthest-point subsampling).
    pub max_nodes: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { knn_edges: 4, max_nodes: 24 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingSection {
    pub window_len: usize,
    /// Offset bins span -max_offset..=max_offset.
    pub max_offset: i64,
}

impl Default for LabelingSection {
    fn default() -> Self {
        Self { window_len: 40, max_offset: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: usize,
    pub epochs: usize,
    pub lambda_bar: f64,
    pub beta_bar: f64,
    /// "cpgd" trains on exhaustive-search pseudo-labels; "truth" uses the
    /// simulator's ground truth.
    pub labels: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            // Desk-scale widths; the full published width of 256 is
            // available but needless for the synthetic sessions.
            embed_dim: 16,
            hidden_dim: 16,
            learning_rate: 0.01,
            lr_decay_factor: d.lr_decay_factor,
            lr_decay_epochs: 40,
            epochs: 80,
            lambda_bar: d.lambda_bar,
            beta_bar: d.beta_bar,
            labels: "cpgd".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationSection {
    pub alpha_schedule: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub inner_iterations: usize,
    pub inner_tol_mm: f64,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let d = RegistrationParams::default();
        Self {
            alpha_schedule: d.alpha_schedule,
            gamma: d.gamma,
            beta: d.beta,
            inner_iterations: d.inner_iterations,
            inner_tol_mm: d.inner_tol_mm,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            sim: SimSection::default(),
            icfp: IcfpSection::default(),
            graph: GraphSection::default(),
            labeling: LabelingSection::default(),
            train: TrainSection::default(),
            registration: RegistrationSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.version != CONFIG_VERSION {
            bail!(
                "config version mismatch: file has {}, this build expects {}",
                config.version,
                CONFIG_VERSION
            );
        }
        config.validate()?;
        Ok((config, config_hash(&text)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sim.delay_rates_ms.is_empty() {
            bail!("sim.delay_rates_ms must name at least one camera");
        }
        if self.labeling.max_offset < 0 {
            bail!("labeling.max_offset must be non-negative");
        }
        if self.labeling.window_len == 0 {
            bail!("labeling.window_len must be positive");
        }
        if !(0.0..=1.0).contains(&self.icfp.min_density_fraction) {
            bail!("icfp.min_density_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn session_config(&self) -> SessionConfig {
        let shape = DeformingShape {
            length_mm: self.sim.shape.length_mm,
            width_mm: self.sim.shape.width_mm,
            height_mm: self.sim.shape.height_mm,
            rings: self.sim.shape.rings,
            segments: self.sim.shape.segments,
            length_amp: self.sim.shape.length_amp,
            width_amp: self.sim.shape.width_amp,
            bend_mm: self.sim.shape.bend_mm,
            period_s: self.sim.shape.period_s,
        };
        let center = Point3::new(shape.length_mm / 2.0, 0.0, shape.height_mm / 2.0);
        let mut cameras = default_rig(center, self.sim.camera_radius_mm);
        cameras.truncate(self.sim.delay_rates_ms.len());
        for (cam, &rate) in cameras.iter_mut().zip(&self.sim.delay_rates_ms) {
            cam.delay_per_frame_ms = rate;
        }
        SessionConfig {
            shape,
            cameras,
            fps: self.sim.fps,
            duration_s: self.sim.duration_s,
            jitter_ms: self.sim.jitter_ms,
            noise_sigma_mm: self.sim.noise_sigma_mm,
            points_per_view: self.sim.points_per_view,
            seed: self.seed,
        }
    }

    pub fn icfp_params(&self) -> IcfpParams {
        IcfpParams {
            zeta: self.icfp.zeta,
            max_iterations: self.icfp.max_iterations,
            convergence_tol: self.icfp.convergence_tol,
            min_density_fraction: self.icfp.min_density_fraction,
            max_nodes: Some(self.graph.max_nodes),
        }
    }

    pub fn labeling(&self) -> OffsetLabeling {
        OffsetLabeling {
            window_len: self.labeling.window_len,
            offset_bins: (-self.labeling.max_offset..=self.labeling.max_offset).collect(),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            window_len: self.labeling.window_len,
            lambda_bar: self.train.lambda_bar,
            beta_bar: self.train.beta_bar,
            learning_rate: self.train.learning_rate,
            lr_decay_factor: self.train.lr_decay_factor,
            lr_decay_epochs: self.train.lr_decay_epochs,
            epochs: self.train.epochs,
            seed,
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims::with_widths(
            self.labeling().classes(),
            self.train.embed_dim,
            self.train.hidden_dim,
        )
    }

    pub fn registration_params(&self) -> RegistrationParams {
        RegistrationParams {
            alpha_schedule: self.registration.alpha_schedule.clone(),
            gamma: self.registration.gamma,
            beta: self.registration.beta,
            inner_iterations: self.registration.inner_iterations,
            inner_tol_mm: self.registration.inner_tol_mm,
            zeta: self.icfp.zeta,
        }
    }
}

/// Short content hash carried by every report so numbers trace back to their
/// inputs.
pub fn config_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
