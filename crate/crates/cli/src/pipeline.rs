//! Command implementations shared by the binary and the acceptance suite.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use scan4d_core::adgc::{load_model, save_model, train, write_loss_curve, SyncModel};
use scan4d_core::geometry::{
    load_cloud, load_mesh, save_cloud, save_mesh, Frame, MeshFormat, PlyEncoding, PointCloud,
};
use scan4d_core::icfp::{build_dynamic_graph, read_dynamic_graph, write_dynamic_graph, DynamicGraph};
use scan4d_core::registration::{
    dimension_variation, foot_dimensions, register_template, AxisFrame, FootDimensions,
};
use scan4d_core::sim::{export_session, load_session, simulate_session, CaptureTruth};
use scan4d_core::sync::{
    baseline_exhaustive, hierarchical_sync, kfold_cpgd_eval, make_training_windows,
    merge_at_timestamp, merge_graphs, pairwise_sync, raw_mapping, read_frame_mapping,
    write_frame_mapping, write_metrics, EvalReport, FrameMapping, OffsetLabeling, SyncError,
};

use crate::config::PipelineConfig;

/// How training labels are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Exhaustive CPGD pseudo-labels; needs only the graphs.
    Cpgd,
    /// Simulator ground truth from the session's truth manifest.
    Truth,
}

impl LabelSource {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "cpgd" => Ok(Self::Cpgd),
            "truth" => Ok(Self::Truth),
            other => bail!("unknown label source {other:?} (expected cpgd or truth)"),
        }
    }
}

/// Synthesizes a session into `out`: per-camera PLY frames, the template
/// mesh, the truth manifest, and the resolved configuration.
pub fn cmd_synth(config: &PipelineConfig, out: &Path) -> Result<()> {
    let session = simulate_session(&config.session_config());
    export_session(out, &session).context("exporting session")?;
    std::fs::write(out.join("config.toml"), config.to_toml())?;
    log::info!(
        "session: {} cameras x {} frames into {}",
        session.frames.len(),
        session.frames.first().map(|f| f.len()).unwrap_or(0),
        out.display()
    );
    Ok(())
}

/// Builds one dynamic graph per camera from a session directory.
pub fn cmd_graph(config: &PipelineConfig, session_dir: &Path, out: &Path) -> Result<()> {
    let (frames, _, _) = load_session(session_dir).context("loading session")?;
    std::fs::create_dir_all(out)?;
    let params = config.icfp_params();
    for cam_frames in &frames {
        let camera = cam_frames.first().map(|f| f.camera_id).unwrap_or(0);
        let graph = build_dynamic_graph(cam_frames, &params, config.graph.knn_edges)
            .with_context(|| format!("building graph for camera {camera}"))?;
        let path = out.join(format!("cam{camera}.dsg"));
        write_dynamic_graph(&path, &graph)?;
        log::info!(
            "camera {camera}: {} nodes over {} frames",
            graph.node_count(),
            graph.valid_frames().len()
        );
    }
    Ok(())
}

fn load_graphs(dir: &Path) -> Result<Vec<DynamicGraph>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("dsg"))
        .collect();
    if entries.is_empty() {
        bail!("no .dsg graph files in {}", dir.display());
    }
    entries.sort();
    let mut graphs = Vec::with_capacity(entries.len());
    for path in entries {
        graphs.push(read_dynamic_graph(&path).with_context(|| path.display().to_string())?);
    }
    graphs.sort_by_key(|g| g.camera_id.unwrap_or(u8::MAX));
    Ok(graphs)
}

/// Per-frame truth offsets for a camera id, when truth labeling is wanted.
fn truth_offsets(truth: &CaptureTruth, camera_index: usize) -> Vec<i64> {
    truth.per_camera[camera_index]
        .iter()
        .map(|f| f.offset_to_reference)
        .collect()
}

/// Trains one pairwise model (reference graph, other graph) and writes the
/// checkpoint plus the loss curve.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    config: &PipelineConfig,
    graphs_dir: &Path,
    reference_cam: u8,
    other_cam: u8,
    labels: LabelSource,
    session_dir: Option<&Path>,
    seed: u64,
    out_model: &Path,
    out_curves: &Path,
) -> Result<()> {
    let reference = read_dynamic_graph(&graphs_dir.join(format!("cam{reference_cam}.dsg")))?;
    let other = read_dynamic_graph(&graphs_dir.join(format!("cam{other_cam}.dsg")))?;
    let labeling = config.labeling();

    let truth_vec;
    let truth = match labels {
        LabelSource::Cpgd => None,
        LabelSource::Truth => {
            let dir = session_dir
                .ok_or_else(|| anyhow!("truth labels need --session for the truth manifest"))?;
            let (_, truth, _) = load_session(dir)?;
            truth_vec = truth_offsets(&truth, other_cam.saturating_sub(1) as usize);
            Some(truth_vec.as_slice())
        }
    };

    let set = make_training_windows(&reference, &other, &labeling, truth)?;
    let train_config = config.train_config(seed);
    let (model, curve) = train(&set.windows, &set.structure, config.model_dims(), &train_config)?;
    save_model(out_model, &model)?;
    write_loss_curve(out_curves, &curve)?;
    log::info!(
        "trained on {} windows; final loss {:.4}",
        set.windows.len(),
        curve.last().map(|e| e.total).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Everything `sync` produces, kept for the evaluation step.
pub struct SyncOutput {
    /// One mapping per camera (reference first, identity).
    pub mappings: Vec<FrameMapping>,
}

/// A stage trainer honoring the configuration: fresh training per stage, or
/// a fixed model reused across stages.
fn run_learned_sync(
    config: &PipelineConfig,
    graphs: &[DynamicGraph],
    truth: Option<&CaptureTruth>,
    reuse_model: Option<SyncModel>,
    out: Option<&Path>,
) -> Result<Vec<FrameMapping>, SyncError> {
    let labeling = config.labeling();
    let dims = config.model_dims();
    let base_seed = config.seed;
    let mut trainer = |reference: &DynamicGraph,
                       other: &DynamicGraph,
                       labeling: &OffsetLabeling,
                       stage: usize|
     -> Result<SyncModel, SyncError> {
        if let Some(model) = &reuse_model {
            return Ok(model.clone());
        }
        let truth_vec: Option<Vec<i64>> = truth.map(|t| {
            truth_offsets(t, other.camera_id.map(|c| c as usize - 1).unwrap_or(stage))
        });
        let set = make_training_windows(reference, other, labeling, truth_vec.as_deref())?;
        let train_config = config.train_config(base_seed.wrapping_add(stage as u64 * 9973));
        let (model, curve) = train(&set.windows, &set.structure, dims, &train_config)?;
        if let Some(dir) = out {
            let camera = other.camera_id.unwrap_or(stage as u8);
            let _ = save_model(&dir.join(format!("model_stage{camera}.adgc")), &model);
            let _ = write_loss_curve(&dir.join(format!("loss_stage{camera}.csv")), &curve);
        }
        Ok(model)
    };
    let outcome = hierarchical_sync(graphs, &labeling, &mut trainer)?;
    Ok(outcome.mappings)
}

/// Hierarchical fold with the exhaustive-CPGD baseline at each stage.
fn run_exhaustive_sync(
    graphs: &[DynamicGraph],
    labeling: &OffsetLabeling,
) -> Result<Vec<FrameMapping>, SyncError> {
    let mut merged = graphs[0].clone();
    let mut mappings = Vec::with_capacity(graphs.len() - 1);
    for other in graphs.iter().skip(1) {
        let mapping = baseline_exhaustive(&merged, other, labeling)?;
        merged = merge_graphs(&merged, other, &mapping);
        mappings.push(mapping);
    }
    Ok(mappings)
}

/// Builds the per-camera mappings for a method. The reference camera always
/// carries the identity mapping.
pub fn mappings_for_method(
    config: &PipelineConfig,
    method: &str,
    graphs: &[DynamicGraph],
    frames: &[Vec<Frame>],
    truth: Option<&CaptureTruth>,
    reuse_model: Option<SyncModel>,
    out: Option<&Path>,
) -> Result<Vec<FrameMapping>> {
    let reference_count = frames[0].len();
    let reference_cam = frames[0].first().map(|f| f.camera_id).unwrap_or(1);
    let mut mappings =
        vec![raw_mapping(reference_cam, reference_count, reference_count)];
    match method {
        "raw" => {
            for cam_frames in frames.iter().skip(1) {
                let camera = cam_frames.first().map(|f| f.camera_id).unwrap_or(0);
                mappings.push(raw_mapping(camera, cam_frames.len(), reference_count));
            }
        }
        "exhaustive" => {
            mappings.extend(run_exhaustive_sync(graphs, &config.labeling())?);
        }
        "learned" => {
            mappings.extend(run_learned_sync(config, graphs, truth, reuse_model, out)?);
        }
        other => bail!("unknown method {other:?} (expected raw, exhaustive, or learned)"),
    }
    Ok(mappings)
}

/// Synchronizes a session and writes mappings plus merged per-timestamp
/// clouds.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sync(
    config: &PipelineConfig,
    graphs_dir: &Path,
    session_dir: &Path,
    out: &Path,
    method: &str,
    labels: LabelSource,
    model_path: Option<&Path>,
    write_merged: bool,
) -> Result<SyncOutput> {
    let (frames, truth, _) = load_session(session_dir)?;
    let graphs = load_graphs(graphs_dir)?;
    if graphs.len() != frames.len() {
        bail!("{} graphs for {} cameras", graphs.len(), frames.len());
    }
    std::fs::create_dir_all(out)?;
    let reuse_model = match model_path {
        Some(path) => Some(load_model(path)?),
        None => None,
    };
    let truth_ref = match labels {
        LabelSource::Truth => Some(&truth),
        LabelSource::Cpgd => None,
    };
    let mappings =
        mappings_for_method(config, method, &graphs, &frames, truth_ref, reuse_model, Some(out))?;

    for mapping in &mappings {
        write_frame_mapping(&out.join(format!("mapping_cam{}.txt", mapping.camera_id)), mapping)?;
    }

    if write_merged {
        let merged_dir = out.join("merged");
        std::fs::create_dir_all(&merged_dir)?;
        let reference_count = frames[0].len();
        for r in 0..reference_count {
            let merged = merge_at_timestamp(&frames, &mappings, r)?;
            save_cloud(
                &merged_dir.join(format!("frame{r:04}.ply")),
                &merged.cloud,
                PlyEncoding::BinaryLittleEndian,
            )?;
        }
    }
    Ok(SyncOutput { mappings })
}

/// Registers the template onto each merged cloud, writing numbered meshes,
/// a manifest with per-frame residuals, and the dimension table.
pub fn cmd_register(
    config: &PipelineConfig,
    clouds_dir: &Path,
    template_path: &Path,
    out: &Path,
) -> Result<Vec<FootDimensions>> {
    use std::io::Write;
    let template = load_mesh(template_path)?;
    let params = config.registration_params();
    std::fs::create_dir_all(out)?;

    let mut cloud_paths: Vec<PathBuf> = std::fs::read_dir(clouds_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("ply"))
        .collect();
    cloud_paths.sort();
    if cloud_paths.is_empty() {
        bail!("no merged clouds in {}", clouds_dir.display());
    }

    let mut manifest = std::io::BufWriter::new(std::fs::File::create(out.join("manifest.txt"))?);
    writeln!(manifest, "registered 1")?;
    writeln!(manifest, "frames {}", cloud_paths.len())?;
    let mut dims_csv = std::io::BufWriter::new(std::fs::File::create(out.join("dims.csv"))?);
    writeln!(dims_csv, "frame,L_f,W_f,BW_f")?;

    let mut dims = Vec::with_capacity(cloud_paths.len());
    for (k, path) in cloud_paths.iter().enumerate() {
        let cloud = load_cloud(path)?;
        let (registered, report) = register_template(&template, &cloud, &params)?;
        let mesh_path = out.join(format!("frame{k:04}.obj"));
        save_mesh(&mesh_path, &registered, MeshFormat::Obj)?;
        let d = foot_dimensions(&registered, AxisFrame::default())?;
        writeln!(
            manifest,
            "frame {k} residual_mm {:.6} converged {} kept {}",
            report.final_residual, report.converged, report.kept_correspondences
        )?;
        writeln!(dims_csv, "{k},{:.6},{:.6},{:.6}", d.length, d.width, d.ball_width)?;
        dims.push(d);
    }
    if dims.len() >= 2 {
        let variation = dimension_variation(&dims)?;
        writeln!(
            manifest,
            "delta L_f {:.6} W_f {:.6} BW_f {:.6} mean_L {:.6}",
            variation.delta_length,
            variation.delta_width,
            variation.delta_ball_width,
            variation.mean_length
        )?;
    }
    Ok(dims)
}

/// Evaluates raw, exhaustive, and learned synchronization on a session with
/// the leave-one-camera-out CPGD protocol and writes the metrics report.
pub fn cmd_eval(
    config: &PipelineConfig,
    config_hash: &str,
    session_dir: &Path,
    graphs_dir: &Path,
    learned_sync_dir: &Path,
    out: &Path,
) -> Result<EvalReport> {
    let (frames, _, _) = load_session(session_dir)?;
    let graphs = load_graphs(graphs_dir)?;

    let mut methods = Vec::new();
    for method in ["raw", "exhaustive"] {
        let mappings = mappings_for_method(config, method, &graphs, &frames, None, None, None)?;
        methods.push(kfold_cpgd_eval(&frames, &mappings, method)?);
    }
    let learned = load_learned_mappings(learned_sync_dir, &frames)?;
    methods.push(kfold_cpgd_eval(&frames, &learned, "learned")?);

    let report = EvalReport { methods };
    write_metrics(out, &report, config_hash)?;
    Ok(report)
}

/// Reads the learned mappings a `sync` run wrote, ordered like the cameras.
pub fn load_learned_mappings(
    sync_dir: &Path,
    frames: &[Vec<Frame>],
) -> Result<Vec<FrameMapping>> {
    frames
        .iter()
        .map(|cam_frames| {
            let camera = cam_frames.first().map(|f| f.camera_id).unwrap_or(0);
            let path = sync_dir.join(format!("mapping_cam{camera}.txt"));
            read_frame_mapping(&path).with_context(|| path.display().to_string())
        })
        .collect()
}

/// Exports a dynamic graph's node positions as per-frame PLY clouds.
pub fn cmd_export_graph(graph_path: &Path, out: &Path) -> Result<()> {
    let graph = read_dynamic_graph(graph_path)?;
    std::fs::create_dir_all(out)?;
    for (slot, &frame) in graph.valid_frames().iter().enumerate() {
        let cloud: PointCloud = graph.positions_at_slot(slot);
        save_cloud(
            &out.join(format!("nodes{frame:04}.ply")),
            &cloud,
            PlyEncoding::Ascii,
        )?;
    }
    Ok(())
}

/// Fraction of frames a mapping assigns to the ground-truth reference frame.
pub fn mapping_accuracy(
    mappings: &[FrameMapping],
    truth: &CaptureTruth,
) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for (camera_index, mapping) in mappings.iter().enumerate().skip(1) {
        for &(src, reference) in &mapping.assignments {
            let expect = src as i64 + truth.per_camera[camera_index][src].offset_to_reference;
            total += 1;
            if reference as i64 == expect {
                correct += 1;
            }
        }
    }
    (correct, total)
}

/// Convenience: pairwise learned sync of two graphs with a caller-built
/// model (used by tests and the sync --pairwise path).
pub fn pairwise_with_model(
    reference: &DynamicGraph,
    other: &DynamicGraph,
    model: &SyncModel,
    labeling: &OffsetLabeling,
) -> Result<FrameMapping, SyncError> {
    pairwise_sync(reference, other, model, labeling)
}
