//! The outer registration loop: alternate closest-farthest-point
//! correspondences with normal-equation solves across the decreasing
//! stiffness schedule.

use super::blocks::SystemBlocks;
use super::solve::{assemble_and_solve, TransformStack};
use super::{RegistrationError, RegistrationParams};
use crate::geometry::{build_nn_index, Point3, PointCloud, TriMesh};
use crate::icfp::{correspondence_bound, icfp_match};

/// Outcome details alongside the registered mesh.
#[derive(Debug, Clone)]
pub struct RegistrationReport {
    /// False when the last stage exhausted its inner iterations while still
    /// moving more than the tolerance; the returned mesh is best-so-far.
    pub converged: bool,
    /// Mean kept-correspondence distance at the end (millimeters).
    pub final_residual: f64,
    /// Data-term energy after each stiffness stage.
    pub stage_data_energy: Vec<f64>,
    /// Correspondences kept (within the bound) at the end.
    pub kept_correspondences: usize,
}

/// Registers `template` onto `target`: per stiffness value, repeat
/// {match with the closest-farthest rules, keep matches within the bound,
/// solve} until the mean vertex movement drops below the inner tolerance.
/// Returns the deformed template (connectivity unchanged) and a report.
pub fn register_template(
    template: &TriMesh,
    target: &PointCloud,
    params: &RegistrationParams,
) -> Result<(TriMesh, RegistrationReport), RegistrationError> {
    params.validate()?;
    if template.vertex_count() == 0 {
        return Err(RegistrationError::EmptyMesh);
    }
    let target_index = build_nn_index(target)?;
    let n = template.vertex_count();
    let vertex_rows: Vec<[f64; 4]> =
        template.vertices().iter().map(|v| [v.x, v.y, v.z, 1.0]).collect();

    let mut x = TransformStack::identity(n);
    let mut converged = true;
    let mut stage_data_energy = Vec::with_capacity(params.alpha_schedule.len());
    let mut final_residual = 0.0;
    let mut kept_correspondences = 0;

    for &alpha in &params.alpha_schedule {
        let mut stage_converged = false;
        let mut last_energy = 0.0;
        for _ in 0..params.inner_iterations.max(1) {
            let deformed: Vec<Point3> =
                (0..n).map(|i| x.apply(i, &vertex_rows[i])).collect();
            let (map, _) = icfp_match(&deformed, &target_index, params.zeta)?;

            // Matches beyond the bound are unreliable (typically vertices
            // the scan does not cover) and get zero weight. The bound is
            // re-estimated over the kept matches until it settles, which
            // isolates the aligned cluster when a partial scan leaves a
            // bimodal distance distribution.
            let distances: Vec<f64> = map.pairs.iter().map(|p| p.2).collect();
            let gate = robust_gate(&distances, params.zeta)?;
            let mut weights = vec![0.0; n];
            let mut targets = vec![Point3::default(); n];
            let mut kept = 0;
            let mut kept_distance = 0.0;
            for &(i, j, d) in &map.pairs {
                if d <= gate {
                    weights[i] = 1.0;
                    targets[i] = target_index.point(j);
                    kept += 1;
                    kept_distance += d;
                }
            }
            kept_correspondences = kept;
            final_residual = if kept > 0 { kept_distance / kept as f64 } else { 0.0 };

            let blocks = SystemBlocks {
                vertex_rows: vertex_rows.clone(),
                weights,
                targets,
                edges: template.edges().to_vec(),
                gamma: params.gamma,
                curvature: None,
            };
            let new_x = assemble_and_solve(&blocks, alpha, &x)?;

            let movement: f64 = (0..n)
                .map(|i| {
                    let before = x.apply(i, &vertex_rows[i]);
                    let after = new_x.apply(i, &vertex_rows[i]);
                    before.sub(after).norm()
                })
                .sum::<f64>()
                / n as f64;
            last_energy = data_energy(&blocks, &new_x);
            x = new_x;
            if movement < params.inner_tol_mm {
                stage_converged = true;
                break;
            }
        }
        stage_data_energy.push(last_energy);
        converged = stage_converged;
    }

    let registered = template
        .with_vertices((0..n).map(|i| x.apply(i, &vertex_rows[i])).collect())
        .expect("vertex count unchanged");
    if !converged {
        log::warn!(
            "registration returned best-so-far: the final stage was still \
             moving more than {} mm per vertex",
            params.inner_tol_mm
        );
    }
    Ok((
        registered,
        RegistrationReport { converged, final_residual, stage_data_energy, kept_correspondences },
    ))
}

/// Iterated sigma-clipping of the correspondence bound: recompute
/// `l = m + ζσ` over the surviving distances until the kept set stabilizes.
fn robust_gate(distances: &[f64], zeta: f64) -> Result<f64, crate::icfp::IcfpError> {
    let mut kept: Vec<f64> = distances.to_vec();
    let mut gate = correspondence_bound(&kept, zeta)?;
    for _ in 0..32 {
        let next: Vec<f64> = kept.iter().copied().filter(|&d| d <= gate).collect();
        if next.len() == kept.len() || next.is_empty() {
            break;
        }
        kept = next;
        gate = correspondence_bound(&kept, zeta)?;
    }
    Ok(gate)
}

/// The data term `Σ w²‖v̂X − u‖²`.
fn data_energy(blocks: &SystemBlocks, x: &TransformStack) -> f64 {
    let mut total = 0.0;
    for i in 0..blocks.vertex_count() {
        let w = blocks.weights[i];
        if w == 0.0 {
            continue;
        }
        let p = x.apply(i, &blocks.vertex_rows[i]);
        let d = p.sub(blocks.targets[i]);
        total += w * w * d.dot(d);
    }
    total
}
