use std::time::Instant;
use scan4d_cli::config::PipelineConfig;
use scan4d_cli::pipeline::{mapping_accuracy, mappings_for_method};
use scan4d_core::icfp::build_dynamic_graph;
use scan4d_core::sim::simulate_session;
use scan4d_core::sync::kfold_cpgd_eval;

fn main() {
    let config = PipelineConfig::default();
    let t0 = Instant::now();
    let session = simulate_session(&config.session_config());
    println!("simulate: {:.1?} (max |offset| {})", t0.elapsed(), session.truth.max_abs_offset());
    // Offset histogram per camera
    for (ci, cam) in session.truth.per_camera.iter().enumerate() {
        let offs: Vec<i64> = cam.iter().map(|f| f.offset_to_reference).collect();
        let nonzero = offs.iter().filter(|&&o| o != 0).count();
        println!("  cam{} nonzero offsets: {} / {}", ci + 1, nonzero, offs.len());
    }

    let t1 = Instant::now();
    let params = config.icfp_params();
    let graphs: Vec<_> = session
        .frames
        .iter()
        .map(|f| build_dynamic_graph(f, &params, config.graph.knn_edges).unwrap())
        .collect();
    println!("graphs: {:.1?}", t1.elapsed());
    for g in &graphs {
        println!("  cam{:?}: {} nodes, {} frames", g.camera_id, g.node_count(), g.valid_frames().len());
    }

    let t2 = Instant::now();
    let raw = mappings_for_method(&config, "raw", &graphs, &session.frames, None, None, None).unwrap();
    let (c, t) = mapping_accuracy(&raw, &session.truth);
    println!("raw accuracy: {}/{} = {:.3}", c, t, c as f64 / t as f64);

    let exhaustive = mappings_for_method(&config, "exhaustive", &graphs, &session.frames, None, None, None).unwrap();
    let (c, t) = mapping_accuracy(&exhaustive, &session.truth);
    println!("exhaustive accuracy: {}/{} = {:.3} ({:.1?})", c, t, c as f64 / t as f64, t2.elapsed());

    let t3 = Instant::now();
    let learned = mappings_for_method(&config, "learned", &graphs, &session.frames, None, None, None).unwrap();
    let (c, t) = mapping_accuracy(&learned, &session.truth);
    println!("learned accuracy: {}/{} = {:.3} ({:.1?})", c, t, c as f64 / t as f64, t3.elapsed());

    let t4 = Instant::now();
    let e_raw = kfold_cpgd_eval(&session.frames, &raw, "raw").unwrap();
    let e_ex = kfold_cpgd_eval(&session.frames, &exhaustive, "exhaustive").unwrap();
    let e_lr = kfold_cpgd_eval(&session.frames, &learned, "learned").unwrap();
    println!("eval: {:.1?}", t4.elapsed());
    println!("rmse raw {:.4} exhaustive {:.4} learned {:.4}", e_raw.rmse_directional, e_ex.rmse_directional, e_lr.rmse_directional);
    println!("ratio learned/raw = {:.3}", e_lr.rmse_directional / e_raw.rmse_directional);
    let pi_ex = 100.0 * (e_raw.rmse_directional - e_ex.rmse_directional) / e_raw.rmse_directional;
    let pi_lr = 100.0 * (e_raw.rmse_directional - e_lr.rmse_directional) / e_raw.rmse_directional;
    println!("PI exhaustive {:.1}% learned {:.1}% (learned/exhaustive improvement ratio {:.3})", pi_ex, pi_lr, pi_lr / pi_ex);
    println!("total: {:.1?}", t0.elapsed());
}
