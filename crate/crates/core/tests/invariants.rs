//! Randomized invariant suite: softmax normalization, attention range, the
//! attention-enhanced hidden-state identity, mapping monotonicity, and
//! node-permutation equivariance.

use ndarray::Array2;
use proptest::prelude::*;
use scan4d_core::adgc::{
    adgc_cell, attention_scores, class_probs, forward_window, AdgcCellState, GraphStructure,
    ModelDims, SyncModel,
};
use scan4d_core::geometry::Point3;
use scan4d_core::sync::FrameMapping;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn softmax_normalizes_and_ignores_shifts(
        logits in prop::collection::vec(-50.0f64..50.0, 1..10),
        shift in -1000.0f64..1000.0,
    ) {
        let probs = class_probs(&logits);
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|p| *p > 0.0));

        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let shifted_probs = class_probs(&shifted);
        for (a, b) in probs.iter().zip(&shifted_probs) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_scores_stay_inside_the_open_unit_interval(
        seed in 0u64..1_000_000,
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..8),
    ) {
        let model = SyncModel::init(ModelDims::with_widths(3, 4, 4), seed);
        let n = rows.len();
        let h_hat = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j]);
        let alpha = attention_scores(&model, seed as usize % 3, &h_hat).unwrap();
        for a in alpha.iter() {
            prop_assert!(*a > 0.0 && *a < 1.0, "alpha {a}");
        }
    }

    #[test]
    fn hidden_state_equals_one_plus_alpha_times_intermediate(
        seed in 0u64..1_000_000,
        values in prop::collection::vec(-2.0f64..2.0, 5 * 4 * 3),
    ) {
        let n = 5;
        let hidden = 4;
        let model = SyncModel::init(ModelDims::with_widths(2, hidden, hidden), seed);
        let positions: Vec<Point3> =
            (0..n).map(|i| Point3::new(i as f64 * 7.0, (i % 2) as f64 * 5.0, 0.0)).collect();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let structure = GraphStructure::from_positions(&positions, &edges);
        let mut chunks = values.chunks_exact(n * hidden);
        let take = |chunk: &[f64]| Array2::from_shape_fn((n, hidden), |(i, j)| chunk[i * hidden + j]);
        let x = take(chunks.next().unwrap());
        let prev = AdgcCellState {
            h: take(chunks.next().unwrap()),
            c: take(chunks.next().unwrap()),
            h_hat: Array2::zeros((n, hidden)),
            alpha: Array2::zeros((n, 1)),
        };
        let out = adgc_cell(&model, &structure, seed as usize % 3, &x, &prev).unwrap();
        for i in 0..n {
            for j in 0..hidden {
                let expect = (1.0 + out.alpha[(i, 0)]) * out.h_hat[(i, j)];
                prop_assert!((out.h[(i, j)] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn frame_mappings_are_monotone_and_total(
        targets in prop::collection::vec(-5.0f64..60.0, 1..80),
        reference_count in 1usize..50,
    ) {
        let mapping = FrameMapping::from_targets(1, "prop", &targets, reference_count);
        prop_assert!(mapping.is_monotone_total(targets.len()));
        for &(_, r) in &mapping.assignments {
            prop_assert!(r < reference_count);
        }
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn forward_pass_is_node_permutation_equivariant(
        seed in 0u64..1_000_000,
        raw in prop::collection::vec(-40.0f64..40.0, 4 * 3 * 3),
        rotate in 1usize..4,
    ) {
        let n = 4;
        let steps = 3;
        let hidden = 5;
        // A fixed connected graph over well-separated positions.
        let positions: Vec<Point3> = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(20.0, 0.0, 0.0),
            Point3::new(0.0, 25.0, 0.0),
            Point3::new(20.0, 25.0, 10.0),
        ];
        let edges = vec![(0, 1), (0, 2), (1, 3), (2, 3)];
        let coords: Vec<Array2<f64>> = (0..steps)
            .map(|t| Array2::from_shape_fn((n, 3), |(i, j)| raw[t * n * 3 + i * 3 + j]))
            .collect();

        // Cyclic permutation by `rotate`.
        let perm: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect();
        let permuted_positions: Vec<Point3> = {
            let mut v = vec![Point3::new(0.0, 0.0, 0.0); n];
            for (i, &p) in perm.iter().enumerate() {
                v[p] = positions[i];
            }
            v
        };
        let permuted_edges: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| {
                let (pa, pb) = (perm[a], perm[b]);
                (pa.min(pb), pa.max(pb))
            })
            .collect();
        let permuted_coords: Vec<Array2<f64>> = coords
            .iter()
            .map(|c| {
                let mut out = Array2::zeros((n, 3));
                for i in 0..n {
                    for j in 0..3 {
                        out[(perm[i], j)] = c[(i, j)];
                    }
                }
                out
            })
            .collect();

        let model = SyncModel::init(ModelDims::with_widths(2, hidden, hidden), seed);
        let structure = GraphStructure::from_positions(&positions, &edges);
        let permuted_structure =
            GraphStructure::from_positions(&permuted_positions, &permuted_edges);

        let base =
            forward_window(&model, &structure, &coords, Some(1), 0.01, 0.001, false).unwrap();
        let permuted = forward_window(
            &model,
            &permuted_structure,
            &permuted_coords,
            Some(1),
            0.01,
            0.001,
            false,
        )
        .unwrap();

        // Per-node attention scores permute.
        for layer in 0..3 {
            for t in 0..steps {
                let a = base.tape.value(base.alphas[layer][t]);
                let b = permuted.tape.value(permuted.alphas[layer][t]);
                for i in 0..n {
                    prop_assert!((a[(i, 0)] - b[(perm[i], 0)]).abs() < 1e-10);
                }
            }
        }
        // Readout logits and the loss are invariant.
        for t in 0..steps {
            let lg_a = base.tape.value(base.logits_global[t]);
            let lg_b = permuted.tape.value(permuted.logits_global[t]);
            let ll_a = base.tape.value(base.logits_local[t]);
            let ll_b = permuted.tape.value(permuted.logits_local[t]);
            for c in 0..lg_a.ncols() {
                prop_assert!((lg_a[(0, c)] - lg_b[(0, c)]).abs() < 1e-10);
                prop_assert!((ll_a[(0, c)] - ll_b[(0, c)]).abs() < 1e-10);
            }
        }
        let loss_a = base.loss_breakdown().unwrap().total;
        let loss_b = permuted.loss_breakdown().unwrap().total;
        prop_assert!((loss_a - loss_b).abs() < 1e-10 * (1.0 + loss_a.abs()));
    }
}
