//! Model parameters: dimensions, layout, and seeded initialization.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::structure::DEFAULT_PARTITIONS;

/// Gate order used everywhere: input, forget, output, modulation.
pub(crate) const GATES: usize = 4;

/// Network dimensions. Defaults: 256-wide coordinate embedding, 256-wide
/// hidden states, three graph-LSTM layers, K = 3 partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub classes: usize,
    pub partitions: usize,
}

impl ModelDims {
    pub fn new(classes: usize) -> Self {
        Self { embed_dim: 256, hidden_dim: 256, layers: 3, classes, partitions: DEFAULT_PARTITIONS }
    }

    /// Smaller widths for desk-scale runs; layer count and partitioning stay
    /// fixed.
    pub fn with_widths(classes: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        Self { embed_dim, hidden_dim, layers: 3, classes, partitions: DEFAULT_PARTITIONS }
    }
}

/// Indices of one gate's graph-convolution banks inside the flat parameter
/// list: K matrices over the step input and K over the previous hidden state.
#[derive(Debug, Clone)]
pub struct CellLayout {
    pub w_x: [Vec<usize>; GATES],
    pub w_h: [Vec<usize>; GATES],
    pub bias: [usize; GATES],
}

#[derive(Debug, Clone)]
pub struct AttentionLayout {
    /// Query projection applied before node summation.
    pub w_query: usize,
    pub w_h: usize,
    pub w_q: usize,
    pub b_s: usize,
    pub u_s: usize,
    pub b_u: usize,
}

/// Named indices into the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub embed_w: usize,
    pub embed_b: usize,
    pub lstm_w_x: [usize; GATES],
    pub lstm_w_h: [usize; GATES],
    pub lstm_b: [usize; GATES],
    pub layers: Vec<(CellLayout, AttentionLayout)>,
    pub head_g_w: usize,
    pub head_g_b: usize,
    pub head_l_w: usize,
    pub head_l_b: usize,
}

/// All trainable parameters of the synchronization classifier.
#[derive(Debug, Clone)]
pub struct SyncModel {
    dims: ModelDims,
    layout: Layout,
    params: Vec<Array2<f64>>,
}

struct Builder {
    shapes: Vec<(usize, usize)>,
}

impl Builder {
    fn add(&mut self, rows: usize, cols: usize) -> usize {
        self.shapes.push((rows, cols));
        self.shapes.len() - 1
    }

    fn bank(&mut self, k: usize, rows: usize, cols: usize) -> Vec<usize> {
        (0..k).map(|_| self.add(rows, cols)).collect()
    }
}

fn build_layout(dims: &ModelDims) -> (Layout, Vec<(usize, usize)>) {
    let mut b = Builder { shapes: Vec::new() };
    let (e, h, c, k) = (dims.embed_dim, dims.hidden_dim, dims.classes, dims.partitions);

    let embed_w = b.add(3, e);
    let embed_b = b.add(1, e);
    let lstm_w_x = std::array::from_fn(|_| b.add(2 * e, h));
    let lstm_w_h = std::array::from_fn(|_| b.add(h, h));
    let lstm_b = std::array::from_fn(|_| b.add(1, h));

    let mut layers = Vec::with_capacity(dims.layers);
    for _ in 0..dims.layers {
        let cell = CellLayout {
            w_x: std::array::from_fn(|_| b.bank(k, h, h)),
            w_h: std::array::from_fn(|_| b.bank(k, h, h)),
            bias: std::array::from_fn(|_| b.add(1, h)),
        };
        let att = AttentionLayout {
            w_query: b.add(h, h),
            w_h: b.add(h, h),
            w_q: b.add(h, h),
            b_s: b.add(1, h),
            u_s: b.add(h, 1),
            b_u: b.add(1, 1),
        };
        layers.push((cell, att));
    }

    let head_g_w = b.add(h, c);
    let head_g_b = b.add(1, c);
    let head_l_w = b.add(h, c);
    let head_l_b = b.add(1, c);

    (
        Layout {
            embed_w,
            embed_b,
            lstm_w_x,
            lstm_w_h,
            lstm_b,
            layers,
            head_g_w,
            head_g_b,
            head_l_w,
            head_l_b,
        },
        b.shapes,
    )
}

impl SyncModel {
    /// Seeded initialization: weights uniform in ±sqrt(1/fan_in), biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let (layout, shapes) = build_layout(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shapes
            .iter()
            .map(|&(rows, cols)| {
                if rows == 1 {
                    Array2::zeros((rows, cols))
                } else {
                    let a = (1.0 / rows as f64).sqrt();
                    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
                }
            })
            .collect();
        Self { dims, layout, params }
    }

    pub(crate) fn from_params(dims: ModelDims, params: Vec<Array2<f64>>) -> Self {
        let (layout, shapes) = build_layout(&dims);
        assert_eq!(params.len(), shapes.len(), "parameter count mismatch");
        for (p, &(r, c)) in params.iter().zip(&shapes) {
            assert_eq!(p.dim(), (r, c), "parameter shape mismatch");
        }
        Self { dims, layout, params }
    }

    pub(crate) fn expected_shapes(dims: &ModelDims) -> Vec<(usize, usize)> {
        build_layout(dims).1
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}
