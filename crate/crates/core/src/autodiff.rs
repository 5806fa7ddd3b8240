//! Tape-based reverse-mode gradients over dense 2-D arrays.
//!
//! The op set is scoped to what the synchronization classifier needs:
//! matrix products, elementwise arithmetic and activations, row/column
//! reductions, broadcasts, column concatenation, and a fused softmax
//! cross-entropy. A forward pass records nodes on a [`Tape`]; `backward`
//! walks the tape once in reverse and accumulates exact gradients.

use ndarray::{Array2, Axis};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { requires_grad: bool },
    MatMul(Var, Var),
    Add(Var, Var),
    /// x (n×d) + row (1×d) broadcast over rows.
    AddRow(Var, Var),
    /// x + s with s a 1×1 tensor broadcast everywhere.
    AddScalar(Var, Var),
    Hadamard(Var, Var),
    /// Elementwise affine map; only the scale matters for the gradient.
    Affine { x: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// Sum of all entries → 1×1.
    Sum(Var),
    /// Sum over rows → 1×d.
    ColSum(Var),
    /// Replicate a 1×d row over n rows → n×d.
    BroadcastRow(Var),
    /// Column concatenation [a | b].
    ConcatCols(Var, Var),
    /// Stable `logsumexp(logits) - logits[label]` for a 1×C logits row.
    CrossEntropyLogits(Var, usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records a forward computation; values are available immediately.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a node; zero-shaped nodes that
    /// the loss does not depend on return `None`.
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads[var.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        assert_eq!(v.dim(), (1, 1), "not a scalar node");
        v[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { requires_grad: false })
    }

    /// Trainable input; `backward` produces its gradient.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { requires_grad: true })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let value = self.value(x) + self.value(row);
        self.push(value, Op::AddRow(x, row))
    }

    pub fn add_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.value(x).mapv(|v| v + sv);
        self.push(value, Op::AddScalar(x, s))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Hadamard(a, b))
    }

    /// `a + b * x` elementwise with constants `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let value = self.value(x).mapv(|v| a + b * v);
        self.push(value, Op::Affine { x, scale: b })
    }

    pub fn scale(&mut self, x: Var, b: f64) -> Var {
        self.affine(x, 0.0, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn col_sum(&mut self, x: Var) -> Var {
        let value = self.value(x).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::ColSum(x))
    }

    pub fn broadcast_row(&mut self, row: Var, rows: usize) -> Var {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let r = self.value(row).row(0).to_owned();
        let value = Array2::from_shape_fn((rows, r.len()), |(_, j)| r[j]);
        self.push(value, Op::BroadcastRow(row))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.nrows(), vb.nrows());
        let mut value = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
        value.slice_mut(ndarray::s![.., ..va.ncols()]).assign(va);
        value.slice_mut(ndarray::s![.., va.ncols()..]).assign(vb);
        self.push(value, Op::ConcatCols(a, b))
    }

    /// Cross-entropy of a 1×C logits row against a class label, computed as
    /// `logsumexp(logits) - logits[label]` with max subtraction.
    pub fn cross_entropy_logits(&mut self, logits: Var, label: usize) -> Var {
        let row = self.value(logits);
        debug_assert_eq!(row.nrows(), 1);
        debug_assert!(label < row.ncols());
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let value = Array2::from_elem((1, 1), lse - row[(0, label)]);
        self.push(value, Op::CrossEntropyLogits(logits, label))
    }

    /// Accumulates the new gradient `g` into slot `var`.
    fn accumulate(grads: &mut [Option<Array2<f64>>], var: Var, g: Array2<f64>) {
        match &mut grads[var.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse pass from a scalar loss node. Returns gradients for every
    /// node the loss depends on; leaves created with [`Tape::constant`] are
    /// skipped.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        grads[id] = Some(g);
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    Self::accumulate(&mut grads, *a, ga);
                    Self::accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    Self::accumulate(&mut grads, *a, g.clone());
                    Self::accumulate(&mut grads, *b, g);
                }
                Op::AddRow(x, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    Self::accumulate(&mut grads, *x, g);
                    Self::accumulate(&mut grads, *row, gr);
                }
                Op::AddScalar(x, s) => {
                    let gs = Array2::from_elem((1, 1), g.sum());
                    Self::accumulate(&mut grads, *x, g);
                    Self::accumulate(&mut grads, *s, gs);
                }
                Op::Hadamard(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    Self::accumulate(&mut grads, *a, ga);
                    Self::accumulate(&mut grads, *b, gb);
                }
                Op::Affine { x, scale } => {
                    Self::accumulate(&mut grads, *x, g.mapv(|v| v * scale));
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[id].value;
                    let gx = &g * &y.mapv(|v| v * (1.0 - v));
                    Self::accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[id].value;
                    let gx = &g * &y.mapv(|v| 1.0 - v * v);
                    Self::accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = &g * &self.value(*x).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    Self::accumulate(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let gx = Array2::from_elem(self.value(*x).dim(), g[(0, 0)]);
                    Self::accumulate(&mut grads, *x, gx);
                }
                Op::ColSum(x) => {
                    let dim = self.value(*x).dim();
                    let row = g.row(0).to_owned();
                    let gx = Array2::from_shape_fn(dim, |(_, j)| row[j]);
                    Self::accumulate(&mut grads, *x, gx);
                }
                Op::BroadcastRow(row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    Self::accumulate(&mut grads, *row, gr);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).ncols();
                    let ga = g.slice(ndarray::s![.., ..ca]).to_owned();
                    let gb = g.slice(ndarray::s![.., ca..]).to_owned();
                    Self::accumulate(&mut grads, *a, ga);
                    Self::accumulate(&mut grads, *b, gb);
                }
                Op::CrossEntropyLogits(logits, label) => {
                    let row = self.value(*logits);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps = row.mapv(|v| (v - max).exp());
                    let z = exps.sum();
                    let mut gx = exps.mapv(|v| v / z);
                    gx[(0, *label)] -= 1.0;
                    Self::accumulate(&mut grads, *logits, gx * g[(0, 0)]);
                }
            }
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_array(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Loss touching every op in the engine, as a function of three inputs.
    fn build_loss(
        tape: &mut Tape,
        w: Array2<f64>,
        x: Array2<f64>,
        b: Array2<f64>,
    ) -> (Var, Var, Var, Var) {
        let w = tape.param(w);
        let x = tape.param(x);
        let b = tape.param(b);
        let xw = tape.matmul(x, w);
        let xb = tape.add_row(xw, b);
        let s = tape.sigmoid(xb);
        let t = tape.tanh(xb);
        let h = tape.hadamard(s, t);
        let r = tape.relu(h);
        let cs = tape.col_sum(r);
        let bc = tape.broadcast_row(cs, 4);
        let a = tape.add(bc, r);
        let cat = tape.concat_cols(a, r);
        let aff = tape.affine(cat, 0.25, -1.5);
        let one = tape.param(array![[0.3]]);
        let shifted = tape.add_scalar(aff, one);
        let row = tape.col_sum(shifted);
        let ce = tape.cross_entropy_logits(row, 1);
        let total_pre = tape.sum(shifted);
        let scaled = tape.scale(total_pre, 0.01);
        let loss = tape.add(ce, scaled);
        (loss, w, x, b)
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let w0 = random_array(&mut rng, 3, 4);
        let x0 = random_array(&mut rng, 4, 3);
        let b0 = random_array(&mut rng, 1, 4);

        let mut tape = Tape::new();
        let (loss, w, x, b) = build_loss(&mut tape, w0.clone(), x0.clone(), b0.clone());
        let grads = tape.backward(loss);

        let eval = |w: &Array2<f64>, x: &Array2<f64>, b: &Array2<f64>| -> f64 {
            let mut t = Tape::new();
            let (l, _, _, _) = build_loss(&mut t, w.clone(), x.clone(), b.clone());
            t.scalar(l)
        };

        let eps = 1e-5;
        for (var, base) in [(w, &w0), (x, &x0), (b, &b0)] {
            let g = grads.get(var).unwrap();
            for idx in 0..base.len() {
                let (r, c) = (idx / base.ncols(), idx % base.ncols());
                let mut plus = base.clone();
                plus[(r, c)] += eps;
                let mut minus = base.clone();
                minus[(r, c)] -= eps;
                let (fp, fm) = match var {
                    v if v == w => (eval(&plus, &x0, &b0), eval(&minus, &x0, &b0)),
                    v if v == x => (eval(&w0, &plus, &b0), eval(&w0, &minus, &b0)),
                    _ => (eval(&w0, &x0, &plus), eval(&w0, &x0, &minus)),
                };
                let fd = (fp - fm) / (2.0 * eps);
                let ad = g[(r, c)];
                assert!(
                    (fd - ad).abs() <= 1e-6 + 1e-4 * fd.abs().max(ad.abs()),
                    "grad mismatch at ({r},{c}): fd {fd} ad {ad}"
                );
            }
        }
    }

    #[test]
    fn scaling_the_loss_scales_every_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let x0 = random_array(&mut rng, 2, 3);
        let grad_for_scale = |factor: f64| -> Array2<f64> {
            let mut tape = Tape::new();
            let x = tape.param(x0.clone());
            let s = tape.sigmoid(x);
            let total = tape.sum(s);
            let loss = tape.scale(total, factor);
            let grads = tape.backward(loss);
            grads.get(x).unwrap().clone()
        };
        let g1 = grad_for_scale(1.0);
        let g2 = grad_for_scale(2.0);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_vanishes_at_a_confident_optimum() {
        let mut tape = Tape::new();
        let logits = tape.param(array![[30.0, -30.0]]);
        let loss = tape.cross_entropy_logits(logits, 0);
        let grads = tape.backward(loss);
        let g = grads.get(logits).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9), "gradient {g:?}");
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(array![[1.0, 2.0]]);
        let p = tape.param(array![[3.0], [4.0]]);
        let y = tape.matmul(c, p);
        let loss = tape.sum(y);
        let grads = tape.backward(loss);
        assert!(grads.get(c).is_none());
        assert!(grads.get(p).is_some());
    }

    #[test]
    fn hadamard_of_a_node_with_itself_doubles_the_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(array![[3.0]]);
        let sq = tape.hadamard(x, x);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(x).unwrap()[(0, 0)], 6.0);
    }
}
