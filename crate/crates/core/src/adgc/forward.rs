//! Forward computation: partitioned graph convolution, the gated cell with
//! soft node attention, global/local readout, and the composite loss. One
//! implementation serves both training (on a gradient tape) and the plain
//! evaluation entry points.

use ndarray::Array2;

use super::model::{SyncModel, GATES};
use super::structure::GraphStructure;
use super::AdgcError;
use crate::autodiff::{Tape, Var};

/// Millimeter coordinates are scaled by this before embedding so activations
/// start in a well-conditioned range.
pub(crate) const COORD_SCALE: f64 = 0.01;

/// Hidden and cell state of one layer, plus the intermediate state and
/// attention scores produced on the way.
#[derive(Debug, Clone)]
pub struct AdgcCellState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
    pub h_hat: Array2<f64>,
    /// N×1 attention scores, each strictly inside (0, 1).
    pub alpha: Array2<f64>,
}

impl AdgcCellState {
    pub fn zeros(nodes: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((nodes, hidden)),
            c: Array2::zeros((nodes, hidden)),
            h_hat: Array2::zeros((nodes, hidden)),
            alpha: Array2::zeros((nodes, 1)),
        }
    }
}

/// Graph-structure constants bound onto a tape once per forward pass.
struct StructureVars {
    norm: Vec<Var>,
    ones_row: Var,
}

fn bind_structure(tape: &mut Tape, structure: &GraphStructure, hidden: usize) -> StructureVars {
    let norm = (0..structure.partition_count())
        .map(|k| tape.constant(structure.normalized_partition(k).clone()))
        .collect();
    let ones_row = tape.constant(Array2::ones((1, hidden)));
    StructureVars { norm, ones_row }
}

/// Partition-summed propagation of already-propagated inputs: given
/// `p[k] = norm_k · x`, returns `Σ_k p[k] · w[k]`.
fn bank_product(tape: &mut Tape, propagated: &[Var], weights: &[Var]) -> Var {
    let mut acc: Option<Var> = None;
    for (p, w) in propagated.iter().zip(weights) {
        let term = tape.matmul(*p, *w);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    acc.expect("at least one partition")
}

struct CellVars {
    w_x: Vec<Vec<Var>>,
    w_h: Vec<Vec<Var>>,
    bias: Vec<Var>,
}

impl CellVars {
    fn bind(bound: &BoundModel, layout: &super::model::CellLayout) -> Self {
        Self {
            w_x: layout.w_x.iter().map(|b| bound.bank(b)).collect(),
            w_h: layout.w_h.iter().map(|b| bound.bank(b)).collect(),
            bias: layout.bias.iter().map(|&i| bound.get(i)).collect(),
        }
    }
}

impl AttentionVars {
    fn bind(bound: &BoundModel, layout: &super::model::AttentionLayout) -> Self {
        Self {
            w_query: bound.get(layout.w_query),
            w_h: bound.get(layout.w_h),
            w_q: bound.get(layout.w_q),
            b_s: bound.get(layout.b_s),
            u_s: bound.get(layout.u_s),
            b_u: bound.get(layout.b_u),
        }
    }
}

struct AttentionVars {
    w_query: Var,
    w_h: Var,
    w_q: Var,
    b_s: Var,
    u_s: Var,
    b_u: Var,
}

struct CellStepVars {
    h: Var,
    c: Var,
    h_hat: Var,
    alpha: Var,
    /// α broadcast over hidden columns, reused by the local readout.
    alpha_bc: Var,
}

fn attention_step(tape: &mut Tape, h_hat: Var, att: &AttentionVars, nodes: usize) -> Var {
    let projected = tape.matmul(h_hat, att.w_query);
    let summed = tape.col_sum(projected);
    let q = tape.relu(summed);
    let hh = tape.matmul(h_hat, att.w_h);
    let qq = tape.matmul(q, att.w_q);
    let qq_rows = tape.broadcast_row(qq, nodes);
    let pre = tape.add(hh, qq_rows);
    let pre = tape.add_row(pre, att.b_s);
    let inner = tape.tanh(pre);
    let scored = tape.matmul(inner, att.u_s);
    let scored = tape.add_scalar(scored, att.b_u);
    tape.sigmoid(scored)
}

/// One gated step: the seven equations in order, with every gate transform a
/// partitioned graph convolution and the hidden state attention-enhanced as
/// `H = (1 + α) ⊙ Ĥ`.
fn cell_step(
    tape: &mut Tape,
    x: Var,
    prev_h: Var,
    prev_c: Var,
    cell: &CellVars,
    att: &AttentionVars,
    sv: &StructureVars,
    nodes: usize,
) -> CellStepVars {
    let px: Vec<Var> = sv.norm.iter().map(|n| tape.matmul(*n, x)).collect();
    let ph: Vec<Var> = sv.norm.iter().map(|n| tape.matmul(*n, prev_h)).collect();

    let mut pre_gates = Vec::with_capacity(GATES);
    for g in 0..GATES {
        let from_x = bank_product(tape, &px, &cell.w_x[g]);
        let from_h = bank_product(tape, &ph, &cell.w_h[g]);
        let sum = tape.add(from_x, from_h);
        pre_gates.push(tape.add_row(sum, cell.bias[g]));
    }
    let i = tape.sigmoid(pre_gates[0]);
    let f = tape.sigmoid(pre_gates[1]);
    let o = tape.sigmoid(pre_gates[2]);
    let u = tape.tanh(pre_gates[3]);

    let keep = tape.hadamard(f, prev_c);
    let write = tape.hadamard(i, u);
    let c = tape.add(keep, write);
    let c_act = tape.tanh(c);
    let h_hat = tape.hadamard(o, c_act);

    let alpha = attention_step(tape, h_hat, att, nodes);
    let alpha_bc = tape.matmul(alpha, sv.ones_row);
    let f_att = tape.hadamard(alpha_bc, h_hat);
    let h = tape.add(f_att, h_hat);

    CellStepVars { h, c, h_hat, alpha, alpha_bc }
}

/// Plain LSTM step shared across nodes (rows of `x`).
fn lstm_step(
    tape: &mut Tape,
    x: Var,
    prev_h: Var,
    prev_c: Var,
    w_x: &[Var],
    w_h: &[Var],
    bias: &[Var],
) -> (Var, Var) {
    let mut pre = Vec::with_capacity(GATES);
    for g in 0..GATES {
        let a = tape.matmul(x, w_x[g]);
        let b = tape.matmul(prev_h, w_h[g]);
        let s = tape.add(a, b);
        pre.push(tape.add_row(s, bias[g]));
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let u = tape.tanh(pre[3]);
    let keep = tape.hadamard(f, prev_c);
    let write = tape.hadamard(i, u);
    let c = tape.add(keep, write);
    let c_act = tape.tanh(c);
    let h = tape.hadamard(o, c_act);
    (h, c)
}

/// Model parameters bound onto a tape, in layout order.
struct BoundModel {
    vars: Vec<Var>,
}

impl BoundModel {
    fn bind(tape: &mut Tape, model: &SyncModel, trainable: bool) -> Self {
        let vars = model
            .params()
            .iter()
            .map(|p| if trainable { tape.param(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        Self { vars }
    }

    fn get(&self, index: usize) -> Var {
        self.vars[index]
    }

    fn bank(&self, indices: &[usize]) -> Vec<Var> {
        indices.iter().map(|&i| self.vars[i]).collect()
    }
}

/// Loss terms as tape nodes.
pub struct LossVars {
    pub total: Var,
    pub ce_global: Var,
    pub ce_local: Var,
    pub reg_focus: Var,
    pub reg_count: Var,
}

/// Evaluated loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce_global: f64,
    pub ce_local: f64,
    pub reg_focus: f64,
    pub reg_count: f64,
}

/// A full recorded forward pass over one window.
pub struct ForwardOutput {
    pub tape: Tape,
    /// Parameter vars in the model's layout order.
    pub param_vars: Vec<Var>,
    /// Per-step global and local class logits from the final layer.
    pub logits_global: Vec<Var>,
    pub logits_local: Vec<Var>,
    /// Attention scores per layer per step (N×1 nodes).
    pub alphas: Vec<Vec<Var>>,
    pub loss: Option<LossVars>,
}

impl ForwardOutput {
    pub fn loss_breakdown(&self) -> Option<LossBreakdown> {
        self.loss.as_ref().map(|l| LossBreakdown {
            total: self.tape.scalar(l.total),
            ce_global: self.tape.scalar(l.ce_global),
            ce_local: self.tape.scalar(l.ce_local),
            reg_focus: self.tape.scalar(l.reg_focus),
            reg_count: self.tape.scalar(l.reg_count),
        })
    }
}

fn add_chain(tape: &mut Tape, terms: &[Var]) -> Var {
    let mut acc = terms[0];
    for t in &terms[1..] {
        acc = tape.add(acc, *t);
    }
    acc
}

/// Records a forward pass over a window of per-step node coordinates
/// (each N×3, millimeters). With a label, the composite loss is recorded too.
pub fn forward_window(
    model: &SyncModel,
    structure: &GraphStructure,
    coords: &[Array2<f64>],
    label: Option<usize>,
    lambda_bar: f64,
    beta_bar: f64,
    trainable: bool,
) -> Result<ForwardOutput, AdgcError> {
    let dims = *model.dims();
    let nodes = structure.node_count();
    if coords.is_empty() {
        return Err(AdgcError::ShapeMismatch("empty window".into()));
    }
    for (t, c) in coords.iter().enumerate() {
        if c.dim() != (nodes, 3) {
            return Err(AdgcError::ShapeMismatch(format!(
                "step {t}: coordinates are {:?}, expected ({nodes}, 3)",
                c.dim()
            )));
        }
    }
    if let Some(y) = label {
        if y >= dims.classes {
            return Err(AdgcError::ClassOutOfRange { label: y, classes: dims.classes });
        }
    }

    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, trainable);
    let layout = model.layout();
    let sv = bind_structure(&mut tape, structure, dims.hidden_dim);
    let steps = coords.len();

    // Embedding: P_t for every step.
    let embed_w = bound.get(layout.embed_w);
    let embed_b = bound.get(layout.embed_b);
    let mut embedded = Vec::with_capacity(steps);
    for c in coords {
        let x = tape.constant(c.mapv(|v| v * COORD_SCALE));
        let p = tape.matmul(x, embed_w);
        embedded.push(tape.add_row(p, embed_b));
    }

    // Shared LSTM over concat(P_t, P_{t-1}); the first step reuses P_0 as
    // its predecessor (zero motion at the boundary).
    let lstm_w_x = bound.bank(&layout.lstm_w_x);
    let lstm_w_h = bound.bank(&layout.lstm_w_h);
    let lstm_b = bound.bank(&layout.lstm_b);
    let mut h = tape.constant(Array2::zeros((nodes, dims.hidden_dim)));
    let mut c = tape.constant(Array2::zeros((nodes, dims.hidden_dim)));
    let mut augmented = Vec::with_capacity(steps);
    for t in 0..steps {
        let prev = if t == 0 { embedded[0] } else { embedded[t - 1] };
        let v = tape.concat_cols(embedded[t], prev);
        let (nh, nc) = lstm_step(&mut tape, v, h, c, &lstm_w_x, &lstm_w_h, &lstm_b);
        h = nh;
        c = nc;
        augmented.push(h);
    }

    // Three graph-LSTM layers; the attention-enhanced hidden state feeds the
    // next layer.
    let mut layer_inputs = augmented;
    let mut alphas: Vec<Vec<Var>> = Vec::with_capacity(dims.layers);
    let mut final_states: Vec<CellStepVars> = Vec::new();
    for (cell_layout, att_layout) in &layout.layers {
        let cell = CellVars::bind(&bound, cell_layout);
        let att = AttentionVars::bind(&bound, att_layout);
        let mut prev_h = tape.constant(Array2::zeros((nodes, dims.hidden_dim)));
        let mut prev_c = tape.constant(Array2::zeros((nodes, dims.hidden_dim)));
        let mut layer_alphas = Vec::with_capacity(steps);
        let mut states = Vec::with_capacity(steps);
        for x in &layer_inputs {
            let s = cell_step(&mut tape, *x, prev_h, prev_c, &cell, &att, &sv, nodes);
            prev_h = s.h;
            prev_c = s.c;
            layer_alphas.push(s.alpha);
            states.push(s);
        }
        layer_inputs = states.iter().map(|s| s.h).collect();
        alphas.push(layer_alphas);
        final_states = states;
    }

    // Per-step readout from the final layer.
    let head_g_w = bound.get(layout.head_g_w);
    let head_g_b = bound.get(layout.head_g_b);
    let head_l_w = bound.get(layout.head_l_w);
    let head_l_b = bound.get(layout.head_l_b);
    let mut logits_global = Vec::with_capacity(steps);
    let mut logits_local = Vec::with_capacity(steps);
    for s in &final_states {
        let f_g = tape.col_sum(s.h);
        let local_terms = tape.hadamard(s.alpha_bc, s.h_hat);
        let f_l = tape.col_sum(local_terms);
        let og = tape.matmul(f_g, head_g_w);
        logits_global.push(tape.add_row(og, head_g_b));
        let ol = tape.matmul(f_l, head_l_w);
        logits_local.push(tape.add_row(ol, head_l_b));
    }

    let loss = label.map(|y| {
        let ce_g_terms: Vec<Var> =
            logits_global.iter().map(|&o| tape.cross_entropy_logits(o, y)).collect();
        let ce_l_terms: Vec<Var> =
            logits_local.iter().map(|&o| tape.cross_entropy_logits(o, y)).collect();
        let ce_global = add_chain(&mut tape, &ce_g_terms);
        let ce_local = add_chain(&mut tape, &ce_l_terms);

        // λ̄ Σ_j Σ_n (1 - Σ_t α_tnj / T_j)²
        let t_inv = 1.0 / steps as f64;
        let mut focus_terms = Vec::with_capacity(alphas.len());
        for layer_alphas in &alphas {
            let summed = add_chain(&mut tape, layer_alphas);
            let mean = tape.scale(summed, t_inv);
            let dev = tape.affine(mean, 1.0, -1.0);
            let sq = tape.hadamard(dev, dev);
            focus_terms.push(tape.sum(sq));
        }
        let focus_sum = add_chain(&mut tape, &focus_terms);
        let reg_focus = tape.scale(focus_sum, lambda_bar);

        // β̄ Σ_j (1/T_j) Σ_t (Σ_n α_tnj)²
        let mut count_terms = Vec::with_capacity(alphas.len());
        for layer_alphas in &alphas {
            let per_step: Vec<Var> = layer_alphas
                .iter()
                .map(|&a| {
                    let s = tape.sum(a);
                    tape.hadamard(s, s)
                })
                .collect();
            let layer_sum = add_chain(&mut tape, &per_step);
            count_terms.push(tape.scale(layer_sum, t_inv));
        }
        let count_sum = add_chain(&mut tape, &count_terms);
        let reg_count = tape.scale(count_sum, beta_bar);

        let ce = tape.add(ce_global, ce_local);
        let regs = tape.add(reg_focus, reg_count);
        let total = tape.add(ce, regs);
        LossVars { total, ce_global, ce_local, reg_focus, reg_count }
    });

    Ok(ForwardOutput {
        param_vars: bound.vars,
        logits_global,
        logits_local,
        alphas,
        loss,
        tape,
    })
}

/// Numerically stable softmax.
pub fn class_probs(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Average class probabilities over all steps and both heads for one window.
pub fn predict_window(
    model: &SyncModel,
    structure: &GraphStructure,
    coords: &[Array2<f64>],
) -> Result<Vec<f64>, AdgcError> {
    let out = forward_window(model, structure, coords, None, 0.0, 0.0, false)?;
    let classes = model.dims().classes;
    let mut acc = vec![0.0; classes];
    let mut count = 0.0;
    for logits in out.logits_global.iter().chain(&out.logits_local) {
        let row = out.tape.value(*logits);
        let probs = class_probs(row.row(0).as_slice().expect("contiguous row"));
        for (a, p) in acc.iter_mut().zip(&probs) {
            *a += p;
        }
        count += 1.0;
    }
    for a in &mut acc {
        *a /= count;
    }
    Ok(acc)
}

/// Partition-summed normalized graph convolution `Σ_k norm_k · X · W_k`.
pub fn graph_conv(
    x: &Array2<f64>,
    structure: &GraphStructure,
    weights: &[Array2<f64>],
) -> Result<Array2<f64>, AdgcError> {
    if weights.len() != structure.partition_count() {
        return Err(AdgcError::ShapeMismatch(format!(
            "{} weight matrices for {} partitions",
            weights.len(),
            structure.partition_count()
        )));
    }
    if x.nrows() != structure.node_count() {
        return Err(AdgcError::ShapeMismatch(format!(
            "input has {} rows for {} nodes",
            x.nrows(),
            structure.node_count()
        )));
    }
    for w in weights {
        if w.nrows() != x.ncols() {
            return Err(AdgcError::ShapeMismatch(format!(
                "weight is {:?} but input has {} columns",
                w.dim(),
                x.ncols()
            )));
        }
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let propagated: Vec<Var> = (0..structure.partition_count())
        .map(|k| {
            let n = tape.constant(structure.normalized_partition(k).clone());
            tape.matmul(n, xv)
        })
        .collect();
    let wv: Vec<Var> = weights.iter().map(|w| tape.constant(w.clone())).collect();
    let out = bank_product(&mut tape, &propagated, &wv);
    Ok(tape.value(out).clone())
}

/// One gated step of layer `layer` evaluated outside any training loop.
pub fn adgc_cell(
    model: &SyncModel,
    structure: &GraphStructure,
    layer: usize,
    x: &Array2<f64>,
    prev: &AdgcCellState,
) -> Result<AdgcCellState, AdgcError> {
    let dims = *model.dims();
    let nodes = structure.node_count();
    let expect = (nodes, dims.hidden_dim);
    if x.dim() != expect || prev.h.dim() != expect || prev.c.dim() != expect {
        return Err(AdgcError::ShapeMismatch(format!(
            "cell shapes: x {:?}, h {:?}, c {:?}, expected {expect:?}",
            x.dim(),
            prev.h.dim(),
            prev.c.dim()
        )));
    }
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, false);
    let sv = bind_structure(&mut tape, structure, dims.hidden_dim);
    let (cell_layout, att_layout) = &model.layout().layers[layer];
    let cell = CellVars::bind(&bound, cell_layout);
    let att = AttentionVars::bind(&bound, att_layout);
    let xv = tape.constant(x.clone());
    let hv = tape.constant(prev.h.clone());
    let cv = tape.constant(prev.c.clone());
    let s = cell_step(&mut tape, xv, hv, cv, &cell, &att, &sv, nodes);
    Ok(AdgcCellState {
        h: tape.value(s.h).clone(),
        c: tape.value(s.c).clone(),
        h_hat: tape.value(s.h_hat).clone(),
        alpha: tape.value(s.alpha).clone(),
    })
}

/// Soft node attention scores for an intermediate hidden state, using layer
/// `layer`'s attention parameters. Every score is strictly inside (0, 1).
pub fn attention_scores(
    model: &SyncModel,
    layer: usize,
    h_hat: &Array2<f64>,
) -> Result<Array2<f64>, AdgcError> {
    if h_hat.ncols() != model.dims().hidden_dim {
        return Err(AdgcError::ShapeMismatch(format!(
            "state has {} columns, expected {}",
            h_hat.ncols(),
            model.dims().hidden_dim
        )));
    }
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, false);
    let att_layout = &model.layout().layers[layer].1;
    let att = AttentionVars::bind(&bound, att_layout);
    let hv = tape.constant(h_hat.clone());
    let alpha = attention_step(&mut tape, hv, &att, h_hat.nrows());
    Ok(tape.value(alpha).clone())
}

/// Global and local readout with class logits.
#[derive(Debug, Clone)]
pub struct Readout {
    pub f_global: Vec<f64>,
    pub f_local: Vec<f64>,
    pub logits_global: Vec<f64>,
    pub logits_local: Vec<f64>,
}

/// Readout from a final-layer state: the global feature sums the
/// attention-enhanced states, the local feature is the attention-weighted sum
/// of intermediate states.
pub fn readout(model: &SyncModel, state: &AdgcCellState) -> Result<Readout, AdgcError> {
    let h = model.dims().hidden_dim;
    if state.h.ncols() != h || state.h_hat.ncols() != h || state.alpha.ncols() != 1 {
        return Err(AdgcError::ShapeMismatch("readout state shapes".into()));
    }
    let layout = model.layout();
    let params = model.params();
    let nodes = state.h.nrows();
    let mut f_global = vec![0.0; h];
    let mut f_local = vec![0.0; h];
    for n in 0..nodes {
        for j in 0..h {
            f_global[j] += state.h[(n, j)];
            f_local[j] += state.alpha[(n, 0)] * state.h_hat[(n, j)];
        }
    }
    let project = |f: &[f64], w: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
        (0..w.ncols())
            .map(|cix| {
                let mut v = b[(0, cix)];
                for (j, fj) in f.iter().enumerate() {
                    v += fj * w[(j, cix)];
                }
                v
            })
            .collect()
    };
    let logits_global = project(&f_global, &params[layout.head_g_w], &params[layout.head_g_b]);
    let logits_local = project(&f_local, &params[layout.head_l_w], &params[layout.head_l_b]);
    Ok(Readout { f_global, f_local, logits_global, logits_local })
}

/// Recurrent state of the shared per-node LSTM.
#[derive(Debug, Clone)]
pub struct SharedLstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl SharedLstmState {
    pub fn zeros(nodes: usize, hidden: usize) -> Self {
        Self { h: Array2::zeros((nodes, hidden)), c: Array2::zeros((nodes, hidden)) }
    }
}

/// One step of the feature augmentation: the shared LSTM over the
/// concatenation of the current and previous embedded node features. Pass
/// `p_prev = p_t` at the first frame (zero motion at the boundary). Returns
/// the augmented features `E_t` and the advanced state.
pub fn augment_features(
    model: &SyncModel,
    p_t: &Array2<f64>,
    p_prev: &Array2<f64>,
    state: &SharedLstmState,
) -> Result<(Array2<f64>, SharedLstmState), AdgcError> {
    let dims = *model.dims();
    if p_t.ncols() != dims.embed_dim || p_prev.dim() != p_t.dim() {
        return Err(AdgcError::ShapeMismatch(format!(
            "embedded features are {:?} and {:?}, expected (*, {})",
            p_t.dim(),
            p_prev.dim(),
            dims.embed_dim
        )));
    }
    let layout = model.layout();
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, false);
    let w_x = bound.bank(&layout.lstm_w_x);
    let w_h = bound.bank(&layout.lstm_w_h);
    let b = bound.bank(&layout.lstm_b);
    let pt = tape.constant(p_t.clone());
    let pp = tape.constant(p_prev.clone());
    let v = tape.concat_cols(pt, pp);
    let hv = tape.constant(state.h.clone());
    let cv = tape.constant(state.c.clone());
    let (h, c) = lstm_step(&mut tape, v, hv, cv, &w_x, &w_h, &b);
    let e = tape.value(h).clone();
    Ok((e.clone(), SharedLstmState { h: e, c: tape.value(c).clone() }))
}

/// The four-term training loss from per-step class probabilities and the
/// recorded attention histories (`alphas[layer][step][node]`).
pub fn composite_loss(
    probs_global: &[Vec<f64>],
    probs_local: &[Vec<f64>],
    label_onehot: &[f64],
    alphas: &[Vec<Vec<f64>>],
    lambda_bar: f64,
    beta_bar: f64,
) -> Result<LossBreakdown, AdgcError> {
    let ones = label_onehot.iter().filter(|&&v| v == 1.0).count();
    if ones != 1 || label_onehot.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(AdgcError::LabelNotOneHot);
    }
    let label = label_onehot.iter().position(|&v| v == 1.0).unwrap();

    let ce = |probs: &[Vec<f64>]| -> f64 {
        probs.iter().map(|p| -p[label].ln()).sum()
    };
    let ce_global = ce(probs_global);
    let ce_local = ce(probs_local);

    let mut reg_focus = 0.0;
    let mut reg_count = 0.0;
    for layer in alphas {
        let t = layer.len() as f64;
        let nodes = layer.first().map(|a| a.len()).unwrap_or(0);
        for n in 0..nodes {
            let mean: f64 = layer.iter().map(|a| a[n]).sum::<f64>() / t;
            reg_focus += (1.0 - mean) * (1.0 - mean);
        }
        let mut step_sq = 0.0;
        for a in layer {
            let s: f64 = a.iter().sum();
            step_sq += s * s;
        }
        reg_count += step_sq / t;
    }
    reg_focus *= lambda_bar;
    reg_count *= beta_bar;

    Ok(LossBreakdown {
        total: ce_global + ce_local + reg_focus + reg_count,
        ce_global,
        ce_local,
        reg_focus,
        reg_count,
    })
}
