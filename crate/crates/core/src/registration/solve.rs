//! Normal-equations solve: `AᵀA X = AᵀB` for the stacked energy, with
//! `AᵀA = α²(MᵀM)⊗G² + DᵀW²D` applied matrix-free through a Jacobi-
//! preconditioned conjugate gradient.

use ndarray::Array2;

use super::blocks::{stiffness_apply, SystemBlocks};
use super::RegistrationError;

/// Per-vertex 4×3 affine transforms, stacked into a 4n×3 matrix. A vertex's
/// new position is `(x, y, z, 1) · X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStack {
    x: Array2<f64>,
}

impl TransformStack {
    pub fn identity(vertex_count: usize) -> Self {
        let mut x = Array2::zeros((4 * vertex_count, 3));
        for i in 0..vertex_count {
            for a in 0..3 {
                x[(4 * i + a, a)] = 1.0;
            }
        }
        Self { x }
    }

    /// A single 4×3 block replicated for every vertex.
    pub fn uniform(vertex_count: usize, block: &Array2<f64>) -> Self {
        assert_eq!(block.dim(), (4, 3));
        let mut x = Array2::zeros((4 * vertex_count, 3));
        for i in 0..vertex_count {
            for a in 0..4 {
                for c in 0..3 {
                    x[(4 * i + a, c)] = block[(a, c)];
                }
            }
        }
        Self { x }
    }

    pub fn from_matrix(x: Array2<f64>) -> Self {
        assert_eq!(x.nrows() % 4, 0);
        assert_eq!(x.ncols(), 3);
        Self { x }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn vertex_count(&self) -> usize {
        self.x.nrows() / 4
    }

    /// Applies vertex `i`'s transform to a homogeneous row.
    pub fn apply(&self, i: usize, row: &[f64; 4]) -> crate::geometry::Point3 {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            for a in 0..4 {
                *o += row[a] * self.x[(4 * i + a, c)];
            }
        }
        crate::geometry::Point3::new(out[0], out[1], out[2])
    }
}

/// The quadratic energy `α²‖(M⊗G)X‖²_F + ‖W(DX − U)‖²_F`.
pub fn energy(blocks: &SystemBlocks, alpha: f64, x: &TransformStack) -> f64 {
    let stiff = stiffness_apply(blocks, x.matrix());
    let mut total = alpha * alpha * stiff.iter().map(|v| v * v).sum::<f64>();
    for (i, row) in blocks.vertex_rows.iter().enumerate() {
        let w = blocks.weights[i];
        if w == 0.0 {
            continue;
        }
        let p = x.apply(i, row);
        let u = blocks.targets[i];
        total += w * w * p.sub(u).dot(p.sub(u));
    }
    total
}

/// Matrix-free application of `AᵀA` for one column layout 4n.
struct NormalOperator<'a> {
    blocks: &'a SystemBlocks,
    alpha2: f64,
    g2: [f64; 4],
    degree: Vec<f64>,
    /// Per-vertex 4×4 symmetric `w² v̂ v̂ᵀ`.
    data_blocks: Vec<[[f64; 4]; 4]>,
}

impl<'a> NormalOperator<'a> {
    fn new(blocks: &'a SystemBlocks, alpha: f64) -> Self {
        let n = blocks.vertex_count();
        let mut degree = vec![0.0; n];
        for &(i, j) in &blocks.edges {
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
        let data_blocks = blocks
            .vertex_rows
            .iter()
            .zip(&blocks.weights)
            .map(|(row, &w)| {
                let mut b = [[0.0; 4]; 4];
                if w != 0.0 {
                    for a in 0..4 {
                        for c in 0..4 {
                            b[a][c] = w * w * row[a] * row[c];
                        }
                    }
                }
                b
            })
            .collect();
        let g = blocks.gamma;
        Self { blocks, alpha2: alpha * alpha, g2: [1.0, 1.0, 1.0, g * g], degree, data_blocks }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.blocks.vertex_count();
        // Stiffness part: α² G² ⊗ graph Laplacian.
        for i in 0..n {
            for a in 0..4 {
                y[4 * i + a] = self.alpha2 * self.g2[a] * self.degree[i] * x[4 * i + a];
            }
        }
        for &(i, j) in &self.blocks.edges {
            for a in 0..4 {
                let f = self.alpha2 * self.g2[a];
                y[4 * i + a] -= f * x[4 * j + a];
                y[4 * j + a] -= f * x[4 * i + a];
            }
        }
        // Data part: block-diagonal w² v̂ v̂ᵀ.
        for i in 0..n {
            let b = &self.data_blocks[i];
            for a in 0..4 {
                let mut acc = 0.0;
                for c in 0..4 {
                    acc += b[a][c] * x[4 * i + c];
                }
                y[4 * i + a] += acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let n = self.blocks.vertex_count();
        let mut d = vec![0.0; 4 * n];
        for i in 0..n {
            for a in 0..4 {
                d[4 * i + a] =
                    self.alpha2 * self.g2[a] * self.degree[i] + self.data_blocks[i][a][a];
            }
        }
        d
    }
}

const CG_RELATIVE_TOL: f64 = 1e-12;

fn conjugate_gradient(
    op: &NormalOperator<'_>,
    b: &[f64],
    x0: &[f64],
) -> Result<Vec<f64>, RegistrationError> {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bv, av)| bv - av).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = CG_RELATIVE_TOL * b_norm.max(1e-30);

    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(rv, dv)| rv * dv).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iterations = 40 * n + 200;

    for _ in 0..max_iterations {
        let res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res_norm <= tol {
            return Ok(x);
        }
        let mut ap = vec![0.0; n];
        op.apply(&p, &mut ap);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if p_ap <= 0.0 {
            // Semidefinite direction: the system is rank deficient along p.
            return Err(RegistrationError::RankDeficient);
        }
        let step = rz / p_ap;
        for ((xv, pv), (rv, apv)) in
            x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap))
        {
            *xv += step * pv;
            *rv -= step * apv;
        }
        for ((zv, rv), dv) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zv = rv * dv;
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for (pv, zv) in p.iter_mut().zip(&z) {
            *pv = zv + beta * *pv;
        }
    }
    let residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual <= tol * 100.0 {
        Ok(x)
    } else {
        Err(RegistrationError::SolverStalled { iterations: max_iterations, residual })
    }
}

/// Solves the normal equations for the current stiffness `alpha`, starting
/// from `start` (pass the identity stack when nothing better is known).
pub fn assemble_and_solve(
    blocks: &SystemBlocks,
    alpha: f64,
    start: &TransformStack,
) -> Result<TransformStack, RegistrationError> {
    if blocks.weights.iter().all(|&w| w == 0.0) && !blocks.is_connected() {
        return Err(RegistrationError::RankDeficient);
    }
    let n = blocks.vertex_count();
    let op = NormalOperator::new(blocks, alpha);

    // Right-hand side AᵀB: rows 4i.. of DᵀW²U.
    let mut rhs = vec![[0.0f64; 3]; 4 * n];
    for i in 0..n {
        let w = blocks.weights[i];
        if w == 0.0 {
            continue;
        }
        let row = blocks.vertex_rows[i];
        let u = blocks.targets[i];
        for a in 0..4 {
            rhs[4 * i + a][0] += w * w * row[a] * u.x;
            rhs[4 * i + a][1] += w * w * row[a] * u.y;
            rhs[4 * i + a][2] += w * w * row[a] * u.z;
        }
    }

    let mut solution = Array2::zeros((4 * n, 3));
    for c in 0..3 {
        let b: Vec<f64> = rhs.iter().map(|r| r[c]).collect();
        let x0: Vec<f64> = start.matrix().column(c).to_vec();
        let x = conjugate_gradient(&op, &b, &x0)?;
        for (row, v) in x.iter().enumerate() {
            solution[(row, c)] = *v;
        }
    }
    Ok(TransformStack::from_matrix(solution))
}
