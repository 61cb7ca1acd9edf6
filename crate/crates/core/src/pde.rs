//! Nonlinear residual and analytic Jacobian of the triple-parameter equation
//!
//! ```text
//! F(u) = div_g( Du / √(ε² + |Du|²_g) ) + κ / √(ε² + |Du|²_g) − σ u
//! ```
//!
//! discretized in quasilinear form: with Q = √(ε² + |Du|²_g) and the raised
//! gradient q^i = g^{ij}∂_j u,
//!
//! ```text
//! F(u) = a^{ij}(Du) Hcov_ij u + ⟨∂logω, q⟩/Q + κ/Q − σu,
//! a^{ij} = (g^{ij} − q^i q^j / Q²)/Q,
//! ```
//!
//! where Hcov is the covariant Hessian and ω the orbit density of quotient
//! charts. The Jacobian is the exact derivative of this discrete residual,
//! so it coincides with the printed linearization discretized with the same
//! stencils, and Newton retains quadratic convergence.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{NodeClass, ScalarField, TapList};
use crate::linalg::CsrMatrix;
use crate::metric::{self, zero_matrix, zero_vector, Matrix, PointTensors, Vector};

/// The (ε, σ, κ) regularization triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegParams {
    /// Graph regularization ε > 0 (ε = 0 admitted only for residual
    /// evaluation of limit fields).
    pub eps: f64,
    /// Zeroth-order damping σ ≥ 0 (σ > 0 required by the solver).
    pub sigma: f64,
    /// Continuity parameter κ ∈ [0, 1].
    pub kappa: f64,
}

impl RegParams {
    pub fn new(eps: f64, sigma: f64, kappa: f64) -> Result<Self> {
        if !(eps >= 0.0) || !(sigma >= 0.0) || !(0.0..=1.0).contains(&kappa) {
            return Err(Error::Config(format!(
                "invalid regularization parameters: eps={eps}, sigma={sigma}, kappa={kappa}"
            )));
        }
        Ok(Self { eps, sigma, kappa })
    }

    /// Sup bound κ/(σε) from the maximum principle; infinite when σε = 0.
    pub fn sup_bound(&self) -> f64 {
        if self.sigma * self.eps > 0.0 {
            self.kappa / (self.sigma * self.eps)
        } else {
            f64::INFINITY
        }
    }
}

/// Degenerate-evaluation guard: nodes with |Du|_g below this are skipped
/// when ε = 0 (the limit equation is singular at critical points).
const DEGENERATE_GRAD: f64 = 1e-10;

/// Per-node nonlinear state shared by residual and Jacobian assembly.
struct NodeState {
    tensors: PointTensors,
    q: Vector,      // raised gradient
    hcov: Matrix,   // covariant Hessian
    qq: f64,        // Q² = ε² + |Du|²
    a: Matrix,      // quasilinear coefficients a^{ij}
    degenerate: bool,
}

fn node_state(field: &ScalarField, node: usize, params: &RegParams) -> Result<NodeState> {
    let g = &field.grid;
    let x = &g.positions[node][..g.dim];
    let tensors = metric::metric_at(&g.chart, x)?;
    let mut p = zero_vector();
    for axis in 0..g.dim {
        p[axis] = g.apply_taps(&g.grad_taps[node][axis], &field.values);
    }
    let q = metric::raise(&tensors, &p);
    let grad_sq: f64 = (0..g.dim).map(|i| q[i] * p[i]).sum();
    let qq = params.eps * params.eps + grad_sq;
    let degenerate = qq < DEGENERATE_GRAD * DEGENERATE_GRAD;
    let mut m = zero_matrix();
    for i in 0..g.dim {
        for j in i..g.dim {
            let v = crate::grid::stencil_second(field, node, i, j);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    let hcov = metric::hessian_cov(&tensors, &m, &p);
    let mut a = zero_matrix();
    if !degenerate {
        let qn = qq.sqrt();
        for i in 0..g.dim {
            for j in 0..g.dim {
                a[i][j] = (tensors.g_inv[i][j] - q[i] * q[j] / qq) / qn;
            }
        }
    }
    Ok(NodeState {
        tensors,
        q,
        hcov,
        qq,
        a,
        degenerate,
    })
}

fn residual_at(state: &NodeState, u: f64, params: &RegParams, dim: usize) -> f64 {
    if state.degenerate {
        return 0.0;
    }
    let qn = state.qq.sqrt();
    let mut f = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            f += state.a[i][j] * state.hcov[i][j];
        }
    }
    let mut orbit = 0.0;
    for i in 0..dim {
        orbit += state.tensors.orbit_dlog[i] * state.q[i];
    }
    f + orbit / qn + params.kappa / qn - params.sigma * u
}

/// F(u) at every non-frozen node; frozen slots hold 0.
pub fn residual(field: &ScalarField, params: &RegParams) -> Result<ScalarField> {
    field.check_finite()?;
    let g = field.grid.clone();
    let dim = g.dim;
    let values: Vec<Result<f64>> = (0..g.node_count())
        .into_par_iter()
        .map(|node| {
            if !g.is_active(node) {
                return Ok(0.0);
            }
            if g.pinned[node] {
                // boundary collocation row
                return Ok(-field.values[node]);
            }
            let st = node_state(field, node, params)?;
            Ok(residual_at(&st, field.values[node], params, dim))
        })
        .collect();
    let mut out = ScalarField::zeros(&field.grid);
    for (node, v) in values.into_iter().enumerate() {
        out.values[node] = v?;
    }
    Ok(out)
}

/// Sparse linearization L_κ at `field`, rows and columns over active nodes,
/// with right-hand side −F(u) ready for a Newton step.
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub node_of_row: Vec<u32>,
    /// u32::MAX for nodes without a row (frozen).
    pub row_of_node: Vec<u32>,
}

impl LinearSystem {
    pub fn scatter(&self, solution: &[f64], out: &mut [f64]) {
        for (r, &node) in self.node_of_row.iter().enumerate() {
            out[node as usize] = solution[r];
        }
    }
}

/// Assemble the analytic Jacobian of `residual` at `field`.
pub fn jacobian(field: &ScalarField, params: &RegParams) -> Result<LinearSystem> {
    field.check_finite()?;
    if params.eps <= 0.0 {
        return Err(Error::Config("jacobian requires eps > 0".into()));
    }
    let g = field.grid.clone();
    let dim = g.dim;
    let mut node_of_row = Vec::with_capacity(g.node_count());
    let mut row_of_node = vec![u32::MAX; g.node_count()];
    for node in 0..g.node_count() {
        if g.is_active(node) {
            row_of_node[node] = node_of_row.len() as u32;
            node_of_row.push(node as u32);
        }
    }

    let assembled: Vec<Result<(Vec<(u32, f64)>, f64)>> = node_of_row
        .par_iter()
        .map(|&node_u| {
            let node = node_u as usize;
            if g.pinned[node] {
                let row = vec![(row_of_node[node], -1.0)];
                return Ok((row, field.values[node]));
            }
            let st = node_state(field, node, params)?;
            let u = field.values[node];
            let fval = residual_at(&st, u, params, dim);
            let qq = st.qq;
            let qn = qq.sqrt();
            let q3 = qn * qq;

            // b^k collects every δ(∂_k u) coefficient of the linearization
            let mut b = zero_vector();
            // Christoffel part of δHcov
            for k in 0..dim {
                let mut s = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        s += st.a[i][j] * st.tensors.christoffel[k][i][j];
                    }
                }
                b[k] -= s;
            }
            // derivative of a^{ij} against Hcov
            let mut a_dot_h = 0.0; // A^{ij} Hcov_ij with A = Q a
            for i in 0..dim {
                for j in 0..dim {
                    a_dot_h += st.a[i][j] * st.hcov[i][j];
                }
            }
            // note: a_dot_h = (A:Hcov)/Q, so (A:Hcov)/Q³ = a_dot_h/Q²
            let mut hq = zero_vector(); // (Hcov q)_b = Hcov_bc q^c
            for bidx in 0..dim {
                for c in 0..dim {
                    hq[bidx] += st.hcov[bidx][c] * st.q[c];
                }
            }
            let ghq = metric::raise(&st.tensors, &hq); // g^{ab}(Hcov q)_b
            let mut qhq = 0.0;
            for i in 0..dim {
                qhq += st.q[i] * hq[i];
            }
            let mut orbit_q = 0.0;
            let mut orbit_raised = zero_vector();
            for i in 0..dim {
                orbit_q += st.tensors.orbit_dlog[i] * st.q[i];
            }
            let or_r = metric::raise(&st.tensors, &st.tensors.orbit_dlog);
            for i in 0..dim {
                orbit_raised[i] = or_r[i];
            }
            for k in 0..dim {
                b[k] += -2.0 * ghq[k] / q3 + 2.0 * qhq * st.q[k] / (q3 * qq)
                    - a_dot_h * st.q[k] / qq
                    + orbit_raised[k] / qn
                    - orbit_q * st.q[k] / q3
                    - params.kappa * st.q[k] / q3;
            }

            // scatter taps into the row
            let mut row: Vec<(u32, f64)> = Vec::with_capacity(4 * dim * dim + 2);
            let push = |row: &mut Vec<(u32, f64)>, taps: &TapList, w: f64| {
                if w == 0.0 {
                    return;
                }
                for &(c, tw) in taps {
                    let cr = row_of_node[c as usize];
                    if cr != u32::MAX {
                        row.push((cr, w * tw));
                    }
                }
            };
            for i in 0..dim {
                for j in i..dim {
                    let factor = if i == j {
                        st.a[i][j]
                    } else {
                        2.0 * st.a[i][j]
                    };
                    let idx = match (i, j) {
                        (0, 0) => 0,
                        (0, 1) => 1,
                        (0, 2) => 2,
                        (1, 1) => 3,
                        (1, 2) => 4,
                        (2, 2) => 5,
                        _ => unreachable!(),
                    };
                    push(&mut row, &g.hess_taps[node][idx], factor);
                }
            }
            for k in 0..dim {
                push(&mut row, &g.grad_taps[node][k], b[k]);
            }
            row.push((row_of_node[node], -params.sigma));
            Ok((row, -fval))
        })
        .collect();

    let mut rows = Vec::with_capacity(node_of_row.len());
    let mut rhs = Vec::with_capacity(node_of_row.len());
    for item in assembled {
        let (row, r) = item?;
        rows.push(row);
        rhs.push(r);
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        node_of_row,
        row_of_node,
    })
}

/// Consistency bridge between the PDE form and the geometric form:
/// ‖H_graph + σu − κV‖_∞ over interior nodes, with H_graph and V supplied
/// by the curvature module's independent discretization.
pub fn graph_form_check(
    field: &ScalarField,
    params: &RegParams,
    geometry: &crate::curvature::GraphGeometry,
) -> f64 {
    let g = &field.grid;
    let mut worst = 0.0f64;
    for node in 0..g.node_count() {
        if g.class[node] != NodeClass::Interior {
            continue;
        }
        let (Some(h), Some(v)) = (geometry.h_graph_div[node], geometry.v[node]) else {
            continue;
        };
        let dev = (h + params.sigma * field.values[node] - params.kappa * v).abs();
        worst = worst.max(dev);
    }
    worst
}
