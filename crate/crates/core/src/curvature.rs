//! Extrinsic geometry of the soliton graphs M = graph(u/ε) ⊂ N×ℝ and of the
//! level sets {u = t} ⊂ N, plus the exponential-bound verification reports.
//!
//! The graph mean curvature is computed twice: once from the second
//! fundamental form (induced-metric contraction of the covariant Hessian)
//! and once as the divergence of the sampled normal flux field. The two
//! discretizations are independent, so their agreement — and the identity
//! H + σu = κV — is a genuine consistency check on converged solutions
//! rather than a restatement of the Newton residual.

use crate::error::Result;
use crate::grid::{Grid, Neighbor, NodeClass, ScalarField};
use crate::metric::{self, zero_matrix, zero_vector, Vector};
use crate::pde::RegParams;

/// Pointwise graph quantities; curvature entries are present at interior
/// nodes only (cut-cell second differences are too noisy for |A|).
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    pub rho: f64,
    pub lambda: f64,
    /// W = √(1 + |∇f|²_g), f = u/ε
    pub w_slope: Vec<Option<f64>>,
    /// V = 1/(εW) = (ε² + |Du|²_g)^{-1/2}
    pub v: Vec<Option<f64>>,
    /// ⟨τ,ν⟩ = 1/W
    pub tau_nu: Vec<Option<f64>>,
    /// mean curvature from the second fundamental form (mean convex > 0)
    pub h_graph: Vec<Option<f64>>,
    /// mean curvature from the flux divergence −div(Du/√(ε²+|Du|²))
    pub h_graph_div: Vec<Option<f64>>,
    /// |A| of the graph
    pub a_norm: Vec<Option<f64>>,
    /// G = (|A| + Λσu)/(V e^{ρu})
    pub g_quantity: Vec<Option<f64>>,
}

/// All graph quantities of graph(u/ε) with weight exponent ρ and ratio
/// shift Λ.
pub fn graph_quantities(
    field: &ScalarField,
    params: &RegParams,
    rho: f64,
    lambda: f64,
) -> Result<GraphGeometry> {
    let g = field.grid.clone();
    let dim = g.dim;
    let count = g.node_count();
    let eps = params.eps;
    assert!(eps > 0.0, "graph quantities need eps > 0");

    let mut geo = GraphGeometry {
        rho,
        lambda,
        w_slope: vec![None; count],
        v: vec![None; count],
        tau_nu: vec![None; count],
        h_graph: vec![None; count],
        h_graph_div: vec![None; count],
        a_norm: vec![None; count],
        g_quantity: vec![None; count],
    };

    // pass 1: slope quantities and the flux field X = ∇u/√(ε²+|Du|²),
    // weighted by √g·ω for the divergence differences
    let mut weighted_flux: Vec<Vector> = vec![zero_vector(); count];
    let mut tensors_cache = Vec::with_capacity(count);
    for node in 0..count {
        let t = metric::metric_at(&g.chart, &g.positions[node][..dim])?;
        tensors_cache.push(t);
    }
    for node in 0..count {
        if !g.is_active(node) {
            continue;
        }
        let t = &tensors_cache[node];
        let du = crate::grid::stencil_gradient(field, node);
        let q = metric::raise(t, &du);
        let grad_sq: f64 = (0..dim).map(|i| q[i] * du[i]).sum();
        let qq = eps * eps + grad_sq;
        let qn = qq.sqrt();
        let w = (1.0 + grad_sq / (eps * eps)).sqrt();
        geo.w_slope[node] = Some(w);
        geo.v[node] = Some(1.0 / qn);
        geo.tau_nu[node] = Some(1.0 / w);
        let scale = t.sqrt_det * t.orbit_density / qn;
        for i in 0..dim {
            weighted_flux[node][i] = scale * q[i];
        }
    }

    // pass 2: curvature at interior nodes
    for node in 0..count {
        if g.class[node] != NodeClass::Interior {
            continue;
        }
        let t = &tensors_cache[node];
        let du = crate::grid::stencil_gradient(field, node);
        let d2 = crate::grid::stencil_hessian(field, node);
        let hcov_u = metric::hessian_cov(t, &d2, &du);
        // f = u/ε
        let mut f1 = zero_vector();
        for i in 0..dim {
            f1[i] = du[i] / eps;
        }
        let fq = metric::raise(t, &f1);
        let grad_f_sq: f64 = (0..dim).map(|i| fq[i] * f1[i]).sum();
        let w = (1.0 + grad_f_sq).sqrt();

        // second fundamental form h_ij = −Hcov f_ij / W (mean convex > 0)
        let mut h2 = zero_matrix();
        for i in 0..dim {
            for j in 0..dim {
                h2[i][j] = -hcov_u[i][j] / (eps * w);
            }
        }
        // inverse induced metric ĝ^{ij} = g^{ij} − f^i f^j / W²
        let mut ghat = zero_matrix();
        for i in 0..dim {
            for j in 0..dim {
                ghat[i][j] = t.g_inv[i][j] - fq[i] * fq[j] / (w * w);
            }
        }
        let mut h_mean = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                h_mean += ghat[i][j] * h2[i][j];
            }
        }
        let mut a_sq = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        a_sq += ghat[i][k] * ghat[j][l] * h2[i][j] * h2[k][l];
                    }
                }
            }
        }
        // rotational principal curvature of quotient charts
        let mut orbit_f = 0.0;
        for i in 0..dim {
            orbit_f += t.orbit_dlog[i] * fq[i];
        }
        let kappa_orbit = -orbit_f / w;
        h_mean += kappa_orbit;
        a_sq += kappa_orbit * kappa_orbit;

        geo.h_graph[node] = Some(h_mean);
        geo.a_norm[node] = Some(a_sq.max(0.0).sqrt());

        // flux-divergence route: all axis neighbors of an interior node are
        // stored nodes, so central differences of the weighted flux apply
        let mut div = 0.0;
        let mut ok = true;
        for axis in 0..dim {
            let [m, p] = g.neighbors[node][axis];
            let (Neighbor::Node(a), Neighbor::Node(b)) = (m, p) else {
                ok = false;
                break;
            };
            div += (weighted_flux[b as usize][axis] - weighted_flux[a as usize][axis])
                / (2.0 * g.h[axis]);
        }
        if ok {
            let w_c = t.sqrt_det * t.orbit_density;
            geo.h_graph_div[node] = Some(-div / w_c);
        }

        let u = field.values[node];
        let weight = (rho * u).exp();
        let v = geo.v[node].unwrap();
        let a = geo.a_norm[node].unwrap();
        geo.g_quantity[node] = Some((a + lambda * params.sigma * u) / (v * weight));
    }
    Ok(geo)
}

/// One isocontour sample point with interpolated level-set curvatures.
#[derive(Clone, Debug)]
pub struct LevelPoint {
    pub position: Vector,
    pub grad_norm: f64,
    pub h_level: f64,
    pub a_level: f64,
    pub regular: bool,
}

/// Samples of one level set {u = t}.
#[derive(Clone, Debug)]
pub struct LevelSetSample {
    pub t: f64,
    pub points: Vec<LevelPoint>,
    pub regular_count: usize,
    /// min of H over regular points
    pub min_h: Option<f64>,
    /// max of |A|/H over regular points
    pub max_ratio: Option<f64>,
}

/// Nodal level-set quantities: |Du|_g, H_level, |A|_level with the
/// mean-convex-positive convention.
fn nodal_level_quantities(
    field: &ScalarField,
    node: usize,
) -> Result<Option<(f64, f64, f64)>> {
    let g = &field.grid;
    let dim = g.dim;
    if g.class[node] != NodeClass::Interior {
        return Ok(None);
    }
    let t = metric::metric_at(&g.chart, &g.positions[node][..dim])?;
    let du = crate::grid::stencil_gradient(field, node);
    let q = metric::raise(&t, &du);
    let grad_sq: f64 = (0..dim).map(|i| q[i] * du[i]).sum();
    let grad = grad_sq.max(0.0).sqrt();
    if grad < 1e-14 {
        return Ok(Some((0.0, 0.0, 0.0)));
    }
    let d2 = crate::grid::stencil_hessian(field, node);
    let hcov = metric::hessian_cov(&t, &d2, &du);
    // projection onto the level tangent space, mixed indices
    let mut proj = zero_matrix();
    for i in 0..dim {
        for j in 0..dim {
            proj[i][j] = if i == j { 1.0 } else { 0.0 };
            proj[i][j] -= q[i] * du[j] / grad_sq;
        }
    }
    // B^i_j = g^{ik} Hcov_kj
    let mut b = zero_matrix();
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                b[i][j] += t.g_inv[i][k] * hcov[k][j];
            }
        }
    }
    // shape endomorphism S = −P B P / |Du|
    let mut pb = zero_matrix();
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                pb[i][j] += proj[i][k] * b[k][j];
            }
        }
    }
    let mut s = zero_matrix();
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                s[i][j] += pb[i][k] * proj[k][j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = -s[i][j] / grad;
        }
    }
    let mut h: f64 = (0..dim).map(|i| s[i][i]).sum();
    let mut a_sq = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            a_sq += s[i][j] * s[j][i];
        }
    }
    // rotational curvature of quotient charts
    let mut orbit_q = 0.0;
    for i in 0..dim {
        orbit_q += t.orbit_dlog[i] * q[i];
    }
    let kappa_orbit = -orbit_q / grad;
    h += kappa_orbit;
    a_sq += kappa_orbit * kappa_orbit;
    Ok(Some((grad, h, a_sq.max(0.0).sqrt())))
}

/// Isocontour samples at the requested levels. Points come from linear
/// interpolation along grid edges whose endpoints both carry nodal
/// curvature data; the regular mask is |Du|_g ≥ γ.
pub fn level_sets(
    field: &ScalarField,
    levels: &[f64],
    gamma: f64,
) -> Result<Vec<LevelSetSample>> {
    let g = field.grid.clone();
    let dim = g.dim;
    let count = g.node_count();
    let mut nodal: Vec<Option<(f64, f64, f64)>> = Vec::with_capacity(count);
    for node in 0..count {
        nodal.push(nodal_level_quantities(field, node)?);
    }

    let mut out = Vec::with_capacity(levels.len());
    for &t in levels {
        let mut points = Vec::new();
        for node in 0..count {
            if nodal[node].is_none() {
                continue;
            }
            for axis in 0..dim {
                // plus direction only, so each edge is visited once
                let Neighbor::Node(nb) = g.neighbors[node][axis][1] else {
                    continue;
                };
                let nb = nb as usize;
                let Some(qa) = nodal[node] else { continue };
                let Some(qb) = nodal[nb] else { continue };
                let ua = field.values[node];
                let ub = field.values[nb];
                // sign-change test with u = t counting as "above", so levels
                // hitting nodes exactly yield one sample, not zero or two
                if (ua < t) == (ub < t) {
                    continue;
                }
                let s = (t - ua) / (ub - ua);
                let mut pos = g.positions[node];
                pos[axis] += s * g.h[axis];
                let lerp = |a: f64, b: f64| a + s * (b - a);
                let grad_norm = lerp(qa.0, qb.0);
                points.push(LevelPoint {
                    position: pos,
                    grad_norm,
                    h_level: lerp(qa.1, qb.1),
                    a_level: lerp(qa.2, qb.2),
                    regular: grad_norm >= gamma,
                });
            }
        }
        let regular_count = points.iter().filter(|p| p.regular).count();
        let min_h = points
            .iter()
            .filter(|p| p.regular)
            .map(|p| p.h_level)
            .min_by(f64::total_cmp);
        let max_ratio = points
            .iter()
            .filter(|p| p.regular && p.h_level.abs() > 1e-300)
            .map(|p| p.a_level / p.h_level)
            .max_by(f64::total_cmp);
        out.push(LevelSetSample {
            t,
            points,
            regular_count,
            min_h,
            max_ratio,
        });
    }
    Ok(out)
}

/// Minimum number of regular sample points for a level to enter the fits.
pub const MIN_REGULAR_POINTS: usize = 20;

/// Decay/growth verification of the two curvature estimates.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub levels: Vec<f64>,
    /// per level: min over regular points of H + σt
    pub min_h: Vec<Option<f64>>,
    /// per level: max over regular points of (|A| + Λσt)/(H + σt)
    pub max_ratio: Vec<Option<f64>>,
    pub regular_counts: Vec<usize>,
    /// least-squares fit min_h(t) ≈ H₀ e^{−ρ_H t} over the fit window
    pub fit_h0: Option<f64>,
    pub fit_rho_h: Option<f64>,
    /// least-squares fit max_ratio(t) ≈ C e^{ρ_A t}
    pub fit_c: Option<f64>,
    pub fit_rho_a: Option<f64>,
    pub rho_thm: f64,
    /// (a) min H decays no faster than e^{−ρ_thm t}
    pub flag_lower_bound: bool,
    /// (b) |A|/H grows no faster than e^{ρ_thm t}
    pub flag_ratio_bound: bool,
    pub inconclusive: bool,
}

fn line_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let sx: f64 = ts.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = ts.iter().map(|x| x * x).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}

/// Build the verification report from level samples of a converged solve.
/// σ-corrected quantities H + σu and (|A| + Λσu)/(H + σu) are used, with
/// u = t on each level. Fits use levels inside [0.1, 0.9]·t_max having at
/// least `MIN_REGULAR_POINTS` regular points.
pub fn verify_estimates(
    samples: &[LevelSetSample],
    rho_thm: f64,
    sigma: f64,
    lambda: f64,
    t_max: f64,
) -> EstimateReport {
    let mut levels = Vec::new();
    let mut min_h = Vec::new();
    let mut max_ratio = Vec::new();
    let mut regular_counts = Vec::new();
    for s in samples {
        levels.push(s.t);
        regular_counts.push(s.regular_count);
        let corr_min = s
            .points
            .iter()
            .filter(|p| p.regular)
            .map(|p| p.h_level + sigma * s.t)
            .min_by(f64::total_cmp);
        let corr_ratio = s
            .points
            .iter()
            .filter(|p| p.regular && (p.h_level + sigma * s.t) > 1e-300)
            .map(|p| (p.a_level + lambda * sigma * s.t) / (p.h_level + sigma * s.t))
            .max_by(f64::total_cmp);
        min_h.push(corr_min);
        max_ratio.push(corr_ratio);
    }

    let window = |t: f64| t >= 0.1 * t_max && t <= 0.9 * t_max;
    let mut ts_h = Vec::new();
    let mut ln_h = Vec::new();
    let mut ts_r = Vec::new();
    let mut ln_r = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        if s.regular_count < MIN_REGULAR_POINTS || !window(s.t) {
            continue;
        }
        if let Some(h) = min_h[k] {
            if h > 0.0 {
                ts_h.push(s.t);
                ln_h.push(h.ln());
            }
        }
        if let Some(r) = max_ratio[k] {
            if r > 0.0 {
                ts_r.push(s.t);
                ln_r.push(r.ln());
            }
        }
    }

    let inconclusive = ts_h.len() < 2;
    let (fit_h0, fit_rho_h) = if ts_h.len() >= 2 {
        let (b, m) = line_fit(&ts_h, &ln_h);
        (Some(b.exp()), Some(-m))
    } else {
        (None, None)
    };
    let (fit_c, fit_rho_a) = if ts_r.len() >= 2 {
        let (b, m) = line_fit(&ts_r, &ln_r);
        (Some(b.exp()), Some(m))
    } else {
        (None, None)
    };

    let tol = 0.05 * rho_thm.max(1.0);
    let positive = ts_h.iter().zip(&ln_h).all(|(_, &l)| l.is_finite());
    let flag_lower_bound = !inconclusive
        && positive
        && fit_rho_h.map(|r| r <= rho_thm + tol).unwrap_or(false);
    let flag_ratio_bound = match fit_rho_a {
        Some(r) => r <= rho_thm + tol,
        None => !inconclusive,
    };

    EstimateReport {
        levels,
        min_h,
        max_ratio,
        regular_counts,
        fit_h0,
        fit_rho_h,
        fit_c,
        fit_rho_a,
        rho_thm,
        flag_lower_bound,
        flag_ratio_bound,
        inconclusive,
    }
}

/// Where the maximum of G sits relative to the boundary band (interior
/// nodes within two lattice steps of a cut node).
#[derive(Clone, Copy, Debug)]
pub struct GBoundaryCheck {
    pub max_interior: f64,
    pub max_boundary_band: f64,
    /// max over the deep interior divided by max over the band; 0 when G ≡ 0.
    pub ratio: f64,
}

pub fn g_boundary_max_check(geometry: &GraphGeometry, grid: &Grid) -> GBoundaryCheck {
    let count = grid.node_count();
    // band: within 2 axis steps of a BoundaryAdjacent node
    let mut band = vec![false; count];
    for node in 0..count {
        if grid.class[node] == NodeClass::BoundaryAdjacent {
            band[node] = true;
        }
    }
    for _ in 0..2 {
        let snapshot = band.clone();
        for node in 0..count {
            if snapshot[node] {
                for axis in 0..grid.dim {
                    for nb in grid.neighbors[node][axis] {
                        if let Neighbor::Node(q) = nb {
                            band[q as usize] = true;
                        }
                    }
                }
            }
        }
    }
    let mut max_band = 0.0f64;
    let mut max_deep = 0.0f64;
    for node in 0..count {
        let Some(gv) = geometry.g_quantity[node] else {
            continue;
        };
        if band[node] {
            max_band = max_band.max(gv);
        } else {
            max_deep = max_deep.max(gv);
        }
    }
    let ratio = if max_band > 0.0 {
        max_deep / max_band
    } else {
        0.0
    };
    GBoundaryCheck {
        max_interior: max_deep,
        max_boundary_band: max_band,
        ratio,
    }
}
