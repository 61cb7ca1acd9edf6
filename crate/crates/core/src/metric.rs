//! Ambient Riemannian metric charts and their derived tensors.
//!
//! Three analytic chart families (plus a rotational quotient of flat 3-space)
//! cover the flat, hyperbolic and warped-product test geometries:
//!
//! * `Euclidean` — identity metric in any dimension,
//! * `Conformal` — g_ij = φ(x)² δ_ij with a user-supplied positive factor,
//! * `SurfaceOfRevolution` — dx² + ψ(x)² dθ² with periodic θ,
//! * `AxisymmetricQuotient` — flat (x, r) half-plane carrying the orbit
//!   density r of rotation about the x-axis, so 2D solves represent
//!   rotationally symmetric 3D domains.
//!
//! All tensors are evaluated on demand from closed-form factor derivatives;
//! nothing is tabulated.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Maximum chart dimension supported by the fixed-size tensor kernels.
pub const MAX_DIM: usize = 3;

pub type Vector = [f64; MAX_DIM];
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

pub fn zero_vector() -> Vector {
    [0.0; MAX_DIM]
}

pub fn zero_matrix() -> Matrix {
    [[0.0; MAX_DIM]; MAX_DIM]
}

/// Positive conformal factor φ with analytic first and second derivatives.
#[derive(Clone)]
pub struct ConformalFactor {
    pub name: String,
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub grad: Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>,
    pub hess: Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>,
}

impl fmt::Debug for ConformalFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConformalFactor({})", self.name)
    }
}

impl ConformalFactor {
    /// Poincaré ball factor φ(x) = 2/(1−|x|²), constant curvature −1.
    pub fn poincare() -> Self {
        Self {
            name: "poincare".into(),
            value: Arc::new(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                2.0 / (1.0 - r2)
            }),
            grad: Arc::new(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let d = 1.0 - r2;
                let mut g = zero_vector();
                for (i, xi) in x.iter().enumerate() {
                    g[i] = 4.0 * xi / (d * d);
                }
                g
            }),
            hess: Arc::new(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let d = 1.0 - r2;
                let mut h = zero_matrix();
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        h[i][j] = 16.0 * x[i] * x[j] / (d * d * d);
                        if i == j {
                            h[i][j] += 4.0 / (d * d);
                        }
                    }
                }
                h
            }),
        }
    }
}

/// Warping profile ψ(x) > 0 for surfaces of revolution dx² + ψ(x)²dθ².
#[derive(Clone)]
pub struct Profile {
    pub name: String,
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.name)
    }
}

impl Profile {
    /// ψ = cosh, the constant-curvature −1 neck with a stable central geodesic.
    pub fn cosh() -> Self {
        Self {
            name: "cosh".into(),
            value: Arc::new(f64::cosh),
            d1: Arc::new(f64::sinh),
            d2: Arc::new(f64::cosh),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ChartKind {
    Euclidean,
    Conformal(ConformalFactor),
    SurfaceOfRevolution(Profile),
    /// Flat (x, r) half-plane as the quotient of rotationally symmetric R³;
    /// carries orbit density |r| in divergences and one extra rotational
    /// principal curvature in hypersurface geometry.
    AxisymmetricQuotient,
}

/// A coordinate chart of the ambient manifold N.
#[derive(Clone, Debug)]
pub struct MetricChart {
    pub dim: usize,
    pub kind: ChartKind,
}

impl MetricChart {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM);
        Self {
            dim,
            kind: ChartKind::Euclidean,
        }
    }

    pub fn conformal(dim: usize, factor: ConformalFactor) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM);
        Self {
            dim,
            kind: ChartKind::Conformal(factor),
        }
    }

    pub fn surface_of_revolution(profile: Profile) -> Self {
        Self {
            dim: 2,
            kind: ChartKind::SurfaceOfRevolution(profile),
        }
    }

    pub fn axisymmetric() -> Self {
        Self {
            dim: 2,
            kind: ChartKind::AxisymmetricQuotient,
        }
    }

    /// True when the second coordinate axis is the 2π-periodic fiber angle.
    pub fn has_periodic_fiber(&self) -> bool {
        matches!(self.kind, ChartKind::SurfaceOfRevolution(_))
    }

    /// True when grid nodes must avoid the rotation axis r = 0.
    pub fn needs_axis_stagger(&self) -> bool {
        matches!(self.kind, ChartKind::AxisymmetricQuotient)
    }

    /// Dimension of the hypersurfaces represented by graphs over this chart
    /// (level sets have one dimension less).
    pub fn hypersurface_dim(&self) -> usize {
        match self.kind {
            ChartKind::AxisymmetricQuotient => self.dim + 1,
            _ => self.dim,
        }
    }
}

/// Pointwise metric data: g_ij, g^{ij}, √det g, Γ^k_ij and, for quotient
/// charts, the orbit density ω and ∂ log ω.
#[derive(Clone, Debug)]
pub struct PointTensors {
    pub dim: usize,
    pub g: Matrix,
    pub g_inv: Matrix,
    pub sqrt_det: f64,
    /// christoffel[k][i][j] = Γ^k_ij, symmetric in (i, j).
    pub christoffel: [Matrix; MAX_DIM],
    /// Orbit density ω for quotient charts, 1 otherwise.
    pub orbit_density: f64,
    /// ∂_i log ω, zero when there is no orbit weight.
    pub orbit_dlog: Vector,
}

impl PointTensors {
    fn flat(dim: usize) -> Self {
        let mut g = zero_matrix();
        let mut g_inv = zero_matrix();
        for i in 0..dim {
            g[i][i] = 1.0;
            g_inv[i][i] = 1.0;
        }
        Self {
            dim,
            g,
            g_inv,
            sqrt_det: 1.0,
            christoffel: [zero_matrix(); MAX_DIM],
            orbit_density: 1.0,
            orbit_dlog: zero_vector(),
        }
    }
}

/// Evaluate all pointwise tensors of `chart` at `x`.
pub fn metric_at(chart: &MetricChart, x: &[f64]) -> Result<PointTensors> {
    let n = chart.dim;
    match &chart.kind {
        ChartKind::Euclidean => Ok(PointTensors::flat(n)),
        ChartKind::Conformal(factor) => {
            let phi = (factor.value)(x);
            if !phi.is_finite() || phi <= 0.0 {
                return Err(Error::ChartDomain(format!(
                    "conformal factor {} nonpositive or infinite at {:?}",
                    factor.name, x
                )));
            }
            let dphi = (factor.grad)(x);
            // f = log φ; Γ^k_ij = δ_ki f_j + δ_kj f_i − δ_ij f_k.
            let mut f = zero_vector();
            for i in 0..n {
                f[i] = dphi[i] / phi;
            }
            let mut t = PointTensors::flat(n);
            let p2 = phi * phi;
            for i in 0..n {
                t.g[i][i] = p2;
                t.g_inv[i][i] = 1.0 / p2;
            }
            t.sqrt_det = phi.powi(n as i32);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = 0.0;
                        if k == i {
                            v += f[j];
                        }
                        if k == j {
                            v += f[i];
                        }
                        if i == j {
                            v -= f[k];
                        }
                        t.christoffel[k][i][j] = v;
                    }
                }
            }
            Ok(t)
        }
        ChartKind::SurfaceOfRevolution(profile) => {
            let psi = (profile.value)(x[0]);
            if !psi.is_finite() || psi <= 0.0 {
                return Err(Error::ChartDomain(format!(
                    "profile {} nonpositive at x = {}",
                    profile.name, x[0]
                )));
            }
            let dpsi = (profile.d1)(x[0]);
            let mut t = PointTensors::flat(2);
            t.g[1][1] = psi * psi;
            t.g_inv[1][1] = 1.0 / (psi * psi);
            t.sqrt_det = psi;
            t.christoffel[0][1][1] = -psi * dpsi;
            t.christoffel[1][0][1] = dpsi / psi;
            t.christoffel[1][1][0] = dpsi / psi;
            Ok(t)
        }
        ChartKind::AxisymmetricQuotient => {
            let r = x[1];
            if r == 0.0 {
                return Err(Error::ChartDomain(
                    "axisymmetric chart evaluated on the rotation axis".into(),
                ));
            }
            let mut t = PointTensors::flat(2);
            t.orbit_density = r.abs();
            t.orbit_dlog[1] = 1.0 / r;
            Ok(t)
        }
    }
}

/// Raise an index: (g^{ij} v_j) for i < dim.
pub fn raise(t: &PointTensors, v: &Vector) -> Vector {
    let mut out = zero_vector();
    for i in 0..t.dim {
        let mut s = 0.0;
        for j in 0..t.dim {
            s += t.g_inv[i][j] * v[j];
        }
        out[i] = s;
    }
    out
}

/// |Du|_g² = g^{ij} ∂_i u ∂_j u.
pub fn norm_grad_sq(t: &PointTensors, du: &Vector) -> f64 {
    let up = raise(t, du);
    let mut s = 0.0;
    for i in 0..t.dim {
        s += up[i] * du[i];
    }
    s
}

/// Metric gradient vector g^{ij}∂_j u.
pub fn grad(chart: &MetricChart, du: &Vector, x: &[f64]) -> Result<Vector> {
    let t = metric_at(chart, x)?;
    Ok(raise(&t, du))
}

/// Metric gradient norm |Du|_g ≥ 0.
pub fn norm_grad(chart: &MetricChart, du: &Vector, x: &[f64]) -> Result<f64> {
    let t = metric_at(chart, x)?;
    Ok(norm_grad_sq(&t, du).max(0.0).sqrt())
}

/// Covariant Hessian (∂²u)_ij − Γ^k_ij ∂_k u from raw coordinate derivatives.
pub fn hessian_cov(t: &PointTensors, d2u: &Matrix, du: &Vector) -> Matrix {
    let mut h = zero_matrix();
    for i in 0..t.dim {
        for j in 0..t.dim {
            let mut v = d2u[i][j];
            for k in 0..t.dim {
                v -= t.christoffel[k][i][j] * du[k];
            }
            h[i][j] = v;
        }
    }
    h
}

/// ∂_i log √det g, needed for flux-form divergences; equals Γ^k_{ki}.
pub fn dlog_sqrt_det(t: &PointTensors) -> Vector {
    let mut out = zero_vector();
    for i in 0..t.dim {
        let mut s = 0.0;
        for k in 0..t.dim {
            s += t.christoffel[k][k][i];
        }
        out[i] = s;
    }
    out
}

/// Divergence (1/(√g ω)) ∂_i (√g ω X^i) from axis-neighbor samples of X by
/// central differences. `minus[i]` and `plus[i]` hold the full vector X at
/// x ∓ h_i e_i.
pub fn div_g_central(
    chart: &MetricChart,
    x: &[f64],
    spacing: &[f64],
    minus: &[Vector],
    plus: &[Vector],
) -> Result<f64> {
    let tc = metric_at(chart, x)?;
    let w_c = tc.sqrt_det * tc.orbit_density;
    let n = chart.dim;
    let mut div = 0.0;
    let mut xp = [0.0f64; MAX_DIM];
    for i in 0..n {
        xp[..n].copy_from_slice(&x[..n]);
        xp[i] = x[i] + spacing[i];
        let tp = metric_at(chart, &xp[..n])?;
        xp[i] = x[i] - spacing[i];
        let tm = metric_at(chart, &xp[..n])?;
        let fp = tp.sqrt_det * tp.orbit_density * plus[i][i];
        let fm = tm.sqrt_det * tm.orbit_density * minus[i][i];
        div += (fp - fm) / (2.0 * spacing[i]);
    }
    Ok(div / w_c)
}

/// Divergence of an analytically-sampled vector field, using high-order
/// differences of the samples for ∂_i X^i and the chart's closed-form
/// log-density derivative. Accurate to ~1e-10 for smooth fields.
pub fn div_g_exact_field(
    chart: &MetricChart,
    x: &[f64],
    field: &dyn Fn(&[f64]) -> Vector,
) -> Result<f64> {
    let n = chart.dim;
    let t = metric_at(chart, x)?;
    let xc = field(x);
    let dls = dlog_sqrt_det(&t);
    let mut div = 0.0;
    let h = 2e-3;
    let mut xp = [0.0f64; MAX_DIM];
    for i in 0..n {
        // five-point fourth-order first derivative of X^i along axis i
        let mut vals = [0.0f64; 4];
        for (k, off) in [-2.0f64, -1.0, 1.0, 2.0].iter().enumerate() {
            xp[..n].copy_from_slice(&x[..n]);
            xp[i] = x[i] + off * h;
            vals[k] = field(&xp[..n])[i];
        }
        let d = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h);
        div += d + (dls[i] + t.orbit_dlog[i]) * xc[i];
    }
    Ok(div)
}

/// Largest |eigenvalue| of a symmetric dim×dim matrix, dim ≤ 3.
pub fn sym_eig_max_abs(m: &Matrix, dim: usize) -> f64 {
    match dim {
        1 => m[0][0].abs(),
        2 => {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            (tr / 2.0 + disc).abs().max((tr / 2.0 - disc).abs())
        }
        3 => {
            // Trigonometric closed form for symmetric 3×3 eigenvalues.
            let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
            let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
            let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2)
                + 2.0 * p1;
            if p2 <= 1e-300 {
                return q.abs();
            }
            let p = (p2 / 6.0).sqrt();
            let mut b = *m;
            for i in 0..3 {
                b[i][i] -= q;
            }
            let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
                - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
                + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
            let r = (detb / (2.0 * p * p * p)).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let e2 = 3.0 * q - e1 - e3;
            e1.abs().max(e2.abs()).max(e3.abs())
        }
        _ => unreachable!("dim > MAX_DIM"),
    }
}

/// Pointwise operator norm of the Ricci endomorphism g^{ik} Rc_kj.
pub fn ricci_op_norm(chart: &MetricChart, x: &[f64]) -> Result<f64> {
    let n = chart.dim;
    match &chart.kind {
        ChartKind::Euclidean | ChartKind::AxisymmetricQuotient => Ok(0.0),
        ChartKind::SurfaceOfRevolution(profile) => {
            let psi = (profile.value)(x[0]);
            let ddpsi = (profile.d2)(x[0]);
            // Gauss curvature K = −ψ''/ψ; Rc = K g for surfaces.
            Ok((ddpsi / psi).abs())
        }
        ChartKind::Conformal(factor) => {
            if n == 1 {
                return Ok(0.0);
            }
            let phi = (factor.value)(x);
            if !phi.is_finite() || phi <= 0.0 {
                return Err(Error::ChartDomain(format!(
                    "conformal factor {} nonpositive at {:?}",
                    factor.name, x
                )));
            }
            let dphi = (factor.grad)(x);
            let hphi = (factor.hess)(x);
            // f = log φ; flat-coordinate derivatives.
            let mut f1 = zero_vector();
            let mut f2 = zero_matrix();
            for i in 0..n {
                f1[i] = dphi[i] / phi;
            }
            for i in 0..n {
                for j in 0..n {
                    f2[i][j] = hphi[i][j] / phi - dphi[i] * dphi[j] / (phi * phi);
                }
            }
            let lap_f: f64 = (0..n).map(|i| f2[i][i]).sum();
            let grad_f_sq: f64 = (0..n).map(|i| f1[i] * f1[i]).sum();
            let nm2 = (n as f64) - 2.0;
            let mut rc = zero_matrix();
            for i in 0..n {
                for j in 0..n {
                    rc[i][j] = -nm2 * (f2[i][j] - f1[i] * f1[j]);
                    if i == j {
                        rc[i][j] -= lap_f + nm2 * grad_f_sq;
                    }
                }
            }
            // Operator w.r.t. g: φ^{-2} Rc_ij in the flat basis.
            let mut op = zero_matrix();
            for i in 0..n {
                for j in 0..n {
                    op[i][j] = rc[i][j] / (phi * phi);
                }
            }
            Ok(sym_eig_max_abs(&op, n))
        }
    }
}

/// Curvature bounds derived from max|Rc|: the weight exponents used by the
/// interior estimates require strict inequalities, so a 10% margin (with an
/// absolute floor for flat charts) is added.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureBounds {
    pub max_ricci: f64,
    pub m_thm: f64,
    pub rho_thm: f64,
}

fn with_margin(base: f64) -> f64 {
    base + (0.1 * base).max(0.1)
}

impl CurvatureBounds {
    pub fn from_max_ricci(max_ricci: f64) -> Self {
        Self {
            max_ricci,
            m_thm: with_margin(2.0 * max_ricci.sqrt()),
            rho_thm: with_margin(4.0 * max_ricci),
        }
    }
}

/// max over the given sample positions of the Ricci operator norm, with the
/// derived bound constants.
pub fn ricci_sup<'a>(
    chart: &MetricChart,
    positions: impl Iterator<Item = &'a [f64]>,
) -> Result<CurvatureBounds> {
    let mut max_rc: f64 = 0.0;
    for x in positions {
        max_rc = max_rc.max(ricci_op_norm(chart, x)?);
    }
    Ok(CurvatureBounds::from_max_ricci(max_rc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {b} within {tol}, got {a} (diff {})",
            (a - b).abs()
        );
    }

    #[test]
    fn euclidean_identity() {
        let chart = MetricChart::euclidean(3);
        let t = metric_at(&chart, &[0.3, -0.7, 0.1]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.g[i][j], if i == j { 1.0 } else { 0.0 });
                for k in 0..3 {
                    assert_eq!(t.christoffel[k][i][j], 0.0);
                }
            }
        }
        assert_eq!(t.sqrt_det, 1.0);
    }

    #[test]
    fn poincare_at_origin() {
        let chart = MetricChart::conformal(2, ConformalFactor::poincare());
        let t = metric_at(&chart, &[0.0, 0.0]).unwrap();
        assert_close(t.g[0][0], 4.0, 1e-14);
        assert_close(t.g[1][1], 4.0, 1e-14);
        assert_close(t.sqrt_det, 4.0, 1e-14); // φ^n = 2²
        // Christoffels vanish at the center.
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_close(t.christoffel[k][i][j], 0.0, 1e-14);
                }
            }
        }
    }

    #[test]
    fn inverse_metric_identity_everywhere() {
        let charts = [
            MetricChart::conformal(2, ConformalFactor::poincare()),
            MetricChart::surface_of_revolution(Profile::cosh()),
        ];
        for chart in &charts {
            for &x in &[[0.1, 0.2], [-0.4, 0.3], [0.55, -0.2]] {
                let t = metric_at(chart, &x).unwrap();
                for i in 0..2 {
                    for k in 0..2 {
                        let mut s = 0.0;
                        for j in 0..2 {
                            s += t.g_inv[i][j] * t.g[j][k];
                        }
                        assert_close(s, if i == k { 1.0 } else { 0.0 }, 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_symmetry() {
        let chart = MetricChart::conformal(3, ConformalFactor::poincare());
        let t = metric_at(&chart, &[0.2, -0.1, 0.3]).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_close(t.christoffel[k][i][j], t.christoffel[k][j][i], 1e-14);
                }
            }
        }
    }

    #[test]
    fn revolution_chart_at_zero() {
        let chart = MetricChart::surface_of_revolution(Profile::cosh());
        let t = metric_at(&chart, &[0.0, 1.3]).unwrap();
        assert_close(t.g[0][0], 1.0, 1e-14);
        assert_close(t.g[1][1], 1.0, 1e-14); // cosh(0)² = 1
        assert_close(t.christoffel[0][1][1], 0.0, 1e-14); // −sinh(0)cosh(0)
    }

    #[test]
    fn gradient_norms() {
        let chart = MetricChart::euclidean(2);
        let mut du = zero_vector();
        du[0] = 3.0;
        du[1] = 4.0;
        assert_close(norm_grad(&chart, &du, &[0.0, 0.0]).unwrap(), 5.0, 1e-14);

        let chart = MetricChart::conformal(2, ConformalFactor::poincare());
        let mut du = zero_vector();
        du[0] = 1.0;
        assert_close(norm_grad(&chart, &du, &[0.0, 0.0]).unwrap(), 0.5, 1e-14);

        let du = zero_vector();
        assert_close(norm_grad(&chart, &du, &[0.3, 0.1]).unwrap(), 0.0, 1e-14);
    }

    #[test]
    fn divergence_of_position_field() {
        // div x = n in flat space.
        let chart = MetricChart::euclidean(2);
        let x = [0.4, -0.2];
        let h = [0.05, 0.05];
        let mut minus = [zero_vector(); 3];
        let mut plus = [zero_vector(); 3];
        for i in 0..2 {
            let mut xm = x;
            xm[i] -= h[i];
            let mut xp = x;
            xp[i] += h[i];
            minus[i][..2].copy_from_slice(&xm);
            plus[i][..2].copy_from_slice(&xp);
        }
        let d = div_g_central(&chart, &x, &h, &minus, &plus).unwrap();
        assert_close(d, 2.0, 1e-12);
    }

    #[test]
    fn divergence_axial_unit_field_on_neck() {
        // div ∂_x = ψ'/ψ = tanh(x) for the cosh profile.
        let chart = MetricChart::surface_of_revolution(Profile::cosh());
        let x = [0.5, 1.0];
        let h = [0.01, 0.01];
        let mut unit = zero_vector();
        unit[0] = 1.0;
        let minus = [unit; 3];
        let plus = [unit; 3];
        let d = div_g_central(&chart, &x, &h, &minus, &plus).unwrap();
        assert_close(d, 0.5f64.tanh(), 1e-4);
        let exact = div_g_exact_field(&chart, &x, &|_| unit).unwrap();
        assert_close(exact, 0.5f64.tanh(), 1e-10);
    }

    #[test]
    fn covariant_hessian_flat_quadratic() {
        // u = |x|²/2 has identity Hessian in flat space.
        let chart = MetricChart::euclidean(2);
        let t = metric_at(&chart, &[0.3, 0.7]).unwrap();
        let mut d2 = zero_matrix();
        d2[0][0] = 1.0;
        d2[1][1] = 1.0;
        let du = [0.3, 0.7, 0.0];
        let h = hessian_cov(&t, &d2, &du);
        for i in 0..2 {
            for j in 0..2 {
                assert_close(h[i][j], if i == j { 1.0 } else { 0.0 }, 1e-14);
            }
        }
    }

    #[test]
    fn laplace_beltrami_consistency() {
        // div_g(grad u) from sampled composition matches the trace of the
        // covariant Hessian on analytic fields.
        let chart = MetricChart::conformal(2, ConformalFactor::poincare());
        let du = |x: &[f64]| -> Vector {
            let mut g = zero_vector();
            g[0] = 1.3 * (x[0] * 1.3).cos() * (x[1] * 0.7).cos() + x[1];
            g[1] = -0.7 * (x[0] * 1.3).sin() * (x[1] * 0.7).sin() + x[0];
            g
        };
        let d2u = |x: &[f64]| -> Matrix {
            let mut h = zero_matrix();
            h[0][0] = -1.69 * (x[0] * 1.3).sin() * (x[1] * 0.7).cos();
            h[1][1] = -0.49 * (x[0] * 1.3).sin() * (x[1] * 0.7).cos();
            h[0][1] = -0.91 * (x[0] * 1.3).cos() * (x[1] * 0.7).sin() + 1.0;
            h[1][0] = h[0][1];
            h
        };
        for &x in &[[0.15, 0.25], [-0.3, 0.1], [0.4, -0.35]] {
            let t = metric_at(&chart, &x).unwrap();
            let grad_field = |y: &[f64]| -> Vector {
                let ty = metric_at(&chart, y).unwrap();
                raise(&ty, &du(y))
            };
            let via_div = div_g_exact_field(&chart, &x, &grad_field).unwrap();
            let hc = hessian_cov(&t, &d2u(&x), &du(&x));
            let mut lap = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    lap += t.g_inv[i][j] * hc[i][j];
                }
            }
            assert_close(via_div, lap, 1e-9);
        }
    }

    #[test]
    fn ricci_constants() {
        let flat = MetricChart::euclidean(2);
        assert_eq!(ricci_op_norm(&flat, &[0.1, 0.2]).unwrap(), 0.0);
        let b = CurvatureBounds::from_max_ricci(0.0);
        assert_close(b.rho_thm, 0.1, 1e-14); // 0 + margin floor

        let poincare = MetricChart::conformal(2, ConformalFactor::poincare());
        for &x in &[[0.0, 0.0], [0.3, 0.2], [0.0, 0.6], [-0.5, 0.4]] {
            assert_close(ricci_op_norm(&poincare, &x).unwrap(), 1.0, 1e-10);
        }
        let b = CurvatureBounds::from_max_ricci(1.0);
        assert_close(b.rho_thm, 4.4, 1e-12);
        assert_close(b.m_thm, 2.2, 1e-12);

        // Poincaré ball n=3 has Rc = −2g.
        let p3 = MetricChart::conformal(3, ConformalFactor::poincare());
        assert_close(ricci_op_norm(&p3, &[0.2, -0.1, 0.3]).unwrap(), 2.0, 1e-10);

        let neck = MetricChart::surface_of_revolution(Profile::cosh());
        for &x in &[[0.0, 0.0], [0.5, 1.0], [-0.8, 2.0]] {
            assert_close(ricci_op_norm(&neck, &x).unwrap(), 1.0, 1e-14);
        }
    }

    #[test]
    fn conformal_christoffels_match_finite_differences() {
        // Γ from the closed form vs numerically differentiated metric:
        // Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij).
        let chart = MetricChart::conformal(2, ConformalFactor::poincare());
        let x = [0.25, -0.15];
        let t = metric_at(&chart, &x).unwrap();
        let h = 1e-5;
        let mut dg = [zero_matrix(); MAX_DIM]; // dg[l] = ∂_l g
        for l in 0..2 {
            let mut xp = x;
            xp[l] += h;
            let mut xm = x;
            xm[l] -= h;
            let tp = metric_at(&chart, &xp).unwrap();
            let tm = metric_at(&chart, &xm).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    dg[l][i][j] = (tp.g[i][j] - tm.g[i][j]) / (2.0 * h);
                }
            }
        }
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += 0.5 * t.g_inv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                    }
                    assert_close(t.christoffel[k][i][j], s, 1e-8);
                }
            }
        }
    }
}
