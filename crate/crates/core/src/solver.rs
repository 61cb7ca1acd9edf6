//! Damped Newton solves of the (ε,σ,κ) problem, the κ-homotopy realizing the
//! continuity method, and the σ → 0 / ε → 0 sweeps with warm starts,
//! monotonicity checks and blow-up freezing.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{boundary_trace, Grid, ScalarField};
use crate::linalg;
use crate::pde::{self, RegParams};

/// Newton iteration controls.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// absolute tolerance on ‖F(u)‖_∞
    pub tol_abs: f64,
    /// minimum backtracking step
    pub min_step: f64,
    /// relative tolerance of the inner linear solves
    pub lin_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol_abs: 1e-9,
            min_step: 2.0f64.powi(-20),
            lin_tol: 1e-10,
        }
    }
}

/// Parameter ladders driving the continuation and the limit sweeps.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub kappa_step_init: f64,
    pub kappa_step_min: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub sigma_ratio: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_ratio: f64,
    pub newton: NewtonOptions,
    /// Blow-up threshold; None selects the default 0.5/(ε·σ_min).
    pub u_cut: Option<f64>,
    /// Warn when ε drops below this multiple of the grid spacing.
    pub eps_over_h_warn: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            kappa_step_init: 0.25,
            kappa_step_min: 1e-4,
            sigma0: 1.0,
            sigma_min: 1e-4,
            sigma_ratio: 0.5,
            eps0: 0.2,
            eps_min: 0.025,
            eps_ratio: 0.5,
            newton: NewtonOptions::default(),
            u_cut: None,
            eps_over_h_warn: 4.0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa_step_init > 0.0
            && self.kappa_step_min > 0.0
            && self.sigma0 > 0.0
            && self.sigma_min > 0.0
            && self.sigma_min <= self.sigma0
            && self.sigma_ratio > 0.0
            && self.sigma_ratio < 1.0
            && self.eps0 > 0.0
            && self.eps_min > 0.0
            && self.eps_min <= self.eps0
            && self.eps_ratio > 0.0
            && self.eps_ratio < 1.0
            && self.newton.tol_abs > 0.0
            && self.newton.lin_tol > 0.0;
        if !ok {
            return Err(Error::Config("invalid schedule: ladders must be strictly monotone and tolerances positive".into()));
        }
        for eps in self.eps_ladder() {
            let cut = self.u_cut_for(eps);
            if cut >= 1.0 / (eps * self.sigma_min) {
                return Err(Error::Config(format!(
                    "u_cut = {cut} must stay below the sup bound 1/(eps*sigma_min) = {}",
                    1.0 / (eps * self.sigma_min)
                )));
            }
        }
        Ok(())
    }

    pub fn sigma_ladder(&self) -> Vec<f64> {
        let mut l = Vec::new();
        let mut s = self.sigma0;
        while s > self.sigma_min * (1.0 + 1e-12) {
            l.push(s);
            s *= self.sigma_ratio;
        }
        l.push(self.sigma_min);
        l
    }

    pub fn eps_ladder(&self) -> Vec<f64> {
        let mut l = Vec::new();
        let mut e = self.eps0;
        while e > self.eps_min * (1.0 + 1e-12) {
            l.push(e);
            e *= self.eps_ratio;
        }
        l.push(self.eps_min);
        l
    }

    pub fn u_cut_for(&self, eps: f64) -> f64 {
        self.u_cut.unwrap_or(0.5 / (eps * self.sigma_min))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SolveStatus {
    Converged,
    Diverged,
}

/// Outcome of one fixed-parameter solve.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub params: RegParams,
    pub field: ScalarField,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// κ values visited to reach these parameters (empty for direct solves).
    pub kappa_path: Vec<f64>,
    /// nodes whose value exceeded the blow-up threshold
    pub clip_flags: Vec<bool>,
    pub status: SolveStatus,
}

impl SolveResult {
    /// Worst violation of 0 ≤ u ≤ κ/(σε) over active nodes (0 when clean).
    pub fn sup_bound_violation(&self) -> f64 {
        let bound = self.params.sup_bound();
        let g = &self.field.grid;
        let mut worst = 0.0f64;
        for node in 0..g.node_count() {
            if !g.is_active(node) {
                continue;
            }
            let u = self.field.values[node];
            worst = worst.max(-u).max(u - bound);
        }
        worst
    }
}

fn active_sup_norm(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let mut m = 0.0f64;
    for node in 0..g.node_count() {
        if g.is_active(node) {
            m = m.max(f.values[node].abs());
        }
    }
    m
}

fn active_l2_norm(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let mut s = 0.0f64;
    for node in 0..g.node_count() {
        if g.is_active(node) {
            s += f.values[node] * f.values[node];
        }
    }
    s.sqrt()
}

/// Solve F(u) = 0 at fixed (ε,σ,κ) by damped Newton from `initial`.
/// Requires σ > 0 so the sup bound is finite. Newton stagnation yields a
/// `Diverged` result carrying the best iterate; linear-solve breakdown is
/// an error.
pub fn solve_fixed(
    params: &RegParams,
    initial: &ScalarField,
    opts: &NewtonOptions,
) -> Result<SolveResult> {
    if params.sigma <= 0.0 {
        return Err(Error::Config(
            "solve_fixed requires sigma > 0 (finite sup bound)".into(),
        ));
    }
    if params.eps <= 0.0 {
        return Err(Error::Config("solve_fixed requires eps > 0".into()));
    }
    initial.check_finite()?;
    let mut u = initial.clone();
    let mut f = pde::residual(&u, params)?;
    let mut rnorm = active_sup_norm(&f);
    let mut merit = active_l2_norm(&f);
    let mut iterations = 0usize;

    while iterations < opts.max_iter {
        if rnorm <= opts.tol_abs {
            break;
        }
        iterations += 1;
        let sys = pde::jacobian(&u, params)?;
        let n = sys.rhs.len();
        let mut step = vec![0.0; n];
        linalg::solve_sparse(&sys.matrix, &sys.rhs, &mut step, opts.lin_tol).map_err(|e| {
            let diag = sys.matrix.diag();
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let dmax = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Error::LinearSolve(format!(
                "{e} [diag range {dmin:.3e}..{dmax:.3e}, eps={}, sigma={}, kappa={}]",
                params.eps, params.sigma, params.kappa
            ))
        })?;

        // cap the step length relative to the iterate scale; far from the
        // solution the Newton direction can blow up along the nearly
        // degenerate gradient direction and inject grid-scale oscillation
        let step_max = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cap = (0.5 * (1.0 + active_sup_norm(&u))).max(1.0);
        if step_max > cap {
            let scale = cap / step_max;
            for s in &mut step {
                *s *= scale;
            }
        }

        // backtracking on the l2 merit norm (Newton directions are descent
        // directions for it); convergence is still measured in sup norm
        let mut alpha = 1.0f64;
        let mut accepted = false;
        while alpha >= opts.min_step {
            let mut trial = u.clone();
            for (r, &node) in sys.node_of_row.iter().enumerate() {
                trial.values[node as usize] += alpha * step[r];
            }
            match pde::residual(&trial, params) {
                Ok(ft) => {
                    let mt = active_l2_norm(&ft);
                    let rt = active_sup_norm(&ft);
                    if mt < merit * (1.0 - 1e-4 * alpha) || rt <= opts.tol_abs {
                        u = trial;
                        f = ft;
                        rnorm = rt;
                        merit = mt;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {} // overflowing trial, shrink the step
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(SolveResult {
                params: *params,
                clip_flags: vec![false; u.grid.node_count()],
                field: u,
                residual_norm: rnorm,
                newton_iterations: iterations,
                kappa_path: Vec::new(),
                status: SolveStatus::Diverged,
            });
        }
    }

    let status = if rnorm <= opts.tol_abs {
        SolveStatus::Converged
    } else {
        SolveStatus::Diverged
    };
    drop(f);
    Ok(SolveResult {
        params: *params,
        clip_flags: vec![false; u.grid.node_count()],
        field: u,
        residual_norm: rnorm,
        newton_iterations: iterations,
        kappa_path: Vec::new(),
        status,
    })
}

/// Reach κ = 1 at fixed (ε, σ) by path-following from the trivial solution
/// at κ = 0, with adaptive step halving on divergence. A warm start is
/// tried directly at κ = 1 first.
pub fn continuation_kappa(
    grid: &Arc<Grid>,
    eps: f64,
    sigma: f64,
    schedule: &Schedule,
    warm: Option<&ScalarField>,
) -> Result<SolveResult> {
    let opts = &schedule.newton;
    if let Some(w) = warm {
        let params = RegParams::new(eps, sigma, 1.0)?;
        if let Ok(mut r) = solve_fixed(&params, &w.on_grid(grid), opts) {
            if r.status == SolveStatus::Converged {
                r.kappa_path = vec![1.0];
                return Ok(r);
            }
        }
    }

    let mut u = ScalarField::zeros(grid);
    let mut kappa = 0.0f64;
    let mut path = vec![0.0];
    // the κ = 0 problem has the trivial solution
    let r0 = solve_fixed(&RegParams::new(eps, sigma, 0.0)?, &u, opts)?;
    u = r0.field;
    let mut iterations = r0.newton_iterations;
    let mut step = schedule.kappa_step_init;
    let mut last = None;
    let mut last_err: Option<Error> = None;
    while kappa < 1.0 {
        let target = (kappa + step).min(1.0);
        let params = RegParams::new(eps, sigma, target)?;
        let attempt = match solve_fixed(&params, &u, opts) {
            Ok(a) => a,
            Err(e @ Error::LinearSolve(_)) => {
                // a breakdown of the inner solve at an overambitious step is
                // a divergence signal for the homotopy
                last_err = Some(e);
                step *= 0.5;
                if step < schedule.kappa_step_min {
                    return Err(last_err.unwrap());
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        if attempt.status == SolveStatus::Converged {
            kappa = target;
            path.push(target);
            u = attempt.field.clone();
            iterations += attempt.newton_iterations;
            last = Some(attempt);
            step = (step * 2.0).min(schedule.kappa_step_init);
        } else {
            step *= 0.5;
            if step < schedule.kappa_step_min {
                return Err(Error::KappaUnderflow { last_kappa: kappa });
            }
        }
    }
    drop(last_err);
    let mut result = last.expect("kappa loop ran at least once");
    result.kappa_path = path;
    result.newton_iterations = iterations;
    Ok(result)
}

/// One rung of a σ sweep.
#[derive(Clone, Debug)]
pub struct RungRecord {
    pub eps: f64,
    pub sigma: f64,
    pub grid: Arc<Grid>,
    pub result: SolveResult,
    /// worst decrease vs the previous rung over common active nodes whose
    /// stencils are unchanged (the discretization-consistent comparison)
    pub monotonicity_violation: f64,
    /// worst decrease over nodes whose stencils turned one-sided at a
    /// frozen wall; carries the O(h) closure perturbation
    pub monotonicity_violation_interface: f64,
    /// sup and inf of the one-sided boundary gradient norms
    pub trace_sup: f64,
    pub trace_inf: f64,
    /// nodes newly frozen after this rung
    pub newly_frozen: usize,
}

/// Persistence hook so long sweeps can resume after interruption.
pub trait RungStore {
    fn load(&self, eps: f64, sigma: f64) -> Option<Vec<f64>>;
    fn save(&mut self, rec: &RungRecord) -> Result<()>;
}

/// No-op store.
pub struct NullStore;

impl RungStore for NullStore {
    fn load(&self, _eps: f64, _sigma: f64) -> Option<Vec<f64>> {
        None
    }
    fn save(&mut self, _rec: &RungRecord) -> Result<()> {
        Ok(())
    }
}

/// Results of a σ → σ_min sweep at fixed ε.
#[derive(Clone, Debug)]
pub struct SigmaSweep {
    pub eps: f64,
    pub rungs: Vec<RungRecord>,
    /// grid with every node frozen during the sweep
    pub final_grid: Arc<Grid>,
    pub frozen: Vec<bool>,
}

impl SigmaSweep {
    pub fn final_field(&self) -> &ScalarField {
        &self.rungs.last().expect("sweep has rungs").result.field
    }
}

/// Sweep σ down the ladder at fixed ε with warm starts; nodes crossing the
/// blow-up threshold are flagged and frozen out of subsequent solves.
pub fn sigma_sweep(
    grid: &Arc<Grid>,
    eps: f64,
    schedule: &Schedule,
    warm: Option<&ScalarField>,
    store: &mut dyn RungStore,
) -> Result<SigmaSweep> {
    schedule.validate()?;
    let hmin = (0..grid.dim).map(|a| grid.h[a]).fold(f64::INFINITY, f64::min);
    if eps < schedule.eps_over_h_warn * hmin {
        eprintln!(
            "warning: eps = {eps} below {} * h = {}; regularization scale near grid scale",
            schedule.eps_over_h_warn,
            schedule.eps_over_h_warn * hmin
        );
    }
    let u_cut = schedule.u_cut_for(eps);
    let sigmas = schedule.sigma_ladder();
    let mut cur_grid = grid.clone();
    let mut frozen = vec![false; grid.node_count()];
    let mut rungs: Vec<RungRecord> = Vec::with_capacity(sigmas.len());
    let mut prev_field: Option<ScalarField> = None;

    for (k, &sigma) in sigmas.iter().enumerate() {
        let start = prev_field.as_ref().or(warm);
        let result = if let Some(values) = store.load(eps, sigma) {
            // resume: verify the checkpointed field actually solves the rung
            let params = RegParams::new(eps, sigma, 1.0)?;
            let field = ScalarField {
                grid: cur_grid.clone(),
                values,
            };
            let rn = active_sup_norm(&pde::residual(&field, &params)?);
            if rn <= 10.0 * schedule.newton.tol_abs {
                SolveResult {
                    params,
                    field,
                    residual_norm: rn,
                    newton_iterations: 0,
                    kappa_path: Vec::new(),
                    clip_flags: vec![false; cur_grid.node_count()],
                    status: SolveStatus::Converged,
                }
            } else {
                solve_rung(&cur_grid, eps, sigma, schedule, start, k == 0)?
            }
        } else {
            solve_rung(&cur_grid, eps, sigma, schedule, start, k == 0)?
        };

        // monotonicity vs the previous rung on the common active set; nodes
        // whose stencils changed when a neighbor froze are compared
        // separately, since the one-sided closure shifts them by O(h)
        let mut violation = 0.0f64;
        let mut violation_if = 0.0f64;
        if let (Some(prev), Some(prev_grid)) = (&prev_field, rungs.last().map(|r| &r.grid)) {
            for node in 0..cur_grid.node_count() {
                if !cur_grid.is_active(node) || !prev_grid.is_active(node) {
                    continue;
                }
                let d = prev.values[node] - result.field.values[node];
                let same_taps = cur_grid.grad_taps[node] == prev_grid.grad_taps[node]
                    && cur_grid.hess_taps[node] == prev_grid.hess_taps[node];
                if same_taps {
                    violation = violation.max(d);
                } else {
                    violation_if = violation_if.max(d);
                }
            }
        }
        if violation > 10.0 * schedule.newton.tol_abs {
            eprintln!(
                "warning: sigma monotonicity violated by {violation:.3e} at sigma = {sigma}"
            );
        }

        let traces = boundary_trace(&result.field)?;
        let trace_sup = traces.iter().map(|t| t.grad_norm).fold(0.0, f64::max);
        let trace_inf = traces
            .iter()
            .map(|t| t.grad_norm)
            .fold(f64::INFINITY, f64::min);

        // flag blow-up nodes; they freeze out of subsequent rungs
        let mut newly = Vec::new();
        for node in 0..cur_grid.node_count() {
            if cur_grid.is_active(node) && result.field.values[node] > u_cut {
                newly.push(node);
            }
        }
        let mut rec = RungRecord {
            eps,
            sigma,
            grid: cur_grid.clone(),
            result,
            monotonicity_violation: violation,
            monotonicity_violation_interface: violation_if,
            trace_sup,
            trace_inf,
            newly_frozen: newly.len(),
        };
        for &node in &newly {
            rec.result.clip_flags[node] = true;
            frozen[node] = true;
        }
        store.save(&rec)?;
        prev_field = Some(rec.result.field.clone());
        rungs.push(rec);

        if !newly.is_empty() && k + 1 < sigmas.len() {
            cur_grid = cur_grid.with_frozen(&frozen);
            prev_field = Some(prev_field.unwrap().on_grid(&cur_grid));
        }
    }

    Ok(SigmaSweep {
        eps,
        rungs,
        final_grid: cur_grid,
        frozen,
    })
}

fn solve_rung(
    grid: &Arc<Grid>,
    eps: f64,
    sigma: f64,
    schedule: &Schedule,
    warm: Option<&ScalarField>,
    first: bool,
) -> Result<SolveResult> {
    if first {
        return continuation_kappa(grid, eps, sigma, schedule, warm);
    }
    let params = RegParams::new(eps, sigma, 1.0)?;
    if let Some(w) = warm {
        match solve_fixed(&params, &w.on_grid(grid), &schedule.newton) {
            Ok(attempt) if attempt.status == SolveStatus::Converged => return Ok(attempt),
            Ok(_) | Err(Error::LinearSolve(_)) => {}
            Err(e) => return Err(e),
        }
    }
    // warm start failed: rebuild the homotopy path at this σ
    continuation_kappa(grid, eps, sigma, schedule, None)
}

/// Results of the ε → 0 outer sweep.
#[derive(Clone, Debug)]
pub struct EpsilonSweep {
    pub eps_ladder: Vec<f64>,
    pub sweeps: Vec<SigmaSweep>,
    /// per-rung ∞-norm of u_{ε_{k+1}} − u_{ε_k} on the common active set
    pub cauchy_diffs: Vec<f64>,
    pub cauchy_warning: bool,
    /// first-order Richardson extrapolation 2u_K − u_{K−1}; None with a
    /// single rung
    pub extrapolated: Option<ScalarField>,
    /// nodes where the extrapolation is valid (active at both finest rungs)
    pub extrapolated_mask: Vec<bool>,
}

impl EpsilonSweep {
    pub fn final_field(&self) -> &ScalarField {
        self.sweeps.last().expect("sweep has rungs").final_field()
    }
}

/// Run a σ sweep per ε rung, warm-starting each from the previous, and
/// report Cauchy differences plus the extrapolated arrival time.
pub fn epsilon_sweep(
    grid: &Arc<Grid>,
    schedule: &Schedule,
    store: &mut dyn RungStore,
) -> Result<EpsilonSweep> {
    schedule.validate()?;
    let ladder = schedule.eps_ladder();
    let mut sweeps: Vec<SigmaSweep> = Vec::with_capacity(ladder.len());
    for &eps in &ladder {
        let warm = sweeps.last().map(|s| &s.rungs[0].result.field);
        let warm = warm.map(|f| f.on_grid(grid));
        let sweep = sigma_sweep(grid, eps, schedule, warm.as_ref(), store)?;
        sweeps.push(sweep);
    }

    let mut cauchy = Vec::new();
    for k in 0..sweeps.len().saturating_sub(1) {
        let a = sweeps[k].final_field();
        let b = sweeps[k + 1].final_field();
        let mut diff = 0.0f64;
        for node in 0..grid.node_count() {
            if a.grid.is_active(node) && b.grid.is_active(node) {
                diff = diff.max((a.values[node] - b.values[node]).abs());
            }
        }
        cauchy.push(diff);
    }
    let cauchy_warning = cauchy.windows(2).any(|w| w[1] > w[0]);
    if cauchy_warning {
        eprintln!("warning: eps differences not decreasing: {cauchy:?}");
    }

    let (extrapolated, mask) = if sweeps.len() >= 2 {
        let a = sweeps[sweeps.len() - 2].final_field(); // coarser ε
        let b = sweeps[sweeps.len() - 1].final_field(); // finest ε
        let mut out = ScalarField::zeros(&b.grid);
        let mut mask = vec![false; grid.node_count()];
        for node in 0..grid.node_count() {
            if a.grid.is_active(node) && b.grid.is_active(node) {
                out.values[node] = 2.0 * b.values[node] - a.values[node];
                mask[node] = true;
            }
        }
        (Some(out), mask)
    } else {
        (None, vec![false; grid.node_count()])
    };

    Ok(EpsilonSweep {
        eps_ladder: ladder,
        sweeps,
        cauchy_diffs: cauchy,
        cauchy_warning,
        extrapolated,
        extrapolated_mask: mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DomainShape, Grid, NodeClass};
    use crate::metric::MetricChart;
    use crate::oracle::{radial_pde_solve, RadialCase};

    fn disk(h: f64) -> Arc<Grid> {
        Grid::build(
            MetricChart::euclidean(2),
            DomainShape::Ball { radius: 1.0 },
            &[h],
            2,
        )
        .unwrap()
    }

    #[test]
    fn trivial_solution_at_kappa_zero() {
        let g = disk(1.0 / 12.0);
        let zero = ScalarField::zeros(&g);
        let params = RegParams::new(0.1, 0.5, 0.0).unwrap();
        let r = solve_fixed(&params, &zero, &NewtonOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.newton_iterations <= 1);
        assert_eq!(r.field.max_abs(), 0.0);
    }

    #[test]
    fn sigma_zero_rejected() {
        let g = disk(1.0 / 12.0);
        let zero = ScalarField::zeros(&g);
        let params = RegParams::new(0.1, 0.0, 1.0).unwrap();
        assert!(solve_fixed(&params, &zero, &NewtonOptions::default()).is_err());
    }

    #[test]
    fn disk_solve_matches_radial_reference() {
        let h = 1.0 / 24.0;
        let g = disk(h);
        let sched = Schedule::default();
        let r = continuation_kappa(&g, 0.1, 0.1, &sched, None).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.sup_bound_violation() <= 1e-8);
        let center = g.node_near(&[0.0, 0.0]).unwrap();
        let u0 = r.field.values[center];
        assert!(u0 > 0.0 && u0 <= 100.0);
        // reference: 1D radial solve of the same reduced ODE
        let case = RadialCase::EuclideanBall {
            dim: 2,
            radius: 1.0,
        };
        let p1 = radial_pde_solve(&case, 0.1, 0.1, 1.0 / 2048.0, None).unwrap();
        let mut worst = 0.0f64;
        for node in 0..g.node_count() {
            let x = &g.positions[node];
            let rad = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if g.class[node] == NodeClass::Interior {
                worst = worst.max((r.field.values[node] - p1.value_at(rad)).abs());
            }
        }
        assert!(worst <= 5.0 * h, "2D vs 1D deviation {worst:.3e}");
    }

    #[test]
    fn uniqueness_under_initial_guess() {
        let g = disk(1.0 / 16.0);
        let params = RegParams::new(0.8, 0.5, 1.0).unwrap();
        let opts = NewtonOptions::default();
        let from_zero = solve_fixed(&params, &ScalarField::zeros(&g), &opts).unwrap();
        // distance barrier C·r as a second initial guess; the distance
        // function of the disk is smooth away from the center, so δ = 1 and
        // C = max{1/(σεδ), 2/H₀}
        let c = (1.0f64 / (params.sigma * params.eps)).max(2.0);
        let barrier = ScalarField::from_fn(&g, |x| {
            c * (1.0 - (x[0] * x[0] + x[1] * x[1]).sqrt())
        });
        let from_barrier = solve_fixed(&params, &barrier, &opts).unwrap();
        assert_eq!(from_zero.status, SolveStatus::Converged);
        assert_eq!(from_barrier.status, SolveStatus::Converged);
        let mut diff = 0.0f64;
        for node in 0..g.node_count() {
            diff = diff
                .max((from_zero.field.values[node] - from_barrier.field.values[node]).abs());
        }
        assert!(diff <= 1e-8, "solutions differ by {diff:.3e}");
    }

    #[test]
    fn continuation_ladder_length_and_giant_step() {
        let g = disk(1.0 / 16.0);
        let sched = Schedule::default();
        let r = continuation_kappa(&g, 0.1, 0.5, &sched, None).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(
            r.kappa_path.len() <= 8,
            "ladder took {} steps",
            r.kappa_path.len()
        );
        assert_eq!(*r.kappa_path.last().unwrap(), 1.0);
        // one giant step from zero converges here too and agrees
        let params = RegParams::new(0.1, 0.5, 1.0).unwrap();
        let direct = solve_fixed(&params, &ScalarField::zeros(&g), &sched.newton).unwrap();
        assert_eq!(direct.status, SolveStatus::Converged);
        let mut diff = 0.0f64;
        for node in 0..g.node_count() {
            diff = diff.max((r.field.values[node] - direct.field.values[node]).abs());
        }
        assert!(diff <= 1e-8);
    }

    #[test]
    fn sigma_sweep_monotone_and_bounded() {
        let g = disk(1.0 / 16.0);
        let sched = Schedule {
            sigma0: 0.8,
            sigma_min: 0.05,
            eps0: 0.1,
            eps_min: 0.1,
            ..Default::default()
        };
        let sweep = sigma_sweep(&g, 0.1, &sched, None, &mut NullStore).unwrap();
        assert!(sweep.rungs.len() >= 4);
        for rec in &sweep.rungs {
            assert_eq!(rec.result.status, SolveStatus::Converged);
            assert!(
                rec.monotonicity_violation <= 10.0 * sched.newton.tol_abs,
                "violation {:.3e} at sigma {}",
                rec.monotonicity_violation,
                rec.sigma
            );
            assert!(rec.result.sup_bound_violation() <= 1e-8);
        }
        // no blow-up on the disk: nothing frozen
        assert!(sweep.frozen.iter().all(|f| !f));
    }

    #[test]
    fn epsilon_sweep_reaches_disk_arrival() {
        let g = disk(1.0 / 24.0);
        let sched = Schedule {
            sigma0: 0.5,
            sigma_min: 1e-3,
            eps0: 0.2,
            eps_min: 0.05,
            ..Default::default()
        };
        let sweep = epsilon_sweep(&g, &sched, &mut NullStore).unwrap();
        assert_eq!(sweep.eps_ladder, vec![0.2, 0.1, 0.05]);
        let center = g.node_near(&[0.0, 0.0]).unwrap();
        let ex = sweep.extrapolated.as_ref().unwrap();
        assert!(sweep.extrapolated_mask[center]);
        let u0 = ex.values[center];
        assert!(
            (u0 - 0.5).abs() < 0.05,
            "extrapolated center arrival {u0} vs 0.5"
        );
        // differences along the ladder shrink
        assert!(!sweep.cauchy_warning, "diffs {:?}", sweep.cauchy_diffs);
    }

    #[test]
    fn neck_freezing_grows_monotonically() {
        let g = Grid::build(
            MetricChart::surface_of_revolution(crate::metric::Profile::cosh()),
            DomainShape::Band { half_width: 1.0 },
            &[1.0 / 96.0, 0.5],
            2,
        )
        .unwrap();
        let sched = Schedule {
            sigma0: 1.0,
            sigma_min: 1e-3,
            eps0: 0.05,
            eps_min: 0.05,
            u_cut: Some(2.3),
            ..Default::default()
        };
        let sweep = sigma_sweep(&g, 0.05, &sched, None, &mut NullStore).unwrap();
        let frozen_count = sweep.frozen.iter().filter(|f| **f).count();
        assert!(frozen_count > 0, "neck run should freeze the blow-up strip");
        // frozen set grows along the ladder
        let mut seen = 0usize;
        for rec in &sweep.rungs {
            let total = rec.result.clip_flags.iter().filter(|f| **f).count();
            assert_eq!(total, rec.newly_frozen);
            seen += total;
        }
        assert_eq!(seen, frozen_count);
        // frozen nodes are near the central geodesic, at coordinates where
        // the closed form exceeds the threshold
        let x_cut = (1.0f64.sinh() * (-2.3f64).exp()).asinh();
        for node in 0..g.node_count() {
            if sweep.frozen[node] {
                assert!(g.positions[node][0].abs() < x_cut + 2.0 / 96.0);
            }
        }
        // active-set values remain monotone after freezing
        for rec in &sweep.rungs {
            assert!(rec.monotonicity_violation <= 10.0 * sched.newton.tol_abs);
        }
    }
}
