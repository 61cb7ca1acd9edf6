use arrival::grid::*;
use arrival::metric::*;
use arrival::pde::*;
use arrival::solver::*;
use std::time::Instant;

#[test]
fn probe_profile() {
    let g = Grid::build(MetricChart::euclidean(2), DomainShape::Ball { radius: 1.0 }, &[1.0/128.0], 2).unwrap();
    let params = RegParams::new(0.05, 0.01, 1.0).unwrap();
    // get a converged-ish field
    let sched = Schedule::default();
    let r = continuation_kappa(&g, 0.05, 0.01, &sched, None).unwrap();
    let u = r.field;
    let t = Instant::now();
    for _ in 0..5 { let _ = residual(&u, &params).unwrap(); }
    println!("residual eval: {:?}/call", t.elapsed()/5);
    let t = Instant::now();
    for _ in 0..5 { let _ = jacobian(&u, &params).unwrap(); }
    println!("jacobian assembly: {:?}/call", t.elapsed()/5);
    let sys = jacobian(&u, &params).unwrap();
    let t = Instant::now();
    let mut step = vec![0.0; sys.rhs.len()];
    let st = arrival::linalg::solve_sparse(&sys.matrix, &sys.rhs, &mut step, 1e-10).unwrap();
    println!("linear solve: {:?} ({} iters)", t.elapsed(), st.iterations);
}

#[test]
fn probe_monotonicity_vs_tol() {
    let g = Grid::build(MetricChart::euclidean(2), DomainShape::Ball { radius: 1.0 }, &[1.0/64.0], 2).unwrap();
    for tol in [1e-9f64, 1e-12] {
        let sched = Schedule {
            newton: NewtonOptions { tol_abs: tol, ..Default::default() },
            ..Default::default()
        };
        let a = continuation_kappa(&g, 0.0125, 0.5, &sched, None).unwrap();
        let params = RegParams::new(0.0125, 0.25, 1.0).unwrap();
        let b = solve_fixed(&params, &a.field, &sched.newton).unwrap();
        let mut viol = 0.0f64;
        for i in 0..g.node_count() {
            viol = viol.max(a.field.values[i] - b.field.values[i]);
        }
        println!("tol {tol:.0e}: violation {viol:.3e} (a res {:.1e}, b res {:.1e})", a.residual_norm, b.residual_norm);
    }
}
