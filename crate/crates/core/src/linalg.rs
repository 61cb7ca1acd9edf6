//! Sparse linear algebra for the Newton linearizations: CSR storage,
//! ILU(0) preconditioning and BiCGSTAB. The solver contract is the relative
//! residual tolerance, not the method.

use crate::error::{Error, Result};

/// Compressed-row sparse matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from per-row (col, value) lists; entries within a row are
    /// sorted and deduplicated.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < r.len() {
                let c = r[k].0;
                let mut v = r[k].1;
                let mut m = k + 1;
                while m < r.len() && r[m].0 == c {
                    v += r[m].1;
                    m += 1;
                }
                col.push(c);
                val.push(v);
                k = m;
            }
            row_ptr.push(col.len());
        }
        Self {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[k] as usize == i {
                    d[i] = self.val[k];
                }
            }
        }
        d
    }

    /// Dump in the documented triplet text format: one `row col value` per line.
    pub fn write_triplets(&self, w: &mut dyn std::io::Write) -> std::io::Result<()> {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.16e}", i, self.col[k], self.val[k])?;
            }
        }
        Ok(())
    }
}

/// ILU(0): incomplete LU on the matrix sparsity pattern. Rows must have
/// their diagonal entry present.
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
    diag_ptr: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let mut val = a.val.clone();
        let row_ptr = a.row_ptr.clone();
        let col = a.col.clone();
        let mut diag_ptr = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if col[k] as usize == i {
                    diag_ptr[i] = k;
                }
            }
            if diag_ptr[i] == usize::MAX {
                return Err(Error::LinearSolve(format!("row {i} has no diagonal entry")));
            }
        }
        // IKJ-variant incomplete factorization
        let mut colmap = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                colmap[col[k] as usize] = k;
            }
            let mut k = row_ptr[i];
            while k < row_ptr[i + 1] {
                let j = col[k] as usize;
                if j >= i {
                    break;
                }
                let piv = val[diag_ptr[j]];
                let piv = if piv.abs() < 1e-300 {
                    1e-300f64.copysign(piv)
                } else {
                    piv
                };
                let lij = val[k] / piv;
                val[k] = lij;
                for m in (diag_ptr[j] + 1)..row_ptr[j + 1] {
                    let c = col[m] as usize;
                    let slot = colmap[c];
                    if slot != usize::MAX {
                        val[slot] -= lij * val[m];
                    }
                }
                k += 1;
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                colmap[col[k] as usize] = usize::MAX;
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col,
            val,
            diag_ptr,
        })
    }

    /// z = (LU)^{-1} r
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        // forward solve L z = r (unit lower)
        for i in 0..self.n {
            let mut s = r[i];
            for k in self.row_ptr[i]..self.diag_ptr[i] {
                s -= self.val[k] * z[self.col[k] as usize];
            }
            z[i] = s;
        }
        // back solve U z = z
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for k in (self.diag_ptr[i] + 1)..self.row_ptr[i + 1] {
                s -= self.val[k] * z[self.col[k] as usize];
            }
            let d = self.val[self.diag_ptr[i]];
            let d = if d.abs() < 1e-300 {
                1e-300f64.copysign(d)
            } else {
                d
            };
            z[i] = s / d;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Right-preconditioned BiCGSTAB to relative residual `rtol`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = a.n;
    let ilu = Ilu0::factor(a)?;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    x.fill(0.0);
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut best = x.to_vec();
    let mut best_res = f64::INFINITY;

    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break; // breakdown; fall through to the best-iterate check
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom.abs() < 1e-300 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm <= rtol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(SolveStats {
                iterations: it,
                rel_residual: norm2(&s) / bnorm,
            });
        }
        ilu.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        if omega == 0.0 {
            break;
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm2(&r) / bnorm;
        if rel < best_res {
            best_res = rel;
            best.copy_from_slice(x);
        }
        if rel <= rtol {
            return Ok(SolveStats {
                iterations: it,
                rel_residual: rel,
            });
        }
    }
    // verify the best iterate against the true residual
    a.matvec(&best, &mut t);
    for i in 0..n {
        t[i] = b[i] - t[i];
    }
    let rel = norm2(&t) / bnorm;
    if rel <= rtol * 10.0 {
        x.copy_from_slice(&best);
        return Ok(SolveStats {
            iterations: max_iter,
            rel_residual: rel,
        });
    }
    Err(Error::LinearSolve(format!(
        "BiCGSTAB stalled at relative residual {rel:.3e} (target {rtol:.1e}, n = {n})"
    )))
}

/// Restarted GMRES(m) with ILU(0) right preconditioning.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_outer: usize,
) -> Result<SolveStats> {
    let n = a.n;
    let ilu = Ilu0::factor(a)?;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    x.fill(0.0);
    let m = restart.min(n);
    let mut total_iters = 0usize;
    let mut r = b.to_vec();
    let mut tmp = vec![0.0; n];
    for _outer in 0..max_outer {
        let beta = norm2(&r);
        if beta / bnorm <= rtol {
            return Ok(SolveStats {
                iterations: total_iters,
                rel_residual: beta / bnorm,
            });
        }
        // Arnoldi with modified Gram-Schmidt and Givens rotations
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|t| t / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            ilu.apply(&v[k], &mut tmp);
            let mut w = vec![0.0; n];
            a.matvec(&tmp, &mut w);
            for i in 0..=k {
                let hik = dot(&v[i], &w);
                h[i][k] = hik;
                for (we, ve) in w.iter_mut().zip(&v[i]) {
                    *we -= hik * ve;
                }
            }
            let hkk = norm2(&w);
            h[k + 1][k] = hkk;
            if hkk > 1e-300 {
                v.push(w.iter().map(|t| t / hkk).collect());
            } else {
                v.push(vec![0.0; n]);
            }
            // apply accumulated rotations, then a new one
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom < 1e-300 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= rtol {
                break;
            }
        }
        // back substitution for the small system
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (j, &yj) in y.iter().enumerate().take(k_used) {
            for i in 0..n {
                z[i] += yj * v[j][i];
            }
        }
        ilu.apply(&z, &mut tmp);
        for i in 0..n {
            x[i] += tmp[i];
        }
        // true residual for the next cycle
        a.matvec(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
    }
    let rel = norm2(&r) / bnorm;
    if rel <= rtol {
        return Ok(SolveStats {
            iterations: total_iters,
            rel_residual: rel,
        });
    }
    Err(Error::LinearSolve(format!(
        "GMRES stalled at relative residual {rel:.3e} (target {rtol:.1e}, n = {n})"
    )))
}

/// Row-equilibrate: scale each row by 1/max|entry| for preconditioner
/// quality. Returns the scaled matrix and right-hand side; the solution is
/// unchanged.
pub fn equilibrate(a: &CsrMatrix, b: &[f64]) -> (CsrMatrix, Vec<f64>) {
    let mut scaled = a.clone();
    let mut bs = b.to_vec();
    for i in 0..a.n {
        let mut m = 0.0f64;
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            m = m.max(a.val[k].abs());
        }
        if m > 0.0 {
            let inv = 1.0 / m;
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                scaled.val[k] *= inv;
            }
            bs[i] *= inv;
        }
    }
    (scaled, bs)
}

/// Solve the row-equilibrated system to relative residual `rtol`:
/// BiCGSTAB first, restarted GMRES as fallback.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], x: &mut [f64], rtol: f64) -> Result<SolveStats> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let (as_, bs) = equilibrate(a, b);
    let max_iter = (40 * n).clamp(400, 200_000);
    if let Ok(stats) = bicgstab(&as_, &bs, x, rtol, max_iter) {
        return Ok(stats);
    }
    gmres(&as_, &bs, x, rtol, 120, 60)
}
