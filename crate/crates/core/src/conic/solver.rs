//! Operator-splitting solver on the homogeneous self-dual embedding.
//!
//! The iteration is the ADMM scheme of O'Donoghue et al. (SCS): a linear
//! solve with the skew-symmetric embedding matrix, a projection onto
//! `R^n x K* x R_+`, and a dual update. Data are equilibrated first
//! (modified Ruiz scaling that keeps SOC/PSD blocks uniformly scaled), and
//! the fixed-point iteration is optionally accelerated with safeguarded
//! type-II Anderson acceleration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::cones::project_in_place;
use super::{dot, norm2, Cone, ConicProgram, DenseMatrix, ProgramError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub scaling: bool,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    /// Weight of the primal block in the linear system.
    pub rho_x: f64,
    /// Global data scale applied after equilibration.
    pub scale: f64,
    /// Certificate tolerance for infeasibility / unboundedness.
    pub tol_infeas: f64,
    /// No certificate is reported before this many iterations.
    pub min_iters_infeas: usize,
    pub check_every: usize,
    /// Anderson memory; 0 disables acceleration.
    pub anderson_memory: usize,
    /// When set, a residual trace is written here as CSV.
    pub trace_path: Option<PathBuf>,
    /// Stop with `MaxIters` once this instant has passed.
    pub deadline: Option<Instant>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-7,
            max_iters: 50_000,
            scaling: true,
            alpha: 1.5,
            rho_x: 1e-3,
            scale: 1.0,
            tol_infeas: 1e-9,
            min_iters_infeas: 500,
            check_every: 10,
            anderson_memory: 10,
            trace_path: None,
            deadline: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid program: {0}")]
    Program(#[from] ProgramError),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("linear system factorization failed")]
    Factorization,
    #[error("cone projection failed: {0}")]
    Cone(#[from] super::ConeError),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Primal variables `x` (a certificate direction when unbounded).
    pub primal: Vec<f64>,
    /// Dual variables `y` (a certificate when infeasible).
    pub dual: Vec<f64>,
    /// Primal slack `s`.
    pub slack: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Scaled {
    a: DenseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Row scaling.
    d: Vec<f64>,
    /// Column scaling.
    e: Vec<f64>,
    sigma_b: f64,
    sigma_c: f64,
}

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

fn equilibrate(p: &ConicProgram, s: &SolverSettings) -> Scaled {
    let m = p.num_rows();
    let n = p.num_vars;
    let mut a = p.a.clone();
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    if s.scaling && m > 0 && n > 0 {
        for _ in 0..25 {
            let mut row_norm: Vec<f64> = (0..m)
                .map(|i| a.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
                .collect();
            // uniform scaling inside non-separable cones
            let mut start = 0;
            for cone in &p.cones {
                let len = cone.rows();
                if matches!(cone, Cone::Soc(_) | Cone::Psd(_)) && len > 0 {
                    let mx = row_norm[start..start + len].iter().fold(0.0f64, |a, v| a.max(*v));
                    row_norm[start..start + len].iter_mut().for_each(|v| *v = mx);
                }
                start += len;
            }
            // the cost row takes part in the column balance
            let mut col_norm: Vec<f64> = p.c.iter().zip(&e).map(|(c, e)| (c * e).abs()).collect();
            for i in 0..m {
                for (cn, v) in col_norm.iter_mut().zip(a.row(i)) {
                    *cn = cn.max(v.abs());
                }
            }
            let dr: Vec<f64> = row_norm
                .iter()
                .map(|&r| 1.0 / r.clamp(MIN_SCALE, MAX_SCALE).sqrt())
                .collect();
            let ec: Vec<f64> = col_norm
                .iter()
                .map(|&c| 1.0 / c.clamp(MIN_SCALE, MAX_SCALE).sqrt())
                .collect();
            for i in 0..m {
                for j in 0..n {
                    let v = a.get(i, j) * dr[i] * ec[j];
                    a.set(i, j, v);
                }
            }
            d.iter_mut().zip(&dr).for_each(|(x, y)| *x *= y);
            e.iter_mut().zip(&ec).for_each(|(x, y)| *x *= y);
        }
    }
    let mut b: Vec<f64> = p.b.iter().zip(&d).map(|(b, d)| b * d).collect();
    let mut c: Vec<f64> = p.c.iter().zip(&e).map(|(c, e)| c * e).collect();
    let (mut sigma_b, mut sigma_c) = (1.0, 1.0);
    if s.scaling {
        let mean_row = (0..m).map(|i| norm2(a.row(i))).sum::<f64>() / m.max(1) as f64;
        let mut col_sq = vec![0.0; n];
        for i in 0..m {
            for (cs, v) in col_sq.iter_mut().zip(a.row(i)) {
                *cs += v * v;
            }
        }
        let mean_col = col_sq.iter().map(|v| v.sqrt()).sum::<f64>() / n.max(1) as f64;
        sigma_b = mean_col / norm2(&b).max(MIN_SCALE);
        sigma_c = mean_row / norm2(&c).max(MIN_SCALE);
    }
    sigma_b *= s.scale;
    sigma_c *= s.scale;
    b.iter_mut().for_each(|v| *v *= sigma_b);
    c.iter_mut().for_each(|v| *v *= sigma_c);
    Scaled { a, b, c, d, e, sigma_b, sigma_c }
}

/// Factorized `[[rho_x I, A^T], [-A, I]]` via the normal equations.
struct LinSys {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    rho_x: f64,
}

impl LinSys {
    fn new(a: &DenseMatrix, rho_x: f64) -> Result<Self, SolverError> {
        let n = a.cols;
        let mut ata = DMatrix::<f64>::zeros(n, n);
        for i in 0..a.rows {
            let r = a.row(i);
            for j in 0..n {
                if r[j] == 0.0 {
                    continue;
                }
                for k in 0..=j {
                    ata[(j, k)] += r[j] * r[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                ata[(k, j)] = ata[(j, k)];
            }
            ata[(j, j)] += rho_x;
        }
        let chol = ata.cholesky().ok_or(SolverError::Factorization)?;
        Ok(LinSys { chol, rho_x })
    }

    /// Solves in place: input `(rx, ry)`, output `(zx, zy)`.
    fn solve(&self, a: &DenseMatrix, z: &mut [f64], tmp_n: &mut [f64]) {
        let n = a.cols;
        let (zx, zy) = z.split_at_mut(n);
        // (rho_x I + A^T A) zx = rx - A^T ry
        a.mul_t_vec(zy, tmp_n);
        let rhs = DVector::from_iterator(n, zx.iter().zip(tmp_n.iter()).map(|(r, t)| r - t));
        let sol = self.chol.solve(&rhs);
        zx.copy_from_slice(sol.as_slice());
        // zy = ry + A zx
        for (i, y) in zy.iter_mut().enumerate() {
            *y += dot(a.row(i), zx);
        }
    }
}

struct Residuals {
    pres: f64,
    dres: f64,
    gap: f64,
    pobj: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

struct Workspace<'a> {
    p: &'a ConicProgram,
    sc: Scaled,
    lin: LinSys,
    g: Vec<f64>,
    hg: f64,
    n: usize,
    m: usize,
    tmp_n: Vec<f64>,
    alpha: f64,
    tol_infeas: f64,
}

impl<'a> Workspace<'a> {
    fn len(&self) -> usize {
        self.n + self.m + 1
    }

    /// One application of the ADMM map to the stacked state `z = (u, v)`.
    fn step(&mut self, z: &[f64], out: &mut [f64], ut: &mut [f64]) -> Result<(), SolverError> {
        let l = self.len();
        let (u, v) = z.split_at(l);
        let (n, m) = (self.n, self.m);
        for i in 0..l {
            ut[i] = u[i] + v[i];
        }
        for x in ut[..n].iter_mut() {
            *x *= self.lin.rho_x;
        }
        let w_tau = ut[n + m];
        self.lin.solve(&self.sc.a, &mut ut[..n + m], &mut self.tmp_n);
        // h = (c, b)
        let hp = dot(&self.sc.c, &ut[..n]) + dot(&self.sc.b, &ut[n..n + m]);
        let tau = (w_tau + hp) / (1.0 + self.hg);
        for (t, g) in ut[..n + m].iter_mut().zip(&self.g) {
            *t -= tau * g;
        }
        ut[n + m] = tau;

        let (ou, ov) = out.split_at_mut(l);
        for i in 0..l {
            let relaxed = self.alpha * ut[i] + (1.0 - self.alpha) * u[i];
            ut[i] = relaxed;
            ou[i] = relaxed - v[i];
        }
        let mut start = n;
        for cone in &self.p.cones {
            let len = cone.rows();
            project_in_place(&mut ou[start..start + len], *cone, true)?;
            start += len;
        }
        ou[n + m] = ou[n + m].max(0.0);
        for i in 0..l {
            ov[i] = v[i] + ou[i] - ut[i];
        }
        Ok(())
    }

    fn unscale_x(&self, xs: &[f64], tau: f64) -> Vec<f64> {
        xs.iter().zip(&self.sc.e).map(|(x, e)| x * e / (tau * self.sc.sigma_b)).collect()
    }

    fn unscale_y(&self, ys: &[f64], tau: f64) -> Vec<f64> {
        ys.iter().zip(&self.sc.d).map(|(y, d)| y * d / (tau * self.sc.sigma_c)).collect()
    }

    fn unscale_s(&self, ss: &[f64], tau: f64) -> Vec<f64> {
        ss.iter().zip(&self.sc.d).map(|(s, d)| s / (d * tau * self.sc.sigma_b)).collect()
    }

    fn residuals(&self, z: &[f64]) -> Residuals {
        let (n, m) = (self.n, self.m);
        let l = self.len();
        let tau = z[n + m].max(1e-300);
        let x = self.unscale_x(&z[..n], tau);
        let y = self.unscale_y(&z[n..n + m], tau);
        let s = self.unscale_s(&z[l + n..l + n + m], tau);
        let p = self.p;
        let mut ax = vec![0.0; m];
        p.a.mul_vec(&x, &mut ax);
        let pr: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - p.b[i]).collect();
        let mut aty = vec![0.0; n];
        p.a.mul_t_vec(&y, &mut aty);
        let dr: Vec<f64> = (0..n).map(|j| aty[j] + p.c[j]).collect();
        let cx = dot(&p.c, &x);
        let by = dot(&p.b, &y);
        Residuals {
            pres: norm2(&pr) / (1.0 + norm2(&p.b).max(norm2(&ax)).max(norm2(&s))),
            dres: norm2(&dr) / (1.0 + norm2(&p.c).max(norm2(&aty))),
            gap: (cx + by).abs() / (1.0 + cx.abs() + by.abs()),
            pobj: cx,
            x,
            y,
            s,
        }
    }

    /// Returns `Some(Infeasible | Unbounded)` when the current iterate
    /// carries a certificate.
    fn certificate(&self, z: &[f64]) -> Option<(SolveStatus, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.n, self.m);
        let l = self.len();
        let p = self.p;
        let y = self.unscale_y(&z[n..n + m], 1.0);
        let by = dot(&p.b, &y);
        if by < 0.0 {
            let mut aty = vec![0.0; n];
            p.a.mul_t_vec(&y, &mut aty);
            if norm2(&aty) / (-by) <= self.tol_infeas {
                let y: Vec<f64> = y.iter().map(|v| v / -by).collect();
                return Some((SolveStatus::Infeasible, vec![0.0; n], y, vec![0.0; m]));
            }
        }
        let x = self.unscale_x(&z[..n], 1.0);
        let cx = dot(&p.c, &x);
        if cx < 0.0 {
            let s = self.unscale_s(&z[l + n..l + n + m], 1.0);
            let mut ax = vec![0.0; m];
            p.a.mul_vec(&x, &mut ax);
            let r: Vec<f64> = ax.iter().zip(&s).map(|(a, s)| a + s).collect();
            if norm2(&r) / (-cx) <= self.tol_infeas {
                let x: Vec<f64> = x.iter().map(|v| v / -cx).collect();
                let s: Vec<f64> = s.iter().map(|v| v / -cx).collect();
                return Some((SolveStatus::Unbounded, x, vec![0.0; m], s));
            }
        }
        None
    }

}

/// Type-II Anderson acceleration on the fixed-point residual `f(z) - z`.
struct Anderson {
    mem: usize,
    s_hist: Vec<Vec<f64>>,
    y_hist: Vec<Vec<f64>>,
    prev_z: Option<Vec<f64>>,
    prev_g: Option<Vec<f64>>,
}

impl Anderson {
    fn new(mem: usize) -> Self {
        Anderson { mem, s_hist: Vec::new(), y_hist: Vec::new(), prev_z: None, prev_g: None }
    }

    fn reset(&mut self) {
        self.s_hist.clear();
        self.y_hist.clear();
        self.prev_z = None;
        self.prev_g = None;
    }

    /// `z` current point, `fz` its image. Returns the extrapolated point.
    fn extrapolate(&mut self, z: &[f64], fz: &[f64]) -> Option<Vec<f64>> {
        let g: Vec<f64> = z.iter().zip(fz).map(|(a, b)| a - b).collect();
        if let (Some(pz), Some(pg)) = (&self.prev_z, &self.prev_g) {
            let s: Vec<f64> = z.iter().zip(pz).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            if self.s_hist.len() == self.mem {
                self.s_hist.remove(0);
                self.y_hist.remove(0);
            }
            self.s_hist.push(s);
            self.y_hist.push(y);
        }
        self.prev_z = Some(z.to_vec());
        self.prev_g = Some(g.clone());
        let k = self.y_hist.len();
        if k == 0 {
            return None;
        }
        // least squares: min ||g - Y gamma||, solved through Y^T Y
        let mut yty = DMatrix::<f64>::zeros(k, k);
        let mut ytg = DVector::<f64>::zeros(k);
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&self.y_hist[i], &self.y_hist[j]);
                yty[(i, j)] = v;
                yty[(j, i)] = v;
            }
            ytg[i] = dot(&self.y_hist[i], &g);
        }
        let reg = 1e-10 * (0..k).map(|i| yty[(i, i)]).fold(0.0, f64::max).max(1e-300);
        for i in 0..k {
            yty[(i, i)] += reg;
        }
        let gamma = yty.cholesky()?.solve(&ytg);
        if !gamma.iter().all(|v| v.is_finite()) {
            return None;
        }
        // z+ = fz - sum gamma_i (s_i - y_i)
        let mut out = fz.to_vec();
        for (i, gi) in gamma.iter().enumerate() {
            for ((o, s), y) in out.iter_mut().zip(&self.s_hist[i]).zip(&self.y_hist[i]) {
                *o -= gi * (s - y);
            }
        }
        Some(out)
    }
}

pub fn solve(p: &ConicProgram, s: &SolverSettings) -> Result<Solution, SolverError> {
    p.validate()?;
    if !(s.tol > 0.0) {
        return Err(SolverError::Settings("tol must be positive".into()));
    }
    if !(s.alpha > 0.0 && s.alpha < 2.0) {
        return Err(SolverError::Settings("alpha must lie in (0, 2)".into()));
    }
    let n = p.num_vars;
    let m = p.num_rows();
    let sc = equilibrate(p, s);
    let lin = LinSys::new(&sc.a, s.rho_x)?;
    let mut tmp_n = vec![0.0; n];
    let mut g: Vec<f64> = sc.c.iter().chain(sc.b.iter()).copied().collect();
    lin.solve(&sc.a, &mut g, &mut tmp_n);
    let hg = dot(&sc.c, &g[..n]) + dot(&sc.b, &g[n..]);
    let mut ws = Workspace { p, sc, lin, g, hg, n, m, tmp_n, alpha: s.alpha, tol_infeas: s.tol_infeas };

    let l = ws.len();
    let mut z = vec![0.0; 2 * l];
    z[n + m] = 1.0;
    z[l + n + m] = 1.0;
    let mut fz = vec![0.0; 2 * l];
    let mut ut = vec![0.0; l];
    let mut aa = Anderson::new(s.anderson_memory);
    let mut trace = match &s.trace_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "iter,primal_residual,dual_residual,gap,tau,kappa")?;
            Some(w)
        }
        None => None,
    };

    let mut best: Option<(f64, Residuals, usize)> = None;
    let mut res_norm_ref = f64::INFINITY;
    let mut it = 0;
    let check_every = s.check_every.max(1);
    while it < s.max_iters {
        it += 1;
        ws.step(&z, &mut fz, &mut ut)?;
        let fp_res = z.iter().zip(&fz).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if s.anderson_memory > 0 {
            // safeguard: accept the extrapolation only while the fixed-point
            // residual keeps shrinking
            if fp_res <= res_norm_ref || !res_norm_ref.is_finite() {
                res_norm_ref = fp_res;
                match aa.extrapolate(&z, &fz) {
                    Some(next) if next.iter().all(|v| v.is_finite()) => z = next,
                    _ => z.copy_from_slice(&fz),
                }
            } else {
                aa.reset();
                res_norm_ref = fp_res;
                z.copy_from_slice(&fz);
            }
        } else {
            z.copy_from_slice(&fz);
        }

        if it % check_every != 0 && it != s.max_iters {
            continue;
        }
        // evaluate on the plain ADMM image, whose cone parts are feasible
        let eval = &fz;
        let tau = eval[n + m];
        let kappa = eval[l + n + m];
        let r = ws.residuals(eval);
        if let Some(w) = trace.as_mut() {
            writeln!(w, "{it},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}", r.pres, r.dres, r.gap, tau, kappa)?;
        }
        if tau > 0.0 && r.pres <= s.tol && r.dres <= s.tol && r.gap <= s.tol {
            if let Some(w) = trace.as_mut() {
                w.flush()?;
            }
            return Ok(Solution {
                objective: r.pobj + p.c_offset,
                primal: r.x,
                dual: r.y,
                slack: r.s,
                status: SolveStatus::Optimal,
                primal_residual: r.pres,
                dual_residual: r.dres,
                gap: r.gap,
                iterations: it,
            });
        }
        if it >= s.min_iters_infeas {
            if let Some((status, x, y, sl)) = ws.certificate(eval) {
                let obj = match status {
                    SolveStatus::Infeasible => f64::INFINITY,
                    _ => f64::NEG_INFINITY,
                };
                return Ok(Solution {
                    primal: x,
                    dual: y,
                    slack: sl,
                    status,
                    objective: obj,
                    primal_residual: r.pres,
                    dual_residual: r.dres,
                    gap: r.gap,
                    iterations: it,
                });
            }
        }
        let merit = r.pres.max(r.dres).max(r.gap);
        if tau > 0.0 && best.as_ref().map_or(true, |(bm, _, _)| merit < *bm) {
            best = Some((merit, r, it));
        }
        if s.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
    }
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }
    let (_, r, _) = match best {
        Some(b) => b,
        None => (f64::INFINITY, ws.residuals(&fz), it),
    };
    Ok(Solution {
        objective: r.pobj + p.c_offset,
        primal: r.x,
        dual: r.y,
        slack: r.s,
        status: SolveStatus::MaxIters,
        primal_residual: r.pres,
        dual_residual: r.dres,
        gap: r.gap,
        iterations: it,
    })
}
