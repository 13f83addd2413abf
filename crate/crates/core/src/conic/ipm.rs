//! Dense primal-dual interior-point method for
//!
//! ```text
//! minimize c'x  subject to  Ax = b,  Gx + s = h,  s ∈ R₊ˡ × Q^{m₁} × … × Q^{m_k}
//! ```
//!
//! Infeasibility is detected through a homogeneous self-dual embedding.
//! Directions come from a Mehrotra predictor-corrector with Nesterov-Todd
//! scaling. The reduced KKT system `[G'W⁻²G + δI, A'; A, −δI]` is solved by
//! dense LU with iterative refinement against the unregularised system.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Standard-form conic problem; rows of `g` are ordered nonneg block first,
/// then one block per second-order cone.
#[derive(Debug, Clone)]
pub struct ConeProblem {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

/// Tolerance on residuals and gap at which a stalled solve still counts as optimal.
const REDUCED_TOL: f64 = 1e-7;

/// `(x, y, z, s, τ, iteration)` of a stored iterate.
type Iterate = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64, usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub max_iter: usize,
    /// Primal and dual residual tolerance (relative).
    pub feastol: f64,
    /// Absolute gap tolerance.
    pub abstol: f64,
    /// Relative gap tolerance.
    pub reltol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Static KKT regularisation.
    pub regularization: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            max_iter: 200,
            feastol: 1e-8,
            abstol: 1e-8,
            reltol: 1e-8,
            step_fraction: 0.99,
            regularization: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `s'z / max(1, |c'x|)`.
    pub relative_gap: f64,
    pub iterations: usize,
    pub trace: String,
}

// ---------------------------------------------------------------------------
// Cone arithmetic

#[derive(Debug, Clone)]
struct Cones {
    nonneg: usize,
    soc: Vec<(usize, usize)>, // (offset, size)
    dim: usize,
}

impl Cones {
    fn new(nonneg: usize, sizes: &[usize]) -> Self {
        let mut soc = Vec::with_capacity(sizes.len());
        let mut offset = nonneg;
        for &m in sizes {
            soc.push((offset, m));
            offset += m;
        }
        Cones { nonneg, soc, dim: offset }
    }

    /// Barrier degree ν.
    fn degree(&self) -> f64 {
        (self.nonneg + self.soc.len()) as f64
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        for i in 0..self.nonneg {
            e[i] = 1.0;
        }
        for &(o, _) in &self.soc {
            e[o] = 1.0;
        }
        e
    }

    /// Jordan product x∘y.
    fn product(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for i in 0..self.nonneg {
            out[i] = x[i] * y[i];
        }
        for &(o, m) in &self.soc {
            let mut dot = 0.0;
            for k in 0..m {
                dot += x[o + k] * y[o + k];
            }
            out[o] = dot;
            for k in 1..m {
                out[o + k] = x[o] * y[o + k] + y[o] * x[o + k];
            }
        }
        out
    }

    /// Solves λ∘u = r for u.
    fn divide(&self, lambda: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim);
        for i in 0..self.nonneg {
            u[i] = r[i] / lambda[i];
        }
        for &(o, m) in &self.soc {
            let l0 = lambda[o];
            let mut l1r1 = 0.0;
            let mut l1sq = 0.0;
            for k in 1..m {
                l1r1 += lambda[o + k] * r[o + k];
                l1sq += lambda[o + k] * lambda[o + k];
            }
            let u0 = (l0 * r[o] - l1r1) / (l0 * l0 - l1sq);
            u[o] = u0;
            for k in 1..m {
                u[o + k] = (r[o + k] - u0 * lambda[o + k]) / l0;
            }
        }
        u
    }

    /// Largest α with x + α·d in the cone (∞ when unbounded).
    fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.nonneg {
            if d[i] < 0.0 {
                alpha = alpha.min(-x[i] / d[i]);
            }
        }
        for &(o, m) in &self.soc {
            alpha = alpha.min(soc_step(&x.as_slice()[o..o + m], &d.as_slice()[o..o + m]));
        }
        alpha
    }

    fn is_interior(&self, x: &DVector<f64>) -> bool {
        (0..self.nonneg).all(|i| x[i] > 0.0)
            && self.soc.iter().all(|&(o, m)| {
                let s = &x.as_slice()[o..o + m];
                s[0] > 0.0 && j_norm_sq(s) > 0.0
            })
    }
}

fn j_norm_sq(x: &[f64]) -> f64 {
    x[0] * x[0] - x[1..].iter().map(|v| v * v).sum::<f64>()
}

fn j_norm(x: &[f64]) -> f64 {
    // (x0 − ‖x1‖)(x0 + ‖x1‖) loses less precision near the boundary
    let tail = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    ((x[0] - tail) * (x[0] + tail)).max(0.0).sqrt()
}

fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    // (x0 + α d0)² − ‖x1 + α d1‖² = aα² + 2bα + c
    let a = j_norm_sq(d);
    let b = x[0] * d[0] - x[1..].iter().zip(&d[1..]).map(|(p, q)| p * q).sum::<f64>();
    let c = j_norm(x).powi(2);
    let disc = b * b - a * c;
    let mut alpha = f64::INFINITY;
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            alpha = -c / (2.0 * b);
        }
    } else if a < 0.0 || (b < 0.0 && disc >= 0.0) {
        let denom = -b + disc.max(0.0).sqrt();
        alpha = if denom > 0.0 { c / denom } else { 0.0 };
    }
    if d[0] < 0.0 {
        alpha = alpha.min(-x[0] / d[0]);
    }
    alpha
}

/// Nesterov-Todd scaling W with W·z = W⁻¹·s = λ.
struct Scaling {
    cones: Cones,
    d: Vec<f64>,
    soc: Vec<(f64, Vec<f64>)>, // (β, w̄) with w̄'Jw̄ = 1
}

impl Scaling {
    fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let d = (0..cones.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut soc = Vec::with_capacity(cones.soc.len());
        for &(o, m) in &cones.soc {
            let sb = &s.as_slice()[o..o + m];
            let zb = &z.as_slice()[o..o + m];
            let (sn, zn) = (j_norm(sb), j_norm(zb));
            if !(sn > 0.0 && zn > 0.0) {
                return None;
            }
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let dot: f64 = sbar.iter().zip(&zbar).map(|(p, q)| p * q).sum();
            let gamma = ((1.0 + dot) / 2.0).sqrt();
            let mut wbar = vec![0.0; m];
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for k in 1..m {
                wbar[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
            }
            soc.push(((sn / zn).sqrt(), wbar));
        }
        Some(Scaling { cones: cones.clone(), d, soc })
    }

    /// W·v (`inverse = false`) or W⁻¹·v.
    fn apply(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        for i in 0..self.cones.nonneg {
            out[i] = if inverse { v[i] / self.d[i] } else { v[i] * self.d[i] };
        }
        for (&(o, m), (beta, w)) in self.cones.soc.iter().zip(&self.soc) {
            // W = β·[[w0, w1'], [w1, I + w1w1'/(1+w0)]]; W⁻¹ flips w1 and divides by β
            let sign = if inverse { -1.0 } else { 1.0 };
            let scale = if inverse { 1.0 / beta } else { *beta };
            let vb = &v[o..o + m];
            let w1v1: f64 = (1..m).map(|k| w[k] * vb[k]).sum::<f64>() * sign;
            out[o] = scale * (w[0] * vb[0] + w1v1);
            let coef = vb[0] + w1v1 / (1.0 + w[0]);
            for k in 1..m {
                out[o + k] = scale * (vb[k] + sign * coef * w[k]);
            }
        }
    }

    fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        self.apply(v.as_slice(), out.as_mut_slice(), false);
        out
    }

    fn mul_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        self.apply(v.as_slice(), out.as_mut_slice(), true);
        out
    }

    /// W⁻¹·M applied column-wise.
    fn mul_inv_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            let col: Vec<f64> = m.column(j).iter().copied().collect();
            let mut res = vec![0.0; m.nrows()];
            self.apply(&col, &mut res, true);
            out.column_mut(j).copy_from_slice(&res);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Equilibration

struct Equilibration {
    col: DVector<f64>,   // x = col ∘ x̄
    row_a: DVector<f64>, // ȳ rows
    row_g: DVector<f64>,
    cost: f64,
    rhs: f64,
}

/// Ruiz scaling of `[[A, b], [G, h], [c', 0]]`. The right-hand sides share
/// one column scale and the cost one row scale, so large bounds cannot
/// dominate the residual norms.
fn equilibrate(p: &ConeProblem, cones: &Cones) -> (ConeProblem, Equilibration) {
    let n = p.c.len();
    let (pa, m) = (p.a.nrows(), p.g.nrows());
    let mut col = DVector::from_element(n, 1.0);
    let mut row_a = DVector::from_element(pa, 1.0);
    let mut row_g = DVector::from_element(m, 1.0);
    let mut cost = 1.0;
    let mut rhs = 1.0;
    let mut a = p.a.clone();
    let mut g = p.g.clone();
    let mut b = p.b.clone();
    let mut h = p.h.clone();
    let mut c = p.c.clone();
    for _ in 0..25 {
        let mut rs_a = b.abs();
        let mut rs_g = h.abs();
        let mut cs = c.abs();
        let rhs_max = b.amax().max(h.amax());
        let cost_max = c.amax();
        for i in 0..pa {
            for j in 0..n {
                let v = a[(i, j)].abs();
                rs_a[i] = f64::max(rs_a[i], v);
                cs[j] = cs[j].max(v);
            }
        }
        for i in 0..m {
            for j in 0..n {
                let v = g[(i, j)].abs();
                rs_g[i] = f64::max(rs_g[i], v);
                cs[j] = cs[j].max(v);
            }
        }
        // a cone block must share one row scale to stay a cone
        for &(o, sz) in &cones.soc {
            let mx = (o..o + sz).map(|i| rs_g[i]).fold(0.0, f64::max);
            for i in o..o + sz {
                rs_g[i] = mx;
            }
        }
        let fix = |v: f64| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 };
        let da = rs_a.map(fix);
        let dg = rs_g.map(fix);
        let dc = cs.map(fix);
        let d_rhs = fix(rhs_max);
        let d_cost = fix(cost_max);
        for i in 0..pa {
            for j in 0..n {
                a[(i, j)] *= da[i] * dc[j];
            }
            b[i] *= da[i] * d_rhs;
        }
        for i in 0..m {
            for j in 0..n {
                g[(i, j)] *= dg[i] * dc[j];
            }
            h[i] *= dg[i] * d_rhs;
        }
        for j in 0..n {
            c[j] *= d_cost * dc[j];
        }
        row_a.component_mul_assign(&da);
        row_g.component_mul_assign(&dg);
        col.component_mul_assign(&dc);
        rhs *= d_rhs;
        cost *= d_cost;
    }
    let scaled = ConeProblem { c, a, b, g, h, nonneg: p.nonneg, soc: p.soc.clone() };
    (scaled, Equilibration { col, row_a, row_g, cost, rhs })
}

// ---------------------------------------------------------------------------
// KKT system

struct Kkt<'a> {
    p: &'a ConeProblem,
    scaling: &'a Scaling,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Scaled linear rows with a single nonzero, as (row, column, coefficient);
    /// folded into the leading block instead of kept explicit.
    singles: Vec<(usize, usize, f64)>,
    /// Rows of `Gs` kept in the factored system.
    kept: Vec<usize>,
}

impl<'a> Kkt<'a> {
    /// Factors the scaled system `[[δI, A', Gs'], [A, −δI, 0], [Gs, 0, −I]]`
    /// with `Gs = W⁻¹G`, whose last unknown is `W·dz`. Keeping the cone rows
    /// explicit avoids squaring the conditioning of `W` near the boundary.
    /// Linear rows with one nonzero (variable bounds) only add to the diagonal
    /// of the leading block once eliminated, so they are folded in there.
    fn factor(p: &'a ConeProblem, scaling: &'a Scaling, delta: f64) -> Option<Self> {
        let n = p.c.len();
        let pa = p.a.nrows();
        let gs = scaling.mul_inv_matrix(&p.g);
        let mut singles = Vec::new();
        let mut kept = Vec::new();
        for i in 0..gs.nrows() {
            let single = if i < p.nonneg {
                let mut nz = (0..n).filter(|&j| gs[(i, j)] != 0.0);
                match (nz.next(), nz.next()) {
                    (Some(j), None) => Some(j),
                    _ => None,
                }
            } else {
                None
            };
            match single {
                Some(j) => singles.push((i, j, gs[(i, j)])),
                None => kept.push(i),
            }
        }
        let m = kept.len();
        let gs_kept = gs.select_rows(&kept);
        let dim = n + pa + m;
        let mut k = DMatrix::zeros(dim, dim);
        for i in 0..n {
            k[(i, i)] = delta;
        }
        for &(_, j, g) in &singles {
            k[(j, j)] += g * g;
        }
        if pa > 0 {
            k.view_mut((n, 0), (pa, n)).copy_from(&p.a);
            k.view_mut((0, n), (n, pa)).copy_from(&p.a.transpose());
            for i in 0..pa {
                k[(n + i, n + i)] = -delta;
            }
        }
        k.view_mut((n + pa, 0), (m, n)).copy_from(&gs_kept);
        k.view_mut((0, n + pa), (n, m)).copy_from(&gs_kept.transpose());
        for i in 0..m {
            k[(n + pa + i, n + pa + i)] = -1.0;
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt { p, scaling, lu, singles, kept })
    }

    fn solve_reduced(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<[DVector<f64>; 3]> {
        let n = self.p.c.len();
        let pa = self.p.a.nrows();
        let m = self.kept.len();
        let r3s = self.scaling.mul_inv(r3);
        let mut rhs = DVector::zeros(n + pa + m);
        rhs.rows_mut(0, n).copy_from(r1);
        for &(i, j, g) in &self.singles {
            rhs[j] += g * r3s[i];
        }
        rhs.rows_mut(n, pa).copy_from(r2);
        for (k, &i) in self.kept.iter().enumerate() {
            rhs[n + pa + k] = r3s[i];
        }
        let sol = self.lu.solve(&rhs)?;
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, pa).into_owned();
        let mut wdz = DVector::zeros(r3.len());
        for (k, &i) in self.kept.iter().enumerate() {
            wdz[i] = sol[n + pa + k];
        }
        for &(i, j, g) in &self.singles {
            wdz[i] = g * dx[j] - r3s[i];
        }
        let dz = self.scaling.mul_inv(&wdz);
        Some([dx, dy, dz])
    }

    /// Solves [0 A' G'; A 0 0; G 0 −W²] d = r with iterative refinement.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>, r3: &DVector<f64>) -> Option<[DVector<f64>; 3]> {
        let mut d = self.solve_reduced(r1, r2, r3)?;
        for _ in 0..3 {
            let w2dz = self.scaling.mul(&self.scaling.mul(&d[2]));
            let e1 = r1 - (self.p.a.transpose() * &d[1] + self.p.g.transpose() * &d[2]);
            let e2 = r2 - &self.p.a * &d[0];
            let e3 = r3 - (&self.p.g * &d[0] - w2dz);
            let err = e1.amax().max(e2.amax()).max(e3.amax());
            let scale = r1.amax().max(r2.amax()).max(r3.amax()).max(1.0);
            if err <= 1e-14 * scale {
                break;
            }
            let c = self.solve_reduced(&e1, &e2, &e3)?;
            for i in 0..3 {
                d[i] += &c[i];
            }
        }
        if d.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return None;
        }
        Some(d)
    }
}

// ---------------------------------------------------------------------------
// Main loop

fn dot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b)
}

fn norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// Solves a standard-form conic problem.
pub fn solve(problem: &ConeProblem, opts: &IpmOptions) -> Result<IpmSolution> {
    let n = problem.c.len();
    let m = problem.g.nrows();
    let expected: usize = problem.nonneg + problem.soc.iter().sum::<usize>();
    if expected != m || problem.h.len() != m || problem.g.ncols() != n || problem.a.ncols() != n {
        return Err(Error::invalid("cone problem", "inconsistent dimensions"));
    }
    if problem.soc.iter().any(|&k| k < 2) {
        return Err(Error::invalid("cone problem", "second-order cones need at least two rows"));
    }
    let cones = Cones::new(problem.nonneg, &problem.soc);
    let (p, eq) = equilibrate(problem, &cones);
    let pa = p.a.nrows();
    let nu = cones.degree();
    let e = cones.identity();

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(pa);
    let mut s = e.clone();
    let mut z = e.clone();
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let resx0 = p.c.norm().max(1.0);
    let resy0 = p.b.norm().max(1.0);
    let resz0 = p.h.norm().max(1.0);

    let mut trace = String::from(
        " it       pcost        dcost      pres    rowres      dres       gap     step    sigma\n",
    );
    let mut delta = opts.regularization;
    let mut last_step = 0.0;
    let mut last_sigma = 0.0;

    let finish = |status: IpmStatus,
                  x: &DVector<f64>,
                  y: &DVector<f64>,
                  z: &DVector<f64>,
                  s: &DVector<f64>,
                  tau: f64,
                  it: usize,
                  trace: String| {
        // certificates are reported unnormalised
        let div = if status == IpmStatus::Optimal { tau } else { 1.0 };
        let xs = x.component_mul(&eq.col) / (div * eq.rhs);
        let ys = y.component_mul(&eq.row_a) / (div * eq.cost);
        let zs = z.component_mul(&eq.row_g) / (div * eq.cost);
        let ss = s.component_div(&eq.row_g) / (div * eq.rhs);
        let pobj = problem.c.dot(&xs);
        let dobj = -problem.h.dot(&zs) - problem.b.dot(&ys);
        let relative_gap = ss.dot(&zs).abs() / pobj.abs().max(1.0);
        IpmSolution {
            status,
            x: xs,
            y: ys,
            z: zs,
            s: ss,
            primal_objective: pobj,
            dual_objective: dobj,
            relative_gap,
            iterations: it,
            trace,
        }
    };

    // last iterate meeting the reduced tolerance, kept as a fallback
    let mut reduced: Option<Iterate> = None;
    let reason = 'iterate: {
        for it in 0..=opts.max_iter {
            // residuals of the embedding
            let rx = p.a.transpose() * &y + p.g.transpose() * &z + &p.c * tau;
            let ry = &p.b * tau - &p.a * &x;
            let rz = &s + &p.g * &x - &p.h * tau;
            let cx = dot(&p.c, &x);
            let by = dot(&p.b, &y);
            let hz = dot(&p.h, &z);
            let rt = kappa + cx + by + hz;
            let sz = dot(&s, &z);
            let mu = (sz + tau * kappa) / (nu + 1.0);

            let pcost = cx / tau;
            let dcost = -(by + hz) / tau;
            let pres = (norm(&ry) / resy0).max(norm(&rz) / resz0) / tau;
            let dres = norm(&rx) / resx0 / tau;
            let rowres = row_residual(&p, &x, &ry, &rz, tau);
            let gap = sz / (tau * tau);
            let relgap = if pcost < 0.0 {
                gap / -pcost
            } else if dcost > 0.0 {
                gap / dcost
            } else {
                f64::INFINITY
            };
            let _ = writeln!(
            trace,
            "{it:3} {pcost:12.5e} {dcost:12.5e} {pres:9.2e} {rowres:9.2e} {dres:9.2e} {gap:9.2e} {last_step:8.4} {last_sigma:8.4}"
        );

            if pres <= opts.feastol
                && rowres <= opts.feastol
                && dres <= opts.feastol
                && (gap <= opts.abstol || relgap <= opts.reltol)
            {
                return Ok(finish(IpmStatus::Optimal, &x, &y, &z, &s, tau, it, trace));
            }
            let by_hz = by + hz;
            if by_hz < 0.0 {
                let pinf = norm(&(p.a.transpose() * &y + p.g.transpose() * &z)) / resx0 / -by_hz;
                if pinf <= opts.feastol {
                    let (y, z) = (&y / -by_hz, &z / -by_hz);
                    return Ok(finish(IpmStatus::PrimalInfeasible, &x, &y, &z, &s, tau, it, trace));
                }
            }
            if cx < 0.0 {
                let dinf = (norm(&(&p.a * &x)) / resy0).max(norm(&(&p.g * &x + &s)) / resz0) / -cx;
                if dinf <= opts.feastol {
                    let (x, s) = (&x / -cx, &s / -cx);
                    return Ok(finish(IpmStatus::DualInfeasible, &x, &y, &z, &s, tau, it, trace));
                }
            }
            if pres <= REDUCED_TOL
                && rowres <= REDUCED_TOL
                && dres <= REDUCED_TOL
                && (gap <= REDUCED_TOL || relgap <= REDUCED_TOL)
            {
                reduced = Some((x.clone(), y.clone(), z.clone(), s.clone(), tau, it));
            }
            if it == opts.max_iter {
                break;
            }

            let Some(scaling) = Scaling::new(&cones, &s, &z) else {
                break 'iterate "iterate left the cone interior";
            };
            let lambda = scaling.mul(&z);
            let lambda_sq = cones.product(&lambda, &lambda);

            let mut attempt = 0;
            let kkt = loop {
                if let Some(k) = Kkt::factor(&p, &scaling, delta) {
                    break k;
                }
                attempt += 1;
                delta *= 100.0;
                if attempt > 6 {
                    break 'iterate "KKT matrix singular";
                }
            };
            let rhs2 = (-p.c.clone(), p.b.clone(), p.h.clone());
            let Some(d2) = kkt.solve(&rhs2.0, &rhs2.1, &rhs2.2) else {
                break 'iterate "KKT solve failed";
            };
            let c_d2 = dot(&p.c, &d2[0]) + dot(&p.b, &d2[1]) + dot(&p.h, &d2[2]);

            let direction = |rc: &DVector<f64>, rk: f64, eta: f64| -> Option<Direction> {
                let q = cones.divide(&lambda, rc);
                let wq = scaling.mul(&q);
                let r1 = &rx * -eta;
                let r2 = &ry * eta;
                let r3 = &rz * -eta - &wq;
                let d1 = kkt.solve(&r1, &r2, &r3)?;
                let c_d1 = dot(&p.c, &d1[0]) + dot(&p.b, &d1[1]) + dot(&p.h, &d1[2]);
                let dtau = (-eta * rt - rk / tau - c_d1) / (c_d2 - kappa / tau);
                let dx = &d1[0] + &d2[0] * dtau;
                let dy = &d1[1] + &d2[1] * dtau;
                let dz = &d1[2] + &d2[2] * dtau;
                // from the feasibility row rather than W(q − W·dz): exact residual
                // reduction, no cancellation when W is badly conditioned
                let ds = &rz * -eta - &p.g * &dx + &p.h * dtau;
                let dkappa = (rk - kappa * dtau) / tau;
                if !dtau.is_finite() || !dkappa.is_finite() {
                    return None;
                }
                Some(Direction { dx, dy, dz, ds, dtau, dkappa })
            };
            let step_to_boundary = |d: &Direction| -> f64 {
                let mut alpha = cones.max_step(&s, &d.ds).min(cones.max_step(&z, &d.dz));
                if d.dtau < 0.0 {
                    alpha = alpha.min(-tau / d.dtau);
                }
                if d.dkappa < 0.0 {
                    alpha = alpha.min(-kappa / d.dkappa);
                }
                alpha
            };

            // predictor
            let Some(aff) = direction(&(-&lambda_sq), -tau * kappa, 1.0) else {
                break 'iterate "affine direction failed";
            };
            let alpha_aff = step_to_boundary(&aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let w_inv_ds = scaling.mul_inv(&aff.ds);
            let w_dz = scaling.mul(&aff.dz);
            let rc = -&lambda_sq - cones.product(&w_inv_ds, &w_dz) + &e * (sigma * mu);
            let rk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
            let Some(d) = direction(&rc, rk, 1.0 - sigma) else {
                break 'iterate "combined direction failed";
            };
            let alpha = (opts.step_fraction * step_to_boundary(&d)).min(1.0);
            if !(alpha > 1e-12) {
                break 'iterate "step length collapsed";
            }

            x += &d.dx * alpha;
            y += &d.dy * alpha;
            z += &d.dz * alpha;
            s += &d.ds * alpha;
            tau += alpha * d.dtau;
            kappa += alpha * d.dkappa;
            last_step = alpha;
            last_sigma = sigma;
            if !(cones.is_interior(&s) && cones.is_interior(&z) && tau > 0.0 && kappa > 0.0) {
                break 'iterate "iterate left the cone interior";
            }
        }
        "iteration limit reached"
    };

    // Stalled or out of iterations: accept the last point that met the reduced tolerance.
    if let Some((x, y, z, s, tau, it)) = reduced {
        return Ok(finish(IpmStatus::Optimal, &x, &y, &z, &s, tau, it, trace));
    }
    Err(failure(reason, &trace))
}

/// Largest primal residual relative to the size of its own row, so a row
/// with small coefficients is not masked by large entries elsewhere. Rows
/// whose terms all vanish at the iterate are measured against a fraction of
/// what they could reach, `‖row‖∞·‖x‖∞`.
fn row_residual(p: &ConeProblem, x: &DVector<f64>, ry: &DVector<f64>, rz: &DVector<f64>, tau: f64) -> f64 {
    let x_max = x.amax();
    let mut worst: f64 = 0.0;
    for (mat, rhs, res) in [(&p.a, &p.b, ry), (&p.g, &p.h, rz)] {
        for i in 0..mat.nrows() {
            let row = mat.row(i);
            let size =
                row.iter().zip(x.iter()).map(|(g, x)| (g * x).abs()).sum::<f64>() + (rhs[i] * tau).abs();
            let floor = 1e-4 * row.amax() * x_max + 1e-12 * tau;
            worst = worst.max(res[i].abs() / size.max(floor));
        }
    }
    worst
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

fn failure(reason: &str, trace: &str) -> Error {
    Error::NumericalFailure { reason: reason.to_string(), trace: trace.to_string() }
}
