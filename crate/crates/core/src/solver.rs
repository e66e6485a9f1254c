//! Log-barrier interior-point method for smooth concave maximisation.
//!
//! Smooth inequality constraints `g_j(x) <= 0` enter through the barrier;
//! boxes, disks and Hermitian PSD blocks are kept by projection inside a
//! spectral projected-gradient inner loop with Armijo backtracking
//! along the projected direction. The best strictly feasible iterate by the original
//! objective, the starting point included, is returned.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, hunvec, hvec, hvec_eigenvalues_above, hvec_len};

/// Value and, if a buffer is supplied, gradient (overwritten) at `x`.
pub type Evaluator<'a> = Box<dyn Fn(&[f64], Option<&mut [f64]>) -> f64 + Send + Sync + 'a>;

pub struct Constraint<'a> {
    pub name: String,
    pub eval: Evaluator<'a>,
}

/// `x[re]² + x[im]² <= radius²`.
#[derive(Debug, Clone, Copy)]
pub struct Disk {
    pub re: usize,
    pub im: usize,
    pub radius: f64,
}

/// `x[offset..offset+dim²]` packs a Hermitian matrix (see [`crate::linalg::hvec`])
/// kept with eigenvalues `>= floor`.
#[derive(Debug, Clone, Copy)]
pub struct PsdBlock {
    pub offset: usize,
    pub dim: usize,
    pub floor: f64,
}

pub struct ConcaveProgram<'a> {
    pub objective: Evaluator<'a>,
    pub constraints: Vec<Constraint<'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub disks: Vec<Disk>,
    pub psd: Vec<PsdBlock>,
    pub initial: Vec<f64>,
}

impl<'a> ConcaveProgram<'a> {
    /// Unconstrained program with free coordinates.
    pub fn new(initial: Vec<f64>, objective: Evaluator<'a>) -> Self {
        let n = initial.len();
        ConcaveProgram {
            objective,
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            disks: Vec::new(),
            psd: Vec::new(),
            initial,
        }
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn with_constraint(mut self, name: impl Into<String>, eval: Evaluator<'a>) -> Self {
        self.constraints.push(Constraint {
            name: name.into(),
            eval,
        });
        self
    }

    pub fn with_bounds(mut self, j: usize, lo: f64, hi: f64) -> Self {
        self.lower[j] = lo;
        self.upper[j] = hi;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(
                "bound vectors must match the variable count".into(),
            ));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite initial point".into()));
        }
        let mut owner = vec![false; n];
        let mut claim = |j: usize| -> Result<()> {
            if j >= n || owner[j] {
                return Err(Error::Dimension(format!(
                    "simple set overlaps at coordinate {j}"
                )));
            }
            owner[j] = true;
            Ok(())
        };
        for d in &self.disks {
            claim(d.re)?;
            claim(d.im)?;
        }
        for b in &self.psd {
            for j in b.offset..b.offset + hvec_len(b.dim) {
                claim(j)?;
            }
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(Error::Dimension(format!("empty box at coordinate {j}")));
            }
            if owner[j] && (self.lower[j].is_finite() || self.upper[j].is_finite()) {
                return Err(Error::Dimension(format!(
                    "box bound on projected coordinate {j}"
                )));
            }
        }
        Ok(())
    }

    /// Zeroes the components of `v` normal to every box bound or disk
    /// boundary that is active at `x` and that the ascent direction `g`
    /// pushes against.
    fn restrict(&self, x: &[f64], g: &[f64], v: &mut [f64]) {
        for j in 0..x.len() {
            if (x[j] <= self.lower[j] && g[j] < 0.0) || (x[j] >= self.upper[j] && g[j] > 0.0) {
                v[j] = 0.0;
            }
        }
        for d in &self.disks {
            let (a, b) = (x[d.re], x[d.im]);
            let r = (a * a + b * b).sqrt();
            if r < d.radius * (1.0 - 1e-12) || r == 0.0 {
                continue;
            }
            let (ua, ub) = (a / r, b / r);
            if g[d.re] * ua + g[d.im] * ub > 0.0 {
                let radial = v[d.re] * ua + v[d.im] * ub;
                v[d.re] -= radial * ua;
                v[d.im] -= radial * ub;
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        for j in 0..x.len() {
            x[j] = x[j].clamp(self.lower[j], self.upper[j]);
        }
        for d in &self.disks {
            let r = (x[d.re] * x[d.re] + x[d.im] * x[d.im]).sqrt();
            if r > d.radius {
                let s = d.radius / r;
                x[d.re] *= s;
                x[d.im] *= s;
            }
        }
        for b in &self.psd {
            let len = hvec_len(b.dim);
            let slice = &mut x[b.offset..b.offset + len];
            if !hvec_eigenvalues_above(slice, b.dim, b.floor) {
                hvec(&floor_eigenvalues(&hunvec(slice, b.dim), b.floor), slice);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub t0: f64,
    pub kappa: f64,
    pub grad_tol: f64,
    pub gap_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub shrink: f64,
    pub armijo: f64,
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            t0: 1.0,
            kappa: 10.0,
            grad_tol: 1e-6,
            gap_tol: 1e-6,
            max_inner: 100,
            max_outer: 40,
            shrink: 0.5,
            armijo: 1e-4,
            trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t0 > 0.0
            && self.kappa > 1.0
            && self.grad_tol > 0.0
            && self.gap_tol > 0.0
            && self.max_inner > 0
            && self.max_outer > 0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `-g_j(x)` per constraint.
    pub slacks: Vec<f64>,
    /// Some inner or outer loop hit its iteration cap.
    pub degraded: bool,
    /// The returned point is the initial one.
    pub unchanged: bool,
    pub iterations: usize,
    pub trace: Vec<SolverTraceRow>,
}

struct Eval {
    barrier: f64,
    objective: f64,
}

const MEMORY: usize = 8;
/// Longest scaled step relative to `max(1, |x|∞)`.
const TRUST: f64 = 10.0;

/// Curvature pair of the negated barrier.
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
    gamma: f64,
}

impl Pair {
    fn new(n: usize) -> Self {
        Pair {
            s: vec![0.0; n],
            y: vec![0.0; n],
            rho: 0.0,
            gamma: 0.0,
        }
    }
}

/// Limited-memory inverse-Hessian product `dir = H grad`.
fn two_loop(pairs: &VecDeque<Pair>, grad: &[f64], dir: &mut [f64], alpha: &mut [f64]) {
    dir.copy_from_slice(grad);
    for (k, p) in pairs.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, dir);
        alpha[k] = a;
        for (d, y) in dir.iter_mut().zip(&p.y) {
            *d -= a * y;
        }
    }
    let gamma = pairs.back().map_or(1.0, |p| p.gamma);
    for d in dir.iter_mut() {
        *d *= gamma;
    }
    for (k, p) in pairs.iter().enumerate() {
        let b = p.rho * dot(&p.y, dir);
        for (d, s) in dir.iter_mut().zip(&p.s) {
            *d += (alpha[k] - b) * s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Barrier<'p, 'a> {
    prog: &'p ConcaveProgram<'a>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl<'p, 'a> Barrier<'p, 'a> {
    /// `None` when some constraint is not strictly satisfied or values are
    /// not finite.
    fn value(&self, x: &[f64], t: f64) -> Option<Eval> {
        let mut acc = 0.0;
        for c in &self.prog.constraints {
            let g = (c.eval)(x, None);
            if !(g < 0.0) || !g.is_finite() {
                return None;
            }
            acc += (-g).ln();
        }
        let f = (self.prog.objective)(x, None);
        if !f.is_finite() {
            return None;
        }
        Some(Eval {
            barrier: f + acc / t,
            objective: f,
        })
    }

    fn gradient(&self, x: &[f64], t: f64, grad: &mut [f64]) -> Option<Eval> {
        let f = (self.prog.objective)(x, Some(grad));
        if !f.is_finite() {
            return None;
        }
        let mut acc = 0.0;
        let mut scratch = self.scratch.borrow_mut();
        for c in &self.prog.constraints {
            let g = (c.eval)(x, Some(&mut scratch[..]));
            if !(g < 0.0) || !g.is_finite() {
                return None;
            }
            acc += (-g).ln();
            let w = 1.0 / (t * g);
            for (a, b) in grad.iter_mut().zip(scratch.iter()) {
                *a += w * b;
            }
        }
        Some(Eval {
            barrier: f + acc / t,
            objective: f,
        })
    }

    fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.prog
            .constraints
            .iter()
            .map(|c| -(c.eval)(x, None))
            .collect()
    }
}

/// Maximises the program from its strictly feasible initial point.
pub fn solve(prog: &ConcaveProgram<'_>, settings: &SolverSettings) -> Result<Solution> {
    settings.validate()?;
    prog.validate()?;
    let n = prog.dim();
    let start = Instant::now();
    let bar = Barrier {
        prog,
        scratch: std::cell::RefCell::new(vec![0.0; n]),
    };
    let mut x = prog.initial.clone();
    prog.project(&mut x);
    for c in &prog.constraints {
        let g = (c.eval)(&x, None);
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "constraint {} is not finite at the start",
                c.name
            )));
        }
        if g >= 0.0 {
            return Err(Error::Infeasible(format!(
                "constraint {} has value {g:e} at the start",
                c.name
            )));
        }
    }
    let f0 = (prog.objective)(&x, None);
    if !f0.is_finite() {
        return Err(Error::Numeric(
            "objective is not finite at the start".into(),
        ));
    }
    let mut best_x = x.clone();
    let mut best_f = f0;
    let mut unchanged = true;
    let m = prog.constraints.len();
    let mut t = settings.t0;
    let mut degraded = false;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut grad = vec![0.0; n];
    let mut grad_new = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut free_grad = vec![0.0; n];
    let mut alpha_buf = vec![0.0; MEMORY];
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(MEMORY);
    let mut step = f64::NAN;
    let mut outer = 0usize;
    loop {
        let mut cur = bar
            .gradient(&x, t, &mut grad)
            .ok_or_else(|| Error::Numeric("barrier not finite at a feasible iterate".into()))?;
        if !step.is_finite() {
            let gn = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
            step = if gn > 0.0 { 1.0 / gn } else { 1.0 };
        }
        pairs.clear();
        let mut converged = false;
        for _ in 0..settings.max_inner {
            for j in 0..n {
                y[j] = x[j] + grad[j];
            }
            prog.project(&mut y);
            let pg = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if pg <= settings.grad_tol {
                converged = true;
                break;
            }
            let mut accepted = None;
            for scaled in [true, false] {
                if scaled {
                    if pairs.is_empty() {
                        continue;
                    }
                    free_grad.copy_from_slice(&grad);
                    prog.restrict(&x, &grad, &mut free_grad);
                    two_loop(&pairs, &free_grad, &mut dir, &mut alpha_buf);
                    prog.restrict(&x, &grad, &mut dir);
                    let cap = TRUST * x.iter().map(|v| v.abs()).fold(1.0, f64::max);
                    let len = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    if len > cap {
                        dir.iter_mut().for_each(|v| *v *= cap / len);
                    }
                } else {
                    for j in 0..n {
                        dir[j] = step * grad[j];
                    }
                }
                for j in 0..n {
                    y[j] = x[j] + dir[j];
                }
                prog.project(&mut y);
                for j in 0..n {
                    y[j] -= x[j];
                }
                let dec = dot(&grad, &y);
                if !(dec > 0.0) {
                    continue;
                }
                let mut alpha = 1.0;
                for _ in 0..if scaled { 30 } else { 60 } {
                    for j in 0..n {
                        z[j] = x[j] + alpha * y[j];
                    }
                    if let Some(ev) = bar.value(&z, t) {
                        if ev.barrier > cur.barrier
                            && ev.barrier >= cur.barrier + settings.armijo * alpha * dec
                        {
                            accepted = Some(ev);
                            break;
                        }
                    }
                    alpha *= settings.shrink;
                }
                if accepted.is_some() {
                    break;
                }
            }
            let Some(ev) = accepted else {
                converged = true;
                break;
            };
            iterations += 1;
            let ev_full = bar.gradient(&z, t, &mut grad_new).unwrap_or(ev);
            let mut sy = 0.0;
            let mut ss = 0.0;
            let mut yy = 0.0;
            let mut pair = if pairs.len() >= MEMORY {
                pairs.pop_front().unwrap()
            } else {
                Pair::new(n)
            };
            for j in 0..n {
                let dx = z[j] - x[j];
                let dg = grad[j] - grad_new[j];
                pair.s[j] = dx;
                pair.y[j] = dg;
                sy += dx * dg;
                ss += dx * dx;
                yy += dg * dg;
            }
            if sy > 1e-12 * yy && yy > 0.0 {
                pair.rho = 1.0 / sy;
                pair.gamma = sy / yy;
                pairs.push_back(pair);
            }
            std::mem::swap(&mut x, &mut z);
            std::mem::swap(&mut grad, &mut grad_new);
            cur = ev_full;
            if cur.objective > best_f {
                best_f = cur.objective;
                best_x.copy_from_slice(&x);
                unchanged = false;
            }
            if settings.trace {
                let viol = bar
                    .slacks(&x)
                    .iter()
                    .map(|s| (-s).max(0.0))
                    .fold(0.0, f64::max);
                trace.push(SolverTraceRow {
                    iteration: iterations,
                    objective: cur.objective,
                    max_violation: viol,
                    elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            step = if sy > 0.0 {
                (ss / sy).clamp(1e-12, 1e12)
            } else {
                1e12_f64.min(step * 10.0)
            };
        }
        if !converged {
            degraded = true;
        }
        if m == 0 || m as f64 / t <= settings.gap_tol {
            break;
        }
        outer += 1;
        if outer >= settings.max_outer {
            degraded = true;
            break;
        }
        t *= settings.kappa;
    }
    let slacks = bar.slacks(&best_x);
    Ok(Solution {
        x: best_x,
        objective: best_f,
        slacks,
        degraded,
        unchanged,
        iterations,
        trace,
    })
}

/// Writes a solver trace as CSV.
pub fn write_solver_trace(rows: &[SolverTraceRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective", "max_violation", "elapsed_ms"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.objective.to_string(),
            r.max_violation.to_string(),
            r.elapsed_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
