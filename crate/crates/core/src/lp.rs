//! Time-indexed start-variable program and its linear relaxation.
//!
//! Variable `x[i][k]` is 1 when request `i` starts at step `k ∈ 0..=T̄`. The
//! objective is `Σ k·x[i][k] + Σ o_i`, each request starts once, and memory
//! row `t ∈ 1..=T̄` bounds `Σ (s_i + t - k)·x[i][k]` over
//! `k ∈ [max(0, t - o_i), t - 1]` by `M`.
//!
//! The relaxation is solved by a revised primal simplex that keeps the basis
//! inverse as a dense matrix, started from the basis of a shortest-first
//! schedule.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Instance, Request, RequestId, StartSchedule, Time, Tokens};
use crate::sim::{execute_ordered, ExecutionPolicy};

/// Default cap on `n · T̄`.
pub const DEFAULT_LP_BUDGET: u128 = 50_000;

/// Cap on the entries of the dense basis inverse, `(n + T̄)²`.
pub const MAX_BASIS_ENTRIES: u128 = 1 << 26;

/// Largest instance the exact oracle accepts.
pub const IP_MAX_REQUESTS: usize = 8;

/// Largest horizon the exact oracle accepts.
pub const IP_MAX_HORIZON: Time = 64;

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
/// Entries of the basis inverse below this magnitude are treated as zero.
const DROP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpModel {
    horizon: Time,
    memory_limit: Tokens,
    requests: Vec<Request>,
}

pub fn build_model(instance: &Instance, horizon_override: Option<Time>) -> Result<IpModel> {
    let max_o = instance.max_output();
    let horizon = match horizon_override {
        Some(h) if h < max_o => return Err(Error::HorizonTooShort { horizon: h, max_o }),
        Some(h) => h,
        None => instance.total_output() as Time,
    };
    Ok(IpModel {
        horizon,
        memory_limit: instance.memory_limit(),
        requests: instance.requests().to_vec(),
    })
}

impl IpModel {
    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn memory_limit(&self) -> Tokens {
        self.memory_limit
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn num_variables(&self) -> usize {
        self.requests.len() * (self.horizon as usize + 1)
    }

    pub fn num_rows(&self) -> usize {
        self.requests.len() + self.horizon as usize
    }

    /// `Σ o_i`, the constant part of the objective.
    pub fn objective_constant(&self) -> u128 {
        self.requests.iter().map(|r| r.o as u128).sum()
    }

    /// Coefficient of `x[i][k]` in memory row `t`, if it appears there.
    pub fn memory_coefficient(&self, i: usize, k: Time, t: Time) -> Option<Tokens> {
        let r = &self.requests[i];
        (t >= 1 && t <= self.horizon && k < t && t - k <= r.o).then(|| r.s + t - k)
    }

    /// Nonzeros `(i, k, coefficient)` of memory row `t`.
    pub fn memory_row(&self, t: Time) -> Vec<(usize, Time, Tokens)> {
        let mut row = Vec::new();
        for (i, r) in self.requests.iter().enumerate() {
            for k in t.saturating_sub(r.o)..t {
                row.push((i, k, r.s + t - k));
            }
        }
        row
    }

    /// Left-hand side of memory row `t` for the integral assignment that
    /// starts request `i` at `starts[i]`.
    pub fn memory_row_value(&self, t: Time, starts: &[Time]) -> u128 {
        self.requests
            .iter()
            .enumerate()
            .filter_map(|(i, _)| self.memory_coefficient(i, starts[i], t))
            .map(u128::from)
            .sum()
    }

    /// The model in CPLEX LP text format. The objective constant `Σ o` is
    /// stated in a comment.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let var = |i: usize, k: Time| format!("x_{}_{}", self.requests[i].id, k);
        let _ = writeln!(out, "\\ objective constant {}", self.objective_constant());
        let _ = writeln!(out, "Minimize");
        out.push_str(" obj:");
        for i in 0..self.requests.len() {
            for k in 1..=self.horizon {
                let _ = write!(out, " + {k} {}", var(i, k));
            }
        }
        out.push_str("\nSubject To\n");
        for i in 0..self.requests.len() {
            let _ = write!(out, " start_{}:", self.requests[i].id);
            for k in 0..=self.horizon {
                let _ = write!(out, " + {}", var(i, k));
            }
            out.push_str(" = 1\n");
        }
        for t in 1..=self.horizon {
            let row = self.memory_row(t);
            if row.is_empty() {
                continue;
            }
            let _ = write!(out, " mem_{t}:");
            for (i, k, c) in row {
                let _ = write!(out, " + {c} {}", var(i, k));
            }
            let _ = writeln!(out, " <= {}", self.memory_limit);
        }
        out.push_str("Bounds\n");
        for i in 0..self.requests.len() {
            for k in 0..=self.horizon {
                let _ = writeln!(out, " 0 <= {} <= 1", var(i, k));
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LpOptions {
    /// Cap on `n · T̄`.
    pub budget: u128,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            budget: DEFAULT_LP_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    ids: Vec<RequestId>,
    horizon: Time,
    /// Row-major `n × (T̄ + 1)` values of `x`.
    values: Vec<f64>,
    objective: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct SolutionFile {
    objective: f64,
    y: BTreeMap<String, f64>,
}

impl LpSolution {
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn ids(&self) -> &[RequestId] {
        &self.ids
    }

    /// Values `x[i][0..=T̄]` of the request at position `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.horizon as usize + 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn x(&self, i: usize, k: Time) -> f64 {
        self.row(i)[k as usize]
    }

    /// `y_i = Σ_k k · x[i][k]` per request position.
    pub fn expected_start_vec(&self) -> Vec<f64> {
        (0..self.ids.len())
            .map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| k as f64 * v)
                    .sum()
            })
            .collect()
    }

    pub fn expected_starts(&self) -> BTreeMap<RequestId, f64> {
        self.ids
            .iter()
            .copied()
            .zip(self.expected_start_vec())
            .collect()
    }

    /// The integral solution that starts each request as `schedule` does.
    pub fn from_schedule(model: &IpModel, schedule: &StartSchedule) -> Result<Self> {
        let width = model.horizon as usize + 1;
        let mut values = vec![0.0; model.requests.len() * width];
        let mut objective = model.objective_constant() as f64;
        for (i, r) in model.requests.iter().enumerate() {
            let p = schedule.start(r.id).ok_or(Error::MissingStart(r.id))?;
            if p > model.horizon {
                return Err(Error::LpInfeasible(model.horizon));
            }
            values[i * width + p as usize] = 1.0;
            objective += p as f64;
        }
        Ok(LpSolution {
            ids: model.requests.iter().map(|r| r.id).collect(),
            horizon: model.horizon,
            values,
            objective,
            iterations: 0,
        })
    }

    /// The schedule encoded by an integral solution, or `None` when some
    /// request is split across several starts.
    pub fn to_schedule(&self) -> Option<StartSchedule> {
        let mut schedule = StartSchedule::new();
        for (i, &id) in self.ids.iter().enumerate() {
            let k = self.row(i).iter().position(|&v| (v - 1.0).abs() <= FEAS_TOL)?;
            schedule.insert(id, k as Time);
        }
        Some(schedule)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SolutionFile {
            objective: self.objective,
            y: self
                .expected_starts()
                .into_iter()
                .map(|(id, y)| (id.to_string(), y))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

pub fn solve_lp(model: &IpModel) -> Result<LpSolution> {
    solve_lp_with(model, &LpOptions::default())
}

pub fn solve_lp_with(model: &IpModel, options: &LpOptions) -> Result<LpSolution> {
    let cells = model.requests.len() as u128 * model.horizon as u128;
    if cells > options.budget {
        return Err(Error::LpBudget {
            cells,
            budget: options.budget,
        });
    }
    let rows = model.num_rows() as u128;
    if rows * rows > MAX_BASIS_ENTRIES {
        return Err(Error::LpBudget {
            cells: rows * rows,
            budget: MAX_BASIS_ENTRIES,
        });
    }
    let starts = crash_starts(model)?;
    let mut simplex = Simplex::new(model, &starts);
    simplex.run()?;
    Ok(simplex.solution())
}

/// Starts of the shortest-first schedule, with any start past `T̄` moved to
/// `T̄` where it touches no memory row. Dropping load keeps every row within
/// `M`, so the result is feasible for the relaxation.
fn crash_starts(model: &IpModel) -> Result<Vec<Time>> {
    let instance = Instance::new(model.memory_limit, model.requests.clone())?;
    let mut order: Vec<RequestId> = instance.ids().collect();
    order.sort_by_key(|&id| (instance.get(id).map(|r| r.o), id));
    let (schedule, _) = execute_ordered(&instance, &order, ExecutionPolicy::default())?;
    Ok(schedule
        .aligned(&instance)?
        .into_iter()
        .map(|p| p.min(model.horizon))
        .collect())
}

/// Basis inverse kept as `B₀⁻¹ + Σ_j c_j ρ_jᵀ`. Each pivot appends one
/// rank-one term; the terms are folded into `B₀⁻¹` in batches so that the
/// dense matrix is swept once per batch instead of once per pivot.
struct Inverse {
    m: usize,
    base: Vec<f64>,
    cs: Vec<Vec<f64>>,
    rhos: Vec<Vec<f64>>,
}

const FOLD_BATCH: usize = 48;

impl Inverse {
    fn identity(m: usize) -> Self {
        let mut base = vec![0.0; m * m];
        for r in 0..m {
            base[r * m + r] = 1.0;
        }
        Inverse {
            m,
            base,
            cs: Vec::new(),
            rhos: Vec::new(),
        }
    }

    fn base_row(&self, r: usize) -> &[f64] {
        &self.base[r * self.m..(r + 1) * self.m]
    }

    /// `B⁻¹ a` for a sparse column `a`.
    fn ftran(&self, col: &[(usize, f64)], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.base_row(r);
            *o = col.iter().map(|&(c, v)| row[c] * v).sum();
        }
        for (c, rho) in self.cs.iter().zip(&self.rhos) {
            let w: f64 = col.iter().map(|&(k, v)| rho[k] * v).sum();
            if w != 0.0 {
                axpy(out, w, c);
            }
        }
    }

    /// Row `r` of `B⁻¹`.
    fn row(&self, r: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(self.base_row(r));
        for (c, rho) in self.cs.iter().zip(&self.rhos) {
            if c[r] != 0.0 {
                axpy(out, c[r], rho);
            }
        }
    }

    fn push(&mut self, c: Vec<f64>, rho: Vec<f64>) {
        self.cs.push(c);
        self.rhos.push(rho);
        if self.cs.len() >= FOLD_BATCH {
            self.fold();
        }
    }

    fn fold(&mut self) {
        const LANES: usize = 8;
        let m = self.m;
        let mut coef = Vec::with_capacity(self.cs.len());
        for (i, row) in self.base.chunks_exact_mut(m).enumerate() {
            coef.clear();
            coef.extend(
                self.cs
                    .iter()
                    .zip(&self.rhos)
                    .filter(|(c, _)| c[i] != 0.0)
                    .map(|(c, rho)| (c[i], rho.as_slice())),
            );
            let mut chunks = row.chunks_exact_mut(LANES);
            let mut offset = 0;
            for chunk in &mut chunks {
                let mut acc = [0.0; LANES];
                acc.copy_from_slice(chunk);
                for &(c, rho) in &coef {
                    let src = &rho[offset..offset + LANES];
                    for l in 0..LANES {
                        acc[l] += c * src[l];
                    }
                }
                chunk.copy_from_slice(&acc);
                offset += LANES;
            }
            for (l, v) in chunks.into_remainder().iter_mut().enumerate() {
                for &(c, rho) in &coef {
                    *v += c * rho[offset + l];
                }
            }
        }
        self.cs.clear();
        self.rhos.clear();
    }

    fn replace(&mut self, base: Vec<f64>) {
        self.base = base;
        self.cs.clear();
        self.rhos.clear();
    }
}

/// Revised primal simplex on `min c·x, A x = b, x ≥ 0` with memory slacks.
///
/// Columns `0..N` are `x[i][k]` at `i·(T̄+1) + k`; columns `N..N+T̄` are the
/// slacks of memory rows `1..=T̄`. Rows `0..n` are start-once rows, rows
/// `n..n+T̄` memory rows.
struct Simplex<'a> {
    model: &'a IpModel,
    n: usize,
    width: usize,
    m: usize,
    structural: usize,
    inverse: Inverse,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    x_b: Vec<f64>,
    duals: Vec<f64>,
    iterations: usize,
}

impl<'a> Simplex<'a> {
    /// Basis from an integral start vector: each request's start column and
    /// every memory slack. `B = [I 0; C I]` with `C` the memory coefficients
    /// of the starts, so `B⁻¹ = [I 0; -C I]`.
    fn new(model: &'a IpModel, starts: &[Time]) -> Self {
        let n = model.requests.len();
        let horizon = model.horizon as usize;
        let width = horizon + 1;
        let m = n + horizon;
        let structural = n * width;
        let mut inverse = Inverse::identity(m);
        let mut x_b = vec![1.0; n];
        x_b.extend(std::iter::repeat_n(model.memory_limit as f64, horizon));
        let mut basis = Vec::with_capacity(m);
        for (i, (r, &p)) in model.requests.iter().zip(starts).enumerate() {
            basis.push(i * width + p as usize);
            for t in p + 1..=(p + r.o).min(model.horizon) {
                let c = (r.s + t - p) as f64;
                let row = n + t as usize - 1;
                inverse.base[row * m + i] = -c;
                x_b[row] -= c;
            }
        }
        basis.extend((0..horizon).map(|t| structural + t));
        let mut is_basic = vec![false; structural + horizon];
        for &j in &basis {
            is_basic[j] = true;
        }
        let mut s = Simplex {
            model,
            n,
            width,
            m,
            structural,
            inverse,
            basis,
            is_basic,
            x_b,
            duals: vec![0.0; m],
            iterations: 0,
        };
        s.refresh_duals();
        s
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.structural {
            (j % self.width) as f64
        } else {
            0.0
        }
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j >= self.structural {
            out.push((self.n + j - self.structural, 1.0));
            return;
        }
        let (i, k) = (j / self.width, (j % self.width) as Time);
        let r = &self.model.requests[i];
        out.push((i, 1.0));
        let last = (k + r.o).min(self.model.horizon);
        for t in k + 1..=last {
            out.push((self.n + t as usize - 1, (r.s + t - k) as f64));
        }
    }

    fn rhs(&self, row: usize) -> f64 {
        if row < self.n {
            1.0
        } else {
            self.model.memory_limit as f64
        }
    }

    fn refresh_duals(&mut self) {
        self.inverse.fold();
        let m = self.m;
        self.duals.iter_mut().for_each(|d| *d = 0.0);
        for r in 0..m {
            let c = self.cost(self.basis[r]);
            if c == 0.0 {
                continue;
            }
            let row = &self.inverse.base[r * m..(r + 1) * m];
            for (d, &b) in self.duals.iter_mut().zip(row) {
                *d += c * b;
            }
        }
    }

    fn refresh_primal(&mut self) {
        self.inverse.fold();
        let m = self.m;
        let b: Vec<f64> = (0..m).map(|r| self.rhs(r)).collect();
        for r in 0..m {
            let row = &self.inverse.base[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&b).map(|(x, y)| x * y).sum();
            self.x_b[r] = if v < 0.0 && v > -FEAS_TOL { 0.0 } else { v };
        }
    }

    /// Rebuilds the basis inverse from the basic columns by Gauss-Jordan
    /// elimination with partial pivoting.
    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        let mut col = Vec::new();
        for (c, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for &(r, v) in &col {
                a[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .expect("nonempty range");
            let pivot = a[p * m + c];
            if pivot.abs() < 1e-12 {
                return Err(Error::LpNumerical(format!(
                    "basis is singular at column {c} (pivot {pivot:e})"
                )));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            for k in 0..m {
                a[c * m + k] /= pivot;
                inv[c * m + k] /= pivot;
            }
            for r in 0..m {
                let f = a[r * m + c];
                if r == c || f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.inverse.replace(inv);
        self.refresh_primal();
        self.refresh_duals();
        Ok(())
    }

    /// Reduced costs of all structural columns from prefix sums of the
    /// memory-row duals; slack reduced costs are `-π_t`.
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let horizon = self.model.horizon as usize;
        let mut p0 = vec![0.0; horizon + 1];
        let mut p1 = vec![0.0; horizon + 1];
        for t in 1..=horizon {
            let pi = self.duals[self.n + t - 1];
            p0[t] = p0[t - 1] + pi;
            p1[t] = p1[t - 1] + t as f64 * pi;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_d = -OPT_TOL;
        let mut reduced = vec![0.0; horizon + 1];
        for (i, r) in self.model.requests.iter().enumerate() {
            let mu = self.duals[i];
            let s = r.s as f64;
            let o = r.o as usize;
            let base = i * self.width;
            // For k < split the request completes inside the horizon.
            let split = horizon - o + 1;
            for k in 0..split {
                let kf = k as f64;
                let e = k + o;
                reduced[k] = kf - mu - ((s - kf) * (p0[e] - p0[k]) + (p1[e] - p1[k]));
            }
            for k in split..=horizon {
                let kf = k as f64;
                reduced[k] = kf - mu - ((s - kf) * (p0[horizon] - p0[k]) + (p1[horizon] - p1[k]));
            }
            for (k, &d) in reduced.iter().enumerate() {
                if d < best_d && !self.is_basic[base + k] {
                    if bland {
                        return Some((base + k, d));
                    }
                    best_d = d;
                    best = Some((base + k, d));
                }
            }
        }
        for t in 0..horizon {
            let j = self.structural + t;
            if self.is_basic[j] {
                continue;
            }
            let d = -self.duals[self.n + t];
            if d < best_d {
                if bland {
                    return Some((j, d));
                }
                best_d = d;
                best = Some((j, d));
            }
        }
        best
    }

    fn run(&mut self) -> Result<()> {
        let m = self.m;
        let cap = 200 * m + 10_000;
        let mut col = Vec::new();
        let mut alpha = vec![0.0; m];
        let mut degenerate_run = 0usize;
        let mut reinversions = 0;
        loop {
            let bland = degenerate_run > 50;
            let Some((q, d_q)) = self.price(bland) else {
                if self.max_infeasibility() <= FEAS_TOL {
                    return Ok(());
                }
                if reinversions >= 3 {
                    return Err(Error::LpNumerical(format!(
                        "primal residual {:e} after {} iterations and {reinversions} reinversions",
                        self.max_infeasibility(),
                        self.iterations
                    )));
                }
                reinversions += 1;
                self.reinvert()?;
                continue;
            };
            self.iterations += 1;
            if self.iterations > cap {
                return Err(Error::LpNumerical(format!(
                    "no convergence within {cap} pivots"
                )));
            }

            self.column(q, &mut col);
            self.inverse.ftran(&col, &mut alpha);
            for a in alpha.iter_mut() {
                if a.abs() < DROP_TOL {
                    *a = 0.0;
                }
            }

            let leave = if bland {
                self.ratio_test_bland(&alpha)
            } else {
                self.ratio_test_harris(&alpha)
            };
            let Some((r, theta)) = leave else {
                return Err(Error::LpNumerical(format!(
                    "unbounded direction on column {q} (reduced cost {d_q:e})"
                )));
            };
            degenerate_run = if theta <= 1e-12 { degenerate_run + 1 } else { 0 };

            for (x, &a) in self.x_b.iter_mut().zip(&alpha) {
                *x -= theta * a;
            }
            self.x_b[r] = theta;

            let pivot = alpha[r];
            let mut rho = Vec::with_capacity(m);
            self.inverse.row(r, &mut rho);
            rho.iter_mut().for_each(|v| *v /= pivot);
            axpy(&mut self.duals, d_q, &rho);
            let mut c: Vec<f64> = alpha.iter().map(|a| -a).collect();
            c[r] += 1.0;
            self.inverse.push(c, rho);

            self.is_basic[self.basis[r]] = false;
            self.is_basic[q] = true;
            self.basis[r] = q;

            if self.iterations.is_multiple_of(200) {
                self.refresh_primal();
                if self.x_b.iter().any(|&x| x < -1e-6) {
                    self.reinvert()?;
                } else {
                    self.refresh_duals();
                }
            }
        }
    }

    /// Ratio test; ties go to the smallest basic column index.
    fn ratio_test_bland(&self, alpha: &[f64]) -> Option<(usize, f64)> {
        let mut leave: Option<(usize, f64)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.x_b[r].max(0.0) / a;
            leave = match leave {
                Some((lr, lratio))
                    if !(ratio < lratio - 1e-12
                        || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])) =>
                {
                    Some((lr, lratio))
                }
                _ => Some((r, ratio)),
            };
        }
        leave
    }

    /// Two-pass ratio test: bound the step with every basic value relaxed by
    /// `FEAS_TOL`, then take the largest pivot among rows within that bound.
    fn ratio_test_harris(&self, alpha: &[f64]) -> Option<(usize, f64)> {
        let mut bound = f64::INFINITY;
        for (r, &a) in alpha.iter().enumerate() {
            if a > PIVOT_TOL {
                bound = bound.min((self.x_b[r].max(0.0) + FEAS_TOL) / a);
            }
        }
        let mut leave: Option<(usize, f64)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.x_b[r].max(0.0) / a;
            if ratio <= bound && leave.is_none_or(|(lr, _)| a > alpha[lr]) {
                leave = Some((r, ratio));
            }
        }
        leave
    }

    /// Largest violation of `A x = b` (scaled by `max(1, b)`) or `x ≥ 0`
    /// after recomputing `x_B`.
    fn max_infeasibility(&mut self) -> f64 {
        self.refresh_primal();
        let mut lhs = vec![0.0; self.m];
        let mut col = Vec::new();
        let mut worst: f64 = 0.0;
        for (r, &j) in self.basis.iter().enumerate() {
            worst = worst.max(-self.x_b[r]);
            self.column(j, &mut col);
            for &(row, v) in &col {
                lhs[row] += v * self.x_b[r];
            }
        }
        for (row, v) in lhs.iter().enumerate() {
            let b = self.rhs(row);
            worst = worst.max((v - b).abs() / b.max(1.0));
        }
        worst
    }

    fn solution(&self) -> LpSolution {
        let mut values = vec![0.0; self.structural];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.structural {
                values[j] = self.x_b[r].max(0.0);
            }
        }
        let objective = values
            .iter()
            .enumerate()
            .map(|(j, &v)| (j % self.width) as f64 * v)
            .sum::<f64>()
            + self.model.objective_constant() as f64;
        LpSolution {
            ids: self.model.requests.iter().map(|r| r.id).collect(),
            horizon: self.model.horizon,
            values,
            objective,
            iterations: self.iterations,
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum IpObjective {
    /// Sum of completion times.
    TotalLatency,
    /// Completion time of the last request.
    Makespan,
}

/// Exact optimum by branch and bound over start vectors.
///
/// Starts are restricted to `p_i + o_i ≤ min(T̄, Σo)`: an idle step can be
/// removed by shifting every later start down by one, so some optimal
/// schedule never idles. Requests are branched in descending `s + o` with
/// starts tried in ascending order. Among optimal schedules the one whose
/// start vector (in instance order) is lexicographically smallest is
/// returned.
pub fn solve_ip_exact(
    instance: &Instance,
    horizon: Option<Time>,
    objective: IpObjective,
) -> Result<(StartSchedule, u128)> {
    let n = instance.len();
    if n > IP_MAX_REQUESTS {
        return Err(Error::OracleGuard(format!(
            "{n} requests exceed the limit of {IP_MAX_REQUESTS}"
        )));
    }
    let total = instance.total_output() as Time;
    let horizon = horizon.unwrap_or(total);
    if horizon > IP_MAX_HORIZON {
        return Err(Error::OracleGuard(format!(
            "horizon {horizon} exceeds the limit of {IP_MAX_HORIZON}"
        )));
    }
    if horizon < instance.max_output() {
        return Err(Error::HorizonTooShort {
            horizon,
            max_o: instance.max_output(),
        });
    }
    let requests = instance.requests();
    let end = horizon.min(total);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(requests[i].peak_memory()), i));
    let best = Search::new(instance, end, objective).optimum(&order);
    let Some(best) = best else {
        return Err(Error::LpInfeasible(horizon));
    };

    let id_order: Vec<usize> = (0..n).collect();
    let starts = Search::new(instance, end, objective)
        .first_with_value(&id_order, best)
        .expect("an optimal schedule exists");
    Ok((StartSchedule::from_aligned(instance, &starts), best))
}

struct Search<'a> {
    requests: &'a [Request],
    limit: Tokens,
    end: Time,
    objective: IpObjective,
    usage: Vec<Tokens>,
    starts: Vec<Option<Time>>,
    /// Earlier request of identical shape, whose start bounds this one.
    twin: Vec<Option<usize>>,
}

impl<'a> Search<'a> {
    fn new(instance: &'a Instance, end: Time, objective: IpObjective) -> Self {
        let requests = instance.requests();
        let twin = (0..requests.len())
            .map(|i| {
                (0..i)
                    .rev()
                    .find(|&j| requests[j].s == requests[i].s && requests[j].o == requests[i].o)
            })
            .collect();
        Search {
            requests,
            limit: instance.memory_limit(),
            end,
            objective,
            usage: vec![0; end as usize + 2],
            starts: vec![None; requests.len()],
            twin,
        }
    }

    fn fits(&self, r: &Request, p: Time) -> bool {
        (p + 1..=p + r.o).all(|t| self.usage[t as usize] + r.s + t - p <= self.limit)
    }

    fn place(&mut self, i: usize, p: Time, sign: bool) {
        let r = self.requests[i];
        for t in p + 1..=p + r.o {
            let u = &mut self.usage[t as usize];
            if sign {
                *u += r.s + t - p;
            } else {
                *u -= r.s + t - p;
            }
        }
        self.starts[i] = sign.then_some(p);
    }

    /// Start range for request `i` given the symmetry rule for twins.
    fn range(&self, i: usize) -> std::ops::RangeInclusive<Time> {
        let r = &self.requests[i];
        let mut lo = 0;
        let mut hi = self.end - r.o;
        // Identical requests start in instance order.
        for (j, tw) in self.twin.iter().enumerate() {
            if *tw == Some(i) {
                if let Some(pj) = self.starts[j] {
                    hi = hi.min(pj);
                }
            }
        }
        if let Some(j) = self.twin[i] {
            if let Some(pj) = self.starts[j] {
                lo = pj;
            }
        }
        lo..=hi
    }

    fn combine(&self, acc: u128, completion: Time) -> u128 {
        match self.objective {
            IpObjective::TotalLatency => acc + completion as u128,
            IpObjective::Makespan => acc.max(completion as u128),
        }
    }

    /// Lower bound on the objective after fixing `order[depth..]` optimally.
    fn bound(&self, acc: u128, order: &[usize], depth: usize) -> u128 {
        order[depth..]
            .iter()
            .fold(acc, |a, &i| self.combine(a, self.requests[i].o))
    }

    fn optimum(mut self, order: &[usize]) -> Option<u128> {
        let mut best = None;
        self.descend_best(order, 0, 0, &mut best);
        best
    }

    fn descend_best(&mut self, order: &[usize], depth: usize, acc: u128, best: &mut Option<u128>) {
        if best.is_some_and(|b| self.bound(acc, order, depth) >= b) {
            return;
        }
        if depth == order.len() {
            *best = Some(acc);
            return;
        }
        let i = order[depth];
        let r = self.requests[i];
        for p in self.range(i) {
            let next = self.combine(acc, p + r.o);
            if best.is_some_and(|b| self.bound(next, order, depth + 1) >= b) {
                if self.objective == IpObjective::TotalLatency {
                    break;
                }
                continue;
            }
            if !self.fits(&r, p) {
                continue;
            }
            self.place(i, p, true);
            self.descend_best(order, depth + 1, next, best);
            self.place(i, p, false);
        }
    }

    fn first_with_value(mut self, order: &[usize], target: u128) -> Option<Vec<Time>> {
        self.descend_target(order, 0, 0, target)
            .then(|| self.starts.iter().map(|p| p.expect("assigned")).collect())
    }

    fn descend_target(&mut self, order: &[usize], depth: usize, acc: u128, target: u128) -> bool {
        if depth == order.len() {
            return acc == target;
        }
        let i = order[depth];
        let r = self.requests[i];
        for p in self.range(i) {
            let next = self.combine(acc, p + r.o);
            if self.bound(next, order, depth + 1) > target {
                if self.objective == IpObjective::TotalLatency {
                    break;
                }
                continue;
            }
            if !self.fits(&r, p) {
                continue;
            }
            self.place(i, p, true);
            if self.descend_target(order, depth + 1, next, target) {
                return true;
            }
            self.place(i, p, false);
        }
        false
    }
}
