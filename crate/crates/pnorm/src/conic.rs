//! Solver-agnostic conic programs and the adapter to the Clarabel interior-point solver.
//!
//! A program has real variables, a linear objective, and constraints of four
//! kinds: affine (≤ 0, = 0, ≥ 0), second-order cone (‖tail‖₂ ≤ head, all
//! affine), positive semidefinite (a symmetric affine matrix ⪰ 0, only the
//! upper triangle stored), and per-variable nonnegativity.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_cone::{BlockConstraint, ConeBlock, Slot};

/// Default solver tolerance (gap and feasibility).
pub const DEFAULT_TOL: f64 = 1e-8;

/// Opaque variable handle: an index into the program's variable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

/// Affine expression Σ c_j x_j + constant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    #[serde(default)]
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.terms.push((v, c));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    /// Linear combination of two expressions.
    pub fn combine(a: &LinExpr, ca: f64, b: &LinExpr, cb: f64) -> LinExpr {
        let mut terms: Vec<(VarId, f64)> = a.terms.iter().map(|&(v, c)| (v, ca * c)).collect();
        terms.extend(b.terms.iter().map(|&(v, c)| (v, cb * c)));
        LinExpr { terms, constant: ca * a.constant + cb * b.constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0 .0).max()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `expr rel 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub expr: LinExpr,
    pub rel: Relation,
}

/// ‖(tail₁, …, tail_m)‖₂ ≤ head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub head: LinExpr,
    pub tail: Vec<LinExpr>,
}

/// Upper-triangle entry (row ≤ col) of a symmetric affine matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdEntry {
    pub row: usize,
    pub col: usize,
    pub expr: LinExpr,
}

/// M(x) ⪰ 0 where M is symmetric of side `dim`; missing entries are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdConstraint {
    pub dim: usize,
    pub entries: Vec<PsdEntry>,
}

impl PsdConstraint {
    pub fn new(dim: usize) -> Self {
        PsdConstraint { dim, entries: Vec::new() }
    }

    /// Adds `c * v` to entry (i, j); (i, j) and (j, i) denote the same entry.
    pub fn add(&mut self, i: usize, j: usize, v: VarId, c: f64) {
        let (row, col) = if i <= j { (i, j) } else { (j, i) };
        if let Some(e) = self.entries.iter_mut().find(|e| e.row == row && e.col == col) {
            e.expr.add_term(v, c);
        } else {
            self.entries.push(PsdEntry { row, col, expr: LinExpr::zero().term(v, c) });
        }
    }

    pub fn add_const(&mut self, i: usize, j: usize, c: f64) {
        let (row, col) = if i <= j { (i, j) } else { (j, i) };
        if let Some(e) = self.entries.iter_mut().find(|e| e.row == row && e.col == col) {
            e.expr.constant += c;
        } else {
            self.entries.push(PsdEntry { row, col, expr: LinExpr::constant(c) });
        }
    }

    /// Dense symmetric matrix at point x (row-major).
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut m = vec![0.0; n * n];
        for e in &self.entries {
            let v = e.expr.eval(x);
            m[e.row * n + e.col] += v;
            if e.row != e.col {
                m[e.col * n + e.row] += v;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Position of the program's tables, used to roll back an added block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    num_vars: usize,
    linear: usize,
    soc: usize,
}

/// Handles produced by [`ConicProgram::add_block`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockInstance {
    pub aux: Vec<VarId>,
    before: Checkpoint,
    after: Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: LinExpr,
    #[serde(default)]
    pub linear: Vec<LinearConstraint>,
    #[serde(default)]
    pub soc: Vec<SocConstraint>,
    #[serde(default)]
    pub psd: Vec<PsdConstraint>,
    #[serde(default)]
    pub nonneg: Vec<bool>,
}

impl ConicProgram {
    pub fn new(sense: Sense) -> Self {
        ConicProgram {
            num_vars: 0,
            sense,
            objective: LinExpr::zero(),
            linear: Vec::new(),
            soc: Vec::new(),
            psd: Vec::new(),
            nonneg: Vec::new(),
        }
    }

    pub fn add_var(&mut self) -> VarId {
        self.num_vars += 1;
        self.nonneg.push(false);
        VarId(self.num_vars - 1)
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<VarId> {
        (0..n).map(|_| self.add_var()).collect()
    }

    pub fn add_nonneg_var(&mut self) -> VarId {
        let v = self.add_var();
        self.nonneg[v.0] = true;
        v
    }

    pub fn set_nonneg(&mut self, v: VarId) {
        self.nonneg[v.0] = true;
    }

    pub fn set_objective(&mut self, obj: LinExpr) {
        self.objective = obj;
    }

    pub fn add_linear(&mut self, expr: LinExpr, rel: Relation) {
        self.linear.push(LinearConstraint { expr, rel });
    }

    /// lhs ≤ rhs.
    pub fn add_le(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.add_linear(LinExpr::combine(&lhs, 1.0, &rhs, -1.0), Relation::Le);
    }

    pub fn add_eq(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.add_linear(LinExpr::combine(&lhs, 1.0, &rhs, -1.0), Relation::Eq);
    }

    pub fn add_soc(&mut self, head: LinExpr, tail: Vec<LinExpr>) {
        self.soc.push(SocConstraint { head, tail });
    }

    /// ‖(w, (x − y)/2)‖₂ ≤ (x + y)/2, i.e. w² ≤ xy with x, y ≥ 0.
    pub fn add_rotated_pair(&mut self, w: VarId, x: VarId, y: VarId) {
        self.add_soc(
            LinExpr::zero().term(x, 0.5).term(y, 0.5),
            vec![LinExpr::var(w), LinExpr::zero().term(x, 0.5).term(y, -0.5)],
        );
    }

    pub fn psd_embed(&mut self, m: PsdConstraint) {
        self.psd.push(m);
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { num_vars: self.num_vars, linear: self.linear.len(), soc: self.soc.len() }
    }

    /// Instantiates a block template; `inputs` bind the template's input
    /// slots, and fresh variables are created for its auxiliary slots.
    pub fn add_block(&mut self, block: &ConeBlock, inputs: &[VarId]) -> Result<BlockInstance> {
        if inputs.len() != block.num_inputs {
            return Err(Error::invalid(format!(
                "block expects {} inputs, got {}",
                block.num_inputs,
                inputs.len()
            )));
        }
        if let Some(v) = inputs.iter().find(|v| v.0 >= self.num_vars) {
            return Err(Error::invalid(format!("handle {} out of range", v.0)));
        }
        let before = self.checkpoint();
        let aux = self.add_vars(block.num_aux);
        let h = |s: Slot| match s {
            Slot::Input(i) => inputs[i],
            Slot::Aux(i) => aux[i],
        };
        for c in &block.constraints {
            match *c {
                BlockConstraint::RotatedPair { w, x, y } => self.add_rotated_pair(h(w), h(x), h(y)),
                BlockConstraint::Le { w, bound } => {
                    self.add_le(LinExpr::var(h(w)), LinExpr::var(h(bound)))
                }
                BlockConstraint::NonNeg(w) => self.set_nonneg(h(w)),
            }
        }
        Ok(BlockInstance { aux, before, after: self.checkpoint() })
    }

    /// Removes the most recently added block. Nonnegativity flags set on
    /// input variables by the block are not tracked and stay in place.
    pub fn remove_block(&mut self, inst: &BlockInstance) -> Result<()> {
        if self.checkpoint() != inst.after {
            return Err(Error::invalid("only the most recently added block can be removed"));
        }
        self.num_vars = inst.before.num_vars;
        self.nonneg.truncate(inst.before.num_vars);
        self.linear.truncate(inst.before.linear);
        self.soc.truncate(inst.before.soc);
        Ok(())
    }

    /// Checks that every handle is in range and PSD entries lie in the triangle.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let bad = |e: &LinExpr| e.max_var().is_some_and(|m| m >= n);
        if self.nonneg.len() != n {
            return Err(Error::invalid("nonneg flag table length differs from num_vars"));
        }
        if bad(&self.objective)
            || self.linear.iter().any(|c| bad(&c.expr))
            || self.soc.iter().any(|c| bad(&c.head) || c.tail.iter().any(bad))
            || self.psd.iter().any(|m| m.entries.iter().any(|e| bad(&e.expr)))
        {
            return Err(Error::invalid("variable handle out of range"));
        }
        for m in &self.psd {
            if m.dim == 0 {
                return Err(Error::invalid("empty PSD block"));
            }
            if m.entries.iter().any(|e| e.row > e.col || e.col >= m.dim) {
                return Err(Error::invalid("PSD entry outside the upper triangle"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ConicProgram = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn solve(&self, tol: f64) -> Result<SolveResult> {
        solve(self, tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u32,
    pub solve_time_s: f64,
    /// Raw status reported by the solver backend.
    pub solver_status: String,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// The backend met only its relaxed tolerances.
    pub reduced_accuracy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present iff status is optimal.
    pub objective: Option<f64>,
    pub primal: Vec<f64>,
    pub stats: SolveStats,
}

impl SolveResult {
    /// Objective value, or an error carrying the solver diagnostics.
    pub fn optimal_value(&self) -> Result<f64> {
        self.objective.ok_or_else(|| Error::Solver {
            status: format!("{:?}", self.status),
            detail: format!(
                "backend status {}, {} iterations, residuals {:.3e}/{:.3e}",
                self.stats.solver_status,
                self.stats.iterations,
                self.stats.primal_residual,
                self.stats.dual_residual
            ),
        })
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the row s = expr, i.e. −a·x + s = c.
    fn push_slack_eq(&mut self, expr: &LinExpr, scale: f64) {
        let r = self.b.len();
        for &(var, c) in &expr.terms {
            self.i.push(r);
            self.j.push(var.0);
            self.v.push(-scale * c);
        }
        self.b.push(scale * expr.constant);
    }
}

/// Compressed-column matrix with summed duplicates and explicit zeros dropped.
fn csc(m: usize, n: usize, mut trip: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    trip.sort_by_key(|a| (a.1, a.0));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(trip.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(trip.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in trip {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        last = Some((r, c));
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    let mut out = CscMatrix::new(m, n, colptr, rowval, nzval);
    out.dropzeros();
    out
}

/// Solves the program with gap and feasibility tolerances `tol`.
pub fn solve(prog: &ConicProgram, tol: f64) -> Result<SolveResult> {
    prog.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let n = prog.num_vars;
    let mut rows = Rows { i: vec![], j: vec![], v: vec![], b: vec![] };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    let eqs: Vec<&LinearConstraint> = prog.linear.iter().filter(|c| c.rel == Relation::Eq).collect();
    for c in &eqs {
        rows.push_slack_eq(&c.expr, 1.0);
    }
    if !eqs.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eqs.len()));
    }
    let mut nn = 0;
    for c in &prog.linear {
        match c.rel {
            Relation::Le => rows.push_slack_eq(&c.expr, -1.0),
            Relation::Ge => rows.push_slack_eq(&c.expr, 1.0),
            Relation::Eq => continue,
        }
        nn += 1;
    }
    for (k, &flag) in prog.nonneg.iter().enumerate() {
        if flag {
            rows.push_slack_eq(&LinExpr::var(VarId(k)), 1.0);
            nn += 1;
        }
    }
    if nn > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nn));
    }
    for c in &prog.soc {
        rows.push_slack_eq(&c.head, 1.0);
        for t in &c.tail {
            rows.push_slack_eq(t, 1.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + c.tail.len()));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for m in &prog.psd {
        // Column-major upper triangle, off-diagonals scaled by √2.
        let mut table: Vec<LinExpr> = vec![LinExpr::zero(); m.dim * (m.dim + 1) / 2];
        for e in &m.entries {
            let idx = e.col * (e.col + 1) / 2 + e.row;
            let merged = LinExpr::combine(&table[idx], 1.0, &e.expr, 1.0);
            table[idx] = merged;
        }
        for col in 0..m.dim {
            for row in 0..=col {
                let s = if row == col { 1.0 } else { sqrt2 };
                rows.push_slack_eq(&table[col * (col + 1) / 2 + row], s);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(m.dim));
    }

    let sign = match prog.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut q = vec![0.0; n];
    for &(v, c) in &prog.objective.terms {
        q[v.0] += sign * c;
    }
    let m_rows = rows.b.len();
    let trip: Vec<(usize, usize, f64)> = rows
        .i
        .iter()
        .zip(&rows.j)
        .zip(&rows.v)
        .map(|((&r, &c), &v)| (r, c, v))
        .collect();
    let a = csc(m_rows, n, trip);
    let p = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .max_iter(500)
        .build()
        .map_err(|e| Error::invalid(format!("solver settings: {e:?}")))?;

    let start = Instant::now();
    let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings).map_err(|e| {
        Error::Solver { status: "setup".into(), detail: format!("{e:?}") }
    })?;
    solver.solve();
    let elapsed = start.elapsed().as_secs_f64();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalTrouble,
    };
    let primal = sol.x.clone();
    let objective = (status == SolveStatus::Optimal).then(|| prog.objective.eval(&primal));
    Ok(SolveResult {
        status,
        objective,
        primal,
        stats: SolveStats {
            iterations: sol.iterations,
            solve_time_s: elapsed,
            solver_status: format!("{:?}", sol.status),
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            reduced_accuracy: sol.status == SolverStatus::AlmostSolved,
        },
    })
}
