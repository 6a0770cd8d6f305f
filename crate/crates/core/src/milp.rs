//! Backend-independent mixed-integer linear programming layer.
//!
//! Formulation code builds models through [`ModelBuilder`] and never touches
//! the solver directly, so the backend (currently HiGHS) can be swapped
//! behind this module. Models are immutable once built; iterative algorithms
//! rebuild rather than mutate.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("variable id {id} out of range in {context} (model has {nvars} variables)")]
    UnknownVariable {
        id: usize,
        nvars: usize,
        context: String,
    },
    #[error("non-finite coefficient {value} in {context}")]
    NonFiniteCoefficient { value: f64, context: String },
    #[error("row '{0}' has empty bounds: lo {1} > hi {2}")]
    EmptyRowBounds(String, f64, f64),
    #[error("variable '{0}' has empty bounds: lo {1} > hi {2}")]
    EmptyVarBounds(String, f64, f64),
    #[error("solver backend failure: {0}")]
    Backend(String),
    #[error("no solution values available (status {0:?})")]
    NoSolution(SolveStatus),
}

/// Handle to a variable of one model. Ids are only meaningful for the model
/// that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
struct VarDef {
    name: String,
    kind: VarKind,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
struct RowDef {
    name: String,
    lo: f64,
    hi: f64,
    terms: Vec<(usize, f64)>,
}

/// Solver knobs. `big_m` is not consumed by the backend; it is the value the
/// subproblem builders use for the bilinear linearization and the value
/// [`check_bigm_slack`] audits against.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative MIP gap. The paper-style default is 0.1%.
    pub rel_gap: f64,
    /// Wall-clock limit per solve, seconds.
    pub time_limit: Option<f64>,
    /// Big-M constant for dual-times-binary products.
    pub big_m: f64,
    /// Primal feasibility tolerance handed to the backend.
    pub feasibility_tol: f64,
    /// Backend random seed; fixed for reproducible runs.
    pub seed: i32,
    /// Solver threads. Determinism is only claimed single-threaded.
    pub threads: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_gap: 1e-3,
            time_limit: None,
            big_m: 10.0,
            feasibility_tol: 1e-7,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    /// Proven optimal within the configured relative gap.
    Optimal,
    Infeasible,
    Unbounded,
    /// Hit the time limit; `incumbent` says whether values are available.
    TimeLimit { incumbent: bool },
    Error(String),
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Objective value, present iff a solution is available.
    pub objective: Option<f64>,
    /// Per-variable values in `VarId` order, present iff a solution is available.
    pub values: Option<Vec<f64>>,
    /// Relative MIP gap achieved (0 for pure LPs).
    pub rel_gap: Option<f64>,
    pub wall_secs: f64,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == SolveStatus::Infeasible
    }

    /// Values if the solve produced a usable point, else an error.
    pub fn solution(&self) -> Result<&[f64], MilpError> {
        self.values
            .as_deref()
            .ok_or_else(|| MilpError::NoSolution(self.status.clone()))
    }

    pub fn value(&self, var: VarId) -> Result<f64, MilpError> {
        Ok(self.solution()?[var.0])
    }

    pub fn objective_value(&self) -> Result<f64, MilpError> {
        self.objective
            .ok_or_else(|| MilpError::NoSolution(self.status.clone()))
    }
}

/// Incremental model description. Build order defines `VarId`/`RowId` order,
/// which in turn fixes the layout of solution vectors.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    name: String,
    vars: Vec<VarDef>,
    rows: Vec<RowDef>,
    sense: Sense,
    objective: Vec<f64>,
    objective_offset: f64,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
            sense,
            objective: Vec::new(),
            objective_offset: 0.0,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lo: f64, hi: f64) -> VarId {
        let (lo, hi) = match kind {
            VarKind::Binary => (lo.max(0.0), hi.min(1.0)),
            VarKind::Continuous => (lo, hi),
        };
        self.vars.push(VarDef {
            name: name.into(),
            kind,
            lo,
            hi,
        });
        self.objective.push(0.0);
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lo, hi)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Clamp a variable to a fixed value (used to freeze first-stage
    /// decisions for baselines and admissibility assessment).
    pub fn fix_var(&mut self, var: VarId, value: f64) {
        let def = &mut self.vars[var.0];
        def.lo = value;
        def.hi = value;
    }

    pub fn add_objective_term(&mut self, var: VarId, coeff: f64) {
        self.objective[var.0] += coeff;
    }

    pub fn add_objective_offset(&mut self, constant: f64) {
        self.objective_offset += constant;
    }

    /// Adds `lo <= sum(terms) <= hi`. Equality rows use `lo == hi`;
    /// one-sided rows use an infinite bound.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        lo: f64,
        terms: Vec<(VarId, f64)>,
        hi: f64,
    ) -> RowId {
        self.rows.push(RowDef {
            name: name.into(),
            lo,
            hi,
            terms: terms.into_iter().map(|(v, c)| (v.0, c)).collect(),
        });
        RowId(self.rows.len() - 1)
    }

    pub fn add_le_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, hi: f64) -> RowId {
        self.add_row(name, f64::NEG_INFINITY, terms, hi)
    }

    pub fn add_ge_row(&mut self, name: impl Into<String>, lo: f64, terms: Vec<(VarId, f64)>) -> RowId {
        self.add_row(name, lo, terms, f64::INFINITY)
    }

    pub fn add_eq_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.add_row(name, rhs, terms, rhs)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Validates the description and produces an immutable, solvable model.
    pub fn build(self) -> Result<Model, MilpError> {
        let nvars = self.vars.len();
        for var in &self.vars {
            if var.lo > var.hi {
                return Err(MilpError::EmptyVarBounds(var.name.clone(), var.lo, var.hi));
            }
            if var.lo.is_nan() || var.hi.is_nan() {
                return Err(MilpError::NonFiniteCoefficient {
                    value: f64::NAN,
                    context: format!("bounds of variable '{}'", var.name),
                });
            }
        }
        for (i, coeff) in self.objective.iter().enumerate() {
            if !coeff.is_finite() {
                return Err(MilpError::NonFiniteCoefficient {
                    value: *coeff,
                    context: format!("objective coefficient of '{}'", self.vars[i].name),
                });
            }
        }
        if !self.objective_offset.is_finite() {
            return Err(MilpError::NonFiniteCoefficient {
                value: self.objective_offset,
                context: "objective offset".into(),
            });
        }
        for row in &self.rows {
            if row.lo > row.hi {
                return Err(MilpError::EmptyRowBounds(row.name.clone(), row.lo, row.hi));
            }
            for &(id, coeff) in &row.terms {
                if id >= nvars {
                    return Err(MilpError::UnknownVariable {
                        id,
                        nvars,
                        context: format!("row '{}'", row.name),
                    });
                }
                if !coeff.is_finite() {
                    return Err(MilpError::NonFiniteCoefficient {
                        value: coeff,
                        context: format!("row '{}', variable '{}'", row.name, self.vars[id].name),
                    });
                }
            }
        }
        Ok(Model {
            name: self.name,
            vars: self.vars,
            rows: self.rows,
            sense: self.sense,
            objective: self.objective,
            objective_offset: self.objective_offset,
        })
    }
}

/// A validated model, ready to solve. Solving does not mutate the handle, so
/// repeated solves of the same handle see the identical problem.
#[derive(Debug, Clone)]
pub struct Model {
    name: String,
    vars: Vec<VarDef>,
    rows: Vec<RowDef>,
    sense: Sense,
    objective: Vec<f64>,
    objective_offset: f64,
}

impl Model {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.vars[var.0].name
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<SolveOutcome, MilpError> {
        let start = Instant::now();

        if self.vars.is_empty() {
            // Nothing to optimize; the objective is the constant offset.
            return Ok(SolveOutcome {
                status: SolveStatus::Optimal,
                objective: Some(self.objective_offset),
                values: Some(Vec::new()),
                rel_gap: Some(0.0),
                wall_secs: start.elapsed().as_secs_f64(),
            });
        }

        let mut problem = highs::RowProblem::new();
        let mut cols = Vec::with_capacity(self.vars.len());
        let mut has_integers = false;
        for (i, var) in self.vars.iter().enumerate() {
            let col = match var.kind {
                VarKind::Continuous => problem.add_column(self.objective[i], var.lo..=var.hi),
                VarKind::Binary => {
                    has_integers = true;
                    problem.add_integer_column(self.objective[i], var.lo..=var.hi)
                }
            };
            cols.push(col);
        }
        for row in &self.rows {
            let terms: Vec<_> = row.terms.iter().map(|&(id, c)| (cols[id], c)).collect();
            problem.add_row(row.lo..=row.hi, terms);
        }

        let sense = match self.sense {
            Sense::Minimize => highs::Sense::Minimise,
            Sense::Maximize => highs::Sense::Maximise,
        };
        let mut model = problem
            .try_optimise(sense)
            .map_err(|s| MilpError::Backend(format!("model load failed: {s:?}")))?;
        model.set_option("output_flag", false);
        model.set_option("random_seed", config.seed);
        model.set_option("threads", config.threads as i32);
        model.set_option("mip_rel_gap", config.rel_gap);
        model.set_option("primal_feasibility_tolerance", config.feasibility_tol);
        model.set_option("mip_feasibility_tolerance", config.feasibility_tol);
        if let Some(limit) = config.time_limit {
            model.set_option("time_limit", limit);
        }

        let solved = model
            .try_solve()
            .map_err(|s| MilpError::Backend(format!("solve failed: {s:?}")))?;
        let wall_secs = start.elapsed().as_secs_f64();

        use highs::HighsModelStatus as Hs;
        let raw_status = solved.status();
        let has_point =
            solved.primal_solution_status() == highs::HighsSolutionStatus::Feasible;
        let status = match raw_status {
            Hs::Optimal => SolveStatus::Optimal,
            Hs::Infeasible => SolveStatus::Infeasible,
            Hs::Unbounded | Hs::UnboundedOrInfeasible => SolveStatus::Unbounded,
            Hs::ReachedTimeLimit => SolveStatus::TimeLimit {
                incumbent: has_point,
            },
            other => SolveStatus::Error(format!("{other:?}")),
        };

        let usable = matches!(
            status,
            SolveStatus::Optimal | SolveStatus::TimeLimit { incumbent: true }
        );
        let (objective, values, rel_gap) = if usable {
            let solution = solved.get_solution();
            let gap = if has_integers {
                let g = solved.mip_gap();
                if g.is_finite() {
                    Some(g)
                } else {
                    None
                }
            } else {
                Some(0.0)
            };
            (
                Some(solved.objective_value() + self.objective_offset),
                Some(solution.columns().to_vec()),
                gap,
            )
        } else {
            (None, None, None)
        };

        Ok(SolveOutcome {
            status,
            objective,
            values,
            rel_gap,
            wall_secs,
        })
    }

    /// Largest row/bound violation of a candidate point; used by tests and
    /// the solution verifier to replay constraints.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (i, var) in self.vars.iter().enumerate() {
            let x = values[i];
            if x < var.lo - tol || x > var.hi + tol {
                out.push(format!(
                    "variable '{}' = {x} outside [{}, {}]",
                    var.name, var.lo, var.hi
                ));
            }
            if var.kind == VarKind::Binary && (x - x.round()).abs() > tol.max(1e-6) {
                out.push(format!("binary '{}' = {x} not integral", var.name));
            }
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(id, c)| c * values[id]).sum();
            if lhs < row.lo - tol || lhs > row.hi + tol {
                out.push(format!(
                    "row '{}' = {lhs} outside [{}, {}]",
                    row.name, row.lo, row.hi
                ));
            }
        }
        out
    }

    /// Objective value of a candidate point (including the constant offset).
    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Human-readable LP-style dump for debugging.
    pub fn dump_lp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ model {}", self.name);
        let _ = writeln!(
            s,
            "{}",
            match self.sense {
                Sense::Minimize => "Minimize",
                Sense::Maximize => "Maximize",
            }
        );
        let mut obj = String::new();
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(obj, " {:+} {}", c, self.vars[i].name);
            }
        }
        if self.objective_offset != 0.0 {
            let _ = write!(obj, " {:+}", self.objective_offset);
        }
        let _ = writeln!(s, " obj:{obj}");
        let _ = writeln!(s, "Subject To");
        for row in &self.rows {
            let mut body = String::new();
            for &(id, c) in &row.terms {
                let _ = write!(body, " {:+} {}", c, self.vars[id].name);
            }
            if row.lo == row.hi {
                let _ = writeln!(s, " {}:{body} = {}", row.name, row.lo);
            } else {
                if row.lo.is_finite() {
                    let _ = writeln!(s, " {}.lo:{body} >= {}", row.name, row.lo);
                }
                if row.hi.is_finite() {
                    let _ = writeln!(s, " {}.hi:{body} <= {}", row.name, row.hi);
                }
            }
        }
        let _ = writeln!(s, "Bounds");
        for var in &self.vars {
            let _ = writeln!(s, " {} <= {} <= {}", var.lo, var.name, var.hi);
        }
        let _ = writeln!(s, "Binaries");
        for var in &self.vars {
            if var.kind == VarKind::Binary {
                let _ = writeln!(s, " {}", var.name);
            }
        }
        let _ = writeln!(s, "End");
        s
    }
}

#[derive(Debug, Clone)]
pub struct BigMWarning {
    pub var: String,
    pub value: f64,
    pub bound: f64,
}

/// Flags big-M-bounded variables whose optimal value approaches the bound,
/// which would mean the linearization constant truncated the dual space.
pub fn check_bigm_slack(
    model: &Model,
    outcome: &SolveOutcome,
    bounded: &[VarId],
    big_m: f64,
    margin: f64,
) -> Result<Vec<BigMWarning>, MilpError> {
    let values = outcome.solution()?;
    let threshold = (1.0 - margin) * big_m;
    Ok(bounded
        .iter()
        .filter_map(|&v| {
            let value = values[v.0];
            (value.abs() >= threshold).then(|| BigMWarning {
                var: model.var_name(v).to_string(),
                value,
                bound: big_m,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn empty_model_solves_to_offset() {
        let mut mb = ModelBuilder::new("empty", Sense::Minimize);
        mb.add_objective_offset(0.0);
        let model = mb.build().unwrap();
        let out = model.solve(&cfg()).unwrap();
        assert!(out.is_optimal());
        assert_eq!(out.objective, Some(0.0));
    }

    #[test]
    fn min_x_with_lower_row() {
        let mut mb = ModelBuilder::new("minx", Sense::Minimize);
        let x = mb.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        mb.add_objective_term(x, 1.0);
        mb.add_ge_row("xlo", 3.0, vec![(x, 1.0)]);
        let out = mb.build().unwrap().solve(&cfg()).unwrap();
        assert!(out.is_optimal());
        assert!((out.objective.unwrap() - 3.0).abs() < 1e-9);
    }

    /// Expected value computed by enumerating all 8 subsets of
    /// values {3,4,5} / weights {2,3,4} under capacity 5: the best feasible
    /// subset is {3,4} with value 7.
    #[test]
    fn knapsack_matches_enumeration() {
        let values = [3.0, 4.0, 5.0];
        let weights = [2.0, 3.0, 4.0];
        let cap = 5.0;
        let mut best = 0.0f64;
        for mask in 0u32..8 {
            let (mut v, mut w) = (0.0, 0.0);
            for i in 0..3 {
                if mask & (1 << i) != 0 {
                    v += values[i];
                    w += weights[i];
                }
            }
            if w <= cap {
                best = best.max(v);
            }
        }
        assert_eq!(best, 7.0);

        let mut mb = ModelBuilder::new("knapsack", Sense::Maximize);
        let vars: Vec<_> = (0..3).map(|i| mb.add_binary(format!("x{i}"))).collect();
        for (i, &v) in vars.iter().enumerate() {
            mb.add_objective_term(v, values[i]);
        }
        mb.add_le_row(
            "cap",
            vars.iter().enumerate().map(|(i, &v)| (v, weights[i])).collect(),
            cap,
        );
        let out = mb.build().unwrap().solve(&cfg()).unwrap();
        assert!((out.objective.unwrap() - best).abs() < 1e-6);
    }

    #[test]
    fn infeasible_detected() {
        let mut mb = ModelBuilder::new("infeas", Sense::Minimize);
        let x = mb.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        mb.add_ge_row("ge1", 1.0, vec![(x, 1.0)]);
        mb.add_le_row("le0", vec![(x, 1.0)], 0.0);
        let out = mb.build().unwrap().solve(&cfg()).unwrap();
        assert!(out.is_infeasible());
        assert!(out.values.is_none());
    }

    #[test]
    fn min_zero_over_feasible_set() {
        let mut mb = ModelBuilder::new("zero", Sense::Minimize);
        let x = mb.add_continuous("x", 0.0, 10.0);
        mb.add_ge_row("r", 1.0, vec![(x, 1.0)]);
        let out = mb.build().unwrap().solve(&cfg()).unwrap();
        assert_eq!(out.objective, Some(0.0));
    }

    #[test]
    fn resolve_is_deterministic() {
        let mut mb = ModelBuilder::new("det", Sense::Maximize);
        let vars: Vec<_> = (0..6).map(|i| mb.add_binary(format!("b{i}"))).collect();
        for (i, &v) in vars.iter().enumerate() {
            mb.add_objective_term(v, 1.0 + i as f64 * 0.5);
        }
        mb.add_le_row(
            "cap",
            vars.iter().enumerate().map(|(i, &v)| (v, 1.0 + i as f64)).collect(),
            7.0,
        );
        let model = mb.build().unwrap();
        let a = model.solve(&cfg()).unwrap();
        let b = model.solve(&cfg()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn solution_satisfies_all_rows() {
        let mut mb = ModelBuilder::new("feas", Sense::Minimize);
        let x = mb.add_continuous("x", 0.0, 4.0);
        let y = mb.add_binary("y");
        mb.add_objective_term(x, 1.0);
        mb.add_objective_term(y, -3.0);
        mb.add_ge_row("link", 1.5, vec![(x, 1.0), (y, 1.0)]);
        let model = mb.build().unwrap();
        let out = model.solve(&cfg()).unwrap();
        let violations = model.violations(out.solution().unwrap(), 1e-6);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn bigm_slack_thresholds() {
        let mut mb = ModelBuilder::new("bigm", Sense::Minimize);
        let a = mb.add_continuous("a", -10.0, 0.0);
        let b = mb.add_continuous("b", -10.0, 0.0);
        mb.add_objective_term(a, 1.0); // driven to -10
        mb.add_objective_term(b, -1.0); // driven to 0
        let model = mb.build().unwrap();
        let out = model.solve(&cfg()).unwrap();
        let warnings = check_bigm_slack(&model, &out, &[a, b], 10.0, 0.01).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].var, "a");

        // All at zero: no warnings.
        let zeroed = SolveOutcome {
            values: Some(vec![0.0, 0.0]),
            ..out
        };
        assert!(check_bigm_slack(&model, &zeroed, &[a, b], 10.0, 0.01)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn build_rejects_nan_and_foreign_vars() {
        let mut mb = ModelBuilder::new("bad", Sense::Minimize);
        let x = mb.add_continuous("x", 0.0, 1.0);
        mb.add_le_row("nan", vec![(x, f64::NAN)], 1.0);
        assert!(matches!(
            mb.build(),
            Err(MilpError::NonFiniteCoefficient { .. })
        ));

        let mut mb = ModelBuilder::new("foreign", Sense::Minimize);
        mb.add_le_row("r", vec![(VarId(5), 1.0)], 1.0);
        assert!(matches!(mb.build(), Err(MilpError::UnknownVariable { .. })));
    }
}
