//! The feasibility-and-admissibility checking subproblem as a big-M MILP.
//!
//! The inner recourse LP (minimize total slack subject to the compact rows)
//! is replaced by its dual, which leaves bilinear terms dual-times-binary in
//! the objective. Each structural product gets one auxiliary variable tied to
//! its dual and binary by big-M rows; duals of inequality rows are
//! sign-constrained, duals of equality rows are free and get the two-sided
//! variant of the same rows.

use crate::milp::{self, ModelBuilder, Sense, SolveOutcome, SolverConfig, VarId};

use super::compact::{CompactForm, RowSense};
use super::{Band, Budget, Commitment, FormError, ScenarioVertex};

/// The built subproblem and the variable maps needed to read it back.
pub struct SubproblemArtifacts {
    pub model: milp::Model,
    /// Binary deviation indicators, indexed like the compact v vector.
    pub v_vars: Vec<VarId>,
    /// Dual variables, one per compact row.
    pub dual_vars: Vec<VarId>,
    /// Product auxiliaries, one per structural product.
    pub aux_vars: Vec<VarId>,
    horizon: usize,
    n_farms: usize,
}

impl SubproblemArtifacts {
    pub fn binary_count(&self) -> usize {
        self.v_vars.len()
    }

    pub fn dual_count(&self) -> usize {
        self.dual_vars.len()
    }

    pub fn aux_count(&self) -> usize {
        self.aux_vars.len()
    }

    /// Rounds the v solution into a scenario vertex.
    pub fn vertex_from(&self, outcome: &SolveOutcome) -> Result<ScenarioVertex, FormError> {
        let values = outcome.solution()?;
        let mut vertex = ScenarioVertex::zero(self.n_farms, self.horizon);
        for (idx, &var) in self.v_vars.iter().enumerate() {
            if values[var.index()] > 0.5 {
                let (m, t, side) = super::wv_unpack(idx, self.horizon);
                match side {
                    super::BandSide::Upper => vertex.up[m][t] = true,
                    super::BandSide::Lower => vertex.down[m][t] = true,
                }
            }
        }
        Ok(vertex)
    }

    /// Dual values per compact row (the eta vector of the nodal form).
    pub fn duals_from(&self, outcome: &SolveOutcome) -> Result<Vec<f64>, FormError> {
        let values = outcome.solution()?;
        Ok(self.dual_vars.iter().map(|v| values[v.index()]).collect())
    }

    /// Big-M audit over every bounded dual and auxiliary.
    pub fn bigm_warnings(
        &self,
        outcome: &SolveOutcome,
        big_m: f64,
        margin: f64,
    ) -> Result<Vec<milp::BigMWarning>, FormError> {
        let mut refs = self.dual_vars.clone();
        refs.extend(&self.aux_vars);
        Ok(milp::check_bigm_slack(&self.model, outcome, &refs, big_m, margin)?)
    }
}

/// Assembles the dualized checking subproblem for a fixed commitment and
/// band. Maximization: a positive optimum is the worst-case residual slack
/// (MW) over the budget polytope; zero certifies robust feasibility.
pub fn build_subproblem(
    form: &CompactForm,
    commitment: &Commitment,
    band: &Band,
    budget: &Budget,
    config: &SolverConfig,
) -> Result<SubproblemArtifacts, FormError> {
    let horizon = form.horizon();
    let n_farms = form.v_dim / (2 * horizon.max(1));
    if commitment.on.len() * horizon != form.x_dim {
        return Err(FormError::Dimension(format!(
            "commitment has {} entries, compact form expects {}",
            commitment.on.len() * horizon,
            form.x_dim
        )));
    }
    if band.upper.len() != n_farms || band.lower.len() != n_farms {
        return Err(FormError::Dimension(format!(
            "band covers {} farms, compact form expects {n_farms}",
            band.upper.len()
        )));
    }
    let w_flat = band.flatten(horizon);
    let big_m = config.big_m;

    let mut mb = ModelBuilder::new("facsp", Sense::Maximize);

    let v_vars: Vec<VarId> = (0..form.v_dim)
        .map(|idx| {
            let (m, t, side) = super::wv_unpack(idx, horizon);
            let tag = match side {
                super::BandSide::Upper => "u",
                super::BandSide::Lower => "l",
            };
            mb.add_binary(format!("v{tag}[{m},{t}]"))
        })
        .collect();

    // Duals: lambda_i <= 0 for inequality rows, free (within +-M) for
    // equality rows. Objective carries g_i - E_i * u.
    let mut dual_vars = Vec::with_capacity(form.rows.len());
    for row in &form.rows {
        let (lo, hi) = match row.sense {
            RowSense::Le => (-big_m, 0.0),
            RowSense::Eq => (-big_m, big_m),
        };
        let var = mb.add_continuous(format!("dual[{}]", row.name), lo, hi);
        let fixed_rhs: f64 = row.rhs
            - row
                .x
                .iter()
                .map(|&(c, coeff)| coeff * commitment.value(c / horizon, c % horizon))
                .sum::<f64>();
        mb.add_objective_term(var, fixed_rhs);
        dual_vars.push(var);
    }

    // Product auxiliaries gamma = lambda * v with their big-M coupling rows.
    let mut aux_vars = Vec::with_capacity(form.products.len());
    for (p_idx, product) in form.products.iter().enumerate() {
        let row = &form.rows[product.row];
        let (lo, hi) = match row.sense {
            RowSense::Le => (-big_m, 0.0),
            RowSense::Eq => (-big_m, big_m),
        };
        let aux = mb.add_continuous(format!("aux[{p_idx}]"), lo, hi);
        let lambda = dual_vars[product.row];
        let v = v_vars[product.v_col];
        // -M v <= gamma, and for free duals also gamma <= M v.
        mb.add_ge_row(
            format!("bigm_av_lo[{p_idx}]"),
            0.0,
            vec![(aux, 1.0), (v, big_m)],
        );
        if row.sense == RowSense::Eq {
            mb.add_le_row(format!("bigm_av_hi[{p_idx}]"), vec![(aux, 1.0), (v, -big_m)], 0.0);
        }
        // -M (1 - v) <= lambda - gamma, and symmetrically for free duals.
        mb.add_ge_row(
            format!("bigm_lg_lo[{p_idx}]"),
            -big_m,
            vec![(lambda, 1.0), (aux, -1.0), (v, -big_m)],
        );
        if row.sense == RowSense::Eq {
            mb.add_le_row(
                format!("bigm_lg_hi[{p_idx}]"),
                vec![(lambda, 1.0), (aux, -1.0), (v, big_m)],
                big_m,
            );
        } else {
            mb.add_le_row(format!("bigm_lg_hi[{p_idx}]"), vec![(lambda, 1.0), (aux, -1.0)], 0.0);
        }
        mb.add_objective_term(aux, -form.product_cost(product, &w_flat));
        aux_vars.push(aux);
    }

    // Dual feasibility: one row per inner column; <= 0 costs for dispatch,
    // equality for free angle columns, <= 1 for unit-penalty slacks.
    let mut y_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); form.y_cols.len()];
    let mut s_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); form.s_cols.len()];
    for (i, row) in form.rows.iter().enumerate() {
        for &(c, coeff) in &row.y {
            y_terms[c].push((dual_vars[i], coeff));
        }
        for &(c, coeff) in &row.s {
            s_terms[c].push((dual_vars[i], coeff));
        }
    }
    for (c, terms) in y_terms.into_iter().enumerate() {
        let col = &form.y_cols[c];
        if col.nonneg {
            mb.add_le_row(format!("dualfeas_y[{}]", col.name), terms, 0.0);
        } else {
            mb.add_eq_row(format!("dualfeas_y[{}]", col.name), terms, 0.0);
        }
    }
    for (c, terms) in s_terms.into_iter().enumerate() {
        mb.add_le_row(format!("dualfeas_s[{}]", form.s_cols[c].name), terms, 1.0);
    }

    // Budget polytope rows over v.
    for m in 0..n_farms {
        let terms: Vec<_> = (0..horizon)
            .flat_map(|t| {
                [
                    (v_vars[super::wv_index(m, t, super::BandSide::Upper, horizon)], 1.0),
                    (v_vars[super::wv_index(m, t, super::BandSide::Lower, horizon)], 1.0),
                ]
            })
            .collect();
        mb.add_le_row(format!("budget_t[{m}]"), terms, budget.gamma_t as f64);
    }
    for t in 0..horizon {
        if n_farms == 0 {
            break;
        }
        let terms: Vec<_> = (0..n_farms)
            .flat_map(|m| {
                [
                    (v_vars[super::wv_index(m, t, super::BandSide::Upper, horizon)], 1.0),
                    (v_vars[super::wv_index(m, t, super::BandSide::Lower, horizon)], 1.0),
                ]
            })
            .collect();
        mb.add_le_row(format!("budget_s[{t}]"), terms, budget.gamma_s as f64);
    }
    for m in 0..n_farms {
        for t in 0..horizon {
            mb.add_le_row(
                format!("one_side[{m},{t}]"),
                vec![
                    (v_vars[super::wv_index(m, t, super::BandSide::Upper, horizon)], 1.0),
                    (v_vars[super::wv_index(m, t, super::BandSide::Lower, horizon)], 1.0),
                ],
                1.0,
            );
        }
    }

    Ok(SubproblemArtifacts {
        model: mb.build()?,
        v_vars,
        dual_vars,
        aux_vars,
        horizon,
        n_farms,
    })
}
