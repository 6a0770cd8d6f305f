//! Independent verification: exhaustive vertex enumeration, brute-force
//! worst-case search over recourse LPs, Monte-Carlo rare-event evaluation,
//! and full solution replay.
//!
//! The recourse LP here is built directly from the grid description, not
//! from the compact matrices, so it is an independent route against the
//! dualized big-M subproblem. Evaluation order is fixed and sequential;
//! every reported number is deterministic for a given seed.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulations::{Band, Budget, Commitment, FirstStageValues, ScenarioVertex};
use crate::grid::{PowerSystem, Ptdf};
use crate::milp::{self, ModelBuilder, Sense, SolverConfig, VarId};
use crate::risk::RiskModel;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("vertex set exceeds cap {0}")]
    VertexCapExceeded(usize),
    #[error("recourse LP unexpectedly {0}; slacks should make it always feasible")]
    RecourseNotSolved(String),
    #[error(transparent)]
    Milp(#[from] milp::MilpError),
    #[error("sample count must be >= 1")]
    NoSamples,
    #[error("rejection rate {0:.4} >= 0.999: reference band too wide for the error model")]
    RejectionRate(f64),
    #[error(transparent)]
    Risk(#[from] crate::risk::RiskError),
}

/// All vertices of the binary budget polytope, in lexicographic order of the
/// per-cell state (none < upper < lower), cells ordered farm-major.
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub vertices: Vec<ScenarioVertex>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Enumerates every scenario vertex within the budgets. `cap` bounds the
/// output size; generation prunes on the budget rows so the work is
/// proportional to the result.
pub fn enumerate_vertices(
    n_farms: usize,
    horizon: usize,
    budget: &Budget,
    cap: usize,
) -> Result<VertexSet, OracleError> {
    #[derive(Clone, Copy)]
    enum State {
        None,
        Upper,
        Lower,
    }
    let mut vertices = Vec::new();
    let mut up = vec![vec![false; horizon]; n_farms];
    let mut down = vec![vec![false; horizon]; n_farms];
    let mut row_used = vec![0u32; n_farms];
    let mut col_used = vec![0u32; horizon];
    let cells = n_farms * horizon;

    fn rec(
        cell: usize,
        cells: usize,
        horizon: usize,
        budget: &Budget,
        up: &mut [Vec<bool>],
        down: &mut [Vec<bool>],
        row_used: &mut [u32],
        col_used: &mut [u32],
        vertices: &mut Vec<ScenarioVertex>,
        cap: usize,
    ) -> Result<(), OracleError> {
        if cell == cells {
            if vertices.len() >= cap {
                return Err(OracleError::VertexCapExceeded(cap));
            }
            vertices.push(ScenarioVertex {
                up: up.to_vec(),
                down: down.to_vec(),
            });
            return Ok(());
        }
        let (m, t) = (cell / horizon, cell % horizon);
        for state in [State::None, State::Upper, State::Lower] {
            let deviates = !matches!(state, State::None);
            if deviates && (row_used[m] >= budget.gamma_t || col_used[t] >= budget.gamma_s) {
                continue;
            }
            match state {
                State::None => {}
                State::Upper => up[m][t] = true,
                State::Lower => down[m][t] = true,
            }
            if deviates {
                row_used[m] += 1;
                col_used[t] += 1;
            }
            let result = rec(
                cell + 1,
                cells,
                horizon,
                budget,
                up,
                down,
                row_used,
                col_used,
                vertices,
                cap,
            );
            if deviates {
                row_used[m] -= 1;
                col_used[t] -= 1;
            }
            up[m][t] = false;
            down[m][t] = false;
            result?;
        }
        Ok(())
    }

    rec(
        0,
        cells,
        horizon,
        budget,
        &mut up,
        &mut down,
        &mut row_used,
        &mut col_used,
        &mut vertices,
        cap,
    )?;
    Ok(VertexSet { vertices })
}

/// Result of one recourse dispatch against a realized wind trajectory.
#[derive(Debug, Clone)]
pub struct RecourseResult {
    /// Objective: total slack MW (unweighted) or total loss $ (weighted).
    pub objective: f64,
    /// Curtailment MW per farm and period.
    pub curtailment: Vec<Vec<f64>>,
    /// Shed load MW per load and period.
    pub shed: Vec<Vec<f64>>,
    /// Curtailment cost $ at the given prices (0 when unweighted).
    pub wgc_cost: f64,
    /// Shedding cost $ at the given prices (0 when unweighted).
    pub ls_cost: f64,
}

/// Solves the recourse LP for a fixed commitment and realized wind: minimal
/// curtailment plus shed load subject to capacity, ramping and the nodal
/// network model. `weights` switches the objective from MW slack to $ loss.
pub fn recourse_lp(
    system: &PowerSystem,
    commitment: &Commitment,
    realized: &[Vec<f64>],
    weights: Option<&crate::risk::Prices>,
    solver: &SolverConfig,
) -> Result<RecourseResult, OracleError> {
    let horizon = system.horizon;
    let mut mb = ModelBuilder::new("recourse", Sense::Minimize);

    // Dispatch bounds come directly from the frozen commitment.
    let p: Vec<Vec<VarId>> = system
        .generators
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            (0..horizon)
                .map(|t| {
                    let on = commitment.on[g][t];
                    let (lo, hi) = if on { (gen.p_min, gen.p_max) } else { (0.0, 0.0) };
                    mb.add_continuous(format!("p[{g},{t}]"), lo, hi)
                })
                .collect()
        })
        .collect();
    let theta: Vec<Vec<VarId>> = (0..system.n_buses())
        .map(|n| {
            (0..horizon)
                .map(|t| {
                    if n == system.reference {
                        mb.add_continuous(format!("th[{n},{t}]"), 0.0, 0.0)
                    } else {
                        mb.add_continuous(
                            format!("th[{n},{t}]"),
                            -std::f64::consts::PI,
                            std::f64::consts::PI,
                        )
                    }
                })
                .collect()
        })
        .collect();
    let dw: Vec<Vec<VarId>> = system
        .wind_farms
        .iter()
        .enumerate()
        .map(|(m, _)| {
            (0..horizon)
                .map(|t| mb.add_continuous(format!("dw[{m},{t}]"), 0.0, realized[m][t].max(0.0)))
                .collect()
        })
        .collect();
    let dd: Vec<Vec<VarId>> = system
        .loads
        .iter()
        .enumerate()
        .map(|(j, load)| {
            (0..horizon)
                .map(|t| mb.add_continuous(format!("dd[{j},{t}]"), 0.0, load.series[t]))
                .collect()
        })
        .collect();

    for (m, row) in dw.iter().enumerate() {
        for (t, &var) in row.iter().enumerate() {
            let w = weights.map_or(1.0, |p| p.curtailment[t]);
            mb.add_objective_term(var, w);
            let _ = m;
        }
    }
    for (j, row) in dd.iter().enumerate() {
        for (t, &var) in row.iter().enumerate() {
            let w = weights.map_or(1.0, |p| p.shedding[t]);
            mb.add_objective_term(var, w);
            let _ = j;
        }
    }

    // Ramping, including the boundary when the case pins an initial output.
    for (g, gen) in system.generators.iter().enumerate() {
        for t in 0..horizon.saturating_sub(1) {
            let u_next = commitment.value(g, t + 1);
            let u_t = commitment.value(g, t);
            mb.add_le_row(
                format!("rdn[{g},{t}]"),
                vec![(p[g][t], 1.0), (p[g][t + 1], -1.0)],
                u_next * gen.ramp_down + (1.0 - u_next) * gen.p_max,
            );
            mb.add_le_row(
                format!("rup[{g},{t}]"),
                vec![(p[g][t], -1.0), (p[g][t + 1], 1.0)],
                u_t * gen.ramp_up + (1.0 - u_t) * gen.p_max,
            );
        }
        if let Some(init) = gen.initial {
            if let Some(p0) = init.output_mw {
                let u1 = commitment.value(g, 0);
                mb.add_le_row(
                    format!("rdn0[{g}]"),
                    vec![(p[g][0], -1.0)],
                    u1 * gen.ramp_down + (1.0 - u1) * gen.p_max - p0,
                );
                let headroom = if init.on { gen.ramp_up } else { gen.p_max };
                mb.add_le_row(format!("rup0[{g}]"), vec![(p[g][0], 1.0)], p0 + headroom);
            }
        }
    }

    // Nodal balance and angle-difference flow limits.
    for n in 0..system.n_buses() {
        for t in 0..horizon {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for (g, gen) in system.generators.iter().enumerate() {
                if gen.bus == n {
                    terms.push((p[g][t], 1.0));
                }
            }
            let mut rhs = 0.0;
            for (m, farm) in system.wind_farms.iter().enumerate() {
                if farm.bus == n {
                    terms.push((dw[m][t], -1.0));
                    rhs -= realized[m][t].max(0.0);
                }
            }
            for (j, load) in system.loads.iter().enumerate() {
                if load.bus == n {
                    terms.push((dd[j][t], 1.0));
                    rhs += load.series[t];
                }
            }
            let mut coeff = vec![0.0; system.n_buses()];
            for line in &system.lines {
                if line.from == n {
                    coeff[n] -= line.susceptance;
                    coeff[line.to] += line.susceptance;
                } else if line.to == n {
                    coeff[n] -= line.susceptance;
                    coeff[line.from] += line.susceptance;
                }
            }
            for (o, c) in coeff.into_iter().enumerate() {
                if c != 0.0 {
                    terms.push((theta[o][t], c));
                }
            }
            mb.add_eq_row(format!("bal[{n},{t}]"), terms, rhs);
        }
    }
    for (l, line) in system.lines.iter().enumerate() {
        for t in 0..horizon {
            mb.add_row(
                format!("flow[{l},{t}]"),
                -line.capacity,
                vec![
                    (theta[line.from][t], line.susceptance),
                    (theta[line.to][t], -line.susceptance),
                ],
                line.capacity,
            );
        }
    }

    let model = mb.build()?;
    let out = model.solve(solver)?;
    if !out.is_optimal() {
        return Err(OracleError::RecourseNotSolved(format!("{:?}", out.status)));
    }
    let values = out.solution()?;
    let read = |vars: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
        vars.iter()
            .map(|row| row.iter().map(|v| values[v.index()]).collect())
            .collect()
    };
    let curtailment = read(&dw);
    let shed = read(&dd);
    let (mut wgc_cost, mut ls_cost) = (0.0, 0.0);
    if let Some(prices) = weights {
        for row in &curtailment {
            for (t, x) in row.iter().enumerate() {
                wgc_cost += prices.curtailment[t] * x;
            }
        }
        for row in &shed {
            for (t, x) in row.iter().enumerate() {
                ls_cost += prices.shedding[t] * x;
            }
        }
    }
    Ok(RecourseResult {
        objective: out.objective_value()?,
        curtailment,
        shed,
        wgc_cost,
        ls_cost,
    })
}

/// Exhaustive worst case: the maximal recourse residual over every vertex of
/// the budget polytope. Ties keep the lexicographically first vertex.
pub fn brute_force_worst_case(
    system: &PowerSystem,
    commitment: &Commitment,
    band: &Band,
    budget: &Budget,
    solver: &SolverConfig,
    cap: usize,
) -> Result<(f64, ScenarioVertex), OracleError> {
    let set = enumerate_vertices(system.n_wind_farms(), system.horizon, budget, cap)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_vertex = set.vertices[0].clone();
    for vertex in &set.vertices {
        let realized = vertex.realized_wind(system, band);
        let result = recourse_lp(system, commitment, &realized, None, solver)?;
        if result.objective > best {
            best = result.objective;
            best_vertex = vertex.clone();
        }
    }
    Ok((best, best_vertex))
}

/// Outcome of the rare-event Monte-Carlo evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_drawn: usize,
    /// Samples at least partly outside the reference band.
    pub n_kept: usize,
    pub avg_total_loss: f64,
    pub avg_wgc_loss: f64,
    pub avg_ls_loss: f64,
    /// Share of kept samples whose recourse LP failed (zero by construction).
    pub infeasible_share: f64,
}

/// Draws Gaussian error trajectories, keeps those escaping the reference
/// band, and averages the cost-weighted recourse loss over the kept set.
pub fn monte_carlo_rare_event_loss(
    system: &PowerSystem,
    commitment: &Commitment,
    reference_band: &Band,
    risk_model: &RiskModel,
    n: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<EvaluationReport, OracleError> {
    if n == 0 {
        return Err(OracleError::NoSamples);
    }
    let horizon = system.horizon;
    let n_farms = system.n_wind_farms();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut kept = 0usize;
    let mut infeasible = 0usize;
    let (mut sum_total, mut sum_wgc, mut sum_ls) = (0.0, 0.0, 0.0);
    let mut realized = vec![vec![0.0; horizon]; n_farms];
    for _ in 0..n {
        let mut outside = false;
        for (m, farm) in system.wind_farms.iter().enumerate() {
            for t in 0..horizon {
                let sigma = risk_model.sigma[m][t];
                let delta = if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("positive sigma").sample(&mut rng)
                } else {
                    0.0
                };
                let w = (farm.forecast[t] + delta).clamp(0.0, farm.w_max);
                realized[m][t] = w;
                if w < reference_band.lower[m][t] - 1e-12 || w > reference_band.upper[m][t] + 1e-12
                {
                    outside = true;
                }
            }
        }
        if !outside {
            continue;
        }
        kept += 1;
        match recourse_lp(system, commitment, &realized, Some(&risk_model.prices), solver) {
            Ok(result) => {
                sum_total += result.wgc_cost + result.ls_cost;
                sum_wgc += result.wgc_cost;
                sum_ls += result.ls_cost;
            }
            Err(OracleError::RecourseNotSolved(_)) => infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    let rejected = n - kept;
    if kept == 0 || rejected as f64 / n as f64 >= 0.999 {
        return Err(OracleError::RejectionRate(rejected as f64 / n as f64));
    }
    Ok(EvaluationReport {
        n_drawn: n,
        n_kept: kept,
        avg_total_loss: sum_total / kept as f64,
        avg_wgc_loss: sum_wgc / kept as f64,
        avg_ls_loss: sum_ls / kept as f64,
        infeasible_share: infeasible as f64 / kept as f64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub items: Vec<VerdictItem>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

pub struct VerifyParams {
    /// Tolerance for constraint replay, MW / $.
    pub replay_tol: f64,
    /// Robust feasibility certificate threshold, MW.
    pub eps_feasibility: f64,
    /// Vertex enumeration cap for the brute-force item.
    pub vertex_cap: usize,
    /// Risk budget the solution claims to satisfy.
    pub risk_cap: Option<f64>,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            replay_tol: 1e-5,
            eps_feasibility: 1e-3,
            vertex_cap: 20_000,
            risk_cap: None,
        }
    }
}

/// Largest envelope under-approximation error, scanned per farm and period.
pub fn envelope_gap_bound(system: &PowerSystem, risk_model: &RiskModel) -> f64 {
    let grid = 200;
    let mut bound = 0.0;
    for (m, farm) in system.wind_farms.iter().enumerate() {
        for t in 0..system.horizon {
            let set = risk_model.tangents.set(m, t);
            let w_hat = farm.forecast[t];
            let mut worst = 0.0f64;
            for i in 0..=grid {
                let frac = i as f64 / grid as f64;
                let wu = w_hat + frac * (farm.w_max - w_hat);
                let exact = risk_model
                    .risk_exact_at(system, m, t, wu, 0.0)
                    .unwrap_or(0.0);
                worst = worst.max(exact - set.envelope_upper(wu).max(0.0));
                let wl = frac * w_hat;
                let exact = risk_model
                    .risk_exact_at(system, m, t, farm.w_max, wl)
                    .unwrap_or(0.0);
                worst = worst.max(exact - set.envelope_lower(wl).max(0.0));
            }
            bound += worst;
        }
    }
    bound
}

/// Replays every first-stage constraint, re-verifies robust feasibility by
/// brute force, and checks the claimed risk terms against the exact
/// integrals. Returns findings, not errors.
pub fn verify_solution(
    system: &PowerSystem,
    ptdf: &Ptdf,
    risk_model: &RiskModel,
    budget: &Budget,
    solution: &FirstStageValues,
    params: &VerifyParams,
    solver: &SolverConfig,
) -> Result<Verdict, OracleError> {
    let horizon = system.horizon;
    let tol = params.replay_tol;
    let mut items = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        items.push(VerdictItem {
            name: name.to_string(),
            pass,
            detail,
        });
    };

    // Schedule replay: startup indicators and minimum up/down windows.
    let mut schedule_ok = true;
    let mut schedule_notes = Vec::new();
    for (g, gen) in system.generators.iter().enumerate() {
        let on = &solution.commitment.on[g];
        let start = &solution.startup[g];
        let init_on = gen.initial.map(|s| s.on);
        for t in 0..horizon {
            let prev = if t > 0 {
                Some(on[t - 1])
            } else {
                init_on
            };
            if let Some(prev) = prev {
                if on[t] && !prev && !start[t] {
                    schedule_ok = false;
                    schedule_notes.push(format!("{}: missing startup at t{}", gen.id, t + 1));
                }
                // Window checks on state changes.
                if on[t] && !prev {
                    for k in t..(t + gen.min_on as usize).min(horizon) {
                        if !on[k] {
                            schedule_ok = false;
                            schedule_notes
                                .push(format!("{}: min-up violated at t{}", gen.id, k + 1));
                        }
                    }
                }
                if !on[t] && prev {
                    for k in t..(t + gen.min_off as usize).min(horizon) {
                        if on[k] {
                            schedule_ok = false;
                            schedule_notes
                                .push(format!("{}: min-down violated at t{}", gen.id, k + 1));
                        }
                    }
                }
            }
        }
        if let Some(init) = gen.initial {
            let residual = if init.on {
                gen.min_on.saturating_sub(init.hours)
            } else {
                gen.min_off.saturating_sub(init.hours)
            };
            for t in 0..(residual as usize).min(horizon) {
                if on[t] != init.on {
                    schedule_ok = false;
                    schedule_notes.push(format!("{}: residual initial state violated", gen.id));
                }
            }
        }
    }
    push("schedule-replay", schedule_ok, schedule_notes.join("; "));

    // Dispatch replay: capacity, ramps, balance, flows, band ordering.
    let mut dispatch_ok = true;
    let mut dispatch_notes = Vec::new();
    for (g, gen) in system.generators.iter().enumerate() {
        for t in 0..horizon {
            let u = solution.commitment.value(g, t);
            let p = solution.dispatch[g][t];
            if p < u * gen.p_min - tol || p > u * gen.p_max + tol {
                dispatch_ok = false;
                dispatch_notes.push(format!("{}: capacity violated at t{}", gen.id, t + 1));
            }
            if t + 1 < horizon {
                let u_next = solution.commitment.value(g, t + 1);
                let p_next = solution.dispatch[g][t + 1];
                if p - p_next > u_next * gen.ramp_down + (1.0 - u_next) * gen.p_max + tol
                    || p_next - p > u * gen.ramp_up + (1.0 - u) * gen.p_max + tol
                {
                    dispatch_ok = false;
                    dispatch_notes.push(format!("{}: ramp violated at t{}", gen.id, t + 1));
                }
            }
        }
    }
    for t in 0..horizon {
        let gen_total: f64 = (0..system.n_generators()).map(|g| solution.dispatch[g][t]).sum();
        let imbalance = gen_total + system.total_forecast(t) - system.total_demand(t);
        if imbalance.abs() > tol {
            dispatch_ok = false;
            dispatch_notes.push(format!("balance off by {imbalance:.3e} at t{}", t + 1));
        }
        for (l, line) in system.lines.iter().enumerate() {
            let mut flow = 0.0;
            for (g, gen) in system.generators.iter().enumerate() {
                flow += ptdf.factor(l, gen.bus) * solution.dispatch[g][t];
            }
            for (m, farm) in system.wind_farms.iter().enumerate() {
                flow += ptdf.factor(l, farm.bus) * farm.forecast[t];
                let _ = m;
            }
            for load in &system.loads {
                flow -= ptdf.factor(l, load.bus) * load.series[t];
            }
            if flow.abs() > line.capacity + tol {
                dispatch_ok = false;
                dispatch_notes.push(format!("line {} overloaded at t{}", line.id, t + 1));
            }
        }
    }
    for (m, farm) in system.wind_farms.iter().enumerate() {
        for t in 0..horizon {
            let (wu, wl) = (solution.band.upper[m][t], solution.band.lower[m][t]);
            if !(-tol..=farm.forecast[t] + tol).contains(&wl)
                || wu < farm.forecast[t] - tol
                || wu > farm.w_max + tol
            {
                dispatch_ok = false;
                dispatch_notes.push(format!("band ordering violated at farm {m}, t{}", t + 1));
            }
        }
    }
    push("dispatch-replay", dispatch_ok, dispatch_notes.join("; "));

    // Risk rows: Q dominates every tangent, and the budget holds.
    let mut risk_rows_ok = true;
    let mut risk_notes = Vec::new();
    for m in 0..system.n_wind_farms() {
        for t in 0..horizon {
            let set = risk_model.tangents.set(m, t);
            let envelope_up = set.envelope_upper(solution.band.upper[m][t]);
            if solution.q_pos[m][t] < envelope_up - tol {
                risk_rows_ok = false;
                risk_notes.push(format!("q_pos below envelope at farm {m}, t{}", t + 1));
            }
            let envelope_dn = set.envelope_lower(solution.band.lower[m][t]);
            if solution.q_neg[m][t] < envelope_dn - tol {
                risk_rows_ok = false;
                risk_notes.push(format!("q_neg below envelope at farm {m}, t{}", t + 1));
            }
        }
    }
    if let Some(cap) = params.risk_cap {
        if solution.risk_envelope > cap + tol {
            risk_rows_ok = false;
            risk_notes.push(format!(
                "risk envelope {} exceeds budget {cap}",
                solution.risk_envelope
            ));
        }
    }
    push("risk-rows", risk_rows_ok, risk_notes.join("; "));

    // Independent robustness certificate.
    let (worst, vertex) = brute_force_worst_case(
        system,
        &solution.commitment,
        &solution.band,
        budget,
        solver,
        params.vertex_cap,
    )?;
    push(
        "robust-feasibility",
        worst <= params.eps_feasibility + 1e-7,
        format!("worst residual {worst:.3e} MW at {vertex:?}"),
    );

    // Claimed envelope vs exact risk: the envelope may undercut the exact
    // integral by at most the measured PWL gap.
    let exact = risk_model.band_risk_total(system, &solution.band.upper, &solution.band.lower)?;
    let gap_bound = envelope_gap_bound(system, risk_model);
    let under = exact - solution.risk_envelope;
    push(
        "risk-gap",
        (-tol..=gap_bound + tol).contains(&under),
        format!(
            "exact {exact:.4} vs envelope {:.4} (allowed gap {gap_bound:.4})",
            solution.risk_envelope
        ),
    );

    Ok(Verdict { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn budget(gamma_t: u32, gamma_s: u32) -> Budget {
        Budget { gamma_t, gamma_s }
    }

    #[test]
    fn vertex_counts_match_combinatorics() {
        // Zero budget: only the all-zero vertex.
        let set = enumerate_vertices(2, 2, &budget(0, 0), 100).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.vertices[0].is_zero());

        // Derived by filtering all 3^4 sign matrices by at most one nonzero
        // per row and per column: 1 + 8 + 8 = 17.
        let brute = {
            let mut count = 0;
            for assignment in 0..81u32 {
                let mut states = [0u32; 4];
                let mut a = assignment;
                for s in states.iter_mut() {
                    *s = a % 3;
                    a /= 3;
                }
                let row_ok = (0..2).all(|m| {
                    (0..2).filter(|&t| states[m * 2 + t] != 0).count() <= 1
                });
                let col_ok = (0..2).all(|t| {
                    (0..2).filter(|&m| states[m * 2 + t] != 0).count() <= 1
                });
                if row_ok && col_ok {
                    count += 1;
                }
            }
            count
        };
        assert_eq!(brute, 17);
        let set = enumerate_vertices(2, 2, &budget(1, 1), 100).unwrap();
        assert_eq!(set.len(), brute);

        // Slack budgets: the full 3^(MT) grid.
        let set = enumerate_vertices(2, 2, &budget(2, 2), 100).unwrap();
        assert_eq!(set.len(), 81);

        // Cap enforcement.
        assert!(matches!(
            enumerate_vertices(2, 2, &budget(2, 2), 10),
            Err(OracleError::VertexCapExceeded(10))
        ));
    }

    #[test]
    fn vertices_are_lexicographic_and_budget_clean() {
        let b = budget(1, 1);
        let set = enumerate_vertices(2, 2, &b, 100).unwrap();
        for v in &set.vertices {
            v.satisfies(&b).unwrap();
        }
        let keys: Vec<Vec<u8>> = set
            .vertices
            .iter()
            .map(|v| {
                let mut key = Vec::new();
                for m in 0..2 {
                    for t in 0..2 {
                        key.push(if v.up[m][t] {
                            1
                        } else if v.down[m][t] {
                            2
                        } else {
                            0
                        });
                    }
                }
                key
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    /// Expected values from the one-row hand LP: gen on [0,100], demand 50,
    /// realized wind 60 spills 10 MW; weighting by 20 $/MWh prices it at 200 $.
    #[test]
    fn recourse_lp_hand_examples() {
        let system = fixtures::subproblem_single_bus();
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let solver = SolverConfig::default();

        // Forecast is absorbed exactly.
        let at_forecast = recourse_lp(&system, &commitment, &[vec![20.0]], None, &solver).unwrap();
        assert_abs_diff_eq!(at_forecast.objective, 0.0, epsilon = 1e-9);

        let spill = recourse_lp(&system, &commitment, &[vec![60.0]], None, &solver).unwrap();
        assert_abs_diff_eq!(spill.objective, 10.0, epsilon = 1e-8);
        assert_abs_diff_eq!(spill.curtailment[0][0], 10.0, epsilon = 1e-8);
        assert_abs_diff_eq!(spill.shed[0][0], 0.0, epsilon = 1e-8);

        let prices = fixtures::flat_prices(&system, 20.0, 100.0);
        let weighted =
            recourse_lp(&system, &commitment, &[vec![60.0]], Some(&prices), &solver).unwrap();
        assert_abs_diff_eq!(weighted.objective, 200.0, epsilon = 1e-6);
        assert_abs_diff_eq!(weighted.wgc_cost, 200.0, epsilon = 1e-6);
    }

    #[test]
    fn brute_force_matches_worked_example() {
        let system = fixtures::subproblem_single_bus();
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let mut band = Band::at_forecast(&system);
        band.upper[0][0] = 60.0;
        band.lower[0][0] = 0.0;
        let solver = SolverConfig::default();
        let (r, vertex) =
            brute_force_worst_case(&system, &commitment, &band, &budget(1, 1), &solver, 100)
                .unwrap();
        assert_abs_diff_eq!(r, 10.0, epsilon = 1e-8);
        assert!(vertex.up[0][0]);

        // Zero budget: forecast only, residual zero.
        let (r, vertex) =
            brute_force_worst_case(&system, &commitment, &band, &budget(0, 0), &solver, 100)
                .unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-9);
        assert!(vertex.is_zero());
    }

    #[test]
    fn monte_carlo_is_deterministic_and_couples_monotonically() {
        let instance = fixtures::single_wind_instance();
        let system = &instance.system;
        let risk_model =
            crate::risk::build_risk_model(system, &instance.risk, &instance.prices).unwrap();
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let solver = SolverConfig::default();
        let narrow = Band::at_forecast(system);
        let a = monte_carlo_rare_event_loss(system, &commitment, &narrow, &risk_model, 200, 7, &solver)
            .unwrap();
        let b = monte_carlo_rare_event_loss(system, &commitment, &narrow, &risk_model, 200, 7, &solver)
            .unwrap();
        assert_eq!(a, b);

        // Wider reference band keeps fewer samples; on the shared stream the
        // total kept loss cannot grow.
        let mut wider = narrow.clone();
        wider.upper[0][0] = 40.0;
        wider.lower[0][0] = 10.0;
        let c = monte_carlo_rare_event_loss(system, &commitment, &wider, &risk_model, 200, 7, &solver)
            .unwrap();
        assert!(c.n_kept <= a.n_kept);
        let total_a = a.avg_total_loss * a.n_kept as f64;
        let total_c = c.avg_total_loss * c.n_kept as f64;
        assert!(total_c <= total_a + 1e-9);
        assert_abs_diff_eq!(
            a.avg_total_loss,
            a.avg_wgc_loss + a.avg_ls_loss,
            epsilon = 1e-9
        );
    }

    #[test]
    fn full_band_rejects_everything() {
        let instance = fixtures::single_wind_instance();
        let system = &instance.system;
        let risk_model =
            crate::risk::build_risk_model(system, &instance.risk, &instance.prices).unwrap();
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let err = monte_carlo_rare_event_loss(
            system,
            &commitment,
            &Band::full(system),
            &risk_model,
            100,
            3,
            &SolverConfig::default(),
        );
        assert!(matches!(err, Err(OracleError::RejectionRate(_))));
    }

    #[test]
    fn zero_width_band_with_ample_flexibility_has_zero_loss() {
        // Every sample is kept, and the oversized generator absorbs all of
        // them without curtailment or shedding.
        let instance = fixtures::over_capacity_instance();
        let system = &instance.system;
        let risk_model =
            crate::risk::build_risk_model(system, &instance.risk, &instance.prices).unwrap();
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let report = monte_carlo_rare_event_loss(
            system,
            &commitment,
            &Band::at_forecast(system),
            &risk_model,
            100,
            3,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(report.n_kept, 100);
        assert_abs_diff_eq!(report.avg_total_loss, 0.0, epsilon = 1e-9);
    }
}
