//! The iterative algorithms: classic column-and-constraint generation (A1),
//! the nodal-subproblem variant (A2), and the feasibility-cut-accelerated
//! variant (A3), plus admissibility assessment for frozen commitments and
//! risk-level sweeps.
//!
//! One run alternates master and checking subproblem until the worst-case
//! residual drops below the feasibility tolerance. Models are rebuilt each
//! iteration; a run is a single sequential loop and independent runs may
//! execute concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulations::{
    assemble_compact, build_duc, build_master, build_subproblem, feasibility_cut,
    master::MasterMode, Band, Budget, Commitment, CompactForms, CostBreakdown, FeasibilityCut,
    FirstStageValues, FormError, MasterConfig, ScenarioVertex,
};
use crate::grid::{compute_ptdf, GridError, PowerSystem, Ptdf};
use crate::milp::{MilpError, SolveStatus, SolverConfig};
use crate::oracles::{enumerate_vertices, OracleError};
use crate::risk::{build_risk_model, RiskConfig, RiskError, RiskModel};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("subproblem returned an already-cut vertex at iteration {0} with residual {1}")]
    RepeatedVertex(usize, f64),
    #[error("commitment is infeasible even at the forecast; no admissible band exists")]
    CommitmentInfeasible,
    #[error("master solve ended with unexpected status {0:?} at iteration {1}")]
    UnexpectedStatus(SolveStatus, usize),
    #[error("every level in the sweep is infeasible")]
    AllLevelsInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    A1,
    A2,
    A3,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::A1 => "a1",
            Algorithm::A2 => "a2",
            Algorithm::A3 => "a3",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Stop when the worst-case residual drops to this many MW.
    pub eps_feasibility_mw: f64,
    /// Optional literal successive-residual rule |R_{k+1} - R_k| < eps.
    pub eps_paper: Option<f64>,
    pub max_iterations: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            eps_feasibility_mw: 1e-3,
            eps_paper: None,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    InfeasibleRiskLevel,
    IterationLimit,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationRule {
    ResidualBelowTolerance,
    PaperDeltaRule,
}

/// One master/subproblem alternation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub master_objective: f64,
    /// Worst-case residual slack R, MW.
    pub subproblem_residual: f64,
    /// Vertex added after this iteration (none on the closing iteration).
    pub vertex: Option<ScenarioVertex>,
    pub master_secs: f64,
    pub subproblem_secs: f64,
    pub scenario_cuts: usize,
    pub feasibility_cuts: usize,
    pub bigm_warnings: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub on: Vec<Vec<bool>>,
    pub start: Vec<Vec<bool>>,
    pub dispatch: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RrucSolution {
    pub status: RunStatus,
    pub termination: Option<TerminationRule>,
    pub algorithm: String,
    pub objective: Option<f64>,
    pub costs: Option<CostBreakdown>,
    pub first_stage: Option<FirstStageValues>,
    pub iterations: Vec<IterationRecord>,
}

impl RrucSolution {
    pub fn schedule(&self) -> Option<Schedule> {
        self.first_stage.as_ref().map(|fs| Schedule {
            on: fs.commitment.on.clone(),
            start: fs.startup.clone(),
            dispatch: fs.dispatch.clone(),
        })
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn total_master_secs(&self) -> f64 {
        self.iterations.iter().map(|r| r.master_secs).sum()
    }

    pub fn total_subproblem_secs(&self) -> f64 {
        self.iterations.iter().map(|r| r.subproblem_secs).sum()
    }
}

/// Everything a run needs. Build once via [`RrucProblem::prepare`] and share
/// across algorithms, sweeps and verification.
pub struct RrucProblem {
    pub system: PowerSystem,
    pub ptdf: Ptdf,
    pub forms: CompactForms,
    pub risk_model: RiskModel,
    pub budget: Budget,
    pub penalty_k: f64,
    pub risk_cap: Option<f64>,
    pub cost_segments: usize,
    pub width_tiebreak: f64,
    pub solver: SolverConfig,
    pub convergence: ConvergenceConfig,
    pub vertex_cap: usize,
}

impl RrucProblem {
    pub fn prepare(
        system: PowerSystem,
        risk_config: &RiskConfig,
        prices: &crate::risk::Prices,
        budget: Budget,
        penalty_k: f64,
        risk_cap: Option<f64>,
        solver: SolverConfig,
        convergence: ConvergenceConfig,
    ) -> Result<Self, EngineError> {
        let ptdf = compute_ptdf(&system)?;
        let forms = assemble_compact(&system, &ptdf);
        let risk_model = build_risk_model(&system, risk_config, prices)?;
        Ok(Self {
            system,
            ptdf,
            forms,
            risk_model,
            budget,
            penalty_k,
            risk_cap,
            cost_segments: 4,
            width_tiebreak: 1e-6,
            solver,
            convergence,
            vertex_cap: 20_000,
        })
    }

    fn master_config(&self, mode: MasterMode) -> MasterConfig {
        MasterConfig {
            mode,
            penalty_k: self.penalty_k,
            risk_cap: self.risk_cap,
            cost_segments: self.cost_segments,
            width_tiebreak: self.width_tiebreak,
        }
    }
}

/// Runs one C&CG variant to convergence.
pub fn run(problem: &RrucProblem, algorithm: Algorithm) -> Result<RrucSolution, EngineError> {
    run_with_mode(problem, algorithm, MasterMode::Rruc)
}

pub fn run_a1(problem: &RrucProblem) -> Result<RrucSolution, EngineError> {
    run(problem, Algorithm::A1)
}

pub fn run_a2(problem: &RrucProblem) -> Result<RrucSolution, EngineError> {
    run(problem, Algorithm::A2)
}

pub fn run_a3(problem: &RrucProblem) -> Result<RrucSolution, EngineError> {
    run(problem, Algorithm::A3)
}

/// The shared master/subproblem loop. The master mode distinguishes the full
/// problem from the fixed-band baseline and the admissibility assessment.
fn run_with_mode(
    problem: &RrucProblem,
    algorithm: Algorithm,
    mode: MasterMode,
) -> Result<RrucSolution, EngineError> {
    let with_risk = matches!(mode, MasterMode::Rruc | MasterMode::RiskOnly(_));
    let tangents = with_risk.then_some(&problem.risk_model.tangents);
    let config = problem.master_config(mode);
    let sub_form = match algorithm {
        Algorithm::A1 => &problem.forms.ptdf,
        Algorithm::A2 | Algorithm::A3 => &problem.forms.nodal,
    };

    let mut cuts: Vec<ScenarioVertex> = Vec::new();
    let mut fcuts: Vec<FeasibilityCut> = Vec::new();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut prev_residual: Option<f64> = None;
    let mut last: Option<(FirstStageValues, CostBreakdown, f64)> = None;

    let mut status = RunStatus::IterationLimit;
    let mut termination = None;
    for index in 1..=problem.convergence.max_iterations {
        let master = build_master(
            &problem.system,
            &problem.ptdf,
            &problem.forms.ptdf,
            tangents,
            &config,
            &cuts,
            &fcuts,
        )?;
        let master_out = master.model.solve(&problem.solver)?;
        match master_out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Ok(RrucSolution {
                    status: RunStatus::InfeasibleRiskLevel,
                    termination: None,
                    algorithm: algorithm.name().into(),
                    objective: None,
                    costs: None,
                    first_stage: None,
                    iterations: records,
                });
            }
            SolveStatus::TimeLimit { .. } => {
                status = RunStatus::TimeLimit;
                break;
            }
            other => return Err(EngineError::UnexpectedStatus(other, index)),
        }
        let master_objective = master_out.objective_value()?;
        let first_stage = master.first_stage(&master_out)?;
        let costs = master.cost_breakdown(&master_out)?;

        let sub = build_subproblem(
            sub_form,
            &first_stage.commitment,
            &first_stage.band,
            &problem.budget,
            &problem.solver,
        )?;
        let sub_out = sub.model.solve(&problem.solver)?;
        if let SolveStatus::TimeLimit { .. } = sub_out.status {
            status = RunStatus::TimeLimit;
            last = Some((first_stage, costs, master_objective));
            break;
        }
        if !sub_out.is_optimal() {
            return Err(EngineError::UnexpectedStatus(sub_out.status.clone(), index));
        }
        let residual = sub_out.objective_value()?;
        let warnings = sub.bigm_warnings(&sub_out, problem.solver.big_m, 0.01)?;

        let mut record = IterationRecord {
            index,
            master_objective,
            subproblem_residual: residual,
            vertex: None,
            master_secs: master_out.wall_secs,
            subproblem_secs: sub_out.wall_secs,
            scenario_cuts: cuts.len(),
            feasibility_cuts: fcuts.len(),
            bigm_warnings: warnings.len(),
        };

        last = Some((first_stage, costs, master_objective));
        if residual <= problem.convergence.eps_feasibility_mw {
            records.push(record);
            status = RunStatus::Converged;
            termination = Some(TerminationRule::ResidualBelowTolerance);
            break;
        }
        if let (Some(eps), Some(prev)) = (problem.convergence.eps_paper, prev_residual) {
            if (residual - prev).abs() < eps {
                records.push(record);
                status = RunStatus::Converged;
                termination = Some(TerminationRule::PaperDeltaRule);
                break;
            }
        }
        prev_residual = Some(residual);

        let vertex = sub.vertex_from(&sub_out)?;
        vertex.satisfies(&problem.budget)?;
        if cuts.contains(&vertex) {
            return Err(EngineError::RepeatedVertex(index, residual));
        }
        record.vertex = Some(vertex.clone());

        if algorithm == Algorithm::A3 {
            let (fs, _, _) = last.as_ref().expect("stored above");
            let duals = sub.duals_from(&sub_out)?;
            match feasibility_cut(
                &problem.forms.nodal,
                &duals,
                &fs.commitment,
                &fs.band,
                &vertex,
                residual,
            ) {
                Ok(cut) => fcuts.push(cut),
                // A zero dual vector carries no gradient information; the
                // scenario cut alone still makes progress.
                Err(FormError::DegenerateCut) => {}
                Err(e) => return Err(e.into()),
            }
        }
        cuts.push(vertex);
        record.scenario_cuts = cuts.len();
        record.feasibility_cuts = fcuts.len();
        records.push(record);
    }

    let (first_stage, costs, objective) = match last {
        Some((fs, c, obj)) => (Some(fs), Some(c), Some(obj)),
        None => (None, None, None),
    };
    Ok(RrucSolution {
        status,
        termination,
        algorithm: algorithm.name().into(),
        objective,
        costs,
        first_stage,
        iterations: records,
    })
}

/// Solves the full extensive form: every vertex of the budget polytope gets
/// a zero-slack recourse block, so the optimum is exact.
pub fn run_extensive(problem: &RrucProblem) -> Result<RrucSolution, EngineError> {
    let set = enumerate_vertices(
        problem.system.n_wind_farms(),
        problem.system.horizon,
        &problem.budget,
        problem.vertex_cap,
    )?;
    let config = problem.master_config(MasterMode::Rruc);
    let master = build_master(
        &problem.system,
        &problem.ptdf,
        &problem.forms.ptdf,
        Some(&problem.risk_model.tangents),
        &config,
        &set.vertices,
        &[],
    )?;
    let out = master.model.solve(&problem.solver)?;
    if out.is_infeasible() {
        return Ok(RrucSolution {
            status: RunStatus::InfeasibleRiskLevel,
            termination: None,
            algorithm: "extensive".into(),
            objective: None,
            costs: None,
            first_stage: None,
            iterations: Vec::new(),
        });
    }
    let objective = out.objective_value()?;
    let record = IterationRecord {
        index: 1,
        master_objective: objective,
        subproblem_residual: 0.0,
        vertex: None,
        master_secs: out.wall_secs,
        subproblem_secs: 0.0,
        scenario_cuts: set.vertices.len(),
        feasibility_cuts: 0,
        bigm_warnings: 0,
    };
    Ok(RrucSolution {
        status: RunStatus::Converged,
        termination: Some(TerminationRule::ResidualBelowTolerance),
        algorithm: "extensive".into(),
        objective: Some(objective),
        costs: Some(master.cost_breakdown(&out)?),
        first_stage: Some(master.first_stage(&out)?),
        iterations: vec![record],
    })
}

/// Deterministic baseline: a single solve, no uncertainty machinery.
pub fn run_duc(problem: &RrucProblem, reserve_rate: f64) -> Result<RrucSolution, EngineError> {
    let master = build_duc(
        &problem.system,
        &problem.ptdf,
        &problem.forms.ptdf,
        reserve_rate,
        problem.cost_segments,
    )?;
    let out = master.model.solve(&problem.solver)?;
    if out.is_infeasible() {
        return Ok(RrucSolution {
            status: RunStatus::InfeasibleRiskLevel,
            termination: None,
            algorithm: "duc".into(),
            objective: None,
            costs: None,
            first_stage: None,
            iterations: Vec::new(),
        });
    }
    let objective = out.objective_value()?;
    Ok(RrucSolution {
        status: RunStatus::Converged,
        termination: Some(TerminationRule::ResidualBelowTolerance),
        algorithm: "duc".into(),
        objective: Some(objective),
        costs: Some(master.cost_breakdown(&out)?),
        first_stage: Some(master.first_stage(&out)?),
        iterations: Vec::new(),
    })
}

/// Robust baseline: C&CG with the band frozen to a prescribed confidence
/// interval. Risk is not modeled; assess it afterwards.
pub fn run_fixed_band(
    problem: &RrucProblem,
    algorithm: Algorithm,
    band: &Band,
) -> Result<RrucSolution, EngineError> {
    let mut solution = run_with_mode(problem, algorithm, MasterMode::FixedBand(band.clone()))?;
    solution.algorithm = format!("ruc-{}", algorithm.name());
    Ok(solution)
}

/// Admissibility assessment for a frozen commitment: the widest risk-minimal
/// band that the commitment can certify, with its envelope risk.
pub fn assess_admissibility(
    problem: &RrucProblem,
    commitment: &Commitment,
    algorithm: Algorithm,
) -> Result<(Band, f64, RrucSolution), EngineError> {
    let mut solution = run_with_mode(
        problem,
        algorithm,
        MasterMode::RiskOnly(commitment.clone()),
    )?;
    solution.algorithm = format!("assess-{}", algorithm.name());
    let fs = solution
        .first_stage
        .as_ref()
        .ok_or(EngineError::CommitmentInfeasible)?;
    Ok((fs.band.clone(), fs.risk_envelope, solution))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub risk_level: f64,
    pub status: RunStatus,
    pub objective: Option<f64>,
    pub operational_cost: Option<f64>,
    pub risk_envelope: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Bracket (infeasible level, feasible level) around the minimum
    /// feasible risk level, width at most the bisection tolerance.
    pub mfrl_bracket: Option<(f64, f64)>,
}

/// Runs the algorithm across descending risk levels and brackets the minimum
/// feasible risk level by bisection.
pub fn sweep_risk_levels(
    problem: &mut RrucProblem,
    algorithm: Algorithm,
    levels: &[f64],
    bisect_tol: f64,
) -> Result<SweepReport, EngineError> {
    let mut solve_at = |p: &mut RrucProblem, level: f64| -> Result<SweepRow, EngineError> {
        p.risk_cap = Some(level);
        let solution = run(p, algorithm)?;
        Ok(SweepRow {
            risk_level: level,
            status: solution.status,
            objective: solution.objective,
            operational_cost: solution.costs.map(|c| c.operational()),
            risk_envelope: solution.first_stage.as_ref().map(|fs| fs.risk_envelope),
        })
    };

    let mut rows = Vec::new();
    for &level in levels {
        rows.push(solve_at(problem, level)?);
    }

    let feasible_min = rows
        .iter()
        .filter(|r| r.status == RunStatus::Converged)
        .map(|r| r.risk_level)
        .fold(f64::INFINITY, f64::min);
    let infeasible_max = rows
        .iter()
        .filter(|r| r.status == RunStatus::InfeasibleRiskLevel)
        .map(|r| r.risk_level)
        .fold(f64::NEG_INFINITY, f64::max);

    if feasible_min.is_infinite() {
        return Err(EngineError::AllLevelsInfeasible);
    }
    let mfrl_bracket = if infeasible_max.is_finite() {
        let (mut lo, mut hi) = (infeasible_max, feasible_min);
        while hi - lo > bisect_tol {
            let mid = 0.5 * (lo + hi);
            let row = solve_at(problem, mid)?;
            if row.status == RunStatus::Converged {
                hi = mid;
            } else {
                lo = mid;
            }
            rows.push(row);
        }
        Some((lo, hi))
    } else {
        None
    };
    Ok(SweepReport { rows, mfrl_bracket })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn problem_from(instance: &fixtures::Instance, k: f64, cap: Option<f64>) -> RrucProblem {
        RrucProblem::prepare(
            instance.system.clone(),
            &instance.risk,
            &instance.prices,
            instance.budget,
            k,
            cap,
            SolverConfig::default(),
            ConvergenceConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_budget_converges_in_one_iteration() {
        let mut instance = fixtures::single_wind_instance();
        instance.budget = Budget {
            gamma_t: 0,
            gamma_s: 0,
        };
        let problem = problem_from(&instance, 0.1, None);
        let solution = run_a1(&problem).unwrap();
        assert!(solution.converged());
        assert_eq!(solution.iterations.len(), 1);
        assert!(solution.iterations[0].subproblem_residual.abs() <= 1e-6);
    }

    #[test]
    fn algorithms_and_extensive_agree_on_desk_instance() {
        let instance = fixtures::desk3_instance();
        let problem = problem_from(&instance, 0.1, Some(500.0));
        let exact = run_extensive(&problem).unwrap();
        let gap = 2.0 * problem.solver.rel_gap;
        let reference = exact.objective.unwrap();
        for algorithm in [Algorithm::A1, Algorithm::A2, Algorithm::A3] {
            let solution = run(&problem, algorithm).unwrap();
            assert!(solution.converged(), "{algorithm:?} did not converge");
            let objective = solution.objective.unwrap();
            assert!(
                (objective - reference).abs() <= gap * reference.abs().max(1.0),
                "{algorithm:?}: {objective} vs extensive {reference}"
            );
            // Master objective is nondecreasing across iterations.
            let objectives: Vec<f64> = solution
                .iterations
                .iter()
                .map(|r| r.master_objective)
                .collect();
            for pair in objectives.windows(2) {
                assert!(
                    pair[1] >= pair[0] - gap * pair[0].abs().max(1.0),
                    "master objective decreased: {objectives:?}"
                );
            }
            // Independent robustness certificate at convergence.
            let fs = solution.first_stage.as_ref().unwrap();
            let (worst, _) = crate::oracles::brute_force_worst_case(
                &problem.system,
                &fs.commitment,
                &fs.band,
                &problem.budget,
                &problem.solver,
                20_000,
            )
            .unwrap();
            assert!(worst <= problem.convergence.eps_feasibility_mw + 1e-7);
        }
    }

    #[test]
    fn tie_instance_objectives_match_across_variants() {
        let instance = fixtures::two_farm_tie_instance();
        let problem = problem_from(&instance, 0.1, None);
        let a1 = run_a1(&problem).unwrap();
        let a2 = run_a2(&problem).unwrap();
        let a3 = run_a3(&problem).unwrap();
        let exact = run_extensive(&problem).unwrap();
        let reference = exact.objective.unwrap();
        let tol = 2.0 * problem.solver.rel_gap * reference.abs().max(1.0);
        for s in [&a1, &a2, &a3] {
            assert!(s.converged());
            assert!((s.objective.unwrap() - reference).abs() <= tol);
        }
    }

    #[test]
    fn infeasible_risk_level_reported() {
        // Demand exceeds wind capacity, so some commitment is always needed
        // and a zero risk cap cannot be met with a certifiable band.
        let instance = fixtures::desk3_instance();
        let problem = problem_from(&instance, 0.1, Some(0.0));
        let solution = run_a3(&problem).unwrap();
        assert_eq!(solution.status, RunStatus::InfeasibleRiskLevel);
        assert!(solution.first_stage.is_none());
    }

    #[test]
    fn admissibility_of_over_capacity_system_is_full_band() {
        let instance = fixtures::over_capacity_instance();
        let problem = problem_from(&instance, 1.0, None);
        let commitment = Commitment {
            on: vec![vec![true]],
        };
        let (band, risk, solution) =
            assess_admissibility(&problem, &commitment, Algorithm::A3).unwrap();
        assert!(solution.converged());
        let farm = &problem.system.wind_farms[0];
        assert!((band.upper[0][0] - farm.w_max).abs() < 1e-6);
        assert!(band.lower[0][0] < 1e-6);
        assert!(risk.abs() < 1e-9);
    }

    #[test]
    fn extensive_with_zero_budget_equals_plain_master() {
        let mut instance = fixtures::single_wind_instance();
        instance.budget = Budget {
            gamma_t: 0,
            gamma_s: 0,
        };
        let problem = problem_from(&instance, 0.1, None);
        let extensive = run_extensive(&problem).unwrap();
        let a1 = run_a1(&problem).unwrap();
        let tol = 2.0 * problem.solver.rel_gap * extensive.objective.unwrap().abs().max(1.0);
        assert!((extensive.objective.unwrap() - a1.objective.unwrap()).abs() <= tol);
    }
}
