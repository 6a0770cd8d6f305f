//! Robust risk-constrained unit commitment (RRUC) with adjustable wind
//! uncertainty sets.
//!
//! The library builds a two-stage robust MILP in which the boundaries of the
//! wind uncertainty set are first-stage decision variables coupled to an
//! expected-loss risk budget, and solves it with three column-and-constraint
//! generation variants:
//!
//! - `A1`: scenario cuts with the PTDF-form checking subproblem,
//! - `A2`: the nodal-form subproblem, which shrinks the big-M linearization,
//! - `A3`: `A2` plus dual feasibility cuts harvested each iteration.
//!
//! Everything is verified at desk scale against brute-force oracles: vertex
//! enumeration of the budget polytope, exhaustive recourse LPs, and the
//! extensive (deterministic equivalent) form.
//!
//! Module map:
//! - [`grid`] — immutable power-system model, case validation, PTDF and DC flow
//! - [`risk`] — forecast-error PDFs, exact risk integrals, tangent envelopes
//! - [`milp`] — backend-independent model building over HiGHS
//! - [`formulations`] — compact matrices, master, subproblems, cuts, baselines
//! - [`ccg`] — the iterative algorithms, admissibility assessment, risk sweeps
//! - [`oracles`] — independent brute-force and Monte-Carlo verification
//! - [`fixtures`] — deterministic test systems, desk scale up to a 118-bus
//!   reconstruction

pub mod ccg;
pub mod fixtures;
pub mod formulations;
pub mod grid;
pub mod milp;
pub mod oracles;
pub mod risk;
