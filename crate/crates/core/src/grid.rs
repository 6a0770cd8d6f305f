//! Immutable power-system model: case ingestion, validation, and DC network
//! sensitivities (PTDF and admittance-based flow).
//!
//! All quantities are in physical units: MW, MW/period, $/MWh. Susceptances
//! are taken as given (lossless DC model, no per-unit pipeline); line flow is
//! `susceptance * angle difference`, positive from the line's from-bus toward
//! its to-bus.

use std::collections::{BTreeMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("case schema violation: {0}")]
    Schema(String),
    #[error("network is disconnected: bus '{0}' unreachable from the reference bus")]
    Disconnected(u32),
    #[error("case must declare exactly one reference bus, found {0}")]
    ReferenceBusCount(usize),
    #[error("series length mismatch: {context} has {got} entries, horizon is {want}")]
    SeriesLength {
        context: String,
        got: usize,
        want: usize,
    },
    #[error("reduced admittance matrix is singular (disconnected or degenerate susceptances)")]
    SingularAdmittance,
    #[error("injections do not balance: sum {0} MW exceeds 1e-6 MW tolerance")]
    UnbalancedInjections(f64),
    #[error("injection vector has {got} entries, system has {want} buses")]
    InjectionLength { got: usize, want: usize },
}

fn schema_err(msg: impl Into<String>) -> GridError {
    GridError::Schema(msg.into())
}

// ---------------------------------------------------------------------------
// Case document (external schema, consumed by `load_case`)
// ---------------------------------------------------------------------------

/// On-disk case description. Bus references are by external id; `load_case`
/// resolves them to dense internal indices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseDoc {
    pub schema_version: u32,
    pub name: String,
    /// Number of periods T.
    pub horizon: usize,
    pub buses: Vec<BusDoc>,
    #[serde(default)]
    pub lines: Vec<LineDoc>,
    pub generators: Vec<GeneratorDoc>,
    #[serde(default)]
    pub wind: Vec<WindDoc>,
    /// Demand series per load bus; buses listed here form the load set J.
    pub demand: BTreeMap<u32, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BusDoc {
    pub id: u32,
    #[serde(default, rename = "ref")]
    pub is_ref: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LineDoc {
    pub id: String,
    pub from: u32,
    pub to: u32,
    pub susceptance: f64,
    pub capacity_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorDoc {
    pub id: String,
    pub bus: u32,
    pub pmin_mw: f64,
    pub pmax_mw: f64,
    pub ramp_up_mw: f64,
    pub ramp_down_mw: f64,
    pub min_on: u32,
    pub min_off: u32,
    pub startup_cost: f64,
    pub no_load_cost: f64,
    /// Quadratic cost coefficient c2 in $/MW^2.
    pub c2: f64,
    /// Linear cost coefficient c1 in $/MW.
    pub c1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_on: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_hours: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_output_mw: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindDoc {
    pub id: String,
    pub bus: u32,
    pub wmax_mw: f64,
    pub forecast_mw: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Commitment state carried into period 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub on: bool,
    /// Hours already spent in the current state, for residual min-up/down.
    pub hours: u32,
    /// Output at t = 0; ramp limits at t = 1 only apply when present.
    pub output_mw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    /// Internal bus index.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub min_on: u32,
    pub min_off: u32,
    pub startup_cost: f64,
    pub no_load_cost: f64,
    pub cost_quad: f64,
    pub cost_lin: f64,
    pub initial: Option<InitialState>,
}

impl Generator {
    /// Production cost C_g(p) = c2 p^2 + c1 p.
    pub fn production_cost(&self, p: f64) -> f64 {
        self.cost_quad * p * p + self.cost_lin * p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindFarm {
    pub id: String,
    pub bus: usize,
    pub w_max: f64,
    /// Forecast MW per period, length T.
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: usize,
    /// Demand MW per period, length T.
    pub series: Vec<f64>,
}

/// Validated, immutable grid description. Construction goes through
/// [`load_case`]; afterwards the system is safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    pub name: String,
    /// External bus ids; position is the internal index used everywhere else.
    pub bus_ids: Vec<u32>,
    /// Internal index of the reference bus.
    pub reference: usize,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
    pub wind_farms: Vec<WindFarm>,
    pub loads: Vec<Load>,
    pub horizon: usize,
}

impl PowerSystem {
    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_wind_farms(&self) -> usize {
        self.wind_farms.len()
    }

    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn demand(&self, load: usize, t: usize) -> f64 {
        self.loads[load].series[t]
    }

    pub fn total_demand(&self, t: usize) -> f64 {
        self.loads.iter().map(|l| l.series[t]).sum()
    }

    pub fn total_forecast(&self, t: usize) -> f64 {
        self.wind_farms.iter().map(|w| w.forecast[t]).sum()
    }

    /// Re-emit the case document; `load_case(serialize(sys))` round-trips.
    pub fn to_case_doc(&self) -> CaseDoc {
        CaseDoc {
            schema_version: CASE_SCHEMA_VERSION,
            name: self.name.clone(),
            horizon: self.horizon,
            buses: self
                .bus_ids
                .iter()
                .enumerate()
                .map(|(i, &id)| BusDoc {
                    id,
                    is_ref: i == self.reference,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineDoc {
                    id: l.id.clone(),
                    from: self.bus_ids[l.from],
                    to: self.bus_ids[l.to],
                    susceptance: l.susceptance,
                    capacity_mw: l.capacity,
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorDoc {
                    id: g.id.clone(),
                    bus: self.bus_ids[g.bus],
                    pmin_mw: g.p_min,
                    pmax_mw: g.p_max,
                    ramp_up_mw: g.ramp_up,
                    ramp_down_mw: g.ramp_down,
                    min_on: g.min_on,
                    min_off: g.min_off,
                    startup_cost: g.startup_cost,
                    no_load_cost: g.no_load_cost,
                    c2: g.cost_quad,
                    c1: g.cost_lin,
                    init_on: g.initial.map(|s| s.on),
                    init_hours: g.initial.map(|s| s.hours),
                    init_output_mw: g.initial.and_then(|s| s.output_mw),
                })
                .collect(),
            wind: self
                .wind_farms
                .iter()
                .map(|w| WindDoc {
                    id: w.id.clone(),
                    bus: self.bus_ids[w.bus],
                    wmax_mw: w.w_max,
                    forecast_mw: w.forecast.clone(),
                })
                .collect(),
            demand: self
                .loads
                .iter()
                .map(|l| (self.bus_ids[l.bus], l.series.clone()))
                .collect(),
        }
    }
}

pub const CASE_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Case loading and validation
// ---------------------------------------------------------------------------

/// Parses and validates a case document into a [`PowerSystem`].
pub fn load_case(doc: &CaseDoc) -> Result<PowerSystem, GridError> {
    if doc.schema_version != CASE_SCHEMA_VERSION {
        return Err(schema_err(format!(
            "unsupported schema_version {} (expected {})",
            doc.schema_version, CASE_SCHEMA_VERSION
        )));
    }
    if doc.horizon == 0 {
        return Err(schema_err("horizon must be at least 1"));
    }
    if doc.buses.is_empty() {
        return Err(schema_err("case has no buses"));
    }

    let mut index_of = BTreeMap::new();
    for (i, bus) in doc.buses.iter().enumerate() {
        if index_of.insert(bus.id, i).is_some() {
            return Err(schema_err(format!("duplicate bus id {}", bus.id)));
        }
    }
    let refs: Vec<usize> = doc
        .buses
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.is_ref.then_some(i))
        .collect();
    if refs.len() != 1 {
        return Err(GridError::ReferenceBusCount(refs.len()));
    }
    let reference = refs[0];

    let resolve = |bus: u32, context: &str| -> Result<usize, GridError> {
        index_of
            .get(&bus)
            .copied()
            .ok_or_else(|| schema_err(format!("{context} references unknown bus {bus}")))
    };

    let mut lines = Vec::with_capacity(doc.lines.len());
    let mut line_ids = HashSet::new();
    for l in &doc.lines {
        if !line_ids.insert(l.id.as_str()) {
            return Err(schema_err(format!("duplicate line id '{}'", l.id)));
        }
        let from = resolve(l.from, &format!("line '{}'", l.id))?;
        let to = resolve(l.to, &format!("line '{}'", l.id))?;
        if from == to {
            return Err(schema_err(format!(
                "line '{}' connects bus {} to itself",
                l.id, l.from
            )));
        }
        if !(l.susceptance > 0.0) {
            return Err(schema_err(format!(
                "line '{}': susceptance must be > 0, got {}",
                l.id, l.susceptance
            )));
        }
        if !(l.capacity_mw > 0.0) {
            return Err(schema_err(format!(
                "line '{}': capacity_mw must be > 0, got {}",
                l.id, l.capacity_mw
            )));
        }
        lines.push(Line {
            id: l.id.clone(),
            from,
            to,
            susceptance: l.susceptance,
            capacity: l.capacity_mw,
        });
    }

    let mut generators = Vec::with_capacity(doc.generators.len());
    let mut gen_ids = HashSet::new();
    for g in &doc.generators {
        if !gen_ids.insert(g.id.as_str()) {
            return Err(schema_err(format!("duplicate generator id '{}'", g.id)));
        }
        let bus = resolve(g.bus, &format!("generator '{}'", g.id))?;
        if !(0.0 <= g.pmin_mw && g.pmin_mw <= g.pmax_mw) {
            return Err(schema_err(format!(
                "generator '{}': need 0 <= pmin <= pmax, got [{}, {}]",
                g.id, g.pmin_mw, g.pmax_mw
            )));
        }
        if g.ramp_up_mw < 0.0 || g.ramp_down_mw < 0.0 {
            return Err(schema_err(format!(
                "generator '{}': ramp limits must be >= 0",
                g.id
            )));
        }
        if g.min_on < 1 || g.min_off < 1 {
            return Err(schema_err(format!(
                "generator '{}': min_on and min_off must be >= 1",
                g.id
            )));
        }
        let initial = match (g.init_on, g.init_hours, g.init_output_mw) {
            (None, None, None) => None,
            (Some(on), hours, output_mw) => {
                if let Some(p0) = output_mw {
                    if on && !(g.pmin_mw - 1e-9 <= p0 && p0 <= g.pmax_mw + 1e-9) {
                        return Err(schema_err(format!(
                            "generator '{}': init_output_mw {} outside [{}, {}]",
                            g.id, p0, g.pmin_mw, g.pmax_mw
                        )));
                    }
                    if !on && p0 != 0.0 {
                        return Err(schema_err(format!(
                            "generator '{}': init_output_mw must be 0 when initially off",
                            g.id
                        )));
                    }
                }
                Some(InitialState {
                    on,
                    hours: hours.unwrap_or(u32::MAX),
                    output_mw,
                })
            }
            _ => {
                return Err(schema_err(format!(
                    "generator '{}': init_hours/init_output_mw require init_on",
                    g.id
                )))
            }
        };
        generators.push(Generator {
            id: g.id.clone(),
            bus,
            p_min: g.pmin_mw,
            p_max: g.pmax_mw,
            ramp_up: g.ramp_up_mw,
            ramp_down: g.ramp_down_mw,
            min_on: g.min_on,
            min_off: g.min_off,
            startup_cost: g.startup_cost,
            no_load_cost: g.no_load_cost,
            cost_quad: g.c2,
            cost_lin: g.c1,
            initial,
        });
    }

    let mut wind_farms = Vec::with_capacity(doc.wind.len());
    let mut wind_ids = HashSet::new();
    for w in &doc.wind {
        if !wind_ids.insert(w.id.as_str()) {
            return Err(schema_err(format!("duplicate wind farm id '{}'", w.id)));
        }
        let bus = resolve(w.bus, &format!("wind farm '{}'", w.id))?;
        if w.forecast_mw.len() != doc.horizon {
            return Err(GridError::SeriesLength {
                context: format!("wind farm '{}' forecast", w.id),
                got: w.forecast_mw.len(),
                want: doc.horizon,
            });
        }
        for (t, &f) in w.forecast_mw.iter().enumerate() {
            if !(0.0 <= f && f <= w.wmax_mw) {
                return Err(schema_err(format!(
                    "wind farm '{}': forecast {} at period {} outside [0, {}]",
                    w.id,
                    f,
                    t + 1,
                    w.wmax_mw
                )));
            }
        }
        wind_farms.push(WindFarm {
            id: w.id.clone(),
            bus,
            w_max: w.wmax_mw,
            forecast: w.forecast_mw.clone(),
        });
    }

    let mut loads = Vec::with_capacity(doc.demand.len());
    for (&bus_id, series) in &doc.demand {
        let bus = resolve(bus_id, "demand entry")?;
        if series.len() != doc.horizon {
            return Err(GridError::SeriesLength {
                context: format!("demand at bus {bus_id}"),
                got: series.len(),
                want: doc.horizon,
            });
        }
        if series.iter().any(|&d| d < 0.0) {
            return Err(schema_err(format!("demand at bus {bus_id} has negative entries")));
        }
        loads.push(Load {
            bus,
            series: series.clone(),
        });
    }

    let system = PowerSystem {
        name: doc.name.clone(),
        bus_ids: doc.buses.iter().map(|b| b.id).collect(),
        reference,
        generators,
        lines,
        wind_farms,
        loads,
        horizon: doc.horizon,
    };
    check_connected(&system)?;
    Ok(system)
}

fn check_connected(system: &PowerSystem) -> Result<(), GridError> {
    let n = system.n_buses();
    let mut adjacency = vec![Vec::new(); n];
    for line in &system.lines {
        adjacency[line.from].push(line.to);
        adjacency[line.to].push(line.from);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([system.reference]);
    seen[system.reference] = true;
    while let Some(bus) = queue.pop_front() {
        for &next in &adjacency[bus] {
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        Some(bus) => Err(GridError::Disconnected(system.bus_ids[bus])),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// DC sensitivities
// ---------------------------------------------------------------------------

/// Power transfer distribution factors: one row per line, one column per bus,
/// in MW of line flow per MW injected (withdrawn at the reference bus). The
/// reference column is exactly zero.
#[derive(Debug, Clone)]
pub struct Ptdf {
    matrix: Vec<Vec<f64>>,
    n_buses: usize,
}

impl Ptdf {
    pub fn factor(&self, line: usize, bus: usize) -> f64 {
        self.matrix[line][bus]
    }

    pub fn n_lines(&self) -> usize {
        self.matrix.len()
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    /// Line flows for a (balanced) injection vector.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(injections).map(|(a, p)| a * p).sum())
            .collect()
    }
}

/// Reduced admittance matrix with the reference row/column removed, plus the
/// mapping from reduced to full indices.
fn reduced_admittance(system: &PowerSystem) -> (DMatrix<f64>, Vec<usize>) {
    let n = system.n_buses();
    let keep: Vec<usize> = (0..n).filter(|&b| b != system.reference).collect();
    let pos_of: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (r, &b) in keep.iter().enumerate() {
            v[b] = Some(r);
        }
        v
    };
    let mut b_red = DMatrix::zeros(keep.len(), keep.len());
    for line in &system.lines {
        let (f, t, b) = (line.from, line.to, line.susceptance);
        if let Some(rf) = pos_of[f] {
            b_red[(rf, rf)] += b;
        }
        if let Some(rt) = pos_of[t] {
            b_red[(rt, rt)] += b;
        }
        if let (Some(rf), Some(rt)) = (pos_of[f], pos_of[t]) {
            b_red[(rf, rt)] -= b;
            b_red[(rt, rf)] -= b;
        }
    }
    (b_red, keep)
}

/// Computes the PTDF matrix by inverting the reduced admittance matrix.
pub fn compute_ptdf(system: &PowerSystem) -> Result<Ptdf, GridError> {
    let n = system.n_buses();
    if system.lines.is_empty() {
        return Ok(Ptdf {
            matrix: Vec::new(),
            n_buses: n,
        });
    }
    let (b_red, keep) = reduced_admittance(system);
    let inv = b_red
        .clone()
        .try_inverse()
        .ok_or(GridError::SingularAdmittance)?;

    // Angle sensitivity of bus b to injection at bus i, zero at/for the ref bus.
    let theta_sens = |b: usize, i: usize| -> f64 {
        if b == system.reference || i == system.reference {
            0.0
        } else {
            let rb = keep.iter().position(|&k| k == b).unwrap();
            let ri = keep.iter().position(|&k| k == i).unwrap();
            inv[(rb, ri)]
        }
    };

    let mut matrix = Vec::with_capacity(system.lines.len());
    for line in &system.lines {
        let mut row = vec![0.0; n];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = line.susceptance * (theta_sens(line.from, i) - theta_sens(line.to, i));
        }
        row[system.reference] = 0.0;
        matrix.push(row);
    }
    Ok(Ptdf {
        matrix,
        n_buses: n,
    })
}

/// Result of a DC flow solve: angles (radians, reference fixed at 0), line
/// flows (MW), and any buses whose angle magnitude exceeds pi.
#[derive(Debug, Clone)]
pub struct DcFlow {
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    pub angle_bound_violations: Vec<usize>,
}

/// Solves `B theta = P` for balanced injections and reads line flows.
pub fn solve_dc_flow(system: &PowerSystem, injections: &[f64]) -> Result<DcFlow, GridError> {
    let n = system.n_buses();
    if injections.len() != n {
        return Err(GridError::InjectionLength {
            got: injections.len(),
            want: n,
        });
    }
    let total: f64 = injections.iter().sum();
    if total.abs() > 1e-6 {
        return Err(GridError::UnbalancedInjections(total));
    }

    let mut angles = vec![0.0; n];
    if !system.lines.is_empty() {
        let (b_red, keep) = reduced_admittance(system);
        let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&b| injections[b]));
        let lu = b_red.lu();
        let theta = lu.solve(&rhs).ok_or(GridError::SingularAdmittance)?;
        for (r, &b) in keep.iter().enumerate() {
            angles[b] = theta[r];
        }
    }

    let flows = system
        .lines
        .iter()
        .map(|l| l.susceptance * (angles[l.from] - angles[l.to]))
        .collect();
    let angle_bound_violations = (0..n)
        .filter(|&b| angles[b].abs() > std::f64::consts::PI)
        .collect();
    Ok(DcFlow {
        angles,
        flows,
        angle_bound_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_bus_case_loads_with_empty_ptdf() {
        let sys = fixtures::single_bus();
        assert_eq!(sys.n_buses(), 1);
        assert_eq!(sys.n_lines(), 0);
        let ptdf = compute_ptdf(&sys).unwrap();
        assert_eq!(ptdf.n_lines(), 0);
    }

    #[test]
    fn case_round_trips_through_document() {
        for sys in [fixtures::single_bus(), fixtures::desk3(), fixtures::triangle()] {
            let doc = sys.to_case_doc();
            let json = serde_json::to_string(&doc).unwrap();
            let reparsed: CaseDoc = serde_json::from_str(&json).unwrap();
            let back = load_case(&reparsed).unwrap();
            assert_eq!(back, sys);
        }
    }

    #[test]
    fn duplicate_reference_and_missing_reference_rejected() {
        let mut doc = fixtures::desk3().to_case_doc();
        doc.buses[1].is_ref = true;
        assert!(matches!(
            load_case(&doc),
            Err(GridError::ReferenceBusCount(2))
        ));
        doc.buses[0].is_ref = false;
        doc.buses[1].is_ref = false;
        assert!(matches!(
            load_case(&doc),
            Err(GridError::ReferenceBusCount(0))
        ));
    }

    #[test]
    fn disconnected_network_rejected() {
        let mut doc = fixtures::desk3().to_case_doc();
        doc.lines.clear();
        assert!(matches!(load_case(&doc), Err(GridError::Disconnected(_))));
    }

    #[test]
    fn series_length_mismatch_rejected() {
        let mut doc = fixtures::desk3().to_case_doc();
        doc.wind[0].forecast_mw.pop();
        assert!(matches!(load_case(&doc), Err(GridError::SeriesLength { .. })));
    }

    #[test]
    fn two_bus_ptdf_sign_convention() {
        // Line points from the reference toward bus 2; injecting at bus 2
        // sends power back toward the reference, so the factor is -1.
        let sys = fixtures::two_bus();
        let ptdf = compute_ptdf(&sys).unwrap();
        assert_abs_diff_eq!(ptdf.factor(0, 1), -1.0, epsilon = 1e-12);
        // Reference column exactly zero.
        assert_eq!(ptdf.factor(0, 0), 0.0);
    }

    /// Expected factors derived by solving B*theta = P directly on the
    /// triangle: injection 1.0 at bus 1 (withdrawn at bus 3) splits 2/3 over
    /// the direct line and 1/3 over the two-hop path.
    #[test]
    fn triangle_ptdf_split() {
        let sys = fixtures::triangle();
        let injections = vec![1.0, 0.0, -1.0];
        let flow = solve_dc_flow(&sys, &injections).unwrap();
        // Lines in fixture order: 1-2, 2-3, 1-3.
        assert_abs_diff_eq!(flow.flows[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(flow.flows[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(flow.flows[2], 2.0 / 3.0, epsilon = 1e-12);

        let ptdf = compute_ptdf(&sys).unwrap();
        assert_abs_diff_eq!(ptdf.factor(0, 0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ptdf.factor(1, 0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ptdf.factor(2, 0), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn injection_at_reference_gives_zero_flows() {
        let sys = fixtures::triangle();
        let ptdf = compute_ptdf(&sys).unwrap();
        for l in 0..sys.n_lines() {
            assert_eq!(ptdf.factor(l, sys.reference), 0.0);
        }
    }

    #[test]
    fn dc_flow_zero_injections() {
        let sys = fixtures::triangle();
        let flow = solve_dc_flow(&sys, &[0.0, 0.0, 0.0]).unwrap();
        assert!(flow.angles.iter().all(|&a| a == 0.0));
        assert!(flow.flows.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn dc_flow_two_bus_example() {
        // susceptance 10, injection 5 at the non-reference bus: angle
        // difference 0.5 toward the reference, flow 5 back along the line.
        let sys = fixtures::two_bus();
        let flow = solve_dc_flow(&sys, &[-5.0, 5.0]).unwrap();
        assert_abs_diff_eq!(flow.angles[1] - flow.angles[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(flow.flows[0], -5.0, epsilon = 1e-12);
        assert!(flow.angle_bound_violations.is_empty());
    }

    #[test]
    fn dc_flow_rejects_unbalanced() {
        let sys = fixtures::two_bus();
        assert!(matches!(
            solve_dc_flow(&sys, &[1.0, 0.5]),
            Err(GridError::UnbalancedInjections(_))
        ));
    }

    #[test]
    fn ptdf_matches_dc_flow_on_random_balanced_injections() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for sys in [fixtures::triangle(), fixtures::desk3()] {
            let ptdf = compute_ptdf(&sys).unwrap();
            for _ in 0..50 {
                let n = sys.n_buses();
                let mut inj: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
                let mean = inj.iter().sum::<f64>() / n as f64;
                for x in &mut inj {
                    *x -= mean;
                }
                let direct = solve_dc_flow(&sys, &inj).unwrap();
                let via_ptdf = ptdf.flows(&inj);
                for (a, b) in direct.flows.iter().zip(&via_ptdf) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-8);
                }
            }
        }
    }
}
