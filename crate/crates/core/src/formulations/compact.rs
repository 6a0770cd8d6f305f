//! Compact coefficient blocks of the recourse feasibility system.
//!
//! Every row is stored as
//!
//! ```text
//!   E x  +  F y  +  G (w o v)  +  H s  +  J v   (<= | =)   g
//! ```
//!
//! with x the commitment vector, y the recourse continuous variables
//! (dispatch, plus angles in the nodal form), s the curtailment/shedding
//! slacks, w the band bounds and v the binary deviation indicators. The same
//! row set serves three consumers: the dualized checking subproblem, the
//! master's per-vertex scenario blocks (with the slack columns removed), and
//! the dual feasibility cut.
//!
//! Two forms are assembled. The PTDF form carries a system-wide balance row
//! and sensitivity-based flow rows, so wind terms appear in every flow row
//! and the product set has 4(L+1)MT entries. The nodal form carries per-node
//! balance and angle-difference flow rows, confining wind terms to the wind
//! buses and shrinking the product set to 4MT.

use crate::grid::{PowerSystem, Ptdf};

use super::{wv_index, BandSide};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Ptdf,
    Nodal,
}

/// One recourse row; term lists hold (column index, coefficient).
#[derive(Debug, Clone)]
pub struct RecourseRow {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
    /// E block: commitment columns, index g * T + t.
    pub x: Vec<(usize, f64)>,
    /// F block: recourse continuous columns.
    pub y: Vec<(usize, f64)>,
    /// H block: slack columns (curtailment then shedding).
    pub s: Vec<(usize, f64)>,
    /// G block: coefficients multiplying the product w_j * v_j.
    pub wv: Vec<(usize, f64)>,
    /// J block: coefficients multiplying v_j alone.
    pub v: Vec<(usize, f64)>,
}

/// Recourse continuous column. Dispatch columns are sign-constrained,
/// angle columns are free.
#[derive(Debug, Clone)]
pub struct YCol {
    pub name: String,
    pub nonneg: bool,
}

/// Slack column; all slacks are nonnegative with unit penalty.
#[derive(Debug, Clone)]
pub struct SCol {
    pub name: String,
}

/// One structural (row, v-column) pairing. The product coefficient
/// q = j_coeff + g_coeff * w_j is assembled once the band is known.
#[derive(Debug, Clone)]
pub struct Product {
    pub row: usize,
    pub v_col: usize,
    pub g_coeff: f64,
    pub j_coeff: f64,
}

#[derive(Debug, Clone)]
pub struct CompactForm {
    pub kind: FormKind,
    pub rows: Vec<RecourseRow>,
    pub y_cols: Vec<YCol>,
    pub s_cols: Vec<SCol>,
    pub products: Vec<Product>,
    /// Commitment vector length, G * T.
    pub x_dim: usize,
    /// Flattened w / v vector length, 2 * M * T.
    pub v_dim: usize,
    horizon: usize,
}

impl CompactForm {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn x_index(&self, g: usize, t: usize) -> usize {
        g * self.horizon + t
    }

    /// Product cost vector entry (q in the PTDF form, r in the nodal form)
    /// for a flattened band vector.
    pub fn product_cost(&self, product: &Product, w_flat: &[f64]) -> f64 {
        product.j_coeff + product.g_coeff * w_flat[product.v_col]
    }

    /// Product cost vector for a flattened band.
    pub fn product_costs(&self, w_flat: &[f64]) -> Vec<f64> {
        self.products.iter().map(|p| self.product_cost(p, w_flat)).collect()
    }

    /// Structural nonzero count of the G block.
    pub fn g_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.wv.len()).sum()
    }
}

/// Both compact forms of one system.
#[derive(Debug, Clone)]
pub struct CompactForms {
    pub ptdf: CompactForm,
    pub nodal: CompactForm,
}

struct RowBuf {
    rows: Vec<RecourseRow>,
}

impl RowBuf {
    fn push(
        &mut self,
        name: String,
        sense: RowSense,
        rhs: f64,
        x: Vec<(usize, f64)>,
        y: Vec<(usize, f64)>,
        s: Vec<(usize, f64)>,
        wv: Vec<(usize, f64)>,
        v: Vec<(usize, f64)>,
    ) {
        self.rows.push(RecourseRow {
            name,
            sense,
            rhs,
            x,
            y,
            s,
            wv,
            v,
        });
    }
}

/// Generator capacity and ramp rows, shared by both forms. `p_idx` maps
/// (g, t) to the dispatch column.
fn push_generator_rows(buf: &mut RowBuf, system: &PowerSystem, p_idx: &dyn Fn(usize, usize) -> usize) {
    let horizon = system.horizon;
    for (g, gen) in system.generators.iter().enumerate() {
        for t in 0..horizon {
            let x = g * horizon + t;
            buf.push(
                format!("cap_lo[{},{t}]", gen.id),
                RowSense::Le,
                0.0,
                vec![(x, gen.p_min)],
                vec![(p_idx(g, t), -1.0)],
                vec![],
                vec![],
                vec![],
            );
            buf.push(
                format!("cap_hi[{},{t}]", gen.id),
                RowSense::Le,
                0.0,
                vec![(x, -gen.p_max)],
                vec![(p_idx(g, t), 1.0)],
                vec![],
                vec![],
                vec![],
            );
        }
        for t in 0..horizon.saturating_sub(1) {
            let (x_t, x_next) = (g * horizon + t, g * horizon + t + 1);
            // p_t - p_{t+1} <= u_{t+1} R- + (1 - u_{t+1}) p_max
            buf.push(
                format!("ramp_dn[{},{t}]", gen.id),
                RowSense::Le,
                gen.p_max,
                vec![(x_next, gen.p_max - gen.ramp_down)],
                vec![(p_idx(g, t), 1.0), (p_idx(g, t + 1), -1.0)],
                vec![],
                vec![],
                vec![],
            );
            // p_{t+1} - p_t <= u_t R+ + (1 - u_t) p_max
            buf.push(
                format!("ramp_up[{},{t}]", gen.id),
                RowSense::Le,
                gen.p_max,
                vec![(x_t, gen.p_max - gen.ramp_up)],
                vec![(p_idx(g, t), -1.0), (p_idx(g, t + 1), 1.0)],
                vec![],
                vec![],
                vec![],
            );
        }
        // Boundary ramps against the initial output, when the case gives one.
        if let Some(init) = gen.initial {
            if let Some(p0) = init.output_mw {
                let x1 = g * horizon;
                buf.push(
                    format!("ramp_dn0[{}]", gen.id),
                    RowSense::Le,
                    gen.p_max - p0,
                    vec![(x1, gen.p_max - gen.ramp_down)],
                    vec![(p_idx(g, 0), -1.0)],
                    vec![],
                    vec![],
                    vec![],
                );
                let headroom = if init.on { gen.ramp_up } else { gen.p_max };
                buf.push(
                    format!("ramp_up0[{}]", gen.id),
                    RowSense::Le,
                    p0 + headroom,
                    vec![],
                    vec![(p_idx(g, 0), 1.0)],
                    vec![],
                    vec![],
                    vec![],
                );
            }
        }
    }
}

/// Curtailment and shedding bound rows, shared by both forms.
fn push_slack_rows(buf: &mut RowBuf, system: &PowerSystem, dw_idx: &dyn Fn(usize, usize) -> usize, dd_idx: &dyn Fn(usize, usize) -> usize) {
    let horizon = system.horizon;
    for (m, farm) in system.wind_farms.iter().enumerate() {
        for t in 0..horizon {
            let w_hat = farm.forecast[t];
            // dw <= realized wind
            buf.push(
                format!("curtail_hi[{},{t}]", farm.id),
                RowSense::Le,
                w_hat,
                vec![],
                vec![],
                vec![(dw_idx(m, t), 1.0)],
                vec![
                    (wv_index(m, t, BandSide::Upper, horizon), -1.0),
                    (wv_index(m, t, BandSide::Lower, horizon), -1.0),
                ],
                vec![
                    (wv_index(m, t, BandSide::Upper, horizon), w_hat),
                    (wv_index(m, t, BandSide::Lower, horizon), w_hat),
                ],
            );
            buf.push(
                format!("curtail_lo[{},{t}]", farm.id),
                RowSense::Le,
                0.0,
                vec![],
                vec![],
                vec![(dw_idx(m, t), -1.0)],
                vec![],
                vec![],
            );
        }
    }
    for (j, load) in system.loads.iter().enumerate() {
        for t in 0..horizon {
            buf.push(
                format!("shed_hi[{},{t}]", system.bus_ids[load.bus]),
                RowSense::Le,
                load.series[t],
                vec![],
                vec![],
                vec![(dd_idx(j, t), 1.0)],
                vec![],
                vec![],
            );
            buf.push(
                format!("shed_lo[{},{t}]", system.bus_ids[load.bus]),
                RowSense::Le,
                0.0,
                vec![],
                vec![],
                vec![(dd_idx(j, t), -1.0)],
                vec![],
                vec![],
            );
        }
    }
}

/// Wind terms of a row: coefficient `c` applied to the realized wind of farm
/// m at t expands to c*(w o v) on both sides, -c*w_hat on both v entries, and
/// a constant c*w_hat that the caller folds into the rhs.
fn wind_terms(
    m: usize,
    t: usize,
    horizon: usize,
    w_hat: f64,
    c: f64,
    wv: &mut Vec<(usize, f64)>,
    v: &mut Vec<(usize, f64)>,
) -> f64 {
    for side in [BandSide::Upper, BandSide::Lower] {
        wv.push((wv_index(m, t, side, horizon), c));
        v.push((wv_index(m, t, side, horizon), -c * w_hat));
    }
    c * w_hat
}

fn assemble_ptdf(system: &PowerSystem, ptdf: &Ptdf) -> CompactForm {
    let horizon = system.horizon;
    let (n_g, n_m, n_j) = (system.n_generators(), system.n_wind_farms(), system.n_loads());
    let p_idx = |g: usize, t: usize| g * horizon + t;
    let dw_idx = |m: usize, t: usize| m * horizon + t;
    let dd_idx = |j: usize, t: usize| n_m * horizon + j * horizon + t;

    let mut buf = RowBuf { rows: Vec::new() };
    push_generator_rows(&mut buf, system, &p_idx);

    // System-wide balance: sum p + sum realized wind - sum dw + sum dd = sum D.
    for t in 0..horizon {
        let y = (0..n_g).map(|g| (p_idx(g, t), 1.0)).collect();
        let mut s: Vec<(usize, f64)> = (0..n_m).map(|m| (dw_idx(m, t), -1.0)).collect();
        s.extend((0..n_j).map(|j| (dd_idx(j, t), 1.0)));
        let mut wv = Vec::new();
        let mut v = Vec::new();
        let mut constant = 0.0;
        for (m, farm) in system.wind_farms.iter().enumerate() {
            constant += wind_terms(m, t, horizon, farm.forecast[t], 1.0, &mut wv, &mut v);
        }
        let rhs = system.total_demand(t) - constant;
        buf.push(format!("balance[{t}]"), RowSense::Eq, rhs, vec![], y, s, wv, v);
    }

    // Flow rows in both directions, built from sensitivities. Wind terms are
    // kept for every farm so the product layout is structural.
    for (l, line) in system.lines.iter().enumerate() {
        for t in 0..horizon {
            for dir in [1.0, -1.0] {
                let mut y = Vec::new();
                for (g, gen) in system.generators.iter().enumerate() {
                    let pi = ptdf.factor(l, gen.bus);
                    if pi != 0.0 {
                        y.push((p_idx(g, t), dir * pi));
                    }
                }
                let mut s = Vec::new();
                let mut wv = Vec::new();
                let mut v = Vec::new();
                let mut constant = 0.0;
                for (m, farm) in system.wind_farms.iter().enumerate() {
                    let pi = ptdf.factor(l, farm.bus);
                    constant += wind_terms(m, t, horizon, farm.forecast[t], dir * pi, &mut wv, &mut v);
                    if pi != 0.0 {
                        s.push((dw_idx(m, t), -dir * pi));
                    }
                }
                for (j, load) in system.loads.iter().enumerate() {
                    let pi = ptdf.factor(l, load.bus);
                    if pi != 0.0 {
                        s.push((dd_idx(j, t), dir * pi));
                        constant -= dir * pi * load.series[t];
                    }
                }
                let tag = if dir > 0.0 { "hi" } else { "lo" };
                buf.push(
                    format!("flow_{tag}[{},{t}]", line.id),
                    RowSense::Le,
                    line.capacity - constant,
                    vec![],
                    y,
                    s,
                    wv,
                    v,
                );
            }
        }
    }

    push_slack_rows(&mut buf, system, &dw_idx, &dd_idx);

    let y_cols = (0..n_g)
        .flat_map(|g| {
            let id = system.generators[g].id.clone();
            (0..horizon).map(move |t| YCol {
                name: format!("p[{id},{t}]"),
                nonneg: true,
            })
        })
        .collect();
    finish(FormKind::Ptdf, system, buf, y_cols)
}

fn assemble_nodal(system: &PowerSystem) -> CompactForm {
    let horizon = system.horizon;
    let (n_g, n_m, n_j, n_n) = (
        system.n_generators(),
        system.n_wind_farms(),
        system.n_loads(),
        system.n_buses(),
    );
    let p_idx = |g: usize, t: usize| g * horizon + t;
    let th_idx = |n: usize, t: usize| n_g * horizon + n * horizon + t;
    let dw_idx = |m: usize, t: usize| m * horizon + t;
    let dd_idx = |j: usize, t: usize| n_m * horizon + j * horizon + t;

    let mut buf = RowBuf { rows: Vec::new() };
    push_generator_rows(&mut buf, system, &p_idx);

    // Nodal balance: local injections minus angle-weighted outflows.
    for n in 0..n_n {
        for t in 0..horizon {
            let mut y: Vec<(usize, f64)> = system
                .generators
                .iter()
                .enumerate()
                .filter(|(_, g)| g.bus == n)
                .map(|(g, _)| (p_idx(g, t), 1.0))
                .collect();
            let mut theta = vec![0.0; n_n];
            for line in &system.lines {
                if line.from == n {
                    theta[n] -= line.susceptance;
                    theta[line.to] += line.susceptance;
                } else if line.to == n {
                    theta[n] -= line.susceptance;
                    theta[line.from] += line.susceptance;
                }
            }
            for (o, c) in theta.into_iter().enumerate() {
                if c != 0.0 {
                    y.push((th_idx(o, t), c));
                }
            }
            let mut s = Vec::new();
            let mut wv = Vec::new();
            let mut v = Vec::new();
            let mut constant = 0.0;
            for (m, farm) in system.wind_farms.iter().enumerate() {
                if farm.bus == n {
                    constant += wind_terms(m, t, horizon, farm.forecast[t], 1.0, &mut wv, &mut v);
                    s.push((dw_idx(m, t), -1.0));
                }
            }
            let mut demand = 0.0;
            for (j, load) in system.loads.iter().enumerate() {
                if load.bus == n {
                    s.push((dd_idx(j, t), 1.0));
                    demand += load.series[t];
                }
            }
            buf.push(
                format!("node_balance[{},{t}]", system.bus_ids[n]),
                RowSense::Eq,
                demand - constant,
                vec![],
                y,
                s,
                wv,
                v,
            );
        }
    }

    // Angle-difference flow limits.
    for line in &system.lines {
        for t in 0..horizon {
            for dir in [1.0, -1.0] {
                let tag = if dir > 0.0 { "hi" } else { "lo" };
                buf.push(
                    format!("flow_{tag}[{},{t}]", line.id),
                    RowSense::Le,
                    line.capacity,
                    vec![],
                    vec![
                        (th_idx(line.from, t), dir * line.susceptance),
                        (th_idx(line.to, t), -dir * line.susceptance),
                    ],
                    vec![],
                    vec![],
                    vec![],
                );
            }
        }
    }

    // Nodal phase angle limits and reference pin.
    for n in 0..n_n {
        for t in 0..horizon {
            for dir in [1.0, -1.0] {
                let tag = if dir > 0.0 { "hi" } else { "lo" };
                buf.push(
                    format!("angle_{tag}[{},{t}]", system.bus_ids[n]),
                    RowSense::Le,
                    std::f64::consts::PI,
                    vec![],
                    vec![(th_idx(n, t), dir)],
                    vec![],
                    vec![],
                    vec![],
                );
            }
        }
    }
    for t in 0..horizon {
        buf.push(
            format!("ref_angle[{t}]"),
            RowSense::Eq,
            0.0,
            vec![],
            vec![(th_idx(system.reference, t), 1.0)],
            vec![],
            vec![],
            vec![],
        );
    }

    push_slack_rows(&mut buf, system, &dw_idx, &dd_idx);

    let mut y_cols: Vec<YCol> = (0..n_g)
        .flat_map(|g| {
            let id = system.generators[g].id.clone();
            (0..horizon).map(move |t| YCol {
                name: format!("p[{id},{t}]"),
                nonneg: true,
            })
        })
        .collect();
    for n in 0..n_n {
        for t in 0..horizon {
            y_cols.push(YCol {
                name: format!("theta[{},{t}]", system.bus_ids[n]),
                nonneg: false,
            });
        }
    }
    finish(FormKind::Nodal, system, buf, y_cols)
}

fn finish(kind: FormKind, system: &PowerSystem, buf: RowBuf, y_cols: Vec<YCol>) -> CompactForm {
    let horizon = system.horizon;
    let mut s_cols: Vec<SCol> = system
        .wind_farms
        .iter()
        .flat_map(|farm| {
            let id = farm.id.clone();
            (0..horizon).map(move |t| SCol {
                name: format!("dw[{id},{t}]"),
            })
        })
        .collect();
    for load in &system.loads {
        let bus = system.bus_ids[load.bus];
        for t in 0..horizon {
            s_cols.push(SCol {
                name: format!("dd[{bus},{t}]"),
            });
        }
    }

    // One product per structural (row, v-column) pairing.
    let mut products = Vec::new();
    for (i, row) in buf.rows.iter().enumerate() {
        let mut cols: Vec<usize> = row.wv.iter().chain(&row.v).map(|&(j, _)| j).collect();
        cols.sort_unstable();
        cols.dedup();
        for j in cols {
            let g_coeff = row.wv.iter().filter(|&&(c, _)| c == j).map(|&(_, x)| x).sum();
            let j_coeff = row.v.iter().filter(|&&(c, _)| c == j).map(|&(_, x)| x).sum();
            products.push(Product {
                row: i,
                v_col: j,
                g_coeff,
                j_coeff,
            });
        }
    }

    CompactForm {
        kind,
        rows: buf.rows,
        y_cols,
        s_cols,
        products,
        x_dim: system.n_generators() * horizon,
        v_dim: 2 * system.n_wind_farms() * horizon,
        horizon,
    }
}

/// Builds both compact forms of the recourse system.
pub fn assemble_compact(system: &PowerSystem, ptdf: &Ptdf) -> CompactForms {
    CompactForms {
        ptdf: assemble_ptdf(system, ptdf),
        nodal: assemble_nodal(system),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::compute_ptdf;

    fn forms_for(system: &PowerSystem) -> CompactForms {
        let ptdf = compute_ptdf(system).unwrap();
        assemble_compact(system, &ptdf)
    }

    #[test]
    fn product_counts_match_closed_forms() {
        for system in [
            fixtures::desk3(),
            fixtures::subproblem_single_bus(),
            fixtures::ieee118_like(),
        ] {
            let forms = forms_for(&system);
            let (m, t, l) = (system.n_wind_farms(), system.horizon, system.n_lines());
            assert_eq!(
                forms.ptdf.products.len(),
                4 * (l + 1) * m * t,
                "ptdf products on {}",
                system.name
            );
            assert_eq!(forms.nodal.products.len(), 4 * m * t, "nodal products on {}", system.name);
            assert_eq!(forms.ptdf.v_dim, 2 * m * t);
            assert_eq!(forms.nodal.v_dim, 2 * m * t);
        }
    }

    #[test]
    fn nodal_g_block_is_sparser() {
        let system = fixtures::desk3();
        let forms = forms_for(&system);
        assert!(forms.ptdf.g_nonzeros() >= forms.nodal.g_nonzeros());
    }

    #[test]
    fn row_counts_follow_layout() {
        let system = fixtures::desk3();
        let forms = forms_for(&system);
        let (g, m, t, l, j, n) = (
            system.n_generators(),
            system.n_wind_farms(),
            system.horizon,
            system.n_lines(),
            system.n_loads(),
            system.n_buses(),
        );
        let boundary: usize = system
            .generators
            .iter()
            .filter(|gen| gen.initial.is_some_and(|i| i.output_mw.is_some()))
            .count();
        // Capacity, ramps (interior + boundary), balance, flows, slack bounds.
        let gen_rows = 2 * g * t + 2 * g * (t - 1) + 2 * boundary;
        assert_eq!(forms.ptdf.rows.len(), gen_rows + t + 2 * l * t + 2 * m * t + 2 * j * t);
        assert_eq!(
            forms.nodal.rows.len(),
            gen_rows + n * t + 2 * l * t + 2 * n * t + t + 2 * m * t + 2 * j * t
        );
    }

    #[test]
    fn single_bus_balance_row_has_unit_slacks() {
        // One bus, one generator, one wind farm, one load: the balance row
        // carries -1 on curtailment and +1 on shedding.
        let system = fixtures::subproblem_single_bus();
        let forms = forms_for(&system);
        let balance = forms
            .ptdf
            .rows
            .iter()
            .find(|r| r.name.starts_with("balance"))
            .unwrap();
        assert_eq!(balance.sense, RowSense::Eq);
        assert_eq!(balance.s.len(), 2);
        let dw = balance.s.iter().find(|&&(c, _)| c == 0).unwrap();
        assert_eq!(dw.1, -1.0);
        let dd = balance.s.iter().find(|&&(c, _)| c == 1).unwrap();
        assert_eq!(dd.1, 1.0);
        // rhs = D - forecast
        assert_eq!(balance.rhs, 50.0 - 20.0);
    }

    #[test]
    fn product_costs_derive_from_band_and_forecast() {
        // For the single-bus balance row: q = j_coeff + g_coeff * w =
        // -w_hat + w. Upper side with w_u = 60: q = 40.
        let system = fixtures::subproblem_single_bus();
        let forms = forms_for(&system);
        let mut band = super::super::Band::at_forecast(&system);
        band.upper[0][0] = 60.0;
        let w_flat = band.flatten(system.horizon);
        let balance_row = forms
            .ptdf
            .rows
            .iter()
            .position(|r| r.name.starts_with("balance"))
            .unwrap();
        let up_col = wv_index(0, 0, BandSide::Upper, 1);
        let q = forms
            .ptdf
            .products
            .iter()
            .find(|p| p.row == balance_row && p.v_col == up_col)
            .map(|p| forms.ptdf.product_cost(p, &w_flat))
            .unwrap();
        assert!((q - 40.0).abs() < 1e-12);
    }
}
