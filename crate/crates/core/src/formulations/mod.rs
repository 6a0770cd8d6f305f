//! Optimization model assembly: compact recourse matrices, the master
//! problem, both checking-subproblem variants, cuts, the extensive form, and
//! the deterministic/robust baselines.

pub mod baselines;
pub mod compact;
pub mod master;
pub mod subproblem;

pub use baselines::{build_duc, ruc_bounds};
pub use compact::{assemble_compact, CompactForm, CompactForms, FormKind, Product, RecourseRow, RowSense};
pub use master::{
    build_extensive_from_vertices, build_master, feasibility_cut, CostBreakdown, FeasibilityCut,
    FirstStageValues, MasterArtifacts, MasterConfig, MasterMode,
};
pub use subproblem::{build_subproblem, SubproblemArtifacts};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::PowerSystem;
use crate::milp::MilpError;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("scenario vertex violates the budget polytope: {0}")]
    VertexOutsideBudget(String),
    #[error("duplicate scenario vertex rejected")]
    DuplicateVertex,
    #[error("degenerate feasibility cut: subproblem duals are all zero")]
    DegenerateCut,
    #[error("vertex set size {0} exceeds cap {1}")]
    VertexCapExceeded(usize, usize),
    #[error("infeasible reserve level: {0}")]
    InfeasibleReserve(String),
    #[error("risk tangents cover {got} farms, system has {want}")]
    TangentShape { got: usize, want: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Wind-side deviation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandSide {
    Upper,
    Lower,
}

/// Index of (farm, period, side) into the flattened w / v vectors of the
/// compact forms: upper and lower interleave per (m, t) cell.
pub fn wv_index(m: usize, t: usize, side: BandSide, horizon: usize) -> usize {
    (m * horizon + t) * 2
        + match side {
            BandSide::Upper => 0,
            BandSide::Lower => 1,
        }
}

/// Inverse of [`wv_index`].
pub fn wv_unpack(idx: usize, horizon: usize) -> (usize, usize, BandSide) {
    let side = if idx % 2 == 0 {
        BandSide::Upper
    } else {
        BandSide::Lower
    };
    let cell = idx / 2;
    (cell / horizon, cell % horizon, side)
}

/// Uncertainty budgets: how many periods per farm and farms per period may
/// deviate to a band edge simultaneously. Integral by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub gamma_t: u32,
    pub gamma_s: u32,
}

/// Commitment matrix u[g][t].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub on: Vec<Vec<bool>>,
}

impl Commitment {
    pub fn value(&self, g: usize, t: usize) -> f64 {
        if self.on[g][t] {
            1.0
        } else {
            0.0
        }
    }
}

/// Admissible wind band, [farm][period].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub upper: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
}

impl Band {
    /// Band pinned to the forecast (zero width).
    pub fn at_forecast(system: &PowerSystem) -> Self {
        let forecast: Vec<Vec<f64>> = system.wind_farms.iter().map(|w| w.forecast.clone()).collect();
        Self {
            upper: forecast.clone(),
            lower: forecast,
        }
    }

    /// Widest physical band: [0, w_max] everywhere.
    pub fn full(system: &PowerSystem) -> Self {
        Self {
            upper: system
                .wind_farms
                .iter()
                .map(|w| vec![w.w_max; system.horizon])
                .collect(),
            lower: system
                .wind_farms
                .iter()
                .map(|w| vec![0.0; system.horizon])
                .collect(),
        }
    }

    /// Flattened copy matching the compact forms' w/v indexing.
    pub fn flatten(&self, horizon: usize) -> Vec<f64> {
        let m = self.upper.len();
        let mut out = vec![0.0; 2 * m * horizon];
        for (farm, (up, lo)) in self.upper.iter().zip(&self.lower).enumerate() {
            for t in 0..horizon {
                out[wv_index(farm, t, BandSide::Upper, horizon)] = up[t];
                out[wv_index(farm, t, BandSide::Lower, horizon)] = lo[t];
            }
        }
        out
    }
}

/// A binary uncertainty realization: which farms deviate to which band edge
/// in which period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioVertex {
    /// up[m][t]: farm m sits at its upper bound in period t.
    pub up: Vec<Vec<bool>>,
    /// down[m][t]: farm m sits at its lower bound in period t.
    pub down: Vec<Vec<bool>>,
}

impl ScenarioVertex {
    pub fn zero(n_farms: usize, horizon: usize) -> Self {
        Self {
            up: vec![vec![false; horizon]; n_farms],
            down: vec![vec![false; horizon]; n_farms],
        }
    }

    pub fn n_farms(&self) -> usize {
        self.up.len()
    }

    pub fn horizon(&self) -> usize {
        self.up.first().map_or(0, Vec::len)
    }

    pub fn is_zero(&self) -> bool {
        self.up.iter().chain(&self.down).all(|r| r.iter().all(|&b| !b))
    }

    /// Value of the flattened v component for this vertex.
    pub fn v_value(&self, idx: usize) -> f64 {
        let (m, t, side) = wv_unpack(idx, self.horizon());
        let hit = match side {
            BandSide::Upper => self.up[m][t],
            BandSide::Lower => self.down[m][t],
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }

    /// Checks the budget polytope rows: at most one side per cell, at most
    /// gamma_t deviating periods per farm, gamma_s deviating farms per period.
    pub fn satisfies(&self, budget: &Budget) -> Result<(), FormError> {
        let (m_count, horizon) = (self.n_farms(), self.horizon());
        for m in 0..m_count {
            let mut per_farm = 0u32;
            for t in 0..horizon {
                if self.up[m][t] && self.down[m][t] {
                    return Err(FormError::VertexOutsideBudget(format!(
                        "farm {m} period {t} deviates both ways"
                    )));
                }
                per_farm += (self.up[m][t] || self.down[m][t]) as u32;
            }
            if per_farm > budget.gamma_t {
                return Err(FormError::VertexOutsideBudget(format!(
                    "farm {m} deviates in {per_farm} periods > gamma_t {}",
                    budget.gamma_t
                )));
            }
        }
        for t in 0..horizon {
            let per_period: u32 = (0..m_count)
                .map(|m| (self.up[m][t] || self.down[m][t]) as u32)
                .sum();
            if per_period > budget.gamma_s {
                return Err(FormError::VertexOutsideBudget(format!(
                    "period {t}: {per_period} farms deviate > gamma_s {}",
                    budget.gamma_s
                )));
            }
        }
        Ok(())
    }

    /// Realized wind per farm and period for a given band.
    pub fn realized_wind(&self, system: &PowerSystem, band: &Band) -> Vec<Vec<f64>> {
        system
            .wind_farms
            .iter()
            .enumerate()
            .map(|(m, farm)| {
                (0..system.horizon)
                    .map(|t| {
                        if self.up[m][t] {
                            band.upper[m][t]
                        } else if self.down[m][t] {
                            band.lower[m][t]
                        } else {
                            farm.forecast[t]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wv_index_round_trips() {
        let horizon = 5;
        let mut seen = std::collections::HashSet::new();
        for m in 0..3 {
            for t in 0..horizon {
                for side in [BandSide::Upper, BandSide::Lower] {
                    let idx = wv_index(m, t, side, horizon);
                    assert!(seen.insert(idx));
                    assert_eq!(wv_unpack(idx, horizon), (m, t, side));
                }
            }
        }
        assert_eq!(seen.len(), 2 * 3 * horizon);
    }

    #[test]
    fn vertex_budget_checks() {
        let budget = Budget {
            gamma_t: 1,
            gamma_s: 1,
        };
        let mut v = ScenarioVertex::zero(2, 2);
        v.up[0][0] = true;
        assert!(v.satisfies(&budget).is_ok());
        v.up[0][1] = true;
        assert!(v.satisfies(&budget).is_err()); // two periods for farm 0
        v.up[0][1] = false;
        v.down[1][0] = true;
        assert!(v.satisfies(&budget).is_err()); // two farms in period 0
        let mut both = ScenarioVertex::zero(1, 1);
        both.up[0][0] = true;
        both.down[0][0] = true;
        assert!(both
            .satisfies(&Budget {
                gamma_t: 5,
                gamma_s: 5
            })
            .is_err());
    }
}
