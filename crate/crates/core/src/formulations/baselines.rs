//! Baseline commitment models: deterministic UC with spinning reserve, and
//! the fixed confidence-band bounds used by the robust baseline.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::grid::{PowerSystem, Ptdf};

use super::compact::CompactForm;
use super::master::{build_master, MasterArtifacts, MasterConfig, MasterMode};
use super::{Band, FormError};

/// Deterministic UC at forecast wind plus a per-period spinning reserve
/// requirement `sum(u p_max) - sum(p_hat) >= reserve_rate * demand`.
pub fn build_duc(
    system: &PowerSystem,
    ptdf: &Ptdf,
    recourse: &CompactForm,
    reserve_rate: f64,
    cost_segments: usize,
) -> Result<MasterArtifacts, FormError> {
    if reserve_rate < 0.0 {
        return Err(FormError::Invalid(format!(
            "reserve rate must be >= 0, got {reserve_rate}"
        )));
    }
    let config = MasterConfig {
        mode: MasterMode::Duc { reserve_rate },
        penalty_k: 0.0,
        risk_cap: None,
        cost_segments,
        width_tiebreak: 0.0,
    };
    build_master(system, ptdf, recourse, None, &config, &[], &[])
}

/// Symmetric confidence band at level `alpha`: forecast plus/minus the
/// Gaussian quantile of (1+alpha)/2 times the per-period deviation, clipped
/// to the physical range.
pub fn ruc_bounds(system: &PowerSystem, sigma: &[Vec<f64>], alpha: f64) -> Result<Band, FormError> {
    if !(0.5 < alpha && alpha < 1.0) {
        return Err(FormError::Invalid(format!(
            "confidence level must be in (0.5, 1), got {alpha}"
        )));
    }
    if sigma.len() != system.n_wind_farms() {
        return Err(FormError::Dimension(format!(
            "sigma covers {} farms, system has {}",
            sigma.len(),
            system.n_wind_farms()
        )));
    }
    let q = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + alpha));
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (m, farm) in system.wind_farms.iter().enumerate() {
        let mut up = Vec::new();
        let mut lo = Vec::new();
        for t in 0..system.horizon {
            let half = q * sigma[m][t];
            up.push((farm.forecast[t] + half).min(farm.w_max));
            lo.push((farm.forecast[t] - half).max(0.0));
        }
        upper.push(up);
        lower.push(lo);
    }
    Ok(Band { upper, lower })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::formulations::assemble_compact;
    use crate::grid::compute_ptdf;
    use crate::milp::{SolveStatus, SolverConfig};

    #[test]
    fn reserve_feasibility_arithmetic() {
        // Single 100 MW generator against 50 MW demand: 10% reserve leaves
        // 50 MW headroom against the 5 MW requirement.
        let system = fixtures::single_bus();
        let ptdf = compute_ptdf(&system).unwrap();
        let forms = assemble_compact(&system, &ptdf);
        let art = build_duc(&system, &ptdf, &forms.ptdf, 0.10, 4).unwrap();
        let out = art.model.solve(&SolverConfig::default()).unwrap();
        assert!(out.is_optimal());

        // Zero reserve is the plain deterministic UC.
        let plain = build_duc(&system, &ptdf, &forms.ptdf, 0.0, 4).unwrap();
        let base = plain.model.solve(&SolverConfig::default()).unwrap();
        assert!((base.objective.unwrap() - 507.0).abs() < 1e-6);

        // An unattainable reserve rate is reported infeasible: capacity 100,
        // demand 50, requirement 100 > headroom 50.
        let heavy = build_duc(&system, &ptdf, &forms.ptdf, 2.0, 4).unwrap();
        let out = heavy.model.solve(&SolverConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    /// Expected quantile frozen from standard normal tables:
    /// Phi^-1(0.975) = 1.959964.
    #[test]
    fn ruc_band_uses_gaussian_quantile() {
        let system = fixtures::subproblem_single_bus();
        // sigma 10 around forecast 20 (w_max 100).
        let sigma = vec![vec![10.0]];
        let band = ruc_bounds(&system, &sigma, 0.95).unwrap();
        assert!((band.upper[0][0] - (20.0 + 19.59964)).abs() < 1e-3);
        assert!((band.lower[0][0] - 0.40036).abs() < 1e-3);

        // Zero deviation collapses to the forecast.
        let band = ruc_bounds(&system, &vec![vec![0.0]], 0.95).unwrap();
        assert_eq!(band.upper[0][0], 20.0);
        assert_eq!(band.lower[0][0], 20.0);

        // Clipping at the installed capacity.
        let band = ruc_bounds(&system, &vec![vec![80.0]], 0.95).unwrap();
        assert_eq!(band.upper[0][0], 100.0);
        assert_eq!(band.lower[0][0], 0.0);
    }
}
