//! Forecast-error modeling and operational-risk evaluation.
//!
//! The expected loss outside an admissible band [w_l, w_u] is an integral of
//! curtailment and shedding penalties against a piecewise-linear forecast
//! error density. Because the density is piecewise linear the integrals have
//! closed forms, and because the loss is convex in each bound it admits a
//! tangent-line under-approximation that the master problem consumes as the
//! (Q, w) coupling rows.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::grid::PowerSystem;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("relative deviation sigma must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("quantile level {0} outside (0, 0.5)")]
    BadAlphaLevel(f64),
    #[error("empty error support after clipping: [{0}, {1}]")]
    EmptySupport(f64, f64),
    #[error("bound ordering violated: need 0 <= w_l ({wl}) <= w_hat ({what}) <= w_u ({wu}) <= w_max ({wmax})")]
    BoundOrdering {
        wl: f64,
        wu: f64,
        what: f64,
        wmax: f64,
    },
    #[error("tangents per segment must be >= 1")]
    ZeroTangents,
    #[error("prices must be non-negative, got {0} at period {1}")]
    NegativePrice(f64, usize),
    #[error("price series has {got} entries, horizon is {want}")]
    PriceLength { got: usize, want: usize },
    #[error("sigma list has {got} entries, system has {want} wind farms")]
    SigmaLength { got: usize, want: usize },
}

/// Curtailment (e_t) and load-shedding (f_t) prices per period, $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub curtailment: Vec<f64>,
    pub shedding: Vec<f64>,
}

impl Prices {
    /// Validates lengths and signs; returns soft warnings for periods where
    /// shedding is not priced above curtailment.
    pub fn validate(&self, horizon: usize) -> Result<Vec<String>, RiskError> {
        for (name, series) in [("curtailment", &self.curtailment), ("shedding", &self.shedding)] {
            if series.len() != horizon {
                return Err(RiskError::PriceLength {
                    got: series.len(),
                    want: horizon,
                });
            }
            if let Some((t, &p)) = series.iter().enumerate().find(|(_, &p)| p < 0.0) {
                let _ = name;
                return Err(RiskError::NegativePrice(p, t + 1));
            }
        }
        Ok(self
            .curtailment
            .iter()
            .zip(&self.shedding)
            .enumerate()
            .filter(|(_, (e, f))| f <= e)
            .map(|(t, (e, f))| {
                format!("period {}: shedding price {f} not above curtailment price {e}", t + 1)
            })
            .collect())
    }
}

/// Per-period error standard deviation: sigma_m * forecast * (1 + exp(-decay*t))
/// with t the 1-based period index. The transient factor fades toward 1.
pub fn sigma_profile(sigma_rel: f64, forecast: &[f64], decay: f64) -> Result<Vec<f64>, RiskError> {
    if sigma_rel < 0.0 {
        return Err(RiskError::NegativeSigma(sigma_rel));
    }
    Ok(forecast
        .iter()
        .enumerate()
        .map(|(t0, &w)| sigma_rel * w * (1.0 + (-decay * (t0 + 1) as f64).exp()))
        .collect())
}

/// Piecewise-linear forecast-error density on a clipped support. A zero
/// standard deviation collapses to a point mass at zero error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearPdf {
    /// Support in MW of error, [lo, hi] = [-w_hat, w_max - w_hat].
    pub support: (f64, f64),
    pub kind: PdfKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PdfKind {
    PointMass,
    Linear {
        /// Strictly increasing breakpoints, first = support.0, last = support.1.
        breakpoints: Vec<f64>,
        /// Density values at the breakpoints, unit integral.
        density: Vec<f64>,
    },
}

impl PiecewiseLinearPdf {
    pub fn is_point_mass(&self) -> bool {
        matches!(self.kind, PdfKind::PointMass)
    }

    pub fn n_segments(&self) -> usize {
        match &self.kind {
            PdfKind::PointMass => 0,
            PdfKind::Linear { breakpoints, .. } => breakpoints.len() - 1,
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        match &self.kind {
            PdfKind::PointMass => 0.0,
            PdfKind::Linear {
                breakpoints,
                density,
            } => {
                if x < breakpoints[0] || x > *breakpoints.last().unwrap() {
                    return 0.0;
                }
                let k = match breakpoints.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
                    Ok(i) => return density[i],
                    Err(i) => i - 1,
                };
                let (d0, d1) = (breakpoints[k], breakpoints[k + 1]);
                let frac = (x - d0) / (d1 - d0);
                density[k] + frac * (density[k + 1] - density[k])
            }
        }
    }

    /// Integrated mass (exact for a piecewise-linear density).
    pub fn mass(&self) -> f64 {
        match &self.kind {
            PdfKind::PointMass => 1.0,
            PdfKind::Linear {
                breakpoints,
                density,
            } => breakpoints
                .windows(2)
                .zip(density.windows(2))
                .map(|(b, d)| 0.5 * (d[0] + d[1]) * (b[1] - b[0]))
                .sum(),
        }
    }

    /// Exact integral of (x - c) * y(x) over [a, b] intersected with the support.
    pub fn first_moment_about(&self, c: f64, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support;
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return 0.0;
        }
        match &self.kind {
            PdfKind::PointMass => 0.0,
            PdfKind::Linear {
                breakpoints,
                density,
            } => {
                let mut total = 0.0;
                for k in 0..breakpoints.len() - 1 {
                    let (d0, d1) = (breakpoints[k], breakpoints[k + 1]);
                    let (p, q) = (a.max(d0), b.min(d1));
                    if p >= q {
                        continue;
                    }
                    // y = alpha + beta x on this segment
                    let beta = (density[k + 1] - density[k]) / (d1 - d0);
                    let alpha = density[k] - beta * d0;
                    // antiderivative of (x - c)(alpha + beta x)
                    let anti = |x: f64| {
                        beta * x * x * x / 3.0 + (alpha - c * beta) * x * x / 2.0 - c * alpha * x
                    };
                    total += anti(q) - anti(p);
                }
                total
            }
        }
    }

    /// Probability mass in [a, b] intersected with the support.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support;
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return 0.0;
        }
        match &self.kind {
            PdfKind::PointMass => {
                if a <= 0.0 && 0.0 <= b {
                    1.0
                } else {
                    0.0
                }
            }
            PdfKind::Linear {
                breakpoints,
                density,
            } => {
                let mut total = 0.0;
                for k in 0..breakpoints.len() - 1 {
                    let (d0, d1) = (breakpoints[k], breakpoints[k + 1]);
                    let (p, q) = (a.max(d0), b.min(d1));
                    if p >= q {
                        continue;
                    }
                    let beta = (density[k + 1] - density[k]) / (d1 - d0);
                    let alpha = density[k] - beta * d0;
                    let anti = |x: f64| alpha * x + beta * x * x / 2.0;
                    total += anti(q) - anti(p);
                }
                total
            }
        }
    }
}

/// Builds the clipped, renormalized piecewise-linear approximation of a
/// zero-mean Gaussian with standard deviation `sigma_mw`.
///
/// Interior breakpoints sit at the Gaussian quantiles of each level and its
/// mirror (1 - level), plus the median; the default levels
/// [0.005, 0.03, 0.495] yield the eight-segment layout used throughout.
pub fn build_pwl_pdf(
    sigma_mw: f64,
    alpha_levels: &[f64],
    support: (f64, f64),
) -> Result<PiecewiseLinearPdf, RiskError> {
    if sigma_mw < 0.0 {
        return Err(RiskError::NegativeSigma(sigma_mw));
    }
    let (lo, hi) = support;
    if sigma_mw == 0.0 {
        return Ok(PiecewiseLinearPdf {
            support,
            kind: PdfKind::PointMass,
        });
    }
    if lo >= hi {
        return Err(RiskError::EmptySupport(lo, hi));
    }
    for &a in alpha_levels {
        if !(0.0 < a && a < 0.5) {
            return Err(RiskError::BadAlphaLevel(a));
        }
    }

    let normal = Normal::new(0.0, sigma_mw).expect("positive sigma");
    let mut points = vec![lo, hi, 0.0_f64.clamp(lo, hi)];
    for &a in alpha_levels {
        for p in [a, 1.0 - a] {
            let x = normal.inverse_cdf(p);
            if x > lo && x < hi {
                points.push(x);
            }
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = 1e-12 * sigma_mw.max(hi - lo);
    points.dedup_by(|a, b| (*a - *b).abs() <= eps);

    let density: Vec<f64> = points.iter().map(|&x| normal.pdf(x)).collect();
    let mut pdf = PiecewiseLinearPdf {
        support,
        kind: PdfKind::Linear {
            breakpoints: points,
            density,
        },
    };
    let mass = pdf.mass();
    if mass <= 0.0 {
        return Err(RiskError::EmptySupport(lo, hi));
    }
    if let PdfKind::Linear { density, .. } = &mut pdf.kind {
        for d in density.iter_mut() {
            *d /= mass;
        }
    }
    Ok(pdf)
}

fn check_bounds(wu: f64, wl: f64, w_hat: f64, w_max: f64) -> Result<(), RiskError> {
    let tol = 1e-9 * w_max.max(1.0);
    if wl < -tol || wl > w_hat + tol || wu < w_hat - tol || wu > w_max + tol {
        return Err(RiskError::BoundOrdering {
            wl,
            wu,
            what: w_hat,
            wmax: w_max,
        });
    }
    Ok(())
}

/// Expected loss above the upper bound: e * integral over [wu - w_hat, hi]
/// of (delta - wu + w_hat) y(delta).
fn upper_loss(pdf: &PiecewiseLinearPdf, wu: f64, w_hat: f64, e: f64) -> f64 {
    let a = wu - w_hat;
    e * pdf.first_moment_about(a, a, f64::INFINITY)
}

/// Expected loss below the lower bound: f * integral over [lo, wl - w_hat]
/// of (wl - w_hat - delta) y(delta).
fn lower_loss(pdf: &PiecewiseLinearPdf, wl: f64, w_hat: f64, f: f64) -> f64 {
    let b = wl - w_hat;
    -f * pdf.first_moment_about(b, f64::NEG_INFINITY, b)
}

/// Exact operational risk of the band [wl, wu] under the given density,
/// evaluated in closed form per density segment.
pub fn risk_exact(
    wu: f64,
    wl: f64,
    pdf: &PiecewiseLinearPdf,
    e: f64,
    f: f64,
    w_hat: f64,
    w_max: f64,
) -> Result<f64, RiskError> {
    check_bounds(wu, wl, w_hat, w_max)?;
    Ok(upper_loss(pdf, wu, w_hat, e) + lower_loss(pdf, wl, w_hat, f))
}

/// One tangent line `slope * w + intercept` to the exact risk, tagged with
/// the density segment and tangent-point ordinals that generated it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentLine {
    pub slope: f64,
    pub intercept: f64,
    pub segment: usize,
    pub point: usize,
}

impl TangentLine {
    pub fn at(&self, w: f64) -> f64 {
        self.slope * w + self.intercept
    }
}

/// Tangent families for one (farm, period): `upper` under-approximates the
/// loss as a function of w_u, `lower` as a function of w_l.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentSet {
    pub upper: Vec<TangentLine>,
    pub lower: Vec<TangentLine>,
}

impl TangentSet {
    pub fn envelope_upper(&self, wu: f64) -> f64 {
        self.upper.iter().map(|t| t.at(wu)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn envelope_lower(&self, wl: f64) -> f64 {
        self.lower.iter().map(|t| t.at(wl)).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn tangent_abscissae(seg_lo: f64, seg_hi: f64, z: usize) -> Vec<f64> {
    if z == 1 {
        return vec![0.5 * (seg_lo + seg_hi)];
    }
    (0..z)
        .map(|i| seg_lo + (seg_hi - seg_lo) * i as f64 / (z - 1) as f64)
        .collect()
}

/// Builds Z tangents per density segment to each of the two convex loss
/// functions. Tangency makes the envelope exact at every abscissa and a
/// lower bound everywhere else.
pub fn build_risk_tangents(
    pdf: &PiecewiseLinearPdf,
    e: f64,
    f: f64,
    w_hat: f64,
    w_max: f64,
    z: usize,
) -> Result<TangentSet, RiskError> {
    if z == 0 {
        return Err(RiskError::ZeroTangents);
    }
    if pdf.is_point_mass() {
        let flat = TangentLine {
            slope: 0.0,
            intercept: 0.0,
            segment: 0,
            point: 0,
        };
        return Ok(TangentSet {
            upper: vec![flat],
            lower: vec![flat],
        });
    }
    let (lo, hi) = pdf.support;
    let breakpoints = match &pdf.kind {
        PdfKind::Linear { breakpoints, .. } => breakpoints,
        PdfKind::PointMass => unreachable!(),
    };

    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (s, pair) in breakpoints.windows(2).enumerate() {
        let (d0, d1) = (pair[0], pair[1]);
        // Upper family lives on delta in [0, hi] (w_u in [w_hat, w_max]).
        if d1 > 0.0 {
            let seg = (d0.max(0.0), d1.min(hi));
            for (i, delta) in tangent_abscissae(seg.0, seg.1, z).into_iter().enumerate() {
                let w = delta + w_hat;
                let slope = -e * pdf.mass_between(delta, f64::INFINITY);
                let value = upper_loss(pdf, w, w_hat, e);
                upper.push(TangentLine {
                    slope,
                    intercept: value - slope * w,
                    segment: s,
                    point: i,
                });
            }
        }
        // Lower family lives on delta in [lo, 0] (w_l in [0, w_hat]).
        if d0 < 0.0 {
            let seg = (d0.max(lo), d1.min(0.0));
            for (i, delta) in tangent_abscissae(seg.0, seg.1, z).into_iter().enumerate() {
                let w = delta + w_hat;
                let slope = f * pdf.mass_between(f64::NEG_INFINITY, delta);
                let value = lower_loss(pdf, w, w_hat, f);
                lower.push(TangentLine {
                    slope,
                    intercept: value - slope * w,
                    segment: s,
                    point: i,
                });
            }
        }
    }
    let _ = w_max;
    Ok(TangentSet { upper, lower })
}

/// Tangent coefficients for every (farm, period) of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTangents {
    /// Indexed [farm][period].
    pub sets: Vec<Vec<TangentSet>>,
}

impl RiskTangents {
    pub fn n_farms(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, m: usize, t: usize) -> &TangentSet {
        &self.sets[m][t]
    }
}

/// Everything the risk side contributes to a run: per-(m,t) deviations,
/// densities, and tangent envelopes, plus the prices they were built with.
#[derive(Debug, Clone)]
pub struct RiskModel {
    pub sigma: Vec<Vec<f64>>,
    pub pdfs: Vec<Vec<PiecewiseLinearPdf>>,
    pub tangents: RiskTangents,
    pub prices: Prices,
    pub price_warnings: Vec<String>,
}

/// Parameters of the error model and its PWL treatment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Relative deviation per farm, dimensionless.
    pub sigma_rel: Vec<f64>,
    /// Decay rate of the transient factor in the sigma profile.
    pub sigma_decay: f64,
    /// Quantile levels for interior density breakpoints, each in (0, 0.5).
    pub alpha_levels: Vec<f64>,
    /// Tangents per density segment (Z).
    pub tangents_per_segment: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            sigma_rel: Vec::new(),
            sigma_decay: 1.0,
            alpha_levels: vec![0.005, 0.03, 0.495],
            tangents_per_segment: 4,
        }
    }
}

pub fn build_risk_model(
    system: &PowerSystem,
    config: &RiskConfig,
    prices: &Prices,
) -> Result<RiskModel, RiskError> {
    if config.sigma_rel.len() != system.n_wind_farms() {
        return Err(RiskError::SigmaLength {
            got: config.sigma_rel.len(),
            want: system.n_wind_farms(),
        });
    }
    let price_warnings = prices.validate(system.horizon)?;

    let mut sigma = Vec::new();
    let mut pdfs = Vec::new();
    let mut sets = Vec::new();
    for (m, farm) in system.wind_farms.iter().enumerate() {
        let sigma_m = sigma_profile(config.sigma_rel[m], &farm.forecast, config.sigma_decay)?;
        let mut farm_pdfs = Vec::new();
        let mut farm_sets = Vec::new();
        for t in 0..system.horizon {
            let w_hat = farm.forecast[t];
            let support = (-w_hat, farm.w_max - w_hat);
            let pdf = build_pwl_pdf(sigma_m[t], &config.alpha_levels, support)?;
            let set = build_risk_tangents(
                &pdf,
                prices.curtailment[t],
                prices.shedding[t],
                w_hat,
                farm.w_max,
                config.tangents_per_segment,
            )?;
            farm_pdfs.push(pdf);
            farm_sets.push(set);
        }
        sigma.push(sigma_m);
        pdfs.push(farm_pdfs);
        sets.push(farm_sets);
    }
    Ok(RiskModel {
        sigma,
        pdfs,
        tangents: RiskTangents { sets },
        prices: prices.clone(),
        price_warnings,
    })
}

impl RiskModel {
    /// Exact (closed-form) risk of one band entry.
    pub fn risk_exact_at(
        &self,
        system: &PowerSystem,
        m: usize,
        t: usize,
        wu: f64,
        wl: f64,
    ) -> Result<f64, RiskError> {
        let farm = &system.wind_farms[m];
        risk_exact(
            wu,
            wl,
            &self.pdfs[m][t],
            self.prices.curtailment[t],
            self.prices.shedding[t],
            farm.forecast[t],
            farm.w_max,
        )
    }

    /// Exact risk summed over all farms and periods for a full band.
    pub fn band_risk_total(
        &self,
        system: &PowerSystem,
        wu: &[Vec<f64>],
        wl: &[Vec<f64>],
    ) -> Result<f64, RiskError> {
        let mut total = 0.0;
        for m in 0..system.n_wind_farms() {
            for t in 0..system.horizon {
                total += self.risk_exact_at(system, m, t, wu[m][t], wl[m][t])?;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent trapezoid quadrature of the risk integrand.
    fn risk_quadrature(
        pdf: &PiecewiseLinearPdf,
        wu: f64,
        wl: f64,
        e: f64,
        f: f64,
        w_hat: f64,
        n: usize,
    ) -> f64 {
        let (lo, hi) = pdf.support;
        let integrate = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| -> f64 {
            if a >= b {
                return 0.0;
            }
            let h = (b - a) / n as f64;
            let mut sum = 0.5 * (g(a) + g(b));
            for i in 1..n {
                sum += g(a + i as f64 * h);
            }
            sum * h
        };
        let au = wu - w_hat;
        let bl = wl - w_hat;
        let up = integrate(au, hi, &|x| (x - au) * pdf.density_at(x));
        let dn = integrate(lo, bl, &|x| (bl - x) * pdf.density_at(x));
        e * up + f * dn
    }

    fn test_pdf(sigma: f64, w_hat: f64, w_max: f64) -> PiecewiseLinearPdf {
        build_pwl_pdf(sigma, &[0.005, 0.03, 0.495], (-w_hat, w_max - w_hat)).unwrap()
    }

    #[test]
    fn sigma_profile_examples() {
        // Transient factor decays: late periods approach sigma * forecast.
        let forecast = vec![100.0; 30];
        let s = sigma_profile(0.2, &forecast, 1.0).unwrap();
        assert_abs_diff_eq!(s[29], 20.0, epsilon = 1e-9);
        assert!(s[0] > s[29]);
        // Zero forecast gives zero deviation.
        let s = sigma_profile(0.2, &[0.0, 50.0], 1.0).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(sigma_profile(-0.1, &forecast, 1.0).is_err());
    }

    #[test]
    fn pdf_mass_is_one_and_symmetric() {
        let pdf = test_pdf(10.0, 250.0, 500.0);
        assert_abs_diff_eq!(pdf.mass(), 1.0, epsilon = 1e-9);
        assert_eq!(pdf.n_segments(), 8);
        if let PdfKind::Linear { breakpoints, .. } = &pdf.kind {
            for &x in breakpoints {
                assert_abs_diff_eq!(pdf.density_at(x), pdf.density_at(-x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pdf_moments_close_to_gaussian() {
        let sigma = 10.0;
        let pdf = test_pdf(sigma, 250.0, 500.0);
        let (lo, hi) = pdf.support;
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let (mut mass, mut mean, mut second) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let y = w * pdf.density_at(x);
            mass += y;
            mean += y * x;
            second += y * x * x;
        }
        mass *= h;
        mean *= h;
        second *= h;
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        assert!(mean.abs() <= 0.05 * sigma, "mean {mean}");
        let std = (second - mean * mean).sqrt();
        assert!((std - sigma).abs() <= 0.1 * sigma, "std {std}");
    }

    #[test]
    fn risk_zero_at_full_band() {
        let pdf = test_pdf(20.0, 100.0, 500.0);
        let r = risk_exact(500.0, 0.0, &pdf, 20.0, 100.0, 100.0, 500.0).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_width_band_is_mirror_expectation() {
        // At w_u = w_l = w_hat with a symmetric density both integrals become
        // E[max(delta, 0)], so risk = (e + f) * E[max(delta, 0)].
        let (w_hat, w_max, sigma) = (250.0, 500.0, 15.0);
        let pdf = test_pdf(sigma, w_hat, w_max);
        let (lo, hi) = pdf.support;
        let n = 100_000;
        let h = (hi - lo) / n as f64;
        let mut e_plus = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            e_plus += w * x.max(0.0) * pdf.density_at(x);
        }
        e_plus *= h;
        let r = risk_exact(w_hat, w_hat, &pdf, 20.0, 100.0, w_hat, w_max).unwrap();
        assert_abs_diff_eq!(r, 120.0 * e_plus, epsilon = 1e-3 * r.abs());
    }

    #[test]
    fn closed_form_matches_quadrature_on_random_bands() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (w_hat, w_max) = (200.0, 500.0);
        let pdf = test_pdf(35.0, w_hat, w_max);
        for _ in 0..25 {
            let wu = rng.random_range(w_hat..w_max);
            let wl = rng.random_range(0.0..w_hat);
            let exact = risk_exact(wu, wl, &pdf, 20.0, 100.0, w_hat, w_max).unwrap();
            let quad = risk_quadrature(&pdf, wu, wl, 20.0, 100.0, w_hat, 100_000);
            let tol = 1e-6 * exact.abs().max(1e-9);
            assert!((exact - quad).abs() <= tol, "exact {exact} quad {quad}");
        }
    }

    #[test]
    fn risk_rejects_bad_ordering() {
        let pdf = test_pdf(10.0, 100.0, 500.0);
        assert!(risk_exact(90.0, 0.0, &pdf, 1.0, 1.0, 100.0, 500.0).is_err());
        assert!(risk_exact(200.0, 150.0, &pdf, 1.0, 1.0, 100.0, 500.0).is_err());
    }

    #[test]
    fn tangent_envelope_below_exact_and_tight_at_abscissae() {
        let (w_hat, w_max, e, f) = (200.0, 500.0, 20.0, 100.0);
        let pdf = test_pdf(30.0, w_hat, w_max);
        let set = build_risk_tangents(&pdf, e, f, w_hat, w_max, 4).unwrap();
        for line in &set.upper {
            assert!(line.slope <= 1e-12);
        }
        for line in &set.lower {
            assert!(line.slope >= -1e-12);
        }
        // Envelope is a lower bound everywhere on a 100-point grid.
        for i in 0..=100 {
            let wu = w_hat + (w_max - w_hat) * i as f64 / 100.0;
            let exact = upper_loss(&pdf, wu, w_hat, e);
            assert!(set.envelope_upper(wu) <= exact + 1e-9 * exact.abs().max(1.0));
            let wl = w_hat * i as f64 / 100.0;
            let exact = lower_loss(&pdf, wl, w_hat, f);
            assert!(set.envelope_lower(wl) <= exact + 1e-9 * exact.abs().max(1.0));
        }
        // Equality at every tangent abscissa: reconstruct w from the line by
        // re-deriving the touch point value.
        for line in &set.upper {
            // slope*w + intercept == upper_loss(w) at the abscissa. Since the
            // intercept was defined from the value there, check a fine grid of
            // candidate touch points instead of trusting interior state.
            let touched = (0..=2000).any(|i| {
                let wu = w_hat + (w_max - w_hat) * i as f64 / 2000.0;
                let exact = upper_loss(&pdf, wu, w_hat, e);
                (line.at(wu) - exact).abs() <= 1e-8 * exact.abs().max(1e-9)
            });
            assert!(touched, "upper tangent never touches: {line:?}");
        }
    }

    #[test]
    fn tangent_at_full_admissibility_is_zero_line() {
        let (w_hat, w_max) = (200.0, 500.0);
        let pdf = test_pdf(30.0, w_hat, w_max);
        let set = build_risk_tangents(&pdf, 20.0, 100.0, w_hat, w_max, 4).unwrap();
        let at_top = set
            .upper
            .iter()
            .find(|l| l.slope == 0.0 && l.intercept == 0.0);
        assert!(at_top.is_some(), "no (0,0) tangent at w_max");
        let at_bottom = set
            .lower
            .iter()
            .find(|l| l.slope == 0.0 && l.intercept == 0.0);
        assert!(at_bottom.is_some(), "no (0,0) tangent at w_l = 0");
    }

    #[test]
    fn risk_monotone_and_convex_on_grid() {
        let (w_hat, w_max, e, f) = (150.0, 400.0, 25.0, 90.0);
        let pdf = test_pdf(20.0, w_hat, w_max);
        let n = 60;
        let mut prev = f64::INFINITY;
        let mut prev_slope = f64::NEG_INFINITY;
        for i in 0..=n {
            let wu = w_hat + (w_max - w_hat) * i as f64 / n as f64;
            let r = upper_loss(&pdf, wu, w_hat, e);
            assert!(r <= prev + 1e-9, "upper loss not nonincreasing");
            if i > 0 {
                let slope = (r - prev) / ((w_max - w_hat) / n as f64);
                assert!(slope + 1e-9 >= prev_slope, "upper loss not convex");
                prev_slope = slope;
            }
            prev = r;
        }
        // Lower loss nondecreasing and convex in w_l.
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let wl = w_hat * i as f64 / n as f64;
            let r = lower_loss(&pdf, wl, w_hat, f);
            assert!(r + 1e-9 >= prev.min(r), "lower loss negative dip");
            assert!(r >= prev - 1e-9 || prev == f64::NEG_INFINITY);
            prev = r;
        }
    }

    #[test]
    fn widening_never_increases_risk() {
        let (w_hat, w_max) = (150.0, 400.0);
        let pdf = test_pdf(25.0, w_hat, w_max);
        let narrow = risk_exact(200.0, 100.0, &pdf, 20.0, 80.0, w_hat, w_max).unwrap();
        let wide = risk_exact(260.0, 60.0, &pdf, 20.0, 80.0, w_hat, w_max).unwrap();
        assert!(wide <= narrow + 1e-12);
    }

    #[test]
    fn point_mass_degenerates_cleanly() {
        let pdf = build_pwl_pdf(0.0, &[0.005, 0.03, 0.495], (0.0, 100.0)).unwrap();
        assert!(pdf.is_point_mass());
        let r = risk_exact(50.0, 0.0, &pdf, 10.0, 10.0, 0.0, 100.0).unwrap();
        assert_eq!(r, 0.0);
        let set = build_risk_tangents(&pdf, 10.0, 10.0, 0.0, 100.0, 4).unwrap();
        assert_eq!(set.upper.len(), 1);
        assert_eq!(set.upper[0].slope, 0.0);
    }

    #[test]
    fn bad_alpha_levels_rejected() {
        assert!(build_pwl_pdf(10.0, &[0.6], (-50.0, 50.0)).is_err());
        assert!(build_pwl_pdf(10.0, &[0.0], (-50.0, 50.0)).is_err());
    }

    #[test]
    fn empty_support_rejected() {
        assert!(matches!(
            build_pwl_pdf(10.0, &[0.1], (5.0, 5.0)),
            Err(RiskError::EmptySupport(..))
        ));
    }
}
