//! Deterministic test systems, from single-bus desk cases up to a synthetic
//! 118-bus reconstruction. Every fixture is produced through the case schema
//! and the full validation path.
//!
//! The 118-bus system is a best-effort reconstruction: it reproduces the
//! published scale (118 buses, 186 lines, 54 generators, three 500 MW wind
//! farms at buses 17/66/94, 24 periods) with synthetic parameters, since the
//! original dataset is not distributable. Results on it are reported, not
//! asserted.

use std::collections::BTreeMap;

use rand::Rng;

use crate::formulations::{Band, Budget, Commitment};
use crate::grid::{load_case, BusDoc, CaseDoc, GeneratorDoc, LineDoc, PowerSystem, WindDoc, CASE_SCHEMA_VERSION};
use crate::risk::{Prices, RiskConfig};

/// A system bundled with the run parameters its tests use.
#[derive(Debug, Clone)]
pub struct Instance {
    pub system: PowerSystem,
    pub prices: Prices,
    pub risk: RiskConfig,
    pub budget: Budget,
}

fn gen_doc(id: &str, bus: u32) -> GeneratorDoc {
    GeneratorDoc {
        id: id.into(),
        bus,
        pmin_mw: 0.0,
        pmax_mw: 100.0,
        ramp_up_mw: 100.0,
        ramp_down_mw: 100.0,
        min_on: 1,
        min_off: 1,
        startup_cost: 0.0,
        no_load_cost: 0.0,
        c2: 0.0,
        c1: 10.0,
        init_on: None,
        init_hours: None,
        init_output_mw: None,
    }
}

/// One bus, one 100 MW generator, 50 MW load, one period. Startup 2,
/// no-load 5, linear cost 10 $/MWh; initially off.
pub fn single_bus() -> PowerSystem {
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "single-bus".into(),
        horizon: 1,
        buses: vec![BusDoc { id: 1, is_ref: true }],
        lines: vec![],
        generators: vec![GeneratorDoc {
            startup_cost: 2.0,
            no_load_cost: 5.0,
            init_on: Some(false),
            init_hours: Some(10),
            ..gen_doc("g1", 1)
        }],
        wind: vec![],
        demand: BTreeMap::from([(1, vec![50.0])]),
    };
    load_case(&doc).unwrap()
}

/// Two buses joined by one line (susceptance 10, from the reference bus).
pub fn two_bus() -> PowerSystem {
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "two-bus".into(),
        horizon: 1,
        buses: vec![BusDoc { id: 1, is_ref: true }, BusDoc { id: 2, is_ref: false }],
        lines: vec![LineDoc {
            id: "l12".into(),
            from: 1,
            to: 2,
            susceptance: 10.0,
            capacity_mw: 100.0,
        }],
        generators: vec![gen_doc("g1", 1)],
        wind: vec![],
        demand: BTreeMap::from([(2, vec![50.0])]),
    };
    load_case(&doc).unwrap()
}

/// Three-bus triangle with equal susceptances, reference at bus 3.
pub fn triangle() -> PowerSystem {
    let line = |id: &str, from: u32, to: u32| LineDoc {
        id: id.into(),
        from,
        to,
        susceptance: 10.0,
        capacity_mw: 100.0,
    };
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "triangle".into(),
        horizon: 1,
        buses: vec![
            BusDoc { id: 1, is_ref: false },
            BusDoc { id: 2, is_ref: false },
            BusDoc { id: 3, is_ref: true },
        ],
        lines: vec![line("l12", 1, 2), line("l23", 2, 3), line("l13", 1, 3)],
        generators: vec![gen_doc("g1", 1)],
        wind: vec![],
        demand: BTreeMap::from([(3, vec![40.0])]),
    };
    load_case(&doc).unwrap()
}

/// One bus, generator on [0, 100], demand 50, one wind farm with forecast 20
/// and capacity 100. The worked checking-subproblem example lives here.
pub fn subproblem_single_bus() -> PowerSystem {
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "subproblem-single-bus".into(),
        horizon: 1,
        buses: vec![BusDoc { id: 1, is_ref: true }],
        lines: vec![],
        generators: vec![gen_doc("g1", 1)],
        wind: vec![WindDoc {
            id: "w1".into(),
            bus: 1,
            wmax_mw: 100.0,
            forecast_mw: vec![20.0],
        }],
        demand: BTreeMap::from([(1, vec![50.0])]),
    };
    load_case(&doc).unwrap()
}

/// The desk instance: 3 buses, 2 generators, 1 wind farm, 2 periods.
/// Sized so that the full wind band is never admissible (the minimum
/// feasible risk level is positive) and recourse ramping binds.
pub fn desk3() -> PowerSystem {
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "desk3".into(),
        horizon: 2,
        buses: vec![
            BusDoc { id: 1, is_ref: true },
            BusDoc { id: 2, is_ref: false },
            BusDoc { id: 3, is_ref: false },
        ],
        lines: vec![
            LineDoc {
                id: "l12".into(),
                from: 1,
                to: 2,
                susceptance: 10.0,
                capacity_mw: 80.0,
            },
            LineDoc {
                id: "l23".into(),
                from: 2,
                to: 3,
                susceptance: 10.0,
                capacity_mw: 80.0,
            },
            LineDoc {
                id: "l13".into(),
                from: 1,
                to: 3,
                susceptance: 10.0,
                capacity_mw: 120.0,
            },
        ],
        generators: vec![
            GeneratorDoc {
                id: "g1".into(),
                bus: 1,
                pmin_mw: 10.0,
                pmax_mw: 120.0,
                ramp_up_mw: 60.0,
                ramp_down_mw: 60.0,
                min_on: 1,
                min_off: 1,
                startup_cost: 80.0,
                no_load_cost: 15.0,
                c2: 0.012,
                c1: 28.0,
                init_on: Some(true),
                init_hours: Some(10),
                init_output_mw: Some(60.0),
            },
            GeneratorDoc {
                id: "g2".into(),
                bus: 2,
                pmin_mw: 5.0,
                pmax_mw: 60.0,
                ramp_up_mw: 40.0,
                ramp_down_mw: 40.0,
                min_on: 1,
                min_off: 1,
                startup_cost: 40.0,
                no_load_cost: 8.0,
                c2: 0.02,
                c1: 36.0,
                init_on: Some(false),
                init_hours: Some(10),
                init_output_mw: None,
            },
        ],
        wind: vec![WindDoc {
            id: "w1".into(),
            bus: 3,
            wmax_mw: 100.0,
            forecast_mw: vec![40.0, 55.0],
        }],
        demand: BTreeMap::from([(2, vec![50.0, 60.0]), (3, vec![45.0, 55.0])]),
    };
    load_case(&doc).unwrap()
}

/// One bus with more flexible thermal range than the whole wind span:
/// every realization in [0, w_max] is absorbable, so the full band is
/// admissible at zero risk.
pub fn over_capacity_single_bus() -> PowerSystem {
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "over-capacity".into(),
        horizon: 1,
        buses: vec![BusDoc { id: 1, is_ref: true }],
        lines: vec![],
        generators: vec![GeneratorDoc {
            pmax_mw: 200.0,
            ramp_up_mw: 200.0,
            ramp_down_mw: 200.0,
            ..gen_doc("g1", 1)
        }],
        wind: vec![WindDoc {
            id: "w1".into(),
            bus: 1,
            wmax_mw: 100.0,
            forecast_mw: vec![50.0],
        }],
        demand: BTreeMap::from([(1, vec![120.0])]),
    };
    load_case(&doc).unwrap()
}

pub fn over_capacity_instance() -> Instance {
    let system = over_capacity_single_bus();
    let prices = flat_prices(&system, 20.0, 100.0);
    Instance {
        system,
        prices,
        risk: RiskConfig {
            sigma_rel: vec![0.3],
            ..RiskConfig::default()
        },
        budget: Budget {
            gamma_t: 1,
            gamma_s: 1,
        },
    }
}

/// Tie-breaking fixture: two interchangeable wind farms on one bus, so worst
/// vertices tie and only the objective is determined.
pub fn two_farm_tie() -> PowerSystem {
    let wind = |id: &str| WindDoc {
        id: id.into(),
        bus: 1,
        wmax_mw: 80.0,
        forecast_mw: vec![30.0],
    };
    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "two-farm-tie".into(),
        horizon: 1,
        buses: vec![BusDoc { id: 1, is_ref: true }],
        lines: vec![],
        generators: vec![GeneratorDoc {
            pmax_mw: 200.0,
            ramp_up_mw: 200.0,
            ramp_down_mw: 200.0,
            ..gen_doc("g1", 1)
        }],
        wind: vec![wind("wa"), wind("wb")],
        demand: BTreeMap::from([(1, vec![100.0])]),
    };
    load_case(&doc).unwrap()
}

pub fn flat_prices(system: &PowerSystem, curtailment: f64, shedding: f64) -> Prices {
    Prices {
        curtailment: vec![curtailment; system.horizon],
        shedding: vec![shedding; system.horizon],
    }
}

pub fn desk3_instance() -> Instance {
    let system = desk3();
    let prices = Prices {
        curtailment: vec![20.0, 40.0],
        shedding: vec![100.0, 200.0],
    };
    Instance {
        system,
        prices,
        risk: RiskConfig {
            sigma_rel: vec![0.25],
            ..RiskConfig::default()
        },
        budget: Budget {
            gamma_t: 2,
            gamma_s: 1,
        },
    }
}

pub fn single_wind_instance() -> Instance {
    let system = subproblem_single_bus();
    let prices = flat_prices(&system, 20.0, 100.0);
    Instance {
        system,
        prices,
        risk: RiskConfig {
            sigma_rel: vec![0.3],
            ..RiskConfig::default()
        },
        budget: Budget {
            gamma_t: 1,
            gamma_s: 1,
        },
    }
}

pub fn two_farm_tie_instance() -> Instance {
    let system = two_farm_tie();
    let prices = flat_prices(&system, 20.0, 100.0);
    Instance {
        system,
        prices,
        risk: RiskConfig {
            sigma_rel: vec![0.25, 0.25],
            ..RiskConfig::default()
        },
        budget: Budget {
            gamma_t: 1,
            gamma_s: 1,
        },
    }
}

/// Synthetic 118-bus reconstruction at the published scale: 186 lines, 54
/// generators, three 500 MW wind farms at buses 17, 66 and 94, 24 periods.
pub fn ieee118_like() -> PowerSystem {
    let horizon = 24;
    let buses: Vec<BusDoc> = (1..=118)
        .map(|id| BusDoc {
            id,
            is_ref: id == 69,
        })
        .collect();

    // Ring backbone plus deterministic chords: 117 + 69 = 186 lines.
    let mut lines = Vec::new();
    for i in 1..=117u32 {
        lines.push(LineDoc {
            id: format!("r{i}"),
            from: i,
            to: i + 1,
            susceptance: (10 + (i % 25)) as f64,
            capacity_mw: (300 + (i % 4) * 50) as f64,
        });
    }
    for k in 0..69u32 {
        let a = 1 + ((k * 7 + 3) % 118);
        let span = 11 + (k % 7) * 3;
        let b = 1 + ((a - 1 + span) % 118);
        lines.push(LineDoc {
            id: format!("c{k}"),
            from: a,
            to: b,
            susceptance: (8 + (k * 13) % 30) as f64,
            capacity_mw: (250 + (k % 5) * 50) as f64,
        });
    }

    let mut generators = Vec::new();
    for i in 0..54u32 {
        let bus = 1 + ((i * 13 + 5) % 118);
        let doc = match i % 3 {
            0 => GeneratorDoc {
                id: format!("g{i}"),
                bus,
                pmin_mw: 100.0,
                pmax_mw: 300.0,
                ramp_up_mw: 100.0,
                ramp_down_mw: 100.0,
                min_on: 8,
                min_off: 8,
                startup_cost: 4000.0,
                no_load_cost: 500.0,
                c2: 0.004,
                c1: 19.0,
                init_on: Some(true),
                init_hours: Some(24),
                init_output_mw: Some(150.0),
            },
            1 => GeneratorDoc {
                id: format!("g{i}"),
                bus,
                pmin_mw: 40.0,
                pmax_mw: 150.0,
                ramp_up_mw: 70.0,
                ramp_down_mw: 70.0,
                min_on: 4,
                min_off: 4,
                startup_cost: 1200.0,
                no_load_cost: 200.0,
                c2: 0.01,
                c1: 26.0,
                init_on: Some(true),
                init_hours: Some(24),
                init_output_mw: Some(60.0),
            },
            _ => GeneratorDoc {
                id: format!("g{i}"),
                bus,
                pmin_mw: 10.0,
                pmax_mw: 60.0,
                ramp_up_mw: 60.0,
                ramp_down_mw: 60.0,
                min_on: 1,
                min_off: 1,
                startup_cost: 150.0,
                no_load_cost: 40.0,
                c2: 0.02,
                c1: 38.0,
                init_on: Some(false),
                init_hours: Some(24),
                init_output_mw: None,
            },
        };
        generators.push(doc);
    }

    // Night-heavy wind shape scaled to the 500 MW installed capacity.
    let wind_forecast: Vec<f64> = (0..horizon)
        .map(|t| {
            let phase = 2.0 * std::f64::consts::PI * (t as f64 + 2.0) / 24.0;
            500.0 * (0.55 + 0.30 * phase.cos())
        })
        .collect();
    let wind = [17u32, 66, 94]
        .iter()
        .map(|&bus| WindDoc {
            id: format!("w{bus}"),
            bus,
            wmax_mw: 500.0,
            forecast_mw: wind_forecast.clone(),
        })
        .collect();

    let mut demand = BTreeMap::new();
    for id in 1..=118u32 {
        if id % 3 == 0 {
            continue;
        }
        let weight = (20 + (id * 37) % 60) as f64 * 1.3;
        let series: Vec<f64> = (0..horizon)
            .map(|t| {
                let phase = 2.0 * std::f64::consts::PI * (t as f64 - 9.0) / 24.0;
                weight * (0.75 + 0.25 * phase.sin())
            })
            .collect();
        demand.insert(id, series);
    }

    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "ieee118-like".into(),
        horizon,
        buses,
        lines,
        generators,
        wind,
        demand,
    };
    load_case(&doc).unwrap()
}

/// Block prices over a 24-period horizon: shedding 100/200/150/200 and
/// curtailment 20/40/30/40 across the four six-hour blocks.
pub fn ieee118_prices() -> Prices {
    let blocks = |levels: [f64; 4]| -> Vec<f64> {
        (0..24).map(|t| levels[(t / 6) as usize]).collect()
    };
    Prices {
        curtailment: blocks([20.0, 40.0, 30.0, 40.0]),
        shedding: blocks([100.0, 200.0, 150.0, 200.0]),
    }
}

pub fn ieee118_instance() -> Instance {
    Instance {
        system: ieee118_like(),
        prices: ieee118_prices(),
        risk: RiskConfig {
            sigma_rel: vec![0.20, 0.15, 0.10],
            ..RiskConfig::default()
        },
        budget: Budget {
            gamma_t: 8,
            gamma_s: 2,
        },
    }
}

/// Randomized desk-scale system for oracle cross-checks: up to 3 buses,
/// 3 generators, 3 wind farms, 4 periods.
pub fn random_small_system(rng: &mut impl Rng) -> PowerSystem {
    let n_buses = rng.random_range(1..=3u32);
    let horizon = rng.random_range(1..=4usize);
    let n_gens = rng.random_range(1..=3u32);
    let n_wind = rng.random_range(1..=3u32);

    let buses: Vec<BusDoc> = (1..=n_buses)
        .map(|id| BusDoc {
            id,
            is_ref: id == 1,
        })
        .collect();
    let mut lines = Vec::new();
    for id in 2..=n_buses {
        lines.push(LineDoc {
            id: format!("l{id}"),
            from: rng.random_range(1..id),
            to: id,
            susceptance: rng.random_range(5.0..20.0),
            capacity_mw: rng.random_range(60.0..150.0),
        });
    }
    if n_buses == 3 && rng.random_bool(0.5) {
        lines.push(LineDoc {
            id: "extra".into(),
            from: 1,
            to: 3,
            susceptance: rng.random_range(5.0..20.0),
            capacity_mw: rng.random_range(60.0..150.0),
        });
    }

    let mut generators = Vec::new();
    for i in 0..n_gens {
        let pmin = if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(5.0..20.0)
        };
        let pmax = pmin + rng.random_range(30.0..120.0);
        let init_on = rng.random_bool(0.7);
        let init_output = if init_on && rng.random_bool(0.7) {
            Some(rng.random_range(pmin..pmax))
        } else if !init_on {
            None
        } else {
            None
        };
        generators.push(GeneratorDoc {
            id: format!("g{i}"),
            bus: rng.random_range(1..=n_buses),
            pmin_mw: pmin,
            pmax_mw: pmax,
            ramp_up_mw: rng.random_range(20.0..pmax),
            ramp_down_mw: rng.random_range(20.0..pmax),
            min_on: rng.random_range(1..=2),
            min_off: 1,
            startup_cost: rng.random_range(10.0..200.0),
            no_load_cost: rng.random_range(1.0..30.0),
            c2: rng.random_range(0.0..0.03),
            c1: rng.random_range(10.0..40.0),
            init_on: Some(init_on),
            init_hours: Some(10),
            init_output_mw: init_output,
        });
    }

    let mut wind = Vec::new();
    for i in 0..n_wind {
        let wmax = rng.random_range(30.0..80.0);
        wind.push(WindDoc {
            id: format!("w{i}"),
            bus: rng.random_range(1..=n_buses),
            wmax_mw: wmax,
            forecast_mw: (0..horizon)
                .map(|_| rng.random_range(0.2 * wmax..0.8 * wmax))
                .collect(),
        });
    }

    let cap_total: f64 = generators.iter().map(|g| g.pmax_mw).sum();
    let mut demand = BTreeMap::new();
    for id in 1..=n_buses {
        let base = rng.random_range(0.1..0.4) * cap_total;
        demand.insert(
            id,
            (0..horizon)
                .map(|_| base * rng.random_range(0.8..1.2))
                .collect(),
        );
    }

    let doc = CaseDoc {
        schema_version: CASE_SCHEMA_VERSION,
        name: "random-small".into(),
        horizon,
        buses,
        lines,
        generators,
        wind,
        demand,
    };
    load_case(&doc).unwrap()
}

/// Random band respecting the bound ordering rows.
pub fn random_band(rng: &mut impl Rng, system: &PowerSystem) -> Band {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for farm in &system.wind_farms {
        let mut up = Vec::new();
        let mut lo = Vec::new();
        for t in 0..system.horizon {
            let w_hat = farm.forecast[t];
            up.push(w_hat + rng.random_range(0.0..=1.0) * (farm.w_max - w_hat));
            lo.push(rng.random_range(0.0..=1.0) * w_hat);
        }
        upper.push(up);
        lower.push(lo);
    }
    Band { upper, lower }
}

/// Random commitment matrix, biased toward on.
pub fn random_commitment(rng: &mut impl Rng, system: &PowerSystem) -> Commitment {
    Commitment {
        on: (0..system.n_generators())
            .map(|_| (0..system.horizon).map(|_| rng.random_bool(0.8)).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ieee118_matches_published_scale() {
        let sys = ieee118_like();
        assert_eq!(sys.n_buses(), 118);
        assert_eq!(sys.n_lines(), 186);
        assert_eq!(sys.n_generators(), 54);
        assert_eq!(sys.n_wind_farms(), 3);
        assert_eq!(sys.horizon, 24);
        let wind_buses: Vec<u32> = sys.wind_farms.iter().map(|w| sys.bus_ids[w.bus]).collect();
        assert_eq!(wind_buses, vec![17, 66, 94]);
        assert!(sys.wind_farms.iter().all(|w| w.w_max == 500.0));
    }

    #[test]
    fn random_systems_always_validate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..30 {
            let sys = random_small_system(&mut rng);
            assert!(sys.n_buses() <= 3);
            assert!(sys.horizon <= 4);
            let band = random_band(&mut rng, &sys);
            for (m, farm) in sys.wind_farms.iter().enumerate() {
                for t in 0..sys.horizon {
                    assert!(band.lower[m][t] <= farm.forecast[t] + 1e-12);
                    assert!(band.upper[m][t] >= farm.forecast[t] - 1e-12);
                }
            }
        }
    }
}
