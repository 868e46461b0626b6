use std::path::{Path, PathBuf};

use onsager_pn::config::{
    BoundaryKind, InflowConfig, InitialConfig, ScatteringConfig, ScenarioConfig,
};
use onsager_pn::solver::Simulation;
use onsager_pn::Error;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenario_dir().join(name)).unwrap()
}

#[test]
fn bundled_scenarios_round_trip() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let cfg = ScenarioConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back, "{}", path.display());
        count += 1;
    }
    assert_eq!(count, 5);
}

#[test]
fn free_streaming_gaussian_setup() {
    let cfg = load("tc1.json");
    assert_eq!(cfg.model.order, 13);
    assert_eq!(cfg.model.scattering, ScatteringConfig::None);
    assert_eq!((cfg.domain.lower[0], cfg.domain.upper[0]), (-1.0, 1.0));
    match cfg.initial {
        InitialConfig::GaussianBulk {
            sigma,
            ref center,
            moment,
            ..
        } => {
            assert_eq!(sigma, 0.2);
            assert_eq!(center, &[0.0]);
            assert_eq!(moment, (0, 0));
        }
        ref other => panic!("unexpected initial data {other:?}"),
    }
    assert!(cfg
        .boundaries
        .iter()
        .all(|b| b.inflow == InflowConfig::Vacuum && b.alpha == 1.0));
}

#[test]
fn marshak_pair_differs_only_in_the_left_closure() {
    let stable = load("tc2_stable.json");
    let unstable = load("tc2_unstable.json");
    assert_eq!(stable.model.order, 2);
    assert_eq!(stable.initial, unstable.initial);
    assert_eq!(stable.domain, unstable.domain);
    assert_eq!(unstable.boundaries[0].kind, BoundaryKind::UnstableMarshak);
    assert_eq!(stable.boundaries[0].kind, BoundaryKind::Onsager);
}

#[test]
fn electron_scenarios_use_copper_stopping() {
    for name in ["tc3_vacuum.json", "tc4_beam.json"] {
        let cfg = load(name);
        let s = cfg.model.stopping.unwrap();
        assert!(
            (s.kev_per_nm() - 0.011185).abs() < 5e-7,
            "{}",
            s.kev_per_nm()
        );
        assert_eq!(
            cfg.model.scattering,
            ScatteringConfig::HenyeyGreenstein {
                sigma_s: 0.1,
                g: 0.6,
                sigma_t: 0.1
            }
        );
        assert_eq!(cfg.model.order, 13);
        for i in 0..2 {
            let h = (cfg.domain.upper[i] - cfg.domain.lower[i]) / cfg.domain.cells[i] as f64;
            assert!((h - 5.0).abs() < 1e-12);
        }
        let range = cfg.integration.energy.unwrap();
        assert!((cfg.to_time(range.max)).abs() < 1e-15);
        assert!((cfg.from_time(cfg.end_time()) - range.min).abs() < 1e-12);
    }
    let beam = load("tc4_beam.json");
    match &beam.boundaries[0].inflow {
        InflowConfig::Beam {
            energy,
            energy_sigma,
            width,
            angular_sigma,
            ..
        } => {
            assert_eq!(
                (*energy, *energy_sigma, *width, *angular_sigma),
                (14.0, 0.14, 25.0, 0.1)
            );
        }
        other => panic!("expected a beam, got {other:?}"),
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let base = load("tc1.json").to_json();
    let broken = [
        base.replace("\"order\": 13", "\"order\": 0"),
        base.replace(
            "\"cells\": [\n      400\n    ]",
            "\"cells\": [\n      2\n    ]",
        ),
        base.replace("\"x-\"", "\"z-\""),
        base.replace("\"name\": \"tc1\"", "\"name\": \"a/b\""),
    ];
    for text in &broken {
        assert_ne!(text, &base, "replacement did not apply");
        let err = ScenarioConfig::from_json(text)
            .and_then(|c| c.validate().map(|_| c))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
    assert!(ScenarioConfig::from_json("{\"name\": \"x\", \"bogus\": 1}").is_err());
}

#[test]
fn out_of_range_penalty_is_reported() {
    let mut cfg = load("tc1.json");
    cfg.model.order = 3;
    cfg.boundaries[1].alpha = 1.5;
    assert!(matches!(Simulation::new(cfg), Err(Error::PenaltyOutOfRange(a)) if a == 1.5));
}
