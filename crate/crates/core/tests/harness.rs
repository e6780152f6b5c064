use proptest::prelude::*;

use biased_consensus::harness::{load_scenario, save_scenario, verify_goldens, write_catalog, GoldenStatus, HarnessError, ScenarioFile};
use biased_consensus::par::Mode;
use biased_consensus::scenarios::{self, campaign_scenario, u, v, CampaignSpec, FaultMix, InputPattern};
use biased_consensus::simnet::{ByzantineStrategy, Schedule};
use biased_consensus::{FailureModel, FullValue, OptimizerConfig, ValidityTable};

#[test]
fn every_named_scenario_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in scenarios::NAMES {
        for f in [1, 2] {
            let Ok(family) = scenarios::by_name(name, f) else { continue };
            for ns in family {
                let path = dir.path().join(format!("{}.toml", ns.name));
                save_scenario(&path, &ns.scenario).unwrap();
                assert_eq!(load_scenario(&path).unwrap(), ns.scenario, "{}", ns.name);
            }
        }
    }
}

#[test]
fn catalog_blesses_then_matches_then_detects_drift() {
    let dir = tempfile::tempdir().unwrap();
    write_catalog(dir.path()).unwrap();
    assert!(verify_goldens(dir.path(), true).unwrap().iter().all(|r| r.status == GoldenStatus::Blessed));
    assert!(verify_goldens(dir.path(), false).unwrap().iter().all(|r| r.status == GoldenStatus::Match));

    let trace = dir.path().join("figure1-f1.trace.jsonl");
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{}";
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let results = verify_goldens(dir.path(), false).unwrap();
    let drifted: Vec<_> = results.iter().filter(|r| r.status != GoldenStatus::Match).collect();
    assert_eq!(drifted.len(), 1);
    assert_eq!(drifted[0].name, "figure1-f1");
    assert!(matches!(&drifted[0].status, GoldenStatus::Drift { line: 3, expected, .. } if expected == "{}"));
}

#[test]
fn missing_goldens_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(verify_goldens(dir.path(), false), Err(HarnessError::MissingGolden(_))));
    write_catalog(dir.path()).unwrap();
    assert!(matches!(verify_goldens(dir.path(), false), Err(HarnessError::MissingGolden(_))));
}

#[test]
fn checked_in_goldens_match() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("goldens");
    let results = verify_goldens(&dir, false).unwrap();
    assert_eq!(results.len(), 9);
    assert!(results.iter().all(|r| r.status == GoldenStatus::Match));
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "name = 3\n").unwrap();
    let err = load_scenario(&path).unwrap_err();
    assert!(err.to_string().contains("broken.toml"));
}

fn model_strategy() -> impl Strategy<Value = (FailureModel, usize, usize)> {
    prop_oneof![
        (1usize..3).prop_flat_map(|f| (Just(FailureModel::Benign), 2 * f + 1..2 * f + 4, Just(f))),
        (1usize..3).prop_flat_map(|f| (Just(FailureModel::ByzantineClassical), 5 * f + 1..5 * f + 3, Just(f))),
        (1usize..3).prop_flat_map(|f| (Just(FailureModel::ByzantineExternal), 3 * f + 1..3 * f + 3, Just(f))),
    ]
}

proptest! {
    #[test]
    fn generated_scenarios_round_trip((model, n, f) in model_strategy(), seed in any::<u64>(), crashes in any::<bool>(), invalid_u in any::<bool>()) {
        let faults = match (model, crashes) {
            (FailureModel::Benign, true) => FaultMix::Crashes,
            (FailureModel::Benign, false) => FaultMix::CrashFromStart,
            _ => FaultMix::Byzantine(vec![
                ByzantineStrategy::Silent,
                ByzantineStrategy::MimicHonest(u()),
                ByzantineStrategy::Equivocate { x: v(), y: u(), targets: Default::default() },
            ]),
        };
        let mut validity = ValidityTable::new();
        if invalid_u {
            validity.set(u(), false);
        }
        let spec = CampaignSpec { cfg: OptimizerConfig::new(n, f, FullValue::bare(v()), model), inputs: InputPattern::Mixed(u()), faults, validity };
        let mut scn = campaign_scenario(&spec, seed, 0);
        if crashes {
            scn.schedule = Schedule::Exhaustive { depth: 64 };
        }
        let text = ScenarioFile::from_scenario(&scn).to_toml();
        let back = ScenarioFile::parse(&text).unwrap();
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.to_scenario().unwrap(), scn);
    }
}

#[test]
fn seeded_campaign_over_a_file_scenario_is_clean() {
    let ns = scenarios::figure3_external(1).unwrap();
    let r = scenarios::seed_campaign(&ns.scenario, 200, 3, Mode::Parallel);
    assert_eq!(r.runs, 200);
    assert_eq!(r.violating_runs, 0);
}
