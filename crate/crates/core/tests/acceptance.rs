//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use biased_consensus::harness::{render_trace, verify_goldens, witness_scenario, GoldenStatus};
use biased_consensus::par::Mode;
use biased_consensus::scenarios::{
    self, check_expectation, random_campaign, u, v, CampaignSpec, FaultMix, InputPattern,
};
use biased_consensus::simnet::{
    self, explore_many, ActionRecord, ByzantineStrategy, ExploreError, ExploreOptions, Fault, RunOptions, RunOutcome,
    Scenario, Schedule, Trace, TraceLine,
};
use biased_consensus::{FailureModel, FullValue, NodeId, OptimizerConfig, ValidityTable, ValuePayload, Variant};

/// Join-once and decide-once bookkeeping shared by every criterion.
#[derive(Default)]
struct Audit {
    runs: u64,
    failures: Vec<String>,
}

impl Audit {
    /// Counts ProposeToBase and Decide actions per node straight from the trace.
    fn trace(&mut self, scn: &Scenario, trace: &Trace) {
        self.runs += 1;
        let mut proposes: BTreeMap<usize, u32> = BTreeMap::new();
        let mut decides: BTreeMap<usize, u32> = BTreeMap::new();
        for line in &trace.lines {
            let TraceLine::Event { node: Some(node), actions, .. } = line else { continue };
            for a in actions {
                match a {
                    ActionRecord::Propose { .. } => *proposes.entry(*node).or_default() += 1,
                    ActionRecord::Decide { .. } => *decides.entry(*node).or_default() += 1,
                    _ => {}
                }
            }
        }
        for i in 0..scn.n() {
            let p = proposes.get(&i).copied().unwrap_or(0);
            let d = decides.get(&i).copied().unwrap_or(0);
            if !scn.faults[i].is_byzantine() && p > 1 {
                self.failures.push(format!("{}: node {i} proposed {p} times", scn.name));
            }
            if scn.is_correct(NodeId(i)) && d != 1 {
                self.failures.push(format!("{}: node {i} decided {d} times", scn.name));
            }
        }
    }

    fn counts(&mut self, what: &str, runs: u64, max_proposes: u32, decide_mismatches: u64) {
        self.runs += runs;
        if max_proposes > 1 || decide_mismatches > 0 {
            self.failures.push(format!("{what}: max proposes {max_proposes}, {decide_mismatches} decide-count mismatches"));
        }
    }

    fn exploration(&mut self, what: &str, leaves: u64, by_kind: &BTreeMap<String, u64>) {
        self.runs += leaves;
        for k in ["join-once", "decide-once", "termination"] {
            if let Some(c) = by_kind.get(k) {
                self.failures.push(format!("{what}: {c} {k} violations"));
            }
        }
    }
}

type Verdict = Result<String, String>;

fn traced(scn: &Scenario, audit: &mut Audit) -> Result<RunOutcome, String> {
    let out = simnet::run_with(scn, RunOptions { trace: true, budget: simnet::DEFAULT_EVENT_BUDGET })
        .map_err(|e| format!("{}: {e}", scn.name))?;
    audit.trace(scn, out.trace.as_ref().expect("traced run"));
    Ok(out)
}

fn goldens_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("goldens")
}

fn criterion1(audit: &mut Audit) -> Verdict {
    let start = Instant::now();
    let mut notes = Vec::new();
    for (model, n, f) in [
        (FailureModel::Benign, 5, 2),
        (FailureModel::ByzantineClassical, 9, 2),
        (FailureModel::ByzantineExternal, 7, 2),
    ] {
        let spec = CampaignSpec {
            cfg: OptimizerConfig::new(n, f, FullValue::bare(v()), model),
            inputs: InputPattern::AllPreferred,
            faults: FaultMix::CrashFromStart,
            validity: ValidityTable::new(),
        };
        let r = random_campaign(&spec, 10_000, 0xC0FFEE, Mode::Parallel);
        audit.counts(&format!("{model:?} n={n}"), r.runs, r.max_proposes, r.decide_count_mismatches);
        if r.runs != 10_000 || r.errors > 0 || r.violating_runs > 0 || r.one_round_runs != r.runs {
            return Err(format!(
                "{model:?} n={n}: {} runs, {} errors, {} violating, {} one-round",
                r.runs, r.errors, r.violating_runs, r.one_round_runs
            ));
        }
        notes.push(format!("{model:?} n={n}: 10000/10000 one-round"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}, limit 60s"));
    }
    Ok(format!("{} in {elapsed:.1?}", notes.join(", ")))
}

fn patterns(n: usize) -> impl Iterator<Item = Vec<ValuePayload>> {
    (0..1u32 << n).map(move |mask| (0..n).map(|i| if mask >> i & 1 == 1 { v() } else { u() }).collect())
}

fn target_sets(n: usize, byz: usize) -> Vec<std::collections::BTreeSet<NodeId>> {
    (0..1u32 << n)
        .filter(|m| m >> byz & 1 == 0)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(NodeId).collect())
        .collect()
}

fn exhaustive_suite() -> Vec<Scenario> {
    let mut out = Vec::new();
    let exhaustive = |mut s: Scenario| {
        s.schedule = Schedule::Exhaustive { depth: 1_000 };
        s
    };
    let benign = OptimizerConfig::new(3, 1, FullValue::bare(v()), FailureModel::Benign);
    for (p, vals) in patterns(3).enumerate() {
        let base = Scenario::new(format!("benign-3-p{p}"), benign.clone(), &vals);
        out.push(exhaustive(base.clone()));
        for node in 0..3 {
            for k in 0..16 {
                let mut s = base.clone();
                s.name = format!("benign-3-p{p}-crash{node}@{k}");
                s.faults[node] = Fault::CrashAt(k);
                out.push(exhaustive(s));
            }
        }
    }
    for (model, n) in [(FailureModel::ByzantineClassical, 5), (FailureModel::ByzantineExternal, 4)] {
        let cfg = OptimizerConfig::new(n, 1, FullValue::bare(v()), model);
        for byz in 0..n {
            let mut strategies = vec![ByzantineStrategy::Silent];
            for targets in target_sets(n, byz) {
                strategies.push(ByzantineStrategy::Equivocate { x: v(), y: u(), targets: targets.clone() });
                strategies.push(ByzantineStrategy::Equivocate { x: u(), y: v(), targets });
            }
            if model == FailureModel::ByzantineExternal {
                strategies.push(ByzantineStrategy::MimicHonest(v()));
                strategies.push(ByzantineStrategy::MimicHonest(u()));
            }
            for (p, vals) in patterns(n).enumerate().filter(|(p, _)| p >> byz & 1 == 0) {
                for (k, st) in strategies.iter().enumerate() {
                    let mut s = Scenario::new(format!("{model:?}-{n}-b{byz}-p{p}-s{k}"), cfg.clone(), &vals);
                    s.faults[byz] = Fault::Byzantine(st.clone());
                    out.push(exhaustive(s));
                }
            }
        }
    }
    out
}

fn criterion2(audit: &mut Audit) -> Verdict {
    let start = Instant::now();
    let suite = exhaustive_suite();
    let reports = explore_many(&suite, ExploreOptions { max_states: 2_000_000, ..Default::default() });
    let (mut states, mut leaves, mut fast, mut base) = (0u64, 0u64, 0u64, 0u64);
    for (scn, r) in suite.iter().zip(reports) {
        let r = match r {
            Ok(r) => r,
            Err(ExploreError::BudgetExceeded(r)) => return Err(format!("{}: incomplete after {} states", scn.name, r.states)),
            Err(e) => return Err(format!("{}: {e}", scn.name)),
        };
        audit.exploration(&scn.name, r.leaves, &r.violations_by_kind);
        if r.violating_leaves > 0 {
            return Err(format!("{}: {:?}, witness {:?}", scn.name, r.violations_by_kind, r.witness));
        }
        states += r.states;
        leaves += r.leaves;
        fast += r.fast_leaves;
        base += r.base_leaves;
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(600) {
        return Err(format!("took {elapsed:.1?}, limit 10 min"));
    }
    if fast == 0 || base == 0 {
        return Err("the suite never reached both decision paths".into());
    }
    Ok(format!(
        "{} explorations, {states} states, {leaves} leaves ({fast} with a fast decision, {base} with a base decision), 0 violations in {elapsed:.1?}",
        suite.len()
    ))
}

fn criterion3(audit: &mut Audit) -> Verdict {
    let mut notes = Vec::new();
    for f in [1, 2] {
        for ns in [scenarios::figure1_benign(f), scenarios::figure2_classical(f), scenarios::figure3_external(f)] {
            let ns = ns.map_err(|e| e.to_string())?;
            let out = traced(&ns.scenario, audit)?;
            check_expectation(&simnet::Expectation::MixedPathsDecide(v()), &out).map_err(|e| format!("{}: {e}", ns.name))?;
            notes.push(format!("{} {}F/{}B", ns.name, out.fast_count(), out.base_count()));
        }
    }
    let results = verify_goldens(&goldens_dir(), false).map_err(|e| e.to_string())?;
    for name in ["figure1-f1", "figure1-f2", "figure2-f1", "figure2-f2", "figure3-f1", "figure3-f2"] {
        match results.iter().find(|r| r.name == name) {
            Some(r) if r.status == GoldenStatus::Match => {}
            Some(r) => return Err(format!("golden {name}: {:?}", r.status)),
            None => return Err(format!("golden {name} missing")),
        }
    }
    Ok(format!("all decide v on mixed paths ({}), goldens match", notes.join(", ")))
}

fn criterion4(audit: &mut Audit) -> Verdict {
    let [s1, s2, s3] = scenarios::lower_bound_sigma(1).map_err(|e| e.to_string())?;
    for ns in [&s1, &s2] {
        let out = traced(&ns.scenario, audit)?;
        check_expectation(&ns.expected, &out).map_err(|e| format!("{}: {e}", ns.name))?;
    }
    let out = traced(&s3.scenario, audit)?;
    let validity: Vec<_> = out.violations.iter().filter(|x| x.kind() == "validity").collect();
    if validity.is_empty() || s3.scenario.cfg.model != FailureModel::ByzantineClassical {
        return Err(format!("sigma3 produced no classical-validity violation: {:?}", out.violations));
    }
    let witness = witness_scenario(&s3.scenario, &out.steps);
    let replay = traced(&witness, audit)?;
    if replay.violations != out.violations {
        return Err("witness replay did not reproduce the violation".into());
    }
    let (a, b) = (render_trace(&s3.scenario), render_trace(&witness));
    let strip = |t: String| t.lines().skip(1).collect::<Vec<_>>().join("\n");
    if strip(a.map_err(|e| e.to_string())?) != strip(b.map_err(|e| e.to_string())?) {
        return Err("witness replay diverged from the original trace".into());
    }
    let bounded = scenarios::sigma3_correct_bound(1).map_err(|e| e.to_string())?;
    let opts = ExploreOptions::for_scenario(&bounded.scenario);
    let r = simnet::explore(&bounded.scenario, opts).map_err(|e| format!("bounded exploration: {e}"))?;
    audit.exploration(&bounded.name, r.leaves, &r.violations_by_kind);
    if !r.is_clean() {
        return Err(format!("bounded config: {} violating leaves", r.violating_leaves));
    }
    Ok(format!(
        "sigma3 flags {} validity violations with a {}-step witness that replays; n=5 bound: {} states, 0 violations",
        validity.len(),
        out.steps.len(),
        r.states
    ))
}

fn criterion5(audit: &mut Audit) -> Verdict {
    let (n, f) = (4usize, 1usize);
    let val_len = 8usize;
    let pv = ValuePayload::new(vec![b'v'; val_len]).unwrap();
    let pu = ValuePayload::new(vec![b'u'; val_len]).unwrap();
    let proof = vec![0xAB; 64 * val_len];
    let mut cfg = OptimizerConfig::new(n, f, FullValue::new(pv.clone(), &proof), FailureModel::ByzantineExternal);
    cfg.variant = Variant::ProofAware;
    let (val_bytes, nn) = (val_len as u64, (n * (n - 1)) as u64);
    let mut fast_note = String::new();
    let mut slow_min = u64::MAX;
    for seed in 0..20 {
        let mut fast = Scenario::new(format!("bandwidth-fast-{seed}"), cfg.clone(), &vec![pv.clone(); n]);
        fast.initial_values = vec![FullValue::new(pv.clone(), &proof); n];
        fast.schedule = Schedule::Seeded(seed);
        let out = traced(&fast, audit)?;
        let c = out.counters;
        if out.fast_count() != n || c.payload_bytes() != nn * val_bytes || c.proof_bytes() != 0 || c.total_bytes() != nn * val_bytes {
            return Err(format!("fast run {seed}: {} fast, payload {} proof {}", out.fast_count(), c.payload_bytes(), c.proof_bytes()));
        }
        fast_note = format!("fast path {} payload bytes, 0 proof bytes", c.payload_bytes());
        let mut slow = fast.clone();
        slow.name = format!("bandwidth-slow-{seed}");
        slow.initial_values = vec![FullValue::new(pu.clone(), &proof); n];
        let out = traced(&slow, audit)?;
        if out.fast_count() != 0 || !out.is_clean() {
            return Err(format!("slow run {seed} was not a clean slow-path run"));
        }
        slow_min = slow_min.min(out.counters.total_bytes());
    }
    let bound = nn * val_bytes * 65;
    if slow_min < bound {
        return Err(format!("slow path sent only {slow_min} bytes, expected at least {bound}"));
    }
    Ok(format!("{fast_note}; slow path at least {slow_min} bytes (bound {bound}), ratio {:.1}", slow_min as f64 / (nn * val_bytes) as f64))
}

fn criterion7() -> Verdict {
    let dir = goldens_dir();
    for pass in 1..=2 {
        let results = verify_goldens(&dir, false).map_err(|e| e.to_string())?;
        if let Some(r) = results.iter().find(|r| r.status != GoldenStatus::Match) {
            return Err(format!("pass {pass}: {} {:?}", r.name, r.status));
        }
        if results.is_empty() {
            return Err("no goldens".into());
        }
    }
    for name in scenarios::NAMES {
        for ns in scenarios::by_name(name, 1).map_err(|e| e.to_string())? {
            if matches!(ns.scenario.schedule, Schedule::Scripted(_)) {
                let a = render_trace(&ns.scenario).map_err(|e| e.to_string())?;
                let b = render_trace(&ns.scenario).map_err(|e| e.to_string())?;
                if a != b {
                    return Err(format!("{} traces differ between runs", ns.name));
                }
            }
        }
    }
    Ok("golden suite matched byte for byte on two consecutive passes".into())
}

fn main() -> ExitCode {
    let mut audit = Audit::default();
    let results = vec![
        ("1 one-round fast path", criterion1(&mut audit)),
        ("2 exhaustive small instances", criterion2(&mut audit)),
        ("3 figure scenarios", criterion3(&mut audit)),
        ("4 lower-bound reconstruction", criterion4(&mut audit)),
        ("5 proof-aware bandwidth", criterion5(&mut audit)),
        ("6 join-once and decide-once", if audit.failures.is_empty() {
            Ok(format!("{} runs and leaves audited", audit.runs))
        } else {
            Err(audit.failures.join("; "))
        }),
        ("7 determinism", criterion7()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
