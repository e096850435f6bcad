use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use quintsynth_core::report::*;
use quintsynth_core::repair::*;

fn outcome(name: &str, status: StubStatus, rounds: [u32; 3], fingerprint: &str, at: i64) -> StubOutcome {
    StubOutcome {
        stub_name: name.into(),
        final_code: String::new(),
        rounds_used: RoundCounts { static_rounds: rounds[0], runtime_rounds: rounds[1], semantic_rounds: rounds[2] },
        status,
        residual: Residual::None,
        llm_calls: 1 + rounds.iter().sum::<u32>(),
        reask_calls: 0,
        history: vec![],
        responses: vec![ResponseMeta { fingerprint: fingerprint.into(), timestamp: Utc.timestamp_opt(at, 0).unwrap() }],
    }
}

fn holdout(function: &str, results: &[bool]) -> Vec<HoldoutResult> {
    results
        .iter()
        .enumerate()
        .map(|(i, p)| HoldoutResult { function: function.into(), label: format!("{function}_{i}"), passed: *p })
        .collect()
}

fn two_by_two() -> Vec<RunOutcomes> {
    vec![
        RunOutcomes {
            run: 0,
            seed: 42,
            outcomes: vec![
                outcome("withdraw", StubStatus::Success, [1, 0, 0], "fp_a", 100),
                outcome("deposit", StubStatus::Success, [0, 0, 0], "fp_a", 50),
            ],
            holdout: [holdout("withdraw", &[true, true, true]), holdout("deposit", &[true, false, true])].concat(),
        },
        RunOutcomes {
            run: 1,
            seed: 43,
            outcomes: vec![
                outcome("withdraw", StubStatus::FailedSemantic, [0, 1, 3], "fp_b", 300),
                outcome("deposit", StubStatus::Success, [0, 2, 0], "fp_a", 200),
            ],
            // a failed stub's holdout results must not count
            holdout: [holdout("withdraw", &[false, false, false]), holdout("deposit", &[true, true, true])].concat(),
        },
    ]
}

#[test]
fn hand_computed_report() {
    let r = aggregate("mini_lockup", &two_by_two());
    assert_eq!(r.runs, 2);
    assert_eq!(r.functions.len(), 2);

    let w = &r.functions[0];
    assert_eq!(w.function, "withdraw");
    assert_eq!(w.avg_repair, 2.5); // (1 + 4) / 2
    assert_eq!((w.successes, w.runs), (1, 2));
    assert_eq!((w.holdout_passed, w.holdout_total), (3, 3));
    assert_eq!(w.pass_rate, Some(1.0));

    let d = &r.functions[1];
    assert_eq!(d.function, "deposit");
    assert_eq!(d.avg_repair, 1.0); // (0 + 2) / 2
    assert_eq!((d.successes, d.runs), (2, 2));
    assert_eq!((d.holdout_passed, d.holdout_total), (5, 6));
    assert_eq!(d.pass_rate, Some(5.0 / 6.0));

    assert_eq!(r.categories, CategoryTotals { static_rounds: 1, runtime_rounds: 3, semantic_rounds: 3, total: 7 });
    assert_eq!(r.provenance.seeds, [42, 43]);
    assert_eq!(r.provenance.fingerprints, ["fp_a", "fp_b"]);
    assert_eq!(r.provenance.first_response, Some(Utc.timestamp_opt(50, 0).unwrap()));
    assert_eq!(r.provenance.last_response, Some(Utc.timestamp_opt(300, 0).unwrap()));
}

#[test]
fn text_table() {
    let text = render_text(&aggregate("mini_lockup", &two_by_two()));
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0], ["Contract", "Function", "Avg.", "Repair", "Pass", "Rate", "Success"]);
    assert_eq!(rows[2], ["mini_lockup", "withdraw", "2.50", "100%", "1/2"]);
    assert_eq!(rows[3], ["mini_lockup", "deposit", "1.00", "83%", "2/2"]);
    assert!(text.contains("static    1\nruntime   3\nsemantic  3\ntotal     7\n"));
    assert!(text.contains("seeds: 42, 43"));
}

#[test]
fn no_successes_means_no_pass_rate() {
    let runs = vec![RunOutcomes {
        run: 0,
        seed: 1,
        outcomes: vec![outcome("f", StubStatus::FailedStatic, [3, 0, 0], "x", 0)],
        holdout: holdout("f", &[true]),
    }];
    let r = aggregate("c", &runs);
    assert_eq!(r.functions[0].pass_rate, None);
    assert!(render_text(&r).lines().nth(2).unwrap().contains(" - "));
}

#[test]
fn empty_report() {
    let r = aggregate("c", &[]);
    assert!(r.functions.is_empty());
    assert_eq!(r.categories, CategoryTotals::default());
    assert_eq!(r.provenance.first_response, None);
}

fn status() -> impl Strategy<Value = StubStatus> {
    prop_oneof![
        Just(StubStatus::Success),
        Just(StubStatus::FailedStatic),
        Just(StubStatus::FailedRuntime),
        Just(StubStatus::FailedSemantic),
    ]
}

proptest! {
    #[test]
    fn rounds_add_up(
        runs in prop::collection::vec(
            prop::collection::vec((0usize..4, status(), [0u32..4, 0u32..4, 0u32..4], prop::collection::vec(any::<bool>(), 0..4)), 0..4),
            0..5,
        )
    ) {
        let names = ["a", "b", "c", "d"];
        let runs: Vec<RunOutcomes> = runs
            .into_iter()
            .enumerate()
            .map(|(i, stubs)| {
                let mut seen = Vec::new();
                let mut outcomes = Vec::new();
                let mut results = Vec::new();
                for (n, s, rounds, h) in stubs {
                    if seen.contains(&n) {
                        continue;
                    }
                    seen.push(n);
                    outcomes.push(outcome(names[n], s, rounds, "fp", i as i64));
                    results.extend(holdout(names[n], &h));
                }
                RunOutcomes { run: i, seed: i as u64, outcomes, holdout: results }
            })
            .collect();
        let r = aggregate("c", &runs);
        let c = r.categories;
        prop_assert_eq!(c.total, c.static_rounds + c.runtime_rounds + c.semantic_rounds);
        let all: Vec<&StubOutcome> = runs.iter().flat_map(|r| &r.outcomes).collect();
        prop_assert_eq!(c.static_rounds, all.iter().map(|o| o.rounds_used.static_rounds).sum::<u32>());
        prop_assert_eq!(c.runtime_rounds, all.iter().map(|o| o.rounds_used.runtime_rounds).sum::<u32>());
        prop_assert_eq!(c.semantic_rounds, all.iter().map(|o| o.rounds_used.semantic_rounds).sum::<u32>());
        let from_rows: f64 = r.functions.iter().map(|f| f.avg_repair * f.runs as f64).sum();
        prop_assert!((from_rows - f64::from(c.total)).abs() < 1e-9);
        for f in &r.functions {
            prop_assert!(f.successes <= f.runs && f.runs <= runs.len());
            prop_assert!(f.holdout_passed <= f.holdout_total);
            if let Some(p) = f.pass_rate {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
