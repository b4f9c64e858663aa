//! Frozen observation traces of the small suites. A change to environment
//! dynamics or rendering shows up as a diff against `tests/fixtures/`.
//!
//! Regenerate with `WMFORGE_BLESS=1 cargo test --test replay`.

use std::path::PathBuf;

use wmforge::envsim::{record_trace, write_trace, Split, Suite, SuiteConfig, TraceRecord};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn check(name: &str, trace: &[TraceRecord]) {
    let path = fixture(name);
    if std::env::var_os("WMFORGE_BLESS").is_some() {
        write_trace(&path, trace).unwrap();
        return;
    }
    let frozen = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let frozen: Vec<TraceRecord> = frozen.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(frozen.len(), trace.len(), "{name}: trace length changed");
    for (want, got) in frozen.iter().zip(trace) {
        assert_eq!(want, got, "{name}: first diverging record");
    }
}

fn traces(suite: &Suite, tag: &str) {
    let train = suite.tasks_in(Split::Train).next().unwrap().spec.task_id;
    let ood = suite.tasks_in(Split::OodEval).next().unwrap().spec.task_id;
    for (label, id) in [("train", train), ("ood", ood)] {
        let actions = suite.solve_oracle(id).unwrap();
        let trace = record_trace(suite, id, &actions).unwrap();
        assert!(trace.len() > 2);
        check(&format!("{tag}_{label}_oracle.jsonl"), &trace);
    }
    // Malformed and inapplicable actions followed by the oracle plan.
    let mut actions = vec!["dance wildly".to_string(), "take unicorn 9 from moon 1".to_string()];
    actions.extend(suite.solve_oracle(train).unwrap());
    check(&format!("{tag}_invalid_then_oracle.jsonl"), &record_trace(suite, train, &actions).unwrap());
}

#[test]
fn gridhouse_traces_match_fixtures() {
    traces(&Suite::generate(&SuiteConfig::gridhouse_small(0)).unwrap(), "gridhouse");
}

#[test]
fn tooldesk_traces_match_fixtures() {
    traces(&Suite::generate(&SuiteConfig::tooldesk_small(0)).unwrap(), "tooldesk");
}
