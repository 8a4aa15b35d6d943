use std::sync::{Arc, Mutex};

use semflow_core::backend::{FnBackend, ScriptedBackend, SimulatedLlm};
use semflow_core::dataflow::{validate_spec, PipelineSpec};
use semflow_core::nl::{recompile, synthesize, NlError, ParamEdit, SynthesisOutcome};
use semflow_core::pattern::{parse_pattern, PatternExpr};

const TASK: &str = "Alert when a patient is discharged and there is no follow-up within 30 days.";

fn within_seconds(spec: &PipelineSpec) -> Vec<u64> {
    let src = spec.get("pattern").unwrap().params["pattern"].as_str().unwrap();
    let mut out = Vec::new();
    fn walk(e: &PatternExpr, out: &mut Vec<u64>) {
        match e {
            PatternExpr::Within(c, d) => {
                out.push(*d);
                walk(c, out);
            }
            PatternExpr::Seq(cs) => cs.iter().for_each(|c| walk(c, out)),
            PatternExpr::And(a, b) | PatternExpr::Or(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            PatternExpr::Not(c) | PatternExpr::Times(c, _) | PatternExpr::OneOrMore(c) | PatternExpr::Optional(c) => {
                walk(c, out)
            }
            PatternExpr::Atom { .. } => {}
        }
    }
    walk(&parse_pattern(src).unwrap(), &mut out);
    out
}

#[test]
fn simulated_model_drafts_a_valid_spec() {
    let r = synthesize(TASK, &SimulatedLlm, 3).unwrap();
    assert_eq!(r.rounds_used, 1);
    let spec = r.spec().unwrap();
    assert!(validate_spec(spec).is_empty());
    assert_eq!(
        spec.get("pattern").unwrap().params["pattern"],
        "SEQ(Discharge, WITHIN(NOT(FollowUp), 30 days))"
    );
    assert_eq!(within_seconds(spec), vec![30 * 86_400]);
}

#[test]
fn ambiguous_task_asks_for_clarification() {
    let r = synthesize("find discharges with no follow-up", &SimulatedLlm, 3).unwrap();
    assert!(matches!(r.outcome, SynthesisOutcome::Clarification(_)));
    assert!(r.spec().is_none());
}

#[test]
fn usage_errors() {
    assert!(matches!(synthesize("  ", &SimulatedLlm, 3), Err(NlError::EmptyTask)));
    assert_eq!(synthesize(TASK, &SimulatedLlm, 0).unwrap_err().code(), "UsageError");
}

const CYCLIC: &str = r#"{"pipeline_id":"x","source":{"id":"docs"},"operators":[
 {"id":"a","kind":"sem_map","params":{"prompt":"p"},"inputs":["b"]},
 {"id":"b","kind":"sem_map","params":{"prompt":"p"},"inputs":["a"]}],"sinks":["b"]}"#;

const VALID: &str = r#"{"pipeline_id":"x","source":{"id":"docs"},"operators":[
 {"id":"a","kind":"sem_map","params":{"prompt":"p"},"inputs":["docs"]}],"sinks":["a"]}"#;

#[test]
fn repair_round_fixes_cycle() {
    let prompts = Arc::new(Mutex::new(Vec::<String>::new()));
    let seen = prompts.clone();
    let b = FnBackend::new("script", move |p| {
        let mut v = seen.lock().unwrap();
        v.push(p.to_string());
        Ok(if v.len() == 1 { CYCLIC } else { VALID }.to_string())
    });
    let r = synthesize(TASK, &b, 3).unwrap();
    assert_eq!(r.rounds_used, 2);
    assert_eq!(r.critiques.len(), 1);
    assert!(r.critiques[0].iter().any(|c| c.code == "CycleError"));
    let prompts = prompts.lock().unwrap();
    assert!(prompts[1].contains("CycleError"));
    assert!(prompts[1].contains(TASK));
}

#[test]
fn gives_up_after_max_rounds() {
    let b = ScriptedBackend::new([CYCLIC, "not json", CYCLIC]);
    match synthesize(TASK, &b, 3) {
        Err(NlError::SynthesisFailed { critiques }) => {
            assert_eq!(critiques.len(), 3);
            assert_eq!(critiques[1][0].code, "SpecParseError");
        }
        other => panic!("{other:?}"),
    }
}

fn drafted() -> PipelineSpec {
    synthesize(TASK, &SimulatedLlm, 1).unwrap().spec().unwrap().clone()
}

#[test]
fn recompile_changes_window() {
    let spec = drafted();
    let out = recompile(&spec, &[ParamEdit::new("pattern", "pattern", "SEQ(Discharge, WITHIN(NOT(FollowUp), 60 days))")])
        .unwrap();
    assert_eq!(within_seconds(&out), vec![5_184_000]);
    assert_eq!(out.operators.len(), spec.operators.len());
}

#[test]
fn recompile_rejects_unbounded_negation() {
    let spec = drafted();
    let err = recompile(&spec, &[ParamEdit::new("pattern", "pattern", "SEQ(Discharge, NOT(FollowUp))")]).unwrap_err();
    let NlError::Invalid(issues) = err else { panic!() };
    assert!(issues.iter().any(|i| i.code == "UnboundedNegation"));
}

#[test]
fn recompile_edge_cases() {
    let spec = drafted();
    assert_eq!(recompile(&spec, &[]).unwrap(), spec);
    let err = recompile(&spec, &[ParamEdit::new("ghost", "k", 1)]).unwrap_err();
    let NlError::Invalid(issues) = err else { panic!() };
    assert_eq!(issues[0].code, "UnknownOperator");
    let err = recompile(&spec, &[ParamEdit::new("pattern", "pattern", serde_json::Value::Null)]).unwrap_err();
    assert_eq!(err.code(), "InvalidSpec");
}
