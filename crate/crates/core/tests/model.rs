mod common;

use legalbot::model::{compile_hierarchy, parse_manifest, IntentKind};
use legalbot::ManifestError;
use serde_json::{json, Value};

fn small() -> Value {
    json!({
        "root": "top",
        "bots": [
            {
                "name": "top",
                "intents": [
                    {"name": "hello", "utterances": ["Hello there", "hi"]},
                    {"name": "to_faq", "kind": "delegation", "child_bot": "faq"},
                    {"name": "fallback", "kind": "fallback"}
                ]
            },
            {
                "name": "faq",
                "confidence_threshold": 0.5,
                "intents": [
                    {"name": "hours", "utterances": ["When are you OPEN", "opening hours"]},
                    {"name": "where", "utterances": ["where is the office"]},
                    {"name": "faq_fallback", "kind": "fallback"}
                ]
            }
        ]
    })
}

fn err(v: &Value) -> String {
    match parse_manifest(&v.to_string()) {
        Ok(_) => panic!("manifest should be rejected"),
        Err(ManifestError::Validation(m)) => m,
        Err(e) => panic!("unexpected error kind: {e}"),
    }
}

#[test]
fn fixture_shape() {
    let m = common::manifest();
    assert_eq!(m.root, "legal_firm");
    assert!(!m.is_compiled());
    let names: Vec<&str> = m.bots.iter().map(|b| b.name.as_str()).collect();
    assert_eq!(names, ["legal_firm", "faq", "ff"]);
    let children: Vec<(&str, &str)> = m.children_of("legal_firm").map(|e| (e.intent.as_str(), e.child.as_str())).collect();
    assert_eq!(children, [("all_faq", "faq"), ("all_ff", "ff")]);
    for bot in &m.bots {
        assert_eq!(
            bot.intents.iter().filter(|i| i.kind == IntentKind::Fallback).count(),
            1,
            "{} needs exactly one fallback",
            bot.name
        );
    }
}

#[test]
fn compile_pools_child_utterances_lowercased() {
    let m = parse_manifest(&small().to_string()).unwrap();
    let c = compile_hierarchy(&m).unwrap();
    assert!(c.is_compiled());
    let pooled = &c.bot("top").unwrap().intent("to_faq").unwrap().utterances;
    assert_eq!(pooled, &["when are you open", "opening hours", "where is the office"]);
    assert_eq!(c.bot("top").unwrap().intent("hello").unwrap().utterances[0], "hello there");
    // Authored copy is untouched.
    assert!(m.bot("top").unwrap().intent("to_faq").unwrap().utterances.is_empty());
}

#[test]
fn compile_is_idempotent() {
    let c1 = compile_hierarchy(&common::manifest()).unwrap();
    let c2 = compile_hierarchy(&c1).unwrap();
    assert_eq!(c1, c2);
}

#[test]
fn multi_level_chains_pool_transitively() {
    let mut v = small();
    v["bots"][1]["intents"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "to_deep", "kind": "delegation", "child_bot": "deep"}));
    v["bots"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "deep", "intents": [
            {"name": "parking", "utterances": ["is there parking"]},
            {"name": "deep_fallback", "kind": "fallback"}
        ]}));
    let c = compile_hierarchy(&parse_manifest(&v.to_string()).unwrap()).unwrap();
    let top = &c.bot("top").unwrap().intent("to_faq").unwrap().utterances;
    assert!(top.contains(&"is there parking".to_string()));
}

#[test]
fn authored_json_round_trips() {
    let m = common::manifest();
    let again = parse_manifest(&m.to_json()).unwrap();
    assert_eq!(m, again);
}

#[test]
fn default_threshold_applies() {
    let m = parse_manifest(&small().to_string()).unwrap();
    assert_eq!(m.bot("top").unwrap().confidence_threshold, 0.4);
    assert_eq!(m.bot("faq").unwrap().confidence_threshold, 0.5);
}

#[test]
fn rejects_delegation_with_utterances() {
    let mut v = small();
    v["bots"][0]["intents"][1]["utterances"] = json!(["faq stuff"]);
    assert!(err(&v).contains("must not list utterances"));
}

#[test]
fn rejects_unknown_child() {
    let mut v = small();
    v["bots"][0]["intents"][1]["child_bot"] = json!("nowhere");
    assert!(err(&v).contains("unknown child bot `nowhere`"));
}

#[test]
fn rejects_cycle_into_root() {
    let mut v = small();
    v["bots"][1]["intents"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "back", "kind": "delegation", "child_bot": "top"}));
    assert!(err(&v).contains("cycle"));
}

#[test]
fn rejects_disconnected_bot() {
    let mut v = small();
    v["bots"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "island", "intents": [
            {"name": "x", "utterances": ["x"]},
            {"name": "island_fallback", "kind": "fallback"}
        ]}));
    assert!(err(&v).contains("not reachable"));
}

#[test]
fn rejects_duplicate_utterance_across_intents() {
    let mut v = small();
    // Same bag of words, different order and case.
    v["bots"][1]["intents"][1]["utterances"] = json!(["Hours: opening?"]);
    assert!(err(&v).contains("duplicates"));
}

#[test]
fn rejects_utterance_clashing_with_pooled_child() {
    let mut v = small();
    v["bots"][0]["intents"][0]["utterances"] = json!(["hello there", "where is the office"]);
    assert!(err(&v).contains("duplicates"));
}

#[test]
fn rejects_overlapping_siblings() {
    let mut v = small();
    v["bots"][0]["intents"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "to_other", "kind": "delegation", "child_bot": "other"}));
    v["bots"]
        .as_array_mut()
        .unwrap()
        .push(json!({"name": "other", "intents": [
            {"name": "h", "utterances": ["opening hours"]},
            {"name": "other_fallback", "kind": "fallback"}
        ]}));
    let m = err(&v);
    assert!(m.contains("faq") && m.contains("other"), "{m}");
}

#[test]
fn rejects_threshold_out_of_range() {
    let mut v = small();
    v["bots"][1]["confidence_threshold"] = json!(1.5);
    assert!(err(&v).contains("outside [0, 1]"));
}

#[test]
fn rejects_lead_flow_without_service() {
    let mut v = small();
    v["bots"][1]["intents"][1]["fulfillment"] = json!("collect_lead");
    assert!(err(&v).contains("service tag"));
}

#[test]
fn parse_errors_carry_position() {
    match parse_manifest("{\n  \"root\": 3") {
        Err(ManifestError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
