mod common;

use std::fs;
use std::path::Path;

use legalbot::error::IngestError;
use legalbot::harness::parse_regression_csv;
use legalbot::ingest::{
    curation_csv, extract_enquiries, items_from_regression, load_curation, parse_curation, review_items,
    split_by_baseline, write_split, CurationItem, CurationVerdict, Destination,
};
use proptest::prelude::*;

const LABELS: &[&str] = &["faq/Cost", "Location", "ff/FF_CR", "legal_firm/greet", "OpeningHours", "FF_Wills"];

fn verdict() -> impl Strategy<Value = CurationVerdict> {
    prop::sample::select(vec![
        CurationVerdict::Kept,
        CurationVerdict::Kept,
        CurationVerdict::DiscardedRelevance,
        CurationVerdict::DiscardedAppropriateness,
        CurationVerdict::DiscardedClarity,
    ])
}

fn item() -> impl Strategy<Value = CurationItem> {
    ("[a-zA-Z ,?']{1,40}", prop::sample::select(LABELS.to_vec()), verdict()).prop_map(|(u, l, v)| CurationItem {
        utterance: u,
        label: Some(l.to_string()),
        verdict: v,
        destination: None,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_conserves_every_item(items in prop::collection::vec(item(), 0..40)) {
        let router = common::router();
        let out = split_by_baseline(&items, &router).unwrap();
        prop_assert_eq!(out.collected, items.len());
        prop_assert_eq!(out.collected, out.discarded + out.training.len() + out.regression.len());
        prop_assert_eq!(out.items.len(), items.len());
        for (before, after) in items.iter().zip(&out.items) {
            prop_assert_eq!(&before.utterance, &after.utterance);
            prop_assert_eq!(before.verdict.is_discarded(), after.destination.is_none());
        }
        // Splitting the annotated output again changes nothing.
        let again = split_by_baseline(&out.items, &router).unwrap();
        prop_assert_eq!(&again, &out);
        let indexes: Vec<usize> = out.regression.iter().map(|c| c.index).collect();
        prop_assert_eq!(indexes, (1..=out.regression.len()).collect::<Vec<_>>());
    }

    #[test]
    fn curation_csv_round_trips(items in prop::collection::vec(item(), 0..20)) {
        prop_assert_eq!(parse_curation(&curation_csv(&items)).unwrap(), items);
    }
}

#[test]
fn fixture_batch_splits_as_labelled() {
    let items = load_curation(&common::fixture("ingest/curation.csv")).unwrap();
    let out = split_by_baseline(&items, &common::router()).unwrap();
    assert_eq!(out.collected, 258);
    assert_eq!(out.discarded, 20);
    assert_eq!(out.regression.len(), 78);
    assert_eq!(out.training.len(), 160);
    assert!(out.training.iter().all(|r| r.utterance == r.utterance.to_lowercase()));
}

#[test]
fn recognised_items_pass_the_baseline_they_were_routed_by() {
    let router = common::router();
    let items = load_curation(&common::fixture("ingest/curation.csv")).unwrap();
    let out = split_by_baseline(&items, &router).unwrap();
    let report = legalbot::harness::run_regression(&router, &out.regression);
    assert!(report.all_passed());
    // Feeding them back as review rows lands them in regression again.
    let back = split_by_baseline(&items_from_regression(&out.regression), &router).unwrap();
    assert_eq!(back.regression, out.regression);
    assert!(back.training.is_empty());
}

#[test]
fn written_split_is_byte_identical_on_rerun() {
    let router = common::router();
    let items = load_curation(&common::fixture("ingest/curation.csv")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let read = |p: &Path| (fs::read(p.join("training.csv")).unwrap(), fs::read(p.join("regression.csv")).unwrap());
    write_split(&split_by_baseline(&items, &router).unwrap(), dir.path()).unwrap();
    let first = read(dir.path());
    write_split(&split_by_baseline(&items, &router).unwrap(), dir.path()).unwrap();
    assert_eq!(first, read(dir.path()));
    let cases = parse_regression_csv(std::str::from_utf8(&first.1).unwrap()).unwrap();
    assert_eq!(cases.len(), 78);
    assert!(String::from_utf8(first.0).unwrap().starts_with("bot,intent,utterance\n"));
}

#[test]
fn pending_and_unlabelled_items_stop_the_split() {
    let router = common::router();
    let pending = vec![CurationItem::pending("hello")];
    assert!(matches!(split_by_baseline(&pending, &router), Err(IngestError::Curation(_))));
    let mut unlabelled = CurationItem::pending("hello");
    unlabelled.verdict = CurationVerdict::Kept;
    assert!(matches!(split_by_baseline(&[unlabelled.clone()], &router), Err(IngestError::Curation(_))));
    unlabelled.label = Some("all_faq".into());
    assert!(matches!(split_by_baseline(&[unlabelled.clone()], &router), Err(IngestError::UnknownLabel(_))));
    unlabelled.label = Some("nobody/greet".into());
    assert!(matches!(split_by_baseline(&[unlabelled], &router), Err(IngestError::UnknownLabel(_))));
}

#[test]
fn destination_on_a_discarded_row_is_malformed() {
    let text = "utterance,label,verdict,destination\nlol,,discarded_relevance,training\n";
    assert!(matches!(parse_curation(text), Err(IngestError::Curation(_))));
    assert!(parse_curation("utterance,verdict\nx,kept\n").is_err());
}

#[test]
fn extract_groups_bodies_by_service_and_skips_bad_files() {
    let out = tempfile::tempdir().unwrap();
    let report = extract_enquiries(&common::fixture("enquiries"), out.path()).unwrap();
    assert_eq!(report.records.len(), 6);
    assert_eq!(report.errors.len(), 1);
    assert!(report.errors[0].to_string().contains("06_no_body"));
    assert_eq!(report.per_service.get("CR"), Some(&3));
    assert_eq!(report.per_service.get("Wills"), Some(&3));
    let wills = fs::read_to_string(out.path().join("Wills.txt")).unwrap();
    assert_eq!(wills.lines().count(), 3);
    assert!(wills.contains("Name: my late father left no will"));
    assert!(!wills.contains("Susan Reed"));
    let mut names: Vec<String> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["CR.txt", "Wills.txt"]);

    let before = (fs::read(out.path().join("CR.txt")).unwrap(), wills);
    extract_enquiries(&common::fixture("enquiries"), out.path()).unwrap();
    let after = (
        fs::read(out.path().join("CR.txt")).unwrap(),
        fs::read_to_string(out.path().join("Wills.txt")).unwrap(),
    );
    assert_eq!(before, after);
}

#[test]
fn review_rows_start_pending() {
    let out = tempfile::tempdir().unwrap();
    let report = extract_enquiries(&common::fixture("enquiries"), out.path()).unwrap();
    let rows = review_items(&report.records);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.verdict == CurationVerdict::Pending && r.label.is_none()));
    let parsed = parse_curation(&curation_csv(&rows)).unwrap();
    assert_eq!(parsed, rows);
    assert_eq!(parsed.iter().filter(|r| r.destination == Some(Destination::Training)).count(), 0);
}

#[test]
fn unknown_header_and_path_like_services_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "Service: ../etc\n\nhello\n").unwrap();
    fs::write(dir.path().join("b.txt"), "Service: CR\nFax: 123\n\nhello\n").unwrap();
    fs::write(dir.path().join("c.txt"), "Service: CR\r\nName: A\r\n\r\nMessage: hi\r\nthere\r\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let report = extract_enquiries(dir.path(), out.path()).unwrap();
    assert_eq!(report.errors.len(), 2);
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].message_body, "hi there");
    assert_eq!(report.records[0].discarded_fields, 1);
}
