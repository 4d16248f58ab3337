//! Enquiry extraction, curation bookkeeping and the baseline split into
//! training and regression data.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::IngestError;
use crate::harness::RegressionCase;
use crate::model::{HierarchyManifest, IntentKind};
use crate::nlu::Router;

const HEADER_KEYS: [&str; 5] = ["Name", "Subject", "Service", "Email", "Phone"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnquiryRecord {
    pub source_file: PathBuf,
    pub service: String,
    pub message_body: String,
    /// Header fields other than the service that were dropped.
    pub discarded_fields: usize,
}

/// Parses one enquiry: a `Key: value` header block, a blank line, then the
/// body. Only the leading block is read as headers. A body may open with a
/// `Message:` label, which is stripped. Line breaks in the body become spaces.
pub fn parse_enquiry(file: &Path, text: &str) -> Result<EnquiryRecord, IngestError> {
    let fail = |message: &str| IngestError::Format {
        file: file.to_path_buf(),
        message: message.to_string(),
    };
    let text = text.replace("\r\n", "\n");
    let (head, body) = text
        .split_once("\n\n")
        .ok_or_else(|| fail("no blank line after the header block"))?;
    let mut service = None;
    let mut discarded = 0;
    for line in head.lines() {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| fail(&format!("header line without a colon: {line:?}")))?;
        let key = key.trim();
        if !HEADER_KEYS.contains(&key) {
            return Err(fail(&format!("unknown header {key:?}")));
        }
        if key == "Service" {
            service = Some(value.trim().to_string());
        } else {
            discarded += 1;
        }
    }
    let service = service
        .filter(|s| !s.is_empty())
        .ok_or_else(|| fail("missing Service header"))?;
    if service.contains(['/', '\\']) || service.starts_with('.') {
        return Err(fail(&format!("unusable service name {service:?}")));
    }
    let body = body.trim_start();
    let body = body.strip_prefix("Message:").unwrap_or(body);
    let body = body.split_whitespace().collect::<Vec<_>>().join(" ");
    if body.is_empty() {
        return Err(fail("missing message body"));
    }
    Ok(EnquiryRecord {
        source_file: file.to_path_buf(),
        service,
        message_body: body,
        discarded_fields: discarded,
    })
}

#[derive(Debug, Default)]
pub struct ExtractReport {
    pub records: Vec<EnquiryRecord>,
    /// Files that were skipped, with the reason.
    pub errors: Vec<IngestError>,
    /// Lines written per service file.
    pub per_service: BTreeMap<String, usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` beside `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IngestError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads every regular file in `input_dir` (sorted by name) and writes one
/// `<service>.txt` per service into `out_dir`, a message body per line.
/// Malformed files are reported and skipped.
pub fn extract_enquiries(input_dir: &Path, out_dir: &Path) -> Result<ExtractReport, IngestError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input_dir)
        .map_err(io_err(input_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();

    let mut report = ExtractReport::default();
    for path in paths {
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                warn!(file = %path.display(), error = %e, "skipping unreadable enquiry");
                report.errors.push(io_err(&path)(e));
                continue;
            }
        };
        match parse_enquiry(&path, &text) {
            Ok(r) => report.records.push(r),
            Err(e) => {
                warn!(error = %e, "skipping malformed enquiry");
                report.errors.push(e);
            }
        }
    }

    let mut grouped: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &report.records {
        grouped.entry(&r.service).or_default().push(&r.message_body);
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for (service, bodies) in &grouped {
        let mut contents = bodies.join("\n");
        contents.push('\n');
        write_atomic(&out_dir.join(format!("{service}.txt")), contents.as_bytes())?;
        report.per_service.insert(service.to_string(), bodies.len());
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationVerdict {
    Pending,
    DiscardedRelevance,
    DiscardedAppropriateness,
    DiscardedClarity,
    Kept,
}

impl CurationVerdict {
    pub fn is_discarded(self) -> bool {
        matches!(
            self,
            CurationVerdict::DiscardedRelevance
                | CurationVerdict::DiscardedAppropriateness
                | CurationVerdict::DiscardedClarity
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Training,
    Regression,
}

/// One row of the review file. The operator sets `label` and `verdict`;
/// `destination` is filled in by the split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationItem {
    pub utterance: String,
    pub label: Option<String>,
    pub verdict: CurationVerdict,
    pub destination: Option<Destination>,
}

impl CurationItem {
    pub fn pending(utterance: impl Into<String>) -> Self {
        CurationItem {
            utterance: utterance.into(),
            label: None,
            verdict: CurationVerdict::Pending,
            destination: None,
        }
    }
}

pub fn parse_curation(text: &str) -> Result<Vec<CurationItem>, IngestError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| IngestError::Curation(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["utterance", "label", "verdict", "destination"] {
        return Err(IngestError::Curation(
            "header must be utterance,label,verdict,destination".into(),
        ));
    }
    let mut items = Vec::new();
    for (n, row) in rdr.deserialize::<CurationItem>().enumerate() {
        let item = row.map_err(|e| IngestError::Curation(e.to_string()))?;
        if item.destination.is_some() && item.verdict != CurationVerdict::Kept {
            return Err(IngestError::Curation(format!(
                "row {}: destination set on an item that was not kept",
                n + 1
            )));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_curation(path: &Path) -> Result<Vec<CurationItem>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_curation(&text)
}

pub fn curation_csv(items: &[CurationItem]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if items.is_empty() {
        w.write_record(["utterance", "label", "verdict", "destination"]).unwrap();
    }
    for i in items {
        w.serialize(i).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Review rows for every extracted body, ready for an operator.
pub fn review_items(records: &[EnquiryRecord]) -> Vec<CurationItem> {
    records.iter().map(|r| CurationItem::pending(&r.message_body)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub bot: String,
    pub intent: String,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub collected: usize,
    pub discarded: usize,
    pub training: Vec<TrainingRow>,
    pub regression: Vec<RegressionCase>,
    /// The input items with destinations filled in.
    pub items: Vec<CurationItem>,
}

/// Resolves `bot/intent` or a bare intent name that only one bot declares.
fn resolve_label(manifest: &HierarchyManifest, label: &str) -> Result<(String, String), IngestError> {
    let unknown = || IngestError::UnknownLabel(label.to_string());
    let usable = |kind: IntentKind| kind != IntentKind::Delegation;
    if let Some((bot, intent)) = label.split_once('/') {
        let b = manifest.bot(bot).ok_or_else(unknown)?;
        let i = b.intent(intent).filter(|i| usable(i.kind)).ok_or_else(unknown)?;
        return Ok((b.name.clone(), i.name.clone()));
    }
    let mut hits = manifest
        .bots
        .iter()
        .filter(|b| b.intent(label).is_some_and(|i| usable(i.kind)));
    match (hits.next(), hits.next()) {
        (Some(b), None) => Ok((b.name.clone(), label.to_string())),
        _ => Err(unknown()),
    }
}

/// Routes each kept item to regression when the baseline already resolves it
/// to its label at or above threshold, otherwise to training. Training
/// utterances are lowercased.
pub fn split_by_baseline(items: &[CurationItem], baseline: &Router) -> Result<SplitOutcome, IngestError> {
    let mut out = SplitOutcome {
        collected: items.len(),
        discarded: 0,
        training: Vec::new(),
        regression: Vec::new(),
        items: Vec::with_capacity(items.len()),
    };
    for (n, item) in items.iter().enumerate() {
        let mut item = item.clone();
        match item.verdict {
            CurationVerdict::Pending => {
                return Err(IngestError::Curation(format!(
                    "row {}: verdict still pending for {:?}",
                    n + 1,
                    item.utterance
                )))
            }
            v if v.is_discarded() => {
                out.discarded += 1;
                item.destination = None;
            }
            _ => {
                let label = item.label.as_deref().ok_or_else(|| {
                    IngestError::Curation(format!("row {}: kept item has no label", n + 1))
                })?;
                let (bot, intent) = resolve_label(baseline.manifest(), label)?;
                let r = baseline.resolve(&item.utterance);
                let recognised = !r.fallback && r.intent.bot == bot && r.intent.intent == intent;
                if recognised {
                    out.regression.push(RegressionCase {
                        index: out.regression.len() + 1,
                        utterance: item.utterance.clone(),
                        expected_bot: bot,
                        expected_intent: intent,
                    });
                    item.destination = Some(Destination::Regression);
                } else {
                    out.training.push(TrainingRow {
                        bot,
                        intent,
                        utterance: item.utterance.to_lowercase(),
                    });
                    item.destination = Some(Destination::Training);
                }
            }
        }
        out.items.push(item);
    }
    Ok(out)
}

/// Turns regression cases back into kept review rows, e.g. to re-check them.
pub fn items_from_regression(cases: &[RegressionCase]) -> Vec<CurationItem> {
    cases
        .iter()
        .map(|c| CurationItem {
            utterance: c.utterance.clone(),
            label: Some(format!("{}/{}", c.expected_bot, c.expected_intent)),
            verdict: CurationVerdict::Kept,
            destination: None,
        })
        .collect()
}

pub fn training_csv(rows: &[TrainingRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["bot", "intent", "utterance"]).unwrap();
    }
    for r in rows {
        w.serialize(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Writes `training.csv` and `regression.csv` into `out_dir`.
pub fn write_split(out: &SplitOutcome, out_dir: &Path) -> Result<(), IngestError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_atomic(&out_dir.join("training.csv"), training_csv(&out.training).as_bytes())?;
    write_atomic(
        &out_dir.join("regression.csv"),
        crate::harness::regression_csv(&out.regression).as_bytes(),
    )
}
