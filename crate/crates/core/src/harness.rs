//! Regression and scripted-conversation testing with accuracy reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::dialog::{BotResponse, Engine, IntentRef, LeadRecord, SessionState};
use crate::error::HarnessError;
use crate::nlu::Router;
use crate::service::{ApiReply, TurnTrace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionCase {
    pub index: usize,
    pub utterance: String,
    pub expected_bot: String,
    pub expected_intent: String,
}

pub fn parse_regression_csv(text: &str) -> Result<Vec<RegressionCase>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| HarnessError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "utterance", "expected_bot", "expected_intent"] {
        return Err(HarnessError::Csv(
            "header must be index,utterance,expected_bot,expected_intent".into(),
        ));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| HarnessError::Csv(e.to_string())))
        .collect()
}

pub fn load_regression(path: &Path) -> Result<Vec<RegressionCase>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_regression_csv(&text)
}

pub fn regression_csv(cases: &[RegressionCase]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Serializing plain structs into a Vec cannot fail.
    if cases.is_empty() {
        w.write_record(["index", "utterance", "expected_bot", "expected_intent"]).unwrap();
    }
    for c in cases {
        w.serialize(c).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    /// The utterance, or the script name for conversation runs.
    pub subject: String,
    pub expected: String,
    pub actual: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub pass: usize,
    pub fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub rows: Vec<ReportRow>,
    pub accuracy: f64,
    pub totals: Totals,
}

impl TestReport {
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let pass = rows.iter().filter(|r| r.verdict == Verdict::Pass).count();
        let fail = rows.len() - pass;
        let accuracy = if rows.is_empty() {
            1.0
        } else {
            pass as f64 / rows.len() as f64
        };
        TestReport {
            rows,
            accuracy,
            totals: Totals { pass, fail },
        }
    }

    pub fn all_passed(&self) -> bool {
        self.totals.fail == 0
    }
}

/// Classifies each case from the root, independently of the others.
pub fn run_regression(router: &Router, cases: &[RegressionCase]) -> TestReport {
    if cases.is_empty() {
        warn!("regression run has no cases");
    }
    let rows = cases
        .iter()
        .map(|c| {
            let r = router.resolve(&c.utterance);
            let ok = r.intent.bot == c.expected_bot && r.intent.intent == c.expected_intent;
            ReportRow {
                index: c.index,
                subject: c.utterance.clone(),
                expected: format!("{}/{}", c.expected_bot, c.expected_intent),
                actual: r.intent.to_string(),
                verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            }
        })
        .collect();
    TestReport::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    Ff,
    Faq,
    FallbackInParent,
    RestartResume,
    FfRestartResume,
    FaqRestartResume,
    FfFallback,
    FaqFallback,
    FaqFfFaq,
    FfFaqFf,
    FaqChildFaqFallback,
    FfChildFfFallback,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 12] = [
        ScenarioTag::Ff,
        ScenarioTag::Faq,
        ScenarioTag::FallbackInParent,
        ScenarioTag::RestartResume,
        ScenarioTag::FfRestartResume,
        ScenarioTag::FaqRestartResume,
        ScenarioTag::FfFallback,
        ScenarioTag::FaqFallback,
        ScenarioTag::FaqFfFaq,
        ScenarioTag::FfFaqFf,
        ScenarioTag::FaqChildFaqFallback,
        ScenarioTag::FfChildFfFallback,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotExpectation {
    pub name: String,
    pub value: String,
}

/// One check against a turn. `intent` accepts `bot/intent` or a bare name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    Intent(String),
    ResponseContains(String),
    Slot(SlotExpectation),
    LeadEmitted(bool),
    MessageCount(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    pub user: String,
    #[serde(default, rename = "assert")]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationScript {
    pub name: String,
    pub scenario_tag: ScenarioTag,
    pub turns: Vec<ScriptTurn>,
}

impl ConversationScript {
    pub fn parse(label: &str, text: &str) -> Result<Self, HarnessError> {
        let script: ConversationScript = serde_json::from_str(text).map_err(|e| HarnessError::Script {
            script: label.to_string(),
            message: e.to_string(),
        })?;
        if script.turns.is_empty() {
            return Err(HarnessError::Script {
                script: label.to_string(),
                message: "a script needs at least one turn".into(),
            });
        }
        Ok(script)
    }
}

/// A script file that could not be used, kept so it shows up as a failed row.
#[derive(Debug)]
pub struct BrokenScript {
    pub path: PathBuf,
    pub error: HarnessError,
}

/// Loads every `*.json` file in `dir`, sorted by file name.
pub fn load_scripts(dir: &Path) -> Result<Vec<Result<ConversationScript, BrokenScript>>, HarnessError> {
    let io = |source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|path| {
            let label = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            std::fs::read_to_string(&path)
                .map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })
                .and_then(|text| ConversationScript::parse(&label, &text))
                .map_err(|error| BrokenScript { path, error })
        })
        .collect())
}

/// What a driver saw after one user turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnObservation {
    pub response: BotResponse,
    pub trace: TurnTrace,
}

pub trait DriverSession {
    fn send(&mut self, text: &str) -> Result<TurnObservation, HarnessError>;
}

pub trait ConversationDriver {
    fn open(&self) -> Result<Box<dyn DriverSession + '_>, HarnessError>;
}

/// Runs scripts directly against an engine.
pub struct InProcessDriver {
    engine: Arc<Engine>,
}

impl InProcessDriver {
    pub fn new(engine: Arc<Engine>) -> Self {
        InProcessDriver { engine }
    }
}

struct InProcessSession<'a> {
    engine: &'a Engine,
    state: SessionState,
}

impl DriverSession for InProcessSession<'_> {
    fn send(&mut self, text: &str) -> Result<TurnObservation, HarnessError> {
        let out = self
            .engine
            .handle_turn(&mut self.state, text)
            .map_err(|e| HarnessError::Transport(e.to_string()))?;
        Ok(TurnObservation {
            trace: TurnTrace::new(&out, &self.state),
            response: out.response,
        })
    }
}

impl ConversationDriver for InProcessDriver {
    fn open(&self) -> Result<Box<dyn DriverSession + '_>, HarnessError> {
        Ok(Box::new(InProcessSession {
            engine: &self.engine,
            state: self.engine.start_session(),
        }))
    }
}

/// Runs scripts against a live service over its JSON API.
pub struct HttpDriver {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpDriver {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpDriver {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

struct HttpSession<'a> {
    driver: &'a HttpDriver,
    id: String,
}

fn transport(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Transport(e.to_string())
}

impl DriverSession for HttpSession<'_> {
    fn send(&mut self, text: &str) -> Result<TurnObservation, HarnessError> {
        let url = format!("{}/v1/sessions/{}/messages?trace=true", self.driver.base_url, self.id);
        let resp = self
            .driver
            .client
            .post(url)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(transport(format!("HTTP {}: {}", resp.status(), resp.text().unwrap_or_default())));
        }
        let reply: ApiReply = resp.json().map_err(transport)?;
        let trace = reply.trace.ok_or_else(|| transport("reply carried no trace"))?;
        Ok(TurnObservation {
            response: reply.response,
            trace,
        })
    }
}

impl Drop for HttpSession<'_> {
    fn drop(&mut self) {
        let url = format!("{}/v1/sessions/{}", self.driver.base_url, self.id);
        let _ = self.driver.client.delete(url).send();
    }
}

impl ConversationDriver for HttpDriver {
    fn open(&self) -> Result<Box<dyn DriverSession + '_>, HarnessError> {
        #[derive(Deserialize)]
        struct Created {
            session_id: String,
        }
        let resp = self
            .client
            .post(format!("{}/v1/sessions", self.base_url))
            .send()
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(transport(format!("HTTP {}", resp.status())));
        }
        let created: Created = resp.json().map_err(transport)?;
        Ok(Box::new(HttpSession {
            driver: self,
            id: created.session_id,
        }))
    }
}

/// Result of playing one script.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptOutcome {
    pub name: String,
    pub failures: Vec<String>,
    pub responses: Vec<BotResponse>,
    pub leads: Vec<LeadRecord>,
}

impl ScriptOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn intent_matches(expected: &str, actual: Option<&IntentRef>) -> bool {
    let Some(actual) = actual else { return false };
    match expected.split_once('/') {
        Some((bot, intent)) => actual.bot == bot && actual.intent == intent,
        None => actual.intent == expected,
    }
}

fn check(a: &Assertion, obs: &TurnObservation) -> Result<(), String> {
    let t = &obs.trace;
    match a {
        Assertion::Intent(want) => {
            if intent_matches(want, t.intent.as_ref()) {
                Ok(())
            } else {
                let got = t.intent.as_ref().map_or("none".to_string(), |i| i.to_string());
                Err(format!("intent: expected {want}, got {got}"))
            }
        }
        Assertion::ResponseContains(needle) => {
            let joined = obs.response.messages.join(" ");
            if joined.contains(needle.as_str()) {
                Ok(())
            } else {
                Err(format!("response does not contain {needle:?}: {joined:?}"))
            }
        }
        Assertion::Slot(s) => match t.slots.get(&s.name) {
            Some(v) if *v == s.value => Ok(()),
            other => Err(format!("slot {}: expected {:?}, got {:?}", s.name, s.value, other)),
        },
        Assertion::LeadEmitted(want) => {
            if t.lead.is_some() == *want {
                Ok(())
            } else {
                Err(format!("lead_emitted: expected {want}"))
            }
        }
        Assertion::MessageCount(n) => {
            if obs.response.messages.len() == *n {
                Ok(())
            } else {
                Err(format!("message_count: expected {n}, got {}", obs.response.messages.len()))
            }
        }
    }
}

/// Plays a script in a fresh session, checking every assertion of every turn.
pub fn run_script(driver: &dyn ConversationDriver, script: &ConversationScript) -> ScriptOutcome {
    let mut outcome = ScriptOutcome {
        name: script.name.clone(),
        failures: Vec::new(),
        responses: Vec::new(),
        leads: Vec::new(),
    };
    let mut session = match driver.open() {
        Ok(s) => s,
        Err(e) => {
            outcome.failures.push(e.to_string());
            return outcome;
        }
    };
    for (n, turn) in script.turns.iter().enumerate() {
        let obs = match session.send(&turn.user) {
            Ok(o) => o,
            Err(e) => {
                outcome.failures.push(format!("turn {}: {e}", n + 1));
                return outcome;
            }
        };
        for a in &turn.assertions {
            if let Err(msg) = check(a, &obs) {
                outcome.failures.push(format!("turn {}: {msg}", n + 1));
            }
        }
        outcome.leads.extend(obs.trace.lead.clone());
        outcome.responses.push(obs.response);
    }
    outcome
}

/// Runs each script in its own session; one report row per script, in input order.
pub fn run_conversation(
    driver: &dyn ConversationDriver,
    scripts: &[Result<ConversationScript, BrokenScript>],
) -> TestReport {
    if scripts.is_empty() {
        warn!("conversation run has no scripts");
    }
    let rows = scripts
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Ok(script) => {
                let o = run_script(driver, script);
                ReportRow {
                    index: i + 1,
                    subject: script.name.clone(),
                    expected: "pass".into(),
                    actual: if o.passed() { "pass".into() } else { o.failures.join("; ") },
                    verdict: if o.passed() { Verdict::Pass } else { Verdict::Fail },
                }
            }
            Err(b) => ReportRow {
                index: i + 1,
                subject: b.path.display().to_string(),
                expected: "pass".into(),
                actual: b.error.to_string(),
                verdict: Verdict::Fail,
            },
        })
        .collect();
    TestReport::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    #[value(name = "text_table")]
    TextTable,
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 5] = ["index", "subject", "expected", "actual", "verdict"];

pub fn accuracy_line(report: &TestReport) -> String {
    format!("accuracy: {:.2}%", report.accuracy * 100.0)
}

pub fn render_report(report: &TestReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::TextTable => render_table(report),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).unwrap();
            for r in &report.rows {
                let verdict = match r.verdict {
                    Verdict::Pass => "Pass",
                    Verdict::Fail => "Fail",
                };
                w.write_record([&r.index.to_string(), &r.subject, &r.expected, &r.actual, verdict])
                    .unwrap();
            }
            String::from_utf8(w.into_inner().unwrap()).unwrap()
        }
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    }
}

fn render_table(report: &TestReport) -> String {
    let cells: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.index.to_string(),
                r.subject.clone(),
                r.expected.clone(),
                r.actual.clone(),
                format!("{:?}", r.verdict),
            ]
        })
        .collect();
    let mut widths = CSV_HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    if report.rows.is_empty() {
        out.push_str("warning: no test cases\n");
    }
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &CSV_HEADER);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &cells {
        let refs: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &refs);
    }
    let _ = writeln!(
        out,
        "total: {}  pass: {}  fail: {}",
        report.rows.len(),
        report.totals.pass,
        report.totals.fail
    );
    let _ = writeln!(out, "{}", accuracy_line(report));
    out
}

/// Reads a report back from its csv rendering.
pub fn parse_report_csv(text: &str) -> Result<TestReport, HarnessError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: &dyn std::fmt::Display| HarnessError::Csv(e.to_string());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        if rec.len() != 5 {
            return Err(bad(&"expected 5 columns"));
        }
        let verdict = match &rec[4] {
            "Pass" => Verdict::Pass,
            "Fail" => Verdict::Fail,
            other => return Err(bad(&format!("bad verdict {other:?}"))),
        };
        rows.push(ReportRow {
            index: rec[0].parse().map_err(|e| bad(&e))?,
            subject: rec[1].to_string(),
            expected: rec[2].to_string(),
            actual: rec[3].to_string(),
            verdict,
        });
    }
    Ok(TestReport::from_rows(rows))
}

/// Counts scripts per scenario tag.
pub fn tag_coverage(scripts: &[ConversationScript]) -> BTreeMap<ScenarioTag, usize> {
    let mut m = BTreeMap::new();
    for s in scripts {
        *m.entry(s.scenario_tag).or_insert(0) += 1;
    }
    m
}
