//! Lead delivery and transcript logging.
//!
//! Leads go to one configured sink (JSON Lines file, stdout, or a stub mail
//! transport that writes `.eml` files). Transcripts are JSON Lines with one
//! user line and one bot line per exchange. Every write is serialized
//! through the sink's own lock, so sessions can log concurrently.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dialog::{LeadRecord, Role};
use crate::error::SinkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadSinkKind {
    File,
    SmtpStub,
    Stdout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtpSettings {
    pub host: String,
    pub port: u16,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkConfig {
    pub lead_sink: LeadSinkKind,
    pub lead_path: Option<PathBuf>,
    pub transcript_path: PathBuf,
    pub smtp: Option<SmtpSettings>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub sink_id: String,
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub ts: DateTime<Utc>,
    pub session: String,
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_count: Option<usize>,
}

/// One lead file line: the lead plus its delivery sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadLine {
    #[serde(flatten)]
    pub lead: LeadRecord,
    pub sequence: u64,
}

pub trait LeadSink: Send + Sync {
    fn id(&self) -> &str;
    fn deliver(&self, lead: &LeadRecord, sequence: u64) -> Result<(), SinkError>;
}

pub trait TranscriptSink: Send + Sync {
    fn append(&self, line: &TranscriptLine) -> Result<(), SinkError>;
}

/// A rendered RFC 5322 message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Email {
    pub message_id: String,
    pub raw: String,
}

pub trait MailTransport: Send + Sync {
    fn send(&self, email: &Email) -> Result<(), SinkError>;
}

fn unavailable(path: &Path, e: impl std::fmt::Display) -> SinkError {
    SinkError::Unavailable(format!("{}: {e}", path.display()))
}

fn append_line(path: &Path, line: &str) -> Result<(), SinkError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| unavailable(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| unavailable(path, e))?;
    writeln!(f, "{line}").map_err(|e| unavailable(path, e))
}

pub struct JsonLinesLeadSink {
    path: PathBuf,
    id: String,
    lock: Mutex<()>,
}

impl JsonLinesLeadSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        JsonLinesLeadSink {
            id: format!("file:{}", path.display()),
            path,
            lock: Mutex::new(()),
        }
    }
}

impl LeadSink for JsonLinesLeadSink {
    fn id(&self) -> &str {
        &self.id
    }

    fn deliver(&self, lead: &LeadRecord, sequence: u64) -> Result<(), SinkError> {
        let line = serde_json::to_string(&LeadLine {
            lead: lead.clone(),
            sequence,
        })
        .map_err(|e| SinkError::Unavailable(e.to_string()))?;
        let _guard = self.lock.lock().expect("sink lock poisoned");
        append_line(&self.path, &line)
    }
}

pub struct StdoutLeadSink {
    lock: Mutex<()>,
}

impl Default for StdoutLeadSink {
    fn default() -> Self {
        StdoutLeadSink { lock: Mutex::new(()) }
    }
}

impl LeadSink for StdoutLeadSink {
    fn id(&self) -> &str {
        "stdout"
    }

    fn deliver(&self, lead: &LeadRecord, sequence: u64) -> Result<(), SinkError> {
        let line = serde_json::to_string(&LeadLine {
            lead: lead.clone(),
            sequence,
        })
        .map_err(|e| SinkError::Unavailable(e.to_string()))?;
        let _guard = self.lock.lock().expect("sink lock poisoned");
        let mut out = std::io::stdout().lock();
        writeln!(out, "{line}").map_err(|e| SinkError::Unavailable(format!("stdout: {e}")))
    }
}

/// Writes each email to `<dir>/<message-id>.eml`.
pub struct EmlFileTransport {
    dir: PathBuf,
}

impl EmlFileTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EmlFileTransport { dir: dir.into() }
    }
}

impl MailTransport for EmlFileTransport {
    fn send(&self, email: &Email) -> Result<(), SinkError> {
        fs::create_dir_all(&self.dir).map_err(|e| unavailable(&self.dir, e))?;
        let name: String = email
            .message_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let path = self.dir.join(format!("{name}.eml"));
        fs::write(&path, &email.raw).map_err(|e| unavailable(&path, e))
    }
}

pub struct EmailLeadSink {
    settings: SmtpSettings,
    transport: Box<dyn MailTransport>,
    id: String,
}

impl EmailLeadSink {
    pub fn new(settings: SmtpSettings, transport: Box<dyn MailTransport>) -> Self {
        EmailLeadSink {
            id: format!("smtp:{}:{}", settings.host, settings.port),
            settings,
            transport,
        }
    }
}

/// Renders a lead as a plain-text email, one `slot: value` line per answer in
/// elicitation order.
pub fn render_email(settings: &SmtpSettings, lead: &LeadRecord, sequence: u64) -> Email {
    let message_id = format!("{}-{sequence}", lead.session_id);
    let mut raw = String::new();
    raw.push_str(&format!("From: {}\r\n", settings.from));
    raw.push_str(&format!("To: {}\r\n", settings.to));
    raw.push_str(&format!("Subject: New enquiry: {}\r\n", lead.service));
    raw.push_str(&format!("Date: {}\r\n", lead.created_at.to_rfc2822()));
    raw.push_str(&format!("Message-ID: <{message_id}@{}>\r\n", settings.host));
    raw.push_str("Content-Type: text/plain; charset=utf-8\r\n");
    raw.push_str("\r\n");
    raw.push_str(&format!("service: {}\r\n", lead.service));
    raw.push_str(&format!("session: {}\r\n", lead.session_id));
    for a in &lead.answers {
        raw.push_str(&format!("{}: {}\r\n", a.slot, a.value));
    }
    Email { message_id, raw }
}

impl LeadSink for EmailLeadSink {
    fn id(&self) -> &str {
        &self.id
    }

    fn deliver(&self, lead: &LeadRecord, sequence: u64) -> Result<(), SinkError> {
        self.transport.send(&render_email(&self.settings, lead, sequence))
    }
}

pub struct JsonLinesTranscript {
    path: PathBuf,
    lock: Mutex<()>,
}

impl JsonLinesTranscript {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonLinesTranscript {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl TranscriptSink for JsonLinesTranscript {
    fn append(&self, line: &TranscriptLine) -> Result<(), SinkError> {
        let text = serde_json::to_string(line).map_err(|e| SinkError::Unavailable(e.to_string()))?;
        let _guard = self.lock.lock().expect("sink lock poisoned");
        append_line(&self.path, &text)
    }
}

/// In-memory sinks for tests; clones share storage.
#[derive(Clone, Default)]
pub struct MemorySink {
    pub leads: Arc<Mutex<Vec<LeadLine>>>,
    pub transcript: Arc<Mutex<Vec<TranscriptLine>>>,
}

impl MemorySink {
    pub fn leads(&self) -> Vec<LeadLine> {
        self.leads.lock().expect("poisoned").clone()
    }

    pub fn transcript(&self) -> Vec<TranscriptLine> {
        self.transcript.lock().expect("poisoned").clone()
    }
}

impl LeadSink for MemorySink {
    fn id(&self) -> &str {
        "memory"
    }

    fn deliver(&self, lead: &LeadRecord, sequence: u64) -> Result<(), SinkError> {
        self.leads.lock().expect("poisoned").push(LeadLine {
            lead: lead.clone(),
            sequence,
        });
        Ok(())
    }
}

impl TranscriptSink for MemorySink {
    fn append(&self, line: &TranscriptLine) -> Result<(), SinkError> {
        self.transcript.lock().expect("poisoned").push(line.clone());
        Ok(())
    }
}

/// The engine's side-effect boundary.
pub struct Fulfillment {
    lead_sink: Box<dyn LeadSink>,
    transcript: Box<dyn TranscriptSink>,
    sequence: AtomicU64,
    retry: Mutex<Vec<(LeadRecord, u64)>>,
}

impl Fulfillment {
    pub fn new(lead_sink: Box<dyn LeadSink>, transcript: Box<dyn TranscriptSink>) -> Self {
        Fulfillment {
            lead_sink,
            transcript,
            sequence: AtomicU64::new(0),
            retry: Mutex::new(Vec::new()),
        }
    }

    pub fn from_config(config: &SinkConfig) -> Result<Self, SinkError> {
        let lead_sink: Box<dyn LeadSink> = match config.lead_sink {
            LeadSinkKind::File => {
                let path = config
                    .lead_path
                    .clone()
                    .ok_or_else(|| SinkError::Unavailable("file lead sink requires lead_path".into()))?;
                Box::new(JsonLinesLeadSink::new(path))
            }
            LeadSinkKind::Stdout => Box::new(StdoutLeadSink::default()),
            LeadSinkKind::SmtpStub => {
                let settings = config.smtp.clone().unwrap_or(SmtpSettings {
                    host: "localhost".into(),
                    port: 25,
                    from: "bot@localhost".into(),
                    to: "enquiries@localhost".into(),
                });
                let dir = config
                    .lead_path
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("outbox"));
                Box::new(EmailLeadSink::new(settings, Box::new(EmlFileTransport::new(dir))))
            }
        };
        Ok(Fulfillment::new(
            lead_sink,
            Box::new(JsonLinesTranscript::new(config.transcript_path.clone())),
        ))
    }

    /// In-memory lead and transcript sinks plus a handle to read them back.
    pub fn in_memory() -> (Self, MemorySink) {
        let mem = MemorySink::default();
        (Fulfillment::new(Box::new(mem.clone()), Box::new(mem.clone())), mem)
    }

    /// Delivers a lead. Each call gets a fresh sequence number, so repeated
    /// submissions are distinguishable downstream. Failed deliveries are
    /// queued for [`Fulfillment::retry_pending`].
    pub fn submit_lead(&self, lead: &LeadRecord) -> Result<Receipt, SinkError> {
        if lead.answers.is_empty() {
            return Err(SinkError::InvalidLead("lead has no answers".into()));
        }
        if let Some(a) = lead.answers.iter().find(|a| a.value.trim().is_empty()) {
            return Err(SinkError::InvalidLead(format!("empty answer for `{}`", a.slot)));
        }
        let sequence = self.sequence.fetch_add(1, Ordering::SeqCst) + 1;
        match self.lead_sink.deliver(lead, sequence) {
            Ok(()) => Ok(Receipt {
                sink_id: self.lead_sink.id().to_string(),
                sequence,
            }),
            Err(e) => {
                self.retry.lock().expect("poisoned").push((lead.clone(), sequence));
                Err(e)
            }
        }
    }

    pub fn pending_retries(&self) -> usize {
        self.retry.lock().expect("poisoned").len()
    }

    /// Re-attempts queued leads with their original sequence numbers.
    /// Returns how many are still pending.
    pub fn retry_pending(&self) -> usize {
        let mut queue = self.retry.lock().expect("poisoned");
        queue.retain(|(lead, seq)| self.lead_sink.deliver(lead, *seq).is_err());
        queue.len()
    }

    pub fn log_turn(
        &self,
        session_id: &str,
        role: Role,
        text: &str,
        timestamp: DateTime<Utc>,
        message_count: Option<usize>,
    ) -> Result<(), SinkError> {
        self.transcript.append(&TranscriptLine {
            ts: timestamp,
            session: session_id.to_string(),
            role,
            text: text.to_string(),
            message_count,
        })
    }
}
