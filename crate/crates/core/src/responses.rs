//! The response resource: deterministic text per (intent, service).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::ResponseError;
use crate::model::{HierarchyManifest, IntentKind, SlotKind};

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResponseTable {
    rows: BTreeMap<(String, String), String>,
}

#[derive(Deserialize)]
struct Row {
    intent: String,
    service: String,
    text: String,
}

impl ResponseTable {
    pub fn from_rows<I, S>(rows: I) -> Result<Self, ResponseError>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let mut table = ResponseTable::default();
        for (intent, service, text) in rows {
            table.insert(intent.into(), service.into(), text.into())?;
        }
        Ok(table)
    }

    fn insert(&mut self, intent: String, service: String, text: String) -> Result<(), ResponseError> {
        let service = if service.trim().is_empty() {
            WILDCARD.to_string()
        } else {
            service
        };
        if text.trim().is_empty() {
            return Err(ResponseError::EmptyText { intent, service });
        }
        let key = (intent, service);
        if self.rows.contains_key(&key) {
            return Err(ResponseError::Duplicate {
                intent: key.0,
                service: key.1,
            });
        }
        self.rows.insert(key, text);
        Ok(())
    }

    /// Parses the `intent,service,text` CSV layout.
    pub fn parse_csv(text: &str) -> Result<Self, ResponseError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| ResponseError::Csv(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["intent", "service", "text"] {
            return Err(ResponseError::Csv(format!(
                "expected header `intent,service,text`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut table = ResponseTable::default();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| ResponseError::Csv(e.to_string()))?;
            table.insert(row.intent, row.service, row.text)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, ResponseError> {
        let text = fs::read_to_string(path).map_err(|source| ResponseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["intent", "service", "text"]).expect("in-memory write");
        for ((i, s), t) in &self.rows {
            w.write_record([i, s, t]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, intent: &str, service: Option<&str>) -> Option<&str> {
        if let Some(s) = service {
            if let Some(t) = self.rows.get(&(intent.to_string(), s.to_string())) {
                return Some(t);
            }
        }
        self.rows
            .get(&(intent.to_string(), WILDCARD.to_string()))
            .map(String::as_str)
    }

    pub fn has_wildcard(&self, intent: &str) -> bool {
        self.rows.contains_key(&(intent.to_string(), WILDCARD.to_string()))
    }

    /// Exact (intent, service) row, else the intent's wildcard row.
    pub fn lookup(&self, intent: &str, service: Option<&str>) -> Result<&str, ResponseError> {
        self.get(intent, service).ok_or_else(|| ResponseError::Missing {
            intent: intent.to_string(),
            service: service.unwrap_or(WILDCARD).to_string(),
        })
    }

    /// Checks that every answer the engine can reach has a row. Reports
    /// every missing pair at once.
    pub fn validate_against(&self, manifest: &HierarchyManifest) -> Result<(), ResponseError> {
        let mut missing = Vec::new();
        for bot in &manifest.bots {
            for intent in &bot.intents {
                if intent.kind == IntentKind::Delegation || intent.is_lead_flow() {
                    continue;
                }
                if self.has_wildcard(&intent.name) {
                    continue;
                }
                let service_type = intent
                    .ordered_slots()
                    .into_iter()
                    .filter_map(|s| bot.slot_type(&s.slot_type))
                    .find(|t| t.kind == SlotKind::Enumerated);
                match service_type {
                    Some(st) => {
                        for v in st.canonical_values() {
                            if !self.rows.contains_key(&(intent.name.clone(), v.to_string())) {
                                missing.push((intent.name.clone(), v.to_string()));
                            }
                        }
                    }
                    None => missing.push((intent.name.clone(), WILDCARD.to_string())),
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ResponseError::MissingMany(missing))
        }
    }
}
