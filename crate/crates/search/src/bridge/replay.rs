use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BridgeError, OpKind};

/// One line of a replay file. A null `text` replays a failed slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub gen: usize,
    pub op: OpKind,
    pub slot: usize,
    pub text: Option<String>,
}

/// Scripted responses keyed by (generation, operator, slot).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayScript {
    records: BTreeMap<(usize, OpKind, usize), Option<String>>,
}

impl ReplayScript {
    pub fn from_records(
        records: impl IntoIterator<Item = ReplayRecord>,
    ) -> Result<Self, BridgeError> {
        let mut map = BTreeMap::new();
        for (i, r) in records.into_iter().enumerate() {
            if map.insert((r.gen, r.op, r.slot), r.text).is_some() {
                return Err(BridgeError::ReplayFormat {
                    line: i + 1,
                    message: format!("duplicate key ({}, {}, {})", r.gen, r.op, r.slot),
                });
            }
        }
        Ok(ReplayScript { records: map })
    }

    /// Parses JSONL; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, BridgeError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ReplayRecord =
                serde_json::from_str(line).map_err(|e| BridgeError::ReplayFormat {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(r);
        }
        Self::from_records(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BridgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BridgeError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (&(gen, op, slot), text) in &self.records {
            let r = ReplayRecord {
                gen,
                op,
                slot,
                text: text.clone(),
            };
            s.push_str(&serde_json::to_string(&r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest generation index present, if any.
    pub fn last_generation(&self) -> Option<usize> {
        self.records.keys().map(|k| k.0).max()
    }

    pub fn lookup(&self, gen: usize, op: OpKind, slot: usize) -> Result<Option<String>, BridgeError> {
        self.records
            .get(&(gen, op, slot))
            .cloned()
            .ok_or(BridgeError::MissingReplay { gen, op, slot })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"gen":1,"op":"E1","slot":0,"text":"a"}

{"gen":1,"op":"C1","slot":3,"text":null}
"#;
        let s = ReplayScript::from_jsonl(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.lookup(1, OpKind::E1, 0).unwrap().as_deref(), Some("a"));
        assert_eq!(s.lookup(1, OpKind::C1, 3).unwrap(), None);
        assert!(matches!(
            s.lookup(2, OpKind::E1, 0),
            Err(BridgeError::MissingReplay { gen: 2, .. })
        ));
        assert_eq!(ReplayScript::from_jsonl(&s.to_jsonl()).unwrap(), s);
    }

    #[test]
    fn rejects_duplicates_and_bad_lines() {
        let dup = "{\"gen\":1,\"op\":\"E1\",\"slot\":0,\"text\":\"a\"}\n".repeat(2);
        assert!(ReplayScript::from_jsonl(&dup).is_err());
        let bad = r#"{"gen":1,"op":"E9","slot":0,"text":"a"}"#;
        assert!(matches!(
            ReplayScript::from_jsonl(bad),
            Err(BridgeError::ReplayFormat { line: 1, .. })
        ));
    }
}
