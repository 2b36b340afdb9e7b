//! Records the subjects every fitted artifact consumed and checks them
//! against an independently recomputed train/test split.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub artifact: String,
    pub subject_ids: Vec<String>,
    /// SHA-256 over the sorted ids, newline-separated.
    pub digest: String,
}

pub fn digest_ids(ids: &[String]) -> String {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    let mut h = Sha256::new();
    for id in sorted {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn record<'a>(&mut self, artifact: impl Into<String>, ids: impl IntoIterator<Item = &'a str>) {
        let mut subject_ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
        subject_ids.sort();
        let digest = digest_ids(&subject_ids);
        self.entries.push(AuditEntry {
            artifact: artifact.into(),
            subject_ids,
            digest,
        });
    }

    /// Every artifact must have consumed training subjects only, and its
    /// stored digest must match its id list.
    pub fn verify(&self, train: &BTreeSet<String>, test: &BTreeSet<String>) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Leakage("audit log is empty".into()));
        }
        let mut problems = Vec::new();
        for e in &self.entries {
            if digest_ids(&e.subject_ids) != e.digest {
                problems.push(format!("{}: digest does not match recorded ids", e.artifact));
            }
            let leaked: Vec<&str> = e
                .subject_ids
                .iter()
                .filter(|id| test.contains(*id) || !train.contains(*id))
                .map(String::as_str)
                .collect();
            if !leaked.is_empty() {
                problems.push(format!(
                    "{} consumed {} non-training subject(s): {}",
                    e.artifact,
                    leaked.len(),
                    leaked.iter().take(5).copied().collect::<Vec<_>>().join(", ")
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Leakage(problems.join("; ")))
        }
    }
}
