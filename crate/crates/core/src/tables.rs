//! Shipped parameter tables and the small CSV readers they share.
//!
//! Each table is plain CSV so that revised values can be dropped in without a
//! rebuild: pass a path through the run config and it replaces the embedded
//! copy wholesale.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{GscmError, Result};

pub const LSP_CSV: &str = include_str!("../data/lsp.csv");
pub const PATHLOSS_CSV: &str = include_str!("../data/pathloss.csv");
pub const RAY_COUNT_CSV: &str = include_str!("../data/ray_count.csv");
pub const GRIP_ATTENUATION_CSV: &str = include_str!("../data/grip_attenuation.csv");
pub const UT_CANDIDATES_CSV: &str = include_str!("../data/ut_candidates.csv");

/// Parses CSV text with a header row into typed records.
pub fn parse_records<T: DeserializeOwned>(name: &str, text: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let rec: T = rec.map_err(|e| GscmError::Table {
            table: name.to_string(),
            line: i + 2,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_table_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GscmError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Provenance flag carried by every shipped parameter row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    #[serde(rename = "rel19-updated")]
    Rel19Updated,
    Legacy,
    Placeholder,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Rel19Updated => "rel19-updated",
            Provenance::Legacy => "legacy",
            Provenance::Placeholder => "placeholder",
        })
    }
}
