use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Per-epoch training summary. Losses are means over the documents that
/// carry targets for the task, `None` when none do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub token_loss: Option<f64>,
    pub sentence_loss: Option<f64>,
    pub document_loss: Option<f64>,
    pub dev_f1: f64,
}

pub const HISTORY_HEADER: &str = "epoch,token_loss,sentence_loss,document_loss,dev_f1";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

/// CSV with round-trip float formatting.
pub fn write_history_csv(records: &[EpochRecord], mut w: impl Write) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch,
            cell(r.token_loss),
            cell(r.sentence_loss),
            cell(r.document_loss),
            r.dev_f1
        )?;
    }
    Ok(())
}

pub fn history_csv(records: &[EpochRecord]) -> String {
    let mut buf = Vec::new();
    write_history_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}
