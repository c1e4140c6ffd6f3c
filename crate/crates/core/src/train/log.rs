use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the training log. `batch` is `None` on epoch-mean lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub epoch: usize,
    pub batch: Option<usize>,
    pub l_qml: f64,
    pub l_haml: f64,
    pub l_mml: f64,
    pub lr: f64,
}

pub fn write_log(records: &[LogRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("log record serialises");
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// The epoch-mean lines, in order.
pub fn epoch_means(records: &[LogRecord]) -> Vec<LogRecord> {
    records.iter().filter(|r| r.batch.is_none()).copied().collect()
}
