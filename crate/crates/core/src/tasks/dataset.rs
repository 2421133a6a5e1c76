//! Line-delimited JSON datasets: one `{"input", "target", "difficulty"}` record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{Example, Task};
use crate::error::{CoreError, Result};

pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Example>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line)
            .map_err(|e| CoreError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetViolation {
    pub line: usize,
    pub input: String,
    pub reason: String,
}

/// Re-checks every record against the oracle and the difficulty measure.
pub fn verify_dataset(task: &dyn Task, examples: &[Example]) -> Vec<DatasetViolation> {
    let mut out = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let reason = match (task.oracle(&ex.input), task.difficulty(&ex.input)) {
            (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
            (Ok(t), _) if t != ex.target => {
                Some(format!("target {:?} but oracle says {t:?}", ex.target))
            }
            (_, Ok(d)) if d != ex.difficulty => Some(format!(
                "difficulty {} but input measures {d}",
                ex.difficulty
            )),
            _ => None,
        };
        if let Some(reason) = reason {
            out.push(DatasetViolation {
                line: i + 1,
                input: ex.input.clone(),
                reason,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_initial_dataset, Addition};

    #[test]
    fn records_keep_field_order_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = make_initial_dataset(&Addition, 20, 3, 1).unwrap();
        write_dataset(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .all(|l| l.starts_with("{\"input\":") && l.contains(",\"target\":")));
        assert_eq!(read_dataset(&path).unwrap(), data);
        assert!(verify_dataset(&Addition, &data).is_empty());
    }

    #[test]
    fn violations_reported() {
        let bad = vec![
            Example {
                input: "1+1".into(),
                target: "3".into(),
                difficulty: 1,
            },
            Example {
                input: "12+1".into(),
                target: "13".into(),
                difficulty: 1,
            },
            Example {
                input: "x".into(),
                target: "".into(),
                difficulty: 0,
            },
        ];
        let v = verify_dataset(&Addition, &bad);
        assert_eq!(v.iter().map(|v| v.line).collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
