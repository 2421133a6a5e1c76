//! Post-hoc oracle checks of dataset files.

use std::path::{Path, PathBuf};

use cedc_core::tasks::{read_dataset, verify_dataset, DatasetViolation, TaskKind};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FileCheck {
    pub path: PathBuf,
    pub task: TaskKind,
    pub records: usize,
    pub violations: Vec<DatasetViolation>,
}

/// Every `*.jsonl` under a `datasets` directory below `root` (or `root` itself if it is a file).
pub fn dataset_files(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "jsonl")
                && p.parent()
                    .and_then(Path::file_name)
                    .is_some_and(|n| n == "datasets")
            {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// The task of the run a file belongs to, from the nearest `config.toml` above it.
pub fn task_of(path: &Path) -> Result<TaskKind> {
    for dir in path.ancestors().skip(1) {
        let cfg = dir.join("config.toml");
        if cfg.is_file() {
            return Ok(RunConfig::load(&cfg)?.run.task);
        }
    }
    Err(HarnessError::Config(format!(
        "no config.toml above {}; pass --task",
        path.display()
    )))
}

/// Checks every dataset file under each root against its task's oracle.
pub fn verify_paths(roots: &[PathBuf], task: Option<TaskKind>) -> Result<Vec<FileCheck>> {
    let mut out = Vec::new();
    for root in roots {
        let files = dataset_files(root)?;
        if files.is_empty() {
            return Err(HarnessError::Config(format!(
                "no dataset files under {}",
                root.display()
            )));
        }
        for path in files {
            let task = match task {
                Some(t) => t,
                None => task_of(&path)?,
            };
            let examples = read_dataset(&path)?;
            let violations = verify_dataset(task.task(), &examples);
            out.push(FileCheck {
                path,
                task,
                records: examples.len(),
                violations,
            });
        }
    }
    Ok(out)
}
