//! JSONL run logs.
//!
//! Every run is one self-contained JSON line, written with a single
//! `write_all` and flushed. A crash can only leave a partial last line.
//! When a writer reopens such a file it terminates the fragment and appends
//! a truncation marker line; readers skip markers, unparsable lines and an
//! unterminated final line.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::RunOutcome;
use crate::solver::{Budget, RunResult, SolverConfig, Trajectory, TrajectoryEvent};

/// Line written after a torn record.
pub const TRUNCATION_MARKER: &str = r#"{"truncated":true}"#;

#[derive(Error, Debug)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One executed (or failed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub solver: String,
    pub config: SolverConfig,
    pub instance: String,
    pub instance_path: String,
    pub track: String,
    pub seed: u64,
    pub budget: Budget,
    pub status: RunStatus,
    pub events: Vec<TrajectoryEvent>,
    pub best_cost: Option<u64>,
    pub total_flips: u64,
    pub total_elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Identity of a run cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellInfo {
    pub solver: String,
    pub config: SolverConfig,
    pub instance: String,
    pub instance_path: String,
    pub track: String,
    pub seed: u64,
    pub budget: Budget,
}

impl RunLogRecord {
    pub fn completed(cell: CellInfo, run: &RunResult) -> Self {
        RunLogRecord {
            solver: cell.solver,
            config: cell.config,
            instance: cell.instance,
            instance_path: cell.instance_path,
            track: cell.track,
            seed: cell.seed,
            budget: cell.budget,
            status: RunStatus::Ok,
            events: run.trajectory.events().to_vec(),
            best_cost: run.best_cost,
            total_flips: run.total_flips,
            total_elapsed: run.total_elapsed,
            error: None,
        }
    }

    pub fn failed(cell: CellInfo, error: impl Into<String>) -> Self {
        RunLogRecord {
            solver: cell.solver,
            config: cell.config,
            instance: cell.instance,
            instance_path: cell.instance_path,
            track: cell.track,
            seed: cell.seed,
            budget: cell.budget,
            status: RunStatus::Failed,
            events: Vec::new(),
            best_cost: None,
            total_flips: 0,
            total_elapsed: 0.0,
            error: Some(error.into()),
        }
    }

    /// The run as the assessment sees it; `None` for failed or inconsistent
    /// records.
    pub fn to_outcome(&self) -> Option<RunOutcome> {
        if self.status != RunStatus::Ok {
            return None;
        }
        let trajectory = Trajectory::from_events(self.events.clone()).ok()?;
        if trajectory.final_cost() != self.best_cost {
            return None;
        }
        Some(RunOutcome {
            solver: self.solver.clone(),
            instance: self.instance.clone(),
            track: self.track.clone(),
            trajectory,
        })
    }
}

/// Append-only writer for one log file.
pub struct RunLogWriter {
    file: File,
    path: PathBuf,
}

impl RunLogWriter {
    /// Opens `path` for appending, isolating a torn trailing record if the
    /// previous writer crashed mid-line.
    pub fn open(path: &Path) -> Result<Self, RunLogError> {
        let io_err = |source| RunLogError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        let len = file.metadata().map_err(io_err)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(io_err)?;
            file.read_exact(&mut last).map_err(io_err)?;
            if last[0] != b'\n' {
                log::warn!("{}: torn record at end of file, marking it", path.display());
                file.write_all(format!("\n{TRUNCATION_MARKER}\n").as_bytes())
                    .map_err(io_err)?;
                file.flush().map_err(io_err)?;
            }
        }
        Ok(RunLogWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &RunLogRecord) -> Result<(), RunLogError> {
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| RunLogError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Records read from logs plus what was skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogContents {
    pub records: Vec<RunLogRecord>,
    pub skipped_lines: usize,
    pub files: Vec<PathBuf>,
}

/// Reads one log file.
pub fn read_log_file(path: &Path) -> Result<LogContents, RunLogError> {
    let io_err = |source| RunLogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = LogContents {
        files: vec![path.to_path_buf()],
        ..Default::default()
    };
    let mut line = String::new();
    let mut number = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err)?;
        if n == 0 {
            break;
        }
        number += 1;
        if !line.ends_with('\n') {
            log::warn!("{}:{number}: unterminated record skipped", path.display());
            out.skipped_lines += 1;
            break;
        }
        let text = line.trim();
        if text.is_empty() || text == TRUNCATION_MARKER {
            continue;
        }
        match serde_json::from_str::<RunLogRecord>(text) {
            Ok(r) => out.records.push(r),
            Err(e) => {
                log::warn!("{}:{number}: skipped ({e})", path.display());
                out.skipped_lines += 1;
            }
        }
    }
    Ok(out)
}

/// Reads every `*.jsonl` file directly inside `dir`, in file name order.
pub fn read_log_dir(dir: &Path) -> Result<LogContents, RunLogError> {
    let io_err = |source| RunLogError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    let mut out = LogContents::default();
    for p in paths {
        let c = read_log_file(&p)?;
        out.records.extend(c.records);
        out.skipped_lines += c.skipped_lines;
        out.files.extend(c.files);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(seed: u64) -> CellInfo {
        CellInfo {
            solver: "s".into(),
            config: SolverConfig::default(),
            instance: "i".into(),
            instance_path: "t/i.wcnf".into(),
            track: "t".into(),
            seed,
            budget: Budget::Flips(10),
        }
    }

    fn record(seed: u64) -> RunLogRecord {
        let mut r = RunLogRecord::failed(cell(seed), "x");
        r.status = RunStatus::Ok;
        r.error = None;
        r.events = vec![TrajectoryEvent {
            elapsed: 0.0,
            flips: 0,
            cost: 4,
        }];
        r.best_cost = Some(4);
        r
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut w = RunLogWriter::open(&path).unwrap();
        w.append(&record(1)).unwrap();
        w.append(&RunLogRecord::failed(cell(2), "missing")).unwrap();
        let c = read_log_dir(dir.path()).unwrap();
        assert_eq!(c.records.len(), 2);
        assert_eq!(c.records[0], record(1));
        assert!(c.records[0].to_outcome().is_some());
        assert!(c.records[1].to_outcome().is_none());
    }

    #[test]
    fn torn_tail_is_skipped_and_marked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let full = serde_json::to_string(&record(1)).unwrap();
        fs::write(&path, format!("{full}\n{}", &full[..full.len() / 2])).unwrap();
        let c = read_log_file(&path).unwrap();
        assert_eq!((c.records.len(), c.skipped_lines), (1, 1));

        let mut w = RunLogWriter::open(&path).unwrap();
        w.append(&record(3)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(TRUNCATION_MARKER));
        let c = read_log_file(&path).unwrap();
        assert_eq!(
            c.records.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(c.skipped_lines, 1);
    }

    #[test]
    fn inconsistent_record_is_not_assessed() {
        let mut r = record(1);
        r.best_cost = Some(3);
        assert!(r.to_outcome().is_none());
        r.best_cost = Some(4);
        r.events.push(TrajectoryEvent {
            elapsed: 0.0,
            flips: 0,
            cost: 5,
        });
        assert!(r.to_outcome().is_none());
    }
}
