//! Append-only JSON-lines event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::ServiceError;
use crate::state::{AnnotationService, LogEvent};

#[derive(Debug)]
pub struct EventLog {
    path: Option<PathBuf>,
    file: Option<File>,
}

impl EventLog {
    /// A log that keeps nothing, for tests and throwaway runs.
    pub fn in_memory() -> Self {
        Self { path: None, file: None }
    }

    /// Opens `path` for appending and returns the events already in it.
    pub fn open(path: &Path) -> Result<(Self, Vec<LogEvent>), ServiceError> {
        let mut events = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = serde_json::from_str(&line).map_err(|e| ServiceError::Replay {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                events.push(event);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Self {
                path: Some(path.to_path_buf()),
                file: Some(file),
            },
            events,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes one event and syncs it to disk.
    pub fn append(&mut self, event: &LogEvent) -> Result<(), ServiceError> {
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(event).expect("log events serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        Ok(())
    }
}

/// Rebuilds service state from logged events.
pub fn replay(service: &mut AnnotationService, events: &[LogEvent]) -> Result<(), ServiceError> {
    for (i, event) in events.iter().enumerate() {
        service.apply(event).map_err(|e| ServiceError::Replay {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(())
}
