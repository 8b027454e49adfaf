//! Envelope traces as JSON lines, one [`TraceEvent`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use gcs_core::harness::TraceEvent;

pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, event: &TraceEvent) -> Result<()> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn write_all<'a>(&mut self, events: impl IntoIterator<Item = &'a TraceEvent>) -> Result<()> {
        for e in events {
            self.write(e)?;
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn write(path: &Path, events: &[TraceEvent]) -> Result<()> {
    TraceWriter::create(path)?.write_all(events)
}

/// Reads a trace; blank lines are skipped.
pub fn read(path: &Path) -> Result<Vec<TraceEvent>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).with_context(|| format!("{}:{}: bad trace line", path.display(), n + 1))?;
        events.push(e);
    }
    Ok(events)
}
