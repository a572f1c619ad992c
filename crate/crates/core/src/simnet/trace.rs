use std::fmt;
use std::io::Write;

use sha2::{Digest as _, Sha256};

use super::SimTime;

/// Line-oriented run trace. Every line is hashed; keeping the lines or
/// streaming them to a writer is optional.
pub struct Trace {
    hasher: Sha256,
    lines: u64,
    keep: Option<Vec<String>>,
    sink: Option<Box<dyn Write + Send>>,
    line: String,
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trace").field("lines", &self.lines).finish()
    }
}

impl Default for Trace {
    fn default() -> Self {
        Self::new()
    }
}

impl Trace {
    pub fn new() -> Self {
        Trace {
            hasher: Sha256::new(),
            lines: 0,
            keep: None,
            sink: None,
            line: String::new(),
        }
    }

    pub fn keep_lines(mut self) -> Self {
        self.keep = Some(Vec::new());
        self
    }

    pub fn with_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn record(&mut self, time: SimTime, who: impl fmt::Display, event: impl fmt::Display) {
        use std::fmt::Write as _;
        self.line.clear();
        let _ = write!(self.line, "{time} {who} {event}");
        self.hasher.update(self.line.as_bytes());
        self.hasher.update(b"\n");
        self.lines += 1;
        if let Some(sink) = &mut self.sink {
            let _ = writeln!(sink, "{}", self.line);
        }
        if let Some(keep) = &mut self.keep {
            keep.push(self.line.clone());
        }
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn kept(&self) -> Option<&[String]> {
        self.keep.as_deref()
    }

    /// Hex SHA-256 of all lines so far.
    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        match &mut self.sink {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }
}

/// Time stamp of a trace line.
pub fn line_time(line: &str) -> Option<SimTime> {
    line.split(' ').next()?.parse().ok()
}
