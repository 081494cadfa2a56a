//! Exit codes and error plumbing shared by the `smartson` binary.

use std::fmt;
use std::path::{Path, PathBuf};

use smartson_core::platform::LogEntry;
use smartson_core::sim::SimError;

use crate::report::messages_jsonl;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PROTOCOL: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    pub fn protocol(e: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_PROTOCOL,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Saves the message log of a failed run to `out/messages.jsonl` and builds
/// the exit-2 error naming it.
pub fn protocol_failure(error: &SimError, log: &[LogEntry], out: &Path) -> CliError {
    let path: PathBuf = out.join("messages.jsonl");
    let saved = std::fs::create_dir_all(out).and_then(|_| std::fs::write(&path, messages_jsonl(log)));
    let note = match saved {
        Ok(()) => format!("message log in {}", path.display()),
        Err(e) => format!("message log not saved: {e}"),
    };
    CliError::protocol(format!("{error}; {note}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smartson_core::{AgentId, Payload, Performative};

    #[test]
    fn protocol_failure_saves_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let log = vec![LogEntry {
            seq: 0,
            tick: 0,
            conversation_id: "c".into(),
            performative: Performative::Cfp,
            sender: AgentId::new("a"),
            receiver: AgentId::new("b"),
            payload: Payload::Empty,
        }];
        let err = SimError::Stalled {
            waiting: vec![AgentId::new("a")],
            pending: 1,
        };
        let e = protocol_failure(&err, &log, &dir.path().join("o"));
        assert_eq!(e.code, EXIT_PROTOCOL);
        assert!(e.message.starts_with("deadlock"));
        let written = std::fs::read_to_string(dir.path().join("o/messages.jsonl")).unwrap();
        assert_eq!(written.lines().count(), 1);
    }
}
