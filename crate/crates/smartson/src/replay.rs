//! Re-validation of a `messages.jsonl` log.
//!
//! Each line must be a log entry with exactly the documented fields, in
//! strictly increasing `seq` and non-decreasing `tick` order, with a payload
//! that fits its performative. Every reply must answer an outstanding
//! request in the same conversation between the same two agents:
//!
//! | request          | allowed replies        |
//! |------------------|------------------------|
//! | CFP              | PROPOSE, REFUSE        |
//! | REQUEST          | CONFIRM, CANCEL        |
//! | ACCEPT_PROPOSAL  | INFORM, FAILURE        |
//! | DISCONFIRM       | DISCONFIRM, FAILURE    |
//! | CANCEL           | CANCEL                 |

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::Serialize;
use smartson_core::platform::LogEntry;
use smartson_core::{AgentId, Performative};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: not a log entry: {source}")]
    Schema { line: usize, source: serde_json::Error },
    #[error("line {line}: seq {seq} does not follow {previous}")]
    Sequence { line: usize, seq: u64, previous: u64 },
    #[error("line {line}: tick {tick} is before {previous}")]
    Tick { line: usize, tick: u64, previous: u64 },
    #[error("line {line}: {source}")]
    Payload {
        line: usize,
        source: smartson_core::PlatformError,
    },
    #[error("line {line}: {performative} from {sender} to {receiver} answers nothing in {conversation}")]
    Unexpected {
        line: usize,
        performative: Performative,
        sender: AgentId,
        receiver: AgentId,
        conversation: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outstanding {
    pub conversation: String,
    pub performative: Performative,
    pub sender: AgentId,
    pub receiver: AgentId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplaySummary {
    pub messages: usize,
    pub conversations: usize,
    pub by_performative: BTreeMap<String, usize>,
    /// Requests that never got a reply, e.g. after a receive timeout.
    pub unanswered: Vec<Outstanding>,
}

fn replies_to(request: Performative) -> &'static [Performative] {
    use Performative::*;
    match request {
        Cfp => &[Propose, Refuse],
        Request => &[Confirm, Cancel],
        AcceptProposal => &[Inform, Failure],
        Disconfirm => &[Disconfirm, Failure],
        Cancel => &[Cancel],
        _ => &[],
    }
}

fn is_request(p: Performative) -> bool {
    !replies_to(p).is_empty()
}

type Key = (String, AgentId, AgentId);

pub fn replay<R: BufRead>(reader: R) -> Result<ReplaySummary, ReplayError> {
    let mut outstanding: BTreeMap<Key, Vec<Performative>> = BTreeMap::new();
    let mut by_performative = BTreeMap::new();
    let mut conversations = std::collections::BTreeSet::new();
    let mut last: Option<(u64, u64)> = None;
    let mut messages = 0;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry =
            serde_json::from_str(&line).map_err(|source| ReplayError::Schema { line: line_no, source })?;
        if let Some((seq, tick)) = last {
            if entry.seq <= seq {
                return Err(ReplayError::Sequence {
                    line: line_no,
                    seq: entry.seq,
                    previous: seq,
                });
            }
            if entry.tick < tick {
                return Err(ReplayError::Tick {
                    line: line_no,
                    tick: entry.tick,
                    previous: tick,
                });
            }
        }
        last = Some((entry.seq, entry.tick));
        let msg = smartson_core::Message {
            sender: entry.sender.clone(),
            receivers: vec![entry.receiver.clone()],
            performative: entry.performative,
            payload: entry.payload.clone(),
            conversation_id: entry.conversation_id.clone(),
        };
        msg.check_payload()
            .map_err(|source| ReplayError::Payload { line: line_no, source })?;

        let reply_key = (
            entry.conversation_id.clone(),
            entry.receiver.clone(),
            entry.sender.clone(),
        );
        let answered = outstanding.get_mut(&reply_key).and_then(|open| {
            let pos = open
                .iter()
                .position(|req| replies_to(*req).contains(&entry.performative))?;
            Some(open.remove(pos))
        });
        if answered.is_none() {
            if !is_request(entry.performative) {
                return Err(ReplayError::Unexpected {
                    line: line_no,
                    performative: entry.performative,
                    sender: entry.sender,
                    receiver: entry.receiver,
                    conversation: entry.conversation_id,
                });
            }
            outstanding
                .entry((
                    entry.conversation_id.clone(),
                    entry.sender.clone(),
                    entry.receiver.clone(),
                ))
                .or_default()
                .push(entry.performative);
        }
        messages += 1;
        conversations.insert(entry.conversation_id.clone());
        *by_performative.entry(entry.performative.to_string()).or_insert(0) += 1;
    }

    let unanswered = outstanding
        .into_iter()
        .flat_map(|((conversation, sender, receiver), open)| {
            open.into_iter().map(move |performative| Outstanding {
                conversation: conversation.clone(),
                performative,
                sender: sender.clone(),
                receiver: receiver.clone(),
            })
        })
        .collect();
    Ok(ReplaySummary {
        messages,
        conversations: conversations.len(),
        by_performative,
        unanswered,
    })
}
