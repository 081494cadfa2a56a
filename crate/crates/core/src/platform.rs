//! FIPA-style agent platform: performative messages, per-agent mailboxes,
//! agent lifecycle (AMS) and service lookup (DF).
//!
//! Delivery is synchronous: `send` enqueues one copy per receiver and
//! appends one log entry per copy, so the global delivery order equals the
//! global send order. Time is a tick counter advanced by the scheduler and
//! used only for receive timeouts.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::AccountId;
use crate::matching::ResourceSpec;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(name: impl Into<String>) -> Self {
        AgentId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The ten performatives the marketplace protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Performative {
    Request,
    Confirm,
    Cancel,
    Cfp,
    Propose,
    Refuse,
    AcceptProposal,
    Inform,
    Failure,
    Disconfirm,
}

impl Performative {
    pub const ALL: [Performative; 10] = [
        Performative::Request,
        Performative::Confirm,
        Performative::Cancel,
        Performative::Cfp,
        Performative::Propose,
        Performative::Refuse,
        Performative::AcceptProposal,
        Performative::Inform,
        Performative::Failure,
        Performative::Disconfirm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Request => "REQUEST",
            Performative::Confirm => "CONFIRM",
            Performative::Cancel => "CANCEL",
            Performative::Cfp => "CFP",
            Performative::Propose => "PROPOSE",
            Performative::Refuse => "REFUSE",
            Performative::AcceptProposal => "ACCEPT_PROPOSAL",
            Performative::Inform => "INFORM",
            Performative::Failure => "FAILURE",
            Performative::Disconfirm => "DISCONFIRM",
        }
    }

    /// Payload kind this performative must carry.
    pub fn payload_kind(self) -> PayloadKind {
        match self {
            Performative::Request => PayloadKind::ContractRequest,
            Performative::Confirm => PayloadKind::ContractAddress,
            Performative::Cancel => PayloadKind::Empty,
            Performative::Cfp => PayloadKind::Resource,
            Performative::Propose => PayloadKind::Proposal,
            Performative::Refuse => PayloadKind::Reason,
            Performative::AcceptProposal => PayloadKind::Accept,
            Performative::Inform => PayloadKind::InterfaceDetails,
            Performative::Failure => PayloadKind::Reason,
            Performative::Disconfirm => PayloadKind::Resource,
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    ContractRequest,
    ContractAddress,
    Empty,
    Resource,
    Proposal,
    Reason,
    Accept,
    InterfaceDetails,
}

/// Typed message content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payload {
    ContractRequest {
        provider: AccountId,
        consumer: AccountId,
        deadline: u64,
    },
    ContractAddress {
        contract: AccountId,
    },
    Empty,
    Resource {
        resource: ResourceSpec,
    },
    Proposal {
        score: f64,
        resource: ResourceSpec,
    },
    Reason {
        reason: String,
    },
    Accept {
        resource: ResourceSpec,
        contract: AccountId,
        lease_time: u64,
    },
    InterfaceDetails {
        details: String,
    },
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::ContractRequest { .. } => PayloadKind::ContractRequest,
            Payload::ContractAddress { .. } => PayloadKind::ContractAddress,
            Payload::Empty => PayloadKind::Empty,
            Payload::Resource { .. } => PayloadKind::Resource,
            Payload::Proposal { .. } => PayloadKind::Proposal,
            Payload::Reason { .. } => PayloadKind::Reason,
            Payload::Accept { .. } => PayloadKind::Accept,
            Payload::InterfaceDetails { .. } => PayloadKind::InterfaceDetails,
        }
    }

    pub fn reason(text: &str) -> Self {
        Payload::Reason { reason: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    pub receivers: Vec<AgentId>,
    pub performative: Performative,
    pub payload: Payload,
    pub conversation_id: String,
}

impl Message {
    /// Builds a message, checking the payload against the protocol table.
    pub fn new(
        sender: AgentId,
        receivers: Vec<AgentId>,
        performative: Performative,
        payload: Payload,
        conversation_id: impl Into<String>,
    ) -> Result<Self, PlatformError> {
        let msg = Message {
            sender,
            receivers,
            performative,
            payload,
            conversation_id: conversation_id.into(),
        };
        msg.check_payload()?;
        Ok(msg)
    }

    pub fn check_payload(&self) -> Result<(), PlatformError> {
        let expected = self.performative.payload_kind();
        if self.payload.kind() != expected {
            return Err(PlatformError::PayloadMismatch {
                performative: self.performative,
                found: self.payload.kind(),
            });
        }
        Ok(())
    }

    /// Reply to the sender in the same conversation.
    pub fn reply(
        &self,
        from: &AgentId,
        performative: Performative,
        payload: Payload,
    ) -> Result<Message, PlatformError> {
        Message::new(
            from.clone(),
            alloc::vec![self.sender.clone()],
            performative,
            payload,
            self.conversation_id.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error("agent name {0} already registered")]
    DuplicateName(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("receive timed out")]
    Timeout,
    #[error("{performative} cannot carry a {found:?} payload")]
    PayloadMismatch {
        performative: Performative,
        found: PayloadKind,
    },
}

/// One delivered copy of a message, in delivery order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub seq: u64,
    pub tick: u64,
    pub conversation_id: String,
    pub performative: Performative,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
struct Queued {
    seq: u64,
    message: Message,
}

#[derive(Debug, Clone, Default)]
struct AgentRecord {
    mailbox: VecDeque<Queued>,
    wallet: Option<AccountId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub agent: AgentId,
    pub service_type: String,
}

#[derive(Debug, Clone, Default)]
pub struct Platform {
    agents: BTreeMap<AgentId, AgentRecord>,
    directory: Vec<ServiceRecord>,
    log: Vec<LogEntry>,
    dropped: Vec<LogEntry>,
    next_seq: u64,
    tick: u64,
}

impl Platform {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_agent(&mut self, name: impl Into<String>) -> Result<AgentId, PlatformError> {
        let id = AgentId::new(name);
        if self.agents.contains_key(&id) {
            return Err(PlatformError::DuplicateName(id));
        }
        self.agents.insert(id.clone(), AgentRecord::default());
        Ok(id)
    }

    /// Destroys the agent's mailbox and purges its DF records.
    pub fn deregister_agent(&mut self, id: &AgentId) -> Result<(), PlatformError> {
        self.agents
            .remove(id)
            .ok_or_else(|| PlatformError::UnknownAgent(id.clone()))?;
        self.directory.retain(|r| &r.agent != id);
        Ok(())
    }

    pub fn is_registered(&self, id: &AgentId) -> bool {
        self.agents.contains_key(id)
    }

    /// Records the ledger account an agent trades with.
    pub fn set_wallet(&mut self, id: &AgentId, wallet: AccountId) -> Result<(), PlatformError> {
        self.record_mut(id)?.wallet = Some(wallet);
        Ok(())
    }

    pub fn wallet_of(&self, id: &AgentId) -> Option<AccountId> {
        self.agents.get(id).and_then(|r| r.wallet)
    }

    fn record_mut(&mut self, id: &AgentId) -> Result<&mut AgentRecord, PlatformError> {
        self.agents
            .get_mut(id)
            .ok_or_else(|| PlatformError::UnknownAgent(id.clone()))
    }

    pub fn df_register(&mut self, id: &AgentId, service_type: &str) -> Result<(), PlatformError> {
        if !self.agents.contains_key(id) {
            return Err(PlatformError::UnknownAgent(id.clone()));
        }
        let record = ServiceRecord {
            agent: id.clone(),
            service_type: service_type.into(),
        };
        if !self.directory.contains(&record) {
            self.directory.push(record);
        }
        Ok(())
    }

    /// Agents offering `service_type`, in registration order.
    pub fn df_find_all(&self, service_type: &str) -> Vec<AgentId> {
        self.directory
            .iter()
            .filter(|r| r.service_type == service_type)
            .map(|r| r.agent.clone())
            .collect()
    }

    /// Delivers one copy per receiver. All receivers must be registered;
    /// otherwise nothing is delivered. Returns the number of copies.
    pub fn send(&mut self, msg: Message) -> Result<usize, PlatformError> {
        msg.check_payload()?;
        if let Some(unknown) = msg.receivers.iter().find(|r| !self.agents.contains_key(*r)) {
            return Err(PlatformError::UnknownAgent(unknown.clone()));
        }
        for receiver in &msg.receivers {
            let seq = self.next_seq;
            self.next_seq += 1;
            self.log.push(LogEntry {
                seq,
                tick: self.tick,
                conversation_id: msg.conversation_id.clone(),
                performative: msg.performative,
                sender: msg.sender.clone(),
                receiver: receiver.clone(),
                payload: msg.payload.clone(),
            });
            self.agents
                .get_mut(receiver)
                .expect("checked above")
                .mailbox
                .push_back(Queued {
                    seq,
                    message: msg.clone(),
                });
        }
        Ok(msg.receivers.len())
    }

    /// Removes and returns the oldest message matching `filter`; other
    /// messages keep their order.
    ///
    /// With nothing matching: `Ok(None)` while waiting, or
    /// [`PlatformError::Timeout`] once `deadline` (an absolute tick) has been
    /// reached.
    pub fn receive(
        &mut self,
        agent: &AgentId,
        filter: Option<Performative>,
        deadline: Option<u64>,
    ) -> Result<Option<Message>, PlatformError> {
        let now = self.tick;
        let record = self.record_mut(agent)?;
        let pos = record
            .mailbox
            .iter()
            .position(|q| filter.is_none_or(|p| q.message.performative == p));
        match pos {
            Some(i) => Ok(record.mailbox.remove(i).map(|q| q.message)),
            None => match deadline {
                Some(d) if now >= d => Err(PlatformError::Timeout),
                _ => Ok(None),
            },
        }
    }

    pub fn mailbox_len(&self, agent: &AgentId) -> usize {
        self.agents.get(agent).map_or(0, |r| r.mailbox.len())
    }

    pub fn pending(&self) -> usize {
        self.agents.values().map(|r| r.mailbox.len()).sum()
    }

    /// Notes a message its receiver discarded (e.g. a late reply).
    pub fn record_dropped(&mut self, receiver: &AgentId, msg: &Message) {
        self.dropped.push(LogEntry {
            seq: self.next_seq,
            tick: self.tick,
            conversation_id: msg.conversation_id.clone(),
            performative: msg.performative,
            sender: msg.sender.clone(),
            receiver: receiver.clone(),
            payload: msg.payload.clone(),
        });
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn dropped(&self) -> &[LogEntry] {
        &self.dropped
    }

    pub fn now(&self) -> u64 {
        self.tick
    }

    pub fn advance_tick(&mut self) {
        self.tick += 1;
    }

    /// Sequence number of the oldest message still queued for `agent`.
    pub fn oldest_pending_seq(&self, agent: &AgentId) -> Option<u64> {
        self.agents.get(agent)?.mailbox.front().map(|q| q.seq)
    }
}
