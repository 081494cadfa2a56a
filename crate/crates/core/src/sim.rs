//! Shared world state and the deterministic round-robin scheduler.
//!
//! Every agent step sees the same [`World`]: the message platform, the
//! ledger and the epoch clock. The world also keeps a journal of sends,
//! mined transactions and epoch changes in the order they happened, which is
//! what protocol-order checks and the replay tool read.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    Activity, ConsumerAgent, ConsumerConfig, Outcome, ProviderAgent, RegistrarAgent, ReleaseOutcome, Task, TradeJob,
    TradeRecord, PROVIDER_SERVICE, REGISTRAR_SERVICE,
};
use crate::ledger::{AccountId, Ledger, LedgerError, TransactionReceipt};
use crate::matching::{Catalogue, ResourceSpec};
use crate::money::MoneyAmount;
use crate::platform::{AgentId, Message, Performative, Platform, PlatformError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalEntry {
    /// One delivered copy of a message.
    Message {
        seq: u64,
        tick: u64,
        performative: Performative,
        sender: AgentId,
        receiver: AgentId,
        conversation_id: String,
    },
    /// A mined transaction, reverted or not.
    Transaction {
        agent: AgentId,
        receipt: TransactionReceipt,
    },
    Epoch {
        epoch: u64,
    },
}

/// Something an agent could not do, kept for the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub tick: u64,
    pub epoch: u64,
    pub agent: AgentId,
    pub description: String,
}

#[derive(Debug, Clone, Default)]
pub struct World {
    pub platform: Platform,
    pub ledger: Ledger,
    epoch: u64,
    journal: Vec<JournalEntry>,
    incidents: Vec<Incident>,
}

impl World {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Moves the epoch clock forward, never backwards. A jump over several
    /// epochs is one journal entry.
    pub fn advance_epoch_to(&mut self, epoch: u64) {
        if epoch > self.epoch {
            self.epoch = epoch;
            self.journal.push(JournalEntry::Epoch { epoch });
        }
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn incidents(&self) -> &[Incident] {
        &self.incidents
    }

    /// Receipts in mining order with the agent that submitted them.
    pub fn receipts(&self) -> impl Iterator<Item = (&AgentId, &TransactionReceipt)> {
        self.journal.iter().filter_map(|e| match e {
            JournalEntry::Transaction { agent, receipt } => Some((agent, receipt)),
            _ => None,
        })
    }

    pub fn note(&mut self, agent: &AgentId, description: String) {
        self.incidents.push(Incident {
            tick: self.platform.now(),
            epoch: self.epoch,
            agent: agent.clone(),
            description,
        });
    }

    pub fn send(&mut self, msg: Message) -> Result<usize, PlatformError> {
        let before = self.platform.log().len();
        let n = self.platform.send(msg)?;
        for entry in &self.platform.log()[before..] {
            self.journal.push(JournalEntry::Message {
                seq: entry.seq,
                tick: entry.tick,
                performative: entry.performative,
                sender: entry.sender.clone(),
                receiver: entry.receiver.clone(),
                conversation_id: entry.conversation_id.clone(),
            });
        }
        Ok(n)
    }

    /// Sends, recording a failure as an incident instead of returning it.
    pub fn send_or_note(&mut self, agent: &AgentId, msg: Message) {
        if let Err(e) = self.send(msg) {
            self.note(agent, format!("send failed: {e}"));
        }
    }

    fn record(
        &mut self,
        agent: &AgentId,
        result: Result<TransactionReceipt, LedgerError>,
    ) -> Result<TransactionReceipt, LedgerError> {
        let receipt = match &result {
            Ok(r) => Some(r.clone()),
            Err(e) => e.receipt().cloned(),
        };
        if let Some(receipt) = receipt {
            self.journal.push(JournalEntry::Transaction {
                agent: agent.clone(),
                receipt,
            });
        }
        result
    }

    pub fn deploy_escrow(&mut self, agent: &AgentId, authority: AccountId) -> Result<AccountId, LedgerError> {
        let result = self.ledger.deploy_escrow(authority);
        let address = result.as_ref().ok().map(|(a, _)| *a);
        self.record(agent, result.map(|(_, r)| r))?;
        Ok(address.expect("successful deploy"))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn escrow_initialize(
        &mut self,
        agent: &AgentId,
        caller: AccountId,
        contract: AccountId,
        provider: AccountId,
        consumer: AccountId,
        fee_percent: u32,
        deadline_block: u64,
    ) -> Result<TransactionReceipt, LedgerError> {
        let result = self
            .ledger
            .escrow_initialize(caller, contract, provider, consumer, fee_percent, deadline_block);
        self.record(agent, result)
    }

    pub fn escrow_deposit(
        &mut self,
        agent: &AgentId,
        caller: AccountId,
        contract: AccountId,
        value: MoneyAmount,
    ) -> Result<TransactionReceipt, LedgerError> {
        let result = self.ledger.escrow_deposit(caller, contract, value);
        self.record(agent, result)
    }

    pub fn escrow_approve(
        &mut self,
        agent: &AgentId,
        caller: AccountId,
        contract: AccountId,
    ) -> Result<TransactionReceipt, LedgerError> {
        let result = self.ledger.escrow_approve(caller, contract);
        self.record(agent, result)
    }

    pub fn escrow_cancel(
        &mut self,
        agent: &AgentId,
        caller: AccountId,
        contract: AccountId,
    ) -> Result<TransactionReceipt, LedgerError> {
        let result = self.ledger.escrow_cancel(caller, contract);
        self.record(agent, result)
    }

    pub fn escrow_end(
        &mut self,
        agent: &AgentId,
        caller: AccountId,
        contract: AccountId,
    ) -> Result<TransactionReceipt, LedgerError> {
        let result = self.ledger.escrow_end(caller, contract);
        self.record(agent, result)
    }

    /// Registers an agent on the platform with a fresh funded wallet.
    pub fn enrol(&mut self, name: &str, endowment: MoneyAmount) -> Result<(AgentId, AccountId), PlatformError> {
        let id = self.platform.register_agent(name)?;
        let wallet = self.ledger.create_account(endowment);
        self.platform.set_wallet(&id, wallet)?;
        Ok((id, wallet))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("{0} is not a consumer")]
    NotAConsumer(AgentId),
    #[error("deadlock: {waiting:?} waiting with {pending} undelivered messages")]
    Stalled { waiting: Vec<AgentId>, pending: usize },
    #[error("no quiescence after {0} rounds")]
    RoundLimit(u64),
    #[error("consumer finished with an unexpected outcome")]
    UnexpectedOutcome,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AgentSlot {
    Registrar(RegistrarAgent),
    Provider(ProviderAgent),
    Consumer(ConsumerAgent),
}

impl AgentSlot {
    pub fn id(&self) -> &AgentId {
        match self {
            AgentSlot::Registrar(a) => &a.id,
            AgentSlot::Provider(a) => &a.id,
            AgentSlot::Consumer(a) => &a.id,
        }
    }

    pub fn step(&mut self, world: &mut World) -> Activity {
        match self {
            AgentSlot::Registrar(a) => a.step(world),
            AgentSlot::Provider(a) => a.step(world),
            AgentSlot::Consumer(a) => a.step(world),
        }
    }

    /// True for a consumer with queued or unfinished work.
    pub fn is_busy(&self) -> bool {
        matches!(self, AgentSlot::Consumer(c) if c.is_busy())
    }
}

pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000;

/// Steps every agent once per round, in registration order, then advances
/// the platform tick. When nobody makes progress it lets tick deadlines
/// expire, then moves the epoch clock to the earliest lease expiry, and
/// reports a deadlock if work is still pending after that.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: World,
    agents: Vec<AgentSlot>,
    pub max_rounds: u64,
    rounds: u64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self::new()
    }
}

impl Simulation {
    pub fn new() -> Self {
        Simulation {
            world: World::new(),
            agents: Vec::new(),
            max_rounds: DEFAULT_MAX_ROUNDS,
            rounds: 0,
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn agents(&self) -> &[AgentSlot] {
        &self.agents
    }

    /// Moves the agents out, e.g. to step them from other threads.
    pub fn take_agents(&mut self) -> Vec<AgentSlot> {
        core::mem::take(&mut self.agents)
    }

    /// Puts back agents taken with [`Simulation::take_agents`], in the same
    /// order.
    pub fn restore_agents(&mut self, agents: Vec<AgentSlot>) {
        self.agents = agents;
    }

    pub fn add_registrar(&mut self, name: &str, endowment: MoneyAmount, fee_percent: u32) -> Result<AgentId, SimError> {
        let (id, wallet) = self.world.enrol(name, endowment)?;
        self.world.platform.df_register(&id, REGISTRAR_SERVICE)?;
        self.agents.push(AgentSlot::Registrar(RegistrarAgent::new(
            id.clone(),
            wallet,
            fee_percent,
        )));
        Ok(id)
    }

    pub fn add_provider(
        &mut self,
        name: &str,
        endowment: MoneyAmount,
        catalogue: Catalogue,
    ) -> Result<AgentId, SimError> {
        let (id, wallet) = self.world.enrol(name, endowment)?;
        self.world.platform.df_register(&id, PROVIDER_SERVICE)?;
        self.agents
            .push(AgentSlot::Provider(ProviderAgent::new(id.clone(), wallet, catalogue)));
        Ok(id)
    }

    pub fn add_consumer(
        &mut self,
        name: &str,
        endowment: MoneyAmount,
        config: ConsumerConfig,
    ) -> Result<AgentId, SimError> {
        let (id, wallet) = self.world.enrol(name, endowment)?;
        self.agents
            .push(AgentSlot::Consumer(ConsumerAgent::new(id.clone(), wallet, config)));
        Ok(id)
    }

    pub fn registrar(&self, id: &AgentId) -> Option<&RegistrarAgent> {
        self.agents.iter().find_map(|a| match a {
            AgentSlot::Registrar(r) if &r.id == id => Some(r),
            _ => None,
        })
    }

    pub fn provider(&self, id: &AgentId) -> Option<&ProviderAgent> {
        self.agents.iter().find_map(|a| match a {
            AgentSlot::Provider(p) if &p.id == id => Some(p),
            _ => None,
        })
    }

    pub fn provider_mut(&mut self, id: &AgentId) -> Option<&mut ProviderAgent> {
        self.agents.iter_mut().find_map(|a| match a {
            AgentSlot::Provider(p) if &p.id == id => Some(p),
            _ => None,
        })
    }

    pub fn consumer(&self, id: &AgentId) -> Option<&ConsumerAgent> {
        self.agents.iter().find_map(|a| match a {
            AgentSlot::Consumer(c) if &c.id == id => Some(c),
            _ => None,
        })
    }

    pub fn consumer_mut(&mut self, id: &AgentId) -> Option<&mut ConsumerAgent> {
        self.agents.iter_mut().find_map(|a| match a {
            AgentSlot::Consumer(c) if &c.id == id => Some(c),
            _ => None,
        })
    }

    /// One pass over every agent followed by a tick.
    pub fn step_round(&mut self) -> Vec<Activity> {
        let activity = self.agents.iter_mut().map(|a| a.step(&mut self.world)).collect();
        self.world.platform.advance_tick();
        self.rounds += 1;
        activity
    }

    pub fn run_until_idle(&mut self) -> Result<(), SimError> {
        let start = self.rounds;
        loop {
            if self.rounds - start >= self.max_rounds {
                return Err(SimError::RoundLimit(self.max_rounds));
            }
            let activity = self.step_round();
            if activity.contains(&Activity::Worked) {
                continue;
            }
            let mut waits_on_tick = false;
            let mut next_epoch: Option<u64> = None;
            for a in &activity {
                if let Activity::Blocked { tick, epoch } = a {
                    waits_on_tick |= tick.is_some();
                    if let Some(e) = epoch {
                        next_epoch = Some(next_epoch.map_or(*e, |n| n.min(*e)));
                    }
                }
            }
            if waits_on_tick {
                continue;
            }
            if let Some(e) = next_epoch {
                self.world.advance_epoch_to(e);
                continue;
            }
            let waiting: Vec<AgentId> = self
                .agents
                .iter()
                .filter(|a| a.is_busy())
                .map(|a| a.id().clone())
                .collect();
            let pending = self.scheduled_pending();
            if waiting.is_empty() && pending == 0 {
                return Ok(());
            }
            return Err(SimError::Stalled { waiting, pending });
        }
    }

    /// Undelivered messages addressed to scheduled agents. Mail for agents
    /// that are registered but never stepped does not keep the run alive.
    fn scheduled_pending(&self) -> usize {
        self.agents
            .iter()
            .map(|a| self.world.platform.mailbox_len(a.id()))
            .sum()
    }

    fn run_task(&mut self, consumer: &AgentId, task: Task) -> Result<Outcome, SimError> {
        self.consumer_mut(consumer)
            .ok_or_else(|| SimError::NotAConsumer(consumer.clone()))?
            .push_task(task);
        self.run_until_idle()?;
        self.consumer_mut(consumer)
            .and_then(|c| c.take_outcome())
            .ok_or(SimError::UnexpectedOutcome)
    }

    /// Broadcasts a CFP and returns the best proposal, if any.
    pub fn consumer_request_resource(
        &mut self,
        consumer: &AgentId,
        target: ResourceSpec,
    ) -> Result<Option<(ResourceSpec, AgentId)>, SimError> {
        match self.run_task(consumer, Task::Request { target })? {
            Outcome::Request(best) => Ok(best),
            _ => Err(SimError::UnexpectedOutcome),
        }
    }

    /// Asks the registrar for a contract and deposits `lease_time × price`.
    pub fn consumer_contract(
        &mut self,
        consumer: &AgentId,
        best: ResourceSpec,
        provider: AgentId,
        deadline: u64,
        lease_time: u64,
    ) -> Result<Option<(TransactionReceipt, AccountId)>, SimError> {
        let task = Task::Contract {
            best,
            provider,
            deadline,
            lease_time,
        };
        match self.run_task(consumer, task)? {
            Outcome::Contract(result) => Ok(result),
            _ => Err(SimError::UnexpectedOutcome),
        }
    }

    /// Sends ACCEPT_PROPOSAL; returns the interface details on success.
    pub fn consumer_acquire(
        &mut self,
        consumer: &AgentId,
        best: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        lease_time: u64,
    ) -> Result<Option<String>, SimError> {
        let task = Task::Acquire {
            best,
            provider,
            contract,
            lease_time,
        };
        match self.run_task(consumer, task)? {
            Outcome::Acquire(result) => Ok(result),
            _ => Err(SimError::UnexpectedOutcome),
        }
    }

    /// Waits out the lease, approves the escrow and returns the resource.
    pub fn consumer_release(
        &mut self,
        consumer: &AgentId,
        resource: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
    ) -> Result<ReleaseOutcome, SimError> {
        let task = Task::Release {
            resource,
            provider,
            contract,
        };
        match self.run_task(consumer, task)? {
            Outcome::Release(result) => Ok(result),
            _ => Err(SimError::UnexpectedOutcome),
        }
    }

    /// One complete request-to-release cycle.
    pub fn trade(&mut self, consumer: &AgentId, job: TradeJob) -> Result<TradeRecord, SimError> {
        match self.run_task(consumer, Task::Trade(job))? {
            Outcome::Trade(record) => Ok(record),
            _ => Err(SimError::UnexpectedOutcome),
        }
    }
}
