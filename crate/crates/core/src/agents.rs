//! The three agent roles.
//!
//! * [`RegistrarAgent`] deploys and initializes one escrow per REQUEST.
//! * [`ProviderAgent`] answers CFPs with its best match, leases on
//!   ACCEPT_PROPOSAL (approving the escrow) and takes resources back on
//!   DISCONFIRM.
//! * [`ConsumerAgent`] runs request → contract → acquire → hold → release as
//!   an explicit state machine so it can be stepped by the scheduler.
//!
//! Agents never block: `step` does at most one unit of work and reports
//! what it is waiting for through [`Activity`].

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::escrow::EscrowState;
use crate::ledger::{AccountId, TransactionReceipt};
use crate::matching::{best_match, select_best_proposal, Catalogue, Offer, ProviderReply, ResourceSpec};
use crate::money::MoneyAmount;
use crate::platform::{AgentId, Message, Payload, Performative};
use crate::sim::World;

pub const PROVIDER_SERVICE: &str = "resource-provider";
pub const REGISTRAR_SERVICE: &str = "contract-registrar";
pub const NOT_AVAILABLE: &str = "not-available";
pub const INTERFACE_DETAILS: &str = "Resource Interaction Details";

/// What an agent did in one scheduler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Worked,
    /// Nothing to do.
    Idle,
    /// Waiting for a message, optionally bounded by a tick deadline, or for
    /// the epoch clock to reach `epoch`.
    Blocked {
        tick: Option<u64>,
        epoch: Option<u64>,
    },
}

impl Activity {
    const WAITING: Activity = Activity::Blocked {
        tick: None,
        epoch: None,
    };
}

// ---------------------------------------------------------------- registrar

#[derive(Debug, Clone)]
pub struct RegistrarAgent {
    pub id: AgentId,
    pub wallet: AccountId,
    pub contract_fee_percent: u32,
    /// Contracts deployed so far, in deployment order.
    pub deployed: Vec<AccountId>,
}

impl RegistrarAgent {
    pub fn new(id: AgentId, wallet: AccountId, contract_fee_percent: u32) -> Self {
        RegistrarAgent {
            id,
            wallet,
            contract_fee_percent,
            deployed: Vec::new(),
        }
    }

    /// Handles one REQUEST: deploy, initialize with
    /// `deadline_block = current_block + deadline`, reply CONFIRM with the
    /// address or CANCEL if either transaction fails. Other performatives
    /// get no reply.
    pub fn serve(&mut self, world: &mut World, msg: &Message) -> Option<Message> {
        let Payload::ContractRequest {
            provider,
            consumer,
            deadline,
        } = &msg.payload
        else {
            return None;
        };
        if msg.performative != Performative::Request {
            return None;
        }
        let cancel = || msg.reply(&self.id, Performative::Cancel, Payload::Empty).ok();

        let contract = match world.deploy_escrow(&self.id, self.wallet) {
            Ok(address) => address,
            Err(e) => {
                world.note(&self.id, format!("deploy failed: {e}"));
                return cancel();
            }
        };
        self.deployed.push(contract);
        let deadline_block = world.ledger.current_block().saturating_add(*deadline);
        if let Err(e) = world.escrow_initialize(
            &self.id,
            self.wallet,
            contract,
            *provider,
            *consumer,
            self.contract_fee_percent,
            deadline_block,
        ) {
            world.note(&self.id, format!("initialize of {contract} failed: {e}"));
            return cancel();
        }
        msg.reply(&self.id, Performative::Confirm, Payload::ContractAddress { contract })
            .ok()
    }

    pub fn step(&mut self, world: &mut World) -> Activity {
        match world.platform.receive(&self.id, None, None) {
            Ok(Some(msg)) => {
                match self.serve(world, &msg) {
                    Some(reply) => world.send_or_note(&self.id, reply),
                    None => world.platform.record_dropped(&self.id, &msg),
                }
                Activity::Worked
            }
            _ => Activity::Idle,
        }
    }
}

// ----------------------------------------------------------------- provider

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lease {
    pub consumer: AgentId,
    pub resource: ResourceSpec,
    pub contract: AccountId,
}

#[derive(Debug, Clone)]
pub struct ProviderAgent {
    pub id: AgentId,
    pub wallet: AccountId,
    pub catalogue: Catalogue,
    /// Resources currently leased, by consumer.
    pub leases: Vec<Lease>,
    /// Contracts of ACCEPT_PROPOSALs answered with FAILURE, by conversation,
    /// kept so a later CANCEL can release the consumer's deposit.
    pub failed: BTreeMap<String, AccountId>,
}

impl ProviderAgent {
    pub fn new(id: AgentId, wallet: AccountId, catalogue: Catalogue) -> Self {
        ProviderAgent {
            id,
            wallet,
            catalogue,
            leases: Vec::new(),
            failed: BTreeMap::new(),
        }
    }

    /// Resources the consumer currently holds from this provider.
    pub fn leased_to<'a>(&'a self, consumer: &'a AgentId) -> impl Iterator<Item = &'a ResourceSpec> + 'a {
        self.leases
            .iter()
            .filter(move |l| &l.consumer == consumer)
            .map(|l| &l.resource)
    }

    /// CFP → PROPOSE(best match) or REFUSE("not-available"). Other
    /// performatives are ignored.
    pub fn handle_request(&self, msg: &Message) -> Option<Message> {
        if msg.performative != Performative::Cfp {
            return None;
        }
        let Payload::Resource { resource: request } = &msg.payload else {
            return None;
        };
        let reply = match best_match(request, &self.catalogue) {
            Some(m) => msg.reply(
                &self.id,
                Performative::Propose,
                Payload::Proposal {
                    score: m.score,
                    resource: m.resource.clone(),
                },
            ),
            None => msg.reply(&self.id, Performative::Refuse, Payload::reason(NOT_AVAILABLE)),
        };
        reply.ok()
    }

    /// ACCEPT_PROPOSAL → INFORM after popping the resource, checking the
    /// contract holds `lease_time × price` for this provider and approving
    /// the escrow; FAILURE otherwise, with the resource back in the pool.
    pub fn lease(&mut self, world: &mut World, msg: &Message) -> Option<Message> {
        if msg.performative != Performative::AcceptProposal {
            return None;
        }
        let Payload::Accept {
            resource,
            contract,
            lease_time,
        } = &msg.payload
        else {
            return None;
        };
        let failure = |this: &mut Self, world: &mut World, reason: &str| {
            this.failed.insert(msg.conversation_id.clone(), *contract);
            world.note(&this.id, format!("lease of {} failed: {reason}", resource.title));
            msg.reply(&this.id, Performative::Failure, Payload::reason(reason)).ok()
        };

        let Some(popped) = self.catalogue.remove(&resource.title) else {
            return failure(self, world, NOT_AVAILABLE);
        };
        if let Err(reason) = self.check_funding(world, contract, &popped, *lease_time) {
            self.catalogue.put(popped);
            return failure(self, world, reason);
        }
        if let Err(e) = world.escrow_approve(&self.id, self.wallet, *contract) {
            self.catalogue.put(popped);
            let reason = format!("approve reverted: {e}");
            return failure(self, world, &reason);
        }
        self.leases.push(Lease {
            consumer: msg.sender.clone(),
            resource: popped,
            contract: *contract,
        });
        msg.reply(
            &self.id,
            Performative::Inform,
            Payload::InterfaceDetails {
                details: INTERFACE_DETAILS.into(),
            },
        )
        .ok()
    }

    fn check_funding(
        &self,
        world: &World,
        contract: &AccountId,
        resource: &ResourceSpec,
        lease_time: u64,
    ) -> Result<(), &'static str> {
        let escrow = world.ledger.contract(contract).ok_or("unknown-contract")?;
        if escrow.provider != Some(self.wallet) {
            return Err("wrong-provider");
        }
        if escrow.status != EscrowState::ConsumerDeposited {
            return Err("not-deposited");
        }
        let needed = resource.price.checked_mul(lease_time).map_err(|_| "underfunded")?;
        let held = world.ledger.balance_of(contract).map_err(|_| "unknown-contract")?;
        if held < needed {
            return Err("underfunded");
        }
        Ok(())
    }

    /// DISCONFIRM → resource back in the pool and DISCONFIRM reply, or
    /// FAILURE("not-available") for a resource this consumer never leased.
    pub fn release(&mut self, msg: &Message) -> Option<Message> {
        if msg.performative != Performative::Disconfirm {
            return None;
        }
        let Payload::Resource { resource } = &msg.payload else {
            return None;
        };
        let pos = self
            .leases
            .iter()
            .position(|l| l.consumer == msg.sender && l.resource.title == resource.title);
        let reply = match pos {
            Some(i) => {
                let lease = self.leases.remove(i);
                let released = lease.resource.clone();
                self.catalogue.put(lease.resource);
                msg.reply(
                    &self.id,
                    Performative::Disconfirm,
                    Payload::Resource { resource: released },
                )
            }
            None => msg.reply(&self.id, Performative::Failure, Payload::reason(NOT_AVAILABLE)),
        };
        reply.ok()
    }

    /// CANCEL after a failed lease: cancel the recorded contract and
    /// acknowledge with CANCEL.
    pub fn cancel_failed(&mut self, world: &mut World, msg: &Message) -> Option<Message> {
        if msg.performative != Performative::Cancel {
            return None;
        }
        match self.failed.remove(&msg.conversation_id) {
            Some(contract) => {
                if let Err(e) = world.escrow_cancel(&self.id, self.wallet, contract) {
                    world.note(&self.id, format!("cancel of {contract} failed: {e}"));
                }
            }
            None => world.note(
                &self.id,
                format!("CANCEL for unknown conversation {}", msg.conversation_id),
            ),
        }
        msg.reply(&self.id, Performative::Cancel, Payload::Empty).ok()
    }

    pub fn step(&mut self, world: &mut World) -> Activity {
        let msg = match world.platform.receive(&self.id, None, None) {
            Ok(Some(msg)) => msg,
            _ => return Activity::Idle,
        };
        let reply = match msg.performative {
            Performative::Cfp => self.handle_request(&msg),
            Performative::AcceptProposal => self.lease(world, &msg),
            Performative::Disconfirm => self.release(&msg),
            Performative::Cancel => self.cancel_failed(world, &msg),
            _ => None,
        };
        match reply {
            Some(reply) => world.send_or_note(&self.id, reply),
            None => world.platform.record_dropped(&self.id, &msg),
        }
        Activity::Worked
    }
}

// ----------------------------------------------------------------- consumer

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerConfig {
    /// Lease length in epochs (hours).
    pub lease_time: u64,
    /// Blocks between contract initialization and the escrow deadline.
    pub deadline_offset: u64,
    /// Ticks to wait for CFP replies; `None` waits for every provider.
    pub reply_timeout: Option<u64>,
}

impl Default for ConsumerConfig {
    fn default() -> Self {
        ConsumerConfig {
            lease_time: 1,
            deadline_offset: 100,
            reply_timeout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLease {
    pub provider: AgentId,
    pub resource: ResourceSpec,
    pub expires_at_epoch: u64,
}

/// A full request → release cycle. `choice` forces the winner and the
/// resource to accept instead of the best proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeJob {
    pub target: ResourceSpec,
    pub choice: Option<(AgentId, ResourceSpec)>,
}

#[derive(Debug, Clone)]
pub enum Task {
    Request {
        target: ResourceSpec,
    },
    Contract {
        best: ResourceSpec,
        provider: AgentId,
        deadline: u64,
        lease_time: u64,
    },
    Acquire {
        best: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        lease_time: u64,
    },
    Release {
        resource: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
    },
    Trade(TradeJob),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeStatus {
    Completed,
    NoOffer,
    InsufficientFunds,
    ContractRefused,
    LeaseFailed,
    ReleaseFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub conversation_id: String,
    pub target: ResourceSpec,
    pub replies: Vec<ProviderReply<AgentId>>,
    /// Winner and offered title under the scoring rule alone.
    pub algorithmic: Option<(AgentId, String)>,
    pub winner: Option<AgentId>,
    pub resource: Option<ResourceSpec>,
    pub contract: Option<AccountId>,
    pub amount: MoneyAmount,
    pub status: TradeStatus,
    pub started_epoch: u64,
    pub finished_epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutcome {
    pub approve: Result<TransactionReceipt, String>,
    /// DISCONFIRM when the provider took the resource back, FAILURE otherwise.
    pub provider_reply: Performative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Request(Option<(ResourceSpec, AgentId)>),
    Contract(Option<(TransactionReceipt, AccountId)>),
    Acquire(Option<String>),
    Release(ReleaseOutcome),
    Trade(TradeRecord),
}

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    Proposals {
        conv: String,
        expected: Vec<AgentId>,
        replies: Vec<ProviderReply<AgentId>>,
        deadline: Option<u64>,
        trade: Option<TradeCtx>,
    },
    Contract {
        conv: String,
        registrar: AgentId,
        best: ResourceSpec,
        provider: AgentId,
        deposit: MoneyAmount,
        lease_time: u64,
        trade: Option<TradeCtx>,
    },
    Lease {
        conv: String,
        best: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        trade: Option<TradeCtx>,
    },
    CancelAck {
        conv: String,
        provider: AgentId,
        contract: AccountId,
        trade: Option<TradeCtx>,
    },
    /// Waiting for the lease timer before approving.
    Hold {
        conv: String,
        resource: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        trade: Option<TradeCtx>,
    },
    ReleaseAck {
        conv: String,
        provider: AgentId,
        contract: AccountId,
        approve: Result<TransactionReceipt, String>,
        trade: Option<TradeCtx>,
    },
}

#[derive(Debug, Clone)]
struct TradeCtx {
    record: TradeRecord,
    choice: Option<(AgentId, ResourceSpec)>,
}

#[derive(Debug, Clone)]
pub struct ConsumerAgent {
    pub id: AgentId,
    pub wallet: AccountId,
    pub config: ConsumerConfig,
    pub active_leases: BTreeMap<AccountId, ActiveLease>,
    tasks: VecDeque<Task>,
    outcomes: VecDeque<Outcome>,
    phase: Phase,
    conversations: u64,
}

impl ConsumerAgent {
    pub fn new(id: AgentId, wallet: AccountId, config: ConsumerConfig) -> Self {
        ConsumerAgent {
            id,
            wallet,
            config,
            active_leases: BTreeMap::new(),
            tasks: VecDeque::new(),
            outcomes: VecDeque::new(),
            phase: Phase::Idle,
            conversations: 0,
        }
    }

    pub fn push_task(&mut self, task: Task) {
        self.tasks.push_back(task);
    }

    pub fn take_outcome(&mut self) -> Option<Outcome> {
        self.outcomes.pop_front()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &Outcome> {
        self.outcomes.iter()
    }

    /// True while a task is queued or in progress.
    pub fn is_busy(&self) -> bool {
        !matches!(self.phase, Phase::Idle) || !self.tasks.is_empty()
    }

    fn new_conversation(&mut self) -> String {
        self.conversations += 1;
        format!("{}#{}", self.id, self.conversations)
    }

    fn finish(&mut self, outcome: Outcome) -> Phase {
        self.outcomes.push_back(outcome);
        Phase::Idle
    }

    fn finish_trade(&mut self, world: &World, mut ctx: TradeCtx, status: TradeStatus) -> Phase {
        ctx.record.status = status;
        ctx.record.finished_epoch = world.epoch();
        self.finish(Outcome::Trade(ctx.record))
    }

    pub fn step(&mut self, world: &mut World) -> Activity {
        let phase = core::mem::replace(&mut self.phase, Phase::Idle);
        let (next, activity) = self.advance(world, phase);
        self.phase = next;
        activity
    }

    fn advance(&mut self, world: &mut World, phase: Phase) -> (Phase, Activity) {
        match phase {
            Phase::Idle => match self.tasks.pop_front() {
                Some(task) => (self.start(world, task), Activity::Worked),
                None if self.drop_stray(world) => (Phase::Idle, Activity::Worked),
                None => (Phase::Idle, Activity::Idle),
            },
            Phase::Proposals {
                conv,
                expected,
                mut replies,
                deadline,
                trade,
            } => match world.platform.receive(&self.id, None, deadline) {
                Ok(Some(msg)) => {
                    let from_expected =
                        expected.contains(&msg.sender) && !replies.iter().any(|r| r.provider == msg.sender);
                    let offer = match (&msg.payload, msg.performative) {
                        (Payload::Proposal { score, resource }, Performative::Propose) => Some(Some(Offer {
                            score: *score,
                            resource: resource.clone(),
                        })),
                        (_, Performative::Refuse) => Some(None),
                        _ => None,
                    };
                    match offer {
                        Some(offer) if msg.conversation_id == conv && from_expected => {
                            replies.push(ProviderReply {
                                provider: msg.sender.clone(),
                                offer,
                            });
                        }
                        _ => world.platform.record_dropped(&self.id, &msg),
                    }
                    let next = if replies.len() == expected.len() {
                        self.proposals_done(world, conv, replies, trade)
                    } else {
                        Phase::Proposals {
                            conv,
                            expected,
                            replies,
                            deadline,
                            trade,
                        }
                    };
                    (next, Activity::Worked)
                }
                Ok(None) => (
                    Phase::Proposals {
                        conv,
                        expected,
                        replies,
                        deadline,
                        trade,
                    },
                    Activity::Blocked {
                        tick: deadline,
                        epoch: None,
                    },
                ),
                Err(_) => {
                    // missing replies count as refusals
                    for p in &expected {
                        if !replies.iter().any(|r| &r.provider == p) {
                            world.note(&self.id, format!("no reply from {p} before timeout"));
                            replies.push(ProviderReply {
                                provider: p.clone(),
                                offer: None,
                            });
                        }
                    }
                    (self.proposals_done(world, conv, replies, trade), Activity::Worked)
                }
            },
            Phase::Contract {
                conv,
                registrar,
                best,
                provider,
                deposit,
                lease_time,
                trade,
            } => {
                let Some(msg) =
                    self.receive_from(world, &conv, &registrar, &[Performative::Confirm, Performative::Cancel])
                else {
                    return (
                        Phase::Contract {
                            conv,
                            registrar,
                            best,
                            provider,
                            deposit,
                            lease_time,
                            trade,
                        },
                        Activity::WAITING,
                    );
                };
                let next = match (msg.performative, &msg.payload) {
                    (Performative::Confirm, Payload::ContractAddress { contract }) => {
                        let contract = *contract;
                        match world.escrow_deposit(&self.id, self.wallet, contract, deposit) {
                            Ok(receipt) => match trade {
                                Some(mut ctx) => {
                                    ctx.record.contract = Some(contract);
                                    self.send_accept(world, conv, best, provider, contract, lease_time, Some(ctx))
                                }
                                None => self.finish(Outcome::Contract(Some((receipt, contract)))),
                            },
                            Err(e) => {
                                world.note(&self.id, format!("deposit into {contract} failed: {e}"));
                                match trade {
                                    Some(mut ctx) => {
                                        ctx.record.contract = Some(contract);
                                        self.finish_trade(world, ctx, TradeStatus::ContractRefused)
                                    }
                                    None => self.finish(Outcome::Contract(None)),
                                }
                            }
                        }
                    }
                    _ => match trade {
                        Some(ctx) => self.finish_trade(world, ctx, TradeStatus::ContractRefused),
                        None => self.finish(Outcome::Contract(None)),
                    },
                };
                (next, Activity::Worked)
            }
            Phase::Lease {
                conv,
                best,
                provider,
                contract,
                trade,
            } => {
                let Some(msg) =
                    self.receive_from(world, &conv, &provider, &[Performative::Inform, Performative::Failure])
                else {
                    return (
                        Phase::Lease {
                            conv,
                            best,
                            provider,
                            contract,
                            trade,
                        },
                        Activity::WAITING,
                    );
                };
                let next = if let Payload::InterfaceDetails { details } = &msg.payload {
                    let lease_time = self.config.lease_time;
                    let expires_at_epoch = world.epoch() + lease_time;
                    self.active_leases.insert(
                        contract,
                        ActiveLease {
                            provider: provider.clone(),
                            resource: best.clone(),
                            expires_at_epoch,
                        },
                    );
                    match trade {
                        Some(ctx) => Phase::Hold {
                            conv,
                            resource: best,
                            provider,
                            contract,
                            trade: Some(ctx),
                        },
                        None => self.finish(Outcome::Acquire(Some(details.clone()))),
                    }
                } else {
                    // FAILURE: recover the deposit through a dual cancel
                    if let Err(e) = world.escrow_cancel(&self.id, self.wallet, contract) {
                        world.note(&self.id, format!("cancel of {contract} failed: {e}"));
                    }
                    let cancel = Message::new(
                        self.id.clone(),
                        alloc::vec![provider.clone()],
                        Performative::Cancel,
                        Payload::Empty,
                        conv.clone(),
                    )
                    .expect("CANCEL carries an empty payload");
                    world.send_or_note(&self.id, cancel);
                    Phase::CancelAck {
                        conv,
                        provider,
                        contract,
                        trade,
                    }
                };
                (next, Activity::Worked)
            }
            Phase::CancelAck {
                conv,
                provider,
                contract,
                trade,
            } => {
                if self
                    .receive_from(world, &conv, &provider, &[Performative::Cancel])
                    .is_none()
                {
                    return (
                        Phase::CancelAck {
                            conv,
                            provider,
                            contract,
                            trade,
                        },
                        Activity::WAITING,
                    );
                }
                let next = match trade {
                    Some(ctx) => self.finish_trade(world, ctx, TradeStatus::LeaseFailed),
                    None => self.finish(Outcome::Acquire(None)),
                };
                (next, Activity::Worked)
            }
            Phase::Hold {
                conv,
                resource,
                provider,
                contract,
                trade,
            } => {
                let expiry = self.active_leases.get(&contract).map(|l| l.expires_at_epoch);
                let drained = self.drop_stray(world);
                match expiry {
                    Some(e) if drained && world.epoch() < e => (
                        Phase::Hold {
                            conv,
                            resource,
                            provider,
                            contract,
                            trade,
                        },
                        Activity::Worked,
                    ),
                    Some(e) if world.epoch() < e => (
                        Phase::Hold {
                            conv,
                            resource,
                            provider,
                            contract,
                            trade,
                        },
                        Activity::Blocked {
                            tick: None,
                            epoch: Some(e),
                        },
                    ),
                    _ => (
                        self.release_now(world, conv, resource, provider, contract, trade),
                        Activity::Worked,
                    ),
                }
            }
            Phase::ReleaseAck {
                conv,
                provider,
                contract,
                approve,
                trade,
            } => {
                let Some(msg) = self.receive_from(
                    world,
                    &conv,
                    &provider,
                    &[Performative::Disconfirm, Performative::Failure],
                ) else {
                    return (
                        Phase::ReleaseAck {
                            conv,
                            provider,
                            contract,
                            approve,
                            trade,
                        },
                        Activity::WAITING,
                    );
                };
                self.active_leases.remove(&contract);
                let next = match trade {
                    Some(ctx) => {
                        let complete = approve.is_ok()
                            && msg.performative == Performative::Disconfirm
                            && world
                                .ledger
                                .contract(&contract)
                                .is_some_and(|c| c.status == EscrowState::EscrowComplete);
                        let status = if complete {
                            TradeStatus::Completed
                        } else {
                            TradeStatus::ReleaseFailed
                        };
                        self.finish_trade(world, ctx, status)
                    }
                    None => self.finish(Outcome::Release(ReleaseOutcome {
                        approve,
                        provider_reply: msg.performative,
                    })),
                };
                (next, Activity::Worked)
            }
        }
    }

    /// Discards one message nobody is waiting for.
    fn drop_stray(&self, world: &mut World) -> bool {
        match world.platform.receive(&self.id, None, None) {
            Ok(Some(msg)) => {
                world.note(
                    &self.id,
                    format!(
                        "dropped {} from {} ({})",
                        msg.performative, msg.sender, msg.conversation_id
                    ),
                );
                world.platform.record_dropped(&self.id, &msg);
                true
            }
            _ => false,
        }
    }

    /// Next message in `conv` from `from` with one of `accept`; anything
    /// else at the head of the mailbox is dropped and logged.
    fn receive_from(&self, world: &mut World, conv: &str, from: &AgentId, accept: &[Performative]) -> Option<Message> {
        loop {
            let msg = world.platform.receive(&self.id, None, None).ok()??;
            if msg.conversation_id == conv && &msg.sender == from && accept.contains(&msg.performative) {
                return Some(msg);
            }
            world.note(
                &self.id,
                format!(
                    "dropped {} from {} ({})",
                    msg.performative, msg.sender, msg.conversation_id
                ),
            );
            world.platform.record_dropped(&self.id, &msg);
        }
    }

    fn start(&mut self, world: &mut World, task: Task) -> Phase {
        match task {
            Task::Request { target } => self.broadcast_cfp(world, target, None),
            Task::Trade(job) => {
                let ctx = TradeCtx {
                    record: TradeRecord {
                        conversation_id: String::new(),
                        target: job.target.clone(),
                        replies: Vec::new(),
                        algorithmic: None,
                        winner: None,
                        resource: None,
                        contract: None,
                        amount: MoneyAmount::ZERO,
                        status: TradeStatus::NoOffer,
                        started_epoch: world.epoch(),
                        finished_epoch: world.epoch(),
                    },
                    choice: job.choice,
                };
                self.broadcast_cfp(world, job.target, Some(ctx))
            }
            Task::Contract {
                best,
                provider,
                deadline,
                lease_time,
            } => {
                let conv = self.new_conversation();
                self.request_contract(world, conv, best, provider, deadline, lease_time, None)
            }
            Task::Acquire {
                best,
                provider,
                contract,
                lease_time,
            } => {
                let conv = self.new_conversation();
                self.send_accept(world, conv, best, provider, contract, lease_time, None)
            }
            Task::Release {
                resource,
                provider,
                contract,
            } => {
                let conv = self.new_conversation();
                Phase::Hold {
                    conv,
                    resource,
                    provider,
                    contract,
                    trade: None,
                }
            }
        }
    }

    fn broadcast_cfp(&mut self, world: &mut World, target: ResourceSpec, trade: Option<TradeCtx>) -> Phase {
        let conv = self.new_conversation();
        let providers = world.platform.df_find_all(PROVIDER_SERVICE);
        if providers.is_empty() {
            return self.proposals_done(world, conv, Vec::new(), trade);
        }
        let cfp = Message::new(
            self.id.clone(),
            providers.clone(),
            Performative::Cfp,
            Payload::Resource { resource: target },
            conv.clone(),
        )
        .expect("CFP carries a resource");
        if let Err(e) = world.send(cfp) {
            world.note(&self.id, format!("CFP not sent: {e}"));
            return self.proposals_done(world, conv, Vec::new(), trade);
        }
        let deadline = self.config.reply_timeout.map(|t| world.platform.now() + t);
        Phase::Proposals {
            conv,
            expected: providers,
            replies: Vec::new(),
            deadline,
            trade,
        }
    }

    fn proposals_done(
        &mut self,
        world: &mut World,
        conv: String,
        replies: Vec<ProviderReply<AgentId>>,
        trade: Option<TradeCtx>,
    ) -> Phase {
        let best = select_best_proposal(&replies).map(|(p, r)| (r.clone(), p.clone()));
        let Some(mut ctx) = trade else {
            return self.finish(Outcome::Request(best));
        };
        ctx.record.conversation_id = conv.clone();
        ctx.record.replies = replies;
        ctx.record.algorithmic = best.as_ref().map(|(r, p)| (p.clone(), r.title.clone()));
        let chosen = ctx.choice.clone().or(best.map(|(r, p)| (p, r)));
        let Some((provider, resource)) = chosen else {
            return self.finish_trade(world, ctx, TradeStatus::NoOffer);
        };
        ctx.record.winner = Some(provider.clone());
        ctx.record.resource = Some(resource.clone());
        let (deadline, lease_time) = (self.config.deadline_offset, self.config.lease_time);
        self.request_contract(world, conv, resource, provider, deadline, lease_time, Some(ctx))
    }

    #[allow(clippy::too_many_arguments)]
    fn request_contract(
        &mut self,
        world: &mut World,
        conv: String,
        best: ResourceSpec,
        provider: AgentId,
        deadline: u64,
        lease_time: u64,
        trade: Option<TradeCtx>,
    ) -> Phase {
        let refuse = |this: &mut Self, world: &World, trade: Option<TradeCtx>, status| match trade {
            Some(ctx) => this.finish_trade(world, ctx, status),
            None => this.finish(Outcome::Contract(None)),
        };
        let Ok(deposit) = best.price.checked_mul(lease_time) else {
            return refuse(self, world, trade, TradeStatus::InsufficientFunds);
        };
        let balance = world.ledger.balance_of(&self.wallet).unwrap_or(MoneyAmount::ZERO);
        if balance < deposit {
            world.note(
                &self.id,
                format!("cannot afford {} for {}", deposit.trimmed(), best.title),
            );
            return refuse(self, world, trade, TradeStatus::InsufficientFunds);
        }
        let registrar = world.platform.df_find_all(REGISTRAR_SERVICE).into_iter().next();
        let provider_wallet = world.platform.wallet_of(&provider);
        let (Some(registrar), Some(provider_wallet)) = (registrar, provider_wallet) else {
            world.note(&self.id, "no registrar or provider wallet".into());
            return refuse(self, world, trade, TradeStatus::ContractRefused);
        };
        let trade = trade.map(|mut ctx| {
            ctx.record.amount = deposit;
            ctx
        });
        let request = Message::new(
            self.id.clone(),
            alloc::vec![registrar.clone()],
            Performative::Request,
            Payload::ContractRequest {
                provider: provider_wallet,
                consumer: self.wallet,
                deadline,
            },
            conv.clone(),
        )
        .expect("REQUEST carries the contract tuple");
        if let Err(e) = world.send(request) {
            world.note(&self.id, format!("REQUEST not sent: {e}"));
            return refuse(self, world, trade, TradeStatus::ContractRefused);
        }
        Phase::Contract {
            conv,
            registrar,
            best,
            provider,
            deposit,
            lease_time,
            trade,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn send_accept(
        &mut self,
        world: &mut World,
        conv: String,
        best: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        lease_time: u64,
        trade: Option<TradeCtx>,
    ) -> Phase {
        let accept = Message::new(
            self.id.clone(),
            alloc::vec![provider.clone()],
            Performative::AcceptProposal,
            Payload::Accept {
                resource: best.clone(),
                contract,
                lease_time,
            },
            conv.clone(),
        )
        .expect("ACCEPT_PROPOSAL carries the lease tuple");
        if let Err(e) = world.send(accept) {
            world.note(&self.id, format!("ACCEPT_PROPOSAL not sent: {e}"));
        }
        Phase::Lease {
            conv,
            best,
            provider,
            contract,
            trade,
        }
    }

    fn release_now(
        &mut self,
        world: &mut World,
        conv: String,
        resource: ResourceSpec,
        provider: AgentId,
        contract: AccountId,
        trade: Option<TradeCtx>,
    ) -> Phase {
        let approve = world.escrow_approve(&self.id, self.wallet, contract).map_err(|e| {
            let text = format!("{e}");
            world.note(&self.id, format!("approve of {contract} failed: {text}"));
            text
        });
        let disconfirm = Message::new(
            self.id.clone(),
            alloc::vec![provider.clone()],
            Performative::Disconfirm,
            Payload::Resource { resource },
            conv.clone(),
        )
        .expect("DISCONFIRM carries a resource");
        world.send_or_note(&self.id, disconfirm);
        Phase::ReleaseAck {
            conv,
            provider,
            contract,
            approve,
            trade,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(title: &str, price: &str, v: [f64; 5]) -> ResourceSpec {
        ResourceSpec::new(title, price.parse().unwrap(), v[0], v[1], v[2], v[3], v[4]).unwrap()
    }

    fn small() -> ResourceSpec {
        spec("t3a.small", "0.0188", [13800.0, 0.044, 2.0, 59.0, 2.0])
    }

    fn large() -> ResourceSpec {
        spec("m5.large", "0.096", [78440.0, 0.04, 8.0, 96.0, 2.0])
    }

    fn provider(world: &mut World, cat: Vec<ResourceSpec>) -> ProviderAgent {
        let (id, wallet) = world.enrol("P", MoneyAmount::ZERO).unwrap();
        ProviderAgent::new(id, wallet, Catalogue::new(cat))
    }

    fn msg(p: Performative, payload: Payload) -> Message {
        Message::new(AgentId::new("C"), vec![AgentId::new("P")], p, payload, "C#1").unwrap()
    }

    #[test]
    fn cfp_gets_best_proposal_or_refusal() {
        let mut world = World::new();
        let p = provider(&mut world, vec![large(), small()]);
        let reply = p
            .handle_request(&msg(Performative::Cfp, Payload::Resource { resource: small() }))
            .unwrap();
        assert_eq!(reply.performative, Performative::Propose);
        assert_eq!(reply.receivers, vec![AgentId::new("C")]);
        assert_eq!(reply.conversation_id, "C#1");
        let Payload::Proposal { score, resource } = reply.payload else {
            panic!()
        };
        assert_eq!((score, resource.title.as_str()), (1.0, "t3a.small"));

        let empty = provider(&mut World::new(), vec![]);
        let reply = empty
            .handle_request(&msg(Performative::Cfp, Payload::Resource { resource: small() }))
            .unwrap();
        assert_eq!(reply.performative, Performative::Refuse);
        assert_eq!(reply.payload, Payload::reason(NOT_AVAILABLE));

        assert!(p
            .handle_request(&msg(
                Performative::Inform,
                Payload::InterfaceDetails { details: "x".into() }
            ))
            .is_none());
    }

    #[test]
    fn release_of_unknown_resource_fails() {
        let mut world = World::new();
        let mut p = provider(&mut world, vec![small()]);
        let reply = p
            .release(&msg(Performative::Disconfirm, Payload::Resource { resource: large() }))
            .unwrap();
        assert_eq!(reply.performative, Performative::Failure);
        assert_eq!(p.catalogue.len(), 1);
    }

    #[test]
    fn lease_against_missing_contract_fails_and_keeps_stock() {
        let mut world = World::new();
        let mut p = provider(&mut world, vec![small()]);
        let bogus = world.ledger.create_account(MoneyAmount::ZERO);
        let accept = msg(
            Performative::AcceptProposal,
            Payload::Accept {
                resource: small(),
                contract: bogus,
                lease_time: 1,
            },
        );
        let reply = p.lease(&mut world, &accept).unwrap();
        assert_eq!(reply.performative, Performative::Failure);
        assert_eq!(reply.payload, Payload::reason("unknown-contract"));
        assert_eq!(p.catalogue.titles(), vec!["t3a.small"]);
        assert_eq!(p.failed.get("C#1"), Some(&bogus));
    }

    #[test]
    fn registrar_ignores_other_performatives() {
        let mut world = World::new();
        let (id, wallet) = world.enrol("R", MoneyAmount::ZERO).unwrap();
        let mut r = RegistrarAgent::new(id, wallet, 2);
        assert!(r
            .serve(
                &mut world,
                &msg(Performative::Cfp, Payload::Resource { resource: small() })
            )
            .is_none());
        assert!(r.deployed.is_empty());
    }

    #[test]
    fn registrar_rejecting_itself_as_party_cancels() {
        let mut world = World::new();
        let (id, wallet) = world.enrol("R", MoneyAmount::ZERO).unwrap();
        let mut r = RegistrarAgent::new(id, wallet, 2);
        let req = msg(
            Performative::Request,
            Payload::ContractRequest {
                provider: wallet,
                consumer: wallet,
                deadline: 10,
            },
        );
        let reply = r.serve(&mut world, &req).unwrap();
        assert_eq!(reply.performative, Performative::Cancel);
        assert_eq!(world.incidents().len(), 1);
    }
}
