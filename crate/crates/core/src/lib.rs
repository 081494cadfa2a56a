//! Core of the SmartSON marketplace simulator.
//!
//! Everything here is `no_std` + `alloc`: a simulated single-chain ledger,
//! the escrow contract state machine it hosts, cosine-similarity resource
//! matching, a FIPA-style messaging platform, the registrar / consumer /
//! provider agents, a deterministic round-robin scheduler and the scenario
//! harness that drives epochs and assembles reports.
//!
//! IO (trace files, JSON reports, the CLI) lives in the `smartson` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod escrow;
pub mod harness;
pub mod ledger;
pub mod matching;
pub mod money;
pub mod platform;
pub mod sim;

pub use agents::{ConsumerAgent, ConsumerConfig, ProviderAgent, RegistrarAgent, TradeJob, TradeRecord, TradeStatus};
pub use escrow::{EscrowCall, EscrowContract, EscrowError, EscrowState, Event};
pub use harness::{balance_series, run_scenario, ConfigError, HarnessError, ScenarioConfig, SimulationReport};
pub use ledger::{AccountId, Call, Ledger, LedgerError, Transaction, TransactionReceipt, TxHash};
pub use matching::{Catalogue, MatchError, ResourceSpec};
pub use money::{MoneyAmount, MoneyError};
pub use platform::{AgentId, Message, Payload, Performative, Platform, PlatformError};
pub use sim::{JournalEntry, SimError, Simulation, World};
