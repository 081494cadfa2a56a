//! Headless scenario runner.
//!
//! Builds an authority, `num_providers` providers and `num_consumers`
//! consumers, seeds the catalogues from the trace, then runs one trade per
//! consumer per epoch. An epoch finishes only after every release has
//! returned its resource, so each epoch starts from restored catalogues.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ConsumerConfig, TradeJob, TradeRecord, TradeStatus};
use crate::escrow::EscrowState;
use crate::ledger::{AccountId, TransactionReceipt};
use crate::matching::{best_match, cosine_similarity, Catalogue, ResourceSpec};
use crate::money::MoneyAmount;
use crate::platform::{AgentId, LogEntry};
use crate::sim::{Incident, JournalEntry, SimError, Simulation};

pub const AUTHORITY_NAME: &str = "Authority";

pub fn provider_name(i: usize) -> String {
    format!("Provider {}", i + 1)
}

pub fn consumer_name(i: usize) -> String {
    format!("Consumer {}", i + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CatalogueMode {
    /// `size` distinct trace rows per provider, drawn without replacement
    /// and kept in trace order.
    Random { size: usize },
    /// One title list per provider.
    Explicit { catalogues: Vec<Vec<String>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RequestPlan {
    /// One title per epoch, requested by every consumer.
    Explicit { titles: Vec<String> },
    /// Each consumer draws a uniformly random trace row every epoch.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinnerMode {
    /// Winners come from proposal scores alone.
    #[default]
    Algorithmic,
    /// Epochs listed in `winner_overrides` use the listed winner.
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinnerOverride {
    pub epoch: u64,
    pub provider: String,
    pub offered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBalances {
    pub consumer: MoneyAmount,
    pub provider: MoneyAmount,
    #[serde(default)]
    pub authority: MoneyAmount,
}

fn one() -> usize {
    1
}

fn one_hour() -> u64 {
    1
}

fn default_deadline_offset() -> u64 {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_providers: usize,
    #[serde(default = "one")]
    pub num_consumers: usize,
    pub catalogue_mode: CatalogueMode,
    pub requests: RequestPlan,
    pub epochs: u64,
    pub fee_percent: u32,
    #[serde(default = "one_hour")]
    pub lease_time_hours: u64,
    /// Blocks between contract initialization and its deadline.
    #[serde(default = "default_deadline_offset")]
    pub deadline_offset: u64,
    pub initial_balances: InitialBalances,
    #[serde(default = "yes")]
    pub deterministic: bool,
    /// Ticks a consumer waits for CFP replies; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_timeout: Option<u64>,
    #[serde(default)]
    pub winner_mode: WinnerMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub winner_overrides: Vec<WinnerOverride>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("at least one provider and one consumer are required")]
    NoAgents,
    #[error("the trace is empty")]
    EmptyTrace,
    #[error("title {0:?} is not in the trace")]
    UnknownTitle(String),
    #[error("expected {expected} catalogues, found {found}")]
    CatalogueCount { expected: usize, found: usize },
    #[error("catalogue size {size} exceeds the {available} trace rows")]
    CatalogueTooLarge { size: usize, available: usize },
    #[error("expected {expected} request titles, found {found}")]
    RequestCount { expected: u64, found: usize },
    #[error("fee percent {0} is above 100")]
    InvalidFee(u32),
    #[error("lease time must be at least 1 hour")]
    ZeroLease,
    #[error("override names unknown provider {0:?}")]
    UnknownProvider(String),
    #[error("override for epoch {0} is outside the run")]
    OverrideEpoch(u64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol failure: {error}")]
    Protocol { error: SimError, log: Vec<LogEntry> },
}

impl ScenarioConfig {
    pub fn validate(&self, trace: &[ResourceSpec]) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(ConfigError::ZeroEpochs);
        }
        if self.num_providers == 0 || self.num_consumers == 0 {
            return Err(ConfigError::NoAgents);
        }
        if trace.is_empty() {
            return Err(ConfigError::EmptyTrace);
        }
        if self.fee_percent > 100 {
            return Err(ConfigError::InvalidFee(self.fee_percent));
        }
        if self.lease_time_hours == 0 {
            return Err(ConfigError::ZeroLease);
        }
        let known = |t: &String| {
            if trace.iter().any(|r| &r.title == t) {
                Ok(())
            } else {
                Err(ConfigError::UnknownTitle(t.clone()))
            }
        };
        match &self.catalogue_mode {
            CatalogueMode::Random { size } => {
                if *size > trace.len() {
                    return Err(ConfigError::CatalogueTooLarge {
                        size: *size,
                        available: trace.len(),
                    });
                }
            }
            CatalogueMode::Explicit { catalogues } => {
                if catalogues.len() != self.num_providers {
                    return Err(ConfigError::CatalogueCount {
                        expected: self.num_providers,
                        found: catalogues.len(),
                    });
                }
                catalogues.iter().flatten().try_for_each(known)?;
            }
        }
        if let RequestPlan::Explicit { titles } = &self.requests {
            if titles.len() as u64 != self.epochs {
                return Err(ConfigError::RequestCount {
                    expected: self.epochs,
                    found: titles.len(),
                });
            }
            titles.iter().try_for_each(known)?;
        }
        for o in &self.winner_overrides {
            if o.epoch == 0 || o.epoch > self.epochs {
                return Err(ConfigError::OverrideEpoch(o.epoch));
            }
            if !(0..self.num_providers).any(|i| provider_name(i) == o.provider) {
                return Err(ConfigError::UnknownProvider(o.provider.clone()));
            }
            known(&o.offered)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryScore {
    pub title: String,
    pub score: f64,
}

/// A provider's whole catalogue scored against one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub epoch: u64,
    pub consumer: String,
    pub requested: String,
    pub provider: String,
    pub entries: Vec<EntryScore>,
    /// The entry the provider proposes.
    pub best: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub consumer: String,
    pub requested: String,
    pub winner: String,
    pub offered: String,
    pub amount: MoneyAmount,
    pub contract_fee: MoneyAmount,
    pub provider_amount: MoneyAmount,
    pub contract_address: AccountId,
    pub contract_status: EscrowState,
    pub algorithmic_winner: Option<String>,
    pub algorithmic_offered: Option<String>,
    pub receipts: Vec<TransactionReceipt>,
}

/// A trade that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfilledEpoch {
    pub epoch: u64,
    pub consumer: String,
    pub requested: String,
    pub status: TradeStatus,
    pub winner: Option<String>,
    pub contract_address: Option<AccountId>,
}

/// An epoch where the shipped winner differs from the score-only winner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnerDelta {
    pub epoch: u64,
    pub consumer: String,
    pub winner: String,
    pub offered: String,
    pub algorithmic_winner: Option<String>,
    pub algorithmic_offered: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSummary {
    pub owner: String,
    pub role: String,
    pub account: AccountId,
    pub initial: MoneyAmount,
    #[serde(rename = "final")]
    pub final_balance: MoneyAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub name: String,
    pub initial_catalogue: Vec<String>,
    pub final_catalogue: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub amount: MoneyAmount,
    pub contract_fee: MoneyAmount,
    pub provider_amount: MoneyAmount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: ScenarioConfig,
    pub providers: Vec<ProviderSummary>,
    pub records: Vec<EpochRecord>,
    pub unfilled: Vec<UnfilledEpoch>,
    pub scores: Vec<ScoreRow>,
    pub accounts: Vec<AccountSummary>,
    pub totals: Totals,
    pub winner_delta: Vec<WinnerDelta>,
    pub incidents: Vec<Incident>,
    pub final_block: u64,
    pub messages: usize,
}

impl SimulationReport {
    pub fn account(&self, owner: &str) -> Option<&AccountSummary> {
        self.accounts.iter().find(|a| a.owner == owner)
    }
}

/// Everything the run leaves behind besides the report, for artifact
/// writers and post-run checks.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: SimulationReport,
    pub simulation: Simulation,
}

/// Builds the agents for `cfg` without running any epoch.
pub fn build_simulation(cfg: &ScenarioConfig, trace: &[ResourceSpec]) -> Result<(Simulation, ChaCha8Rng), ConfigError> {
    cfg.validate(trace)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Simulation::new();
    const UNIQUE: &str = "generated agent names are unique";
    sim.add_registrar(AUTHORITY_NAME, cfg.initial_balances.authority, cfg.fee_percent)
        .expect(UNIQUE);
    for i in 0..cfg.num_providers {
        let rows: Vec<ResourceSpec> = match &cfg.catalogue_mode {
            CatalogueMode::Random { size } => {
                let mut picks = rand::seq::index::sample(&mut rng, trace.len(), *size).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|k| trace[k].clone()).collect()
            }
            CatalogueMode::Explicit { catalogues } => catalogues[i].iter().map(|t| lookup(trace, t).clone()).collect(),
        };
        sim.add_provider(&provider_name(i), cfg.initial_balances.provider, Catalogue::new(rows))
            .expect(UNIQUE);
    }
    let consumer_cfg = ConsumerConfig {
        lease_time: cfg.lease_time_hours,
        deadline_offset: cfg.deadline_offset,
        reply_timeout: cfg.reply_timeout,
    };
    for i in 0..cfg.num_consumers {
        sim.add_consumer(&consumer_name(i), cfg.initial_balances.consumer, consumer_cfg.clone())
            .expect(UNIQUE);
    }
    Ok((sim, rng))
}

fn lookup<'a>(trace: &'a [ResourceSpec], title: &str) -> &'a ResourceSpec {
    trace
        .iter()
        .find(|r| r.title == title)
        .expect("titles are validated against the trace")
}

/// Runs the scenario on the deterministic scheduler.
pub fn run_scenario(cfg: &ScenarioConfig, trace: &[ResourceSpec]) -> Result<SimulationReport, HarnessError> {
    run_scenario_with(cfg, trace, |sim| sim.run_until_idle()).map(|run| run.report)
}

/// Runs the scenario, letting `drive` bring the simulation to quiescence
/// after each epoch's trades are queued.
pub fn run_scenario_with<F>(
    cfg: &ScenarioConfig,
    trace: &[ResourceSpec],
    mut drive: F,
) -> Result<ScenarioRun, HarnessError>
where
    F: FnMut(&mut Simulation) -> Result<(), SimError>,
{
    let (mut sim, mut rng) = build_simulation(cfg, trace)?;
    let providers: Vec<AgentId> = (0..cfg.num_providers).map(|i| AgentId::new(provider_name(i))).collect();
    let consumers: Vec<AgentId> = (0..cfg.num_consumers).map(|i| AgentId::new(consumer_name(i))).collect();
    let initial_catalogues: Vec<Vec<String>> = providers
        .iter()
        .map(|p| titles_of(&sim.provider(p).expect("provider").catalogue))
        .collect();
    let initial: Vec<(AccountId, MoneyAmount)> = sim.world.ledger.accounts().map(|(a, b)| (*a, *b)).collect();

    let mut records = Vec::new();
    let mut unfilled = Vec::new();
    let mut scores = Vec::new();

    for epoch in 1..=cfg.epochs {
        let journal_start = sim.world.journal().len();
        for consumer in &consumers {
            let target = match &cfg.requests {
                RequestPlan::Explicit { titles } => lookup(trace, &titles[(epoch - 1) as usize]).clone(),
                RequestPlan::Random => trace[rng.random_range(0..trace.len())].clone(),
            };
            for p in &providers {
                scores.push(score_row(
                    epoch,
                    consumer,
                    &target,
                    p,
                    &sim.provider(p).expect("provider").catalogue,
                ));
            }
            let choice = match cfg.winner_mode {
                WinnerMode::Algorithmic => None,
                WinnerMode::Override => cfg
                    .winner_overrides
                    .iter()
                    .find(|o| o.epoch == epoch)
                    .map(|o| (AgentId::new(o.provider.clone()), lookup(trace, &o.offered).clone())),
            };
            sim.consumer_mut(consumer)
                .expect("consumer")
                .push_task(crate::agents::Task::Trade(TradeJob { target, choice }));
        }

        if let Err(error) = drive(&mut sim) {
            let log = sim.world.platform.log().to_vec();
            return Err(HarnessError::Protocol { error, log });
        }
        sim.world.advance_epoch_to(epoch);

        for consumer in &consumers {
            let Some(crate::agents::Outcome::Trade(trade)) = sim.consumer_mut(consumer).and_then(|c| c.take_outcome())
            else {
                let log = sim.world.platform.log().to_vec();
                return Err(HarnessError::Protocol {
                    error: SimError::UnexpectedOutcome,
                    log,
                });
            };
            match epoch_record(&sim, epoch, consumer, &trade, journal_start) {
                Some(r) => records.push(r),
                None => unfilled.push(UnfilledEpoch {
                    epoch,
                    consumer: consumer.to_string(),
                    requested: trade.target.title.clone(),
                    status: trade.status,
                    winner: trade.winner.as_ref().map(|w| w.to_string()),
                    contract_address: trade.contract,
                }),
            }
        }
    }

    let report = assemble(
        cfg,
        &sim,
        &providers,
        initial_catalogues,
        &initial,
        records,
        unfilled,
        scores,
    );
    Ok(ScenarioRun {
        report,
        simulation: sim,
    })
}

fn titles_of(c: &Catalogue) -> Vec<String> {
    c.titles().into_iter().map(String::from).collect()
}

fn score_row(
    epoch: u64,
    consumer: &AgentId,
    target: &ResourceSpec,
    provider: &AgentId,
    catalogue: &Catalogue,
) -> ScoreRow {
    let entries = catalogue
        .iter()
        .filter_map(|r| {
            cosine_similarity(target, r).ok().map(|score| EntryScore {
                title: r.title.clone(),
                score,
            })
        })
        .collect();
    ScoreRow {
        epoch,
        consumer: consumer.to_string(),
        requested: target.title.clone(),
        provider: provider.to_string(),
        entries,
        best: best_match(target, catalogue).map(|m| m.resource.title.clone()),
    }
}

fn epoch_record(
    sim: &Simulation,
    epoch: u64,
    consumer: &AgentId,
    trade: &TradeRecord,
    journal_start: usize,
) -> Option<EpochRecord> {
    if trade.status != TradeStatus::Completed {
        return None;
    }
    let contract = trade.contract?;
    let escrow = sim.world.ledger.contract(&contract)?;
    let resource = trade.resource.as_ref()?;
    let receipts = sim.world.journal()[journal_start..]
        .iter()
        .filter_map(|e| match e {
            JournalEntry::Transaction { receipt, .. }
                if receipt.to == Some(contract) || receipt.created == Some(contract) =>
            {
                Some(receipt.clone())
            }
            _ => None,
        })
        .collect();
    Some(EpochRecord {
        epoch,
        consumer: consumer.to_string(),
        requested: trade.target.title.clone(),
        winner: trade.winner.as_ref()?.to_string(),
        offered: resource.title.clone(),
        amount: trade.amount,
        contract_fee: escrow.fee_amount,
        provider_amount: escrow.provider_amount,
        contract_address: contract,
        contract_status: escrow.status,
        algorithmic_winner: trade.algorithmic.as_ref().map(|(p, _)| p.to_string()),
        algorithmic_offered: trade.algorithmic.as_ref().map(|(_, t)| t.clone()),
        receipts,
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &ScenarioConfig,
    sim: &Simulation,
    providers: &[AgentId],
    initial_catalogues: Vec<Vec<String>>,
    initial: &[(AccountId, MoneyAmount)],
    records: Vec<EpochRecord>,
    unfilled: Vec<UnfilledEpoch>,
    scores: Vec<ScoreRow>,
) -> SimulationReport {
    let sum = |f: fn(&EpochRecord) -> MoneyAmount| records.iter().map(f).sum::<MoneyAmount>();
    let totals = Totals {
        amount: sum(|r| r.amount),
        contract_fee: sum(|r| r.contract_fee),
        provider_amount: sum(|r| r.provider_amount),
    };
    let winner_delta = records
        .iter()
        .filter(|r| {
            r.algorithmic_winner.as_deref() != Some(r.winner.as_str())
                || r.algorithmic_offered.as_deref() != Some(r.offered.as_str())
        })
        .map(|r| WinnerDelta {
            epoch: r.epoch,
            consumer: r.consumer.clone(),
            winner: r.winner.clone(),
            offered: r.offered.clone(),
            algorithmic_winner: r.algorithmic_winner.clone(),
            algorithmic_offered: r.algorithmic_offered.clone(),
        })
        .collect();

    let mut accounts = Vec::new();
    for slot in sim.agents() {
        let id = slot.id();
        let role = match slot {
            crate::sim::AgentSlot::Registrar(_) => "authority",
            crate::sim::AgentSlot::Provider(_) => "provider",
            crate::sim::AgentSlot::Consumer(_) => "consumer",
        };
        let wallet = sim.world.platform.wallet_of(id).expect("every agent has a wallet");
        let start = initial
            .iter()
            .find(|(a, _)| *a == wallet)
            .map_or(MoneyAmount::ZERO, |(_, b)| *b);
        accounts.push(AccountSummary {
            owner: id.to_string(),
            role: role.into(),
            account: wallet,
            initial: start,
            final_balance: sim.world.ledger.balance_of(&wallet).unwrap_or(MoneyAmount::ZERO),
        });
    }
    // contracts still holding value (e.g. after a failed trade)
    for (address, _) in sim.world.ledger.contracts() {
        accounts.push(AccountSummary {
            owner: address.to_string(),
            role: "contract".into(),
            account: *address,
            initial: MoneyAmount::ZERO,
            final_balance: sim.world.ledger.balance_of(address).unwrap_or(MoneyAmount::ZERO),
        });
    }

    let providers = providers
        .iter()
        .zip(initial_catalogues)
        .map(|(p, initial_catalogue)| ProviderSummary {
            name: p.to_string(),
            initial_catalogue,
            final_catalogue: titles_of(&sim.provider(p).expect("provider").catalogue),
        })
        .collect();

    SimulationReport {
        config: cfg.clone(),
        providers,
        records,
        unfilled,
        scores,
        accounts,
        totals,
        winner_delta,
        incidents: sim.world.incidents().to_vec(),
        final_block: sim.world.ledger.current_block(),
        messages: sim.world.platform.log().len(),
    }
}

/// Cumulative balance of one provider after each epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSeries {
    pub provider: String,
    /// `values[k]` is the balance after epoch `k`; `values[0]` is the start.
    pub values: Vec<MoneyAmount>,
}

/// Provider balances per epoch: initial balance plus the payouts
/// (amount minus fee) of every epoch won so far.
pub fn balance_series(report: &SimulationReport) -> Vec<BalanceSeries> {
    report
        .providers
        .iter()
        .map(|p| {
            let start = report.account(&p.name).map_or(MoneyAmount::ZERO, |a| a.initial);
            let mut values = Vec::with_capacity(report.config.epochs as usize + 1);
            values.push(start);
            let mut balance = start;
            for epoch in 1..=report.config.epochs {
                for r in report.records.iter().filter(|r| r.epoch == epoch && r.winner == p.name) {
                    let gain = r.amount.checked_sub(r.contract_fee).expect("fee never exceeds amount");
                    balance = balance.checked_add(gain).expect("balance overflow");
                }
                values.push(balance);
            }
            BalanceSeries {
                provider: p.name.clone(),
                values,
            }
        })
        .collect()
}
