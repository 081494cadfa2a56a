mod common;

use common::*;
use smartson_core::agents::{ConsumerConfig, TradeJob, TradeStatus, INTERFACE_DETAILS, PROVIDER_SERVICE};
use smartson_core::escrow::EscrowState;
use smartson_core::ledger::{CallKind, TxStatus};
use smartson_core::sim::{JournalEntry, SimError};
use smartson_core::{AgentId, Catalogue, MoneyAmount, Performative, Simulation};

fn market(consumer_funds: &str) -> (Simulation, AgentId, Vec<AgentId>) {
    let mut sim = Simulation::new();
    sim.add_registrar("Authority", MoneyAmount::ZERO, 2).unwrap();
    let providers = POOLS
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            let cat = Catalogue::new(pool.iter().map(|t| spec(t)).collect());
            sim.add_provider(&format!("Provider {}", i + 1), money("0.05"), cat)
                .unwrap()
        })
        .collect();
    let consumer = sim
        .add_consumer("Consumer 1", money(consumer_funds), ConsumerConfig::default())
        .unwrap();
    (sim, consumer, providers)
}

#[derive(Debug, PartialEq)]
enum Step {
    Msg(Performative),
    Tx(CallKind),
    Epoch,
}

fn steps(sim: &Simulation) -> Vec<Step> {
    sim.world
        .journal()
        .iter()
        .map(|e| match e {
            JournalEntry::Message { performative, .. } => Step::Msg(*performative),
            JournalEntry::Transaction { receipt, .. } => Step::Tx(receipt.call),
            JournalEntry::Epoch { .. } => Step::Epoch,
        })
        .collect()
}

#[test]
fn one_trade_follows_the_protocol_order() {
    let (mut sim, consumer, _) = market("1");
    let record = sim
        .trade(
            &consumer,
            TradeJob {
                target: spec("t3a.small"),
                choice: None,
            },
        )
        .unwrap();
    assert_eq!(record.status, TradeStatus::Completed);

    use Performative::*;
    let mut expected: Vec<Step> = vec![];
    expected.extend((0..5).map(|_| Step::Msg(Cfp)));
    expected.extend((0..5).map(|_| Step::Msg(Propose)));
    expected.extend([
        Step::Msg(Request),
        Step::Tx(CallKind::Deploy),
        Step::Tx(CallKind::Initialize),
        Step::Msg(Confirm),
        Step::Tx(CallKind::Deposit),
        Step::Msg(AcceptProposal),
        Step::Tx(CallKind::Approve),
        Step::Msg(Inform),
        Step::Epoch,
        Step::Tx(CallKind::Approve),
        Step::Msg(Disconfirm),
        Step::Msg(Disconfirm),
    ]);
    assert_eq!(steps(&sim), expected);

    let contract = record.contract.unwrap();
    assert_eq!(
        sim.world.ledger.contract(&contract).unwrap().status,
        EscrowState::EscrowComplete
    );
    assert_eq!(sim.world.platform.pending(), 0);
    assert!(sim.world.incidents().is_empty());
    let p1 = sim.provider(&AgentId::new("Provider 1")).unwrap();
    assert!(p1.leases.is_empty());
    assert!(p1.catalogue.contains("t3a.small"));
}

#[test]
fn spec_operations_one_by_one() {
    let (mut sim, consumer, _) = market("1");
    let (best, provider) = sim
        .consumer_request_resource(&consumer, spec("t3a.small"))
        .unwrap()
        .unwrap();
    assert_eq!((best.title.as_str(), provider.as_str()), ("t3a.small", "Provider 1"));

    let (receipt, contract) = sim
        .consumer_contract(&consumer, best.clone(), provider.clone(), 100, 1)
        .unwrap()
        .unwrap();
    assert_eq!(receipt.call, CallKind::Deposit);
    assert_eq!(sim.world.ledger.balance_of(&contract).unwrap(), money("0.0188"));
    let escrow = sim.world.ledger.contract(&contract).unwrap();
    assert_eq!(escrow.status, EscrowState::ConsumerDeposited);
    assert_eq!(
        escrow.deadline_block,
        1 + 100,
        "only the deploy is mined before initialize"
    );

    let details = sim
        .consumer_acquire(&consumer, best.clone(), provider.clone(), contract, 1)
        .unwrap();
    assert_eq!(details.as_deref(), Some(INTERFACE_DETAILS));
    let p1 = sim.provider(&provider).unwrap();
    assert!(!p1.catalogue.contains("t3a.small"));
    assert_eq!(p1.leased_to(&consumer).count(), 1);
    let escrow = sim.world.ledger.contract(&contract).unwrap();
    assert!(escrow.provider_approval && !escrow.consumer_approval);
    assert_eq!(escrow.status, EscrowState::ConsumerDeposited);

    let epoch_before = sim.world.epoch();
    let out = sim
        .consumer_release(&consumer, best, provider.clone(), contract)
        .unwrap();
    assert!(out.approve.is_ok());
    assert_eq!(out.provider_reply, Performative::Disconfirm);
    assert_eq!(sim.world.epoch(), epoch_before + 1, "release waits out the lease");
    assert_eq!(
        sim.world.ledger.contract(&contract).unwrap().status,
        EscrowState::EscrowComplete
    );
    let p1_wallet = sim.world.platform.wallet_of(&provider).unwrap();
    assert_eq!(sim.world.ledger.balance_of(&p1_wallet).unwrap(), money("0.068424"));
}

#[test]
fn releasing_an_unleased_resource_gets_failure() {
    let (mut sim, consumer, _) = market("1");
    let (best, provider) = sim
        .consumer_request_resource(&consumer, spec("t3a.small"))
        .unwrap()
        .unwrap();
    let (_, contract) = sim
        .consumer_contract(&consumer, best.clone(), provider.clone(), 100, 1)
        .unwrap()
        .unwrap();
    let out = sim.consumer_release(&consumer, best, provider, contract).unwrap();
    assert!(out.approve.is_ok(), "the consumer half of the approval still mines");
    assert_eq!(out.provider_reply, Performative::Failure);
}

#[test]
fn failed_lease_refunds_through_dual_cancel() {
    let (mut sim, consumer, _) = market("1");
    let provider = AgentId::new("Provider 2");
    // Provider 2 does not hold t3a.small
    let record = sim
        .trade(
            &consumer,
            TradeJob {
                target: spec("t3a.small"),
                choice: Some((provider.clone(), spec("t3a.small"))),
            },
        )
        .unwrap();
    assert_eq!(record.status, TradeStatus::LeaseFailed);
    let contract = record.contract.unwrap();
    let escrow = sim.world.ledger.contract(&contract).unwrap();
    assert_eq!(escrow.status, EscrowState::EscrowCancelled);
    assert_eq!(sim.world.ledger.balance_of(&contract).unwrap(), MoneyAmount::ZERO);
    let wallet = sim.world.platform.wallet_of(&consumer).unwrap();
    assert_eq!(sim.world.ledger.balance_of(&wallet).unwrap(), money("1"));
    let perfs: Vec<Performative> = sim
        .world
        .journal()
        .iter()
        .filter_map(|e| match e {
            JournalEntry::Message { performative, .. } => Some(*performative),
            _ => None,
        })
        .collect();
    assert_eq!(
        &perfs[perfs.len() - 4..],
        [
            Performative::AcceptProposal,
            Performative::Failure,
            Performative::Cancel,
            Performative::Cancel
        ]
    );
}

#[test]
fn underfunded_consumer_never_requests_a_contract() {
    let (mut sim, consumer, _) = market("0.01");
    let record = sim
        .trade(
            &consumer,
            TradeJob {
                target: spec("m5.xlarge"),
                choice: None,
            },
        )
        .unwrap();
    assert_eq!(record.status, TradeStatus::InsufficientFunds);
    assert!(sim.world.ledger.contracts().next().is_none());
    assert!(!sim.world.journal().iter().any(|e| matches!(
        e,
        JournalEntry::Message {
            performative: Performative::Request,
            ..
        }
    )));
}

#[test]
fn no_providers_means_no_offer() {
    let mut sim = Simulation::new();
    sim.add_registrar("Authority", MoneyAmount::ZERO, 2).unwrap();
    let consumer = sim.add_consumer("C", money("1"), ConsumerConfig::default()).unwrap();
    assert_eq!(
        sim.consumer_request_resource(&consumer, spec("t3a.small")).unwrap(),
        None
    );
    let record = sim
        .trade(
            &consumer,
            TradeJob {
                target: spec("t3a.small"),
                choice: None,
            },
        )
        .unwrap();
    assert_eq!(record.status, TradeStatus::NoOffer);
}

#[test]
fn empty_catalogue_refuses() {
    let mut sim = Simulation::new();
    sim.add_registrar("Authority", MoneyAmount::ZERO, 2).unwrap();
    sim.add_provider("Empty", MoneyAmount::ZERO, Catalogue::default())
        .unwrap();
    let consumer = sim.add_consumer("C", money("1"), ConsumerConfig::default()).unwrap();
    assert_eq!(
        sim.consumer_request_resource(&consumer, spec("t3a.small")).unwrap(),
        None
    );
    assert!(sim.world.journal().iter().any(|e| matches!(
        e,
        JournalEntry::Message {
            performative: Performative::Refuse,
            ..
        }
    )));
}

#[test]
fn silent_provider_times_out_or_stalls() {
    let build = |timeout| {
        let mut sim = Simulation::new();
        sim.add_registrar("Authority", MoneyAmount::ZERO, 2).unwrap();
        sim.add_provider("P", MoneyAmount::ZERO, Catalogue::new(vec![spec("t3a.small")]))
            .unwrap();
        // registered and listed, but never scheduled
        let ghost = sim.world.platform.register_agent("Ghost").unwrap();
        sim.world.platform.df_register(&ghost, PROVIDER_SERVICE).unwrap();
        let config = ConsumerConfig {
            reply_timeout: timeout,
            ..ConsumerConfig::default()
        };
        let consumer = sim.add_consumer("C", money("1"), config).unwrap();
        (sim, consumer)
    };

    let (mut sim, consumer) = build(Some(5));
    let best = sim.consumer_request_resource(&consumer, spec("t3a.small")).unwrap();
    assert_eq!(best.unwrap().1.as_str(), "P");
    assert!(sim.world.incidents().iter().any(|i| i.description.contains("Ghost")));

    let (mut sim, consumer) = build(None);
    let err = sim.consumer_request_resource(&consumer, spec("t3a.small")).unwrap_err();
    assert!(matches!(err, SimError::Stalled { .. }), "{err:?}");
}

#[test]
fn reverted_transactions_are_journaled() {
    let (mut sim, consumer, _) = market("1");
    let (best, provider) = sim
        .consumer_request_resource(&consumer, spec("t3a.small"))
        .unwrap()
        .unwrap();
    let (_, contract) = sim
        .consumer_contract(&consumer, best.clone(), provider.clone(), 100, 1)
        .unwrap()
        .unwrap();
    sim.consumer_acquire(&consumer, best.clone(), provider.clone(), contract, 1)
        .unwrap();
    sim.consumer_release(&consumer, best.clone(), provider.clone(), contract)
        .unwrap();
    // second release: approve reverts in EscrowComplete
    let out = sim.consumer_release(&consumer, best, provider, contract).unwrap();
    assert!(out.approve.is_err());
    let last_tx = sim.world.receipts().last().unwrap().1;
    assert!(matches!(last_tx.status, TxStatus::Reverted(_)));
}

#[test]
fn contention_for_one_resource_fails_over_cleanly() {
    let mut sim = Simulation::new();
    sim.add_registrar("Authority", MoneyAmount::ZERO, 2).unwrap();
    sim.add_provider(
        "P",
        money("0"),
        Catalogue::new(vec![spec("t3a.small"), spec("m5.large")]),
    )
    .unwrap();
    let a = sim.add_consumer("A", money("1"), ConsumerConfig::default()).unwrap();
    let b = sim.add_consumer("B", money("1"), ConsumerConfig::default()).unwrap();
    for c in [&a, &b] {
        sim.consumer_mut(c)
            .unwrap()
            .push_task(smartson_core::agents::Task::Trade(TradeJob {
                target: spec("t3a.small"),
                choice: None,
            }));
    }
    sim.run_until_idle().unwrap();
    let mut records = vec![];
    for c in [&a, &b] {
        match sim.consumer_mut(c).unwrap().take_outcome().unwrap() {
            smartson_core::agents::Outcome::Trade(r) => records.push(r),
            other => panic!("{other:?}"),
        }
    }
    // both were offered the same instance; the first ACCEPT_PROPOSAL wins it
    assert_eq!(records[0].status, TradeStatus::Completed);
    assert_eq!(records[1].status, TradeStatus::LeaseFailed);
    assert_ne!(records[0].conversation_id, records[1].conversation_id);
    let loser = records[1].contract.unwrap();
    assert_eq!(
        sim.world.ledger.contract(&loser).unwrap().status,
        EscrowState::EscrowCancelled
    );
    let b_wallet = sim.world.platform.wallet_of(&b).unwrap();
    assert_eq!(sim.world.ledger.balance_of(&b_wallet).unwrap(), money("1"));
    let p = sim.provider(&AgentId::new("P")).unwrap();
    assert_eq!(p.catalogue.len(), 2);
    assert!(p.leases.is_empty() && p.failed.is_empty());
}
