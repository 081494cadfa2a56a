use smartson::concurrent::run_concurrent;
use smartson::config::fixture;
use smartson::trace::bundled_trace;
use smartson_core::harness::{run_scenario_with, AUTHORITY_NAME};
use smartson_core::{EscrowState, MoneyAmount, ScenarioConfig};

fn multi_consumer() -> ScenarioConfig {
    let mut v = serde_json::to_value(fixture("table3").unwrap()).unwrap();
    v["num_consumers"] = 3.into();
    v["deterministic"] = false.into();
    v["requests"] = serde_json::json!({ "mode": "random" });
    v["catalogue_mode"] = serde_json::json!({ "mode": "random", "size": 8 });
    v["epochs"] = 4.into();
    serde_json::from_value(v).unwrap()
}

fn sum(values: impl Iterator<Item = MoneyAmount>) -> MoneyAmount {
    values.fold(MoneyAmount::ZERO, |a, b| a.checked_add(b).unwrap())
}

#[test]
fn threaded_run_keeps_the_books_straight() {
    let cfg = multi_consumer();
    let run = run_concurrent(&cfg, &bundled_trace()).unwrap();
    let report = &run.report;
    assert_eq!(report.records.len() + report.unfilled.len(), 12);
    assert!(!report.records.is_empty());

    let initial = sum(report.accounts.iter().map(|a| a.initial));
    let fin = sum(report.accounts.iter().map(|a| a.final_balance));
    assert_eq!(initial, fin);

    for r in &report.records {
        assert_eq!(r.contract_status, EscrowState::EscrowComplete);
        assert_eq!(r.contract_fee.base_units(), r.amount.base_units() * 2 / 100);
        assert_eq!(
            r.provider_amount.base_units(),
            r.amount.base_units() - r.contract_fee.base_units()
        );
    }
    let fees = sum(report.records.iter().map(|r| r.contract_fee));
    let authority = report.account(AUTHORITY_NAME).unwrap();
    assert_eq!(authority.final_balance.checked_sub(authority.initial).unwrap(), fees);

    let ledger = &run.simulation.world.ledger;
    for (address, contract) in ledger.contracts() {
        assert!(contract.invariants_hold());
        assert!(ledger.balance_of(address).unwrap().is_zero());
    }
}

#[test]
fn single_consumer_threaded_run_matches_round_robin() {
    let mut cfg = fixture("table3").unwrap();
    cfg.deterministic = false;
    let trace = bundled_trace();
    let threaded = run_concurrent(&cfg, &trace).unwrap().report;
    let serial = run_scenario_with(&cfg, &trace, |sim| sim.run_until_idle())
        .unwrap()
        .report;
    let winners = |r: &smartson_core::SimulationReport| {
        r.records
            .iter()
            .map(|x| (x.winner.clone(), x.offered.clone(), x.amount))
            .collect::<Vec<_>>()
    };
    assert_eq!(winners(&threaded), winners(&serial));
    assert_eq!(threaded.totals, serial.totals);
}
