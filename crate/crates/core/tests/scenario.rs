mod common;

use common::*;
use smartson_core::escrow::EscrowState;
use smartson_core::harness::{
    balance_series, run_scenario, CatalogueMode, ConfigError, HarnessError, RequestPlan, WinnerMode, WinnerOverride,
};
use smartson_core::MoneyAmount;

#[test]
fn single_request_scores_every_pool_entry() {
    let report = run_scenario(&pools_config(&["t3a.small"]), &trace()).unwrap();
    assert_eq!(report.scores.len(), 5);
    for (row, expected) in report.scores.iter().zip(POOL_SCORES) {
        let got: Vec<f64> = row.entries.iter().map(|e| e.score).collect();
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() <= 1e-12 * e, "{} {g} vs {e}", row.provider);
        }
    }
    let bests: Vec<_> = report.scores.iter().map(|r| r.best.clone().unwrap()).collect();
    assert_eq!(bests, ["t3a.small", "m5.large", "t2.micro", "t3.small", "t3.small"]);
    let r = &report.records[0];
    assert_eq!((r.winner.as_str(), r.offered.as_str()), ("Provider 1", "t3a.small"));
    assert_eq!(r.amount, money("0.0188"));
    assert_eq!(r.contract_fee, money("0.000376"));
}

#[test]
fn ten_epochs_match_expected_rows_and_totals() {
    let report = run_scenario(&pools_config(&TEN_REQUESTS), &trace()).unwrap();
    assert!(report.unfilled.is_empty());
    assert_eq!(report.records.len(), 10);
    for (r, (winner, offered, amount, fee)) in report.records.iter().zip(TEN_EPOCHS) {
        assert_eq!(r.winner, winner, "epoch {}", r.epoch);
        assert_eq!(r.offered, offered, "epoch {}", r.epoch);
        assert_eq!(r.amount, money(amount));
        assert_eq!(r.contract_fee, money(fee));
        assert_eq!(
            r.contract_fee,
            MoneyAmount::from_base_units(r.amount.base_units() * 2 / 100)
        );
        assert_eq!(r.contract_fee.checked_add(r.provider_amount).unwrap(), r.amount);
        assert_eq!(r.contract_status, EscrowState::EscrowComplete);
        assert_eq!(r.receipts.len(), 5, "deploy, initialize, deposit, two approvals");
    }
    assert_eq!(report.totals.amount, money("1.1119"));
    assert_eq!(report.totals.contract_fee, money("0.022238"));
    assert!(report.winner_delta.is_empty());
    for p in &report.providers {
        let mut a = p.initial_catalogue.clone();
        let mut b = p.final_catalogue.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b, "{} lost a resource", p.name);
    }
}

#[test]
fn balances_follow_payouts_and_supply_is_conserved() {
    let report = run_scenario(&pools_config(&TEN_REQUESTS), &trace()).unwrap();
    let series = balance_series(&report);
    assert_eq!(series.len(), 5);
    let start = money("0.05");
    for s in &series {
        assert_eq!(s.values.len(), 11);
        assert_eq!(s.values[0], start);
        let account = report.account(&s.provider).unwrap();
        assert_eq!(*s.values.last().unwrap(), account.final_balance);
    }
    let p2 = series.iter().find(|s| s.provider == "Provider 2").unwrap();
    assert_eq!(*p2.values.last().unwrap(), money("0.61448"));
    let gains: MoneyAmount = series
        .iter()
        .map(|s| s.values.last().unwrap().checked_sub(start).unwrap())
        .sum();
    assert_eq!(gains, money("1.089662"));

    let initial: MoneyAmount = report.accounts.iter().map(|a| a.initial).sum();
    let fin: MoneyAmount = report.accounts.iter().map(|a| a.final_balance).sum();
    assert_eq!(initial, fin);
    assert_eq!(report.account("Authority").unwrap().final_balance, money("0.022238"));
}

#[test]
fn idle_provider_has_flat_series() {
    let report = run_scenario(&pools_config(&["t3a.small"]), &trace()).unwrap();
    let series = balance_series(&report);
    for s in series.iter().filter(|s| s.provider != "Provider 1") {
        assert!(s.values.iter().all(|v| *v == money("0.05")));
    }
}

#[test]
fn overrides_force_the_listed_winner() {
    let mut cfg = pools_config(&TEN_REQUESTS);
    cfg.winner_mode = WinnerMode::Override;
    cfg.winner_overrides = vec![WinnerOverride {
        epoch: 4,
        provider: "Provider 2".into(),
        offered: "m5.large".into(),
    }];
    let report = run_scenario(&cfg, &trace()).unwrap();
    let r4 = &report.records[3];
    assert_eq!(r4.winner, "Provider 2");
    assert_eq!(r4.algorithmic_winner.as_deref(), Some("Provider 1"));
    assert_eq!(report.winner_delta.len(), 1);
    assert_eq!(report.winner_delta[0].epoch, 4);
    assert_eq!(report.totals.amount, money("1.1119"));
}

#[test]
fn config_errors() {
    let t = trace();
    let mut cfg = pools_config(&["t3a.small"]);
    cfg.epochs = 0;
    assert_eq!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::ZeroEpochs))
    );

    let mut cfg = pools_config(&["t9.huge"]);
    cfg.epochs = 1;
    assert_eq!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::UnknownTitle("t9.huge".into())))
    );

    let mut cfg = pools_config(&["t3a.small"]);
    cfg.epochs = 2;
    assert!(matches!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::RequestCount {
            expected: 2,
            found: 1
        }))
    ));

    let mut cfg = pools_config(&["t3a.small"]);
    cfg.num_providers = 4;
    assert!(matches!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::CatalogueCount { .. }))
    ));

    let mut cfg = pools_config(&["t3a.small"]);
    cfg.fee_percent = 101;
    assert_eq!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::InvalidFee(101)))
    );

    let mut cfg = pools_config(&["t3a.small"]);
    cfg.catalogue_mode = CatalogueMode::Random { size: 35 };
    assert!(matches!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::CatalogueTooLarge { .. }))
    ));

    let mut cfg = pools_config(&["t3a.small"]);
    cfg.winner_overrides = vec![WinnerOverride {
        epoch: 1,
        provider: "Provider 9".into(),
        offered: "t3a.small".into(),
    }];
    assert!(matches!(
        run_scenario(&cfg, &t),
        Err(HarnessError::Config(ConfigError::UnknownProvider(_)))
    ));
}

fn random_config(seed: u64) -> smartson_core::ScenarioConfig {
    let mut cfg = pools_config(&[]);
    cfg.seed = seed;
    cfg.epochs = 8;
    cfg.catalogue_mode = CatalogueMode::Random { size: 5 };
    cfg.requests = RequestPlan::Random;
    cfg
}

#[test]
fn random_catalogues_are_seeded_and_in_trace_order() {
    let t = trace();
    let a = run_scenario(&random_config(11), &t).unwrap();
    let b = run_scenario(&random_config(11), &t).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&random_config(12), &t).unwrap();
    assert_ne!(a.providers, c.providers);
    for p in &a.providers {
        assert_eq!(p.initial_catalogue.len(), 5);
        let positions: Vec<usize> = p
            .initial_catalogue
            .iter()
            .map(|title| t.iter().position(|r| &r.title == title).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
    assert_eq!(a.records.len(), 8);
}

#[test]
fn several_consumers_share_the_providers() {
    let mut cfg = random_config(3);
    cfg.num_consumers = 3;
    let report = run_scenario(&cfg, &trace()).unwrap();
    assert_eq!(report.records.len() + report.unfilled.len(), 24);
    let initial: MoneyAmount = report.accounts.iter().map(|a| a.initial).sum();
    let fin: MoneyAmount = report.accounts.iter().map(|a| a.final_balance).sum();
    assert_eq!(initial, fin);
    for r in &report.records {
        assert_eq!(
            r.contract_fee,
            MoneyAmount::from_base_units(r.amount.base_units() * 2 / 100)
        );
        assert_eq!(r.contract_status, EscrowState::EscrowComplete);
    }
}
