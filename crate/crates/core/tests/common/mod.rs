#![allow(dead_code)]

use smartson_core::harness::{CatalogueMode, InitialBalances, RequestPlan, ScenarioConfig, WinnerMode};
use smartson_core::{MoneyAmount, ResourceSpec};

const TRACE_CSV: &str = include_str!("../../../smartson/data/trace.csv");

pub fn trace() -> Vec<ResourceSpec> {
    TRACE_CSV
        .lines()
        .skip(1)
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let f = |i: usize| c[i].parse::<f64>().unwrap();
            ResourceSpec::new(c[0], c[1].parse().unwrap(), f(2), f(3), f(4), f(5), f(6)).unwrap()
        })
        .collect()
}

pub fn spec(title: &str) -> ResourceSpec {
    trace().into_iter().find(|r| r.title == title).unwrap()
}

pub fn money(s: &str) -> MoneyAmount {
    s.parse().unwrap()
}

pub const POOLS: [[&str; 5]; 5] = [
    ["t3a.micro", "m5.large", "t3.nano", "m5a.large", "t3a.small"],
    ["m5.xlarge", "m5d.xlarge", "m5.large", "m5a.large", "m5dn.large"],
    ["m4.large", "a1.medium", "t2.micro", "t3.nano", "m5d.xlarge"],
    ["t2.micro", "t3.small", "t3a.medium", "a1.large", "m5a.large"],
    ["m5ad.large", "m5d.xlarge", "a1.2xlarge", "t3a.xlarge", "t3.small"],
];

pub const TEN_REQUESTS: [&str; 10] = [
    "m5.xlarge",
    "m5ad.large",
    "m5d.large",
    "m5.large",
    "t3.micro",
    "t3.medium",
    "t2.medium",
    "a1.medium",
    "m5a.xlarge",
    "a1.large",
];

/// (winner, offered, amount, fee) per epoch of the ten-request run.
pub const TEN_EPOCHS: [(&str, &str, &str, &str); 10] = [
    ("Provider 2", "m5.xlarge", "0.192", "0.00384"),
    ("Provider 5", "m5ad.large", "0.103", "0.00206"),
    ("Provider 2", "m5.xlarge", "0.192", "0.00384"),
    ("Provider 1", "m5.large", "0.096", "0.00192"),
    ("Provider 1", "t3a.small", "0.0188", "0.000376"),
    ("Provider 4", "t3a.medium", "0.0376", "0.000752"),
    ("Provider 2", "m5.xlarge", "0.192", "0.00384"),
    ("Provider 3", "a1.medium", "0.0255", "0.00051"),
    ("Provider 5", "a1.2xlarge", "0.204", "0.00408"),
    ("Provider 4", "a1.large", "0.051", "0.00102"),
];

pub fn pools_config(requests: &[&str]) -> ScenarioConfig {
    ScenarioConfig {
        seed: 7,
        num_providers: 5,
        num_consumers: 1,
        catalogue_mode: CatalogueMode::Explicit {
            catalogues: POOLS
                .iter()
                .map(|p| p.iter().map(|t| t.to_string()).collect())
                .collect(),
        },
        requests: RequestPlan::Explicit {
            titles: requests.iter().map(|t| t.to_string()).collect(),
        },
        epochs: requests.len() as u64,
        fee_percent: 2,
        lease_time_hours: 1,
        deadline_offset: 100,
        initial_balances: InitialBalances {
            consumer: money("10"),
            provider: money("0.05"),
            authority: MoneyAmount::ZERO,
        },
        deterministic: true,
        reply_timeout: None,
        winner_mode: WinnerMode::Algorithmic,
        winner_overrides: Vec::new(),
    }
}

/// Printed scores against a t3a.small request, pool by pool.
pub const POOL_SCORES: [[f64; 5]; 5] = [
    [
        0.999992503425711,
        0.999995336207502,
        0.999977827484931,
        0.999994183623252,
        1.0,
    ],
    [
        0.999992819700923,
        0.999992055462973,
        0.999995336207502,
        0.999994183623252,
        0.999994380189432,
    ],
    [
        0.999994495539404,
        0.9999975923618,
        0.999999218978273,
        0.999977827484931,
        0.999992055462973,
    ],
    [
        0.999999218978273,
        0.999999939860052,
        0.999995548858419,
        0.999997462590219,
        0.999994183623252,
    ],
    [
        0.99999470786012,
        0.999992055462973,
        0.999992030759267,
        0.999993277084396,
        0.999999939860052,
    ],
];
