use proptest::prelude::*;

use smartson_core::escrow::EscrowState;
use smartson_core::matching::{best_match, cosine_of, cosine_similarity};
use smartson_core::platform::Payload;
use smartson_core::{
    AccountId, Catalogue, Ledger, LedgerError, Message, MoneyAmount, Performative, Platform, ResourceSpec,
};

fn component() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.001f64..1.0e6]
}

fn vector() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(component()).prop_filter("non-zero", |v| v.iter().any(|x| *x > 0.0))
}

fn resource() -> impl Strategy<Value = ResourceSpec> {
    (0u64..500_000, prop::array::uniform5(0.0f64..1.0e5), 0u32..1000).prop_filter_map("non-zero", |(price, v, tag)| {
        let price = MoneyAmount::from_base_units(price as u128 * 1_000_000_000_000);
        ResourceSpec::new(format!("r{tag}"), price, v[0], v[1], v[2], v[3], v[4]).ok()
    })
}

/// Independent scorer: plain loops, first strictly-greater score wins.
fn oracle_argmax(request: &ResourceSpec, catalogue: &[ResourceSpec]) -> Option<usize> {
    let v = |r: &ResourceSpec| {
        let price: f64 = r.price.to_string().parse().unwrap();
        [price, r.mips, r.storage_price, r.ram_gb, r.bandwidth_mbps, r.cpu_cores]
    };
    let t = v(request);
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in catalogue.iter().map(v).enumerate() {
        let mut dot = 0.0;
        let mut tt = 0.0;
        let mut ee = 0.0;
        for k in 0..6 {
            dot += t[k] * e[k];
            tt += t[k] * t[k];
            ee += e[k] * e[k];
        }
        let s = (dot / (tt.sqrt() * ee.sqrt())).clamp(0.0, 1.0);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

proptest! {
    #[test]
    fn cosine_is_symmetric(a in vector(), b in vector()) {
        let ab = cosine_of(&a, &b).unwrap();
        let ba = cosine_of(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn self_similarity_is_one(a in vector()) {
        prop_assert!((cosine_of(&a, &a).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn cosine_ignores_positive_scaling(a in vector(), b in vector(), k in 0.001f64..1000.0) {
        let scaled = a.map(|x| x * k);
        let s0 = cosine_of(&a, &b).unwrap();
        let s1 = cosine_of(&scaled, &b).unwrap();
        prop_assert!((s0 - s1).abs() <= 1e-12);
    }

    #[test]
    fn argmax_survives_power_of_two_scaling(
        request in resource(),
        entries in prop::collection::vec(resource(), 1..10),
        shift in 0u32..20,
    ) {
        let k = 1u64 << shift;
        let plain = Catalogue::new(entries.clone());
        let scaled = Catalogue::new(entries.iter().map(|e| e.scaled(k)).collect());
        let a = best_match(&request, &plain).unwrap();
        let b = best_match(&request, &scaled).unwrap();
        prop_assert_eq!(a.index, b.index);
        prop_assert_eq!(a.score, b.score);
    }

    #[test]
    fn best_match_agrees_with_oracle(
        request in resource(),
        mut entries in prop::collection::vec(resource(), 0..10),
        dup in any::<prop::sample::Index>(),
    ) {
        if !entries.is_empty() {
            // force an exact tie now and then
            let i = dup.index(entries.len());
            entries.push(entries[i].clone());
        }
        let cat = Catalogue::new(entries.clone());
        prop_assert_eq!(best_match(&request, &cat).map(|m| m.index), oracle_argmax(&request, &entries));
        if let Some(m) = best_match(&request, &cat) {
            prop_assert_eq!(m.score, cosine_similarity(&request, m.resource).unwrap());
        }
    }

    #[test]
    fn mailbox_is_fifo_per_sender(sends in prop::collection::vec(0usize..3, 0..60)) {
        let mut p = Platform::new();
        let senders: Vec<_> = (0..3).map(|i| p.register_agent(format!("s{i}")).unwrap()).collect();
        let rx = p.register_agent("rx").unwrap();
        for (n, s) in sends.iter().enumerate() {
            let msg = Message::new(
                senders[*s].clone(),
                vec![rx.clone()],
                Performative::Inform,
                Payload::InterfaceDetails { details: n.to_string() },
                "c",
            ).unwrap();
            p.send(msg).unwrap();
        }
        let mut got = Vec::new();
        while let Some(m) = p.receive(&rx, None, None).unwrap() {
            let Payload::InterfaceDetails { details } = m.payload else { unreachable!() };
            got.push(details.parse::<usize>().unwrap());
        }
        prop_assert_eq!(got, (0..sends.len()).collect::<Vec<_>>());
        prop_assert_eq!(p.log().len(), sends.len());
    }
}

#[derive(Debug, Clone)]
enum Op {
    Init {
        provider: usize,
        consumer: usize,
        fee: u32,
        deadline: u64,
    },
    Deposit {
        who: usize,
        units: u64,
    },
    Approve(usize),
    Cancel(usize),
    End(usize),
    TimeoutRefund(usize),
    Transfer {
        from: usize,
        units: u64,
    },
}

fn op() -> impl Strategy<Value = Op> {
    let who = 0usize..4;
    prop_oneof![
        (0usize..4, 0usize..4, 0u32..=120, 0u64..30).prop_map(|(provider, consumer, fee, deadline)| Op::Init {
            provider,
            consumer,
            fee,
            deadline
        }),
        (who.clone(), 0u64..5000).prop_map(|(who, units)| Op::Deposit { who, units }),
        who.clone().prop_map(Op::Approve),
        who.clone().prop_map(Op::Cancel),
        who.clone().prop_map(Op::End),
        who.clone().prop_map(Op::TimeoutRefund),
        (who, 0u64..10).prop_map(|(from, units)| Op::Transfer { from, units }),
    ]
}

fn legal(before: Option<EscrowState>, after: Option<EscrowState>) -> bool {
    use EscrowState::*;
    match (before, after) {
        (Some(a), Some(b)) if a == b => true,
        (Some(UnInitialized), Some(Initialized)) => true,
        (Some(Initialized), Some(ConsumerDeposited)) => true,
        (Some(ConsumerDeposited), Some(EscrowComplete | EscrowCancelled)) => true,
        (Some(EscrowComplete | EscrowCancelled), None) => true,
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn escrow_sequences_keep_their_invariants(ops in prop::collection::vec(op(), 1..40), extension in any::<bool>()) {
        let mut ledger = Ledger::new();
        ledger.set_timeout_refund(extension);
        let unit = MoneyAmount::from_base_units(1_000_000_000_000_000);
        let people: Vec<AccountId> = (0..4).map(|_| ledger.create_account(unit.checked_mul(10_000).unwrap())).collect();
        let (contract, _) = ledger.deploy_escrow(people[0]).unwrap();
        let supply = ledger.total_supply();

        for op in ops {
            let before = ledger.clone();
            let result = match op {
                Op::Init { provider, consumer, fee, deadline } => ledger.escrow_initialize(
                    people[0], contract, people[provider], people[consumer], fee, ledger.current_block() + deadline,
                ),
                Op::Deposit { who, units } => ledger.escrow_deposit(people[who], contract, unit.checked_mul(units).unwrap()),
                Op::Approve(w) => ledger.escrow_approve(people[w], contract),
                Op::Cancel(w) => ledger.escrow_cancel(people[w], contract),
                Op::End(w) => ledger.escrow_end(people[w], contract),
                Op::TimeoutRefund(w) => ledger.escrow_timeout_refund(people[w], contract),
                Op::Transfer { from, units } => ledger.submit(smartson_core::Transaction::transfer(
                    people[from], contract, unit.checked_mul(units).unwrap(),
                )),
            };
            prop_assert_eq!(ledger.total_supply(), supply);
            let s0 = before.contract(&contract).map(|c| c.status);
            let s1 = ledger.contract(&contract).map(|c| c.status);
            match &result {
                Ok(_) => prop_assert!(legal(s0, s1), "{:?} -> {:?} via {:?}", s0, s1, op),
                Err(e) => {
                    prop_assert_eq!(before.contract(&contract), ledger.contract(&contract));
                    for p in &people {
                        prop_assert_eq!(before.balance_of(p).ok(), ledger.balance_of(p).ok());
                    }
                    prop_assert_eq!(before.balance_of(&contract).ok(), ledger.balance_of(&contract).ok());
                    if matches!(e, LedgerError::Reverted { .. }) {
                        prop_assert_eq!(ledger.current_block(), before.current_block() + 1);
                    } else {
                        prop_assert_eq!(ledger.current_block(), before.current_block());
                    }
                }
            }
            if let Some(c) = ledger.contract(&contract) {
                prop_assert!(c.invariants_hold());
                if c.status == EscrowState::EscrowComplete && s0 != s1 {
                    let charge = c.escrow_charge;
                    prop_assert_eq!(c.fee_amount.checked_add(c.provider_amount).unwrap(), charge);
                    prop_assert_eq!(c.fee_amount.base_units(), charge.base_units() * c.fee_percent as u128 / 100);
                    prop_assert_eq!(ledger.balance_of(&contract).unwrap(), MoneyAmount::ZERO);
                }
            }
        }
    }
}
