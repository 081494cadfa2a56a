//! Escrow contract hosted at a contract account on the [`Ledger`].
//!
//! The contract is a pure state machine: [`EscrowContract::execute`] takes
//! the call and its [`CallContext`] and returns the payouts the ledger must
//! perform. The ledger runs it on a copy and commits only on success, so a
//! revert leaves the contract untouched.
//!
//! Lifecycle:
//!
//! ```text
//! UnInitialized -> Initialized -> ConsumerDeposited -+-> (ServiceApproved) -> EscrowComplete
//!                                                    +-> EscrowCancelled
//! ```

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Call, Ledger, LedgerError, Transaction, TransactionReceipt};
use crate::money::MoneyAmount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EscrowState {
    UnInitialized,
    Initialized,
    ConsumerDeposited,
    ServiceApproved,
    EscrowComplete,
    EscrowCancelled,
}

impl EscrowState {
    pub const ALL: [EscrowState; 6] = [
        EscrowState::UnInitialized,
        EscrowState::Initialized,
        EscrowState::ConsumerDeposited,
        EscrowState::ServiceApproved,
        EscrowState::EscrowComplete,
        EscrowState::EscrowCancelled,
    ];

    /// Position along the lifecycle; the two terminal branches share a rank.
    pub fn rank(self) -> u8 {
        match self {
            EscrowState::UnInitialized => 0,
            EscrowState::Initialized => 1,
            EscrowState::ConsumerDeposited => 2,
            EscrowState::ServiceApproved => 3,
            EscrowState::EscrowComplete => 4,
            EscrowState::EscrowCancelled => 4,
        }
    }
}

/// Reasons a contract call reverts.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EscrowError {
    #[error("caller is not the authority node")]
    NotAuthority,
    #[error("provider or consumer equals the authority node")]
    PartyIsAuthority,
    #[error("fee percent {0} exceeds 100")]
    InvalidFee(u32),
    #[error("call not allowed in state {0:?}")]
    WrongState(EscrowState),
    #[error("caller is not the consumer")]
    NotConsumer,
    #[error("caller is neither provider nor consumer")]
    NotParty,
    #[error("deadline block passed")]
    DeadlinePassed,
    #[error("deadline block not reached")]
    DeadlineNotReached,
    #[error("timeout refund extension disabled")]
    ExtensionDisabled,
    #[error("function is not payable")]
    NonPayable,
    #[error("plain transfers to the contract are rejected")]
    Fallback,
    #[error("arithmetic overflow or underflow")]
    Arithmetic,
}

/// Contract functions reachable through a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EscrowCall {
    Initialize {
        provider: AccountId,
        consumer: AccountId,
        fee_percent: u32,
        deadline_block: u64,
    },
    Deposit,
    Approve,
    Cancel,
    End,
    TimeoutRefund,
}

/// Events recorded in the receipt log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Deposit {
        depositor: AccountId,
        amount: MoneyAmount,
    },
    ServicePayment {
        block_no: u64,
        contract_balance: MoneyAmount,
    },
}

/// What the ledger knows when it dispatches a call.
#[derive(Debug, Clone)]
pub struct CallContext {
    pub caller: AccountId,
    pub value: MoneyAmount,
    /// Ledger block counter before this transaction.
    pub current_block: u64,
    /// Block the transaction is mined into.
    pub mined_block: u64,
    /// Contract balance with `value` already credited.
    pub balance: MoneyAmount,
    pub timeout_refund_enabled: bool,
}

/// Side effects the ledger applies after a successful call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    pub payouts: Vec<(AccountId, MoneyAmount)>,
    pub events: Vec<Event>,
    pub destroyed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowContract {
    pub authority: AccountId,
    pub provider: Option<AccountId>,
    pub consumer: Option<AccountId>,
    pub fee_percent: u32,
    pub deadline_block: u64,
    pub status: EscrowState,
    pub deposits: Vec<MoneyAmount>,
    pub escrow_charge: MoneyAmount,
    pub provider_approval: bool,
    pub consumer_approval: bool,
    pub provider_cancel: bool,
    pub consumer_cancel: bool,
    pub fee_amount: MoneyAmount,
    pub provider_amount: MoneyAmount,
    /// Bookkeeping copy of the Solidity `EscrowAccountLedger`; informational.
    pub internal_ledger: BTreeMap<AccountId, MoneyAmount>,
}

fn arith<T>(r: Result<T, crate::money::MoneyError>) -> Result<T, EscrowError> {
    r.map_err(|_| EscrowError::Arithmetic)
}

impl EscrowContract {
    pub fn new(authority: AccountId) -> Self {
        EscrowContract {
            authority,
            provider: None,
            consumer: None,
            fee_percent: 0,
            deadline_block: 0,
            status: EscrowState::UnInitialized,
            deposits: Vec::new(),
            escrow_charge: MoneyAmount::ZERO,
            provider_approval: false,
            consumer_approval: false,
            provider_cancel: false,
            consumer_cancel: false,
            fee_amount: MoneyAmount::ZERO,
            provider_amount: MoneyAmount::ZERO,
            internal_ledger: BTreeMap::new(),
        }
    }

    fn is_provider(&self, who: &AccountId) -> bool {
        self.provider.as_ref() == Some(who)
    }

    fn is_consumer(&self, who: &AccountId) -> bool {
        self.consumer.as_ref() == Some(who)
    }

    /// Runs one call. On `Err` the contract may be partially modified; the
    /// ledger discards the copy it ran on.
    pub fn execute(&mut self, call: &EscrowCall, ctx: &CallContext) -> Result<Effects, EscrowError> {
        if !matches!(call, EscrowCall::Deposit) && !ctx.value.is_zero() {
            return Err(EscrowError::NonPayable);
        }
        match call {
            EscrowCall::Initialize {
                provider,
                consumer,
                fee_percent,
                deadline_block,
            } => self.initialize(ctx, *provider, *consumer, *fee_percent, *deadline_block),
            EscrowCall::Deposit => self.deposit(ctx),
            EscrowCall::Approve => self.approve(ctx),
            EscrowCall::Cancel => self.cancel(ctx),
            EscrowCall::End => self.end(ctx),
            EscrowCall::TimeoutRefund => self.timeout_refund(ctx),
        }
    }

    fn initialize(
        &mut self,
        ctx: &CallContext,
        provider: AccountId,
        consumer: AccountId,
        fee_percent: u32,
        deadline_block: u64,
    ) -> Result<Effects, EscrowError> {
        if ctx.caller != self.authority {
            return Err(EscrowError::NotAuthority);
        }
        if self.status != EscrowState::UnInitialized {
            return Err(EscrowError::WrongState(self.status));
        }
        if provider == self.authority || consumer == self.authority {
            return Err(EscrowError::PartyIsAuthority);
        }
        if fee_percent > 100 {
            return Err(EscrowError::InvalidFee(fee_percent));
        }
        self.provider = Some(provider);
        self.consumer = Some(consumer);
        self.fee_percent = fee_percent;
        self.deadline_block = deadline_block;
        self.status = EscrowState::Initialized;
        self.internal_ledger.insert(provider, MoneyAmount::ZERO);
        self.internal_ledger.insert(consumer, MoneyAmount::ZERO);
        Ok(Effects::default())
    }

    fn deposit(&mut self, ctx: &CallContext) -> Result<Effects, EscrowError> {
        if !self.is_consumer(&ctx.caller) {
            return Err(EscrowError::NotConsumer);
        }
        if !matches!(self.status, EscrowState::Initialized | EscrowState::ConsumerDeposited) {
            return Err(EscrowError::WrongState(self.status));
        }
        if ctx.current_block >= self.deadline_block {
            return Err(EscrowError::DeadlinePassed);
        }
        let entry = self.internal_ledger.entry(ctx.caller).or_default();
        *entry = arith(entry.checked_add(ctx.value))?;
        self.deposits.push(ctx.value);
        self.escrow_charge = arith(self.escrow_charge.checked_add(ctx.value))?;
        self.status = EscrowState::ConsumerDeposited;
        Ok(Effects {
            events: alloc::vec![Event::Deposit {
                depositor: ctx.caller,
                amount: ctx.value,
            }],
            ..Effects::default()
        })
    }

    fn approve(&mut self, ctx: &CallContext) -> Result<Effects, EscrowError> {
        let is_provider = self.is_provider(&ctx.caller);
        if !is_provider && !self.is_consumer(&ctx.caller) {
            return Err(EscrowError::NotParty);
        }
        if self.status != EscrowState::ConsumerDeposited {
            return Err(EscrowError::WrongState(self.status));
        }
        if is_provider {
            self.provider_approval = true;
        } else {
            self.consumer_approval = true;
        }
        if !(self.provider_approval && self.consumer_approval) {
            return Ok(Effects::default());
        }

        self.status = EscrowState::ServiceApproved;
        let fee = arith(ctx.balance.percent_floor(self.fee_percent))?;
        let remaining = arith(ctx.balance.checked_sub(fee))?;
        self.fee_amount = fee;

        // payout bookkeeping mirrors the SafeMath updates in the contract
        let consumer = self.consumer.ok_or(EscrowError::NotParty)?;
        let provider = self.provider.ok_or(EscrowError::NotParty)?;
        let c = self.internal_ledger.entry(consumer).or_default();
        *c = arith(c.checked_sub(remaining))?;
        let p = self.internal_ledger.entry(provider).or_default();
        *p = arith(p.checked_add(remaining))?;

        self.status = EscrowState::EscrowComplete;
        self.provider_amount = remaining;
        Ok(Effects {
            payouts: alloc::vec![(self.authority, fee), (provider, remaining)],
            events: alloc::vec![Event::ServicePayment {
                block_no: ctx.mined_block,
                contract_balance: MoneyAmount::ZERO,
            }],
            destroyed: false,
        })
    }

    fn cancel(&mut self, ctx: &CallContext) -> Result<Effects, EscrowError> {
        let is_provider = self.is_provider(&ctx.caller);
        if !is_provider && !self.is_consumer(&ctx.caller) {
            return Err(EscrowError::NotParty);
        }
        if self.status != EscrowState::ConsumerDeposited {
            return Err(EscrowError::WrongState(self.status));
        }
        if ctx.current_block >= self.deadline_block {
            return Err(EscrowError::DeadlinePassed);
        }
        if is_provider {
            self.provider_cancel = true;
        } else {
            self.consumer_cancel = true;
        }
        if !(self.provider_cancel && self.consumer_cancel) {
            return Ok(Effects::default());
        }
        self.status = EscrowState::EscrowCancelled;
        let consumer = self.consumer.ok_or(EscrowError::NotParty)?;
        Ok(Effects {
            payouts: alloc::vec![(consumer, ctx.balance)],
            ..Effects::default()
        })
    }

    fn end(&mut self, ctx: &CallContext) -> Result<Effects, EscrowError> {
        if ctx.caller != self.authority {
            return Err(EscrowError::NotAuthority);
        }
        if !matches!(
            self.status,
            EscrowState::ServiceApproved | EscrowState::EscrowComplete | EscrowState::EscrowCancelled
        ) {
            return Err(EscrowError::WrongState(self.status));
        }
        Ok(Effects {
            payouts: alloc::vec![(self.authority, ctx.balance)],
            events: Vec::new(),
            destroyed: true,
        })
    }

    fn timeout_refund(&mut self, ctx: &CallContext) -> Result<Effects, EscrowError> {
        if !ctx.timeout_refund_enabled {
            return Err(EscrowError::ExtensionDisabled);
        }
        if !self.is_consumer(&ctx.caller) {
            return Err(EscrowError::NotConsumer);
        }
        if self.status != EscrowState::ConsumerDeposited {
            return Err(EscrowError::WrongState(self.status));
        }
        if ctx.current_block < self.deadline_block {
            return Err(EscrowError::DeadlineNotReached);
        }
        let fee = arith(ctx.balance.percent_floor(self.fee_percent))?;
        let refund = arith(ctx.balance.checked_sub(fee))?;
        self.fee_amount = fee;
        self.status = EscrowState::EscrowCancelled;
        let consumer = self.consumer.ok_or(EscrowError::NotConsumer)?;
        Ok(Effects {
            payouts: alloc::vec![(self.authority, fee), (consumer, refund)],
            ..Effects::default()
        })
    }

    /// Structural invariants that must hold between transactions.
    pub fn invariants_hold(&self) -> bool {
        let sum: Option<u128> = self
            .deposits
            .iter()
            .try_fold(0u128, |acc, d| acc.checked_add(d.base_units()));
        if sum != Some(self.escrow_charge.base_units()) {
            return false;
        }
        if self.status != EscrowState::UnInitialized
            && (self.provider == Some(self.authority) || self.consumer == Some(self.authority))
        {
            return false;
        }
        if self.status == EscrowState::EscrowComplete {
            let paid = self.fee_amount.base_units() + self.provider_amount.base_units();
            if paid != self.escrow_charge.base_units() {
                return false;
            }
            if !(self.provider_approval && self.consumer_approval) {
                return false;
            }
        }
        true
    }
}

/// Typed wrappers around [`Ledger::submit`] for the contract functions.
impl Ledger {
    /// Deploys a fresh escrow owned by `authority`; one mined transaction.
    pub fn deploy_escrow(&mut self, authority: AccountId) -> Result<(AccountId, TransactionReceipt), LedgerError> {
        let receipt = self.submit(Transaction::deploy(authority))?;
        let address = receipt.created.expect("deploy receipt carries the new address");
        Ok((address, receipt))
    }

    pub fn escrow_initialize(
        &mut self,
        caller: AccountId,
        contract: AccountId,
        provider: AccountId,
        consumer: AccountId,
        fee_percent: u32,
        deadline_block: u64,
    ) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(
            caller,
            contract,
            MoneyAmount::ZERO,
            EscrowCall::Initialize {
                provider,
                consumer,
                fee_percent,
                deadline_block,
            },
        ))
    }

    pub fn escrow_deposit(
        &mut self,
        caller: AccountId,
        contract: AccountId,
        value: MoneyAmount,
    ) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(caller, contract, value, EscrowCall::Deposit))
    }

    pub fn escrow_approve(
        &mut self,
        caller: AccountId,
        contract: AccountId,
    ) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(
            caller,
            contract,
            MoneyAmount::ZERO,
            EscrowCall::Approve,
        ))
    }

    pub fn escrow_cancel(&mut self, caller: AccountId, contract: AccountId) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(
            caller,
            contract,
            MoneyAmount::ZERO,
            EscrowCall::Cancel,
        ))
    }

    pub fn escrow_end(&mut self, caller: AccountId, contract: AccountId) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(caller, contract, MoneyAmount::ZERO, EscrowCall::End))
    }

    /// Opt-in refund after the deadline; see [`Ledger::set_timeout_refund`].
    pub fn escrow_timeout_refund(
        &mut self,
        caller: AccountId,
        contract: AccountId,
    ) -> Result<TransactionReceipt, LedgerError> {
        self.submit(Transaction::call(
            caller,
            contract,
            MoneyAmount::ZERO,
            EscrowCall::TimeoutRefund,
        ))
    }
}

impl Transaction {
    pub fn call(sender: AccountId, contract: AccountId, value: MoneyAmount, call: EscrowCall) -> Self {
        Transaction {
            sender,
            to: Some(contract),
            value,
            call: Call::Escrow(call),
        }
    }
}
