//! Simulated single-chain ledger.
//!
//! Accounts hold [`MoneyAmount`] balances, contract accounts additionally
//! hold an [`EscrowContract`]. Every mined transaction (successful or
//! reverted) occupies exactly one block, so the block counter doubles as the
//! service-time clock the escrow deadlines are measured against.
//!
//! Precondition failures (unknown account, insufficient funds, malformed
//! transaction) are rejected without mining. Contract reverts are mined: the
//! block advances and the receipt is returned inside
//! [`LedgerError::Reverted`], with every balance and contract field left as
//! it was.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::escrow::{CallContext, EscrowCall, EscrowContract, EscrowError, Event};
use crate::money::MoneyAmount;

fn write_hex(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    for b in bytes {
        write!(f, "{:02x}", b)?;
    }
    Ok(())
}

fn parse_hex<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    if s.len() != 2 * N {
        return Err(HexError::Length(s.len()));
    }
    let mut out = [0u8; N];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let text = core::str::from_utf8(chunk).map_err(|_| HexError::Digit)?;
        out[i] = u8::from_str_radix(text, 16).map_err(|_| HexError::Digit)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("wrong hex length {0}")]
    Length(usize),
    #[error("invalid hex digit")]
    Digit,
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write_hex(f, &self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(concat!(stringify!($name), "("))?;
                write_hex(f, &self.0)?;
                f.write_str(")")
            }
        }

        impl FromStr for $name {
            type Err = HexError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_hex::<$len>(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// 20-byte account address, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId([u8; 20]);

impl AccountId {
    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        AccountId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

hex_newtype!(AccountId, 20);

/// SHA-256 digest of a transaction's canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxHash([u8; 32]);

impl TxHash {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

hex_newtype!(TxHash, 32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Call {
    /// Plain value transfer.
    Transfer,
    /// Creates a new escrow contract owned by the sender.
    Deploy,
    Escrow(EscrowCall),
}

/// Short name of a call, used in receipts and journals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Transfer,
    Deploy,
    Initialize,
    Deposit,
    Approve,
    Cancel,
    End,
    TimeoutRefund,
}

impl Call {
    pub fn kind(&self) -> CallKind {
        match self {
            Call::Transfer => CallKind::Transfer,
            Call::Deploy => CallKind::Deploy,
            Call::Escrow(EscrowCall::Initialize { .. }) => CallKind::Initialize,
            Call::Escrow(EscrowCall::Deposit) => CallKind::Deposit,
            Call::Escrow(EscrowCall::Approve) => CallKind::Approve,
            Call::Escrow(EscrowCall::Cancel) => CallKind::Cancel,
            Call::Escrow(EscrowCall::End) => CallKind::End,
            Call::Escrow(EscrowCall::TimeoutRefund) => CallKind::TimeoutRefund,
        }
    }
}

/// An intent to move value and/or call a contract. `to` is `None` only for
/// [`Call::Deploy`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: AccountId,
    pub to: Option<AccountId>,
    pub value: MoneyAmount,
    pub call: Call,
}

impl Transaction {
    pub fn transfer(sender: AccountId, to: AccountId, value: MoneyAmount) -> Self {
        Transaction {
            sender,
            to: Some(to),
            value,
            call: Call::Transfer,
        }
    }

    pub fn deploy(sender: AccountId) -> Self {
        Transaction {
            sender,
            to: None,
            value: MoneyAmount::ZERO,
            call: Call::Deploy,
        }
    }

    /// Fixed byte layout hashed into the receipt:
    /// `block_no(8 BE) | sender(20) | has_to(1) to(20) | value(16 BE) | tag(1) | args`.
    pub fn encode(&self, block_no: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        out.extend_from_slice(&block_no.to_be_bytes());
        out.extend_from_slice(self.sender.as_bytes());
        match &self.to {
            Some(to) => {
                out.push(1);
                out.extend_from_slice(to.as_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&[0u8; 20]);
            }
        }
        out.extend_from_slice(&self.value.base_units().to_be_bytes());
        out.push(self.call.kind() as u8);
        if let Call::Escrow(EscrowCall::Initialize {
            provider,
            consumer,
            fee_percent,
            deadline_block,
        }) = &self.call
        {
            out.extend_from_slice(provider.as_bytes());
            out.extend_from_slice(consumer.as_bytes());
            out.extend_from_slice(&fee_percent.to_be_bytes());
            out.extend_from_slice(&deadline_block.to_be_bytes());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Success,
    Reverted(EscrowError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionReceipt {
    pub block_no: u64,
    pub tx_hash: TxHash,
    pub sender: AccountId,
    pub to: Option<AccountId>,
    pub call: CallKind,
    pub value: MoneyAmount,
    pub status: TxStatus,
    /// Address of the contract created by a deploy.
    pub created: Option<AccountId>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("insufficient funds in {account}: balance {balance}, needed {needed}")]
    InsufficientFunds {
        account: AccountId,
        balance: MoneyAmount,
        needed: MoneyAmount,
    },
    #[error("{0} is not a contract account")]
    NotAContract(AccountId),
    #[error("malformed transaction: {0}")]
    Malformed(&'static str),
    #[error("transaction reverted in block {}: {reason}", receipt.block_no)]
    Reverted {
        receipt: Box<TransactionReceipt>,
        reason: EscrowError,
    },
}

impl LedgerError {
    /// The mined receipt of a reverted transaction.
    pub fn receipt(&self) -> Option<&TransactionReceipt> {
        match self {
            LedgerError::Reverted { receipt, .. } => Some(receipt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, MoneyAmount>,
    contracts: BTreeMap<AccountId, EscrowContract>,
    current_block: u64,
    nonce: u64,
    timeout_refund: bool,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Ledger {
            accounts: BTreeMap::new(),
            contracts: BTreeMap::new(),
            current_block: 0,
            nonce: 0,
            timeout_refund: false,
        }
    }

    /// Enables the escrow `timeout_refund` extension for every contract.
    pub fn set_timeout_refund(&mut self, enabled: bool) {
        self.timeout_refund = enabled;
    }

    pub fn timeout_refund_enabled(&self) -> bool {
        self.timeout_refund
    }

    fn fresh_id(&mut self, domain: &[u8], salt: &[u8]) -> AccountId {
        loop {
            self.nonce += 1;
            let mut hasher = Sha256::new();
            hasher.update(domain);
            hasher.update(salt);
            hasher.update(self.nonce.to_be_bytes());
            let digest = hasher.finalize();
            let mut id = [0u8; 20];
            id.copy_from_slice(&digest[..20]);
            let id = AccountId(id);
            if !self.accounts.contains_key(&id) {
                return id;
            }
        }
    }

    /// Creates an account holding `initial_balance`. Not a transaction: the
    /// block counter is unchanged.
    pub fn create_account(&mut self, initial_balance: MoneyAmount) -> AccountId {
        let id = self.fresh_id(b"smartson/account", &[]);
        self.accounts.insert(id, initial_balance);
        id
    }

    pub fn balance_of(&self, account: &AccountId) -> Result<MoneyAmount, LedgerError> {
        self.accounts
            .get(account)
            .copied()
            .ok_or(LedgerError::UnknownAccount(*account))
    }

    pub fn current_block(&self) -> u64 {
        self.current_block
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.accounts.contains_key(account)
    }

    pub fn contract(&self, address: &AccountId) -> Option<&EscrowContract> {
        self.contracts.get(address)
    }

    pub fn contracts(&self) -> impl Iterator<Item = (&AccountId, &EscrowContract)> {
        self.contracts.iter()
    }

    /// Accounts in address order.
    pub fn accounts(&self) -> impl Iterator<Item = (&AccountId, &MoneyAmount)> {
        self.accounts.iter()
    }

    /// Sum of all balances, contract accounts included.
    pub fn total_supply(&self) -> MoneyAmount {
        self.accounts.values().copied().sum()
    }

    /// Applies one transaction in the ledger's total order.
    pub fn submit(&mut self, tx: Transaction) -> Result<TransactionReceipt, LedgerError> {
        let sender_balance = self.balance_of(&tx.sender)?;
        match (&tx.call, &tx.to) {
            (Call::Deploy, Some(_)) => return Err(LedgerError::Malformed("deploy with a target")),
            (Call::Deploy, None) => {}
            (_, None) => return Err(LedgerError::Malformed("missing target")),
            (_, Some(to)) => {
                if !self.accounts.contains_key(to) {
                    return Err(LedgerError::UnknownAccount(*to));
                }
            }
        }
        if sender_balance < tx.value {
            return Err(LedgerError::InsufficientFunds {
                account: tx.sender,
                balance: sender_balance,
                needed: tx.value,
            });
        }
        if let (Call::Escrow(_), Some(to)) = (&tx.call, &tx.to) {
            if !self.contracts.contains_key(to) {
                return Err(LedgerError::NotAContract(*to));
            }
        }

        let mined_block = self.current_block + 1;
        let tx_hash = TxHash(Sha256::digest(tx.encode(mined_block)).into());
        let outcome = self.execute(&tx, mined_block);
        self.current_block = mined_block;

        let mut receipt = TransactionReceipt {
            block_no: mined_block,
            tx_hash,
            sender: tx.sender,
            to: tx.to,
            call: tx.call.kind(),
            value: tx.value,
            status: TxStatus::Success,
            created: None,
            events: Vec::new(),
        };
        match outcome {
            Ok((created, events)) => {
                receipt.created = created;
                receipt.events = events;
                Ok(receipt)
            }
            Err(reason) => {
                receipt.status = TxStatus::Reverted(reason.clone());
                Err(LedgerError::Reverted {
                    receipt: Box::new(receipt),
                    reason,
                })
            }
        }
    }

    /// State changes of a transaction that passed precondition checks.
    /// Returns without touching state on revert.
    fn execute(&mut self, tx: &Transaction, mined_block: u64) -> Result<(Option<AccountId>, Vec<Event>), EscrowError> {
        match &tx.call {
            Call::Transfer => {
                let to = tx.to.expect("checked in submit");
                if self.contracts.contains_key(&to) {
                    return Err(EscrowError::Fallback);
                }
                self.move_value(&tx.sender, &to, tx.value)?;
                Ok((None, Vec::new()))
            }
            Call::Deploy => {
                if !tx.value.is_zero() {
                    return Err(EscrowError::NonPayable);
                }
                let address = self.fresh_id(b"smartson/contract", tx.sender.as_bytes());
                self.accounts.insert(address, MoneyAmount::ZERO);
                self.contracts.insert(address, EscrowContract::new(tx.sender));
                Ok((Some(address), Vec::new()))
            }
            Call::Escrow(call) => {
                let address = tx.to.expect("checked in submit");
                let mut contract = self.contracts[&address].clone();
                let held = self.accounts[&address];
                let balance = held.checked_add(tx.value).map_err(|_| EscrowError::Arithmetic)?;
                let ctx = CallContext {
                    caller: tx.sender,
                    value: tx.value,
                    current_block: self.current_block,
                    mined_block,
                    balance,
                    timeout_refund_enabled: self.timeout_refund,
                };
                let effects = contract.execute(call, &ctx)?;

                let mut paid = MoneyAmount::ZERO;
                for (account, amount) in &effects.payouts {
                    if !self.accounts.contains_key(account) {
                        return Err(EscrowError::Arithmetic);
                    }
                    paid = paid.checked_add(*amount).map_err(|_| EscrowError::Arithmetic)?;
                }
                let residual = balance.checked_sub(paid).map_err(|_| EscrowError::Arithmetic)?;
                if effects.destroyed && !residual.is_zero() {
                    return Err(EscrowError::Arithmetic);
                }

                // commit; nothing below can fail
                self.move_value(&tx.sender, &address, tx.value)?;
                for (account, amount) in &effects.payouts {
                    self.move_value(&address, account, *amount)?;
                }
                if effects.destroyed {
                    self.contracts.remove(&address);
                    self.accounts.remove(&address);
                } else {
                    self.contracts.insert(address, contract);
                }
                Ok((None, effects.events))
            }
        }
    }

    fn move_value(&mut self, from: &AccountId, to: &AccountId, value: MoneyAmount) -> Result<(), EscrowError> {
        if from == to || value.is_zero() {
            return Ok(());
        }
        let debited = self.accounts[from]
            .checked_sub(value)
            .map_err(|_| EscrowError::Arithmetic)?;
        let credited = self.accounts[to]
            .checked_add(value)
            .map_err(|_| EscrowError::Arithmetic)?;
        self.accounts.insert(*from, debited);
        self.accounts.insert(*to, credited);
        Ok(())
    }
}
