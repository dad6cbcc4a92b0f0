//! Round-based settlement ledger.
//!
//! A single writer produces rounds; every pooled transaction that becomes
//! eligible in a round runs access control, verification, settlement and
//! recording, in that order. A failed check yields a typed rejection and
//! leaves balances and global state untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TxnId = u64;
pub type Round = u64;

pub const GLOBAL_STATE_CSV_HEADER: &str = "hour,price_usd_per_mwh,timestamp_s,txn_id";
pub const LEDGER_REPORT_CSV_HEADER: &str = "metric,value";

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("account `{0}` is already registered")]
    DuplicateRegistration(String),
    #[error("unknown transaction {0}")]
    UnknownTransaction(TxnId),
    #[error("transaction {0} is not confirmed")]
    Pending(TxnId),
    #[error("invalid ledger configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Simulated,
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LedgerConfig {
    pub round_duration: f64,
    /// Rounds a transaction waits past its first valid round.
    pub extra_confirm_rounds: u64,
    /// Balance minted for each registered account, in micro-units.
    pub initial_balance: u64,
    pub price_min: f64,
    pub price_max: f64,
    /// Micro-units per dollar.
    pub micro_unit_scale: u64,
    pub clock: ClockMode,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            round_duration: 4.0,
            extra_confirm_rounds: 0,
            initial_balance: 1_000_000_000_000_000,
            price_min: 1.0,
            price_max: 1000.0,
            micro_unit_scale: 1_000_000,
            clock: ClockMode::Simulated,
        }
    }
}

impl LedgerConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if !(self.round_duration.is_finite() && self.round_duration > 0.0) {
            return Err(LedgerError::Config(format!("round_duration {} must be > 0", self.round_duration)));
        }
        if !(self.price_min.is_finite() && self.price_max.is_finite() && self.price_min <= self.price_max) {
            return Err(LedgerError::Config(format!(
                "price band [{}, {}] is empty",
                self.price_min, self.price_max
            )));
        }
        if self.micro_unit_scale == 0 {
            return Err(LedgerError::Config("micro_unit_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub account_id: String,
    pub balance: u64,
    pub registered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerifyFailure {
    PriceOutOfBand,
    NonPositiveQuantity,
    InvalidHour,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rejection {
    AccessDenied,
    VerificationFailed(VerifyFailure),
    DoubleSpend,
    InsufficientFunds,
}

impl Rejection {
    pub fn label(&self) -> &'static str {
        match self {
            Rejection::AccessDenied => "access_denied",
            Rejection::VerificationFailed(_) => "verification_failed",
            Rejection::DoubleSpend => "double_spend",
            Rejection::InsufficientFunds => "insufficient_funds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Confirmed,
    Rejected(Rejection),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Confirmed => f.write_str("confirmed"),
            Outcome::Rejected(r) => f.write_str(r.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTransaction {
    pub txn_id: TxnId,
    pub sender: String,
    pub receiver: String,
    pub hour: usize,
    pub price: f64,
    pub quantity: f64,
    pub first_valid_round: Round,
    pub confirmed_round: Option<Round>,
    pub submitted_at: f64,
    pub confirmed_at: Option<f64>,
    pub outcome: Option<Outcome>,
}

impl LedgerTransaction {
    /// (hour, sender, receiver): at most one settlement per key.
    pub fn trade_key(&self) -> TradeKey {
        (self.hour, self.sender.clone(), self.receiver.clone())
    }
}

pub type TradeKey = (usize, String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStateEntry {
    /// `price_<hour>`
    pub key: String,
    pub hour: usize,
    pub price: f64,
    pub timestamp: f64,
    pub writer_txn: TxnId,
}

/// Operation log; replaying it on a fresh ledger reproduces the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LedgerEvent {
    Register(String),
    Submit { sender: String, receiver: String, hour: usize, price: f64, quantity: f64 },
    AdvanceRound { timestamp: f64 },
}

#[derive(Debug, Clone)]
pub struct LedgerClock {
    pub round_duration: f64,
    pub current_round: Round,
    pub mode: ClockMode,
    round_timestamps: Vec<f64>,
    started: Instant,
}

impl LedgerClock {
    fn new(round_duration: f64, mode: ClockMode) -> Self {
        Self { round_duration, current_round: 0, mode, round_timestamps: vec![0.0], started: Instant::now() }
    }

    pub fn timestamp(&self, round: Round) -> Option<f64> {
        match self.mode {
            ClockMode::Simulated => Some(round as f64 * self.round_duration),
            ClockMode::WallClock => self.round_timestamps.get(round as usize).copied(),
        }
    }

    fn now(&self) -> f64 {
        match self.mode {
            ClockMode::Simulated => self.current_round as f64 * self.round_duration,
            ClockMode::WallClock => self.started.elapsed().as_secs_f64(),
        }
    }

    fn next_timestamp(&self) -> f64 {
        match self.mode {
            ClockMode::Simulated => (self.current_round + 1) as f64 * self.round_duration,
            ClockMode::WallClock => self.started.elapsed().as_secs_f64(),
        }
    }

    fn tick(&mut self, timestamp: f64) {
        self.current_round += 1;
        self.round_timestamps.push(timestamp);
    }
}

/// Submit / confirm / read boundary behind which a live chain client could
/// replace the in-process simulator.
pub trait SettlementAdapter {
    fn submit(&mut self, sender: &str, receiver: &str, hour: usize, price: f64, quantity: f64) -> TxnId;
    fn confirm(&mut self) -> Vec<(TxnId, Outcome)>;
    fn global_state(&self) -> &[GlobalStateEntry];
}

#[derive(Debug, Clone)]
pub struct Ledger {
    config: LedgerConfig,
    clock: LedgerClock,
    accounts: BTreeMap<String, Account>,
    txns: Vec<LedgerTransaction>,
    pool: Vec<TxnId>,
    settled: BTreeSet<TradeKey>,
    global_state: Vec<GlobalStateEntry>,
    events: Vec<LedgerEvent>,
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Result<Self, LedgerError> {
        config.validate()?;
        Ok(Self {
            clock: LedgerClock::new(config.round_duration, config.clock),
            config,
            accounts: BTreeMap::new(),
            txns: Vec::new(),
            pool: Vec::new(),
            settled: BTreeSet::new(),
            global_state: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn current_round(&self) -> Round {
        self.clock.current_round
    }

    pub fn clock(&self) -> &LedgerClock {
        &self.clock
    }

    pub fn account(&self, id: &str) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn total_balance(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    pub fn transaction(&self, id: TxnId) -> Option<&LedgerTransaction> {
        self.txns.get(id as usize)
    }

    pub fn transactions(&self) -> &[LedgerTransaction] {
        &self.txns
    }

    pub fn global_state(&self) -> &[GlobalStateEntry] {
        &self.global_state
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn pending(&self) -> usize {
        self.pool.len()
    }

    pub fn register(&mut self, account_id: &str) -> Result<Account, LedgerError> {
        if self.accounts.contains_key(account_id) {
            return Err(LedgerError::DuplicateRegistration(account_id.to_string()));
        }
        let account = Account {
            account_id: account_id.to_string(),
            balance: self.config.initial_balance,
            registered: true,
        };
        self.accounts.insert(account_id.to_string(), account.clone());
        self.events.push(LedgerEvent::Register(account_id.to_string()));
        Ok(account)
    }

    /// Pools a settlement with `first_valid_round = current_round + 1`.
    /// All checks run when the transaction is confirmed.
    pub fn submit_settlement(&mut self, sender: &str, receiver: &str, hour: usize, price: f64, quantity: f64) -> TxnId {
        let txn_id = self.txns.len() as TxnId;
        self.txns.push(LedgerTransaction {
            txn_id,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            hour,
            price,
            quantity,
            first_valid_round: self.clock.current_round + 1,
            confirmed_round: None,
            submitted_at: self.clock.now(),
            confirmed_at: None,
            outcome: None,
        });
        self.pool.push(txn_id);
        self.events.push(LedgerEvent::Submit {
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            hour,
            price,
            quantity,
        });
        txn_id
    }

    /// Produces the next round and confirms every eligible pooled
    /// transaction in submission order.
    pub fn advance_round(&mut self) -> Vec<(TxnId, Outcome)> {
        let ts = self.clock.next_timestamp();
        self.advance_round_at(ts)
    }

    /// Wall-clock mode: produces every round that is due by now.
    pub fn poll(&mut self) -> Vec<(TxnId, Outcome)> {
        let mut out = Vec::new();
        if self.clock.mode == ClockMode::WallClock {
            let due = (self.clock.started.elapsed().as_secs_f64() / self.clock.round_duration).floor() as Round;
            while self.clock.current_round < due {
                out.extend(self.advance_round());
            }
        }
        out
    }

    fn advance_round_at(&mut self, timestamp: f64) -> Vec<(TxnId, Outcome)> {
        self.clock.tick(timestamp);
        self.events.push(LedgerEvent::AdvanceRound { timestamp });
        let round = self.clock.current_round;
        let extra = self.config.extra_confirm_rounds;
        let (eligible, waiting): (Vec<TxnId>, Vec<TxnId>) = self
            .pool
            .iter()
            .partition(|&&id| self.txns[id as usize].first_valid_round + extra <= round);
        self.pool = waiting;

        let mut outcomes = Vec::with_capacity(eligible.len());
        for id in eligible {
            let outcome = match self.execute(id, timestamp) {
                Ok(()) => Outcome::Confirmed,
                Err(r) => Outcome::Rejected(r),
            };
            let txn = &mut self.txns[id as usize];
            txn.confirmed_round = Some(round);
            txn.confirmed_at = Some(timestamp);
            txn.outcome = Some(outcome);
            outcomes.push((id, outcome));
        }
        outcomes
    }

    fn execute(&mut self, id: TxnId, timestamp: f64) -> Result<(), Rejection> {
        let txn = &self.txns[id as usize];
        let registered = |who: &str| self.accounts.get(who).is_some_and(|a| a.registered);
        if !registered(&txn.sender) || !registered(&txn.receiver) {
            return Err(Rejection::AccessDenied);
        }

        if txn.hour >= 24 {
            return Err(Rejection::VerificationFailed(VerifyFailure::InvalidHour));
        }
        if !(txn.price > 0.0 && txn.price >= self.config.price_min && txn.price <= self.config.price_max) {
            return Err(Rejection::VerificationFailed(VerifyFailure::PriceOutOfBand));
        }
        if !(txn.quantity > 0.0 && txn.quantity.is_finite()) {
            return Err(Rejection::VerificationFailed(VerifyFailure::NonPositiveQuantity));
        }
        let key = txn.trade_key();
        if self.settled.contains(&key) {
            return Err(Rejection::DoubleSpend);
        }

        let amount = settlement_amount(txn.price, txn.quantity, self.config.micro_unit_scale);
        let sender_balance = self.accounts[&txn.sender].balance;
        if sender_balance < amount {
            return Err(Rejection::InsufficientFunds);
        }
        let receiver_balance = self.accounts[&txn.receiver].balance;
        if txn.sender != txn.receiver && receiver_balance.checked_add(amount).is_none() {
            return Err(Rejection::InsufficientFunds);
        }

        // All checks passed; mutate.
        let (sender, receiver, hour, price) = (txn.sender.clone(), txn.receiver.clone(), txn.hour, txn.price);
        self.accounts.get_mut(&sender).expect("checked").balance -= amount;
        self.accounts.get_mut(&receiver).expect("checked").balance += amount;
        self.settled.insert(key);
        self.global_state.push(GlobalStateEntry {
            key: format!("price_{hour}"),
            hour,
            price,
            timestamp,
            writer_txn: id,
        });
        Ok(())
    }

    pub fn transaction_latency(&self, id: TxnId) -> Result<f64, LedgerError> {
        let txn = self.transaction(id).ok_or(LedgerError::UnknownTransaction(id))?;
        let confirmed = txn.confirmed_round.ok_or(LedgerError::Pending(id))?;
        let t_confirm = self.clock.timestamp(confirmed).ok_or(LedgerError::Pending(id))?;
        // Wall-clock rounds may not reach the first valid round if confirmed in
        // the same round; fall back to the confirming timestamp.
        let t_first = self.clock.timestamp(txn.first_valid_round).unwrap_or(t_confirm);
        Ok(latency(t_first, t_confirm))
    }

    /// Latencies of transactions that settled successfully.
    pub fn confirmed_latencies(&self) -> Vec<f64> {
        self.txns
            .iter()
            .filter(|t| t.outcome == Some(Outcome::Confirmed))
            .map(|t| self.transaction_latency(t.txn_id).expect("confirmed"))
            .collect()
    }

    /// SHA-256 over balances, settled trade keys and global state.
    pub fn state_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for a in self.accounts.values() {
            h.update(a.account_id.as_bytes());
            h.update([0u8, a.registered as u8]);
            h.update(a.balance.to_le_bytes());
        }
        h.update(b"|settled|");
        for (hour, s, r) in &self.settled {
            h.update((*hour as u64).to_le_bytes());
            h.update(s.as_bytes());
            h.update([0u8]);
            h.update(r.as_bytes());
            h.update([0u8]);
        }
        h.update(b"|global|");
        for e in &self.global_state {
            h.update(e.key.as_bytes());
            h.update(e.price.to_bits().to_le_bytes());
            h.update(e.timestamp.to_bits().to_le_bytes());
            h.update(e.writer_txn.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Rebuilds a ledger by re-applying an event log.
    pub fn replay(config: LedgerConfig, events: &[LedgerEvent]) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(config)?;
        for e in events {
            match e {
                LedgerEvent::Register(id) => {
                    ledger.register(id)?;
                }
                LedgerEvent::Submit { sender, receiver, hour, price, quantity } => {
                    ledger.submit_settlement(sender, receiver, *hour, *price, *quantity);
                }
                LedgerEvent::AdvanceRound { timestamp } => {
                    ledger.advance_round_at(*timestamp);
                }
            }
        }
        Ok(ledger)
    }

    pub fn report(&self) -> LedgerReport {
        let mut rejected: BTreeMap<&'static str, usize> =
            ["access_denied", "verification_failed", "double_spend", "insufficient_funds"]
                .into_iter()
                .map(|k| (k, 0))
                .collect();
        let mut confirmed = 0;
        for t in &self.txns {
            match t.outcome {
                Some(Outcome::Confirmed) => confirmed += 1,
                Some(Outcome::Rejected(r)) => *rejected.entry(r.label()).or_insert(0) += 1,
                None => {}
            }
        }
        let latencies = self.confirmed_latencies();
        LedgerReport {
            submitted: self.txns.len(),
            confirmed,
            rejected,
            pending: self.pool.len(),
            avg_latency_s: mean(&latencies),
            throughput_txn_per_s: throughput(&latencies),
            global_state: self.global_state.clone(),
        }
    }
}

impl SettlementAdapter for Ledger {
    fn submit(&mut self, sender: &str, receiver: &str, hour: usize, price: f64, quantity: f64) -> TxnId {
        self.submit_settlement(sender, receiver, hour, price, quantity)
    }

    fn confirm(&mut self) -> Vec<(TxnId, Outcome)> {
        self.advance_round()
    }

    fn global_state(&self) -> &[GlobalStateEntry] {
        &self.global_state
    }
}

/// Thread-safe handle: any thread may submit, rounds are produced under the
/// same lock so there is a single logical writer.
#[derive(Debug, Clone)]
pub struct SharedLedger(Arc<Mutex<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        Self(Arc::new(Mutex::new(ledger)))
    }

    pub fn submit_settlement(&self, sender: &str, receiver: &str, hour: usize, price: f64, quantity: f64) -> TxnId {
        self.0.lock().expect("ledger lock").submit_settlement(sender, receiver, hour, price, quantity)
    }

    pub fn advance_round(&self) -> Vec<(TxnId, Outcome)> {
        self.0.lock().expect("ledger lock").advance_round()
    }

    pub fn with<R>(&self, f: impl FnOnce(&Ledger) -> R) -> R {
        f(&self.0.lock().expect("ledger lock"))
    }
}

/// Debit amount in micro-units, rounded half to even.
pub fn settlement_amount(price: f64, quantity: f64, micro_unit_scale: u64) -> u64 {
    let v = (price * quantity * micro_unit_scale as f64).round_ties_even();
    if v <= 0.0 {
        0
    } else if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}

/// Confirmation timestamp minus first-valid timestamp.
pub fn latency(first_valid_ts: f64, confirmed_ts: f64) -> f64 {
    confirmed_ts - first_valid_ts
}

/// Transactions per second: count over mean latency. Zero for an empty set;
/// infinite when every latency is zero.
pub fn throughput(latencies: &[f64]) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    let avg = mean(latencies);
    if avg == 0.0 {
        f64::INFINITY
    } else {
        latencies.len() as f64 / avg
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    pub submitted: usize,
    pub confirmed: usize,
    pub rejected: BTreeMap<&'static str, usize>,
    pub pending: usize,
    pub avg_latency_s: f64,
    pub throughput_txn_per_s: f64,
    pub global_state: Vec<GlobalStateEntry>,
}

impl LedgerReport {
    pub fn empty() -> Self {
        Ledger::new(LedgerConfig::default()).expect("default config").report()
    }

    /// `metric,value` rows: counts, then average latency and throughput.
    pub fn summary_csv(&self) -> String {
        let mut s = format!("{LEDGER_REPORT_CSV_HEADER}\n");
        s.push_str(&format!("submitted,{}\n", self.submitted));
        s.push_str(&format!("confirmed,{}\n", self.confirmed));
        for (k, v) in &self.rejected {
            s.push_str(&format!("rejected_{k},{v}\n"));
        }
        s.push_str(&format!("pending,{}\n", self.pending));
        s.push_str(&format!("avg_latency_s,{:.6}\n", self.avg_latency_s));
        s.push_str(&format!("throughput_txn_per_s,{:.6}\n", self.throughput_txn_per_s));
        s
    }

    pub fn global_state_csv(&self) -> String {
        let mut s = format!("{GLOBAL_STATE_CSV_HEADER}\n");
        for e in &self.global_state {
            s.push_str(&format!("{},{:.6},{:.6},{}\n", e.hour, e.price, e.timestamp, e.writer_txn));
        }
        s
    }

    /// Writes `ledger_report.csv` and `global_state.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), LedgerError> {
        let io = |e: std::io::Error| LedgerError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("ledger_report.csv"), self.summary_csv()).map_err(io)?;
        fs::write(dir.join("global_state.csv"), self.global_state_csv()).map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger_with(ids: &[&str]) -> Ledger {
        let mut l = Ledger::new(LedgerConfig::default()).unwrap();
        for id in ids {
            l.register(id).unwrap();
        }
        l
    }

    #[test]
    fn registration() {
        let mut l = ledger_with(&[]);
        let a = l.register("alice").unwrap();
        assert!(a.registered);
        assert_eq!(a.balance, LedgerConfig::default().initial_balance);
        let before = l.state_hash();
        assert_eq!(l.register("alice"), Err(LedgerError::DuplicateRegistration("alice".into())));
        assert_eq!(before, l.state_hash());
    }

    #[test]
    fn first_valid_is_next_round() {
        let mut l = ledger_with(&["a", "b"]);
        for _ in 0..10 {
            l.advance_round();
        }
        let id = l.submit_settlement("a", "b", 3, 20.0, 1.0);
        assert_eq!(l.transaction(id).unwrap().first_valid_round, 11);
    }

    #[test]
    fn ids_are_unique_even_for_identical_content() {
        let mut l = ledger_with(&["a", "b"]);
        let ids: BTreeSet<TxnId> = (0..203).map(|_| l.submit_settlement("a", "b", 1, 20.0, 1.0)).collect();
        assert_eq!(ids.len(), 203);
    }

    #[test]
    fn settlement_conserves_tokens() {
        let mut l = ledger_with(&["load", "pool"]);
        let total = l.total_balance();
        let id = l.submit_settlement("load", "pool", 5, 25.5, 10.0);
        let out = l.advance_round();
        assert_eq!(out, vec![(id, Outcome::Confirmed)]);
        assert_eq!(l.total_balance(), total);
        let paid = settlement_amount(25.5, 10.0, 1_000_000);
        assert_eq!(paid, 255_000_000);
        assert_eq!(l.account("pool").unwrap().balance, LedgerConfig::default().initial_balance + paid);
        assert_eq!(l.global_state().len(), 1);
        assert_eq!(l.global_state()[0].key, "price_5");
        assert_eq!(l.global_state()[0].timestamp, 4.0);
    }

    #[test]
    fn double_spend_rejected_without_mutation() {
        let mut l = ledger_with(&["load", "pool"]);
        l.submit_settlement("load", "pool", 7, 30.0, 5.0);
        l.advance_round();
        let before = l.state_hash();
        let id = l.submit_settlement("load", "pool", 7, 30.0, 5.0);
        assert_eq!(l.advance_round(), vec![(id, Outcome::Rejected(Rejection::DoubleSpend))]);
        assert_eq!(before, l.state_hash());
    }

    #[test]
    fn access_and_verification() {
        let mut l = ledger_with(&["load", "pool"]);
        let a = l.submit_settlement("mallory", "pool", 1, 30.0, 5.0);
        let b = l.submit_settlement("load", "pool", 2, 0.0, 5.0);
        let c = l.submit_settlement("load", "pool", 3, 30.0, 0.0);
        let d = l.submit_settlement("load", "pool", 4, 5000.0, 1.0);
        let before = l.state_hash();
        let out: BTreeMap<TxnId, Outcome> = l.advance_round().into_iter().collect();
        assert_eq!(out[&a], Outcome::Rejected(Rejection::AccessDenied));
        assert_eq!(out[&b], Outcome::Rejected(Rejection::VerificationFailed(VerifyFailure::PriceOutOfBand)));
        assert_eq!(out[&c], Outcome::Rejected(Rejection::VerificationFailed(VerifyFailure::NonPositiveQuantity)));
        assert_eq!(out[&d], Outcome::Rejected(Rejection::VerificationFailed(VerifyFailure::PriceOutOfBand)));
        assert_eq!(before, l.state_hash());
    }

    #[test]
    fn insufficient_funds() {
        let config = LedgerConfig { initial_balance: 10, ..Default::default() };
        let mut l = Ledger::new(config).unwrap();
        l.register("a").unwrap();
        l.register("b").unwrap();
        let id = l.submit_settlement("a", "b", 0, 10.0, 1.0);
        assert_eq!(l.advance_round(), vec![(id, Outcome::Rejected(Rejection::InsufficientFunds))]);
    }

    #[test]
    fn latency_examples() {
        assert!((latency(98.69, 100.0) - 1.31).abs() < 1e-9);

        let mut l = ledger_with(&["a", "b"]);
        let id = l.submit_settlement("a", "b", 0, 10.0, 1.0);
        assert_eq!(l.transaction_latency(id), Err(LedgerError::Pending(id)));
        l.advance_round();
        assert_eq!(l.transaction_latency(id).unwrap(), 0.0);

        let config = LedgerConfig { extra_confirm_rounds: 1, ..Default::default() };
        let mut l = Ledger::new(config).unwrap();
        l.register("a").unwrap();
        l.register("b").unwrap();
        let id = l.submit_settlement("a", "b", 0, 10.0, 1.0);
        assert!(l.advance_round().is_empty());
        l.advance_round();
        assert_eq!(l.transaction_latency(id).unwrap(), 4.0);
        assert_eq!(l.transaction_latency(99), Err(LedgerError::UnknownTransaction(99)));
    }

    #[test]
    fn throughput_examples() {
        let lat = vec![1.3054; 203];
        assert!((throughput(&lat) - 155.51).abs() < 0.01);
        assert_eq!(throughput(&[2.0; 100]), 50.0);
        assert_eq!(throughput(&[]), 0.0);
        assert!(throughput(&[0.0, 0.0]).is_infinite());
    }

    #[test]
    fn fresh_report_is_zero() {
        let r = LedgerReport::empty();
        assert_eq!(r.submitted, 0);
        assert_eq!(r.confirmed, 0);
        assert!(r.rejected.values().all(|&v| v == 0));
        assert_eq!(r.avg_latency_s, 0.0);
        assert_eq!(r.throughput_txn_per_s, 0.0);
        assert_eq!(r.global_state_csv().lines().count(), 1);
    }

    #[test]
    fn replay_reproduces_state() {
        let mut l = ledger_with(&["a", "b", "c"]);
        l.submit_settlement("a", "b", 1, 10.0, 3.0);
        l.submit_settlement("x", "b", 1, 10.0, 3.0);
        l.advance_round();
        l.submit_settlement("b", "c", 2, 11.0, 3.0);
        l.submit_settlement("a", "b", 1, 10.0, 3.0);
        l.advance_round();
        let r = Ledger::replay(l.config().clone(), l.events()).unwrap();
        assert_eq!(r.state_hash(), l.state_hash());
        assert_eq!(r.transactions(), l.transactions());
    }

    #[test]
    fn shared_handle_accepts_concurrent_submissions() {
        let shared = SharedLedger::new(ledger_with(&["a", "b"]));
        std::thread::scope(|s| {
            for t in 0..4 {
                let h = shared.clone();
                s.spawn(move || {
                    for hour in 0..6 {
                        h.submit_settlement("a", "b", t * 6 + hour, 20.0, 1.0);
                    }
                });
            }
        });
        let out = shared.advance_round();
        assert_eq!(out.len(), 24);
        assert!(out.iter().all(|(_, o)| *o == Outcome::Confirmed));
        assert_eq!(shared.with(|l| l.global_state().len()), 24);
    }

    #[test]
    fn wall_clock_poll_produces_due_rounds() {
        let config = LedgerConfig { round_duration: 0.01, clock: ClockMode::WallClock, ..Default::default() };
        let mut l = Ledger::new(config).unwrap();
        l.register("a").unwrap();
        l.register("b").unwrap();
        let id = l.submit_settlement("a", "b", 0, 10.0, 1.0);
        std::thread::sleep(std::time::Duration::from_millis(30));
        let out = l.poll();
        assert!(l.current_round() >= 2);
        assert_eq!(out, vec![(id, Outcome::Confirmed)]);
        assert!(l.transaction_latency(id).unwrap() >= 0.0);
    }
}
