//! Platform tokens: minting on join, review bids with escrow, bounties on
//! research questions, and idea adoption.
//!
//! Token amounts are integers and every operation is a transfer between
//! accounts (including the platform reward pool), so the total held always
//! equals `mint_per_join * joins`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ItemId, UserId};

pub type Tokens = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("user {0} already has an account")]
    DuplicateAccount(UserId),
    #[error("user {0} has no account")]
    UnknownAccount(UserId),
    #[error("user {user} holds {available} tokens, {needed} needed")]
    InsufficientBalance {
        user: UserId,
        available: Tokens,
        needed: Tokens,
    },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("bid {0} has no open slots")]
    BidExhausted(u64),
    #[error("user {0} cannot trade with themselves")]
    SelfDealing(UserId),
    #[error("bounty {0} is closed")]
    BountyClosed(u64),
    #[error("rating total {total} is below the threshold {threshold}")]
    BelowThreshold { total: f64, threshold: f64 },
    #[error("unknown bid {0}")]
    UnknownBid(u64),
    #[error("unknown bounty {0}")]
    UnknownBounty(u64),
    #[error("id {0} is already in use")]
    DuplicateId(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenConfig {
    pub mint_per_join: Tokens,
    /// Minimum report rating total for a review to be paid.
    pub satisfactory_threshold: f64,
    /// Minimum item rating total for a bounty claim.
    pub claim_threshold: f64,
    /// Tokens per unit of accuracy score.
    pub tokens_per_score: f64,
}

impl Default for TokenConfig {
    fn default() -> Self {
        Self {
            mint_per_join: 100,
            satisfactory_threshold: 0.0,
            claim_threshold: 1.0,
            tokens_per_score: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Account {
    pub available: Tokens,
    pub escrowed: Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidStatus {
    Open,
    Exhausted,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBid {
    pub id: u64,
    pub item: ItemId,
    pub buyer: UserId,
    pub amount: Tokens,
    pub remaining_slots: u32,
    pub status: BidStatus,
}

impl ReviewBid {
    fn escrow(&self) -> Tokens {
        match self.status {
            BidStatus::Open => self.amount * self.remaining_slots as Tokens,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BountyStatus {
    Open,
    Claimed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounty {
    pub id: u64,
    pub question: String,
    pub sponsor: UserId,
    pub amount: Tokens,
    pub status: BountyStatus,
    pub claimant: Option<UserId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adoption {
    pub adopter: UserId,
    pub author: UserId,
    pub item: ItemId,
    pub price: Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewOutcome {
    Paid(Tokens),
    /// Report below the satisfactory threshold: escrow kept, slot still open.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenLedger {
    config: TokenConfig,
    accounts: BTreeMap<UserId, Account>,
    /// Platform reward pool, funded by accuracy penalties and donations.
    pool: Tokens,
    joins: u64,
    bids: BTreeMap<u64, ReviewBid>,
    bounties: BTreeMap<u64, Bounty>,
    adoptions: Vec<Adoption>,
}

impl TokenLedger {
    pub fn new(config: TokenConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &TokenConfig {
        &self.config
    }

    pub fn account(&self, user: UserId) -> Option<&Account> {
        self.accounts.get(&user)
    }

    pub fn accounts(&self) -> &BTreeMap<UserId, Account> {
        &self.accounts
    }

    pub fn bid(&self, id: u64) -> Option<&ReviewBid> {
        self.bids.get(&id)
    }

    pub fn bounty(&self, id: u64) -> Option<&Bounty> {
        self.bounties.get(&id)
    }

    pub fn adoptions(&self) -> &[Adoption] {
        &self.adoptions
    }

    pub fn pool(&self) -> Tokens {
        self.pool
    }

    pub fn joins(&self) -> u64 {
        self.joins
    }

    /// Tokens issued so far.
    pub fn supply(&self) -> Tokens {
        self.config.mint_per_join * self.joins
    }

    /// Everything held: accounts (available + escrowed) plus the pool.
    pub fn holdings(&self) -> Tokens {
        self.pool
            + self
                .accounts
                .values()
                .map(|a| a.available + a.escrowed)
                .sum::<Tokens>()
    }

    /// Conservation and escrow accounting; `Err` names the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.holdings() != self.supply() {
            return Err(format!(
                "holdings {} differ from supply {}",
                self.holdings(),
                self.supply()
            ));
        }
        let mut owed: BTreeMap<UserId, Tokens> = BTreeMap::new();
        for bid in self.bids.values() {
            *owed.entry(bid.buyer).or_default() += bid.escrow();
        }
        for b in self.bounties.values().filter(|b| b.status == BountyStatus::Open) {
            *owed.entry(b.sponsor).or_default() += b.amount;
        }
        for (user, account) in &self.accounts {
            let expected = owed.get(user).copied().unwrap_or(0);
            if account.escrowed != expected {
                return Err(format!(
                    "user {user} escrows {} but open obligations total {expected}",
                    account.escrowed
                ));
            }
        }
        Ok(())
    }

    fn account_mut(&mut self, user: UserId) -> Result<&mut Account, TokenError> {
        self.accounts.get_mut(&user).ok_or(TokenError::UnknownAccount(user))
    }

    fn require_available(&self, user: UserId, needed: Tokens) -> Result<(), TokenError> {
        let account = self.accounts.get(&user).ok_or(TokenError::UnknownAccount(user))?;
        if account.available < needed {
            return Err(TokenError::InsufficientBalance {
                user,
                available: account.available,
                needed,
            });
        }
        Ok(())
    }

    pub fn mint_on_join(&mut self, user: UserId) -> Result<(), TokenError> {
        if self.accounts.contains_key(&user) {
            return Err(TokenError::DuplicateAccount(user));
        }
        self.accounts.insert(
            user,
            Account {
                available: self.config.mint_per_join,
                escrowed: 0,
            },
        );
        self.joins += 1;
        Ok(())
    }

    /// Escrows `amount * slots` from the buyer for up to `slots` paid reviews.
    pub fn place_review_bid(
        &mut self,
        id: u64,
        buyer: UserId,
        item: ItemId,
        amount: Tokens,
        slots: u32,
    ) -> Result<&ReviewBid, TokenError> {
        if self.bids.contains_key(&id) {
            return Err(TokenError::DuplicateId(id));
        }
        if amount == 0 || slots == 0 {
            return Err(TokenError::InvalidPayload(
                "bid amount and slot count must be positive".into(),
            ));
        }
        let total = amount
            .checked_mul(slots as Tokens)
            .ok_or_else(|| TokenError::InvalidPayload("bid total overflows".into()))?;
        self.require_available(buyer, total)?;
        let account = self.account_mut(buyer)?;
        account.available -= total;
        account.escrowed += total;
        self.bids.insert(
            id,
            ReviewBid {
                id,
                item,
                buyer,
                amount,
                remaining_slots: slots,
                status: BidStatus::Open,
            },
        );
        Ok(&self.bids[&id])
    }

    /// Cancels an open bid and returns the unspent escrow to the buyer.
    pub fn cancel_bid(&mut self, id: u64, requester: UserId) -> Result<Tokens, TokenError> {
        let bid = self.bids.get(&id).ok_or(TokenError::UnknownBid(id))?;
        if bid.buyer != requester {
            return Err(TokenError::InvalidPayload(format!(
                "only the buyer can cancel bid {id}"
            )));
        }
        if bid.status != BidStatus::Open {
            return Err(TokenError::BidExhausted(id));
        }
        let refund = bid.escrow();
        let buyer = bid.buyer;
        let account = self.account_mut(buyer)?;
        account.escrowed -= refund;
        account.available += refund;
        self.bids.get_mut(&id).expect("checked above").status = BidStatus::Cancelled;
        Ok(refund)
    }

    /// Pays one bid slot to `reviewer` when the report is satisfactory.
    pub fn fulfill_review(
        &mut self,
        id: u64,
        reviewer: UserId,
        report_rating_total: f64,
    ) -> Result<ReviewOutcome, TokenError> {
        let bid = self.bids.get(&id).ok_or(TokenError::UnknownBid(id))?;
        if bid.status != BidStatus::Open || bid.remaining_slots == 0 {
            return Err(TokenError::BidExhausted(id));
        }
        if reviewer == bid.buyer {
            return Err(TokenError::SelfDealing(reviewer));
        }
        if !self.accounts.contains_key(&reviewer) {
            return Err(TokenError::UnknownAccount(reviewer));
        }
        if report_rating_total < self.config.satisfactory_threshold {
            return Ok(ReviewOutcome::Rejected);
        }
        let (buyer, amount) = (bid.buyer, bid.amount);
        self.account_mut(buyer)?.escrowed -= amount;
        self.account_mut(reviewer)?.available += amount;
        let bid = self.bids.get_mut(&id).expect("checked above");
        bid.remaining_slots -= 1;
        if bid.remaining_slots == 0 {
            bid.status = BidStatus::Exhausted;
        }
        Ok(ReviewOutcome::Paid(amount))
    }

    pub fn post_bounty(
        &mut self,
        id: u64,
        sponsor: UserId,
        question: impl Into<String>,
        amount: Tokens,
    ) -> Result<&Bounty, TokenError> {
        if self.bounties.contains_key(&id) {
            return Err(TokenError::DuplicateId(id));
        }
        if amount == 0 {
            return Err(TokenError::InvalidPayload("bounty amount must be positive".into()));
        }
        self.require_available(sponsor, amount)?;
        let account = self.account_mut(sponsor)?;
        account.available -= amount;
        account.escrowed += amount;
        self.bounties.insert(
            id,
            Bounty {
                id,
                question: question.into(),
                sponsor,
                amount,
                status: BountyStatus::Open,
                claimant: None,
            },
        );
        Ok(&self.bounties[&id])
    }

    /// Releases a bounty to `claimant` whose item scored at or above the claim threshold.
    pub fn claim_bounty(
        &mut self,
        id: u64,
        claimant: UserId,
        item_rating_total: f64,
    ) -> Result<Tokens, TokenError> {
        let bounty = self.bounties.get(&id).ok_or(TokenError::UnknownBounty(id))?;
        if bounty.status != BountyStatus::Open {
            return Err(TokenError::BountyClosed(id));
        }
        if claimant == bounty.sponsor {
            return Err(TokenError::SelfDealing(claimant));
        }
        if !self.accounts.contains_key(&claimant) {
            return Err(TokenError::UnknownAccount(claimant));
        }
        if item_rating_total < self.config.claim_threshold {
            return Err(TokenError::BelowThreshold {
                total: item_rating_total,
                threshold: self.config.claim_threshold,
            });
        }
        let (sponsor, amount) = (bounty.sponsor, bounty.amount);
        self.account_mut(sponsor)?.escrowed -= amount;
        self.account_mut(claimant)?.available += amount;
        let bounty = self.bounties.get_mut(&id).expect("checked above");
        bounty.status = BountyStatus::Claimed;
        bounty.claimant = Some(claimant);
        Ok(amount)
    }

    /// Transfers `price` from the adopter to the idea's author and records the adoption.
    pub fn adopt_idea(
        &mut self,
        adopter: UserId,
        author: UserId,
        item: ItemId,
        price: Tokens,
    ) -> Result<(), TokenError> {
        if adopter == author {
            return Err(TokenError::SelfDealing(adopter));
        }
        if !self.accounts.contains_key(&author) {
            return Err(TokenError::UnknownAccount(author));
        }
        self.require_available(adopter, price)?;
        self.account_mut(adopter)?.available -= price;
        self.account_mut(author)?.available += price;
        self.adoptions.push(Adoption {
            adopter,
            author,
            item,
            price,
        });
        Ok(())
    }

    /// Moves tokens from a user into the reward pool.
    pub fn fund_pool(&mut self, sponsor: UserId, amount: Tokens) -> Result<(), TokenError> {
        self.require_available(sponsor, amount)?;
        self.account_mut(sponsor)?.available -= amount;
        self.pool += amount;
        Ok(())
    }

    /// Converts an accuracy score into a pool transfer of
    /// `round(score * tokens_per_score)` tokens. Payouts are capped by the
    /// pool, penalties by the user's available balance, so no balance goes
    /// negative. Returns the signed amount actually moved to the user.
    pub fn settle_accuracy_reward(&mut self, user: UserId, score: f64) -> Result<i64, TokenError> {
        if !score.is_finite() {
            return Err(TokenError::InvalidPayload(format!("score {score} is not finite")));
        }
        let wanted = (score * self.config.tokens_per_score).round();
        let pool = self.pool;
        let account = self.account_mut(user)?;
        if wanted >= 0.0 {
            let paid = (wanted as Tokens).min(pool);
            account.available += paid;
            self.pool -= paid;
            Ok(paid as i64)
        } else {
            let taken = ((-wanted) as Tokens).min(account.available);
            account.available -= taken;
            self.pool += taken;
            Ok(-(taken as i64))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    const A: UserId = UserId(1);
    const B: UserId = UserId(2);
    const C: UserId = UserId(3);

    fn ledger(users: &[UserId]) -> TokenLedger {
        let mut l = TokenLedger::new(TokenConfig::default());
        for &u in users {
            l.mint_on_join(u).unwrap();
        }
        l
    }

    #[test]
    fn minting_tracks_joins() {
        let mut l = TokenLedger::new(TokenConfig::default());
        l.mint_on_join(A).unwrap();
        assert_eq!(l.supply(), 100);
        l.mint_on_join(B).unwrap();
        assert_eq!(l.supply(), 200);
        assert_eq!(l.mint_on_join(A), Err(TokenError::DuplicateAccount(A)));
        assert_eq!(l.holdings(), 200);
    }

    #[test]
    fn bids_escrow_their_total() {
        let mut l = ledger(&[A, B]);
        l.place_review_bid(1, A, ItemId(9), 30, 2).unwrap();
        assert_eq!(l.account(A), Some(&Account { available: 40, escrowed: 60 }));
        assert!(matches!(
            l.place_review_bid(2, A, ItemId(9), 50, 1),
            Err(TokenError::InsufficientBalance { needed: 50, available: 40, .. })
        ));
        assert!(matches!(l.place_review_bid(3, A, ItemId(9), 5, 0), Err(TokenError::InvalidPayload(_))));
        assert_eq!(l.place_review_bid(1, B, ItemId(9), 5, 1).unwrap_err(), TokenError::DuplicateId(1));
        l.check_invariants().unwrap();
    }

    #[test]
    fn small_balance_cannot_bid() {
        let mut l = ledger(&[A]);
        l.fund_pool(A, 90).unwrap();
        assert!(matches!(l.place_review_bid(1, A, ItemId(1), 30, 1), Err(TokenError::InsufficientBalance { .. })));
    }

    #[test]
    fn satisfactory_reviews_are_paid_from_escrow() {
        let mut l = ledger(&[A, B]);
        l.place_review_bid(1, A, ItemId(9), 30, 1).unwrap();
        assert_eq!(l.fulfill_review(1, B, 1.0).unwrap(), ReviewOutcome::Paid(30));
        assert_eq!(l.account(B).unwrap().available, 130);
        assert_eq!(l.account(A).unwrap().escrowed, 0);
        assert_eq!(l.bid(1).unwrap().status, BidStatus::Exhausted);
        assert_eq!(l.fulfill_review(1, B, 1.0), Err(TokenError::BidExhausted(1)));
        l.check_invariants().unwrap();
    }

    #[test]
    fn unsatisfactory_reviews_leave_balances_alone() {
        let mut l = ledger(&[A, B]);
        l.place_review_bid(1, A, ItemId(9), 30, 1).unwrap();
        let before = l.clone();
        // [u, u] under weights u = -1 totals -2, below the threshold of 0.
        assert_eq!(l.fulfill_review(1, B, -2.0).unwrap(), ReviewOutcome::Rejected);
        assert_eq!(l, before);
    }

    #[test]
    fn buyers_cannot_review_their_own_bids() {
        let mut l = ledger(&[A]);
        l.place_review_bid(1, A, ItemId(9), 30, 1).unwrap();
        assert_eq!(l.fulfill_review(1, A, 5.0), Err(TokenError::SelfDealing(A)));
    }

    #[test]
    fn cancel_returns_unspent_escrow() {
        let mut l = ledger(&[A, B]);
        l.place_review_bid(1, A, ItemId(9), 10, 3).unwrap();
        l.fulfill_review(1, B, 0.0).unwrap();
        assert_eq!(l.cancel_bid(1, B), Err(TokenError::InvalidPayload("only the buyer can cancel bid 1".into())));
        assert_eq!(l.cancel_bid(1, A).unwrap(), 20);
        assert_eq!(l.account(A), Some(&Account { available: 90, escrowed: 0 }));
        assert_eq!(l.cancel_bid(1, A), Err(TokenError::BidExhausted(1)));
        l.check_invariants().unwrap();
    }

    #[test]
    fn bounty_lifecycle() {
        let mut l = ledger(&[A, B, C]);
        l.post_bounty(4, A, "does X replicate?", 50).unwrap();
        assert_eq!(l.claim_bounty(4, B, 0.5), Err(TokenError::BelowThreshold { total: 0.5, threshold: 1.0 }));
        assert_eq!(l.claim_bounty(4, A, 5.0), Err(TokenError::SelfDealing(A)));
        assert_eq!(l.claim_bounty(4, B, 3.0).unwrap(), 50);
        assert_eq!(l.account(B).unwrap().available, 150);
        assert_eq!(l.claim_bounty(4, C, 3.0), Err(TokenError::BountyClosed(4)));
        l.check_invariants().unwrap();
    }

    #[test]
    fn adoption_transfers_price() {
        let mut l = ledger(&[A, B]);
        l.adopt_idea(A, B, ItemId(3), 10).unwrap();
        assert_eq!(l.account(A).unwrap().available, 90);
        assert_eq!(l.account(B).unwrap().available, 110);
        l.adopt_idea(A, B, ItemId(4), 0).unwrap();
        assert_eq!(l.adoptions().len(), 2);
        assert_eq!(l.account(A).unwrap().available, 90);
        assert_eq!(l.adopt_idea(B, B, ItemId(3), 1), Err(TokenError::SelfDealing(B)));
        assert!(matches!(l.adopt_idea(A, B, ItemId(3), 1000), Err(TokenError::InsufficientBalance { .. })));
    }

    #[test]
    fn accuracy_rewards_go_through_the_pool() {
        let mut l = ledger(&[A, B]);
        assert_eq!(l.settle_accuracy_reward(A, 3.0).unwrap(), 0, "empty pool pays nothing");
        assert_eq!(l.settle_accuracy_reward(A, -2.4).unwrap(), -2);
        assert_eq!(l.pool(), 2);
        assert_eq!(l.settle_accuracy_reward(B, 5.0).unwrap(), 2);
        assert_eq!(l.settle_accuracy_reward(A, -1000.0).unwrap(), -98);
        assert_eq!(l.account(A).unwrap().available, 0);
        l.check_invariants().unwrap();
    }

    #[test]
    fn random_operations_conserve_tokens() {
        let mut rng = rng_for(2024, &[]);
        let mut l = TokenLedger::new(TokenConfig::default());
        let mut next_id = 0u64;
        for _ in 0..5000 {
            let user = UserId(rng.random_range(0..20));
            let other = UserId(rng.random_range(0..20));
            let _ = match rng.random_range(0..8) {
                0 => l.mint_on_join(user).map(|_| ()),
                1 => {
                    next_id += 1;
                    l.place_review_bid(next_id, user, ItemId(1), rng.random_range(0..40), rng.random_range(0..4)).map(|_| ())
                }
                2 => l.fulfill_review(rng.random_range(0..=next_id), other, rng.random_range(-3.0..3.0)).map(|_| ()),
                3 => l.cancel_bid(rng.random_range(0..=next_id), user).map(|_| ()),
                4 => {
                    next_id += 1;
                    l.post_bounty(next_id, user, "q", rng.random_range(0..60)).map(|_| ())
                }
                5 => l.claim_bounty(rng.random_range(0..=next_id), other, rng.random_range(-2.0..4.0)).map(|_| ()),
                6 => l.adopt_idea(user, other, ItemId(2), rng.random_range(0..30)),
                _ => l.settle_accuracy_reward(user, rng.random_range(-5.0..5.0)).map(|_| ()),
            };
            l.check_invariants().unwrap();
        }
    }
}
