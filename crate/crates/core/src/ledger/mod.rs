//! Hash-chained block store with proof-of-work mining.
//!
//! Two chains exist per controller cluster: the control chain versions the
//! flow-rule set, the data chain records agreed flow-table digests.
//!
//! Header layout (80 bytes, little-endian integers):
//!
//! ```text
//! version u32 | prev_hash [32] | payload_digest [32] | timestamp u32 | difficulty u32 | nonce u32
//! ```

mod payload;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::data_plane::{RuleSet, SwitchId};
use crate::digest::Digest;

pub use payload::{BlockPayload, PayloadDecodeError};
pub use store::{append_record, decode_block, encode_block, read_chain, write_chain, StoreError};

pub const HEADER_LEN: usize = 80;
pub const HEADER_VERSION: u32 = 1;
pub const DEFAULT_DIFFICULTY: u32 = 12;
/// Largest difficulty a 4-byte nonce is expected to satisfy.
pub const MAX_DIFFICULTY: u32 = 32;

/// Seconds since the Unix epoch.
pub type Timestamp = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BlockHeader {
    pub version: u32,
    pub prev_hash: Digest,
    pub payload_digest: Digest,
    pub timestamp: Timestamp,
    pub difficulty: u32,
    pub nonce: u32,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.version.to_le_bytes());
        b[4..36].copy_from_slice(self.prev_hash.as_bytes());
        b[36..68].copy_from_slice(self.payload_digest.as_bytes());
        b[68..72].copy_from_slice(&self.timestamp.to_le_bytes());
        b[72..76].copy_from_slice(&self.difficulty.to_le_bytes());
        b[76..80].copy_from_slice(&self.nonce.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Self {
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let digest_at = |i: usize| Digest(b[i..i + 32].try_into().unwrap());
        Self {
            version: u32_at(0),
            prev_hash: digest_at(4),
            payload_digest: digest_at(36),
            timestamp: u32_at(68),
            difficulty: u32_at(72),
            nonce: u32_at(76),
        }
    }
}

/// SHA-256 of the 80-byte header.
pub fn hash_block(header: &BlockHeader) -> Digest {
    Digest::of(&header.to_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub index: u64,
    pub header: BlockHeader,
    pub payload: BlockPayload,
    /// Cached `hash_block(&header)`.
    pub block_hash: Digest,
}

impl Block {
    /// Attempts the miner made before finding this block's nonce.
    pub fn mining_attempts(&self) -> u64 {
        self.header.nonce as u64 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Control,
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error, Serialize)]
pub enum ValidationError {
    #[error("prev_hash does not link to the previous block")]
    LinkMismatch,
    #[error("index does not follow the previous block")]
    IndexGap,
    #[error("payload digest does not match the payload")]
    PayloadDigestMismatch,
    #[error("proof of work not met")]
    PowUnmet,
    #[error("timestamp earlier than the previous block")]
    TimestampRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("block {index}: {error}")]
pub struct ChainError {
    pub index: usize,
    pub error: ValidationError,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("no nonce in [0, 2^32) meets difficulty {0}")]
    NonceExhausted(u32),
    #[error("difficulty {0} exceeds {MAX_DIFFICULTY}")]
    InvalidDifficulty(u32),
    #[error("operation requires a {expected:?} chain")]
    WrongChainKind { expected: ChainKind },
    #[error("no digest reported for switch {0}")]
    MissingSwitch(SwitchId),
    #[error("rejected block: {0}")]
    Invalid(#[from] ValidationError),
}

fn search_nonce(mut header: BlockHeader) -> Result<(BlockHeader, Digest), LedgerError> {
    let bytes = header.to_bytes();
    // The first 64 bytes never change during the search.
    let mut midstate = Sha256::new();
    midstate.update(&bytes[..64]);
    let mut tail = [0u8; 16];
    tail.copy_from_slice(&bytes[64..]);
    let mut nonce: u32 = 0;
    loop {
        tail[12..16].copy_from_slice(&nonce.to_le_bytes());
        let mut h = midstate.clone();
        h.update(tail);
        let d = Digest(h.finalize().into());
        if d.leading_zero_bits() >= header.difficulty {
            header.nonce = nonce;
            return Ok((header, d));
        }
        nonce = nonce
            .checked_add(1)
            .ok_or(LedgerError::NonceExhausted(header.difficulty))?;
    }
}

fn mine(
    index: u64,
    prev_hash: Digest,
    payload: BlockPayload,
    difficulty: u32,
    timestamp: Timestamp,
) -> Result<Block, LedgerError> {
    if difficulty > MAX_DIFFICULTY {
        return Err(LedgerError::InvalidDifficulty(difficulty));
    }
    let header = BlockHeader {
        version: HEADER_VERSION,
        prev_hash,
        payload_digest: payload.digest(),
        timestamp,
        difficulty,
        nonce: 0,
    };
    let (header, block_hash) = search_nonce(header)?;
    Ok(Block {
        index,
        header,
        payload,
        block_hash,
    })
}

/// Mines a genesis block (index 0, zero prev_hash).
pub fn mine_genesis(payload: BlockPayload, difficulty: u32, timestamp: Timestamp) -> Result<Block, LedgerError> {
    mine(0, Digest::ZERO, payload, difficulty, timestamp)
}

/// Mines the successor of `prev`. Nonces are tried from 0 upward.
pub fn mine_block(
    payload: BlockPayload,
    prev: &Block,
    difficulty: u32,
    timestamp: Timestamp,
) -> Result<Block, LedgerError> {
    mine(prev.index + 1, prev.block_hash, payload, difficulty, timestamp)
}

fn check_pow(block: &Block) -> Result<(), ValidationError> {
    let h = hash_block(&block.header);
    if h != block.block_hash || h.leading_zero_bits() < block.header.difficulty {
        return Err(ValidationError::PowUnmet);
    }
    Ok(())
}

/// Checks `block` against its parent. Reports the first failed check in
/// the order link, index, payload digest, proof of work, timestamp.
pub fn validate_block(block: &Block, prev: &Block) -> Result<(), ValidationError> {
    if block.header.prev_hash != hash_block(&prev.header) {
        return Err(ValidationError::LinkMismatch);
    }
    if block.index != prev.index + 1 {
        return Err(ValidationError::IndexGap);
    }
    if block.header.payload_digest != block.payload.digest() {
        return Err(ValidationError::PayloadDigestMismatch);
    }
    check_pow(block)?;
    if block.header.timestamp < prev.header.timestamp {
        return Err(ValidationError::TimestampRegression);
    }
    Ok(())
}

fn validate_genesis(block: &Block) -> Result<(), ValidationError> {
    if block.header.prev_hash != Digest::ZERO {
        return Err(ValidationError::LinkMismatch);
    }
    if block.index != 0 {
        return Err(ValidationError::IndexGap);
    }
    if block.header.payload_digest != block.payload.digest() {
        return Err(ValidationError::PayloadDigestMismatch);
    }
    check_pow(block)
}

/// Outcome of offering a verification round's digests to the data chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DumpOutcome {
    Appended(Box<Block>),
    /// Switches whose digest disagreed; nothing was appended.
    Rejected(Vec<SwitchId>),
}

/// What each switch's digest should equal.
#[derive(Clone, Copy, Debug)]
pub enum ExpectedDigests<'a> {
    /// Homogeneous rule sets: every switch must report the same digest.
    Uniform(Digest),
    /// Per-switch slices of the rule set.
    PerSwitch(&'a BTreeMap<SwitchId, Digest>),
}

impl ExpectedDigests<'_> {
    pub fn get(&self, id: SwitchId) -> Option<Digest> {
        match self {
            ExpectedDigests::Uniform(d) => Some(*d),
            ExpectedDigests::PerSwitch(m) => m.get(&id).copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    kind: ChainKind,
    difficulty: u32,
    blocks: Vec<Block>,
}

impl Chain {
    /// Control chain whose genesis holds the initial rule set.
    pub fn control(initial: RuleSet, difficulty: u32, timestamp: Timestamp) -> Result<Chain, LedgerError> {
        let genesis = mine_genesis(BlockPayload::RuleUpdate { rules: initial }, difficulty, timestamp)?;
        Ok(Chain {
            kind: ChainKind::Control,
            difficulty,
            blocks: vec![genesis],
        })
    }

    /// Data chain whose genesis is an empty dump record.
    pub fn data(difficulty: u32, timestamp: Timestamp) -> Result<Chain, LedgerError> {
        let genesis = mine_genesis(
            BlockPayload::DumpRecord {
                switch_digests: BTreeMap::new(),
            },
            difficulty,
            timestamp,
        )?;
        Ok(Chain {
            kind: ChainKind::Data,
            difficulty,
            blocks: vec![genesis],
        })
    }

    /// Rebuilds a chain from blocks without validating it.
    pub fn from_blocks(kind: ChainKind, difficulty: u32, blocks: Vec<Block>) -> Chain {
        assert!(!blocks.is_empty(), "a chain has at least a genesis block");
        Chain {
            kind,
            difficulty,
            blocks,
        }
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn difficulty(&self) -> u32 {
        self.difficulty
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Raw access that bypasses every invariant. Only for tamper experiments.
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// The up-to-date block.
    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain is never empty")
    }

    /// Rule set in force at the head: the newest rule-bearing payload.
    pub fn effective_rules(&self) -> Option<&RuleSet> {
        self.blocks.iter().rev().find_map(|b| b.payload.rules())
    }

    /// Mines `payload` on top of the head and appends it.
    pub fn append(&mut self, payload: BlockPayload, timestamp: Timestamp) -> Result<&Block, LedgerError> {
        let block = mine_block(payload, self.head(), self.difficulty, timestamp)?;
        self.push_validated(block)?;
        Ok(self.head())
    }

    /// Appends an already-mined block after checking it against the head.
    pub fn push_validated(&mut self, block: Block) -> Result<(), ValidationError> {
        validate_block(&block, self.head())?;
        if block.header.difficulty < self.difficulty {
            return Err(ValidationError::PowUnmet);
        }
        self.blocks.push(block);
        Ok(())
    }

    fn require(&self, kind: ChainKind) -> Result<(), LedgerError> {
        if self.kind != kind {
            return Err(LedgerError::WrongChainKind { expected: kind });
        }
        Ok(())
    }

    /// New rule version on the control chain.
    pub fn append_rules(&mut self, rules: RuleSet, timestamp: Timestamp) -> Result<&Block, LedgerError> {
        self.require(ChainKind::Control)?;
        self.append(BlockPayload::RuleUpdate { rules }, timestamp)
    }

    pub fn append_isolation(
        &mut self,
        target: SwitchId,
        new_rules: RuleSet,
        timestamp: Timestamp,
    ) -> Result<&Block, LedgerError> {
        self.require(ChainKind::Control)?;
        self.append(BlockPayload::IsolationOrder { target, new_rules }, timestamp)
    }

    /// Appends a dump record only if every registered switch reported the
    /// expected digest; otherwise lists the dissenters and leaves the chain
    /// untouched.
    pub fn append_dump(
        &mut self,
        digests: &BTreeMap<SwitchId, Digest>,
        expected: ExpectedDigests<'_>,
        registered: &BTreeSet<SwitchId>,
        timestamp: Timestamp,
    ) -> Result<DumpOutcome, LedgerError> {
        self.require(ChainKind::Data)?;
        if let Some(missing) = registered.iter().find(|id| !digests.contains_key(id)) {
            return Err(LedgerError::MissingSwitch(*missing));
        }
        let mismatched: Vec<SwitchId> = digests
            .iter()
            .filter(|(id, d)| expected.get(**id) != Some(**d))
            .map(|(id, _)| *id)
            .collect();
        if !mismatched.is_empty() {
            return Ok(DumpOutcome::Rejected(mismatched));
        }
        let block = self
            .append(
                BlockPayload::DumpRecord {
                    switch_digests: digests.clone(),
                },
                timestamp,
            )?
            .clone();
        Ok(DumpOutcome::Appended(Box::new(block)))
    }

    /// Validates genesis and every parent/child pair; reports the first
    /// offending index.
    pub fn validate(&self) -> Result<(), ChainError> {
        validate_chain(self)
    }
}

pub fn validate_chain(chain: &Chain) -> Result<(), ChainError> {
    let blocks = chain.blocks();
    let genesis = blocks.first().ok_or(ChainError {
        index: 0,
        error: ValidationError::IndexGap,
    })?;
    let weak = |b: &Block| b.header.difficulty < chain.difficulty;
    validate_genesis(genesis).map_err(|error| ChainError { index: 0, error })?;
    if weak(genesis) {
        return Err(ChainError {
            index: 0,
            error: ValidationError::PowUnmet,
        });
    }
    for (i, pair) in blocks.windows(2).enumerate() {
        let index = i + 1;
        validate_block(&pair[1], &pair[0]).map_err(|error| ChainError { index, error })?;
        if weak(&pair[1]) {
            return Err(ChainError {
                index,
                error: ValidationError::PowUnmet,
            });
        }
    }
    Ok(())
}

/// Summary of a block for JSON listings.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSummary {
    pub index: u64,
    pub timestamp: Timestamp,
    pub payload_kind: &'static str,
    pub prev_hash: Digest,
    pub payload_digest: Digest,
    pub block_hash: Digest,
    pub difficulty: u32,
    pub nonce: u32,
}

impl From<&Block> for BlockSummary {
    fn from(b: &Block) -> Self {
        Self {
            index: b.index,
            timestamp: b.header.timestamp,
            payload_kind: b.payload.kind_name(),
            prev_hash: b.header.prev_hash,
            payload_digest: b.header.payload_digest,
            block_hash: b.block_hash,
            difficulty: b.header.difficulty,
            nonce: b.header.nonce,
        }
    }
}

#[cfg(test)]
mod tests;
