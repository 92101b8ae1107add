//! Append-only chain files.
//!
//! A file is a sequence of records, each a `u32` little-endian length
//! followed by that many bytes. A record holds the 80-byte header, a `u32`
//! payload length and the canonical payload bytes. Chain kind and
//! difficulty are taken from the genesis record.

use std::io::{self, Read, Write};

use super::{hash_block, Block, BlockHeader, BlockPayload, Chain, ChainKind, HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("record {index}: truncated")]
    Truncated { index: usize },
    #[error("record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("chain file is empty")]
    Empty,
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let payload = block.payload.canonical_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + payload.len());
    out.extend(block.header.to_bytes());
    out.extend((payload.len() as u32).to_le_bytes());
    out.extend(payload);
    out
}

/// Decodes one record body. The cached hash is recomputed from the header.
pub fn decode_block(index: usize, bytes: &[u8]) -> Result<Block, StoreError> {
    let malformed = |reason: String| StoreError::Malformed { index, reason };
    if bytes.len() < HEADER_LEN + 4 {
        return Err(StoreError::Truncated { index });
    }
    let header = BlockHeader::from_bytes(bytes[..HEADER_LEN].try_into().unwrap());
    let plen = u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN + 4..];
    if body.len() != plen {
        return Err(malformed(format!("payload length {plen} but {} bytes present", body.len())));
    }
    let payload = BlockPayload::from_canonical_bytes(body).map_err(|e| malformed(e.0))?;
    Ok(Block {
        index: index as u64,
        block_hash: hash_block(&header),
        header,
        payload,
    })
}

/// Writes one length-prefixed record.
pub fn append_record<W: Write>(w: &mut W, block: &Block) -> io::Result<()> {
    let rec = encode_block(block);
    w.write_all(&(rec.len() as u32).to_le_bytes())?;
    w.write_all(&rec)
}

pub fn write_chain<W: Write>(w: &mut W, chain: &Chain) -> io::Result<()> {
    for b in chain.blocks() {
        append_record(w, b)?;
    }
    w.flush()
}

/// Reads a whole chain file. Structure is checked here; call
/// [`Chain::validate`] for hash and proof-of-work checks.
pub fn read_chain<R: Read>(r: &mut R) -> Result<Chain, StoreError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut blocks = Vec::new();
    let mut rest = bytes.as_slice();
    while !rest.is_empty() {
        let index = blocks.len();
        if rest.len() < 4 {
            return Err(StoreError::Truncated { index });
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(StoreError::Truncated { index });
        }
        blocks.push(decode_block(index, &rest[..len])?);
        rest = &rest[len..];
    }
    let genesis = blocks.first().ok_or(StoreError::Empty)?;
    let kind = match genesis.payload {
        BlockPayload::DumpRecord { .. } => ChainKind::Data,
        _ => ChainKind::Control,
    };
    let difficulty = genesis.header.difficulty;
    Ok(Chain::from_blocks(kind, difficulty, blocks))
}
