use std::collections::BTreeMap;

use serde::Serialize;

use crate::data_plane::{RuleSet, SwitchId};
use crate::digest::Digest;

const TAG_RULE_UPDATE: u8 = 0x01;
const TAG_DUMP_RECORD: u8 = 0x02;
const TAG_ISOLATION_ORDER: u8 = 0x03;

/// What a block carries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockPayload {
    /// A new version of the full rule set.
    RuleUpdate { rules: RuleSet },
    /// Agreed flow-table digests of every switch for one verification round.
    DumpRecord {
        switch_digests: BTreeMap<SwitchId, Digest>,
    },
    /// Cuts `target` off from its peers; `new_rules` is the resulting rule set.
    IsolationOrder { target: SwitchId, new_rules: RuleSet },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed payload: {0}")]
pub struct PayloadDecodeError(pub String);

impl BlockPayload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BlockPayload::RuleUpdate { .. } => "rule_update",
            BlockPayload::DumpRecord { .. } => "dump_record",
            BlockPayload::IsolationOrder { .. } => "isolation_order",
        }
    }

    /// Rule set this payload makes effective, if any.
    pub fn rules(&self) -> Option<&RuleSet> {
        match self {
            BlockPayload::RuleUpdate { rules } => Some(rules),
            BlockPayload::IsolationOrder { new_rules, .. } => Some(new_rules),
            BlockPayload::DumpRecord { .. } => None,
        }
    }

    /// Tag byte followed by the variant body. Rule sets use their canonical
    /// JSON; integers are little-endian.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            BlockPayload::RuleUpdate { rules } => {
                out.push(TAG_RULE_UPDATE);
                out.extend(rules.canonical_bytes());
            }
            BlockPayload::DumpRecord { switch_digests } => {
                out.push(TAG_DUMP_RECORD);
                out.extend((switch_digests.len() as u32).to_le_bytes());
                for (id, d) in switch_digests {
                    out.extend(id.0.to_le_bytes());
                    out.extend(d.as_bytes());
                }
            }
            BlockPayload::IsolationOrder { target, new_rules } => {
                out.push(TAG_ISOLATION_ORDER);
                out.extend(target.0.to_le_bytes());
                out.extend(new_rules.canonical_bytes());
            }
        }
        out
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, PayloadDecodeError> {
        let err = |m: &str| PayloadDecodeError(m.to_string());
        let (&tag, body) = bytes.split_first().ok_or_else(|| err("empty payload"))?;
        match tag {
            TAG_RULE_UPDATE => Ok(BlockPayload::RuleUpdate {
                rules: RuleSet::from_canonical_bytes(body).map_err(PayloadDecodeError)?,
            }),
            TAG_DUMP_RECORD => {
                let (count, mut rest) = split_u32(body).ok_or_else(|| err("short dump header"))?;
                let mut switch_digests = BTreeMap::new();
                for _ in 0..count {
                    let (id, tail) = split_u32(rest).ok_or_else(|| err("short dump entry"))?;
                    if tail.len() < 32 {
                        return Err(err("short dump digest"));
                    }
                    let mut d = [0u8; 32];
                    d.copy_from_slice(&tail[..32]);
                    switch_digests.insert(SwitchId(id), Digest(d));
                    rest = &tail[32..];
                }
                if !rest.is_empty() {
                    return Err(err("trailing bytes after dump record"));
                }
                Ok(BlockPayload::DumpRecord { switch_digests })
            }
            TAG_ISOLATION_ORDER => {
                let (target, rest) = split_u32(body).ok_or_else(|| err("short isolation order"))?;
                Ok(BlockPayload::IsolationOrder {
                    target: SwitchId(target),
                    new_rules: RuleSet::from_canonical_bytes(rest).map_err(PayloadDecodeError)?,
                })
            }
            t => Err(PayloadDecodeError(format!("unknown payload tag {t:#04x}"))),
        }
    }
}

fn split_u32(b: &[u8]) -> Option<(u32, &[u8])> {
    if b.len() < 4 {
        return None;
    }
    let (head, tail) = b.split_at(4);
    Some((u32::from_le_bytes(head.try_into().ok()?), tail))
}
