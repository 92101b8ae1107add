use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::data_plane::{Action, FlowRule, Match};

fn rules(n: u32) -> RuleSet {
    RuleSet::from_rules((0..n).map(|i| {
        FlowRule::new(
            SwitchId(1 + i % 4),
            100 + i as u16,
            Match {
                in_port: Some(i),
                ..Match::any()
            },
            Action::Forward(1),
        )
    }))
    .unwrap()
}

#[test]
fn zero_header_hash_matches_reference() {
    let h = BlockHeader::from_bytes(&[0u8; 80]);
    assert_eq!(
        hash_block(&h).to_hex(),
        "5b6fb58e61fa475939767d68a446f97f1bff02c0e5935a3ea8bb51e6515783d8"
    );
}

#[test]
fn header_layout_round_trips() {
    let h = BlockHeader {
        version: 1,
        prev_hash: Digest([7; 32]),
        payload_digest: Digest([9; 32]),
        timestamp: 0x0102_0304,
        difficulty: 12,
        nonce: 0xdead_beef,
    };
    let b = h.to_bytes();
    assert_eq!(&b[0..4], &[1, 0, 0, 0]);
    assert_eq!(&b[68..72], &[4, 3, 2, 1]);
    assert_eq!(&b[76..80], &[0xef, 0xbe, 0xad, 0xde]);
    assert_eq!(BlockHeader::from_bytes(&b), h);
}

#[test]
fn mined_nonce_is_the_first_that_works() {
    let chain = Chain::control(rules(3), 8, 1000).unwrap();
    let g = chain.head();
    let mut header = g.header;
    // brute-force oracle over the plain 80-byte hash
    let first = (0u32..)
        .find(|n| {
            header.nonce = *n;
            Digest::of(&header.to_bytes()).leading_zero_bits() >= 8
        })
        .unwrap();
    assert_eq!(g.header.nonce, first);
    assert_eq!(g.block_hash, hash_block(&g.header));
}

#[test]
fn difficulty_zero_takes_nonce_zero() {
    let c = Chain::data(0, 5).unwrap();
    assert_eq!(c.head().header.nonce, 0);
}

#[test]
fn too_hard_is_rejected() {
    assert_eq!(
        Chain::data(33, 0).unwrap_err(),
        LedgerError::InvalidDifficulty(33)
    );
}

#[test]
fn append_links_and_validates() {
    let mut c = Chain::control(rules(2), 6, 10).unwrap();
    c.append_rules(rules(3), 11).unwrap();
    c.append_isolation(SwitchId(2), rules(4), 12).unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c.head().header.prev_hash, c.blocks()[1].block_hash);
    assert_eq!(c.effective_rules(), Some(&rules(4)));
    c.validate().unwrap();
}

#[test]
fn timestamp_regression_rejected() {
    let mut c = Chain::control(rules(1), 4, 100).unwrap();
    let err = c.append_rules(rules(2), 99).unwrap_err();
    assert_eq!(err, LedgerError::Invalid(ValidationError::TimestampRegression));
    assert_eq!(c.len(), 1);
}

#[test]
fn wrong_kind() {
    let mut c = Chain::data(4, 0).unwrap();
    assert!(matches!(
        c.append_rules(rules(1), 1),
        Err(LedgerError::WrongChainKind { .. })
    ));
}

fn chain_of(len: usize) -> Chain {
    let mut c = Chain::control(rules(1), 4, 100).unwrap();
    for i in 1..len {
        c.append_rules(rules(1 + i as u32 % 5), 100 + i as u32).unwrap();
    }
    c
}

#[test]
fn validation_order_is_link_first() {
    let c = chain_of(3);
    let mut b = c.blocks()[2].clone();
    b.header.prev_hash = Digest([1; 32]);
    b.index = 7;
    assert_eq!(validate_block(&b, &c.blocks()[1]), Err(ValidationError::LinkMismatch));
    let mut b = c.blocks()[2].clone();
    b.index = 7;
    b.payload = BlockPayload::RuleUpdate { rules: rules(9) };
    assert_eq!(validate_block(&b, &c.blocks()[1]), Err(ValidationError::IndexGap));
}

#[test]
fn each_field_mutation_is_flagged_at_its_block() {
    let base = chain_of(4);
    let cases: Vec<(&str, fn(&mut Block), ValidationError)> = vec![
        ("index", |b| b.index += 1, ValidationError::IndexGap),
        ("prev", |b| b.header.prev_hash.0[0] ^= 1, ValidationError::LinkMismatch),
        ("payload", |b| b.payload = BlockPayload::RuleUpdate { rules: rules(17) }, ValidationError::PayloadDigestMismatch),
        ("digest", |b| b.header.payload_digest.0[5] ^= 1, ValidationError::PayloadDigestMismatch),
        ("nonce", |b| b.header.nonce ^= 1, ValidationError::PowUnmet),
        ("version", |b| b.header.version = 2, ValidationError::PowUnmet),
        ("difficulty", |b| b.header.difficulty = 1, ValidationError::PowUnmet),
        ("hash", |b| b.block_hash.0[31] ^= 1, ValidationError::PowUnmet),
        ("timestamp", |b| b.header.timestamp = 0, ValidationError::PowUnmet),
    ];
    for (name, f, want) in cases {
        let mut c = base.clone();
        f(&mut c.blocks_mut()[2]);
        let err = c.validate().unwrap_err();
        assert_eq!(err.index, 2, "{name}");
        assert_eq!(err.error, want, "{name}");
    }
}

#[test]
fn resigned_timestamp_regression_detected() {
    let mut c = chain_of(3);
    let prev = c.blocks()[1].clone();
    let forged = mine_block(c.blocks()[2].payload.clone(), &prev, 4, 50).unwrap();
    c.blocks_mut()[2] = forged;
    assert_eq!(
        c.validate().unwrap_err(),
        ChainError {
            index: 2,
            error: ValidationError::TimestampRegression
        }
    );
}

fn registered() -> BTreeSet<SwitchId> {
    (1..=4).map(SwitchId).collect()
}

#[test]
fn dump_appended_when_all_match() {
    let mut c = Chain::data(4, 0).unwrap();
    let d = Digest::of(b"table");
    let digests: BTreeMap<_, _> = registered().into_iter().map(|s| (s, d)).collect();
    let out = c
        .append_dump(&digests, ExpectedDigests::Uniform(d), &registered(), 1)
        .unwrap();
    assert!(matches!(out, DumpOutcome::Appended(_)));
    assert_eq!(c.len(), 2);
}

#[test]
fn dump_rejected_lists_dissenters() {
    let mut c = Chain::data(4, 0).unwrap();
    let d = Digest::of(b"table");
    let mut digests: BTreeMap<_, _> = registered().into_iter().map(|s| (s, d)).collect();
    digests.insert(SwitchId(3), Digest::of(b"other"));
    let out = c
        .append_dump(&digests, ExpectedDigests::Uniform(d), &registered(), 1)
        .unwrap();
    assert_eq!(out, DumpOutcome::Rejected(vec![SwitchId(3)]));
    assert_eq!(c.len(), 1);
}

#[test]
fn dump_missing_switch() {
    let mut c = Chain::data(4, 0).unwrap();
    let d = Digest::of(b"t");
    let digests: BTreeMap<_, _> = [(SwitchId(1), d)].into();
    assert_eq!(
        c.append_dump(&digests, ExpectedDigests::Uniform(d), &registered(), 1),
        Err(LedgerError::MissingSwitch(SwitchId(2)))
    );
}

#[test]
fn file_round_trip() {
    let mut c = chain_of(4);
    c.append_isolation(SwitchId(3), rules(2), 200).unwrap();
    let mut buf = Vec::new();
    write_chain(&mut buf, &c).unwrap();
    let back = read_chain(&mut buf.as_slice()).unwrap();
    assert_eq!(back, c);
    back.validate().unwrap();

    let mut data = Chain::data(4, 0).unwrap();
    let d = Digest::of(b"x");
    let digests: BTreeMap<_, _> = registered().into_iter().map(|s| (s, d)).collect();
    data.append_dump(&digests, ExpectedDigests::Uniform(d), &registered(), 3).unwrap();
    let mut buf = Vec::new();
    write_chain(&mut buf, &data).unwrap();
    assert_eq!(read_chain(&mut buf.as_slice()).unwrap(), data);
}

#[test]
fn truncated_file() {
    let c = chain_of(2);
    let mut buf = Vec::new();
    write_chain(&mut buf, &c).unwrap();
    buf.pop();
    assert!(matches!(
        read_chain(&mut buf.as_slice()),
        Err(StoreError::Truncated { index: 1 })
    ));
}
