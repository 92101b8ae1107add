use std::net::Ipv4Addr;

use distb_core::data_plane::{Action, FlowRule, Match, PacketFields, RuleSet, Switch, SwitchId};
use proptest::prelude::*;

fn addr(x: u8) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 0, x % 4)
}

fn rule() -> impl Strategy<Value = FlowRule> {
    (
        0u16..6,
        prop::option::of(1u32..4),
        prop::option::of(0u8..4),
        prop::option::of(0u8..4),
        prop::option::of(prop::sample::select(vec![6u8, 17])),
        0u8..4,
    )
        .prop_map(|(prio, in_port, src, dst, proto, act)| {
            let action = match act {
                0 => Action::Drop,
                1 => Action::ToController,
                p => Action::Forward(p as u32),
            };
            FlowRule::new(
                SwitchId(1),
                prio,
                Match {
                    in_port,
                    src_addr: src.map(addr),
                    dst_addr: dst.map(addr),
                    proto,
                },
                action,
            )
        })
}

fn packet() -> impl Strategy<Value = PacketFields> {
    (1u32..4, 0u8..4, 0u8..4, prop::sample::select(vec![6u8, 17])).prop_map(|(in_port, s, d, proto)| PacketFields {
        in_port,
        src: addr(s),
        dst: addr(d),
        proto,
    })
}

fn dedup(rules: Vec<FlowRule>) -> Vec<FlowRule> {
    let mut seen = std::collections::BTreeSet::new();
    rules.into_iter().filter(|r| seen.insert(r.key())).collect()
}

/// Scan every rule; keep the highest priority, break ties on serialized bytes.
fn oracle(rules: &[FlowRule], p: &PacketFields) -> Option<Action> {
    let mut best: Option<&FlowRule> = None;
    for r in rules {
        let m = &r.matcher;
        let hit = m.in_port.is_none_or(|v| v == p.in_port)
            && m.src_addr.is_none_or(|v| v == p.src)
            && m.dst_addr.is_none_or(|v| v == p.dst)
            && m.proto.is_none_or(|v| v == p.proto);
        if !hit {
            continue;
        }
        best = match best {
            Some(b) if b.priority > r.priority => Some(b),
            Some(b) if b.priority == r.priority && b.canonical_bytes() <= r.canonical_bytes() => Some(b),
            _ => Some(r),
        };
    }
    best.map(|r| r.action)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn lookup_agrees_with_linear_scan(rules in prop::collection::vec(rule(), 0..24), pkts in prop::collection::vec(packet(), 1..16)) {
        let rules = dedup(rules);
        let mut sw = Switch::new(SwitchId(1));
        sw.install_rules(&RuleSet::from_rules(rules.clone()).unwrap());
        for p in &pkts {
            let want = oracle(&rules, p).unwrap_or(Action::Drop);
            prop_assert_eq!(sw.forward_packet(p), want);
        }
    }

    #[test]
    fn dump_and_hash_ignore_insertion_order(rules in prop::collection::vec(rule(), 0..24)) {
        let rules = dedup(rules);
        let mut rev = rules.clone();
        rev.reverse();
        let a = RuleSet::from_rules(rules).unwrap();
        let b = RuleSet::from_rules(rev).unwrap();
        prop_assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        let (mut s1, mut s2) = (Switch::new(SwitchId(1)), Switch::new(SwitchId(1)));
        s1.install_rules(&a);
        s2.install_rules(&b);
        prop_assert_eq!(s1.flow_table_hash(), s2.flow_table_hash());
    }

    #[test]
    fn canonical_bytes_round_trip(rules in prop::collection::vec(rule(), 0..24)) {
        let set = RuleSet::from_rules(dedup(rules)).unwrap();
        let back = RuleSet::from_canonical_bytes(&set.canonical_bytes()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn any_table_edit_changes_the_hash(rules in prop::collection::vec(rule(), 1..24), bump in 1u16..100) {
        let set = RuleSet::from_rules(dedup(rules)).unwrap();
        let mut sw = Switch::new(SwitchId(1));
        sw.install_rules(&set);
        let expected = set.digest();
        prop_assert!(sw.verify(expected).is_consistent());
        sw.with_table_mut(|t| {
            let r = t.iter().next().unwrap().clone();
            t.remove(&r.key());
            let mut e = r;
            e.priority = e.priority.wrapping_add(bump);
            t.upsert(e);
        });
        prop_assert!(!sw.verify(expected).is_consistent());
    }
}
