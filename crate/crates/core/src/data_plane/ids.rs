//! Stealthy-IDS checks: forwarding detection and weighting detection.

use super::{Action, Inconsistency, PacketFields, RuleSet, SwitchId, Verdict};

/// One observation from a monitored link: what the switch actually did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TapRecord {
    pub dpid: SwitchId,
    pub packet: PacketFields,
    pub observed: Action,
}

/// Action the installed rules prescribe, by straight linear scan over the
/// whole rule set. Ties on priority go to the lexicographically smallest
/// canonical rule bytes.
pub fn reference_action(rules: &RuleSet, dpid: SwitchId, p: &PacketFields, miss: Action) -> Action {
    let mut best: Option<(u16, Vec<u8>, Action)> = None;
    for r in rules.iter() {
        if r.dpid != dpid || !r.matcher.matches(p) {
            continue;
        }
        let bytes = r.canonical_bytes();
        let better = match &best {
            None => true,
            Some((prio, b, _)) => r.priority > *prio || (r.priority == *prio && bytes < *b),
        };
        if better {
            best = Some((r.priority, bytes, r.action));
        }
    }
    best.map(|(_, _, a)| a).unwrap_or(miss)
}

/// Flags the first tapped packet whose observed action disagrees with the
/// rules.
pub fn ids_forwarding_check(tap: &[TapRecord], rules: &RuleSet, miss: Action) -> Verdict {
    for rec in tap {
        let expected = reference_action(rules, rec.dpid, &rec.packet, miss);
        if expected != rec.observed {
            return Verdict::Inconsistent(Inconsistency::Forwarding {
                packet: rec.packet,
                expected,
                observed: rec.observed,
            });
        }
    }
    Verdict::Consistent
}

/// Per-rule packet counts must stay within `[1-eps, 1+eps]` of expectation.
pub fn weighting_check(observed: &[u64], expected: &[u64], epsilon: f64) -> Verdict {
    for (i, (&obs, &exp)) in observed.iter().zip(expected).enumerate() {
        let ok = if exp == 0 {
            obs == 0
        } else {
            let ratio = obs as f64 / exp as f64;
            (1.0 - epsilon..=1.0 + epsilon).contains(&ratio)
        };
        if !ok {
            return Verdict::Inconsistent(Inconsistency::Weighting {
                rule_index: i,
                expected: exp,
                observed: obs,
            });
        }
    }
    Verdict::Consistent
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_plane::{FlowRule, Match, Switch};
    use std::net::Ipv4Addr;

    fn rules() -> RuleSet {
        RuleSet::from_rules([FlowRule::new(
            SwitchId(1),
            10,
            Match {
                in_port: Some(2),
                ..Match::any()
            },
            Action::Forward(2),
        )])
        .unwrap()
    }

    fn p(in_port: u32) -> PacketFields {
        PacketFields {
            in_port,
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            proto: 6,
        }
    }

    #[test]
    fn honest_switch_is_consistent() {
        let set = rules();
        let mut sw = Switch::new(SwitchId(1));
        sw.install_rules(&set);
        let tap: Vec<_> = (1..4)
            .map(|port| TapRecord {
                dpid: SwitchId(1),
                packet: p(port),
                observed: sw.forward_packet(&p(port)),
            })
            .collect();
        assert!(ids_forwarding_check(&tap, &set, Action::Drop).is_consistent());
    }

    #[test]
    fn reroute_is_flagged_with_the_pair() {
        let tap = [
            TapRecord {
                dpid: SwitchId(1),
                packet: p(1),
                observed: Action::Drop,
            },
            TapRecord {
                dpid: SwitchId(1),
                packet: p(2),
                observed: Action::Forward(3),
            },
        ];
        assert_eq!(
            ids_forwarding_check(&tap, &rules(), Action::Drop),
            Verdict::Inconsistent(Inconsistency::Forwarding {
                packet: p(2),
                expected: Action::Forward(2),
                observed: Action::Forward(3),
            })
        );
    }

    #[test]
    fn weighting_band() {
        assert!(weighting_check(&[100, 0], &[104, 0], 0.05).is_consistent());
        assert!(!weighting_check(&[100], &[110], 0.05).is_consistent());
        assert!(!weighting_check(&[1], &[0], 0.05).is_consistent());
    }
}
