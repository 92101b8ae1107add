use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Fabric, SwitchId, Verdict};
use crate::control_plane::{ledger_timestamp, ControlError, ControllerCluster};
use crate::digest::Digest;
use crate::ledger::{DumpOutcome, ExpectedDigests};
use crate::time::SimTime;

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub verdicts: Vec<(SwitchId, Verdict)>,
    /// Index of the dump record appended on unanimity.
    pub dump_block: Option<u64>,
    pub isolated: Vec<SwitchId>,
}

/// Collects every non-isolated switch's table hash, offers the set to the
/// data chain, and isolates each dissenting switch once.
pub fn run_verification_round(
    cluster: &mut ControllerCluster,
    fabric: &mut Fabric,
    now: SimTime,
) -> Result<VerificationReport, ControlError> {
    let rules = cluster.effective_rules().clone();
    let mut observed = BTreeMap::new();
    let mut expected = BTreeMap::new();
    let mut verdicts = Vec::new();
    for sw in fabric.switches.values().filter(|s| !s.isolated) {
        let want: Digest = rules.slice(sw.id).digest();
        observed.insert(sw.id, sw.flow_table_hash());
        expected.insert(sw.id, want);
        verdicts.push((sw.id, sw.verify(want)));
    }
    for (id, _) in &verdicts {
        cluster.charge_verification(*id);
    }
    let registered: BTreeSet<SwitchId> = observed.keys().copied().collect();
    let outcome = cluster.data_chain_mut().append_dump(
        &observed,
        ExpectedDigests::PerSwitch(&expected),
        &registered,
        ledger_timestamp(now),
    )?;
    let mut report = VerificationReport {
        verdicts,
        dump_block: None,
        isolated: Vec::new(),
    };
    match outcome {
        DumpOutcome::Appended(block) => {
            cluster.note_data_block(block.index);
            report.dump_block = Some(block.index);
        }
        DumpOutcome::Rejected(dissenters) => {
            for s in dissenters {
                cluster.isolate_switch(fabric, s, now)?;
                report.isolated.push(s);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_plane::ClusterConfig;
    use crate::data_plane::{Action, FlowRule, HostKind, Match};

    fn setup() -> (Fabric, ControllerCluster) {
        let mut f = Fabric::line(4);
        f.add_host(HostKind::Gateway, "gw", SwitchId(1));
        f.add_host(HostKind::Cloud, "cloud", SwitchId(4));
        let rules = f.routing_rules();
        let cfg = ClusterConfig {
            difficulty: 4,
            ..ClusterConfig::default()
        };
        let c = ControllerCluster::new(&cfg, &mut f, rules).unwrap();
        (f, c)
    }

    fn tamper(f: &mut Fabric, s: u32) {
        let sw = f.switch_mut(SwitchId(s)).unwrap();
        sw.with_table_mut(|t| t.insert(FlowRule::new(SwitchId(s), 900, Match::any(), Action::Drop)))
            .unwrap();
        sw.compromised = true;
    }

    #[test]
    fn clean_round_appends_one_record() {
        let (mut f, mut c) = setup();
        let r = run_verification_round(&mut c, &mut f, SimTime::from_secs(5)).unwrap();
        assert_eq!(r.dump_block, Some(1));
        assert!(r.isolated.is_empty());
        assert!(r.verdicts.iter().all(|(_, v)| v.is_consistent()));
        assert_eq!(c.data_chain().len(), 2);
    }

    #[test]
    fn tampered_switches_isolated_in_one_round() {
        let (mut f, mut c) = setup();
        tamper(&mut f, 2);
        tamper(&mut f, 4);
        let r = run_verification_round(&mut c, &mut f, SimTime::from_secs(5)).unwrap();
        assert_eq!(r.isolated, vec![SwitchId(2), SwitchId(4)]);
        assert_eq!(r.dump_block, None);
        assert_eq!(c.data_chain().len(), 1);
        // the next round sees only clean switches
        let r = run_verification_round(&mut c, &mut f, SimTime::from_secs(10)).unwrap();
        assert!(r.isolated.is_empty());
        assert_eq!(r.verdicts.len(), 2);
    }
}
