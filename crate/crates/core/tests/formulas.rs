use std::net::Ipv4Addr;

use distb_core::metrics::{bandwidth_series, comm_overhead, throughput, MetricsError};
use distb_core::traffic::{Packet, PacketKind};
use distb_core::SimTime;
use proptest::prelude::*;

fn kind_of(k: u8) -> PacketKind {
    match k % 4 {
        0 => PacketKind::CbrData,
        1 => PacketKind::RtrControl,
        2 => PacketKind::AttackFlood,
        _ => PacketKind::FileChunk,
    }
}

fn packet((id, k, size, sent_ms, lat_ms): (u64, u8, u32, u64, Option<u64>)) -> Packet {
    let sent_at = SimTime::from_millis(sent_ms);
    Packet {
        id,
        kind: kind_of(k),
        src: Ipv4Addr::new(10, 0, 0, 1),
        dst: Ipv4Addr::new(10, 0, 0, 2),
        size,
        sent_at,
        delivered_at: lat_ms.map(|l| sent_at + SimTime::from_millis(l)),
    }
}

fn trace() -> impl Strategy<Value = Vec<Packet>> {
    prop::collection::vec(
        (any::<u64>(), any::<u8>(), 100u32..=512, 0u64..500_000, prop::option::of(0u64..50)),
        0..200,
    )
    .prop_map(|v| v.into_iter().map(packet).collect())
}

// Integer bit count over the horizon, computed without touching the library.
fn throughput_ref(t: &[Packet], secs: u32) -> f64 {
    t.iter().filter(|p| p.kind == PacketKind::CbrData && p.delivered_at.is_some()).map(|p| p.size as u128 * 8).sum::<u128>() as f64 / secs as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn throughput_matches_reference(t in trace(), secs in 1u32..=1000) {
        prop_assert!(close(throughput(&t, secs as f64).unwrap(), throughput_ref(&t, secs)));
    }

    #[test]
    fn overhead_matches_reference(rtr in 0u64..1_000_000, cbr in 1u64..1_000_000) {
        prop_assert!(close(comm_overhead(rtr, cbr).unwrap(), rtr as f64 / cbr as f64));
    }
}

proptest! {
    #[test]
    fn throughput_ignores_order(mut t in trace(), seed in any::<u64>()) {
        let before = throughput(&t, 500.0).unwrap();
        let n = t.len();
        if n > 1 {
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                t.swap(i, (s >> 33) as usize % (i + 1));
            }
        }
        prop_assert_eq!(throughput(&t, 500.0).unwrap(), before);
    }

    #[test]
    fn overhead_is_scale_invariant(rtr in 0u64..100_000, cbr in 1u64..100_000, k in 1u64..1000) {
        prop_assert!(close(comm_overhead(rtr * k, cbr * k).unwrap(), comm_overhead(rtr, cbr).unwrap()));
    }

    #[test]
    fn bandwidth_conserves_delivered_bits(t in trace()) {
        let series = bandwidth_series(&t, 1.0, 600.0);
        let total: f64 = series.iter().map(|(_, b)| b * 1.0).sum();
        prop_assert!(close(total, throughput_ref(&t, 1)));
        prop_assert!(series.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn reference_values() {
    let t: Vec<Packet> = (0..1000).map(|i| packet((i, 0, 512, i, Some(1)))).collect();
    assert_eq!(throughput(&t, 500.0).unwrap(), 8192.0);
    assert_eq!(throughput(&[], 500.0).unwrap(), 0.0);
    assert_eq!(comm_overhead(50, 200).unwrap(), 0.25);
    assert_eq!(comm_overhead(0, 200).unwrap(), 0.0);
    assert!(matches!(comm_overhead(5, 0), Err(MetricsError::ZeroCbr)));
    assert!(matches!(throughput(&t, 0.0), Err(MetricsError::ZeroDuration)));
}
