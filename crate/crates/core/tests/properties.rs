use std::collections::BTreeSet;

use proptest::prelude::*;
use tgfso::channel;
use tgfso::groom::{groom_3step, provision_r2r, Flow, FlowClass, R2rDemand};
use tgfso::queue::TrafficMix;
use tgfso::sim::network::{calibrated_state, run, NetworkConfig, Policy};
use tgfso::sim::queueing::{run_tandem, Discipline, ServiceLaw, TandemConfig, TraceKind};
use tgfso::sim::workload::WorkloadConfig;
use tgfso::topo::{build_topology, min_wavelengths, PhysicalTopology, SpineRatio, TopologyConfig};

fn mesh(n: usize, servers: usize, w: usize) -> PhysicalTopology {
    build_topology(&TopologyConfig::uniform(n, SpineRatio::half(), servers, w)).unwrap()
}

proptest! {
    #[test]
    fn capacity_inverts_to_1e9(gain in 1e-8f64..1e-5, demand in 1e3f64..2e11) {
        let b = 10e9;
        let e = channel::intensity_for_demand(gain, demand, b);
        let c = channel::capacity(gain, e, b);
        prop_assert!((c - demand).abs() <= 1e-9 * demand, "{c} vs {demand}");
    }

    #[test]
    fn capacity_is_monotone_in_intensity(gain in 1e-8f64..1e-5, a in 0.0f64..1e9, b in 0.0f64..1e9) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(channel::capacity(gain, lo, 10e9) <= channel::capacity(gain, hi, 10e9));
    }

    #[test]
    fn grooming_conserves_sizes_and_members(
        raw in proptest::collection::vec((0usize..12, 0usize..12, 1u64..200_000, 0.0f64..5e-3), 0..80),
    ) {
        let t = mesh(4, 3, 3);
        let server = |k: usize| t.server(k / 3, k % 3);
        let flows: Vec<Flow> = raw
            .iter()
            .enumerate()
            .filter(|(_, r)| r.0 != r.1)
            .map(|(id, &(s, d, bytes, arrival))| Flow {
                id: id as u64,
                src: server(s),
                dst: server(d),
                index: 0,
                class: FlowClass::Mice,
                bytes,
                arrival,
                deadline: 1e-3,
            })
            .collect();
        let g = groom_3step(&t, &flows, FlowClass::Mice, 1e-3).unwrap();
        let total: u64 = flows.iter().map(|f| f.bytes).sum();
        let ids: BTreeSet<u64> = flows.iter().map(|f| f.id).collect();
        for stage in [&g.s2s, &g.s2r, &g.r2r] {
            prop_assert_eq!(stage.iter().map(|x| x.bytes).sum::<u64>(), total);
            let members: Vec<u64> = stage.iter().flat_map(|x| x.members.iter().copied()).collect();
            prop_assert_eq!(members.len(), ids.len());
            prop_assert_eq!(members.into_iter().collect::<BTreeSet<_>>(), ids.clone());
            for x in stage {
                let sum: u64 = x.members.iter().map(|&m| flows.iter().find(|f| f.id == m).unwrap().bytes).sum();
                prop_assert_eq!(sum, x.bytes);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn r2r_lightpaths_never_collide(
        half_n in 1usize..5,
        extra_w in 0usize..3,
        rates in proptest::collection::vec(0.0f64..2.4e9, 112),
    ) {
        let n = 2 * half_n;
        let w = min_wavelengths(n, SpineRatio::half()) + extra_w;
        let t = mesh(n, 1, w);
        let mut st = calibrated_state(&t, 10e9);
        let mut d = R2rDemand::zero(n);
        let mut k = 0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                d.set(FlowClass::Critical, i, j, rates[k % rates.len()] * 1e-3 / 4.0);
                d.set(FlowClass::Mice, i, j, rates[(k + 1) % rates.len()] * 1e-3);
                k += 2;
            }
        }
        let plan = provision_r2r(&t, &mut st, &d, 1e-3).unwrap();
        prop_assert_eq!(plan.lightpaths.len(), 2 * n * (n - 1));
        let mut used = BTreeSet::new();
        for lp in &plan.lightpaths {
            prop_assert!(lp.wavelength.number() <= w);
            for &l in &lp.links {
                prop_assert!(used.insert((l, lp.wavelength)), "{l} {:?} twice", lp.wavelength);
            }
            let want = d.get(lp.class, lp.src_rack, lp.dst_rack) / 1e-3;
            prop_assert!((lp.capacity - want).abs() <= 1e-9 * want.max(1.0));
        }
        prop_assert!(st.check_invariants().is_ok());
    }

    #[test]
    fn r2r_below_the_bound_always_fails(half_n in 2usize..6) {
        let n = 2 * half_n;
        let w = min_wavelengths(n, SpineRatio::half()) - 1;
        let t = mesh(n, 1, w);
        let mut st = calibrated_state(&t, 10e9);
        let before = st.clone();
        prop_assert!(provision_r2r(&t, &mut st, &R2rDemand::zero(n), 1e-3).is_err());
        prop_assert_eq!(st, before);
    }

    #[test]
    fn tandem_obeys_littles_law_priority_and_work_conservation(
        seed in 0u64..1_000,
        rho_h in 0.05f64..0.5,
        rho_l in 0.0f64..0.35,
        hops in 1usize..4,
        det in proptest::bool::ANY,
    ) {
        let service = if det {
            ServiceLaw::Deterministic { mean: 1e-3 }
        } else {
            ServiceLaw::Exponential { mean: 1e-3 }
        };
        let mix = TrafficMix::from_classes(rho_h / 1e-3, rho_l / 1e-3).unwrap();
        let mut cfg = TandemConfig::new(seed, hops, mix, service, 5_000);
        cfg.trace = true;
        let r = run_tandem(&cfg).unwrap();
        for h in 0..hops {
            prop_assert!(r.little_error(h, true) <= 0.03);
            prop_assert!(r.little_error(h, false) <= 0.03);
            // Every packet is served once, so busy time is the total work.
            let served = (r.hops[h].high.arrivals + r.hops[h].low.arrivals) as f64;
            if det {
                prop_assert!((r.hops[h].busy_time - served * 1e-3).abs() <= 1e-9 * served.max(1.0));
            }
        }
        for e in &r.trace {
            if e.kind == TraceKind::Start && !e.high {
                prop_assert_eq!(e.queued_high, 0);
            }
            if !e.busy {
                prop_assert_eq!(e.queued_high + e.queued_low, 0);
            }
        }
    }

    #[test]
    fn single_queue_trace_is_work_conserving(seed in 0u64..1_000, rho in 0.1f64..0.8) {
        let mix = TrafficMix::from_classes(rho * 0.8 / 1e-3, rho * 0.2 / 1e-3).unwrap();
        let mut cfg = TandemConfig::new(seed, 2, mix, ServiceLaw::Exponential { mean: 1e-3 }, 3_000);
        cfg.trace = true;
        cfg.discipline = Discipline::SingleQueue;
        let r = run_tandem(&cfg).unwrap();
        for e in &r.trace {
            if !e.busy {
                prop_assert_eq!(e.queued_high + e.queued_low, 0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn network_runs_repeat_exactly(seed in 0u64..1_000, load in 0.1f64..1.0) {
        let t = mesh(4, 25, 4);
        let wl = WorkloadConfig {
            sets_per_rack: 2,
            duration: 0.02,
            load,
            ..WorkloadConfig::default()
        };
        for policy in Policy::ALL {
            let mut cfg = NetworkConfig::new(seed, policy, wl.clone());
            cfg.mf_rate = Some(5e9);
            cfg.check_invariants = true;
            let a = run(&t, &cfg).unwrap();
            let b = run(&t, &cfg).unwrap();
            prop_assert_eq!(
                serde_json::to_string(&a.summary(policy, load, seed)).unwrap(),
                serde_json::to_string(&b.summary(policy, load, seed)).unwrap()
            );
            prop_assert_eq!(a.flows.len(), b.flows.len());
            for (x, y) in a.flows.iter().zip(&b.flows) {
                prop_assert_eq!(x.finish.to_bits(), y.finish.to_bits());
            }
        }
    }
}
