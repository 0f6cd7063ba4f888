//! Same workload, same seed, several policies.

use super::network::{run_flows, NetworkConfig, NetworkSummary, Policy};
use super::workload;
use super::SimError;
use crate::topo::PhysicalTopology;

/// One summary row per (load, policy), loads outer. The workload for each
/// load is generated once and replayed under every policy.
pub fn compare_policies(
    topo: &PhysicalTopology,
    base: &NetworkConfig,
    policies: &[Policy],
    loads: &[f64],
) -> Result<Vec<NetworkSummary>, SimError> {
    let mut rows = Vec::with_capacity(policies.len() * loads.len());
    for &load in loads {
        let mut wl = base.workload.clone();
        wl.load = load;
        wl.validate(topo).map_err(SimError::Config)?;
        let flows = workload::generate(topo, &wl, base.seed);
        for &policy in policies {
            let cfg = NetworkConfig {
                policy,
                workload: wl.clone(),
                ..base.clone()
            };
            let m = run_flows(topo, &cfg, &flows)?;
            rows.push(m.summary(policy, load, base.seed));
        }
    }
    Ok(rows)
}
