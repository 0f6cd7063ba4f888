use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tgfso::config::{ExperimentSpec, MilpSpec};
use tgfso::channel;
use tgfso::groom::{provision_r2r, Lightpath};
use tgfso::milp::{
    brute_force_optimum, build_instance, check_solution, dump_instance, export_lp, heuristic_candidate, CandidateSolution,
    MilpInstance, VarKind,
};
use tgfso::queue::{analyse_hop, delay_report, ResidualMode};
use tgfso::sim::compare::compare_policies;
use tgfso::sim::linkfct::{run_link_fct, LinkFctConfig};
use tgfso::sim::network::{run, tg_demand, NetworkSummary, Policy};
use tgfso::sim::queueing::{run_tandem, Discipline};
use tgfso::sim::{workload, SimError};
use tgfso::topo::{build_topology, min_wavelengths, PhysicalTopology, TopologyConfig};

use crate::output::OutDir;
use crate::{Ctx, Status};

/// Delay thresholds probed when the sweep lists none, as multiples of the
/// analytic mean end-to-end delay.
const T_QOS_MULTIPLES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

fn below_bound(tc: &TopologyConfig) -> Option<usize> {
    let bound = min_wavelengths(tc.leaves, tc.spine_ratio);
    (tc.wavelengths < bound).then_some(bound)
}

/// Each command keeps its own manifest so running `analyze` after
/// `simulate` in the same directory leaves both records.
fn finish(out: OutDir, ctx: &Ctx, command: &str) -> Result<()> {
    out.finish(command, &ctx.config, &ctx.config_sha, ctx.spec.seed)
}

fn sim_failure(e: &SimError, what: &str, status: &mut Status) -> Result<()> {
    match e {
        SimError::Unstable { .. } => {
            log::warn!("{what}: {e}");
            status.unstable += 1;
            Ok(())
        }
        SimError::Provision(p) => {
            log::error!("{what}: {p}");
            status.provision_failed = true;
            Ok(())
        }
        _ => bail!("{what}: {e}"),
    }
}

#[derive(Serialize)]
struct LightpathRow {
    wavelengths: usize,
    src_rack: usize,
    dst_rack: usize,
    class: String,
    spine: usize,
    route: String,
    wavelength: usize,
    intensity: String,
    capacity: f64,
}

impl LightpathRow {
    fn new(w: usize, lp: &Lightpath) -> Self {
        Self {
            wavelengths: w,
            src_rack: lp.src_rack,
            dst_rack: lp.dst_rack,
            class: lp.class.to_string(),
            spine: lp.spine,
            route: lp.route_label(),
            wavelength: lp.wavelength.number(),
            intensity: lp
                .intensities
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            capacity: lp.capacity,
        }
    }
}

#[derive(Serialize)]
struct BudgetRow {
    wavelengths: usize,
    link: usize,
    from: usize,
    to: usize,
    distance: f64,
    gain: f64,
    max_capacity: f64,
}

pub fn provision(ctx: &Ctx, lp: bool) -> Result<Status> {
    let spec = &ctx.spec;
    let mut out = OutDir::new(&ctx.out);
    let mut status = Status::default();
    let (mut rows, mut budget) = (Vec::new(), Vec::new());
    for tc in spec.topologies() {
        if let Some(bound) = below_bound(&tc) {
            log::error!(
                "W={} is below the minimum wavelength count ceil(2(N-1)/(eta N)) = {bound} for N={} eta={}",
                tc.wavelengths,
                tc.leaves,
                tc.spine_ratio
            );
            status.provision_failed = true;
            continue;
        }
        let topo = build_topology(&tc)?;
        let mut state = spec.resource_state(&topo);
        out.write_bytes(&format!("topology_w{}.txt", tc.wavelengths), topo.dump_edge_list().as_bytes())?;
        budget.extend(topo.links().iter().map(|l| BudgetRow {
            wavelengths: tc.wavelengths,
            link: l.id.0,
            from: l.from.0,
            to: l.to.0,
            distance: l.distance,
            gain: l.gain,
            max_capacity: channel::capacity(l.gain, state.max_intensity(), topo.bandwidth()),
        }));
        let demand = if spec.demand.from_workload {
            let cfg = spec.network(Policy::TgFso, spec.workload.load);
            cfg.workload.validate(&topo).map_err(anyhow::Error::msg)?;
            let flows = workload::generate(&topo, &cfg.workload, spec.seed);
            tg_demand(&topo, &cfg, &flows)?
        } else {
            spec.uniform_demand(tc.leaves)
        };
        match provision_r2r(&topo, &mut state, &demand, spec.workload.tau_h) {
            Ok(plan) => {
                log::info!(
                    "W={}: {} lightpaths, {} repairs{}",
                    tc.wavelengths,
                    plan.lightpaths.len(),
                    plan.repairs,
                    if plan.structured { ", structured colouring" } else { "" }
                );
                rows.extend(plan.lightpaths.iter().map(|l| LightpathRow::new(tc.wavelengths, l)));
            }
            Err(e) => {
                log::error!("W={}: {e}", tc.wavelengths);
                status.provision_failed = true;
            }
        }
    }
    if !rows.is_empty() {
        out.write_csv("lightpaths.csv", &rows)?;
    }
    if !budget.is_empty() {
        out.write_csv("link_budget.csv", &budget)?;
    }
    if lp {
        let Some(m) = &spec.milp else {
            bail!("--lp needs a [milp] block in the config");
        };
        let (_, inst) = milp_instance(spec, m)?;
        out.write_bytes("milp.lp", export_lp(&inst).as_bytes())?;
    }
    finish(out, ctx, "provision")?;
    Ok(status)
}

#[derive(Serialize)]
struct NetworkRow {
    wavelengths: usize,
    policy: String,
    load: f64,
    seed: u64,
    mf_flows: usize,
    mf_fct_mean: f64,
    mf_fct_p99: f64,
    mf_epoch_delay_mean: f64,
    mf_deadline_met: f64,
    cf_flows: usize,
    cf_fct_mean: f64,
    ef_flows: usize,
    ef_fct_mean: f64,
    ef_fct_p99: f64,
    ef_throughput_mean: f64,
    ef_goodput_mean: f64,
    ef_deadline_met: f64,
    unserved: usize,
    blocked_attempts: usize,
    mean_waiting: f64,
    max_waiting: usize,
}

impl NetworkRow {
    fn new(w: usize, s: NetworkSummary) -> Self {
        Self {
            wavelengths: w,
            policy: s.policy.to_string(),
            load: s.load,
            seed: s.seed,
            mf_flows: s.mf_flows,
            mf_fct_mean: s.mf_fct_mean,
            mf_fct_p99: s.mf_fct_p99,
            mf_epoch_delay_mean: s.mf_epoch_delay_mean,
            mf_deadline_met: s.mf_deadline_met,
            cf_flows: s.cf_flows,
            cf_fct_mean: s.cf_fct_mean,
            ef_flows: s.ef_flows,
            ef_fct_mean: s.ef_fct_mean,
            ef_fct_p99: s.ef_fct_p99,
            ef_throughput_mean: s.ef_throughput_mean,
            ef_goodput_mean: s.ef_goodput_mean,
            ef_deadline_met: s.ef_deadline_met,
            unserved: s.unserved,
            blocked_attempts: s.blocked_attempts,
            mean_waiting: s.mean_waiting,
            max_waiting: s.max_waiting,
        }
    }
}

fn topologies(spec: &ExperimentSpec) -> Result<Vec<(usize, PhysicalTopology)>> {
    spec.topologies()
        .iter()
        .map(|tc| Ok((tc.wavelengths, build_topology(tc)?)))
        .collect()
}

pub fn simulate_network(ctx: &Ctx) -> Result<Status> {
    let spec = &ctx.spec;
    let mut out = OutDir::new(&ctx.out);
    let mut status = Status::default();
    let topos = topologies(spec)?;
    let mut points = Vec::new();
    for (ti, _) in topos.iter().enumerate() {
        for &load in &spec.sweep.loads {
            for &policy in &spec.policies {
                points.push((ti, load, policy));
            }
        }
    }
    let results: Vec<_> = points
        .par_iter()
        .map(|&(ti, load, policy)| {
            let (w, topo) = &topos[ti];
            log::info!("W={w} load={load} {policy}");
            run(topo, &spec.network(policy, load)).map(|m| NetworkRow::new(*w, m.summary(policy, load, spec.seed)))
        })
        .collect();
    let mut rows = Vec::new();
    for (&(ti, load, policy), r) in points.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => sim_failure(&e, &format!("W={} load={load} {policy}", topos[ti].0), &mut status)?,
        }
    }
    if !rows.is_empty() {
        out.write_csv("network.csv", &rows)?;
    }
    if let Some(lf) = &spec.link_fct {
        let rows = link_fct_rows(spec, lf, &mut status)?;
        if !rows.is_empty() {
            out.write_csv("linkfct.csv", &rows)?;
        }
    }
    if out.is_empty() {
        log::info!("empty sweep, nothing written");
    }
    finish(out, ctx, "simulate-network")?;
    Ok(status)
}

#[derive(Serialize)]
struct LinkFctRow {
    discipline: String,
    load: f64,
    seed: u64,
    cf_flows: usize,
    cf_fct_mean: f64,
    cf_fct_p99: f64,
    ef_flows: usize,
    ef_fct_mean: f64,
}

fn link_fct_rows(spec: &ExperimentSpec, lf: &LinkFctConfig, status: &mut Status) -> Result<Vec<LinkFctRow>> {
    let cfgs: Vec<LinkFctConfig> = [Discipline::TwoPriority, Discipline::SingleQueue]
        .into_iter()
        .map(|d| LinkFctConfig {
            seed: spec.seed,
            discipline: d,
            ..lf.clone()
        })
        .collect();
    let results: Vec<_> = cfgs.par_iter().map(run_link_fct).collect();
    let mut rows = Vec::new();
    for (c, r) in cfgs.iter().zip(results) {
        match r {
            Ok(r) => rows.push(LinkFctRow {
                discipline: discipline_name(c.discipline).into(),
                load: c.load,
                seed: c.seed,
                cf_flows: r.cf_fct.len(),
                cf_fct_mean: r.cf_mean(),
                cf_fct_p99: r.cf_p99(),
                ef_flows: r.ef_fct.len(),
                ef_fct_mean: r.ef_mean(),
            }),
            Err(e) => sim_failure(&e, &format!("link fct {}", discipline_name(c.discipline)), status)?,
        }
    }
    Ok(rows)
}

fn discipline_name(d: Discipline) -> &'static str {
    match d {
        Discipline::TwoPriority => "two_priority",
        Discipline::SingleQueue => "single_queue",
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QueueingRow {
    rho: f64,
    flat: f64,
    seed: u64,
    hop: usize,
    arrivals_high: u64,
    arrivals_low: u64,
    /// Empty when the class saw no packets.
    wait_high: Option<f64>,
    wait_low: Option<f64>,
    second_high: Option<f64>,
    second_low: Option<f64>,
    busy_fraction: f64,
    max_queue: usize,
    little_error_high: f64,
    little_error_low: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DelayRow {
    rho: f64,
    flat: f64,
    seed: u64,
    t_qos: f64,
    delay_high_mean: f64,
    delay_low_mean: f64,
    late_fraction: f64,
}

/// Thresholds for one (rho, flat) point.
fn t_qos_grid(spec: &ExperimentSpec, rho: f64, flat: f64) -> Vec<f64> {
    if !spec.sweep.t_qos.is_empty() {
        return spec.sweep.t_qos.clone();
    }
    let q = &spec.queueing;
    let per_hop = spec
        .queueing
        .tandem(spec.seed, rho, flat)
        .ok()
        .and_then(|t| analyse_hop(&t.path_model(0.0).hops[0], flat, ResidualMode::Standard).ok())
        .map(|r| r.mean_delay)
        .unwrap_or(q.service.mean() + q.propagation);
    T_QOS_MULTIPLES.iter().map(|m| m * per_hop * q.hops as f64).collect()
}

fn queue_points(spec: &ExperimentSpec) -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for &rho in &spec.sweep.loads {
        for &flat in &spec.sweep.flats {
            v.push((rho, flat));
        }
    }
    v
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn simulate_queueing(ctx: &Ctx) -> Result<Status> {
    let spec = &ctx.spec;
    let q = &spec.queueing;
    let mut out = OutDir::new(&ctx.out);
    let mut status = Status::default();
    let mut points = Vec::new();
    for (rho, flat) in queue_points(spec) {
        for rep in 0..q.replications as u64 {
            points.push((rho, flat, spec.seed.wrapping_add(rep)));
        }
    }
    let results: Vec<_> = points
        .par_iter()
        .map(|&(rho, flat, seed)| -> Result<_> {
            let mut cfg = q.tandem(seed, rho, flat)?;
            cfg.discipline = spec.network.discipline;
            log::info!("rho={rho} flat={flat} seed={seed}");
            Ok(run_tandem(&cfg))
        })
        .collect();
    let (mut hops, mut delays) = (Vec::new(), Vec::new());
    for (&(rho, flat, seed), r) in points.iter().zip(results) {
        let r = match r? {
            Ok(r) => r,
            Err(e) => {
                sim_failure(&e, &format!("rho={rho} flat={flat} seed={seed}"), &mut status)?;
                continue;
            }
        };
        for (h, s) in r.hops.iter().enumerate() {
            hops.push(QueueingRow {
                rho,
                flat,
                seed,
                hop: h + 1,
                arrivals_high: s.high.arrivals,
                arrivals_low: s.low.arrivals,
                wait_high: (s.high.arrivals > 0).then(|| s.high.mean_wait()),
                wait_low: (s.low.arrivals > 0).then(|| s.low.mean_wait()),
                second_high: (s.high.arrivals > 0).then(|| s.high.second_wait()),
                second_low: (s.low.arrivals > 0).then(|| s.low.second_wait()),
                busy_fraction: if r.horizon > 0.0 { s.busy_time / r.horizon } else { 0.0 },
                max_queue: s.max_queue,
                little_error_high: r.little_error(h, true),
                little_error_low: r.little_error(h, false),
            });
        }
        for t in t_qos_grid(spec, rho, flat) {
            delays.push(DelayRow {
                rho,
                flat,
                seed,
                t_qos: t,
                delay_high_mean: mean(&r.delays_high),
                delay_low_mean: mean(&r.delays_low),
                late_fraction: r.late_fraction(t, flat),
            });
        }
    }
    if !hops.is_empty() {
        out.write_csv("queueing.csv", &hops)?;
        out.write_csv("queueing_delay.csv", &delays)?;
    } else {
        log::info!("empty sweep, nothing written");
    }
    finish(out, ctx, "simulate-queueing")?;
    Ok(status)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<Vec<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(rows))
}

#[derive(Serialize)]
struct AnalysisRow {
    rho: f64,
    flat: f64,
    hop: usize,
    rho_h: f64,
    rho_l: f64,
    wait_high: f64,
    wait_low: f64,
    mean_delay: f64,
    sim_data: bool,
    sim_wait_high: Option<f64>,
    sim_wait_low: Option<f64>,
    rel_err_high: Option<f64>,
    rel_err_low: Option<f64>,
}

#[derive(Serialize)]
struct BlockingRow {
    rho: f64,
    flat: f64,
    t_qos: f64,
    h_star: usize,
    shortcut: usize,
    taylor: f64,
    mu_h: f64,
    sigma_h: f64,
    mu_l: f64,
    sigma_l: f64,
    p_block: f64,
    sim_data: bool,
    sim_late_fraction: Option<f64>,
}

type Key = (u64, u64);

fn key(rho: f64, flat: f64) -> Key {
    (rho.to_bits(), flat.to_bits())
}

fn rel(sim: f64, model: f64) -> f64 {
    if model == 0.0 {
        if sim == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (sim - model).abs() / model
    }
}

pub fn analyze(ctx: &Ctx) -> Result<Status> {
    let spec = &ctx.spec;
    let q = &spec.queueing;
    let mut out = OutDir::new(&ctx.out);
    let mut status = Status::default();
    let sim_hops: Vec<QueueingRow> = read_csv(&out.path("queueing.csv"))?.unwrap_or_default();
    let sim_delays: Vec<DelayRow> = read_csv(&out.path("queueing_delay.csv"))?.unwrap_or_default();

    let mut waits: BTreeMap<(Key, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &sim_hops {
        let e = waits.entry((key(r.rho, r.flat), r.hop)).or_default();
        e.0.extend(r.wait_high);
        e.1.extend(r.wait_low);
    }
    let mut late: BTreeMap<(Key, u64), Vec<f64>> = BTreeMap::new();
    for r in &sim_delays {
        late.entry((key(r.rho, r.flat), r.t_qos.to_bits()))
            .or_default()
            .push(r.late_fraction);
    }

    let (mut rows, mut blocking) = (Vec::new(), Vec::new());
    for (rho, flat) in queue_points(spec) {
        let cfg = q.tandem(spec.seed, rho, flat)?;
        let mut unstable = false;
        for (h, hop) in cfg.path_model(0.0).hops.iter().enumerate() {
            let r = match analyse_hop(hop, flat, ResidualMode::Standard) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("rho={rho} flat={flat}: {e}");
                    unstable = true;
                    break;
                }
            };
            let sim = waits.get(&(key(rho, flat), h + 1));
            let sim_high = sim.filter(|s| !s.0.is_empty()).map(|s| mean(&s.0));
            let sim_low = sim.filter(|s| !s.1.is_empty()).map(|s| mean(&s.1));
            rows.push(AnalysisRow {
                rho,
                flat,
                hop: h + 1,
                rho_h: r.rho_h,
                rho_l: r.rho_l,
                wait_high: r.high.mean,
                wait_low: r.low.mean,
                mean_delay: r.mean_delay,
                sim_data: sim.is_some(),
                sim_wait_high: sim_high,
                sim_wait_low: sim_low,
                rel_err_high: sim_high.map(|x| rel(x, r.high.mean)),
                rel_err_low: sim_low.map(|x| rel(x, r.low.mean)),
            });
        }
        if unstable {
            status.unstable += 1;
            continue;
        }
        for t in t_qos_grid(spec, rho, flat) {
            let d = delay_report(&cfg.path_model(t), flat)?;
            let sim = late.get(&(key(rho, flat), t.to_bits())).map(|v| mean(v));
            blocking.push(BlockingRow {
                rho,
                flat,
                t_qos: t,
                h_star: d.hop_count.exact,
                shortcut: d.hop_count.shortcut,
                taylor: d.hop_count.taylor,
                mu_h: d.blocking.mu_h,
                sigma_h: d.blocking.sigma_h,
                mu_l: d.blocking.mu_l,
                sigma_l: d.blocking.sigma_l,
                p_block: d.blocking.probability,
                sim_data: sim.is_some(),
                sim_late_fraction: sim,
            });
        }
    }
    if !rows.is_empty() {
        out.write_csv("analysis.csv", &rows)?;
    }
    if !blocking.is_empty() {
        out.write_csv("analysis_blocking.csv", &blocking)?;
    }
    finish(out, ctx, "analyze")?;
    Ok(status)
}

fn milp_instance(spec: &ExperimentSpec, m: &MilpSpec) -> Result<(PhysicalTopology, MilpInstance)> {
    let topo = build_topology(&spec.topology)?;
    let state = spec.resource_state(&topo);
    let inst = build_instance(&topo, &m.demand(&topo)?, &m.options(&state))?;
    Ok((topo, inst))
}

#[derive(Serialize)]
struct MilpSummary {
    flows: usize,
    pairs: usize,
    variables: usize,
    integer: usize,
    binary: usize,
    continuous: usize,
    constraints: usize,
    families: BTreeMap<&'static str, usize>,
}

#[derive(Serialize)]
struct SolveReport {
    objective: f64,
    admitted: f64,
    lightpaths: usize,
    verdict: String,
}

#[derive(Serialize)]
struct BruteReport {
    evaluated: u64,
    feasible: u64,
    brute: SolveReport,
    heuristic: SolveReport,
    /// Admitted demand the heuristic leaves on the table.
    admitted_gap: f64,
}

pub fn milp(ctx: &Ctx, brute: bool, check: Option<&Path>) -> Result<Status> {
    let spec = &ctx.spec;
    let Some(m) = &spec.milp else {
        bail!("the config has no [milp] block");
    };
    let (topo, inst) = milp_instance(spec, m)?;
    let mut out = OutDir::new(&ctx.out);
    let mut families = BTreeMap::new();
    for c in &inst.constraints {
        *families.entry(c.family.tag()).or_insert(0) += 1;
    }
    let summary = MilpSummary {
        flows: inst.flows.len(),
        pairs: inst.pairs.len(),
        variables: inst.var_count(),
        integer: inst.count_kind(VarKind::Integer),
        binary: inst.count_kind(VarKind::Binary),
        continuous: inst.count_kind(VarKind::Continuous),
        constraints: inst.constraints.len(),
        families,
    };
    log::info!(
        "{} variables ({} integer, {} binary), {} constraints",
        summary.variables,
        summary.integer,
        summary.binary,
        summary.constraints
    );
    out.write_bytes("milp.lp", export_lp(&inst).as_bytes())?;
    out.write_json("milp_summary.json", &summary)?;
    out.write_json("instance.json", &dump_instance(&inst))?;

    if brute {
        let b = brute_force_optimum(&inst, &m.brute)?;
        let state = spec.resource_state(&topo);
        let h = heuristic_candidate(&topo, &inst, &state)?;
        let report = BruteReport {
            evaluated: b.evaluated,
            feasible: b.feasible,
            brute: SolveReport {
                objective: b.objective,
                admitted: b.admitted,
                lightpaths: b.assignment.lightpaths.len(),
                verdict: check_solution(&inst, &b.candidate).verdict(),
            },
            heuristic: SolveReport {
                objective: inst.objective_value(&h.candidate.values),
                admitted: h.admitted,
                lightpaths: h.assignment.lightpaths.len(),
                verdict: check_solution(&inst, &h.candidate).verdict(),
            },
            admitted_gap: b.admitted - h.admitted,
        };
        println!(
            "optimum {} (admitted {}), heuristic admitted {}: {}",
            report.brute.objective, report.brute.admitted, report.heuristic.admitted, report.heuristic.verdict
        );
        out.write_json("milp_brute.json", &report)?;
        out.write_json("milp_optimum.json", &b.candidate.to_named(&inst))?;
    }

    if let Some(path) = check {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let named: BTreeMap<String, f64> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let cand = CandidateSolution::from_named(&inst, &named)?;
        let r = check_solution(&inst, &cand);
        println!("{}", r.verdict());
        out.write_json("milp_check.json", &r)?;
    }
    finish(out, ctx, "milp")?;
    Ok(Status::default())
}

pub fn compare(ctx: &Ctx) -> Result<Status> {
    let spec = &ctx.spec;
    let mut out = OutDir::new(&ctx.out);
    let mut status = Status::default();
    if spec.policies.is_empty() || spec.sweep.loads.is_empty() {
        log::info!("empty sweep, nothing written");
        return Ok(status);
    }
    let topos = topologies(spec)?;
    let base = spec.network(spec.policies[0], spec.workload.load);
    let results: Vec<_> = topos
        .par_iter()
        .map(|(_, topo)| compare_policies(topo, &base, &spec.policies, &spec.sweep.loads))
        .collect();
    let mut rows = Vec::new();
    for ((w, _), r) in topos.iter().zip(results) {
        match r {
            Ok(s) => rows.extend(s.into_iter().map(|s| NetworkRow::new(*w, s))),
            Err(e) => sim_failure(&e, &format!("W={w}"), &mut status)?,
        }
    }
    for r in &rows {
        println!(
            "W={} load={} {:<11} mf_fct={:.3e} mf_met={:.3} ef_tput={:.3e} ef_fct={:.3e}",
            r.wavelengths, r.load, r.policy, r.mf_fct_mean, r.mf_deadline_met, r.ef_throughput_mean, r.ef_fct_mean
        );
    }
    if !rows.is_empty() {
        out.write_csv("compare.csv", &rows)?;
    }
    finish(out, ctx, "compare")?;
    Ok(status)
}
