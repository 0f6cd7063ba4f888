//! CPLEX LP text.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{MilpError, MilpFlow, MilpInstance, MilpLink, Pair, Sense, VarKind};

const TERMS_PER_LINE: usize = 6;

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn expr(out: &mut String, inst: &MilpInstance, terms: &[(usize, f64)]) {
    for (k, &(v, a)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { "-" } else { "+" };
        let mag = a.abs();
        let name = &inst.vars[v].name;
        if k == 0 && sign == "+" {
            if mag == 1.0 {
                let _ = write!(out, " {name}");
            } else {
                let _ = write!(out, " {} {name}", num(mag));
            }
        } else if mag == 1.0 {
            let _ = write!(out, " {sign} {name}");
        } else {
            let _ = write!(out, " {sign} {} {name}", num(mag));
        }
    }
}

/// Render the instance. Identical instances give identical text.
pub fn export_lp(inst: &MilpInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "\\ traffic grooming: {} flows, {} pairs, {} variables, {} constraints",
        inst.flows.len(),
        inst.pairs.len(),
        inst.vars.len(),
        inst.constraints.len()
    );
    s.push_str(if inst.maximize { "Maximize\n" } else { "Minimize\n" });
    s.push_str(" obj:");
    expr(&mut s, inst, &inst.objective);
    s.push('\n');
    s.push_str("Subject To\n");
    for c in &inst.constraints {
        let _ = write!(s, " {}:", c.name);
        expr(&mut s, inst, &c.terms);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(s, " {op} {}", num(c.rhs));
    }
    s.push_str("Bounds\n");
    for v in &inst.vars {
        let default = match v.kind {
            VarKind::Binary => v.lb == 0.0 && v.ub == 1.0,
            _ => v.lb == 0.0 && v.ub == f64::INFINITY,
        };
        if default {
            continue;
        }
        if v.lb == v.ub {
            let _ = writeln!(s, " {} = {}", v.name, num(v.lb));
        } else {
            let _ = writeln!(s, " {} <= {} <= {}", num(v.lb), v.name, num(v.ub));
        }
    }
    for (kind, head) in [(VarKind::Integer, "General"), (VarKind::Binary, "Binary")] {
        let _ = writeln!(s, "{head}");
        for v in inst.vars.iter().filter(|v| v.kind == kind) {
            let _ = writeln!(s, " {}", v.name);
        }
    }
    s.push_str("End\n");
    s
}

pub fn write_lp(inst: &MilpInstance, path: &Path) -> Result<(), MilpError> {
    std::fs::write(path, export_lp(inst))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDump {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    /// None when unbounded.
    pub ub: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowDump {
    pub name: String,
    pub family: &'static str,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Instance keyed by variable name, for tools that do not read LP text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDump {
    pub maximize: bool,
    pub big_m: f64,
    pub bandwidth: f64,
    pub flows: Vec<MilpFlow>,
    pub links: Vec<MilpLink>,
    pub pairs: Vec<Pair>,
    pub objective: Vec<(String, f64)>,
    pub variables: Vec<VarDump>,
    pub constraints: Vec<RowDump>,
}

pub fn dump_instance(inst: &MilpInstance) -> InstanceDump {
    let named = |terms: &[(usize, f64)]| terms.iter().map(|&(v, a)| (inst.vars[v].name.clone(), a)).collect();
    InstanceDump {
        maximize: inst.maximize,
        big_m: inst.big_m,
        bandwidth: inst.bandwidth,
        flows: inst.flows.clone(),
        links: inst.links.clone(),
        pairs: inst.pairs.clone(),
        objective: named(&inst.objective),
        variables: inst
            .vars
            .iter()
            .map(|v| VarDump {
                name: v.name.clone(),
                kind: v.kind,
                lb: v.lb,
                ub: v.ub.is_finite().then_some(v.ub),
            })
            .collect(),
        constraints: inst
            .constraints
            .iter()
            .map(|c| RowDump {
                name: c.name.clone(),
                family: c.family.tag(),
                terms: named(&c.terms),
                sense: c.sense,
                rhs: c.rhs,
            })
            .collect(),
    }
}
