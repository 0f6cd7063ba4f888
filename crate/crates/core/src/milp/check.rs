use serde::{Deserialize, Serialize};

use super::{CandidateSolution, Family, MilpInstance, Sense, VarKind};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub family: Option<Family>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub rows_checked: usize,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn verdict(&self) -> String {
        match self.first() {
            None => "PASS".into(),
            Some(v) => format!("FAIL {} (lhs {} rhs {})", v.constraint, v.lhs, v.rhs),
        }
    }
}

fn slack(scale: f64) -> f64 {
    TOL * (1.0 + scale)
}

/// Evaluate bounds, integrality, every row and the exact capacity curve.
///
/// Capacity rows of the model go through the linearised load variables;
/// here the load is recomputed from the true products Y X R and compared
/// against the exact capacity at the assigned intensity.
pub fn check_solution(inst: &MilpInstance, cand: &CandidateSolution) -> CheckReport {
    let mut out = CheckReport {
        rows_checked: 0,
        violations: Vec::new(),
    };
    let x = &cand.values;
    if x.len() != inst.vars.len() {
        out.violations.push(Violation {
            constraint: "shape".into(),
            family: None,
            lhs: x.len() as f64,
            rhs: inst.vars.len() as f64,
        });
        return out;
    }
    for (v, &val) in inst.vars.iter().zip(x) {
        let s = slack(val.abs());
        let integral = match v.kind {
            VarKind::Continuous => true,
            _ => (val - val.round()).abs() <= s,
        };
        if !val.is_finite() || val < v.lb - s || val > v.ub + s || !integral {
            out.violations.push(Violation {
                constraint: format!("bound_{}", v.name),
                family: None,
                lhs: val,
                rhs: if val < v.lb { v.lb } else { v.ub },
            });
        }
    }
    for c in &inst.constraints {
        out.rows_checked += 1;
        let mut lhs = 0.0;
        let mut scale = c.rhs.abs();
        for &(v, a) in &c.terms {
            lhs += a * x[v];
            scale += (a * x[v]).abs();
        }
        let s = slack(scale);
        let ok = match c.sense {
            Sense::Le => lhs <= c.rhs + s,
            Sense::Ge => lhs >= c.rhs - s,
            Sense::Eq => (lhs - c.rhs).abs() <= s,
        };
        if !ok {
            out.violations.push(Violation {
                constraint: c.name.clone(),
                family: Some(c.family),
                lhs,
                rhs: c.rhs,
            });
        }
    }
    let ix = &inst.index;
    for (&(li, w), &e) in &ix.e {
        out.rows_checked += 1;
        let mut load = 0.0;
        for (&(l, pi, t, ww, s), _) in ix.z.range((li, 0, 0, 0, 0)..(li + 1, 0, 0, 0, 0)) {
            debug_assert_eq!(l, li);
            if ww != w {
                continue;
            }
            load += x[ix.y[&(pi, t)]] * x[ix.x[&(pi, t, w, s)]] * x[ix.r[&(li, pi, w, s)]];
        }
        let cap = inst.capacity_of(li, x[e]);
        if cap < load - slack(load) {
            out.violations.push(Violation {
                constraint: format!("capacity_exact_l{}_w{}", inst.links[li].id.0, w + 1),
                family: Some(Family::Capacity),
                lhs: cap,
                rhs: load,
            });
        }
    }
    out
}
