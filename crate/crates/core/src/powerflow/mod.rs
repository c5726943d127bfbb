//! Radial distribution feeder model and steady-state load flow.
//!
//! The solver is a backward-forward sweep on the feeder tree: node currents
//! from constant-PQ injections, branch currents accumulated leaf to root,
//! voltages updated root to leaf, iterated to a 1e-8 pu fixed point. The
//! module wrapping it is algebraic and time-invariant: outputs are recomputed
//! in the same instant any electrical input changes.

mod module;

use std::collections::BTreeMap;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

pub use module::{InjectionBinding, InjectionSign, PowerflowConfig, PowerflowModule};

use crate::error::{ConfigError, SimError};

pub const V_TOLERANCE_PU: f64 = 1e-8;
pub const MAX_SWEEP_ITERATIONS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Nominal voltage in kV (per-unit base for this bus).
    pub kv: f64,
    #[serde(default)]
    pub slack: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Series impedance in ohms, referred to the to-side voltage base.
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub rating_kva: f64,
    #[serde(default = "default_branch_kind")]
    pub kind: BranchKind,
}

fn default_branch_kind() -> BranchKind {
    BranchKind::Line
}

/// Static per-bus injection (load positive, generation negative).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Injection {
    pub bus: String,
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default)]
    pub q_kvar: f64,
}

/// A radial feeder: a tree of buses rooted at the single slack bus.
#[derive(Clone, Debug)]
pub struct FeederNetwork {
    pub s_base_kva: f64,
    pub slack_v_pu: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Base injection per bus, aligned with `buses`.
    pub base_injections: Vec<(f64, f64)>,
    slack: usize,
    bus_index: BTreeMap<String, usize>,
    /// Parent branch per bus (None for the slack).
    parent: Vec<Option<usize>>,
    /// Buses in breadth-first order from the slack.
    order: Vec<usize>,
}

impl FeederNetwork {
    pub fn new(
        s_base_kva: f64,
        slack_v_pu: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        injections: Vec<Injection>,
    ) -> Result<Self, ConfigError> {
        if !(s_base_kva > 0.0) {
            return Err(ConfigError::Invalid("s_base_kva must be > 0".into()));
        }
        let mut bus_index = BTreeMap::new();
        for (i, b) in buses.iter().enumerate() {
            if !(b.kv > 0.0) {
                return Err(ConfigError::Invalid(format!("bus `{}` needs kv > 0", b.id)));
            }
            if bus_index.insert(b.id.clone(), i).is_some() {
                return Err(ConfigError::Invalid(format!("duplicate bus id `{}`", b.id)));
            }
        }
        let slacks: Vec<usize> =
            buses.iter().enumerate().filter(|(_, b)| b.slack).map(|(i, _)| i).collect();
        if slacks.len() != 1 {
            return Err(ConfigError::Invalid(format!(
                "feeder needs exactly one slack bus (found {})",
                slacks.len()
            )));
        }
        let slack = slacks[0];
        for br in &branches {
            if !(br.rating_kva > 0.0) {
                return Err(ConfigError::Invalid(format!("branch `{}` needs rating > 0", br.id)));
            }
            for end in [&br.from, &br.to] {
                if !bus_index.contains_key(end) {
                    return Err(ConfigError::DanglingReference {
                        reference: end.clone(),
                        context: format!("branch `{}`", br.id),
                    });
                }
            }
        }
        if branches.len() + 1 != buses.len() {
            return Err(ConfigError::Invalid(format!(
                "radial feeder requires exactly n-1 branches ({} buses, {} branches)",
                buses.len(),
                branches.len()
            )));
        }
        // Orient the tree away from the slack; every bus must be reached
        // exactly once or the topology is not a tree.
        let n = buses.len();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut visited = vec![false; n];
        visited[slack] = true;
        let mut order = vec![slack];
        let mut frontier = 0;
        while frontier < order.len() {
            let at = order[frontier];
            frontier += 1;
            for (bi, br) in branches.iter().enumerate() {
                let (a, b) = (bus_index[&br.from], bus_index[&br.to]);
                let next = if a == at && !visited[b] {
                    Some(b)
                } else if b == at && !visited[a] {
                    Some(a)
                } else {
                    continue;
                };
                if let Some(nb) = next {
                    visited[nb] = true;
                    parent[nb] = Some(bi);
                    order.push(nb);
                }
            }
        }
        if order.len() != n {
            let missing =
                buses.iter().enumerate().find(|(i, _)| !visited[*i]).map(|(_, b)| b.id.clone());
            return Err(ConfigError::Invalid(format!(
                "feeder is not a tree rooted at the slack (bus `{}` unreachable)",
                missing.unwrap_or_default()
            )));
        }
        let mut base_injections = vec![(0.0, 0.0); n];
        for inj in injections {
            let &i = bus_index.get(&inj.bus).ok_or_else(|| ConfigError::DanglingReference {
                reference: inj.bus.clone(),
                context: "injection".into(),
            })?;
            base_injections[i].0 += inj.p_kw;
            base_injections[i].1 += inj.q_kvar;
        }
        Ok(FeederNetwork {
            s_base_kva,
            slack_v_pu,
            buses,
            branches,
            base_injections,
            slack,
            bus_index,
            parent,
            order,
        })
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    fn parent_bus_of(&self, bus: usize) -> Option<usize> {
        self.parent[bus].map(|pb| {
            let br = &self.branches[pb];
            let (a, b) = (self.bus_index[&br.from], self.bus_index[&br.to]);
            if b == bus {
                a
            } else {
                b
            }
        })
    }

    /// Branch impedance in per unit on the to-side voltage base.
    fn z_pu(&self, branch: &Branch) -> Complex<f64> {
        let to_kv = self.buses[self.bus_index[&branch.to]].kv;
        let z_base = to_kv * to_kv * 1000.0 / self.s_base_kva;
        Complex::new(branch.r_ohm / z_base, branch.x_ohm / z_base)
    }

    /// Series R, X (ohms) summed along the unique tree path between two buses.
    pub fn path_impedance_ohm(&self, from: &str, to: &str) -> Result<(f64, f64), ConfigError> {
        let a = self.bus_index(from).ok_or_else(|| ConfigError::DanglingReference {
            reference: from.into(),
            context: "path".into(),
        })?;
        let b = self.bus_index(to).ok_or_else(|| ConfigError::DanglingReference {
            reference: to.into(),
            context: "path".into(),
        })?;
        let climb = |mut i: usize| {
            let mut chain = vec![i];
            while let Some(p) = self.parent_bus_of(i) {
                chain.push(p);
                i = p;
            }
            chain
        };
        let ca = climb(a);
        let cb = climb(b);
        let common = *ca.iter().find(|i| cb.contains(i)).expect("tree has a common ancestor");
        let mut r = 0.0;
        let mut x = 0.0;
        for chain in [&ca, &cb] {
            for &i in chain.iter().take_while(|&&i| i != common) {
                let br = &self.branches[self.parent[i].expect("non-root has a parent branch")];
                r += br.r_ohm;
                x += br.x_ohm;
            }
        }
        Ok((r, x))
    }
}

#[derive(Clone, Debug)]
pub struct LoadFlowResult {
    /// Per-bus voltage magnitude (pu) and angle (rad), aligned with buses.
    pub v_pu: Vec<f64>,
    pub angle_rad: Vec<f64>,
    /// Sending-end apparent power per branch (kVA).
    pub branch_kva: Vec<f64>,
    /// 100 · S_branch / rating.
    pub loading_pct: Vec<f64>,
    pub slack_p_kw: f64,
    pub slack_q_kvar: f64,
    pub iterations: usize,
}

impl LoadFlowResult {
    pub fn max_loading_pct(&self) -> f64 {
        self.loading_pct.iter().copied().fold(0.0, f64::max)
    }
}

/// Backward-forward sweep at the given effective injections (kW/kvar per
/// bus, load positive).
pub fn solve_load_flow(
    net: &FeederNetwork,
    injections: &[(f64, f64)],
) -> Result<LoadFlowResult, SimError> {
    let n = net.buses.len();
    assert_eq!(injections.len(), n);
    for (p, q) in injections {
        if !p.is_finite() || !q.is_finite() {
            return Err(SimError::Module { module: String::new(), msg: "non-finite injection".into() });
        }
    }
    let s_pu: Vec<Complex<f64>> = injections
        .iter()
        .map(|&(p, q)| Complex::new(p / net.s_base_kva, q / net.s_base_kva))
        .collect();
    let z: Vec<Complex<f64>> = net.branches.iter().map(|b| net.z_pu(b)).collect();

    let mut v = vec![Complex::new(net.slack_v_pu, 0.0); n];
    let mut i_branch = vec![Complex::new(0.0, 0.0); net.branches.len()];
    let mut iterations = 0;
    loop {
        iterations += 1;
        // Backward: node currents, accumulated leaf to root.
        let mut i_acc: Vec<Complex<f64>> = (0..n).map(|b| (s_pu[b] / v[b]).conj()).collect();
        for &b in net.order.iter().rev() {
            if let Some(pb) = net.parent[b] {
                i_branch[pb] = i_acc[b];
                let p = net.parent_bus_of(b).expect("non-root");
                let add = i_acc[b];
                i_acc[p] += add;
            }
        }
        // Forward: voltage drops root to leaf.
        let mut max_dv = 0.0_f64;
        for &b in &net.order {
            if let Some(pb) = net.parent[b] {
                let p = net.parent_bus_of(b).expect("non-root");
                let newv = v[p] - z[pb] * i_branch[pb];
                max_dv = max_dv.max((newv - v[b]).norm());
                v[b] = newv;
            }
        }
        if max_dv < V_TOLERANCE_PU {
            break;
        }
        if iterations >= MAX_SWEEP_ITERATIONS {
            return Err(SimError::NoConvergence(MAX_SWEEP_ITERATIONS));
        }
    }

    let mut branch_kva = vec![0.0; net.branches.len()];
    let mut loading_pct = vec![0.0; net.branches.len()];
    let mut i_root = Complex::new(0.0, 0.0);
    for (bi, br) in net.branches.iter().enumerate() {
        let (a, b) = (net.bus_index[&br.from], net.bus_index[&br.to]);
        let child = if net.parent[b] == Some(bi) { b } else { a };
        let parent_bus = net.parent_bus_of(child).expect("non-root");
        let s = v[parent_bus] * i_branch[bi].conj();
        branch_kva[bi] = s.norm() * net.s_base_kva;
        loading_pct[bi] = 100.0 * branch_kva[bi] / br.rating_kva;
        if parent_bus == net.slack {
            i_root += i_branch[bi];
        }
    }
    // Slack injection balances total load plus series losses.
    let s_slack = v[net.slack] * i_root.conj() + s_pu[net.slack];
    Ok(LoadFlowResult {
        v_pu: v.iter().map(|c| c.norm()).collect(),
        angle_rad: v.iter().map(|c| c.arg()).collect(),
        branch_kva,
        loading_pct,
        slack_p_kw: s_slack.re * net.s_base_kva,
        slack_q_kvar: s_slack.im * net.s_base_kva,
        iterations,
    })
}

/// Branch loadings in descending order; ties broken by branch id.
pub fn loading_report<'a>(net: &'a FeederNetwork, result: &LoadFlowResult) -> Vec<(&'a str, f64)> {
    let mut rows: Vec<(&str, f64)> = net
        .branches
        .iter()
        .zip(&result.loading_pct)
        .map(|(b, &l)| (b.id.as_str(), l))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows
}

/// The two-bus voltage-drop relation
/// `U1² = (U2 + (R·P + X·Q)/U2)² + (X·P − R·Q)²/U2²`,
/// evaluated in SI units internally; voltages in pu on `kv_base`, P in kW,
/// Q in kvar, R and X in ohms.
pub fn volt_drop_forward(
    u1_pu: f64,
    p_kw: f64,
    q_kvar: f64,
    r_ohm: f64,
    x_ohm: f64,
    kv_base: f64,
) -> Result<f64, SimError> {
    if !(u1_pu > 0.0) {
        return Err(SimError::Module { module: String::new(), msg: "U1 must be > 0".into() });
    }
    let vb = kv_base * 1e3;
    let u1 = u1_pu * vb;
    let p = p_kw * 1e3;
    let q = q_kvar * 1e3;
    // Quadratic in y = U2²:
    //   y² + (2(RP + XQ) − U1²) y + (RP + XQ)² + (XP − RQ)² = 0
    let a = r_ohm * p + x_ohm * q;
    let b = x_ohm * p - r_ohm * q;
    let bq = 2.0 * a - u1 * u1;
    let cq = a * a + b * b;
    let disc = bq * bq - 4.0 * cq;
    if disc < 0.0 {
        return Err(SimError::Module {
            module: String::new(),
            msg: "voltage collapse: no real solution for U2".into(),
        });
    }
    // The physical high-voltage root.
    let y = 0.5 * (-bq + disc.sqrt());
    Ok(y.sqrt() / vb)
}

#[derive(Debug, thiserror::Error)]
pub enum VoltVarError {
    /// No reactive injection reaches the target; the caller saturates.
    #[error("target voltage unreachable with reactive power alone")]
    Unreachable,
    #[error("{0}")]
    Invalid(String),
}

/// Solve the voltage-drop relation for Q given a target receiving-end
/// voltage. When two real roots exist, the smaller-magnitude one is
/// returned.
pub fn solve_q_for_target(
    u1_pu: f64,
    u2_target_pu: f64,
    p_kw: f64,
    r_ohm: f64,
    x_ohm: f64,
    kv_base: f64,
) -> Result<f64, VoltVarError> {
    if !(u1_pu > 0.0) || !(u2_target_pu > 0.0) {
        return Err(VoltVarError::Invalid("voltages must be > 0".into()));
    }
    let vb = kv_base * 1e3;
    let u1 = u1_pu * vb;
    let u2 = u2_target_pu * vb;
    let p = p_kw * 1e3;
    // (U2² + RP + XQ)² + (XP − RQ)² = U1²U2², quadratic in Q.
    let alpha = u2 * u2 + r_ohm * p;
    let beta = x_ohm * p;
    let aq = x_ohm * x_ohm + r_ohm * r_ohm;
    let bq = 2.0 * (alpha * x_ohm - beta * r_ohm);
    let cq = alpha * alpha + beta * beta - u1 * u1 * u2 * u2;
    if aq == 0.0 {
        if bq == 0.0 {
            return Err(VoltVarError::Unreachable);
        }
        return Ok(-cq / bq / 1e3);
    }
    let disc = bq * bq - 4.0 * aq * cq;
    if disc < 0.0 {
        return Err(VoltVarError::Unreachable);
    }
    let sq = disc.sqrt();
    let r1 = (-bq + sq) / (2.0 * aq);
    let r2 = (-bq - sq) / (2.0 * aq);
    let q = if r1.abs() <= r2.abs() { r1 } else { r2 };
    Ok(q / 1e3)
}

/// Parse a feeder description from structured text.
pub fn parse_network(text: &str, path: &str) -> Result<FeederNetwork, ConfigError> {
    #[derive(Deserialize)]
    struct Root {
        network: Meta,
        #[serde(default, rename = "bus")]
        buses: Vec<Bus>,
        #[serde(default, rename = "branch")]
        branches: Vec<Branch>,
        #[serde(default, rename = "injection")]
        injections: Vec<Injection>,
    }
    #[derive(Deserialize)]
    struct Meta {
        s_base_kva: f64,
        #[serde(default = "default_slack_v")]
        slack_v_pu: f64,
    }
    fn default_slack_v() -> f64 {
        1.0
    }
    let root: Root = toml::from_str(text)
        .map_err(|e| ConfigError::File { path: path.to_string(), msg: e.to_string() })?;
    FeederNetwork::new(
        root.network.s_base_kva,
        root.network.slack_v_pu,
        root.buses,
        root.branches,
        root.injections,
    )
}

#[cfg(test)]
mod tests;
