//! Device–node topology.
//!
//! Terminals are never stored globally. A terminal is addressed as
//! `(group, device, slot)` and each group carries one incidence map per slot
//! (`terminal_node[slot][device]`). Nodes are implicit: node `n` is the set of
//! terminals mapped to `n`.
//!
//! Exactly one type group responds to contingencies. Its per-contingency
//! parameters are described by a [`ContingencySpec`] of overrides on top of the
//! base parameters; every other group is shared by all contingencies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::devices::{DeviceKind, DeviceParams, GroupParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceGroup {
    pub name: String,
    /// `terminal_node[slot][device]`; `None` marks an unconnected terminal (always invalid).
    pub terminal_node: Vec<Vec<Option<usize>>>,
    pub params: GroupParams,
}

impl DeviceGroup {
    pub fn kind(&self) -> DeviceKind {
        self.params.kind()
    }

    pub fn count(&self) -> usize {
        self.params.len()
    }

    /// Terminals per device (τ).
    pub fn terminals(&self) -> usize {
        match (&self.params, self.kind().fixed_terminals()) {
            (_, Some(tau)) => tau,
            (GroupParams::GenericQp(forms), None) => forms
                .first()
                .map(|f| f.terminals)
                .unwrap_or(self.terminal_node.len()),
            _ => unreachable!("only generic QP groups lack a fixed arity"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub num_nodes: usize,
    /// Declared terminal count J; must equal Σ |ℓ|·τ_ℓ.
    pub num_terminals: usize,
    pub horizon: usize,
    pub groups: Vec<DeviceGroup>,
    /// Index of the single group whose parameters vary per contingency.
    pub contingency_group: usize,
}

/// Global device address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceRef {
    pub group: usize,
    pub device: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamOverride {
    pub device: usize,
    pub params: DeviceParams,
}

/// One contingency: parameter overrides for devices of the contingency group.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub overrides: Vec<ParamOverride>,
}

/// Contingencies `k = 1..=K`. Slice `k = 0` is always the base case.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContingencySpec {
    pub contingencies: Vec<Contingency>,
}

impl ContingencySpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.contingencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contingencies.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StructuralError {
    EmptyHorizon,
    NoNodes,
    NoGroups,
    ContingencyGroup {
        index: usize,
        groups: usize,
    },
    SlotCount {
        group: usize,
        expected: usize,
        found: usize,
    },
    DeviceCount {
        group: usize,
        slot: usize,
        expected: usize,
        found: usize,
    },
    UnmappedTerminal {
        terminal: usize,
        group: usize,
        device: usize,
        slot: usize,
    },
    NodeOutOfRange {
        terminal: usize,
        group: usize,
        device: usize,
        slot: usize,
        node: usize,
    },
    TerminalCount {
        declared: usize,
        actual: usize,
    },
    EmptyNode {
        node: usize,
    },
    Param {
        group: usize,
        device: usize,
        reason: String,
    },
    Override {
        contingency: usize,
        device: usize,
        reason: String,
    },
}

impl fmt::Display for StructuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use StructuralError::*;
        match self {
            EmptyHorizon => write!(f, "horizon must be at least one time step"),
            NoNodes => write!(f, "network has no nodes"),
            NoGroups => write!(f, "network has no device groups"),
            ContingencyGroup { index, groups } => {
                write!(f, "contingency group {index} out of range ({groups} groups)")
            }
            SlotCount {
                group,
                expected,
                found,
            } => write!(
                f,
                "group {group}: expected {expected} terminal maps, found {found}"
            ),
            DeviceCount {
                group,
                slot,
                expected,
                found,
            } => write!(
                f,
                "group {group} slot {slot}: terminal map covers {found} devices, group has {expected}"
            ),
            UnmappedTerminal {
                terminal,
                group,
                device,
                slot,
            } => write!(
                f,
                "terminal {terminal} (group {group}, device {device}, slot {slot}) is not connected to any node"
            ),
            NodeOutOfRange {
                terminal,
                group,
                device,
                slot,
                node,
            } => write!(
                f,
                "terminal {terminal} (group {group}, device {device}, slot {slot}) maps to missing node {node}"
            ),
            TerminalCount { declared, actual } => write!(
                f,
                "terminal count mismatch: declared J = {declared}, devices provide {actual}"
            ),
            EmptyNode { node } => write!(f, "node {node} has no terminals"),
            Param {
                group,
                device,
                reason,
            } => write!(f, "group {group} device {device}: {reason}"),
            Override {
                contingency,
                device,
                reason,
            } => write!(f, "contingency {contingency} device {device}: {reason}"),
        }
    }
}

/// Checks every structural invariant. An empty list means the network is valid.
pub fn validate(net: &Network) -> Vec<StructuralError> {
    let mut errors = Vec::new();
    if net.horizon == 0 {
        errors.push(StructuralError::EmptyHorizon);
    }
    if net.num_nodes == 0 {
        errors.push(StructuralError::NoNodes);
    }
    if net.groups.is_empty() {
        errors.push(StructuralError::NoGroups);
    } else if net.contingency_group >= net.groups.len() {
        errors.push(StructuralError::ContingencyGroup {
            index: net.contingency_group,
            groups: net.groups.len(),
        });
    }

    let mut degree = vec![0usize; net.num_nodes];
    let mut offset = 0usize;
    for (g, group) in net.groups.iter().enumerate() {
        let tau = group.terminals();
        let count = group.count();
        if group.terminal_node.len() != tau {
            errors.push(StructuralError::SlotCount {
                group: g,
                expected: tau,
                found: group.terminal_node.len(),
            });
        }
        for (slot, map) in group.terminal_node.iter().enumerate() {
            if map.len() != count {
                errors.push(StructuralError::DeviceCount {
                    group: g,
                    slot,
                    expected: count,
                    found: map.len(),
                });
            }
            for (device, node) in map.iter().enumerate() {
                let terminal = offset + device * tau + slot;
                match *node {
                    None => errors.push(StructuralError::UnmappedTerminal {
                        terminal,
                        group: g,
                        device,
                        slot,
                    }),
                    Some(n) if n >= net.num_nodes => errors.push(StructuralError::NodeOutOfRange {
                        terminal,
                        group: g,
                        device,
                        slot,
                        node: n,
                    }),
                    Some(n) => degree[n] += 1,
                }
            }
        }
        for (device, reason) in check_group_params(&group.params, net.horizon, true) {
            errors.push(StructuralError::Param {
                group: g,
                device,
                reason,
            });
        }
        offset += count * tau;
    }
    if offset != net.num_terminals {
        errors.push(StructuralError::TerminalCount {
            declared: net.num_terminals,
            actual: offset,
        });
    }
    for (node, &d) in degree.iter().enumerate() {
        if d == 0 {
            errors.push(StructuralError::EmptyNode { node });
        }
    }
    errors
}

/// Checks the overrides of a contingency spec against the network's contingency group.
pub fn validate_contingencies(net: &Network, spec: &ContingencySpec) -> Vec<StructuralError> {
    let mut errors = Vec::new();
    let Some(group) = net.groups.get(net.contingency_group) else {
        return errors;
    };
    for (c, contingency) in spec.contingencies.iter().enumerate() {
        for ov in &contingency.overrides {
            let reason = if ov.device >= group.count() {
                Some(format!(
                    "device index out of range for group '{}' ({} devices)",
                    group.name,
                    group.count()
                ))
            } else if ov.params.kind() != group.kind() {
                Some(format!(
                    "override of kind {} does not match contingency group kind {}",
                    ov.params.kind().name(),
                    group.kind().name()
                ))
            } else {
                check_device_params(&ov.params, net.horizon, false).err()
            };
            if let Some(reason) = reason {
                errors.push(StructuralError::Override {
                    contingency: c + 1,
                    device: ov.device,
                    reason,
                });
            }
        }
    }
    errors
}

fn check_group_params(params: &GroupParams, horizon: usize, base: bool) -> Vec<(usize, String)> {
    (0..params.len())
        .filter_map(|d| {
            let p = params.device(d)?;
            check_device_params(&p, horizon, base).err().map(|r| (d, r))
        })
        .collect()
}

fn check_device_params(
    params: &DeviceParams,
    horizon: usize,
    base: bool,
) -> std::result::Result<(), String> {
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    match params {
        DeviceParams::Generator(g) => {
            if g.p_min.len() != horizon || g.p_max.len() != horizon {
                return Err(format!("p_min/p_max must have length {horizon}"));
            }
            if !(g.quadratic_cost >= 0.0 && g.quadratic_cost.is_finite()) {
                return Err("quadratic cost must be finite and nonnegative".into());
            }
            if !g.linear_cost.is_finite() || !finite(&g.p_min) || !finite(&g.p_max) {
                return Err("generator data must be finite".into());
            }
            if g.p_min.iter().zip(&g.p_max).any(|(lo, hi)| lo > hi) {
                return Err("p_min exceeds p_max".into());
            }
        }
        DeviceParams::FixedLoad(l) => {
            if l.p_load.len() != horizon {
                return Err(format!("p_load must have length {horizon}"));
            }
            if !finite(&l.p_load) {
                return Err("p_load must be finite".into());
            }
        }
        DeviceParams::AcLine(l) => {
            if !(l.capacity >= 0.0 && l.capacity.is_finite()) {
                return Err("line capacity must be finite and nonnegative".into());
            }
            // Contingency overrides may open a line (susceptance zero).
            let ok = if base {
                l.susceptance > 0.0
            } else {
                l.susceptance >= 0.0
            };
            if !(ok && l.susceptance.is_finite()) {
                return Err("line susceptance must be positive".into());
            }
        }
        DeviceParams::DcLine(l) => {
            if !(l.capacity >= 0.0 && l.capacity.is_finite()) {
                return Err("line capacity must be finite and nonnegative".into());
            }
        }
        DeviceParams::Battery(b) => {
            if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
                return Err("battery efficiency must lie in (0, 1]".into());
            }
            if !(b.power_capacity >= 0.0 && b.power_capacity.is_finite()) {
                return Err("battery power capacity must be finite and nonnegative".into());
            }
            if !(b.duration >= 0.0 && b.duration.is_finite()) {
                return Err("battery duration must be finite and nonnegative".into());
            }
            if !(b.discharge_cost >= 0.0 && b.discharge_cost.is_finite()) {
                return Err("battery discharge cost must be finite and nonnegative".into());
            }
        }
        DeviceParams::GenericQp(form) => {
            if form.horizon != horizon {
                return Err(format!(
                    "QP form horizon {} does not match network horizon {horizon}",
                    form.horizon
                ));
            }
            form.check()?;
        }
    }
    Ok(())
}

/// Number of terminals attached to each node.
pub fn node_degree(net: &Network) -> Vec<usize> {
    let mut degree = vec![0usize; net.num_nodes];
    for group in &net.groups {
        for map in &group.terminal_node {
            for n in map.iter().flatten() {
                if let Some(d) = degree.get_mut(*n) {
                    *d += 1;
                }
            }
        }
    }
    degree
}

/// N−1 contingencies: contingency `k` zeroes the capacity and susceptance of the
/// k-th listed line and leaves everything else at its base value.
pub fn build_n_minus_1(net: &Network, outages: &[DeviceRef]) -> Result<ContingencySpec> {
    let group = net.groups.get(net.contingency_group).ok_or_else(|| {
        Error::Contingency(format!(
            "contingency group {} does not exist",
            net.contingency_group
        ))
    })?;
    let GroupParams::AcLine(lines) = &group.params else {
        if outages.is_empty() {
            return Ok(ContingencySpec::none());
        }
        return Err(Error::Contingency(format!(
            "N-1 outages require an ac_line contingency group, group '{}' is {}",
            group.name,
            group.kind().name()
        )));
    };
    let mut contingencies = Vec::with_capacity(outages.len());
    for out in outages {
        if out.group != net.contingency_group {
            let kind = net
                .groups
                .get(out.group)
                .map(|g| g.kind().name())
                .unwrap_or("missing");
            return Err(Error::Contingency(format!(
                "device {} of group {} ({kind}) is outside the contingency group",
                out.device, out.group
            )));
        }
        let line = lines.get(out.device).ok_or_else(|| {
            Error::Contingency(format!(
                "line {} out of range ({} lines)",
                out.device,
                lines.len()
            ))
        })?;
        let mut opened = line.clone();
        opened.capacity = 0.0;
        opened.susceptance = 0.0;
        contingencies.push(Contingency {
            overrides: vec![ParamOverride {
                device: out.device,
                params: DeviceParams::AcLine(opened),
            }],
        });
    }
    Ok(ContingencySpec { contingencies })
}

/// Validated incidence structure used by the tensor operators.
#[derive(Clone, Debug)]
pub struct Topology {
    pub num_nodes: usize,
    pub num_terminals: usize,
    pub horizon: usize,
    pub degree: Vec<usize>,
    /// `(devices, terminals per device)` per group.
    pub shapes: Vec<(usize, usize)>,
    /// `node_of[g][d * τ + i]`
    pub node_of: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(net: &Network) -> Result<Self> {
        let errors = validate(net);
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }
        let shapes: Vec<_> = net
            .groups
            .iter()
            .map(|g| (g.count(), g.terminals()))
            .collect();
        let node_of = net
            .groups
            .iter()
            .zip(&shapes)
            .map(|(g, &(count, tau))| {
                let mut map = vec![0usize; count * tau];
                for (i, slot) in g.terminal_node.iter().enumerate() {
                    for (d, n) in slot.iter().enumerate() {
                        map[d * tau + i] = n.expect("validated");
                    }
                }
                map
            })
            .collect();
        Ok(Self {
            num_nodes: net.num_nodes,
            num_terminals: net.num_terminals,
            horizon: net.horizon,
            degree: node_degree(net),
            shapes,
            node_of,
        })
    }
}

/// A validated network together with its contingencies and compiled topology.
#[derive(Clone, Debug)]
pub struct Problem {
    pub network: Network,
    pub contingencies: ContingencySpec,
    pub topology: Topology,
    /// Parameters of the contingency group per slice; slice 0 is the base case.
    slices: Vec<GroupParams>,
    overridden: Vec<Vec<bool>>,
}

impl Problem {
    pub fn new(network: Network, contingencies: ContingencySpec) -> Result<Self> {
        let topology = Topology::new(&network)?;
        let errors = validate_contingencies(&network, &contingencies);
        if !errors.is_empty() {
            return Err(Error::Invalid(errors));
        }
        let base = &network.groups[network.contingency_group].params;
        let mut slices = vec![base.clone()];
        let mut overridden = vec![vec![false; base.len()]];
        for c in &contingencies.contingencies {
            let mut params = base.clone();
            let mut mask = vec![false; base.len()];
            for ov in &c.overrides {
                params.set_device(ov.device, ov.params.clone());
                mask[ov.device] = true;
            }
            slices.push(params);
            overridden.push(mask);
        }
        Ok(Self {
            network,
            contingencies,
            topology,
            slices,
            overridden,
        })
    }

    /// Plain OPF, no contingencies.
    pub fn base(network: Network) -> Result<Self> {
        Self::new(network, ContingencySpec::none())
    }

    pub fn num_contingencies(&self) -> usize {
        self.contingencies.len()
    }

    /// K + 1
    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn horizon(&self) -> usize {
        self.network.horizon
    }

    pub fn contingency_group(&self) -> usize {
        self.network.contingency_group
    }

    /// Number of parameter/schedule slices a group carries: K+1 for the contingency group, 1 otherwise.
    pub fn group_slices(&self, g: usize) -> usize {
        if g == self.network.contingency_group {
            self.num_slices()
        } else {
            1
        }
    }

    /// Parameters of group `g` in slice `k` (shared groups ignore `k`).
    pub fn params(&self, g: usize, k: usize) -> &GroupParams {
        if g == self.network.contingency_group {
            &self.slices[k]
        } else {
            &self.network.groups[g].params
        }
    }

    /// True when slice `k` replaces the base parameters of contingency-group device `d`.
    pub fn is_overridden(&self, k: usize, d: usize) -> bool {
        self.overridden[k][d]
    }

    /// Schedule-tensor slice counts per group for the primal schedules.
    pub fn schedule_slices(&self) -> Vec<usize> {
        (0..self.network.groups.len())
            .map(|g| self.group_slices(g))
            .collect()
    }
}
