//! Case, solution and trace files.
//!
//! Units throughout: MW, rad, hours and $. Susceptance is in MW/rad.

mod generate;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{generate_case, GenCaseOptions, PROPORTIONS};

use crate::error::{Error, Result};
use crate::network::{
    build_n_minus_1, Contingency, ContingencySpec, DeviceGroup, DeviceRef, Network, Problem,
};
use crate::oracle::OracleSolution;
use crate::sensitivity::ParameterSelector;
use crate::solver::{Residuals, Solution, SolverState, TraceRecord};
use crate::tensor::{NodeTensor, ScheduleTensor};

/// Schema version written to and required from every JSON file.
pub const FORMAT_VERSION: u32 = 1;

/// Exact header of trace files.
pub const TRACE_HEADER: &str =
    "iter,r_primal_p,r_primal_theta,r_dual_p,r_dual_theta,rho_p,rho_theta,objective";

/// How contingencies are given in a case file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContingencyInput {
    #[default]
    None,
    /// Explicit override lists, one entry per contingency.
    Explicit { contingencies: Vec<Contingency> },
    /// One outage per listed line of the contingency group; all lines when `lines` is absent.
    NMinus1 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lines: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub version: u32,
    pub num_nodes: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_names: Vec<String>,
    pub horizon: usize,
    /// Derived from the groups when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_terminals: Option<usize>,
    pub contingency_group: usize,
    pub groups: Vec<DeviceGroup>,
    #[serde(default)]
    pub contingencies: ContingencyInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<BTreeMap<String, String>>,
}

impl CaseFile {
    pub fn new(network: Network, contingencies: ContingencyInput) -> Self {
        Self {
            version: FORMAT_VERSION,
            num_nodes: network.num_nodes,
            node_names: Vec::new(),
            horizon: network.horizon,
            num_terminals: Some(network.num_terminals),
            contingency_group: network.contingency_group,
            groups: network.groups,
            contingencies,
            units: None,
        }
    }

    pub fn network(&self) -> Network {
        let derived = self.groups.iter().map(|g| g.count() * g.terminals()).sum();
        Network {
            num_nodes: self.num_nodes,
            num_terminals: self.num_terminals.unwrap_or(derived),
            horizon: self.horizon,
            groups: self.groups.clone(),
            contingency_group: self.contingency_group,
        }
    }

    pub fn contingency_spec(&self, net: &Network) -> Result<ContingencySpec> {
        match &self.contingencies {
            ContingencyInput::None => Ok(ContingencySpec::none()),
            ContingencyInput::Explicit { contingencies } => Ok(ContingencySpec {
                contingencies: contingencies.clone(),
            }),
            ContingencyInput::NMinus1 { lines } => {
                let g = net.contingency_group;
                let count = net.groups.get(g).map(|grp| grp.count()).unwrap_or(0);
                let list = lines.clone().unwrap_or_else(|| (0..count).collect());
                let refs: Vec<_> = list
                    .into_iter()
                    .map(|device| DeviceRef { group: g, device })
                    .collect();
                build_n_minus_1(net, &refs)
            }
        }
    }

    /// Validates and compiles the case.
    pub fn problem(&self) -> Result<Problem> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "case file version {} is not supported (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        if !self.node_names.is_empty() && self.node_names.len() != self.num_nodes {
            return Err(Error::Config(format!(
                "{} node names for {} nodes",
                self.node_names.len(),
                self.num_nodes
            )));
        }
        let net = self.network();
        let spec = self.contingency_spec(&net)?;
        Problem::new(net, spec)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_case(path: &Path) -> Result<CaseFile> {
    read_json(path)
}

pub fn write_case(path: &Path, case: &CaseFile) -> Result<()> {
    write_json(path, case)
}

/// Schedules of one group: `p[k][d]` holds `τ·T` entries, terminal-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub name: String,
    pub kind: String,
    pub p: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<Vec<f64>>>,
}

/// Multipliers of the monolithic QP, in its row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleDuals {
    pub equality: Vec<f64>,
    pub inequality: Vec<f64>,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub version: u32,
    /// `converged`, `max_iter`, `diverged` or `optimal`.
    pub status: String,
    /// `null` when not finite.
    pub objective: Option<f64>,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    pub groups: Vec<GroupSchedule>,
    /// `prices[k][n][t]`, $/MWh.
    pub prices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<OracleDuals>,
    /// Final iterate, usable as a warm start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<SolverState>,
}

fn nested_schedule(x: &ScheduleTensor, g: usize) -> Vec<Vec<Vec<f64>>> {
    let gt = &x.groups[g];
    (0..gt.slices)
        .map(|k| (0..gt.devices).map(|d| gt.device(k, d).to_vec()).collect())
        .collect()
}

fn nested_nodes(x: &NodeTensor) -> Vec<Vec<Vec<f64>>> {
    (0..x.slices)
        .map(|k| {
            (0..x.nodes)
                .map(|n| (0..x.horizon).map(|t| x.get(k, n, t)).collect())
                .collect()
        })
        .collect()
}

fn groups_of(problem: &Problem, p: &ScheduleTensor, theta: &ScheduleTensor) -> Vec<GroupSchedule> {
    problem
        .network
        .groups
        .iter()
        .enumerate()
        .map(|(g, grp)| GroupSchedule {
            name: grp.name.clone(),
            kind: grp.kind().name().into(),
            p: nested_schedule(p, g),
            theta: nested_schedule(theta, g),
        })
        .collect()
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl SolutionFile {
    pub fn from_solution(problem: &Problem, sol: &Solution) -> Self {
        let status = serde_json::to_value(sol.status)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        Self {
            version: FORMAT_VERSION,
            status,
            objective: finite(sol.objective),
            iterations: sol.iterations,
            residuals: Some(sol.residuals),
            groups: groups_of(problem, &sol.p, &sol.theta),
            prices: nested_nodes(&sol.prices),
            duals: None,
            state: Some(sol.state.clone()),
        }
    }

    pub fn from_oracle(problem: &Problem, sol: &OracleSolution) -> Self {
        Self {
            version: FORMAT_VERSION,
            status: "optimal".into(),
            objective: finite(sol.objective),
            iterations: sol.iterations,
            residuals: None,
            groups: groups_of(problem, &sol.p, &sol.theta),
            prices: nested_nodes(&sol.prices),
            duals: Some(OracleDuals {
                equality: sol.y.clone(),
                inequality: sol.z.clone(),
                kkt_residual: sol.kkt_residual,
            }),
            state: None,
        }
    }
}

pub fn read_solution(path: &Path) -> Result<SolutionFile> {
    let sol: SolutionFile = read_json(path)?;
    if sol.version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "solution file version {} is not supported",
            sol.version
        )));
    }
    Ok(sol)
}

pub fn write_solution(path: &Path, sol: &SolutionFile) -> Result<()> {
    write_json(path, sol)
}

/// Output of the `grad` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradFile {
    pub version: u32,
    pub selector: ParameterSelector,
    pub devices: Vec<usize>,
    /// `unrolled` or `finite_difference`.
    pub method: String,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub gradient: Vec<f64>,
    /// Exact sensitivities from the oracle's multipliers, when it solved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<Option<f64>>>,
}

pub fn write_grad(path: &Path, g: &GradFile) -> Result<()> {
    write_json(path, g)
}

pub fn read_grad(path: &Path) -> Result<GradFile> {
    read_json(path)
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    r_primal_p: f64,
    r_primal_theta: f64,
    r_dual_p: f64,
    r_dual_theta: f64,
    rho_p: f64,
    rho_theta: f64,
    objective: f64,
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in trace {
        w.serialize(TraceRow {
            iter: r.iter,
            r_primal_p: r.residuals.primal_p,
            r_primal_theta: r.residuals.primal_theta,
            r_dual_p: r.residuals.dual_p,
            r_dual_theta: r.residuals.dual_theta,
            rho_p: r.rho_p,
            rho_theta: r.rho_theta,
            objective: r.objective,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

#[cfg(test)]
mod tests;
