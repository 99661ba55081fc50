//! Synthetic cases shaped like a 500-node transmission model.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CaseFile, ContingencyInput};
use crate::cases::{assemble, generator};
use crate::devices::{AcLineParams, BatteryParams, DcLineParams, FixedLoadParams, GroupParams};
use crate::network::DeviceGroup;

/// Device counts of the reference 500-node model: loads, generators, AC lines, DC lines, batteries.
pub const PROPORTIONS: [usize; 5] = [500, 1392, 1143, 3, 74];

/// $/MWh of load curtailment.
pub const CURTAILMENT_COST: f64 = 500.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GenCaseOptions {
    pub nodes: usize,
    pub horizon: usize,
    pub contingencies: usize,
    /// Peak load as a fraction of installed generation.
    pub load_scale: f64,
    pub seed: u64,
}

impl Default for GenCaseOptions {
    fn default() -> Self {
        Self {
            nodes: 10,
            horizon: 24,
            contingencies: 0,
            load_scale: 0.6,
            seed: 0,
        }
    }
}

fn scaled(count: usize, nodes: usize) -> usize {
    (count as f64 * nodes as f64 / 500.0).round() as usize
}

fn one_terminal(name: &str, nodes: Vec<usize>, params: GroupParams) -> DeviceGroup {
    DeviceGroup {
        name: name.into(),
        terminal_node: vec![nodes.into_iter().map(Some).collect()],
        params,
    }
}

fn two_terminal(name: &str, ends: &[(usize, usize)], params: GroupParams) -> DeviceGroup {
    DeviceGroup {
        name: name.into(),
        terminal_node: vec![
            ends.iter().map(|e| Some(e.0)).collect(),
            ends.iter().map(|e| Some(e.1)).collect(),
        ],
        params,
    }
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Connected random network with loads, curtailment, generators, AC and DC lines and
/// batteries. The AC lines form the contingency group; the first `contingencies` entries
/// of a random line permutation are outaged.
pub fn generate_case(opts: &GenCaseOptions) -> CaseFile {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.nodes.max(1);
    let horizon = opts.horizon.max(1);
    let [loads, gens, ac, dc, bat] = PROPORTIONS.map(|c| scaled(c, n));
    let loads = loads.max(1);
    let gens = gens.max(1);
    let ac = if n > 1 { ac.max(n - 1) } else { 0 };
    let dc = if n > 1 { dc } else { 0 };

    let place = |rng: &mut ChaCha8Rng, count: usize| -> Vec<usize> {
        // round-robin over a shuffled node list, so loads cover every node when count ≥ n
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        (0..count).map(|i| order[i % n]).collect()
    };

    let gen_nodes = place(&mut rng, gens);
    let gen_params: Vec<_> = gen_nodes
        .iter()
        .map(|_| {
            let cap = rng.random_range(0.5..3.0);
            generator(
                rng.random_range(0.001..0.05),
                rng.random_range(10.0..60.0),
                0.0,
                cap,
                horizon,
            )
        })
        .collect();
    let installed: f64 = gen_params.iter().map(|g| g.p_max[0]).sum();

    let load_nodes = place(&mut rng, loads);
    let weights: Vec<f64> = load_nodes
        .iter()
        .map(|_| rng.random_range(0.5..1.5))
        .collect();
    let wsum: f64 = weights.iter().sum();
    let phase = rng.random_range(0.0..2.0 * PI);
    let profile: Vec<f64> = (0..horizon)
        .map(|t| 0.8 + 0.2 * (2.0 * PI * t as f64 / 24.0 + phase).sin())
        .collect();
    let peak = opts.load_scale * installed;
    let load_params: Vec<FixedLoadParams> = weights
        .iter()
        .map(|w| FixedLoadParams {
            p_load: profile.iter().map(|s| -peak * w / wsum * s).collect(),
        })
        .collect();
    let curtail: Vec<_> = load_params
        .iter()
        .map(|l| {
            let mut g = generator(0.0, CURTAILMENT_COST, 0.0, 0.0, horizon);
            g.p_max = l.p_load.iter().map(|x| -x).collect();
            g
        })
        .collect();

    let mean_load = peak / n as f64;
    let mut ends: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    while ends.len() < ac {
        ends.push(distinct_pair(&mut rng, n));
    }
    let lines: Vec<AcLineParams> = ends
        .iter()
        .map(|_| AcLineParams {
            capacity: rng.random_range(2.0..6.0) * mean_load,
            susceptance: rng.random_range(1.0..4.0) * mean_load,
        })
        .collect();

    let mut groups = vec![
        one_terminal(
            "load",
            load_nodes.clone(),
            GroupParams::FixedLoad(load_params),
        ),
        one_terminal("curtailment", load_nodes, GroupParams::Generator(curtail)),
        one_terminal("generator", gen_nodes, GroupParams::Generator(gen_params)),
        two_terminal("ac_line", &ends, GroupParams::AcLine(lines)),
    ];
    let contingency_group = 3;
    if dc > 0 {
        let dc_ends: Vec<_> = (0..dc).map(|_| distinct_pair(&mut rng, n)).collect();
        let params = dc_ends
            .iter()
            .map(|_| DcLineParams {
                capacity: rng.random_range(1.0..3.0) * mean_load,
            })
            .collect();
        groups.push(two_terminal(
            "dc_line",
            &dc_ends,
            GroupParams::DcLine(params),
        ));
    }
    if bat > 0 {
        let nodes = place(&mut rng, bat);
        let params = nodes
            .iter()
            .map(|_| BatteryParams {
                discharge_cost: rng.random_range(0.0..5.0),
                efficiency: rng.random_range(0.85..0.95),
                power_capacity: rng.random_range(0.5..2.0) * mean_load,
                duration: rng.random_range(1.0..4.0),
            })
            .collect();
        groups.push(one_terminal("battery", nodes, GroupParams::Battery(params)));
    }

    let mut order: Vec<usize> = (0..ends.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(opts.contingencies);
    let contingencies = if order.is_empty() {
        ContingencyInput::None
    } else {
        ContingencyInput::NMinus1 { lines: Some(order) }
    };
    let mut case = CaseFile::new(
        assemble(n, horizon, groups, contingency_group),
        contingencies,
    );
    case.node_names = (0..n).map(|i| format!("bus{i}")).collect();
    case.units = Some(
        [
            ("power", "MW"),
            ("angle", "rad"),
            ("time", "h"),
            ("cost", "$"),
            ("susceptance", "MW/rad"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect(),
    );
    case
}
