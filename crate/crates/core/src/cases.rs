//! Small built-in networks and a random case family used by tests and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::devices::{
    AcLineParams, BatteryParams, DcLineParams, FixedLoadParams, GeneratorParams, GroupParams,
};
use crate::network::{DeviceGroup, Network};

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

/// Builds a network, filling in the terminal count from the groups.
pub fn assemble(
    num_nodes: usize,
    horizon: usize,
    groups: Vec<DeviceGroup>,
    contingency_group: usize,
) -> Network {
    let num_terminals = groups.iter().map(|g| g.count() * g.terminals()).sum();
    Network {
        num_nodes,
        num_terminals,
        horizon,
        groups,
        contingency_group,
    }
}

pub fn generator(a: f64, b: f64, lo: f64, hi: f64, horizon: usize) -> GeneratorParams {
    GeneratorParams {
        quadratic_cost: a,
        linear_cost: b,
        p_min: vec![lo; horizon],
        p_max: vec![hi; horizon],
    }
}

/// Three buses, two loads, two generators, three lines and one battery:
///
/// ```text
/// n1: L1, G1, T1.1, T2.1    n2: G2, T2.2, T3.1    n3: L2, B1, T1.2, T3.2
/// ```
///
/// Horizon 2; the lines form the contingency group.
pub fn three_bus() -> Network {
    let horizon = 2;
    let groups = vec![
        one_terminal(
            "load",
            vec![0, 2],
            GroupParams::FixedLoad(vec![
                FixedLoadParams {
                    p_load: vec![-1.0, -1.2],
                },
                FixedLoadParams {
                    p_load: vec![-0.8, -0.6],
                },
            ]),
        ),
        one_terminal(
            "gen",
            vec![0, 1],
            GroupParams::Generator(vec![
                generator(0.1, 2.0, 0.0, 3.0, horizon),
                generator(0.2, 1.0, 0.0, 1.5, horizon),
            ]),
        ),
        two_terminal(
            "line",
            &[(0, 2), (0, 1), (1, 2)],
            GroupParams::AcLine(vec![
                AcLineParams {
                    capacity: 1.0,
                    susceptance: 10.0,
                },
                AcLineParams {
                    capacity: 1.0,
                    susceptance: 5.0,
                },
                AcLineParams {
                    capacity: 0.8,
                    susceptance: 8.0,
                },
            ]),
        ),
        one_terminal(
            "battery",
            vec![2],
            GroupParams::Battery(vec![BatteryParams {
                discharge_cost: 0.1,
                efficiency: 0.9,
                power_capacity: 0.5,
                duration: 2.0,
            }]),
        ),
    ];
    assemble(3, horizon, groups, 2)
}

/// One node with a generator (`a = 0`, `b = 1`, box `[0, 10]`) and a 4 MW load, one step.
pub fn toy() -> Network {
    let groups = vec![
        one_terminal(
            "gen",
            vec![0],
            GroupParams::Generator(vec![generator(0.0, 1.0, 0.0, 10.0, 1)]),
        ),
        one_terminal(
            "load",
            vec![0],
            GroupParams::FixedLoad(vec![FixedLoadParams { p_load: vec![-4.0] }]),
        ),
    ];
    assemble(1, 1, groups, 0)
}

/// Toy network with a cheap generator capped at `cap` and an expensive backup.
pub fn binding_toy(cap: f64) -> Network {
    let groups = vec![
        one_terminal(
            "gen",
            vec![0, 0],
            GroupParams::Generator(vec![
                generator(0.0, 1.0, 0.0, cap, 1),
                generator(0.0, 5.0, 0.0, 10.0, 1),
            ]),
        ),
        one_terminal(
            "load",
            vec![0],
            GroupParams::FixedLoad(vec![FixedLoadParams { p_load: vec![-4.0] }]),
        ),
    ];
    assemble(1, 1, groups, 0)
}

/// `n` one-terminal devices on a single node: one generator and `n − 1` loads.
pub fn star(n: usize) -> Network {
    let groups = vec![
        one_terminal(
            "gen",
            vec![0],
            GroupParams::Generator(vec![generator(0.0, 1.0, 0.0, 10.0, 1)]),
        ),
        one_terminal(
            "load",
            vec![0; n.saturating_sub(1)],
            GroupParams::FixedLoad(vec![
                FixedLoadParams { p_load: vec![-0.5] };
                n.saturating_sub(1)
            ]),
        ),
    ];
    assemble(1, 1, groups, 0)
}

/// Five lines: a meshed triangle `0–1–2` feeding a radial chain `2–3–4`. A cheap
/// generator sits at node 0; node 4 carries a load, an expensive local generator and
/// curtailment. Line 4 (`3–4`) is the radial feeder of node 4.
pub fn five_line() -> Network {
    let horizon = 2;
    let groups = vec![
        one_terminal(
            "load",
            vec![4, 1],
            GroupParams::FixedLoad(vec![
                FixedLoadParams {
                    p_load: vec![-1.0, -1.4],
                },
                FixedLoadParams {
                    p_load: vec![-0.5, -0.5],
                },
            ]),
        ),
        one_terminal(
            "gen",
            vec![0, 4],
            GroupParams::Generator(vec![
                generator(0.05, 1.0, 0.0, 5.0, horizon),
                generator(0.1, 6.0, 0.0, 0.6, horizon),
            ]),
        ),
        one_terminal(
            "curtail",
            vec![4, 1],
            GroupParams::Generator(vec![
                generator(0.0, 30.0, 0.0, 1.4, horizon),
                generator(0.0, 30.0, 0.0, 0.5, horizon),
            ]),
        ),
        two_terminal(
            "line",
            &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)],
            GroupParams::AcLine(vec![
                AcLineParams {
                    capacity: 3.0,
                    susceptance: 10.0,
                };
                5
            ]),
        ),
    ];
    assemble(5, horizon, groups, 3)
}

/// Shape of a [`random_case`].
#[derive(Clone, Debug)]
pub struct RandomCase {
    pub nodes: usize,
    pub horizon: usize,
    /// Lines beyond the spanning tree.
    pub extra_lines: usize,
    pub batteries: usize,
    pub dc_lines: usize,
    /// $/MWh of the curtailment generator at every load.
    pub curtailment_cost: f64,
}

impl RandomCase {
    pub fn small(nodes: usize, horizon: usize) -> Self {
        Self {
            nodes,
            horizon,
            extra_lines: nodes / 2,
            batteries: 0,
            dc_lines: 0,
            curtailment_cost: 20.0,
        }
    }
}

/// Random connected network, feasible by construction through curtailment.
///
/// Groups: `load`, `curtail`, `gen`, `line` (contingency group), then `dc_line` and
/// `battery` when requested.
pub fn random_case(seed: u64, shape: &RandomCase) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.nodes.max(1);
    let horizon = shape.horizon.max(1);

    let mut load_nodes: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    if load_nodes.is_empty() {
        load_nodes.push(rng.random_range(0..n));
    }
    let mut gen_nodes: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    if gen_nodes.is_empty() {
        gen_nodes.push(rng.random_range(0..n));
    }

    let profile: Vec<f64> = (0..horizon)
        .map(|t| 1.0 + 0.2 * (t as f64 * 0.9 + rng.random_range(0.0..1.0)).sin())
        .collect();
    let loads: Vec<FixedLoadParams> = load_nodes
        .iter()
        .map(|_| {
            let base = rng.random_range(0.3..1.5);
            FixedLoadParams {
                p_load: profile.iter().map(|s| -base * s).collect(),
            }
        })
        .collect();
    let curtail: Vec<GeneratorParams> = loads
        .iter()
        .map(|l| GeneratorParams {
            quadratic_cost: 0.0,
            linear_cost: shape.curtailment_cost,
            p_min: vec![0.0; horizon],
            p_max: l.p_load.iter().map(|x| -x).collect(),
        })
        .collect();
    let gens: Vec<GeneratorParams> = gen_nodes
        .iter()
        .map(|_| {
            let hi = rng.random_range(0.8..3.0);
            generator(
                rng.random_range(0.05..0.5),
                rng.random_range(1.0..5.0),
                0.0,
                hi,
                horizon,
            )
        })
        .collect();

    // Spanning tree plus random extra lines; every node is then reachable.
    let mut ends: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    if n > 1 {
        for _ in 0..shape.extra_lines {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n);
            while b == a {
                b = rng.random_range(0..n);
            }
            ends.push((a, b));
        }
    }
    let lines: Vec<AcLineParams> = ends
        .iter()
        .map(|_| AcLineParams {
            capacity: rng.random_range(0.5..2.0),
            susceptance: rng.random_range(5.0..20.0),
        })
        .collect();

    let mut groups = vec![
        one_terminal("load", load_nodes.clone(), GroupParams::FixedLoad(loads)),
        one_terminal("curtail", load_nodes, GroupParams::Generator(curtail)),
        one_terminal("gen", gen_nodes, GroupParams::Generator(gens)),
        two_terminal("line", &ends, GroupParams::AcLine(lines)),
    ];
    if shape.dc_lines > 0 && n > 1 {
        let dc_ends: Vec<(usize, usize)> = (0..shape.dc_lines)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n);
                while b == a {
                    b = rng.random_range(0..n);
                }
                (a, b)
            })
            .collect();
        let params = dc_ends
            .iter()
            .map(|_| DcLineParams {
                capacity: rng.random_range(0.2..1.0),
            })
            .collect();
        groups.push(two_terminal(
            "dc_line",
            &dc_ends,
            GroupParams::DcLine(params),
        ));
    }
    if shape.batteries > 0 {
        let nodes: Vec<usize> = (0..shape.batteries)
            .map(|_| rng.random_range(0..n))
            .collect();
        let params = nodes
            .iter()
            .map(|_| BatteryParams {
                discharge_cost: rng.random_range(0.0..0.5),
                efficiency: rng.random_range(0.8..1.0),
                power_capacity: rng.random_range(0.2..1.0),
                duration: rng.random_range(1.0..4.0),
            })
            .collect();
        groups.push(one_terminal("battery", nodes, GroupParams::Battery(params)));
    }
    // Nodes without any device are impossible: every node touches at least one line
    // when n > 1, and a single node always has the first load.
    assemble(n, horizon, groups, 3)
}

/// Random analytic-only topology for operator tests.
pub fn random_topology(seed: u64, nodes: usize, horizon: usize) -> Network {
    random_case(seed, &RandomCase::small(nodes, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validate;

    #[test]
    fn builtins_validate() {
        for net in [
            three_bus(),
            toy(),
            binding_toy(3.0),
            star(1),
            star(5),
            five_line(),
        ] {
            assert!(validate(&net).is_empty(), "{:?}", validate(&net));
        }
    }

    #[test]
    fn random_cases_validate() {
        for seed in 0..50 {
            let mut shape = RandomCase::small(1 + (seed as usize % 10), 1 + (seed as usize % 4));
            shape.batteries = seed as usize % 2;
            shape.dc_lines = seed as usize % 3;
            let net = random_case(seed, &shape);
            assert!(
                validate(&net).is_empty(),
                "seed {seed}: {:?}",
                validate(&net)
            );
        }
    }

    #[test]
    fn random_case_is_deterministic() {
        let shape = RandomCase::small(6, 3);
        assert_eq!(random_case(9, &shape), random_case(9, &shape));
        assert_ne!(random_case(9, &shape), random_case(10, &shape));
    }
}
