use super::*;
use crate::cases::{self, RandomCase};
use crate::devices::GroupParams;
use crate::solver::{solve, SolverConfig, Status};

fn roundtrip(case: &CaseFile) -> CaseFile {
    let text = serde_json::to_string(case).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn case_roundtrip_on_corpus() {
    let mut corpus = vec![
        CaseFile::new(
            cases::three_bus(),
            ContingencyInput::NMinus1 { lines: None },
        ),
        CaseFile::new(
            cases::five_line(),
            ContingencyInput::NMinus1 {
                lines: Some(vec![4]),
            },
        ),
        CaseFile::new(cases::toy(), ContingencyInput::None),
    ];
    for seed in 0..10 {
        let net = cases::random_case(
            seed,
            &RandomCase {
                batteries: 1,
                dc_lines: 1,
                ..RandomCase::small(7, 3)
            },
        );
        corpus.push(CaseFile::new(net, ContingencyInput::None));
        corpus.push(generate_case(&GenCaseOptions {
            nodes: 12,
            horizon: 4,
            contingencies: 2,
            seed,
            ..Default::default()
        }));
    }
    for case in &corpus {
        assert_eq!(&roundtrip(case), case);
        case.problem().unwrap();
    }
}

#[test]
fn explicit_contingencies_match_n_minus_1() {
    let net = cases::five_line();
    let spec = crate::network::build_n_minus_1(
        &net,
        &[crate::network::DeviceRef {
            group: 3,
            device: 1,
        }],
    )
    .unwrap();
    let explicit = CaseFile::new(
        net.clone(),
        ContingencyInput::Explicit {
            contingencies: spec.contingencies,
        },
    );
    let listed = CaseFile::new(
        net,
        ContingencyInput::NMinus1 {
            lines: Some(vec![1]),
        },
    );
    assert_eq!(
        explicit.problem().unwrap().contingencies,
        listed.problem().unwrap().contingencies
    );
}

#[test]
fn version_and_names_are_checked() {
    let mut case = CaseFile::new(cases::toy(), ContingencyInput::None);
    case.version = 7;
    assert!(matches!(case.problem(), Err(Error::Config(_))));
    case.version = FORMAT_VERSION;
    case.node_names = vec!["a".into(), "b".into()];
    assert!(matches!(case.problem(), Err(Error::Config(_))));
}

#[test]
fn malformed_case_reports_validation() {
    let mut case = CaseFile::new(cases::toy(), ContingencyInput::None);
    case.groups[0].terminal_node[0][0] = Some(5);
    assert!(matches!(case.problem(), Err(Error::Invalid(_))));
}

#[test]
fn generated_case_is_deterministic_and_valid() {
    let opts = GenCaseOptions {
        nodes: 10,
        horizon: 6,
        contingencies: 3,
        seed: 42,
        ..Default::default()
    };
    let a = serde_json::to_string(&generate_case(&opts)).unwrap();
    let b = serde_json::to_string(&generate_case(&opts)).unwrap();
    assert_eq!(a, b);
    let problem = generate_case(&opts).problem().unwrap();
    assert_eq!(problem.num_contingencies(), 3);
    let other = generate_case(&GenCaseOptions { seed: 43, ..opts });
    assert_ne!(serde_json::to_string(&other).unwrap(), a);
}

#[test]
fn generated_proportions() {
    for nodes in [1, 10, 50, 200, 500] {
        let case = generate_case(&GenCaseOptions {
            nodes,
            horizon: 1,
            ..Default::default()
        });
        let count = |name: &str| {
            case.groups
                .iter()
                .find(|g| g.name == name)
                .map_or(0, |g| g.count())
        };
        let want = |c: usize| (c as f64 * nodes as f64 / 500.0).round() as usize;
        assert_eq!(count("load"), want(PROPORTIONS[0]).max(1));
        assert_eq!(count("curtailment"), count("load"));
        assert_eq!(count("generator"), want(PROPORTIONS[1]).max(1));
        // a single bus has nowhere to run a line
        let lines = |c: usize| if nodes == 1 { 0 } else { want(c) };
        assert_eq!(count("ac_line"), lines(PROPORTIONS[2]).max(nodes - 1));
        assert_eq!(count("dc_line"), lines(PROPORTIONS[3]));
        assert_eq!(count("battery"), want(PROPORTIONS[4]));
        case.problem().unwrap();
    }
    let case = generate_case(&GenCaseOptions {
        nodes: 500,
        horizon: 1,
        ..Default::default()
    });
    let total: Vec<usize> = ["load", "generator", "ac_line", "dc_line", "battery"]
        .iter()
        .map(|n| case.groups.iter().find(|g| &g.name == n).unwrap().count())
        .collect();
    assert_eq!(total, PROPORTIONS.to_vec());
}

#[test]
fn generated_curtailment_prices() {
    let case = generate_case(&GenCaseOptions {
        nodes: 20,
        horizon: 3,
        ..Default::default()
    });
    let grp = case
        .groups
        .iter()
        .find(|g| g.name == "curtailment")
        .unwrap();
    let GroupParams::Generator(c) = &grp.params else {
        panic!()
    };
    assert!(c.iter().all(|g| g.linear_cost == 500.0));
}

#[test]
fn trace_header_is_exact() {
    let problem = crate::network::Problem::base(cases::toy()).unwrap();
    let sol = solve(
        &problem,
        &SolverConfig {
            trace_every: 5,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &sol.trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), TRACE_HEADER);
    assert_eq!(lines.count(), sol.trace.len());

    let mut empty = Vec::new();
    write_trace(&mut empty, &[]).unwrap();
    assert_eq!(
        String::from_utf8(empty).unwrap(),
        format!("{TRACE_HEADER}\n")
    );
}

#[test]
fn solution_file_shapes_and_warm_state() {
    let problem = crate::network::Problem::base(cases::three_bus()).unwrap();
    let sol = solve(&problem, &SolverConfig::default(), None).unwrap();
    let file = SolutionFile::from_solution(&problem, &sol);
    assert_eq!(file.status, "converged");
    assert_eq!(file.groups.len(), problem.network.groups.len());
    for (g, grp) in file.groups.iter().enumerate() {
        assert_eq!(grp.p.len(), problem.group_slices(g));
        assert_eq!(grp.p[0].len(), problem.network.groups[g].count());
    }
    assert_eq!(file.prices.len(), 1);
    assert_eq!(file.prices[0].len(), 3);
    let back: SolutionFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.state.as_ref(), Some(&sol.state));
}

#[test]
fn non_finite_objective_is_null() {
    let problem = crate::network::Problem::base(cases::toy()).unwrap();
    let mut sol = solve(&problem, &SolverConfig::default(), None).unwrap();
    sol.objective = f64::NAN;
    sol.status = Status::Diverged;
    let file = SolutionFile::from_solution(&problem, &sol);
    let text = serde_json::to_string(&file).unwrap();
    assert!(text.contains("\"objective\":null"));
    assert!(text.contains("\"status\":\"diverged\""));
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.json");
    let case = generate_case(&GenCaseOptions {
        nodes: 5,
        horizon: 2,
        ..Default::default()
    });
    write_case(&path, &case).unwrap();
    assert_eq!(read_case(&path).unwrap(), case);
    let missing = dir.path().join("nope.json");
    assert!(matches!(read_case(&missing), Err(Error::Io(_))));
}
