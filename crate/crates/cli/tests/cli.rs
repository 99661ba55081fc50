use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmp_core::cases;
use pmp_core::devices::GroupParams;
use pmp_core::io::{self, CaseFile, ContingencyInput, GradFile, SolutionFile, TRACE_HEADER};

fn pmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmp"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_case(dir: &Path, name: &str, case: &CaseFile) -> PathBuf {
    let path = dir.join(name);
    io::write_case(&path, case).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen-case", "--out", s(&path)];
    args.extend_from_slice(extra);
    let out = pmp(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn toy_solves_to_its_analytic_cost() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(
        dir.path(),
        "toy.json",
        &CaseFile::new(cases::toy(), ContingencyInput::None),
    );
    let out_path = dir.path().join("sol.json");
    let out = pmp(&["solve", s(&case), "--out", s(&out_path), "--tol", "1e-6"]);
    assert_eq!(code(&out), 0);
    let sol = io::read_solution(&out_path).unwrap();
    assert_eq!(sol.status, "converged");
    assert!((sol.objective.unwrap() - 4.0).abs() < 1e-4);
}

#[test]
fn tighter_tolerance_needs_more_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let case = gen(
        dir.path(),
        "c.json",
        &["--nodes", "4", "--horizon", "2", "--seed", "1"],
    );
    let iters = |tol: &str| {
        let p = dir.path().join(format!("s{tol}.json"));
        let out = pmp(&["solve", s(&case), "--tol", tol, "--out", s(&p)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        io::read_solution(&p).unwrap().iterations
    };
    assert!(iters("1e-3") < iters("1e-4"));
}

#[test]
fn warm_start_on_perturbed_case() {
    let dir = tempfile::tempdir().unwrap();
    let case_path = gen(
        dir.path(),
        "c.json",
        &["--nodes", "5", "--horizon", "2", "--seed", "2"],
    );
    let first = dir.path().join("first.json");
    assert_eq!(code(&pmp(&["solve", s(&case_path), "--out", s(&first)])), 0);

    let mut case = io::read_case(&case_path).unwrap();
    for g in &mut case.groups {
        if let GroupParams::FixedLoad(loads) = &mut g.params {
            loads
                .iter_mut()
                .flat_map(|l| l.p_load.iter_mut())
                .for_each(|x| *x *= 1.05);
        }
        if g.name == "curtailment" {
            if let GroupParams::Generator(c) = &mut g.params {
                c.iter_mut()
                    .flat_map(|c| c.p_max.iter_mut())
                    .for_each(|x| *x *= 1.05);
            }
        }
    }
    let perturbed = write_case(dir.path(), "p.json", &case);
    let cold = dir.path().join("cold.json");
    let warm = dir.path().join("warm.json");
    assert_eq!(code(&pmp(&["solve", s(&perturbed), "--out", s(&cold)])), 0);
    assert_eq!(
        code(&pmp(&[
            "solve",
            s(&perturbed),
            "--warm",
            s(&first),
            "--out",
            s(&warm)
        ])),
        0
    );
    let (c, w) = (
        io::read_solution(&cold).unwrap(),
        io::read_solution(&warm).unwrap(),
    );
    assert!(
        w.iterations <= c.iterations,
        "warm {} cold {}",
        w.iterations,
        c.iterations
    );
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let case = gen(
        dir.path(),
        "c.json",
        &[
            "--nodes",
            "6",
            "--horizon",
            "3",
            "--contingencies",
            "1",
            "--seed",
            "5",
        ],
    );
    let run = |tag: &str| {
        let sol = dir.path().join(format!("s{tag}.json"));
        let trace = dir.path().join(format!("t{tag}.csv"));
        pmp(&[
            "solve",
            s(&case),
            "--seed",
            "7",
            "--out",
            s(&sol),
            "--trace",
            s(&trace),
        ]);
        (std::fs::read(sol).unwrap(), std::fs::read(trace).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let text = String::from_utf8(a.1).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER);
}

#[test]
fn iteration_limit_and_validation_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let case = gen(dir.path(), "c.json", &["--nodes", "6", "--horizon", "2"]);
    assert_eq!(
        code(&pmp(&[
            "solve",
            s(&case),
            "--max-iter",
            "3",
            "--out",
            s(&dir.path().join("x.json"))
        ])),
        2
    );

    let mut bad = CaseFile::new(cases::toy(), ContingencyInput::None);
    bad.groups[1].terminal_node[0][0] = Some(4);
    let bad = write_case(dir.path(), "bad.json", &bad);
    let out = pmp(&["solve", s(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(code(&pmp(&["solve", s(&garbage)])), 1);
    assert_eq!(code(&pmp(&["solve", s(&case), "--alpha", "2.5"])), 1);
}

#[test]
fn oracle_reports_optimum_and_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(
        dir.path(),
        "toy.json",
        &CaseFile::new(cases::toy(), ContingencyInput::None),
    );
    let out_path = dir.path().join("o.json");
    assert_eq!(code(&pmp(&["oracle", s(&case), "--out", s(&out_path)])), 0);
    let sol: SolutionFile = io::read_solution(&out_path).unwrap();
    assert_eq!(sol.status, "optimal");
    assert!((sol.objective.unwrap() - 4.0).abs() < 1e-6);
    assert!((sol.prices[0][0][0] - 1.0).abs() < 1e-6);
    assert!(sol.duals.is_some());

    let mut net = cases::toy();
    if let GroupParams::FixedLoad(l) = &mut net.groups[1].params {
        l[0].p_load = vec![-20.0];
    }
    let infeasible = write_case(
        dir.path(),
        "inf.json",
        &CaseFile::new(net, ContingencyInput::None),
    );
    let report = dir.path().join("inf_out.json");
    assert_eq!(
        code(&pmp(&["oracle", s(&infeasible), "--out", s(&report)])),
        4
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["status"], "infeasible");
}

#[test]
fn gradients_on_the_toy_cases() {
    let dir = tempfile::tempdir().unwrap();
    let binding = write_case(
        dir.path(),
        "b.json",
        &CaseFile::new(cases::binding_toy(2.0), ContingencyInput::None),
    );
    let grad = |case: &Path, extra: &[&str]| -> GradFile {
        let out = dir.path().join("g.json");
        let mut args = vec!["grad", s(case), "--wrt", "gen:p_max", "--out", s(&out)];
        args.extend_from_slice(extra);
        let res = pmp(&args);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        io::read_grad(&out).unwrap()
    };
    let g = grad(&binding, &[]);
    assert_eq!(g.method, "unrolled");
    assert!((g.gradient[0] + 4.0).abs() < 1e-6, "{:?}", g.gradient);
    assert!(g.gradient[1].abs() < 1e-9);
    let oracle = g.oracle.unwrap();
    assert!((oracle[0].unwrap() + 4.0).abs() < 1e-5);

    let fd = grad(&binding, &["--fd", "--iters", "500"]);
    assert!((fd.gradient[0] + 4.0).abs() < 1e-4);

    let toy = write_case(
        dir.path(),
        "t.json",
        &CaseFile::new(cases::toy(), ContingencyInput::None),
    );
    assert_eq!(grad(&toy, &[]).gradient, vec![0.0]);
}

#[test]
fn battery_gradient_needs_fd() {
    let dir = tempfile::tempdir().unwrap();
    let case = write_case(
        dir.path(),
        "3.json",
        &CaseFile::new(cases::three_bus(), ContingencyInput::None),
    );
    let out = pmp(&["grad", s(&case), "--wrt", "1:p_max", "--iters", "20"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--fd"));
    let out = pmp(&[
        "grad",
        s(&case),
        "--wrt",
        "1:p_max",
        "--iters",
        "20",
        "--fd",
    ]);
    assert_eq!(code(&out), 0);
    let bad = pmp(&["grad", s(&case), "--wrt", "1:capacity"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn generated_cases_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.json", &["--nodes", "10", "--seed", "9"]);
    let b = gen(dir.path(), "b.json", &["--nodes", "10", "--seed", "9"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    io::read_case(&a).unwrap().problem().unwrap();
    assert_eq!(code(&pmp(&["gen-case", "--nodes", "0"])), 1);
}
