use std::path::PathBuf;

use conformal_jets_cli::scenario::{parse_scenario, parse_scenario_with_seed, serialize_scenario, MatrixSpec, TaskKind};
use conformal_jets_cli::ScenarioError;

fn examples() -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut out: Vec<(PathBuf, String)> = std::fs::read_dir(&dir)
        .expect("scenarios directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).expect("readable");
            (p, text)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn shipped_scenarios_parse_and_round_trip() {
    let files = examples();
    assert!(files.len() >= 5);
    for (path, text) in files {
        let sc = parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        sc.build().unwrap();
        let again = parse_scenario(&serialize_scenario(&sc)).unwrap();
        assert_eq!(sc, again, "{}", path.display());
    }
}

#[test]
fn explicit_metric_and_target_round_trip() {
    let text = r#"
[space]
n = 3
p = 2
q = 1
g = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]

[field]
b = "zero"
c = 0.5
u = [0.1, 0.2, 0.3]
w = [0.0, 0.0, 0.0]

[defaults]
tol = 1e-8
seed = 9

[[tasks]]
kind = "equivalence"
at = [0.0, 0.0, 0.0]
jets = 1
budget = 100

[tasks.target]
at = [0.0, 0.0, 0.0]
space = { n = 3, p = 2, q = 1 }
field = { constructor = "dilation(c=0.5)" }

[[tasks]]
kind = "component-scan"
lo = [-1.0, -2.0, -0.5]
hi = [1.0, 2.0, 0.5]

[output]
format = "machine"
"#;
    let sc = parse_scenario(text).unwrap();
    assert_eq!(sc.field.b, Some(MatrixSpec::Named("zero".into())));
    assert_eq!(sc.tasks[0].seed, Some(9));
    assert_eq!(sc.tasks[1].tol, Some(1e-8));
    assert_eq!(sc.tasks[1].kind, TaskKind::ComponentScan);
    let again = parse_scenario(&serialize_scenario(&sc)).unwrap();
    assert_eq!(sc, again);
}

#[test]
fn environment_seed_only_fills_missing_seed() {
    let base = "[space]\nn = 3\np = 3\nq = 0\n[field]\nconstructor = \"rotation\"\n[[tasks]]\nkind = \"find-zeros\"\n";
    let sc = parse_scenario_with_seed(base, Some(7)).unwrap();
    assert_eq!((sc.defaults.seed, sc.tasks[0].seed), (7, Some(7)));
    let pinned = format!("{base}[defaults]\nseed = 3\n");
    let sc = parse_scenario_with_seed(&pinned, Some(7)).unwrap();
    assert_eq!(sc.tasks[0].seed, Some(3));
}

#[test]
fn error_kinds() {
    let head = "[space]\nn = 3\np = 3\nq = 0\n";
    let cases: [(&str, &str); 7] = [
        ("[field]\nconstructor = \"warp-drive\"\n", "unknown field constructor"),
        ("[field]\nconstructor = \"rotation\"\nc = 1.0\n", "cannot be combined"),
        ("[field]\nb = [[0.0, 1.0], [-1.0, 0.0]]\n", "expected 3, found 2"),
        ("[field]\nb = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]\n", "field.b"),
        ("[field]\n[[tasks]]\nkind = \"classify\"\n", "tasks[0].at"),
        ("[field]\n[[tasks]]\nkind = \"verify-theorem\"\ntheorem = \"fermat\"\n", "fermat"),
        ("[field]\n[[tasks]]\nkind = \"find-zeros\"\nlo = [0.0, 0.0, 0.0]\n", "together"),
    ];
    for (body, needle) in cases {
        let err = parse_scenario(&format!("{head}{body}")).unwrap_err();
        assert!(err.to_string().contains(needle), "{needle:?} not in {err}");
    }
    let err = parse_scenario("[space\nn = 3").unwrap_err();
    assert!(matches!(err, ScenarioError::Parse(ref m) if m.contains("line 1")), "{err}");
}

#[test]
fn constructor_dimension_checked() {
    let text = "[space]\nn = 4\np = 2\nq = 2\n[field]\nconstructor = \"neutral-counterexample(n=6)\"\n";
    let err = parse_scenario(text).unwrap_err();
    assert!(matches!(err, ScenarioError::Dimension { expected: 4, found: 6, .. }), "{err}");
    let text = "[space]\nn = 4\np = 3\nq = 1\n[field]\nconstructor = \"neutral-counterexample\"\n";
    assert!(parse_scenario(text).is_err());
}
