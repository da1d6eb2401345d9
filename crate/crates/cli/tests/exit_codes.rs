use std::path::PathBuf;

use msopt_cli::{run, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_NEGATIVE, EXIT_OK};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

fn msopt(args: &[&str]) -> (u8, String, String) {
    run(std::iter::once("msopt").chain(args.iter().copied()))
}

#[test]
fn solve_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pol = dir.path().join("policy.json").display().to_string();
    let (code, out, _) = msopt(&["solve", "--input", &fixture("two_stage.json"), "--policy-out", &pol, "--json"]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["value"], 0.3125);
    assert_eq!(report["policy_count"], 2187);
    assert_eq!(report["agreement"], true);
    assert_eq!(report["methods"], serde_json::json!(["backward", "brute"]));
    let (code, out, _) = msopt(&["verify", "--input", &fixture("two_stage.json"), "--policy", &pol, "--json"]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["report"]["verdict"], "optimal");
    assert_eq!(report["report"]["tolerance"], 1e-9);
}

#[test]
fn perturbed_policy_is_a_negative_finding() {
    let (code, out, _) = msopt(&[
        "verify",
        "--input",
        &fixture("two_stage.json"),
        "--policy",
        &fixture("two_stage_perturbed_policy.json"),
        "--json",
    ]);
    assert_eq!(code, EXIT_NEGATIVE);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["report"]["verdict"], "not_optimal");
    assert_eq!(report["report"]["witness"]["node"], 1);
    assert_eq!(report["report"]["witness"]["slack"], 1.0);
}

#[test]
fn history_blind_verification_is_inconclusive() {
    let (code, _, _) = msopt(&["verify", "--input", &fixture("history_blind.json")]);
    assert_eq!(code, EXIT_INCONCLUSIVE);
    let (code, _, err) = msopt(&["solve", "--input", &fixture("history_blind.json"), "--method", "backward"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("decomposable"));
    let (code, out, _) = msopt(&["solve", "--input", &fixture("history_blind.json"), "--json"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("\"brute\""));
}

#[test]
fn single_stage_is_grid_minimum() {
    for method in ["backward", "brute", "auto"] {
        let (code, out, _) = msopt(&["solve", "--input", &fixture("single_stage.json"), "--method", method, "--json"]);
        assert_eq!(code, EXIT_OK, "{method}");
        let report: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((report["value"].as_f64().unwrap() - 0.09).abs() < 1e-15);
    }
}

#[test]
fn infeasible_policy_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let pol = dir.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("two_stage_perturbed_policy.json")).unwrap();
    std::fs::write(&pol, text.replacen("0.0", "0.5", 1)).unwrap();
    let (code, _, err) = msopt(&["verify", "--input", &fixture("two_stage.json"), "--policy", pol.to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT, "{err}");
}

#[test]
fn malformed_inputs_are_input_errors() {
    assert_eq!(msopt(&["solve", "--input", "/nonexistent.json"]).0, EXIT_INPUT);
    assert_eq!(msopt(&["solve", "--input", &fixture("mdp_constant.json")]).0, EXIT_INPUT);
    assert_eq!(msopt(&["solve"]).0, EXIT_INPUT);
    assert_eq!(msopt(&["frobnicate"]).0, EXIT_INPUT);
    assert_eq!(msopt(&["--help"]).0, EXIT_OK);
}

#[test]
fn value_iteration_reports_non_convergence() {
    let (code, out, _) = msopt(&["value-iterate", "--input", &fixture("mdp_random.json"), "--max-iters", "3", "--json"]);
    assert_eq!(code, EXIT_NEGATIVE);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["converged"], false);
    assert_eq!(report["residuals"].as_array().unwrap().len(), 3);
    let (code, out, _) = msopt(&["value-iterate", "--input", &fixture("mdp_constant.json"), "--json"]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    for v in report["values"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 2.0).abs() <= 1e-8);
    }
}

#[test]
fn interchange_demo() {
    let (code, out, _) = msopt(&["demo-interchange", "--json"]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["nodewise"]["gap"], 0.0);
    assert_eq!(report["history_blind"]["gap"], 4.0);
    let (code, file_out, _) = msopt(&["demo-interchange", "--input", &fixture("interchange.json"), "--json"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(serde_json::from_str::<serde_json::Value>(&file_out).unwrap()["history_blind"], report["history_blind"]);
    for seed in 0..20 {
        let seed = seed.to_string();
        assert_eq!(msopt(&["demo-interchange", "--random", "--seed", &seed]).0, EXIT_OK);
    }
}

#[test]
fn solvers_on_mdp_and_stagewise_files() {
    let (code, out, _) = msopt(&["mdp-solve", "--input", &fixture("mdp_constant.json"), "--horizon", "3", "--json"]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["values"][0], serde_json::json!([1.75, 1.75]));
    let (code, out, _) = msopt(&["sddp-solve", "--input", &fixture("stagewise.json"), "--json"]);
    assert_eq!(code, EXIT_OK);
    let sddp: serde_json::Value = serde_json::from_str(&out).unwrap();
    let (_, out, _) = msopt(&["solve", "--input", &fixture("stagewise_tree.json"), "--json"]);
    let tree: serde_json::Value = serde_json::from_str(&out).unwrap();
    let (a, b) = (sddp["root_value"].as_f64().unwrap(), tree["value"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-9);
}

#[test]
fn validate_every_fixture() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for path in names {
        let (code, out, err) = msopt(&["validate", "--input", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{}: {out}{err}", path.display());
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("two_stage.json")).unwrap();
    std::fs::write(&bad, text.replace("0.75", "0.85")).unwrap();
    let (code, out, _) = msopt(&["validate", "--input", bad.to_str().unwrap(), "--json"]);
    assert_eq!(code, EXIT_NEGATIVE);
    assert!(out.contains("\"valid\": false"));
}
