use dpln_web::{chain, fruit_colors, learn_formula};
use serde_json::Value;

const FRUIT: &str = r#"
fruits = ["apple"]
colors = ["red", "green"]
n_samples = 40
steps = 30
lr = 0.5
seed = 3

[true_probabilities.apple]
red = 0.25
green = 0.75
"#;

#[test]
fn fruit_colors_returns_a_falling_loss_curve() {
    let v: Value = serde_json::from_str(&fruit_colors(FRUIT).unwrap()).unwrap();
    let curve: Vec<f64> = v["train"]["loss_curve"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(curve.len(), 30);
    assert!(curve[29] < curve[0]);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 2);
}

#[test]
fn fruit_colors_reports_config_errors() {
    let err = fruit_colors("steps = \"many\"").unwrap_err();
    assert!(err.contains("steps"), "{err}");
}

#[test]
fn learn_formula_surface_matches_grid() {
    let cfg = "grid_size = 3\neval_grid_size = 5\np_b_given_not_a = 0.2\nsteps = 20\nlr = 1.0\n";
    let v: Value = serde_json::from_str(&learn_formula(cfg).unwrap()).unwrap();
    let s = &v["surface"];
    assert_eq!(s["n"], 5);
    let exact = s["exact"].as_array().unwrap();
    let learned = s["learned"].as_array().unwrap();
    assert_eq!(exact.len(), 25);
    assert_eq!(learned.len(), 25);
    // row-major over (p_a, p_b_given_a): p_a = 0, p_b_given_a = 0 gives p_b_given_not_a
    assert!((exact[0].as_f64().unwrap() - 0.2).abs() < 1e-12);
    // p_a = 1, p_b_given_a = 0.5
    assert!((exact[22].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(learned.iter().all(|x| (0.0..=1.0).contains(&x.as_f64().unwrap())));
}

#[test]
fn chain_both_directions() {
    let kb = r#"
(InheritanceLink (ConceptNode "sparrow") (ConceptNode "bird"))
(InheritanceLink (ConceptNode "bird") (ConceptNode "animal"))
"#;
    let v: Value = serde_json::from_str(&chain(kb, "", 10, 3, 0.2).unwrap()).unwrap();
    assert_eq!(v["mode"], "forward");
    assert!(v["conclusions"].to_string().contains("animal"));

    let target = r#"(InheritanceLink (ConceptNode "sparrow") $X)"#;
    let v: Value = serde_json::from_str(&chain(kb, target, 0, 3, 0.2).unwrap()).unwrap();
    assert_eq!(v["conclusions"].as_array().unwrap().len(), 2);

    assert!(chain("(InheritanceLink", "", 1, 3, 0.2).is_err());
}

#[test]
fn chain_default_for_missing_negated_implication() {
    let kb = r#"
(EvaluationLink (stv 0.5 1.0) (PredicateNode "apple") (ConceptNode "fuji"))
(ImplicationLink (stv 0.6 1.0) (PredicateNode "apple") (PredicateNode "green"))
"#;
    let target = r#"(EvaluationLink (PredicateNode "green") (ConceptNode "fuji"))"#;
    let v: Value = serde_json::from_str(&chain(kb, target, 0, 1, 0.4).unwrap()).unwrap();
    // 0.6 * 0.5 + 0.4 * 0.5
    assert!((v["conclusions"][0]["strength"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(chain(kb, target, 0, 1, 1.5).is_err());
}
