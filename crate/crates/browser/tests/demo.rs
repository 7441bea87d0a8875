use capaboost_browser::{mask_grid_json, rank_spectrum_json, theorem_trials_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn spectrum_rank_grows_with_d() {
    let v = parse(rank_spectrum_json(64, 8, 2, 0.5, "diff_mask", 1).unwrap());
    assert_eq!(v["rank"], 16);
    assert_eq!(v["expected_rank"], 16);
    let sv = v["singular_values"].as_array().unwrap();
    assert_eq!(sv.len(), 64);
    assert!(sv[16..].iter().all(|s| s.as_f64().unwrap() == 0.0));
    let same = parse(rank_spectrum_json(64, 8, 2, 0.5, "same-mask", 1).unwrap());
    assert_eq!(same["rank"], 8);
}

#[test]
fn mask_grid_union() {
    let v = parse(mask_grid_json(16, 16, 2, 0.5, "diff", 3, 0).unwrap());
    let masks = v["masks"].as_array().unwrap();
    assert_eq!(masks.len(), 2);
    let a = masks[0].as_str().unwrap();
    let b = masks[1].as_str().unwrap();
    assert_eq!(a.len(), 256);
    let union = a.chars().zip(b.chars()).filter(|&(x, y)| x == '1' || y == '1').count();
    assert_eq!(v["union_fraction"].as_f64().unwrap(), union as f64 / 256.0);
    assert_eq!(v["expected_union_fraction"], 0.75);
}

#[test]
fn theorem_histogram() {
    let v = parse(theorem_trials_json(32, 4, 20, 0).unwrap());
    assert_eq!(v["successes"], 20);
    assert_eq!(v["sum_rank_histogram"]["8"], 20);
}

#[test]
fn invalid_inputs_are_errors() {
    assert!(rank_spectrum_json(0, 1, 1, 0.5, "diff", 0).is_err());
    assert!(rank_spectrum_json(64, 8, 2, 0.5, "bogus", 0).is_err());
    assert!(mask_grid_json(8, 8, 2, 1.5, "diff", 0, 0).is_err());
    assert!(theorem_trials_json(4096, 2, 5, 0).is_err());
}
