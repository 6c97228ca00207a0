use serde_json::Value;
use smpc_web::{bundled_text, geometry_json, simulate_json, zones_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn geometry_lists_twelve_paths() {
    let g = parse(geometry_json(&bundled_text("scenario1").unwrap()).unwrap());
    assert_eq!(g["paths"].as_array().unwrap().len(), 12);
    assert_eq!(g["control_radius"], 90.0);
}

#[test]
fn crossing_paths_have_covered_zones() {
    let text = bundled_text("scenario1").unwrap();
    let z = parse(zones_json(&text, "W-straight", "N-straight", 0.0, 0.0).unwrap());
    assert_eq!(z["covered"], true);
    assert_eq!(z["zones"].as_array().unwrap().len(), 1);
    assert!(zones_json(&text, "W-straight", "nowhere", 0.0, 0.0).is_err());
}

#[test]
fn simulation_frames_cover_every_vehicle() {
    let s = parse(simulate_json(&bundled_text("scenario1").unwrap(), "", "", 0.5).unwrap());
    assert_eq!(s["safe"], true);
    let frames = s["frames"].as_array().unwrap();
    assert!(frames.len() > 20);
    assert!(frames.iter().all(|f| f.as_array().unwrap().len() == 4));
    // everyone starts inside the control area
    assert!(frames[0].as_array().unwrap().iter().all(|p| !p.is_null()));
}

#[test]
fn bad_input_is_an_error_not_a_panic() {
    assert!(bundled_text("scenario9").is_err());
    assert!(geometry_json("not toml").is_err());
    assert!(simulate_json("name = 1", "", "", 0.1).is_err());
}
