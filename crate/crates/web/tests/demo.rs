use gridguard_web::Demo;

#[test]
fn demo_operations_round_trip_through_json() {
    let demo = Demo::build(1, 90, 20).unwrap();
    assert!(demo.test_days() > 0);

    let d = demo.detection(0, 20, 0.10).unwrap();
    assert_eq!(d["csr"]["flagged"], true);
    assert_eq!(d["csr"]["peak"], 20);
    assert_eq!(d["received"].as_array().unwrap().len(), demo.pricing_slots());

    let clean = demo.detection(0, 20, 0.0).unwrap();
    assert_eq!(clean["received"], clean["genuine"]);

    let iso = demo.isolation(0, 20, 0.10).unwrap();
    assert_eq!(iso["beam"], serde_json::json!([20]));

    let sim = demo.simulation(0, 0.03, 2).unwrap();
    let rows = sim["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["scenario"].as_str().unwrap()).collect();
    assert_eq!(names, ["clean", "attack", "method2"]);
    assert_eq!(rows[0]["attacker_delta_pct"], 0.0);

    assert!(demo.detection(10_000, 0, 0.1).is_err());
}
