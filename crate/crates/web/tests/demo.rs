use structsample_web::Demo;

fn demo() -> Demo {
    let mut d = Demo::generate(800, 64, 1.2, 5).unwrap();
    d.resample(40, 1).unwrap();
    d
}

#[test]
fn resample_returns_both_samples() {
    let mut d = Demo::generate(800, 64, 1.2, 5).unwrap();
    let v = d.resample(40, 1).unwrap();
    assert_eq!(v["aware"].as_array().unwrap().len(), 40);
    assert_eq!(v["obliv"].as_array().unwrap().len(), 40);
    assert!(v["tau"].as_f64().unwrap() > 0.0);
    assert_eq!(d.resample(40, 1).unwrap(), v);
}

#[test]
fn whole_domain_query_is_exact() {
    let d = demo();
    let v = d.query(0, 0, 63, 63).unwrap();
    let truth = v["truth"].as_f64().unwrap();
    for m in ["aware", "obliv"] {
        let est = v[m]["estimate"].as_f64().unwrap();
        assert!((est - truth).abs() <= 1e-9 * truth, "{m}: {est} vs {truth}");
        assert_eq!(v[m]["count"].as_u64().unwrap(), 40);
    }
}

#[test]
fn corners_may_be_given_in_any_order() {
    let d = demo();
    assert_eq!(d.query(10, 40, 30, 5).unwrap(), d.query(30, 5, 10, 40).unwrap());
}

#[test]
fn query_needs_a_sample() {
    let d = Demo::generate(100, 32, 1.2, 5).unwrap();
    assert!(d.query(0, 0, 5, 5).is_err());
    assert_eq!(d.points()["points"].as_array().unwrap().len(), 100);
}
