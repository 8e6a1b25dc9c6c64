use otlaplace::experiment::{run_experiment, run_experiment_with_jobs, ExperimentConfig};

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

#[test]
fn connectivity_radius_shrinks_with_sample_size() {
    let c = config(
        r#"{"kind": "synthetic2d", "n": [100, 200, 400, 800], "m": 30, "label_rates": [0.2], "trials": 5,
            "epsilon": {"policy": "connectivity", "factor": 1.1}, "seed": 1}"#,
    );
    let s = run_experiment(&c).unwrap().summary;
    let eps: Vec<f64> = s.epsilons.iter().map(|e| e.epsilon.mean).collect();
    assert_eq!(eps.len(), 4);
    let violations = eps.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(violations <= 1, "{eps:?}");
}

#[test]
fn accuracy_grows_with_label_rate() {
    let c = config(
        r#"{"kind": "synthetic2d", "n": 200, "m": 30, "label_rates": [0.05, 0.2, 0.6], "trials": 8,
            "epsilon": {"policy": "connectivity", "factor": 1.1}, "seed": 2}"#,
    );
    let s = run_experiment(&c).unwrap().summary;
    let acc: Vec<_> = s.accuracy.iter().map(|a| a.accuracy).collect();
    for w in acc.windows(2) {
        let pooled = (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
        assert!(w[1].mean > w[0].mean - 2.0 * pooled, "{acc:?}");
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    for json in [
        r#"{"kind": "pointcloud", "n": 40, "m": 32, "k_neighbors": 5, "label_rates": [0.5], "trials": 3, "seed": 5}"#,
        r#"{"kind": "consistency", "n": [60, 120], "trials": 3, "epsilon": {"policy": "connectivity", "factor": 2.0}, "seed": 5}"#,
        r#"{"kind": "tlp_demo", "n": [20, 40], "trials": 2, "label_rates": [0.5], "epsilon": {"policy": "connectivity", "factor": 1.5}, "seed": 5}"#,
        r#"{"kind": "rates", "k": 2, "m_values": [8, 16], "proxy_m": 800, "trials": 3, "seed": 5}"#,
    ] {
        let c = config(json);
        let one = run_experiment_with_jobs(&c, Some(1)).unwrap();
        let many = run_experiment_with_jobs(&c, Some(4)).unwrap();
        assert_eq!(one.files, many.files, "{json}");
    }
}
