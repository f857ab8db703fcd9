use spreadsamp::harness::{gen_population, run_monte_carlo, Layout, PopulationSpec, ProbabilityMode, SimulationConfig};

#[test]
fn every_layout_gives_exact_size_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("frame.csv");
    let mut text = String::from("east,north,size\n");
    for i in 0..40 {
        text.push_str(&format!("{},{},{}\n", i % 8, i / 8, 1 + i % 5));
    }
    std::fs::write(&csv, text).unwrap();
    let layouts = [
        Layout::Gridded,
        Layout::Random,
        Layout::clustered(),
        Layout::neyman_scott(),
        Layout::Halton,
        Layout::Csv {
            path: csv.clone(),
            x: "east".into(),
            y: "north".into(),
        },
    ];
    for layout in layouts {
        let size = if matches!(layout, Layout::Csv { .. }) { 40 } else { 100 };
        for probability in [
            ProbabilityMode::Ep { n: 5 },
            ProbabilityMode::UpGradient { n: 5 },
        ] {
            let pop = gen_population(&PopulationSpec {
                layout: layout.clone(),
                size,
                probability,
                seed: 4,
            })
            .unwrap();
            assert_eq!(pop.len(), size, "{}", layout.name());
            assert!((pop.pi().iter().sum::<f64>() - 5.0).abs() < 1e-9);
        }
    }
    let pop = gen_population(&PopulationSpec {
        layout: Layout::Csv {
            path: csv,
            x: "east".into(),
            y: "north".into(),
        },
        size: 40,
        probability: ProbabilityMode::UpColumn {
            column: "size".into(),
            n: 4,
        },
        seed: 0,
    })
    .unwrap();
    assert!((pop.pi()[4] / pop.pi()[0] - 5.0).abs() < 1e-12);
}

#[test]
fn simulation_config_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = format!(
        r#"{{
            "population": {{"layout": {{"kind": "clustered", "clusters": 3, "spread": 0.08}}, "size": 60,
                            "probability": {{"kind": "up-gradient", "n": 4}}, "seed": 2}},
            "designs": ["srs", "lpm1", "nms"],
            "sample_sizes": [4, 6],
            "replicates": 5,
            "indices": ["MI", "VI", "BI", "DI"],
            "output_dir": {:?},
            "seed": 3
        }}"#,
        dir.path()
    );
    let cfg: SimulationConfig = serde_json::from_str(&json).unwrap();
    let report = run_monte_carlo(&cfg).unwrap();
    assert_eq!(report.failures, 0);
    for (size, n) in report.sizes.iter().zip([4, 6]) {
        assert_eq!(size.rows.len(), 5 * 3 * 4);
        assert!(dir.path().join(format!("indices_n{n}.csv")).exists());
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.summary_path).unwrap()).unwrap();
    assert_eq!(summary["n6"]["lpm1"]["VI"]["count"], 5);
    assert!(summary["n4"]["nms"]["BI"]["max"].as_f64().unwrap() <= 1.22);
}
