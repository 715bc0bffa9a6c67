use robust_kalman::noise_lab::{MixtureNoiseSpec, RandomStream};
use robust_kalman::tracking_bench::{
    build_cv_model, rmse_curve, run_experiment, simulate_run, BenchSettings, CvModelSpec,
    ErrorAccumulator, FilterKind, MeasurementNoise, Protocol, RunResult,
};
use robust_kalman::{EmSettings, TkfConfig};

fn runs(spec: &CvModelSpec, noise: &MeasurementNoise, count: u64, seed: u64) -> Vec<RunResult> {
    let model = build_cv_model(spec).unwrap();
    (0..count)
        .map(|s| {
            simulate_run(
                &model,
                spec,
                noise,
                &FilterKind::ALL,
                &TkfConfig::default(),
                &EmSettings::default(),
                RandomStream::new(seed, s),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn noiseless_runs_converge_to_truth() {
    let spec = CvModelSpec {
        process_noise: false,
        ..CvModelSpec::default()
    };
    let results = runs(&spec, &MeasurementNoise::None, 3, 1);
    for kind in FilterKind::ALL {
        let series = rmse_curve(&results, kind).unwrap();
        assert_eq!(series.n_diverged, 0);
        let tail = series.time_average_from(20);
        assert!(tail < 1e-6, "{kind}: RMSE after step 20 is {tail:e}");
    }
}

#[test]
fn partitioned_accumulation_matches_whole() {
    let spec = CvModelSpec {
        steps: 40,
        ..CvModelSpec::default()
    };
    let noise = MeasurementNoise::Mixture(MixtureNoiseSpec::isotropic(2, 0.8, 0.1, 10.0));
    let results = runs(&spec, &noise, 9, 77);
    for kind in FilterKind::ALL {
        let whole = rmse_curve(&results, kind).unwrap();
        let mut parts = Vec::new();
        for chunk in [&results[..2], &results[2..7], &results[7..]] {
            let mut acc = ErrorAccumulator::new(spec.steps);
            for r in chunk {
                acc.add(r.track(kind).unwrap()).unwrap();
            }
            parts.push(acc);
        }
        let mut merged = ErrorAccumulator::new(spec.steps);
        for p in &parts {
            merged.merge(p).unwrap();
        }
        let merged = merged.finish(kind);
        assert_eq!(merged.n_runs, whole.n_runs);
        for (a, b) in merged.rmse.iter().zip(&whole.rmse) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let base = BenchSettings {
        runs: 12,
        cv: CvModelSpec {
            steps: 30,
            ..CvModelSpec::default()
        },
        ..BenchSettings::default()
    };
    let protocol = Protocol::SweepGaussPct {
        base,
        grid: vec![0.3, 0.9],
    };
    let one = run_experiment(&protocol, 5, 1).unwrap();
    let many = run_experiment(&protocol, 5, 4).unwrap();
    assert_eq!(one, many);
}

#[test]
fn trajectory_table_shape() {
    let settings = BenchSettings {
        runs: 50,
        filters: vec![FilterKind::Kf, FilterKind::Tgkf],
        ..BenchSettings::default()
    };
    let report = run_experiment(&Protocol::Trajectory(settings), 3, 2).unwrap();
    assert_eq!(
        report.table.columns,
        ["step", "true_x", "true_y", "meas_0", "meas_1", "kf_x", "kf_y", "tgkf_x", "tgkf_y"]
    );
    assert_eq!(report.table.rows.len(), 100);
    let true_x = report.table.column("true_x").unwrap();
    // one step at 15 units/s plus a unit-variance kick
    assert!((true_x[0] - 15.0).abs() < 6.0, "{}", true_x[0]);
}

#[test]
fn weight_demo_protocol_columns() {
    let report = run_experiment(&Protocol::WeightDemo(Default::default()), 1, 1).unwrap();
    assert_eq!(
        report.table.columns,
        ["step", "noise", "r", "a_p", "a_r", "truth", "estimate"]
    );
    assert_eq!(report.table.rows.len(), 200);
    for row in &report.table.rows {
        assert!((row[3] + row[4] - 1.0).abs() < 1e-12);
    }
}
