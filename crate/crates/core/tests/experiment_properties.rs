use std::fs;

use sparsebench_core::decoders::{DecoderKind, DecoderParams};
use sparsebench_core::experiment::{
    run_experiment, write_results, DecoderSpec, ExperimentConfig, SuccessCurve, TrialRecord,
};
use sparsebench_core::lp::SolverOptions;

fn config(k_values: Vec<usize>, trials: usize, decoders: &[DecoderKind]) -> ExperimentConfig {
    ExperimentConfig {
        n: 128,
        m: 50,
        k_values,
        trials_per_k: trials,
        decoders: decoders
            .iter()
            .map(|&d| DecoderSpec::new(d, DecoderParams::default()))
            .collect(),
        base_seed: 42,
        support_tol: 1e-4,
        solver: SolverOptions::default(),
    }
}

/// Everything but wall-clock time.
fn normalized(records: &[TrialRecord]) -> Vec<TrialRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_time = 0.0;
            r
        })
        .collect()
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = config(
        vec![3, 11, 19],
        6,
        &[DecoderKind::L1, DecoderKind::TwoStage, DecoderKind::Alternating],
    );
    let serial = run_experiment(&cfg, 1).unwrap();
    let parallel = run_experiment(&cfg, 8).unwrap();
    assert_eq!(serial.curve, parallel.curve);
    assert_eq!(normalized(&serial.records), normalized(&parallel.records));

    let keys: Vec<_> = serial
        .records
        .iter()
        .map(|r| (r.decoder_index, r.k, r.trial_index))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn empty_results_write_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(vec![1], 1, &[DecoderKind::L1]);
    let paths = write_results(
        &cfg,
        &SuccessCurve { points: vec![] },
        &[],
        dir.path().join("empty"),
        false,
    )
    .unwrap();
    assert_eq!(
        fs::read_to_string(&paths.curve).unwrap(),
        "decoder,k,trials,successes,rate\n"
    );
    assert_eq!(
        fs::read_to_string(&paths.trials).unwrap(),
        "decoder,k,trial,seed,success,linf_error,l1_error,detected_support_size,lp_iterations,error\n"
    );
}

#[test]
fn curve_csv_round_trips_rates_and_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(vec![5, 15], 5, &[DecoderKind::L1, DecoderKind::TwoStage]);
    let out = run_experiment(&cfg, 0).unwrap();
    let first = write_results(&cfg, &out.curve, &out.records, dir.path().join("a"), false).unwrap();

    let mut reader = csv::Reader::from_path(&first.curve).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), out.curve.points.len());
    for (row, p) in rows.iter().zip(&out.curve.points) {
        assert_eq!(&row[0], p.decoder);
        assert_eq!(row[1].parse::<usize>().unwrap(), p.k);
        assert_eq!(row[2].parse::<usize>().unwrap(), p.trials);
        assert_eq!(row[3].parse::<usize>().unwrap(), p.successes);
        assert_eq!(row[4].parse::<f64>().unwrap(), p.rate());
    }

    let echoed = ExperimentConfig::from_json_file(&first.config).unwrap();
    assert_eq!(echoed, cfg);
    let again = run_experiment(&echoed, 3).unwrap();
    let second =
        write_results(&echoed, &again.curve, &again.records, dir.path().join("b"), false).unwrap();
    for (a, b) in [
        (&first.curve, &second.curve),
        (&first.trials, &second.trials),
        (&first.config, &second.config),
    ] {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
}

#[test]
fn timing_column_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(vec![2], 2, &[DecoderKind::L1]);
    let out = run_experiment(&cfg, 1).unwrap();
    let paths = write_results(&cfg, &out.curve, &out.records, dir.path().join("t"), true).unwrap();
    let text = fs::read_to_string(paths.trials).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",error,wall_time"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn plain_l1_fails_far_past_the_transition() {
    let out = run_experiment(&config(vec![40], 100, &[DecoderKind::L1]), 0).unwrap();
    let rate = out.curve.rate("l1", 40).unwrap();
    assert!(rate <= 0.05, "rate {rate}");
}

#[test]
fn two_stage_is_no_worse_than_l1_on_paired_trials() {
    let out = run_experiment(&config(vec![12], 100, &[DecoderKind::L1, DecoderKind::TwoStage]), 0)
        .unwrap();
    let l1 = out.curve.rate("l1", 12).unwrap();
    let two = out.curve.rate("2stage-l1", 12).unwrap();
    assert!(two >= l1, "2stage-l1 {two} vs l1 {l1}");
}
