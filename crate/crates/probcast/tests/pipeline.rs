//! Cross-module flows: streams through transformation pipelines into
//! models, forecast/evaluation alignment, and smoothing-based imputation.

use probcast::dataset::{
    generate_synthetic, read_jsonlines, write_jsonlines, Frequency, NoiseSpec, SynthSpec,
};
use probcast::evaluation::{split_record, SplitSpec};
use probcast::model::{Estimator, NptsEstimator, SsmEstimator};
use probcast::npts::NptsConfig;
use probcast::ssm::{fit_mle, kalman_smooth, SsmPreset};
use probcast::transform::{InstanceSplitter, Pipeline, SplitMode, TransformStep};

fn seasonal_spec() -> SynthSpec {
    SynthSpec {
        num_series: 3,
        length: 100,
        level: 12.0,
        trend_slope: 0.0,
        season_length: 7,
        season_amplitude: 2.0,
        noise: NoiseSpec::Gaussian { sigma: 0.2 },
        num_static_cats: 2,
        cat_level_multipliers: vec![1.0, 2.0],
        rng_seed: 13,
        start: "2024-01-01 00:00:00".to_string(),
        freq: "D".to_string(),
    }
}

#[test]
fn generated_data_round_trips_through_files_and_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    write_jsonlines(generate_synthetic(&seasonal_spec()).unwrap(), &path).unwrap();

    let pipeline = Pipeline::new(vec![
        TransformStep::MarkMissing,
        TransformStep::AddTimeFeatures { extend_steps: 7 },
    ]);
    let records: Vec<_> = pipeline
        .apply_stream(read_jsonlines(&path, Frequency::parse("H").unwrap()).unwrap())
        .collect::<probcast::Result<_>>()
        .unwrap();
    assert_eq!(records.len(), 3);
    for record in &records {
        // Freq came from the file (daily), not the reader default.
        assert_eq!(record.freq, Frequency::parse("D").unwrap());
        // Observed indicator plus two daily calendar features.
        assert_eq!(record.feat_dynamic_real.len(), 3);
        assert_eq!(record.feat_dynamic_real[1].len(), 107);
        assert!(record.feat_static_cat.len() == 1);
    }
}

#[test]
fn instance_stream_aligns_with_forecast_windows() {
    let records: Vec<_> =
        generate_synthetic(&seasonal_spec()).unwrap().collect::<probcast::Result<_>>().unwrap();
    let mut splitter = InstanceSplitter::new(14, 7, SplitMode::Test, 0).unwrap();
    let mut stream = splitter.split_stream(records.iter().cloned().map(Ok));
    let mut count = 0;
    for (instance, record) in stream.by_ref().zip(&records) {
        let instance = instance.unwrap();
        assert_eq!(instance.forecast_start, record.end_timestamp().unwrap());
        assert_eq!(instance.past_target.len(), 14);
        count += 1;
    }
    assert_eq!(count, 3);
}

#[test]
fn backtest_windows_line_up_with_predictor_output() {
    let records: Vec<_> =
        generate_synthetic(&seasonal_spec()).unwrap().collect::<probcast::Result<_>>().unwrap();
    let spec = SplitSpec::rolling(7, 3);
    let estimator = NptsEstimator::new(NptsConfig {
        alpha: 0.4,
        seasonal: true,
        season_length: 7,
        num_sample_paths: 30,
        ..NptsConfig::default()
    })
    .unwrap();
    let predictor = estimator.train(&probcast::dataset::InMemoryDataset::default()).unwrap();

    for record in &records {
        for window in split_record(record, &spec).unwrap() {
            let forecast = predictor.predict(&window.train, 7, 5).unwrap();
            assert_eq!(forecast.horizon(), window.truth.len());
            // forecast_start + k steps indexes truth[k].
            assert_eq!(forecast.start, window.train.end_timestamp().unwrap());
            let offset = window.train.target.len();
            let expected_time = record.timestamp_at(offset).unwrap();
            assert_eq!(forecast.start, expected_time);
        }
    }
}

#[test]
fn smoothing_imputes_masked_values_near_truth() {
    // Mask a few points of a smooth series, fit a local level, and check
    // the smoother's posterior mean lands near the hidden truth.
    let spec = SynthSpec {
        num_series: 1,
        length: 160,
        level: 8.0,
        trend_slope: 0.0,
        season_length: 1,
        season_amplitude: 0.0,
        noise: NoiseSpec::Gaussian { sigma: 0.15 },
        num_static_cats: 0,
        cat_level_multipliers: vec![],
        rng_seed: 77,
        start: "2024-01-01 00:00:00".to_string(),
        freq: "H".to_string(),
    };
    let record = generate_synthetic(&spec).unwrap().next().unwrap().unwrap();
    let truth: Vec<f64> = record.target.iter().map(|v| v.unwrap()).collect();

    let mut masked = record.target.clone();
    let holes = [20usize, 75, 130];
    for h in &holes {
        masked[*h] = None;
    }
    let fit = fit_mle(&SsmPreset::LocalLevel, &masked, 500).unwrap();
    let params = SsmPreset::LocalLevel.expand(&fit.params, masked.len()).unwrap();
    let smoothed = kalman_smooth(&params, &masked).unwrap();
    for h in &holes {
        let err = (smoothed[*h].mean - truth[*h]).abs();
        assert!(err < 0.5, "imputed {} vs truth {} at {h}", smoothed[*h].mean, truth[*h]);
        assert!(smoothed[*h].variance > 0.0);
        assert!(!smoothed[*h].observed);
    }
}

#[test]
fn ssm_estimator_handles_missing_values_end_to_end() {
    let mut records: Vec<_> =
        generate_synthetic(&seasonal_spec()).unwrap().collect::<probcast::Result<_>>().unwrap();
    for record in &mut records {
        record.target[10] = None;
        record.target[11] = None;
    }
    let estimator = SsmEstimator::new(SsmPreset::LocalLevel).unwrap();
    let predictor = estimator.train(&probcast::dataset::InMemoryDataset::default()).unwrap();
    for record in &records {
        let forecast = predictor.predict(record, 5, 3).unwrap();
        let median = forecast.quantile(0.5).unwrap();
        assert!(median.iter().all(|v| v.is_finite()));
    }
}
