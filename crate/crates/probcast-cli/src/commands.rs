//! Command implementations. Each command resolves an experiment tree
//! (from flags or a `--config` log), writes the log next to its outputs,
//! then runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use probcast::anomaly;
use probcast::config::{derive_seed, parse, ConfigValue, Configurable};
use probcast::dataset::{
    format_timestamp, generate_synthetic, write_jsonlines, Dataset, Frequency, JsonlDataset, SynthSpec,
};
use probcast::evaluation::{
    backtest as run_backtest, write_metrics_csv, BacktestConfig, EvaluatorConfig, ExperimentConfig, SplitSpec,
};
use probcast::forecast::Forecast;
use probcast::model::{
    estimator_from_config, Estimator, MlpQrEstimator, MlpQrPredictor, NptsEstimator, Predictor, SsmEstimator,
};
use probcast::neuralqr::{load_parameters, save_parameters, Activation, MlpQrConfig, TrainerConfig};
use probcast::npts::{Kernel, NptsConfig};
use probcast::runtime::Executor;
use probcast::ssm::SsmPreset;

use crate::{BacktestArgs, DetectArgs, EstimatorArgs, GenerateArgs, PlotDataArgs, PredictArgs, TrainArgs};

// ---------------------------------------------------------------------------
// Shared helpers

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("invalid {what} entry '{t}'")))
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("invalid {what} entry '{t}'")))
        .collect()
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn executor(sequential: bool) -> Executor {
    if sequential {
        Executor::Sequential
    } else {
        Executor::default()
    }
}

fn load_config_tree(path: &Path) -> Result<ConfigValue> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config log {}", path.display()))?;
    Ok(parse(&text)?)
}

/// Write `<stem>.txt` (constructor notation) and `<stem>.json` under `dir`.
fn write_config_logs(dir: &Path, tree: &ConfigValue) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.log.txt"), tree.render() + "\n")?;
    fs::write(dir.join("config.log.json"), serde_json::to_string_pretty(&tree.to_json())? + "\n")?;
    Ok(())
}

fn build_estimator(
    args: &EstimatorArgs,
    pred_len: usize,
    freq: Frequency,
    master_seed: u64,
) -> Result<Box<dyn Estimator>> {
    let season = if args.season_length == 0 { freq.season_length() } else { args.season_length };
    match args.estimator.as_str() {
        "npts" => {
            let (alpha, auto_alpha) = match args.alpha.as_str() {
                "auto" => (0.0, true),
                "inf" => (f64::INFINITY, false),
                other => (other.parse::<f64>().with_context(|| format!("invalid --alpha '{other}'"))?, false),
            };
            let config = NptsConfig {
                alpha,
                auto_alpha,
                kernel: Kernel::Exponential,
                seasonal: args.seasonal,
                season_length: season,
                num_sample_paths: args.num_paths,
            };
            Ok(Box::new(NptsEstimator::new(config)?))
        }
        "ssm" => {
            let preset = SsmPreset::parse(&args.preset, season)?;
            let mut estimator = SsmEstimator::new(preset)?;
            estimator.max_iters = args.max_iters;
            estimator.num_sample_paths = args.num_paths;
            Ok(Box::new(estimator))
        }
        "mlpqr" => {
            let config = MlpQrConfig {
                context_length: args.context_len,
                prediction_length: pred_len,
                hidden_cells: parse_usize_list(&args.hidden, "--hidden")?,
                activation: Activation::Relu,
                quantiles: parse_f64_list(&args.quantiles, "--quantiles")?,
            };
            let trainer = TrainerConfig {
                num_batches: args.batches,
                seed: derive_seed(master_seed, "trainer"),
                ..TrainerConfig::default()
            };
            Ok(Box::new(MlpQrEstimator::new(config, trainer)?))
        }
        other => bail!("unknown estimator '{other}' (expected npts, ssm, or mlpqr)"),
    }
}

fn quantile_levels_for(estimator: &ConfigValue, fallback: &str) -> Result<Vec<f64>> {
    if estimator.call_name()? == "MlpQrEstimator" {
        Ok(estimator.get("config")?.get("quantiles")?.as_f64_list()?)
    } else {
        parse_f64_list(fallback, "--quantiles")
    }
}

// ---------------------------------------------------------------------------
// generate

pub fn generate(args: GenerateArgs) -> Result<()> {
    let spec = match &args.config {
        Some(path) => SynthSpec::from_config(&load_config_tree(path)?)?,
        None => {
            let path = args.spec.as_ref().expect("clap enforces --spec");
            let text = fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
            let mut spec: SynthSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?;
            if let Some(seed) = args.seed {
                spec.rng_seed = seed;
            }
            spec
        }
    };
    let out = args.out.clone();
    let count = write_jsonlines(generate_synthetic(&spec)?, &out)?;

    let tree = spec.to_config();
    fs::write(out.with_extension("config.txt"), tree.render() + "\n")?;
    fs::write(
        out.with_extension("config.json"),
        serde_json::to_string_pretty(&tree.to_json())? + "\n",
    )?;
    println!("wrote {count} series to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn train(args: TrainArgs) -> Result<()> {
    let tree = match &args.config {
        Some(path) => load_config_tree(path)?,
        None => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let freq = Frequency::parse(&args.freq)?;
            let pred_len = args.pred_len.expect("clap enforces --pred-len");
            let estimator = build_estimator(&args.estimator, pred_len, freq, args.seed)?;
            ConfigValue::call(
                "TrainExperiment",
                vec![
                    ("data", ConfigValue::str(data.display().to_string())),
                    ("freq", ConfigValue::str(&args.freq)),
                    ("estimator", estimator.config()),
                    ("prediction_length", ConfigValue::Int(pred_len as i64)),
                ],
            )
        }
    };

    let data_path = PathBuf::from(tree.get("data")?.as_str()?);
    let freq = Frequency::parse(tree.get("freq")?.as_str()?)?;
    let est_tree = tree.get("estimator")?;

    write_config_logs(&args.out, &tree)?;
    let data = JsonlDataset::new(&data_path, freq);
    if est_tree.call_name()? == "MlpQrEstimator" {
        let config = MlpQrConfig::from_config(est_tree.get("config")?)?;
        let trainer = TrainerConfig::from_config(est_tree.get("trainer")?)?;
        let trained = probcast::neuralqr::train(&config, &trainer, &data)?;
        save_parameters(&trained.params, &args.out.join("model.bin"))?;
        println!("trained model written to {}", args.out.join("model.bin").display());
    } else {
        // Pure predictors carry no trainable state; the config log alone
        // reconstructs them.
        estimator_from_config(est_tree)?;
        println!("estimator has no trainable parameters; config log written to {}", args.out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict / plot-data

/// Load a predictor (and its logged configuration) from a `train` output
/// directory: saved weights for a trained model, a rebuilt pure predictor
/// otherwise.
fn model_predictor(dir: &Path) -> Result<(Box<dyn Predictor>, ConfigValue, usize)> {
    let tree = load_config_tree(&dir.join("config.log.txt"))?;
    let est_tree = tree.get("estimator")?.clone();
    let prediction_length = tree.get("prediction_length")?.as_usize()?;
    let predictor: Box<dyn Predictor> = if est_tree.call_name()? == "MlpQrEstimator" {
        let config = MlpQrConfig::from_config(est_tree.get("config")?)?;
        let params = load_parameters(&dir.join("model.bin"), config.activation)?;
        Box::new(MlpQrPredictor { params, config })
    } else {
        estimator_from_config(&est_tree)?.train(&probcast::dataset::InMemoryDataset::default())?
    };
    Ok((predictor, est_tree, prediction_length))
}

/// Per-step output columns: one per quantile level, then the mean.
fn forecast_columns(forecast: &Forecast, levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut columns = Vec::with_capacity(levels.len() + 1);
    for q in levels {
        columns.push(forecast.quantile(*q)?);
    }
    columns.push(forecast.mean());
    Ok(columns)
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let tree = match &args.config {
        Some(path) => load_config_tree(path)?,
        None => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let freq = Frequency::parse(&args.freq)?;
            let (est_tree, prediction_length) = match &args.model {
                Some(dir) => {
                    let (_, est_tree, logged_len) = model_predictor(dir)?;
                    (est_tree, args.pred_len.unwrap_or(logged_len))
                }
                None => {
                    let pred_len = args.pred_len.context("--pred-len is required without --model")?;
                    (build_estimator(&args.estimator, pred_len, freq, args.seed)?.config(), pred_len)
                }
            };
            let levels = quantile_levels_for(&est_tree, &args.estimator.quantiles)?;
            let mut fields = vec![
                ("data", ConfigValue::str(data.display().to_string())),
                ("freq", ConfigValue::str(&args.freq)),
                ("estimator", est_tree),
                ("prediction_length", ConfigValue::Int(prediction_length as i64)),
                ("quantile_levels", ConfigValue::float_list(&levels)),
                ("seed", ConfigValue::Int(args.seed as i64)),
            ];
            if let Some(model) = &args.model {
                fields.push(("model", ConfigValue::str(model.display().to_string())));
            }
            ConfigValue::call("PredictExperiment", fields)
        }
    };

    let freq = Frequency::parse(tree.get("freq")?.as_str()?)?;
    let data_path = PathBuf::from(tree.get("data")?.as_str()?);
    let prediction_length = tree.get("prediction_length")?.as_usize()?;
    let levels = tree.get("quantile_levels")?.as_f64_list()?;
    let seed = tree.get("seed")?.as_u64()?;
    let model_dir = tree.get("model").ok().map(|v| PathBuf::from(v.as_str().unwrap_or_default()));

    let data = JsonlDataset::new(&data_path, freq);
    let predictor: Box<dyn Predictor> = if let Some(dir) = &model_dir {
        model_predictor(dir)?.0
    } else {
        let estimator = estimator_from_config(tree.get("estimator")?)?;
        estimator.train(&data)?
    };

    write_config_logs(&args.out, &tree)?;
    let mut file = fs::File::create(args.out.join("forecasts.csv"))?;
    let mut header = String::from("item_id,step,time");
    for q in &levels {
        header.push_str(&format!(",q{q}"));
    }
    header.push_str(",mean\n");
    file.write_all(header.as_bytes())?;

    let mut count = 0usize;
    for record in data.iter()? {
        let record = record?;
        let item_seed = derive_seed(seed, &format!("predict/{}", record.item_id));
        let forecast = predictor.predict(&record, prediction_length, item_seed)?;
        let columns = forecast_columns(&forecast, &levels)?;
        for step in 0..forecast.horizon() {
            let mut line = format!(
                "{},{},{}",
                record.item_id,
                step,
                format_timestamp(forecast.timestamp_at(step)?)
            );
            for values in &columns {
                line.push_str(&format!(",{}", fmt_f64(values[step])));
            }
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        count += 1;
    }
    println!("forecasts for {count} series written to {}", args.out.join("forecasts.csv").display());
    Ok(())
}

pub fn plot_data(args: PlotDataArgs) -> Result<()> {
    let tree = match &args.config {
        Some(path) => load_config_tree(path)?,
        None => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let freq = Frequency::parse(&args.freq)?;
            let pred_len = args.pred_len.expect("clap enforces --pred-len");
            let estimator = build_estimator(&args.estimator, pred_len, freq, args.seed)?;
            let levels = quantile_levels_for(&estimator.config(), &args.estimator.quantiles)?;
            ConfigValue::call(
                "PlotDataExperiment",
                vec![
                    ("data", ConfigValue::str(data.display().to_string())),
                    ("freq", ConfigValue::str(&args.freq)),
                    ("estimator", estimator.config()),
                    ("prediction_length", ConfigValue::Int(pred_len as i64)),
                    ("history_steps", ConfigValue::Int(args.history as i64)),
                    ("quantile_levels", ConfigValue::float_list(&levels)),
                    ("seed", ConfigValue::Int(args.seed as i64)),
                ],
            )
        }
    };

    let freq = Frequency::parse(tree.get("freq")?.as_str()?)?;
    let data_path = PathBuf::from(tree.get("data")?.as_str()?);
    let prediction_length = tree.get("prediction_length")?.as_usize()?;
    let history_steps = tree.get("history_steps")?.as_usize()?;
    let levels = tree.get("quantile_levels")?.as_f64_list()?;
    let seed = tree.get("seed")?.as_u64()?;

    let data = JsonlDataset::new(&data_path, freq);
    let estimator = estimator_from_config(tree.get("estimator")?)?;
    let predictor = estimator.train(&data)?;

    write_config_logs(&args.out, &tree)?;
    let mut file = fs::File::create(args.out.join("plot.csv"))?;
    let mut header = String::from("item_id,time,observed");
    for q in &levels {
        header.push_str(&format!(",q{q}"));
    }
    header.push_str(",mean\n");
    file.write_all(header.as_bytes())?;

    let empty_cols = levels.len() + 1;
    for record in data.iter()? {
        let record = record?;
        let item_seed = derive_seed(seed, &format!("predict/{}", record.item_id));
        let forecast = predictor.predict(&record, prediction_length, item_seed)?;
        let columns = forecast_columns(&forecast, &levels)?;

        let history = if history_steps == 0 { 4 * prediction_length } else { history_steps };
        let first = record.target.len().saturating_sub(history);
        for t in first..record.target.len() {
            let observed = record.target[t].map(fmt_f64).unwrap_or_default();
            let line = format!(
                "{},{},{}{}\n",
                record.item_id,
                format_timestamp(record.timestamp_at(t)?),
                observed,
                ",".repeat(empty_cols)
            );
            file.write_all(line.as_bytes())?;
        }
        for step in 0..forecast.horizon() {
            let mut line = format!(
                "{},{},",
                record.item_id,
                format_timestamp(forecast.timestamp_at(step)?)
            );
            for values in &columns {
                line.push_str(&format!(",{}", fmt_f64(values[step])));
            }
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
    }
    println!("plot data written to {}", args.out.join("plot.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// backtest

pub fn backtest(args: BacktestArgs) -> Result<()> {
    let experiment = match &args.config {
        Some(path) => ExperimentConfig::from_config(&load_config_tree(path)?)?,
        None => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let freq = Frequency::parse(&args.freq)?;
            let pred_len = args.pred_len.expect("clap enforces --pred-len");
            let estimator = build_estimator(&args.estimator, pred_len, freq, args.seed)?;
            let stride = if args.stride == 0 { pred_len } else { args.stride };
            ExperimentConfig {
                data_path: data.display().to_string(),
                freq: args.freq.clone(),
                estimator: estimator.config(),
                split: SplitSpec { prediction_length: pred_len, num_windows: args.windows, stride },
                evaluator: EvaluatorConfig {
                    quantile_levels: parse_f64_list(&args.estimator.quantiles, "--quantiles")?,
                    ..EvaluatorConfig::default()
                },
                seed: args.seed,
            }
        }
    };

    let freq = Frequency::parse(&experiment.freq)?;
    let estimator = estimator_from_config(&experiment.estimator)?;
    let data = JsonlDataset::new(&experiment.data_path, freq);
    let config = BacktestConfig {
        split: experiment.split,
        evaluator: experiment.evaluator.clone(),
        seed: experiment.seed,
    };

    write_config_logs(&args.out, &experiment.to_config())?;
    let output = run_backtest(&data, estimator.as_ref(), &config, executor(args.sequential))?;

    let mut metrics = Vec::new();
    write_metrics_csv(&output.rows, &experiment.evaluator.quantile_levels, &mut metrics)?;
    fs::write(args.out.join("metrics.csv"), metrics)?;
    fs::write(args.out.join("aggregate.json"), output.report.to_json() + "\n")?;
    fs::write(args.out.join("aggregate.txt"), output.report.to_text())?;

    println!(
        "backtest: {} windows, wMAPE {}, mean CRPS {}, outputs in {}",
        output.report.window_count,
        fmt_f64(output.report.wmape),
        fmt_f64(output.report.mean_crps),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// detect

pub fn detect(args: DetectArgs) -> Result<()> {
    let tree = match &args.config {
        Some(path) => load_config_tree(path)?,
        None => {
            let data = args.data.as_ref().expect("clap enforces --data");
            let freq = Frequency::parse(&args.freq)?;
            let season = if args.season_length == 0 { freq.season_length() } else { args.season_length };
            let preset = SsmPreset::parse(&args.preset, season)?;
            let method = match args.method.as_str() {
                "cdf" => anomaly::AnomalyMethod::CdfPValue { threshold: args.threshold },
                "nll" => anomaly::AnomalyMethod::NllPercentile {
                    levels: parse_f64_list(&args.levels, "--levels")?,
                },
                other => bail!("unknown detection method '{other}' (expected cdf or nll)"),
            };
            method.validate()?;
            ConfigValue::call(
                "DetectExperiment",
                vec![
                    ("data", ConfigValue::str(data.display().to_string())),
                    ("freq", ConfigValue::str(&args.freq)),
                    ("method", method.to_config()),
                    ("flag_level", ConfigValue::Float(args.level)),
                    ("preset", preset.to_config()),
                    ("max_iters", ConfigValue::Int(args.max_iters as i64)),
                ],
            )
        }
    };

    let freq = Frequency::parse(tree.get("freq")?.as_str()?)?;
    let data_path = PathBuf::from(tree.get("data")?.as_str()?);
    let method = anomaly::AnomalyMethod::from_config(tree.get("method")?)?;
    let preset = SsmPreset::from_config(tree.get("preset")?)?;
    let max_iters = tree.get("max_iters")?.as_usize()?;
    let flag_level = tree.get("flag_level")?.as_f64()?;
    let exec = executor(args.sequential);

    let data = JsonlDataset::new(&data_path, freq);
    write_config_logs(&args.out, &tree)?;

    let mut file = fs::File::create(args.out.join("anomalies.csv"))?;
    file.write_all(b"item_id,index,time,value,score,flagged\n")?;
    let mut write_report = |report: &anomaly::AnomalyReport,
                            start: probcast::dataset::NaiveDateTime,
                            freq: Frequency|
     -> Result<()> {
        for p in &report.points {
            let line = format!(
                "{},{},{},{},{},{}\n",
                report.item_id,
                p.index,
                format_timestamp(freq.add_steps(start, p.index as i64)?),
                fmt_f64(p.value),
                fmt_f64(p.score),
                p.flagged
            );
            file.write_all(line.as_bytes())?;
        }
        Ok(())
    };

    let mut flagged = 0usize;
    match method {
        anomaly::AnomalyMethod::CdfPValue { threshold } => {
            exec.for_each_chunked(
                data.iter()?,
                64,
                |record: probcast::dataset::TimeSeriesRecord| {
                    let report = anomaly::detect_record_cdf(&record, &preset, max_iters, threshold)?;
                    Ok((report, record.start, record.freq))
                },
                |(report, start, freq)| {
                    flagged += report.flagged_indices().len();
                    write_report(&report, start, freq).map_err(|e| {
                        probcast::Error::validation(format!("writing anomalies.csv: {e}"))
                    })
                },
            )?;
        }
        anomaly::AnomalyMethod::NllPercentile { levels } => {
            let (thresholds, traces) = anomaly::calibrate_nll_ssm(&data, &preset, max_iters, &levels, exec, 64)?;
            let threshold = thresholds.value_at(flag_level)?;
            let mut text = String::new();
            for (l, v) in thresholds.levels.iter().zip(&thresholds.values) {
                text.push_str(&format!("threshold[{l}] = {}\n", fmt_f64(*v)));
            }
            fs::write(args.out.join("thresholds.txt"), text)?;
            for trace in traces {
                let report = anomaly::detect_nll(&trace.item_id, &trace.nlls, &trace.target, threshold)?;
                flagged += report.flagged_indices().len();
                write_report(&report, trace.start, trace.freq)?;
            }
        }
    }
    println!("{flagged} anomalous points flagged; report in {}", args.out.join("anomalies.csv").display());
    Ok(())
}
