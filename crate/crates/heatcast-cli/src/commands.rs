//! Implementations of the subcommands, one function per command.
//!
//! Every command is deterministic given the configuration document and the
//! input files: simulation randomness comes from explicit seeds, and the
//! estimator itself has no stochastic steps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use heatcast::calendar::Calendar;
use heatcast::estimator::{em_fit, SufficientStats};
use heatcast::features::FeatureTable;
use heatcast::forecaster::{aggregate_horizon, predict_horizon, Forecast, WalkForwardOptions};
use heatcast::sim::{generate_portfolio, simulate, SimOutput};
use heatcast::state::{load_state, save_state, SavedModel};
use heatcast::timeseries::{
    export_csv, ingest_csv, ConsumerDataset, HourlySeries, Quality, SeriesKind,
};

use crate::config::{default_horizon, load_config, parse_utc, DataSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{
    AggregateArgs, EvaluateArgs, InspectStateArgs, PredictArgs, SimulateArgs, TrainArgs,
};

// ----------------------------------------------------------------- plumbing

fn data_section(cfg: &RunConfig) -> CliResult<&DataSection> {
    cfg.data
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a [data] section".into()))
}

fn build_calendar(time_zone: &str, holiday_file: Option<&Path>) -> CliResult<Calendar> {
    let calendar = Calendar::from_zone_name(time_zone)?;
    Ok(match holiday_file {
        Some(path) => calendar.load_holiday_file(path)?,
        None => calendar,
    })
}

/// Pads the load series with missing hours up to the temperature series'
/// end, so forecasts can target hours that have a temperature but no load
/// observation yet.
fn extend_load(load: &HourlySeries, temperature: &HourlySeries) -> CliResult<HourlySeries> {
    let load_end = load.start() + Duration::hours(load.len() as i64);
    let temp_end = temperature.start() + Duration::hours(temperature.len() as i64);
    let extra = temp_end.signed_duration_since(load_end).num_hours();
    if extra <= 0 {
        return Ok(load.clone());
    }
    let mut values: Vec<(f64, Quality)> = load.iter().map(|(_, v, q)| (v, q)).collect();
    values.extend(std::iter::repeat((f64::NAN, Quality::Missing)).take(extra as usize));
    Ok(HourlySeries::new(load.start(), values, load.unit())?)
}

fn read_dataset(
    consumer_id: &str,
    load_csv: &Path,
    temperature_csv: &Path,
    max_interp_hours: usize,
    extend_for_forecast: bool,
) -> CliResult<ConsumerDataset> {
    let load = ingest_csv(load_csv, SeriesKind::Load)?.fill_gaps(max_interp_hours);
    let temperature =
        ingest_csv(temperature_csv, SeriesKind::Temperature)?.fill_gaps(max_interp_hours);
    let load = if extend_for_forecast {
        extend_load(&load, &temperature)?
    } else {
        load
    };
    Ok(ConsumerDataset::new(consumer_id, load, temperature)?)
}

fn load_dataset(data: &DataSection, extend_for_forecast: bool) -> CliResult<ConsumerDataset> {
    read_dataset(
        &data.consumer_id,
        &data.load_csv,
        &data.temperature_csv,
        data.max_interp_hours,
        extend_for_forecast,
    )
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Lib(heatcast::Error::Io { path: dir.to_path_buf(), source })
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| {
        CliError::Lib(heatcast::Error::Io { path: path.to_path_buf(), source })
    })
}

/// Prints to stdout, tolerating a consumer that closed the pipe early
/// (e.g. `heatcast inspect-state s.json | head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn write_or_print(out: Option<&Path>, text: &str, what: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            write_text(path, text)?;
            eprintln!("{what} written to {}", path.display());
        }
        None => emit(text),
    }
    Ok(())
}

fn forecasts_to_csv(forecasts: &[Forecast]) -> String {
    let mut out =
        String::from("issue_time,target_time,horizon,y_hat,y_nom,y_res,variance,noise_variance\n");
    for f in forecasts {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.issue_time.format("%Y-%m-%dT%H:%M:%SZ"),
            f.target_time.format("%Y-%m-%dT%H:%M:%SZ"),
            f.horizon,
            f.y_hat,
            f.y_nom,
            f.y_res,
            f.variance,
            f.noise_variance
        );
    }
    out
}

// ---------------------------------------------------------------- simulate

fn truth_csv(output: &SimOutput) -> String {
    let mut out = String::from(
        "timestamp,space_heat_kw,tap_water_kw,ventilation_kw,internal_gains_kw,\
         envelope_loss_kw,indoor_temp_c\n",
    );
    let t = &output.truth;
    for i in 0..output.dataset.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            output.dataset.load.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ"),
            t.q_sh_kw[i],
            t.q_tw_kw[i],
            t.q_v_kw[i],
            t.q_int_kw[i],
            t.q_out_kw[i],
            t.t_b_c[i]
        );
    }
    out
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let mut sim = cfg
        .simulate
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs a [simulate] section".into()))?;
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    if let Some(hours) = args.hours {
        sim.hours = hours;
    }
    let mut portfolio = cfg.portfolio.clone();
    if let Some(n) = args.consumers {
        match portfolio.as_mut() {
            Some(p) => p.n_consumers = n,
            None => {
                return Err(CliError::Config(
                    "--consumers needs a [portfolio] section to override".into(),
                ))
            }
        }
    }

    let out_dir = args.out_dir.clone().unwrap_or_else(|| cfg.output.directory.clone());
    ensure_dir(&out_dir)?;

    let outputs = match &portfolio {
        Some(params) => generate_portfolio(&sim, params)?,
        None => vec![simulate(&sim)?],
    };

    let mut consumers = Vec::new();
    for output in &outputs {
        let id = &output.dataset.consumer_id;
        let load_path = out_dir.join(format!("{id}_load.csv"));
        let temp_path = out_dir.join(format!("{id}_temperature.csv"));
        let truth_path = out_dir.join(format!("{id}_truth.csv"));
        export_csv(&output.dataset.load, &load_path)?;
        export_csv(&output.dataset.temperature, &temp_path)?;
        write_text(&truth_path, &truth_csv(output))?;
        consumers.push(serde_json::json!({
            "consumer_id": id,
            "load_csv": load_path,
            "temperature_csv": temp_path,
            "truth_csv": truth_path,
        }));
    }

    let manifest = serde_json::json!({
        "seed": sim.seed,
        "simulate": sim,
        "portfolio": portfolio,
        "consumers": consumers,
    });
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&manifest_path, &text)?;

    emit(&format!(
        "simulated {} consumer(s) x {} hours into {}\n",
        outputs.len(),
        sim.hours,
        out_dir.display()
    ));
    Ok(())
}

// ------------------------------------------------------------------- train

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let data = data_section(&cfg)?;
    let dataset = load_dataset(data, false)?;
    let calendar = build_calendar(&data.time_zone, data.holiday_file.as_deref())?;
    let features = cfg.features.to_feature_config()?;
    let em = cfg.estimator.em_options()?;
    let table = FeatureTable::build(&dataset, &calendar, &features)?;

    let split = match &args.split {
        Some(s) => Some(parse_utc(s)?),
        None => cfg.evaluation.as_ref().map(|e| e.split),
    };
    let mut stats = SufficientStats::new(table.n_phi(), table.n_gamma(), cfg.estimator.lambda)?;
    let mut used = 0usize;
    for row in table.rows() {
        if let Some(limit) = split {
            if row.timestamp >= limit {
                break;
            }
        }
        if let Some(y) = row.y {
            stats.update(&row.phi, &row.gamma, y)?;
            used += 1;
        }
    }
    if used < table.n_phi() {
        return Err(heatcast::Error::InsufficientData {
            context: format!(
                "{used} usable training rows; need at least {} (regressor length)",
                table.n_phi()
            ),
        }
        .into());
    }

    let (state, fit) = em_fit(stats, &em)?;
    let saved = SavedModel {
        consumer_id: dataset.consumer_id.clone(),
        features,
        em,
        state,
    };
    emit(&format!(
        "trained {}: {used} samples, final log-likelihood {:.6}, {} non-zero parameters \
         ({} of {} latent components active), converged: {}\n",
        saved.consumer_id,
        fit.final_ll,
        saved.state.nonzero_params(),
        saved.state.active_count(),
        saved.state.z_hat.len(),
        fit.converged
    ));

    let path = match &args.state_out {
        Some(p) => p.clone(),
        None => {
            ensure_dir(&cfg.output.directory)?;
            cfg.output.directory.join(format!("{}.state.json", saved.consumer_id))
        }
    };
    save_state(&path, &saved)?;
    emit(&format!("state written to {}\n", path.display()));
    Ok(())
}

// ----------------------------------------------------------------- predict

fn last_observed_index(dataset: &ConsumerDataset) -> CliResult<usize> {
    (0..dataset.len())
        .rev()
        .find(|&i| dataset.load.is_usable(i))
        .ok_or_else(|| {
            CliError::Lib(heatcast::Error::InsufficientData {
                context: "dataset has no usable load values".into(),
            })
        })
}

fn resolve_issue_index(
    dataset: &ConsumerDataset,
    issue: Option<&str>,
) -> CliResult<(usize, DateTime<Utc>)> {
    let idx = match issue {
        Some(s) => {
            let ts = parse_utc(s)?;
            dataset.load.index_of(ts).ok_or_else(|| {
                CliError::Lib(heatcast::Error::InsufficientData {
                    context: format!(
                        "issue time {ts} is outside the {} timeline",
                        dataset.consumer_id
                    ),
                })
            })?
        }
        None => last_observed_index(dataset)?,
    };
    Ok((idx, dataset.load.timestamp(idx)))
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let data = data_section(&cfg)?;
    let saved = load_state(&args.state)?;
    let dataset = load_dataset(data, true)?;
    let calendar = build_calendar(&data.time_zone, data.holiday_file.as_deref())?;
    let table = FeatureTable::build(&dataset, &calendar, &saved.features)?;

    let (issue_idx, issue_ts) = resolve_issue_index(&dataset, args.issue.as_deref())?;
    let horizon = args
        .horizon
        .or_else(|| cfg.evaluation.as_ref().map(|e| e.horizon))
        .unwrap_or_else(default_horizon);
    let clamp = cfg
        .evaluation
        .as_ref()
        .map(|e| e.clamp_non_negative)
        .unwrap_or(false);

    let forecasts =
        predict_horizon(&saved.state, &dataset, &table, issue_idx, horizon, clamp)?;
    eprintln!(
        "{}: {horizon} forecast(s) issued at {}",
        saved.consumer_id,
        issue_ts.format("%Y-%m-%dT%H:%M:%SZ")
    );
    write_or_print(args.out.as_deref(), &forecasts_to_csv(&forecasts), "forecasts")
}

// ---------------------------------------------------------------- evaluate

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let data = data_section(&cfg)?;
    let dataset = load_dataset(data, false)?;
    let calendar = build_calendar(&data.time_zone, data.holiday_file.as_deref())?;

    // A saved state supplies the feature and estimator recipe, so a model
    // trained once is evaluated under exactly the options it was fit with.
    let (features, em) = match &args.state {
        Some(path) => {
            let saved = load_state(path)?;
            (saved.features, saved.em)
        }
        None => (cfg.features.to_feature_config()?, cfg.estimator.em_options()?),
    };

    let split = match &args.split {
        Some(s) => parse_utc(s)?,
        None => cfg
            .evaluation
            .as_ref()
            .map(|e| e.split)
            .ok_or_else(|| {
                CliError::Config("evaluate needs [evaluation].split or --split".into())
            })?,
    };
    let horizon = args
        .horizon
        .or_else(|| cfg.evaluation.as_ref().map(|e| e.horizon))
        .unwrap_or_else(default_horizon);
    let clamp = args.clamp
        || cfg
            .evaluation
            .as_ref()
            .map(|e| e.clamp_non_negative)
            .unwrap_or(false);

    let opts = WalkForwardOptions {
        split,
        horizon,
        clamp_non_negative: clamp,
        lambda: cfg.estimator.lambda,
    };
    let out = heatcast::forecaster::walk_forward(&dataset, &calendar, &features, &em, &opts)?;

    let report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    emit(&format!("{report}\n"));
    if let Some(path) = &args.report {
        write_text(path, &report)?;
        eprintln!("report written to {}", path.display());
    }

    let forecasts_path = match &args.forecasts {
        Some(p) => p.clone(),
        None => {
            ensure_dir(&cfg.output.directory)?;
            cfg.output
                .directory
                .join(format!("{}_forecasts.csv", dataset.consumer_id))
        }
    };
    heatcast::forecaster::write_records_csv(&out.records, &forecasts_path)?;
    eprintln!("forecasts written to {}", forecasts_path.display());
    Ok(())
}

// --------------------------------------------------------------- aggregate

pub fn cmd_aggregate(args: &AggregateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    let agg = cfg
        .aggregate
        .as_ref()
        .ok_or_else(|| CliError::Config("aggregate needs an [aggregate] section".into()))?;
    if agg.consumers.is_empty() {
        return Err(CliError::Config("aggregate consumer list is empty".into()));
    }
    let calendar = build_calendar(&agg.time_zone, agg.holiday_file.as_deref())?;
    let issue = parse_utc(&args.issue)?;
    let horizon = args
        .horizon
        .or_else(|| cfg.evaluation.as_ref().map(|e| e.horizon))
        .unwrap_or_else(default_horizon);

    let mut per_consumer = Vec::with_capacity(agg.consumers.len());
    for consumer in &agg.consumers {
        let saved = load_state(&consumer.state)?;
        let dataset = read_dataset(
            &saved.consumer_id,
            &consumer.load_csv,
            &consumer.temperature_csv,
            6,
            true,
        )?;
        let table = FeatureTable::build(&dataset, &calendar, &saved.features)?;
        let idx = dataset.load.index_of(issue).ok_or_else(|| {
            CliError::Lib(heatcast::Error::InsufficientData {
                context: format!(
                    "issue time {issue} is outside the {} timeline",
                    saved.consumer_id
                ),
            })
        })?;
        per_consumer.push(predict_horizon(&saved.state, &dataset, &table, idx, horizon, false)?);
    }

    let rows = aggregate_horizon(per_consumer)?;
    let mut csv = String::from("target_time,horizon,y_tot,variance_tot,n_consumers\n");
    for row in &rows {
        let target = row
            .target_time
            .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{target},{},{},{},{}",
            row.horizon.map(|h| h.to_string()).unwrap_or_default(),
            row.y_tot,
            row.variance_tot,
            row.per_consumer.len()
        );
    }
    eprintln!(
        "aggregated {} consumer(s) over {horizon} hour(s) from {}",
        agg.consumers.len(),
        issue.format("%Y-%m-%dT%H:%M:%SZ")
    );
    write_or_print(args.out.as_deref(), &csv, "portfolio forecast")
}

// ------------------------------------------------------------ inspect-state

pub fn cmd_inspect_state(args: &InspectStateArgs) -> CliResult<()> {
    let saved = load_state(&args.state)?;
    let state = &saved.state;
    let doc = serde_json::json!({
        "consumer_id": saved.consumer_id,
        "nominal_coefficients": state.theta.len(),
        "latent_components": state.z_hat.len(),
        "active_latent": state.active_count(),
        "nonzero_params": state.nonzero_params(),
        "noise_variance": state.sigma2,
        "noise_std": state.sigma2.sqrt(),
        "samples_seen": state.stats.n,
        "lambda": state.stats.lambda,
        "features": saved.features,
        "estimator": saved.em,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&doc).expect("summary serializes")));
    Ok(())
}
