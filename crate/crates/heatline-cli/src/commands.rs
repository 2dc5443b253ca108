//! The seven commands behind the CLI verbs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use heatline_core::clock::Clock;
use heatline_core::drl::{drl_train, evaluate_greedy, AgentCheckpoint};
use heatline_core::fabric::VersionId;
use heatline_core::pipeline::{Fabric, Pipeline, PipelineConfig, PipelineReport};
use heatline_core::power::wrap_model;
use heatline_core::telemetry::LatencyReport;
use heatline_core::twin::{export_trajectory_csv, Mode, PowerAction, Rod, Twin, TwinConfig, ZoneActions};

use crate::analyze::{mean_score_table, CorrelationReport};
use crate::job::{sample_indices, Algorithm, GridFile, JobSpec};
use crate::CliError;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

// --- simulate ---------------------------------------------------------------

pub enum SimController {
    None,
    MaxPower,
}

pub fn simulate(
    config: Option<PathBuf>,
    steps: u64,
    controller: SimController,
    rod_temp_c: f64,
    out: &Path,
) -> Result<(), CliError> {
    let twin_config = match config {
        Some(path) => TwinConfig::from_toml_path(&path)
            .map_err(|e| CliError::Validation(e.to_string()))?,
        None => TwinConfig::default(),
    };
    if steps == 0 {
        return Err(CliError::Validation("steps must be >= 1".into()));
    }
    ensure_dir(out)?;
    let rod = Rod::new("sim-rod", 20.0, 40.0, twin_config.segment_length, rod_temp_c)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let last_zone3_sensor = *twin_config
        .zone_forge_positions(2)
        .last()
        .expect("zone 3 has sensors");
    let mut twin =
        Twin::new(twin_config, vec![rod]).map_err(|e| CliError::Validation(e.to_string()))?;

    let actions: Option<ZoneActions> = match controller {
        SimController::None => None,
        SimController::MaxPower => Some([PowerAction::Increase; 5]),
    };
    let trajectory = twin
        .run(steps, |_| Ok(actions))
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let csv_path = out.join("trajectory.csv");
    export_trajectory_csv(&csv_path, &trajectory)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // Zone-3 last-sensor summary over the run, read from the readouts.
    let sensor_idx = trajectory
        .first()
        .and_then(|(_, r)| {
            r.positions.iter().position(|p| (*p - last_zone3_sensor).abs() < 1e-9)
        })
        .ok_or_else(|| CliError::Runtime("zone-3 sensor missing from readout".into()))?;
    let temps: Vec<f64> = trajectory.iter().map(|(_, r)| r.temps[sensor_idx]).collect();
    let min = temps.iter().copied().fold(f64::INFINITY, f64::min);
    let max = temps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = temps.iter().sum::<f64>() / temps.len() as f64;
    let summary = serde_json::json!({
        "steps": steps,
        "zone3_last_sensor": {
            "position_m": last_zone3_sensor,
            "min_c": min,
            "max_c": max,
            "mean_c": mean,
        },
    });
    write_file(&out.join("summary.json"), &summary.to_string())?;
    println!("wrote {} and summary.json (zone-3 last sensor mean {mean:.1} C)", csv_path.display());
    Ok(())
}

// --- train -------------------------------------------------------------------

pub struct TrainOutput {
    pub best_score: f64,
    pub mean_final10: f64,
    pub eval_score: f64,
}

pub fn train(job_path: &Path, grid_mode: bool, out: &Path) -> Result<TrainOutput, CliError> {
    let job = JobSpec::from_toml_path(job_path)?;
    train_job(&job, grid_mode, out, true)
}

pub fn train_job(
    job: &JobSpec,
    grid_mode: bool,
    out: &Path,
    write_artifacts: bool,
) -> Result<TrainOutput, CliError> {
    if grid_mode {
        job.validate_grid()?;
    }
    ensure_dir(out)?;
    if write_artifacts {
        print!("{}", job.echo_table());
    }
    let env_config = job.build_env_config()?;
    let mut env = job.build_env()?;
    let mut agent = job.build_agent(env_config.observation_dim());

    let metrics = drl_train(&mut env, &mut agent, job.episodes())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let (eval_score, trace) = evaluate_greedy(&mut env, &agent);

    let best_score = metrics.iter().map(|m| m.score).fold(f64::NEG_INFINITY, f64::max);
    let last10: Vec<f64> = metrics.iter().rev().take(10).map(|m| m.score).collect();
    let mean_final10 = last10.iter().sum::<f64>() / last10.len().max(1) as f64;

    if write_artifacts {
        heatline_core::drl::write_metrics_csv(&out.join("metrics.csv"), job.seed, &metrics)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let checkpoint = AgentCheckpoint::capture(&mut agent).with_env(env_config);
        checkpoint
            .save_json(&out.join("checkpoint.json"))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_trace_csv(&out.join("trace.csv"), &trace)?;
        let summary = serde_json::json!({
            "algorithm": format!("{:?}", job.algorithm).to_lowercase(),
            "reward": job.reward.as_str(),
            "scenario": format!("{:?}", job.scenario),
            "seed": job.seed,
            "episodes": job.episodes(),
            "best_score": best_score,
            "mean_final10": mean_final10,
            "greedy_eval_score": eval_score,
        });
        write_file(&out.join("summary.json"), &summary.to_string())?;
        println!(
            "trained {} episodes: best {best_score:.3}, final-10 mean {mean_final10:.3}, greedy eval {eval_score:.3}",
            job.episodes()
        );
    }
    Ok(TrainOutput { best_score, mean_final10, eval_score })
}

/// Per-step greedy evaluation trace: step, last-sensor temperature,
/// controlled-zone power.
fn write_trace_csv(path: &Path, trace: &[(f64, f64)]) -> Result<(), CliError> {
    let mut text = String::from("step,temp_last_c,power_zone_kw\n");
    for (i, (t, p)) in trace.iter().enumerate() {
        text.push_str(&format!("{i},{t},{p}\n"));
    }
    write_file(path, &text)
}

// --- grid ---------------------------------------------------------------------

pub fn grid(grid_path: &Path, budget: usize, seed: u64, out: &Path) -> Result<usize, CliError> {
    let grid = GridFile::from_toml_path(grid_path)?;
    let total = grid.product_size()?;
    let budget = if budget == 0 { total } else { budget };
    let indices = sample_indices(total, budget, seed);
    ensure_dir(out)?;

    // Validate the whole grid against the sweep domains up front.
    for &i in &indices {
        grid.job_at(i).validate_grid()?;
        grid.job_at(i).validate()?;
    }

    let results_path = out.join("results.csv");
    let mut file = std::fs::File::create(&results_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", results_path.display())))?;
    writeln!(file, "{}", results_header()).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (job_id, &index) in indices.iter().enumerate() {
        let job = grid.job_at(index);
        let outcome = train_job(&job, true, out, false)?;
        writeln!(file, "{}", results_row(job_id, &job, &outcome))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!(
            "job {job_id}/{}: best {:.3}, greedy eval {:.3} (grid index {index})",
            indices.len(),
            outcome.best_score,
            outcome.eval_score
        );
    }
    println!("wrote {} ({} jobs of a {total}-point grid)", results_path.display(), indices.len());
    Ok(indices.len())
}

pub fn results_header() -> String {
    [
        "job_id",
        "algorithm",
        "reward",
        "scenario",
        "seed",
        "episodes",
        "learning_rate",
        "batch_size",
        "normalize",
        "noise_z1z2",
        "forge_sensors",
        "gamma",
        "epsilon_start",
        "epsilon_min",
        "epsilon_step",
        "fc1",
        "fc2",
        "target_update_interval",
        "memory_capacity",
        "lambda",
        "c1",
        "clip_epsilon",
        "epochs",
        "training_interval",
        "actor_fc1",
        "actor_fc2",
        "critic_fc1",
        "critic_fc2",
        "best_score",
        "mean_final10",
    ]
    .join(",")
}

fn results_row(job_id: usize, job: &JobSpec, outcome: &TrainOutput) -> String {
    let mut cells: Vec<String> = vec![
        job_id.to_string(),
        format!("{:?}", job.algorithm).to_lowercase(),
        job.reward.as_str().to_string(),
        format!("{:?}", job.scenario),
        job.seed.to_string(),
    ];
    let common = match job.algorithm {
        Algorithm::Dqn => &job.dqn.as_ref().expect("checked").common,
        Algorithm::Ppo => &job.ppo.as_ref().expect("checked").common,
    };
    cells.extend([
        common.episodes.to_string(),
        common.learning_rate.to_string(),
        common.batch_size.to_string(),
        u8::from(common.normalize).to_string(),
        u8::from(common.noise_z1z2).to_string(),
        u8::from(common.sensors == heatline_core::twin::SensorMode::Forge).to_string(),
    ]);
    match (&job.dqn, &job.ppo) {
        (Some(d), _) => {
            cells.extend([
                d.gamma.to_string(),
                d.epsilon_start.to_string(),
                d.epsilon_min.to_string(),
                d.epsilon_step.to_string(),
                d.fc1.to_string(),
                d.fc2.to_string(),
                d.target_update_interval.to_string(),
                d.memory_capacity.to_string(),
            ]);
            cells.extend(std::iter::repeat(String::new()).take(9));
        }
        (_, Some(p)) => {
            cells.extend(std::iter::repeat(String::new()).take(8));
            cells.extend([
                p.lambda.to_string(),
                p.c1.to_string(),
                p.clip_epsilon.to_string(),
                p.epochs.to_string(),
                p.training_interval.to_string(),
                p.actor_fc1.to_string(),
                p.actor_fc2.to_string(),
                p.critic_fc1.to_string(),
                p.critic_fc2.to_string(),
            ]);
        }
        _ => unreachable!("validated"),
    }
    cells.push(outcome.best_score.to_string());
    cells.push(outcome.mean_final10.to_string());
    cells.join(",")
}

// --- correlate ------------------------------------------------------------------

pub fn correlate(results_path: &Path, out: &Path) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(results_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", results_path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| CliError::Validation(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
    let need = ["best_score", "reward"];
    for col in need {
        if !headers.iter().any(|h| h == col) {
            return Err(CliError::Validation(format!("results file is missing `{col}`")));
        }
    }
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if records.len() < 3 {
        return Err(CliError::Validation(format!(
            "need at least 3 jobs to correlate, got {}",
            records.len()
        )));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let numeric_column = |name: &str| -> Vec<Option<f64>> {
        match col(name) {
            None => vec![None; records.len()],
            Some(i) => records
                .iter()
                .map(|r| r.get(i).and_then(|c| if c.is_empty() { None } else { c.parse().ok() }))
                .collect(),
        }
    };
    let scores: Vec<f64> = numeric_column("best_score")
        .into_iter()
        .map(|v| v.ok_or_else(|| CliError::Validation("non-numeric best_score".into())))
        .collect::<Result<_, _>>()?;
    let rewards: Vec<String> = {
        let i = col("reward").expect("checked");
        records.iter().map(|r| r.get(i).unwrap_or("").to_string()).collect()
    };

    let hyperparameters = [
        "episodes",
        "learning_rate",
        "batch_size",
        "normalize",
        "noise_z1z2",
        "forge_sensors",
        "gamma",
        "epsilon_start",
        "epsilon_min",
        "epsilon_step",
        "fc1",
        "fc2",
        "target_update_interval",
        "memory_capacity",
        "lambda",
        "c1",
        "clip_epsilon",
        "epochs",
        "training_interval",
        "actor_fc1",
        "actor_fc2",
        "critic_fc1",
        "critic_fc2",
    ];
    let columns: Vec<(String, Vec<Option<f64>>)> = hyperparameters
        .iter()
        .map(|name| (name.to_string(), numeric_column(name)))
        .collect();

    let report = CorrelationReport::compute(&columns, &scores);
    ensure_dir(out)?;
    write_file(
        &out.join("correlation.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    print!("{}", report.table());
    write_file(&out.join("correlation.txt"), &report.table())?;

    // Per-value mean tables for the headline sweep parameters.
    for name in ["epochs", "training_interval", "actor_fc1"] {
        let values = numeric_column(name);
        if values.iter().all(Option::is_none) {
            continue;
        }
        let table = mean_score_table(&values, &rewards, &scores);
        let mut families: Vec<String> = rewards.clone();
        families.sort();
        families.dedup();
        let mut text = format!("{name},{}\n", families.join(","));
        for (value, means) in &table {
            let cells: Vec<String> = families
                .iter()
                .map(|f| means.get(f).map(|m| format!("{m:.3}")).unwrap_or_default())
                .collect();
            text.push_str(&format!("{value},{}\n", cells.join(",")));
        }
        write_file(&out.join(format!("mean_scores_{name}.csv")), &text)?;
    }
    println!("wrote correlation.json / correlation.txt and mean-score tables to {}", out.display());
    Ok(())
}

// --- deploy ---------------------------------------------------------------------

pub fn deploy(
    checkpoint_path: &Path,
    zone_1based: Option<usize>,
    sensors: Option<heatline_core::twin::SensorMode>,
    store: &Path,
) -> Result<VersionId, CliError> {
    let checkpoint = AgentCheckpoint::load_json(checkpoint_path)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let agent = checkpoint.restore().map_err(|e| CliError::Validation(e.to_string()))?;
    let env = checkpoint.env.clone();
    let zone = match (zone_1based, &env) {
        (Some(z), _) if (1..=5).contains(&z) => z - 1,
        (Some(z), _) => return Err(CliError::Validation(format!("zone {z} out of range 1..=5"))),
        (None, Some(env)) => env.zone,
        (None, None) => return Err(CliError::Validation("checkpoint has no env echo; pass --zone".into())),
    };
    let sensor_mode = match (sensors, &env) {
        (Some(m), _) => m,
        (None, Some(env)) => env.sensors,
        (None, None) => {
            return Err(CliError::Validation("checkpoint has no env echo; pass --sensors".into()))
        }
    };
    let (normalize, norm_bounds, twin) = match &env {
        Some(env) => (env.normalize, env.norm_bounds, env.twin.clone()),
        None => (true, heatline_core::power::NormBounds::default(), TwinConfig::default()),
    };
    let model = wrap_model(agent.policy_net().clone(), zone, sensor_mode, normalize, norm_bounds, &twin)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    // Persist through the store directory: content-addressed bundles plus
    // the active power-control configuration.
    let fabric = Fabric::new(Clock::wall());
    fabric
        .algorithms
        .load_dir(&store.join("algorithms"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let version = fabric.deploy_np_model(&model, "np-drl");
    fabric
        .algorithms
        .dump_dir(&store.join("algorithms"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(
        &store.join("power_config.json"),
        &fabric.power_config.to_json().to_string(),
    )?;
    println!("deployed version {version}");
    Ok(version)
}

// --- pipeline ----------------------------------------------------------------------

pub struct PipelineArgs {
    pub duration_s: u64,
    pub rate: u32,
    pub model: Option<String>,
    pub store: PathBuf,
    pub tag_delay_ms: Option<u64>,
    pub out: PathBuf,
}

pub fn pipeline(args: PipelineArgs) -> Result<PipelineReport, CliError> {
    let fabric = Fabric::new(Clock::wall());
    fabric
        .algorithms
        .load_dir(&args.store.join("algorithms"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let config_path = args.store.join("power_config.json");
    if config_path.exists() {
        let text = std::fs::read_to_string(&config_path)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(e.to_string()))?;
        let stored = heatline_core::fabric::PowerConfigStore::from_json(&value)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let active = stored.get(Mode::NormalProduction);
        fabric.power_config.set(Mode::NormalProduction, active.manager, active.version);
    }
    let version = match args.model {
        Some(v) => VersionId(v),
        None => fabric.power_config.get(Mode::NormalProduction).version,
    };
    if !fabric.algorithms.contains(&version) {
        return Err(CliError::Validation(format!(
            "version {version} not present in {}",
            args.store.join("algorithms").display()
        )));
    }

    let mut config = PipelineConfig::new(args.rate, Duration::from_secs(args.duration_s));
    if let Some(ms) = args.tag_delay_ms {
        config.tag_delay = Some(Duration::from_millis(ms));
    }
    let running = Pipeline::start(config, &fabric, &version)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let dead_letters = running.dead_letters.clone();
    let report = running.wait();

    ensure_dir(&args.out)?;
    if !dead_letters.is_empty() {
        let mut buffer = Vec::new();
        dead_letters
            .dump_ndjson(&mut buffer)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(args.out.join("dead_letters.ndjson"), buffer)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("quarantined {} records to dead_letters.ndjson", dead_letters.len());
    }
    write_file(
        &args.out.join("latency.json"),
        &serde_json::to_string_pretty(&report.latency).expect("serializes"),
    )?;
    write_file(
        &args.out.join("pipeline_report.json"),
        &serde_json::to_string_pretty(&report.to_json()).expect("serializes"),
    )?;
    print!("{}", LatencyReport::table(&report.latency));
    let c = &report.counts;
    println!(
        "records: generated {} = parsed {} + dead-lettered {}",
        c.generated, c.parsed, c.dead_lettered
    );
    println!(
        "snapshots: {} published + {} incomplete over {:.0} s (~{:.2}/s); updates applied {}",
        c.snapshots_published,
        c.snapshots_incomplete,
        report.duration_s,
        c.snapshots_published as f64 / report.duration_s.max(1.0),
        c.updates_applied
    );
    println!(
        "verdict: conservation {}, drained {}, budgets {}",
        ok(report.conservation_ok),
        ok(report.drained),
        ok(report.budgets_pass())
    );
    if !report.drained {
        return Err(CliError::Runtime("pipeline backlog failed to drain".into()));
    }
    Ok(report)
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

// --- report -----------------------------------------------------------------------

pub fn report(metrics_path: &Path, out: &Path) -> Result<usize, CliError> {
    let mut reader = csv::Reader::from_path(metrics_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", metrics_path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Validation(e.to_string()))?.clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("missing column `{name}`")))
    };
    let step_col = col("step")?;
    let temp_col = col("temp_last_c")?;
    let power_col = col("power_zone_kw")?;

    let band = TwinConfig::default().zone_temp_bands[2];
    let mut rows = 0usize;
    let mut text = String::from("step,temp_last_c,power_zone_kw,band_min_c,band_max_c\n");
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Validation(e.to_string()))?;
        let get = |i: usize| record.get(i).unwrap_or("");
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            get(step_col),
            get(temp_col),
            get(power_col),
            band.min,
            band.max
        ));
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Validation("metrics file has no data rows".into()));
    }
    ensure_dir(out)?;
    write_file(&out.join("series.csv"), &text)?;
    println!("wrote {} rows to series.csv (band {}..{} C)", rows, band.min, band.max);
    Ok(rows)
}
