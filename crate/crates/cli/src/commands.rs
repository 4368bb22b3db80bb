use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use mci_core::engine::{events_from_ndjson, events_to_ndjson, replay, ActionLog};
use mci_core::generate::{complex_config, complex_scenario, desk_config, standard_config, standard_scenario};
use mci_core::metrics::outcome_report;
use mci_core::policy::{
    evaluate, read_policy, rollout, train_ppo, write_policy, ActMode, EnvConfig, MetricSummary, PolicyKind, PolicySpec,
    PpoConfig, EVAL_SEED_BASE,
};
use mci_core::validate::validate_scenario;
use mci_core::{generate_scenario, GeneratorConfig, Scenario};
use mci_service::{AppState, ServiceConfig};

use crate::args::{EvalArgs, GenArgs, ReplayArgs, RunArgs, ServeArgs, TrainArgs};
use crate::output::{invalid, read_bytes, read_text, runtime, to_pretty, write_bytes, write_manifests, CliError};

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| invalid(format!("--{flag} is required")))
}

fn family_config(name: &str, seed: u64) -> Result<GeneratorConfig, CliError> {
    match name {
        "standard" => Ok(standard_config(seed)),
        "complex" => Ok(complex_config(seed)),
        "desk" => Ok(desk_config(seed)),
        other => Err(invalid(format!("unknown scenario family '{other}' (expected standard, complex or desk)"))),
    }
}

/// A family member; standard and complex come with the greedy feasibility retry.
fn family_scenario(name: &str, seed: u64) -> Result<Scenario, CliError> {
    let generated = match name {
        "standard" => standard_scenario(seed),
        "complex" => complex_scenario(seed),
        _ => generate_scenario(&family_config(name, seed)?),
    };
    generated.map_err(|e| runtime(format!("cannot generate {name} scenario {seed}: {e}")))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let scenario = Scenario::from_json(&read_text(path)?)
        .map_err(|e| invalid(format!("{} is not a scenario: {e}", path.display())))?;
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(invalid(format!("{} fails validation: {violations:?}", path.display())));
    }
    Ok(scenario)
}

fn load_policy(kind: PolicyKind, file: Option<&PathBuf>) -> Result<PolicySpec, CliError> {
    match kind {
        PolicyKind::Random => Ok(PolicySpec::Random),
        PolicyKind::Greedy => Ok(PolicySpec::Greedy),
        PolicyKind::Learned => {
            let path = file.ok_or_else(|| invalid("the learned policy needs --policy-file"))?;
            read_policy(&read_bytes(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
        }
    }
}

fn act_mode(v: Option<&str>) -> Result<ActMode, CliError> {
    match v.unwrap_or("argmax") {
        "argmax" => Ok(ActMode::Argmax),
        "sample" => Ok(ActMode::Sample),
        other => Err(invalid(format!("unknown action mode '{other}' (expected argmax or sample)"))),
    }
}

pub fn gen_scenario(args: GenArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let out = required(&args.out, "out")?;
    let seed = args.seed.unwrap_or(0);
    let scenario = if let Some(preset) = &args.preset {
        if args.patients.is_some() || args.hospitals.is_some() || args.fleet.is_some() || args.horizon.is_some() {
            return Err(invalid("presets fix the scenario size; use --seed only"));
        }
        let mut s = family_scenario(preset, seed)?;
        if let Some(id) = &args.scenario_id {
            s.scenario_id = id.clone();
        }
        s
    } else {
        let mut cfg = GeneratorConfig { seed, scenario_id: args.scenario_id.clone(), ..GeneratorConfig::default() };
        if let Some(n) = args.patients {
            cfg.patient_count = n;
        }
        if let Some(n) = args.hospitals {
            cfg.hospital_count = n;
        }
        if let Some(n) = args.fleet {
            cfg.fleet_size_max = n;
        }
        if let Some(h) = args.horizon {
            cfg.horizon_min = h;
        }
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        generate_scenario(&cfg).map_err(|e| runtime(e.to_string()))?
    };
    write_bytes(out, scenario.to_json().as_bytes())?;
    write_manifests("gen-scenario", Some(seed), &args, &[out])?;
    eprintln!(
        "wrote {} ({} patients, {} hospitals, fleet {})",
        out.display(),
        scenario.patients.len(),
        scenario.hospitals.len(),
        scenario.fleet.size_max
    );
    Ok(())
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let out = required(&args.out, "out")?;
    let scenario = match (&args.scenario, &args.preset) {
        (Some(path), None) => load_scenario(path)?,
        (None, Some(preset)) => family_scenario(preset, args.seed.unwrap_or(0))?,
        _ => return Err(invalid("give exactly one of --scenario or --preset")),
    };
    let kind: PolicyKind = args.policy.as_deref().unwrap_or("greedy").parse().map_err(invalid)?;
    let policy = load_policy(kind, args.policy_file.as_ref())?;
    let mode = act_mode(args.act.as_deref())?;
    let episode = rollout(&policy, Arc::new(scenario), mode, args.rng_seed.unwrap_or(0))
        .map_err(|e| invalid(format!("policy cannot run on this scenario: {e}")))?;
    let log = episode.state.event_log();
    let report = outcome_report(log).map_err(|e| runtime(e.to_string()))?;

    write_bytes(out, events_to_ndjson(log).as_bytes())?;
    let mut outputs = vec![out.as_path()];
    if let Some(path) = &args.report {
        write_bytes(path, to_pretty(&report).as_bytes())?;
        outputs.push(path);
    }
    write_manifests("run", args.seed.or(args.rng_seed), &args, &outputs)?;
    println!(
        "{kind}: reward {:.1}, {} decisions, completion {} min, mortality {:.2}%, match {:.2}%",
        episode.total_reward, episode.decisions, report.completion_time, report.mortality_rate, report.match_rate
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let out = required(&args.out, "out")?;
    let family = args.family.as_deref().unwrap_or("desk");
    let mut cfg = args.ppo.clone().unwrap_or_else(|| PpoConfig { width: 64, ..PpoConfig::default() });
    if let Some(n) = args.steps {
        cfg.total_steps = n;
    }
    if let Some(w) = args.width {
        cfg.width = w;
    }
    let seed = args.seed.unwrap_or(0);
    let env = EnvConfig { generator: family_config(family, 0)? };
    let started = Instant::now();
    let (policy, curve) = train_ppo(&env, &cfg, seed).map_err(|e| match e {
        mci_core::policy::TrainError::Config { .. } => invalid(e.to_string()),
        other => runtime(other.to_string()),
    })?;
    let bytes = write_policy(&policy).map_err(|e| runtime(e.to_string()))?;
    write_bytes(out, &bytes)?;
    let mut outputs = vec![out.as_path()];
    if let Some(path) = &args.curve {
        write_bytes(path, curve.to_csv().as_bytes())?;
        outputs.push(path);
    }
    let effective = TrainArgs { ppo: Some(cfg.clone()), ..args.clone() };
    write_manifests("train", Some(seed), &effective, &outputs)?;
    let last = curve.0.last().map_or(f64::NAN, |p| p.mean_reward);
    println!(
        "trained on {family} for {} steps in {:.1}s; last mean episode reward {last:.1}",
        cfg.iterations() * cfg.steps_per_iteration(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn format_table(rows: &[MetricSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>12} {:>17} {:>12} {:>9}",
        "policy", "episodes", "mean reward", "completion ticks", "mortality %", "match %"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>12.1} {:>17.1} {:>12.2} {:>9.2}",
            r.policy, r.episodes, r.mean_reward, r.completion_ticks, r.mortality_pct, r.match_pct
        );
    }
    out
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let kinds = args
        .policies
        .as_deref()
        .unwrap_or("random,greedy")
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<PolicyKind>().map_err(invalid))
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err(invalid("--policies is empty"));
    }
    let policies = kinds.iter().map(|k| load_policy(*k, args.policy_file.as_ref())).collect::<Result<Vec<_>, _>>()?;
    let family = args.family.as_deref().unwrap_or("standard");
    family_config(family, 0)?;
    let n = args.seeds.unwrap_or(100);
    let base = args.seed_base.unwrap_or(EVAL_SEED_BASE);
    let mode = act_mode(args.act.as_deref())?;
    let scenarios = (0..n)
        .map(|i| family_scenario(family, base + i).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    let rng_seed = args.rng_seed.unwrap_or(0);
    let rows = policies
        .iter()
        .map(|p| evaluate(p, &scenarios, mode, rng_seed).map_err(|e| invalid(format!("{}: {e}", p.kind()))))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", format_table(&rows));
    if let Some(out) = &args.out {
        write_bytes(out, to_pretty(&rows).as_bytes())?;
        write_manifests("eval", Some(base), &args, &[out])?;
    }
    Ok(())
}

pub fn replay_log(args: ReplayArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let scenario = load_scenario(required(&args.scenario, "scenario")?)?;
    let log_path = required(&args.log, "log")?;
    let text = read_text(log_path)?;
    let events = events_from_ndjson(&text).map_err(|e| invalid(format!("{} is not an event log: {e}", log_path.display())))?;
    let actions = ActionLog::from_events(&events, None);
    let state = replay(Arc::new(scenario), &actions).map_err(|e| invalid(format!("log does not replay: {e}")))?;
    if events_to_ndjson(state.event_log()) != events_to_ndjson(&events) {
        return Err(invalid("replayed log differs from the input; it was recorded against another scenario"));
    }
    let report = outcome_report(state.event_log()).map_err(|e| invalid(e.to_string()))?;
    let text = match args.format.as_deref().unwrap_or("json") {
        "json" => to_pretty(&report),
        "csv" => report.to_csv(),
        other => return Err(invalid(format!("unknown format '{other}' (expected json or csv)"))),
    };
    match &args.out {
        Some(out) => {
            write_bytes(out, text.as_bytes())?;
            write_manifests("replay", None, &args, &[out])?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let args = args.merged()?;
    let addr: SocketAddr = args
        .addr
        .as_deref()
        .unwrap_or("127.0.0.1:8080")
        .parse()
        .map_err(|e| invalid(format!("bad --addr: {e}")))?;
    let learned_policy = match &args.policy_file {
        Some(path) => match load_policy(PolicyKind::Learned, Some(path))? {
            PolicySpec::Learned(l) => Some(l),
            _ => unreachable!("learned kind loads a learned policy"),
        },
        None => None,
    };
    let config = ServiceConfig {
        default_pacing: args.pacing.unwrap_or(1.0),
        archive_dir: args.archive_dir.clone(),
        preset_seed: args.preset_seed.unwrap_or(0),
        learned_policy,
    };
    let app = AppState::new(config).map_err(|e| invalid(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| runtime(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    rt.block_on(mci_service::serve(addr, app)).map_err(|e| runtime(format!("server failed: {e}")))
}
