use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slicenet::experiment::{mean, Experiment, Method, RunLog, Trained};
use slicenet::output::{self, RunMeta};
use slicenet::{ExperimentConfig, HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "slicenet",
    version,
    about = "Multi-cell RAN slicing with TD3 agents and similarity-based transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Demand-proportional partitioning in every cell.
    Baseline(Common),
    /// Train one TD3 agent per cell; saves checkpoints, buffers and default-action traces.
    Train(Common),
    /// Fit the VAE on default-action samples and rank candidate sources. Needs `train`.
    Similarity(Common),
    /// Transfer into the target cell and fine-tune next to a paired scratch run. Needs `train`,
    /// and `similarity` unless `transfer.source` is set.
    Transfer(Common),
    /// Frozen-policy evaluation of baseline, MADRL and TL. Needs `train` and `transfer`.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Root output directory; each run writes to `<out>/<command>-s<seed>`.
    #[arg(long)]
    out: PathBuf,
}

struct Stage {
    name: &'static str,
    exp: Experiment,
    seed: u64,
    root: PathBuf,
    dir: PathBuf,
}

impl Stage {
    fn open(name: &'static str, args: &Common) -> Result<Self> {
        let exp = Experiment::new(ExperimentConfig::load(&args.config)?)?;
        let dir = output::run_dir(&args.out, name, args.seed);
        output::create_dir(&dir)?;
        Ok(Stage {
            name,
            exp,
            seed: args.seed,
            root: args.out.clone(),
            dir,
        })
    }

    fn meta(&self) -> RunMeta {
        RunMeta::new(self.name, self.seed, &self.exp.config)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Output directory of an earlier stage run with the same seed, with its
    /// metadata. The environment and agent settings must match.
    fn upstream(&self, name: &str) -> Result<(PathBuf, RunMeta)> {
        let dir = output::run_dir(&self.root, name, self.seed);
        let meta = RunMeta::read(&dir).map_err(|_| {
            HarnessError::Dependency(format!(
                "run `{name}` first: {} has no run metadata",
                dir.display()
            ))
        })?;
        let (a, b) = (&meta.config, &self.exp.config);
        if a.scenario != b.scenario || a.schedule != b.schedule || a.agent != b.agent {
            return Err(HarnessError::Dependency(format!(
                "{} was produced with a different scenario, schedule or agent configuration",
                dir.display()
            )));
        }
        Ok((dir, meta))
    }

    fn load_trained(&self) -> Result<(Trained, RunMeta)> {
        let (dir, meta) = self.upstream("train")?;
        let agents = self
            .exp
            .scenario
            .cell_ids()
            .into_iter()
            .map(|id| output::load_agent(&dir, id))
            .collect::<Result<Vec<_>>>()?;
        let traces = output::read_traces(&dir.join(output::DEFAULT_TRACE))?;
        let trained = Trained {
            agents,
            traces,
            log: RunLog::default(),
            failures: Vec::new(),
        };
        Ok((trained, meta))
    }

    fn write_cdfs(&self, sets: &[(&str, &RunLog, usize)]) -> Result<()> {
        let samples: Vec<_> = sets
            .iter()
            .map(|(m, log, steps)| (*m, log.tail_samples(*steps)))
            .collect();
        let sat: Vec<_> = samples.iter().map(|(m, (s, _))| (*m, s.clone())).collect();
        let delay: Vec<_> = samples.iter().map(|(m, (_, d))| (*m, d.clone())).collect();
        output::write_cdf(&self.file(output::CDF_THROUGHPUT), &sat)?;
        output::write_cdf(&self.file(output::CDF_DELAY), &delay)
    }
}

fn eval_summary(meta: &mut RunMeta, prefix: &str, log: &RunLog, steps: usize) {
    let (sat, delay) = log.tail_samples(steps);
    let from = log.steps().saturating_sub(steps);
    let rewards: Vec<f64> = log.rewards[from..].iter().flatten().copied().collect();
    meta.summary
        .insert(format!("{prefix}mean_reward"), mean(&rewards));
    meta.summary
        .insert(format!("{prefix}mean_throughput_satisfaction"), mean(&sat));
    meta.summary
        .insert(format!("{prefix}mean_max_delay"), mean(&delay));
}

fn baseline(args: &Common) -> Result<()> {
    let st = Stage::open("baseline", args)?;
    let log = st.exp.baseline(st.seed)?;
    let eval = st.exp.config.schedule.evaluation as usize;
    output::write_metrics(&st.file(output::METRICS), &log.rows)?;
    st.write_cdfs(&[("baseline", &log, eval)])?;
    let mut meta = st.meta();
    eval_summary(&mut meta, "", &log, eval);
    meta.write(&st.dir)
}

fn train(args: &Common) -> Result<()> {
    let st = Stage::open("train", args)?;
    let trained = st.exp.train(st.seed)?;
    let eval = st.exp.config.schedule.evaluation as usize;
    output::write_metrics(&st.file(output::METRICS), &trained.log.rows)?;
    output::write_traces(&st.file(output::DEFAULT_TRACE), &trained.traces)?;
    for agent in &trained.agents {
        output::save_agent(&st.dir, agent, true)?;
    }
    st.write_cdfs(&[("madrl", &trained.log, eval)])?;
    let mut meta = st.meta();
    eval_summary(&mut meta, "", &trained.log, eval);
    for id in &trained.log.cell_ids {
        meta.summary.insert(
            format!("cell_{id}_mean_reward"),
            trained.log.tail_mean_reward(*id, eval)?,
        );
    }
    meta.failures = trained
        .failures
        .iter()
        .map(|(cell, t, e)| format!("cell {cell} step {t}: {e}"))
        .collect();
    for f in &meta.failures {
        eprintln!("warning: rejected update, {f}");
    }
    meta.write(&st.dir)
}

fn similarity(args: &Common) -> Result<()> {
    let st = Stage::open("similarity", args)?;
    let (trained, _) = st.load_trained()?;
    let (outcome, source) = st.exp.similarity(&trained.traces, st.seed)?;
    let target = st.exp.config.target(&st.exp.scenario)?;
    output::write_distances(&st.file(output::DISTANCES), &outcome.matrix)?;
    output::write_latents(&st.file(output::LATENTS), &outcome.latents)?;
    let mut meta = st.meta();
    meta.target = Some(target);
    meta.selected_source = Some(source);
    meta.source_distance = outcome.matrix.get(source, target);
    meta.summary
        .insert("reconstruction_mse".into(), outcome.reconstruction_mse);
    if let Some(last) = outcome.report.epoch_losses.last() {
        meta.summary.insert("final_epoch_loss".into(), *last);
    }
    println!("selected source {source} for target {target}");
    meta.write(&st.dir)
}

fn transfer(args: &Common) -> Result<()> {
    let st = Stage::open("transfer", args)?;
    let (trained, _) = st.load_trained()?;
    let (source, distance) = match st.exp.config.transfer.source {
        Some(s) => (s, None),
        None => {
            let (_, meta) = st.upstream("similarity")?;
            let s = meta.selected_source.ok_or_else(|| {
                HarnessError::Dependency("similarity run recorded no selected source".into())
            })?;
            (s, meta.source_distance)
        }
    };
    let outcome = st.exp.transfer(&trained, source, st.seed)?;
    output::write_metrics(&st.file(output::METRICS), &outcome.log.rows)?;
    output::write_gain(&st.file(output::GAIN), &outcome)?;
    output::save_agent(&st.dir, &outcome.agent, false)?;
    let mut meta = st.meta();
    meta.selected_source = Some(source);
    meta.source_distance = distance;
    meta.target = Some(outcome.agent.id);
    let head = outcome.gain.len().min(200);
    meta.summary
        .insert("mean_gain_first_200".into(), mean(&outcome.gain[..head]));
    meta.summary.insert("mean_gain".into(), mean(&outcome.gain));
    meta.plan = Some(outcome.plan);
    meta.write(&st.dir)
}

fn evaluate(args: &Common) -> Result<()> {
    let st = Stage::open("evaluate", args)?;
    let (trained, _) = st.load_trained()?;
    let (tdir, tmeta) = st.upstream("transfer")?;
    let target = tmeta
        .target
        .ok_or_else(|| HarnessError::Dependency("transfer run recorded no target".into()))?;
    let tl_agent = output::load_agent(&tdir, target)?;
    let eval = st.exp.config.schedule.evaluation as usize;
    let mut meta = st.meta();
    meta.target = Some(target);
    meta.selected_source = tmeta.selected_source;
    meta.source_distance = tmeta.source_distance;
    let mut logs: BTreeMap<&str, RunLog> = BTreeMap::new();
    let mut summary = Vec::new();
    for method in [Method::Baseline, Method::Madrl, Method::Tl] {
        let log = st.exp.evaluate(method, Some(&trained), Some(&tl_agent))?;
        let name = method.as_str();
        let dir = st.dir.join(name);
        output::create_dir(&dir)?;
        output::write_metrics(&dir.join(output::METRICS), &log.rows)?;
        eval_summary(&mut meta, &format!("{name}_"), &log, eval);
        for (k, id) in log.cell_ids.iter().enumerate() {
            let col = |m: &Vec<Vec<f64>>| mean(&m.iter().map(|r| r[k]).collect::<Vec<_>>());
            summary.push((
                name.to_string(),
                *id,
                col(&log.rewards),
                col(&log.throughput_satisfaction),
                col(&log.max_delay),
            ));
        }
        meta.summary.insert(
            format!("{name}_target_mean_reward"),
            log.tail_mean_reward(target, eval)?,
        );
        logs.insert(name, log);
    }
    output::write_summary(&st.file(output::SUMMARY), &summary)?;
    let sets: Vec<_> = logs.iter().map(|(m, log)| (*m, log, eval)).collect();
    st.write_cdfs(&sets)?;
    for m in ["baseline", "madrl", "tl"] {
        println!(
            "{m}: target mean reward {:.4}",
            meta.summary[&format!("{m}_target_mean_reward")]
        );
    }
    meta.write(&st.dir)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Baseline(a) => baseline(a),
        Command::Train(a) => train(a),
        Command::Similarity(a) => similarity(a),
        Command::Transfer(a) => transfer(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
