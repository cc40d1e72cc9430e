//! Files written and read by the CLI stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slicenet_core::agent::{ReplayBuffer, Td3Agent};
use slicenet_core::env::PartitionAction;
use slicenet_core::similarity::{DistanceMatrix, LatentStats, TraceStep};
use slicenet_core::transfer::TransferPlan;
use slicenet_core::CellId;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{empirical_cdf, MetricRow, TransferOutcome};

pub const METRICS: &str = "metrics.csv";
pub const DISTANCES: &str = "distances.csv";
pub const LATENTS: &str = "latents.csv";
pub const GAIN: &str = "gain.csv";
pub const CDF_THROUGHPUT: &str = "cdf_throughput.csv";
pub const CDF_DELAY: &str = "cdf_delay.csv";
pub const SUMMARY: &str = "summary.csv";
pub const DEFAULT_TRACE: &str = "default_trace.csv";
pub const RUN_META: &str = "run_meta.toml";

/// `<out>/<command>-s<seed>`
pub fn run_dir(out: &Path, command: &str, seed: u64) -> PathBuf {
    out.join(format!("{command}-s{seed}"))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::csv(path, e))
}

pub fn write_distances(path: &Path, matrix: &DistanceMatrix) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    w.write_record(["source", "target", "distance", "n_source", "n_target", "mode"])
        .map_err(csv_err)?;
    for e in &matrix.entries {
        w.write_record([
            e.source.to_string(),
            e.target.to_string(),
            e.distance.to_string(),
            e.n_source.to_string(),
            e.n_target.to_string(),
            e.mode.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

pub fn write_latents(path: &Path, latents: &BTreeMap<CellId, Vec<LatentStats>>) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    let dim = latents.values().flatten().next().map_or(0, LatentStats::dim);
    let mut header = vec!["agent".to_string(), "sample".to_string()];
    header.extend((0..dim).map(|l| format!("mu_{l}")));
    header.extend((0..dim).map(|l| format!("sigma_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for (agent, zs) in latents {
        for (i, z) in zs.iter().enumerate() {
            let mut rec = vec![agent.to_string(), i.to_string()];
            rec.extend(z.mu.iter().chain(&z.sigma).map(f64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish(w, path)
}

pub fn write_gain(path: &Path, outcome: &TransferOutcome) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    w.write_record(["t", "reward_tl", "reward_scratch", "gain"])
        .map_err(csv_err)?;
    for (i, ((tl, scratch), gain)) in outcome
        .tl_rewards
        .iter()
        .zip(&outcome.scratch_rewards)
        .zip(&outcome.gain)
        .enumerate()
    {
        w.write_record([
            (i + 1).to_string(),
            tl.to_string(),
            scratch.to_string(),
            gain.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

/// Empirical CDF points of each labelled sample set.
pub fn write_cdf(path: &Path, sets: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    w.write_record(["method", "value", "cdf"]).map_err(csv_err)?;
    for (label, values) in sets {
        for (v, f) in empirical_cdf(values) {
            w.write_record([label.to_string(), v.to_string(), f.to_string()])
                .map_err(csv_err)?;
        }
    }
    finish(w, path)
}

/// Rows of `(method, cell, mean_reward, mean_throughput_satisfaction, mean_max_delay)`.
pub fn write_summary(path: &Path, rows: &[(String, CellId, f64, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    w.write_record([
        "method",
        "cell",
        "mean_reward",
        "mean_throughput_satisfaction",
        "mean_max_delay",
    ])
    .map_err(csv_err)?;
    for (m, cell, r, s, d) in rows {
        w.write_record([
            m.clone(),
            cell.to_string(),
            r.to_string(),
            s.to_string(),
            d.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

/// Default-action traces: `cell, step, share_*, state_*, reward`.
pub fn write_traces(path: &Path, traces: &BTreeMap<CellId, Vec<TraceStep>>) -> Result<()> {
    let mut w = writer(path)?;
    let csv_err = |e| HarnessError::csv(path, e);
    let Some(first) = traces.values().flatten().next() else {
        return finish(w, path);
    };
    let mut header = vec!["cell".to_string(), "step".to_string()];
    header.extend((0..first.action.len()).map(|n| format!("share_{n}")));
    header.extend((0..first.state.len()).map(|i| format!("state_{i}")));
    header.push("reward".into());
    w.write_record(&header).map_err(csv_err)?;
    for (cell, steps) in traces {
        for (i, s) in steps.iter().enumerate() {
            let mut rec = vec![cell.to_string(), i.to_string()];
            rec.extend(s.action.shares().iter().chain(&s.state).map(f64::to_string));
            rec.push(s.reward.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish(w, path)
}

pub fn read_traces(path: &Path) -> Result<BTreeMap<CellId, Vec<TraceStep>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let headers = r.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    let shares = headers.iter().filter(|h| h.starts_with("share_")).count();
    let states = headers.iter().filter(|h| h.starts_with("state_")).count();
    let bad = |msg: String| HarnessError::Dependency(format!("{}: {msg}", path.display()));
    let mut traces: BTreeMap<CellId, Vec<TraceStep>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e))?;
        if rec.len() != 3 + shares + states {
            return Err(bad(format!("row with {} fields", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        let cell: CellId = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad cell {:?}", &rec[0])))?;
        let action = (2..2 + shares).map(num).collect::<Result<Vec<_>>>()?;
        let state = (2 + shares..2 + shares + states)
            .map(num)
            .collect::<Result<Vec<_>>>()?;
        traces.entry(cell).or_default().push(TraceStep {
            state,
            action: PartitionAction::new(action)?,
            reward: num(2 + shares + states)?,
        });
    }
    Ok(traces)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::Dependency(format!("{} not found", path.display())),
        _ => HarnessError::io(path, e),
    })
}

pub fn agent_path(dir: &Path, id: CellId) -> PathBuf {
    dir.join("checkpoints").join(format!("agent-{id}.td3"))
}

pub fn buffer_path(dir: &Path, id: CellId) -> PathBuf {
    dir.join("buffers").join(format!("agent-{id}.rbuf"))
}

/// Writes the agent checkpoint and, if `with_buffer`, its replay buffer.
pub fn save_agent(dir: &Path, agent: &Td3Agent, with_buffer: bool) -> Result<()> {
    let ckpt = agent_path(dir, agent.id);
    create_dir(ckpt.parent().expect("has parent"))?;
    write_bytes(&ckpt, &agent.to_bytes())?;
    if with_buffer {
        let buf = buffer_path(dir, agent.id);
        create_dir(buf.parent().expect("has parent"))?;
        write_bytes(&buf, &agent.buffer.to_bytes())?;
    }
    Ok(())
}

/// Loads an agent checkpoint, with its replay buffer when one was saved.
pub fn load_agent(dir: &Path, id: CellId) -> Result<Td3Agent> {
    let mut agent = Td3Agent::from_bytes(&read_bytes(&agent_path(dir, id))?)?;
    let buf = buffer_path(dir, id);
    if buf.exists() {
        agent.buffer = ReplayBuffer::from_bytes(&read_bytes(&buf)?)?;
    }
    if agent.id != id {
        return Err(HarnessError::Dependency(format!(
            "checkpoint for cell {id} holds agent {}",
            agent.id
        )));
    }
    Ok(agent)
}

/// Provenance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub seed: u64,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_source: Option<CellId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<CellId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<TransferPlan>,
    pub config: ExperimentConfig,
}

impl RunMeta {
    pub fn new(command: &str, seed: u64, config: &ExperimentConfig) -> Self {
        RunMeta {
            command: command.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            selected_source: None,
            source_distance: None,
            target: None,
            failures: Vec::new(),
            summary: BTreeMap::new(),
            plan: None,
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_META);
        let text = toml::to_string(self).map_err(|e| HarnessError::Config(format!("run_meta: {e}")))?;
        fs::write(&path, text).map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_META);
        let text = String::from_utf8(read_bytes(&path)?)
            .map_err(|_| HarnessError::Dependency(format!("{} is not UTF-8", path.display())))?;
        toml::from_str(&text).map_err(|e| HarnessError::Dependency(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use rand::SeedableRng;
    use slicenet_core::agent::Td3Config;
    use slicenet_core::similarity::{DistanceEntry, DistanceMode};
    use slicenet_core::SimRng;

    #[test]
    fn traces_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DEFAULT_TRACE);
        let mut traces = BTreeMap::new();
        traces.insert(
            2,
            vec![
                TraceStep {
                    state: vec![0.1, 1.0 / 3.0, 2e-17, 7.5],
                    action: PartitionAction::equal(4),
                    reward: 0.123456789012345,
                };
                3
            ],
        );
        traces.insert(5, vec![]);
        write_traces(&path, &traces).unwrap();
        let back = read_traces(&path).unwrap();
        assert_eq!(back.get(&2), traces.get(&2));
        assert!(!back.contains_key(&5));
    }

    #[test]
    fn agent_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let agent = Td3Agent::new(4, Td3Config::for_slices(4), &mut SimRng::seed_from_u64(1)).unwrap();
        save_agent(dir.path(), &agent, true).unwrap();
        let back = load_agent(dir.path(), 4).unwrap();
        assert_eq!(back.to_bytes(), agent.to_bytes());
        assert!(matches!(
            load_agent(dir.path(), 5),
            Err(HarnessError::Dependency(_))
        ));
    }

    #[test]
    fn run_meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut meta = RunMeta::new("similarity", 7, &ExperimentConfig::preset(Preset::ThreeCell));
        meta.selected_source = Some(1);
        meta.source_distance = Some(0.25);
        meta.summary.insert("mean_reward".into(), 0.5);
        meta.plan = Some(TransferPlan::default());
        meta.write(dir.path()).unwrap();
        assert_eq!(RunMeta::read(dir.path()).unwrap(), meta);
    }

    #[test]
    fn distance_csv_has_contract_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DISTANCES);
        let m = DistanceMatrix {
            entries: vec![DistanceEntry {
                source: 1,
                target: 3,
                distance: 0.5,
                n_source: 200,
                n_target: 200,
                mode: DistanceMode::Exact,
            }],
        };
        write_distances(&path, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "source,target,distance,n_source,n_target,mode\n1,3,0.5,200,200,exact\n"
        );
    }
}
