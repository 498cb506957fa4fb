//! Config-driven experiment runner behind the `clique-sim` binary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{self, ChurnEvent, NetworkState, SimOptions, StopWhen, Trace};
use crate::topology::{self, InitialStateSpec};
use crate::verify::{self, NodeWork};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub trace_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub final_state_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: InitialStateSpec,
    pub max_rounds: u64,
    pub stop_when: StopWhen,
    #[serde(default)]
    pub events: Vec<ChurnEvent>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub options: SimOptions,
    /// Start from this state document instead of generating one.
    #[serde(default)]
    pub load: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(spec: InitialStateSpec, max_rounds: u64, stop_when: StopWhen) -> Self {
        ExperimentConfig {
            spec,
            max_rounds,
            stop_when,
            events: Vec::new(),
            outputs: Outputs::default(),
            sweep: None,
            options: SimOptions::default(),
            load: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.n_values.is_empty() || sweep.seeds.is_empty() {
                return Err(Error::Config("sweep needs at least one n and one seed".into()));
            }
            if self.load.is_some() {
                return Err(Error::Config("a loaded state cannot be swept".into()));
            }
        }
        if self.load.is_none() {
            for point in self.points() {
                point.validate()?;
            }
        }
        Ok(())
    }

    /// Sweep points in output order: n-major, then seeds.
    pub fn points(&self) -> Vec<InitialStateSpec> {
        match &self.sweep {
            None => vec![self.spec],
            Some(sweep) => sweep
                .n_values
                .iter()
                .flat_map(|&n| {
                    sweep
                        .seeds
                        .iter()
                        .map(move |&seed| InitialStateSpec { n, seed, ..self.spec })
                })
                .collect(),
        }
    }
}

/// One metrics CSV row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n: usize,
    pub kind: String,
    pub seed: u64,
    pub rounds_to_valid: Option<u64>,
    pub rounds_to_one_heap: Option<u64>,
    pub rounds_to_legal: Option<u64>,
    pub max_node_total_sent: u64,
    pub max_node_total_recv: u64,
    pub max_maintenance_per_round: Option<u64>,
    pub dropped: u64,
}

/// First round from which `pred` holds for the rest of the trace.
fn settled_from(trace: &Trace, initial: bool, pred: impl Fn(&sim::TraceRecord) -> bool) -> Option<u64> {
    let mut since = initial.then_some(trace.start_round);
    for r in &trace.records {
        if pred(r) {
            since.get_or_insert(r.round);
        } else {
            since = None;
        }
    }
    since
}

pub fn metrics_row(spec: &InitialStateSpec, trace: &Trace) -> MetricsRow {
    let report = verify::work_report(trace);
    MetricsRow {
        n: spec.n,
        kind: spec.kind.to_string(),
        seed: spec.seed,
        rounds_to_valid: settled_from(trace, trace.initial_valid, |r| r.is_valid),
        rounds_to_one_heap: settled_from(trace, trace.initial_heaps == 1, |r| r.num_heaps == 1),
        rounds_to_legal: report.first_legal,
        max_node_total_sent: report.stabilization.max_by(NodeWork::sent_msgs),
        max_node_total_recv: report.stabilization.max_by(NodeWork::recv_msgs),
        max_maintenance_per_round: (report.maintenance_rounds > 0)
            .then(|| report.maintenance_max_sent.max(report.maintenance_max_recv)),
        dropped: report.overall.dropped + trace.purged,
    }
}

#[derive(Clone, Debug)]
pub struct PointResult {
    pub spec: InitialStateSpec,
    pub stopped_at: Option<u64>,
    pub trace: Trace,
    pub metrics: MetricsRow,
    pub final_state: NetworkState,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub points: Vec<PointResult>,
}

impl ExperimentOutcome {
    /// Sweep points that did not reach their stop predicate.
    pub fn unconverged(&self, stop_when: StopWhen) -> Vec<&PointResult> {
        if stop_when == StopWhen::Never {
            return Vec::new();
        }
        self.points.iter().filter(|p| p.stopped_at.is_none()).collect()
    }
}

/// `trace.jsonl` becomes `trace-n16-s3.jsonl` when several points share it.
fn point_path(base: &Path, spec: &InitialStateSpec, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-n{}-s{}.{ext}", spec.n, spec.seed),
        None => format!("{stem}-n{}-s{}", spec.n, spec.seed),
    };
    base.with_file_name(name)
}

fn run_point(config: &ExperimentConfig, spec: InitialStateSpec) -> Result<PointResult> {
    let net = match &config.load {
        Some(path) => topology::load(&fs::read_to_string(path)?)?,
        None => topology::generate(&spec)?,
    };
    let spec = InitialStateSpec { n: net.len(), ..spec };
    let res = sim::run(
        net,
        config.max_rounds,
        config.stop_when,
        &config.events,
        &config.options,
    )?;
    let metrics = metrics_row(&spec, &res.trace);
    Ok(PointResult {
        spec,
        stopped_at: res.stopped_at,
        trace: res.trace,
        metrics,
        final_state: res.net,
    })
}

/// Runs every sweep point and writes the configured outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let points = config.points();
    let multi = points.len() > 1;
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|spec| run_point(config, *spec))
        .collect::<Result<_>>()?;

    if let Some(path) = &config.outputs.metrics_path {
        let mut w = csv::Writer::from_path(path)?;
        for p in &results {
            w.serialize(&p.metrics)?;
        }
        w.flush()?;
    }
    for p in &results {
        if let Some(base) = &config.outputs.trace_path {
            let mut w = BufWriter::new(fs::File::create(point_path(base, &p.spec, multi))?);
            p.trace.write_jsonl(&mut w)?;
            w.flush()?;
        }
        if let Some(base) = &config.outputs.final_state_path {
            fs::write(point_path(base, &p.spec, multi), topology::save(&p.final_state))?;
        }
    }
    Ok(ExperimentOutcome { points: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyKind;
    use crate::types::NodeId;

    #[test]
    fn sweep_is_n_major() {
        let mut cfg = ExperimentConfig::new(InitialStateSpec::dense(TopologyKind::Line, 4, 0), 10, StopWhen::Legal);
        cfg.sweep = Some(Sweep {
            n_values: vec![4, 8],
            seeds: vec![1, 2],
        });
        let pts: Vec<_> = cfg.points().iter().map(|s| (s.n, s.seed)).collect();
        assert_eq!(pts, vec![(4, 1), (4, 2), (8, 1), (8, 2)]);
    }

    #[test]
    fn invalid_configs() {
        let spec = InitialStateSpec::dense(TopologyKind::Line, 4, 0);
        let cfg = ExperimentConfig::new(spec, 0, StopWhen::Legal);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::new(spec, 5, StopWhen::Legal);
        cfg.sweep = Some(Sweep {
            n_values: vec![],
            seeds: vec![1],
        });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"spec":{"kind":"line","n":4},"max_rounds":5,"stop_when":"soon"}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_json_with_events() {
        let text = r#"{
            "spec": {"kind": "clique-legal", "n": 8},
            "max_rounds": 50,
            "stop_when": "legal",
            "events": [{"at_round": 3, "kind": "leave", "id": 8}]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.events, vec![ChurnEvent::leave(3, NodeId(8))]);
        assert_eq!(cfg.spec.seed, 0);
        let out = run_experiment(&cfg).unwrap();
        let p = &out.points[0];
        let at = p.stopped_at.unwrap();
        assert!((3..=8).contains(&at), "re-legal at {at}");
    }

    #[test]
    fn settled_rounds_reset_on_relapse() {
        let rec = |round, ok| sim::TraceRecord {
            round,
            num_heaps: 1,
            is_valid: ok,
            is_legal: ok,
            messages_delivered: 0,
            per_node_sent: Default::default(),
            per_node_received: Default::default(),
        };
        let trace = Trace {
            start_round: 0,
            initial_legal: true,
            initial_valid: true,
            initial_heaps: 1,
            records: vec![rec(1, false), rec(2, true), rec(3, true)],
            work: vec![Default::default(); 3],
            purged: 0,
        };
        assert_eq!(settled_from(&trace, true, |r| r.is_valid), Some(2));
    }

    #[test]
    fn point_paths() {
        let spec = InitialStateSpec::dense(TopologyKind::Line, 16, 3);
        assert_eq!(
            point_path(Path::new("out/t.jsonl"), &spec, true),
            PathBuf::from("out/t-n16-s3.jsonl")
        );
        assert_eq!(
            point_path(Path::new("out/t.jsonl"), &spec, false),
            PathBuf::from("out/t.jsonl")
        );
    }
}
