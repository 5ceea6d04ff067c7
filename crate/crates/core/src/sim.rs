//! Synchronous message-passing simulator and run traces.
//!
//! Node programs communicate only through a [`Network`], which delivers
//! payloads along graph edges, counts message units and logs every remote
//! read so a run can be audited for locality afterwards.
//!
//! Laplacian solves are executed as global matrix computations and charged
//! as if distributed: every application of a chain level or of the system
//! matrix costs one scalar payload per directed edge and right-hand side.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sdd::{Splitting, SolverWork};

/// Granularity of message accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageUnit {
    /// Every scalar crossing an edge is one unit.
    Scalar,
    /// Every payload crossing an edge is one unit, whatever its length.
    #[default]
    Vector,
}

impl MessageUnit {
    pub fn units(self, payload_len: usize) -> u64 {
        match self {
            MessageUnit::Scalar => payload_len as u64,
            MessageUnit::Vector => 1,
        }
    }
}

impl fmt::Display for MessageUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageUnit::Scalar => "scalar",
            MessageUnit::Vector => "vector",
        })
    }
}

impl std::str::FromStr for MessageUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(MessageUnit::Scalar),
            "vector" => Ok(MessageUnit::Vector),
            other => Err(Error::Config(format!("unknown message unit {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub from: usize,
    pub to: usize,
    pub payload: DVector<f64>,
}

/// One synchronous round of deliveries.
#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    pub index: usize,
    pub outbox: Vec<Envelope>,
    pub message_count: u64,
}

/// Payloads received by each node in one round, as `(sender, payload)`.
#[derive(Clone, Debug, Default)]
pub struct Mailboxes {
    inbox: Vec<Vec<(usize, DVector<f64>)>>,
}

impl Mailboxes {
    pub fn inbox(&self, node: usize) -> &[(usize, DVector<f64>)] {
        &self.inbox[node]
    }
}

/// Round-based network over a fixed graph.
#[derive(Clone, Debug)]
pub struct Network<'g> {
    graph: &'g Graph,
    unit: MessageUnit,
    rounds: usize,
    messages: u64,
    reads: BTreeSet<(usize, usize)>,
    keep_rounds: bool,
    history: Vec<Round>,
}

impl<'g> Network<'g> {
    pub fn new(graph: &'g Graph, unit: MessageUnit) -> Self {
        Network {
            graph,
            unit,
            rounds: 0,
            messages: 0,
            reads: BTreeSet::new(),
            keep_rounds: false,
            history: Vec::new(),
        }
    }

    /// Keeps every delivered [`Round`] for inspection.
    pub fn recording(mut self) -> Self {
        self.keep_rounds = true;
        self
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn unit(&self) -> MessageUnit {
        self.unit
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn history(&self) -> &[Round] {
        &self.history
    }

    /// Delivers one round; fails if any envelope crosses a non-edge.
    pub fn deliver(&mut self, outbox: Vec<Envelope>) -> Result<Mailboxes> {
        let n = self.graph.n();
        let mut inbox = vec![Vec::new(); n];
        let mut count = 0;
        for e in &outbox {
            if !self.graph.has_edge(e.from, e.to) {
                return Err(Error::Locality { reader: e.to, owner: e.from });
            }
            count += self.unit.units(e.payload.len());
            self.reads.insert((e.to, e.from));
            inbox[e.to].push((e.from, e.payload.clone()));
        }
        self.messages += count;
        if self.keep_rounds {
            self.history.push(Round { index: self.rounds, outbox, message_count: count });
        }
        self.rounds += 1;
        Ok(Mailboxes { inbox })
    }

    /// Every node sends its value to every neighbor.
    pub fn exchange(&mut self, values: &[DVector<f64>]) -> Result<Mailboxes> {
        let mut outbox = Vec::with_capacity(2 * self.graph.edge_count());
        for (i, v) in values.iter().enumerate() {
            for &j in self.graph.neighbors(i) {
                outbox.push(Envelope { from: i, to: j, payload: v.clone() });
            }
        }
        self.deliver(outbox)
    }

    /// One node sends its value to all of its neighbors.
    pub fn broadcast(&mut self, from: usize, value: &DVector<f64>) -> Result<Mailboxes> {
        let outbox = self
            .graph
            .neighbors(from)
            .iter()
            .map(|&j| Envelope { from, to: j, payload: value.clone() })
            .collect();
        self.deliver(outbox)
    }

    /// `(L x)_i = d(i) x_i - Σ_j x_j` computed from one exchange of node values.
    pub fn laplacian_apply(&mut self, values: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let boxes = self.exchange(values)?;
        Ok(values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                boxes
                    .inbox(i)
                    .iter()
                    .fold(v * self.graph.degree(i) as f64, |acc, (_, w)| acc - w)
            })
            .collect())
    }

    /// Charges a Laplacian solve from its recorded work, one scalar payload
    /// per directed edge per operator application, and logs the operator's
    /// access pattern.
    pub fn charge_sdd(&mut self, work: &SolverWork, splitting: &Splitting) {
        self.messages += work.operator_applies() * 2 * self.graph.edge_count() as u64;
        if work.operator_applies() > 0 {
            self.reads.extend(splitting.pattern());
        }
    }

    /// Reduce-and-broadcast over a spanning tree: `2(n-1)` payloads.
    pub fn charge_all_reduce(&mut self, payload_len: usize) {
        let n = self.graph.n() as u64;
        self.messages += 2 * (n - 1) * self.unit.units(payload_len);
        self.rounds += 2;
    }

    pub fn record_read(&mut self, reader: usize, owner: usize) {
        self.reads.insert((reader, owner));
    }

    pub fn reads(&self) -> &BTreeSet<(usize, usize)> {
        &self.reads
    }

    /// Checks that every logged read was local or along an edge.
    pub fn audit(&self) -> Result<()> {
        locality_audit(self.graph, &self.reads)
    }
}

pub fn locality_audit<'a>(graph: &Graph, reads: impl IntoIterator<Item = &'a (usize, usize)>) -> Result<()> {
    for &(reader, owner) in reads {
        if reader != owner && !graph.has_edge(reader, owner) {
            return Err(Error::Locality { reader, owner });
        }
    }
    Ok(())
}

/// `sqrt(Σ_{(i,j)∈E} ‖θ_i - θ_j‖²)`.
pub fn consensus_error(graph: &Graph, thetas: &[DVector<f64>]) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(i, j)| (&thetas[i] - &thetas[j]).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Convergence regime of the Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    StrictDecrease,
    Quadratic,
    Terminal,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::StrictDecrease => "strict_decrease",
            Phase::Quadratic => "quadratic",
            Phase::Terminal => "terminal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub consensus_error: f64,
    pub grad_mnorm: Option<f64>,
    pub phase: Option<Phase>,
    pub messages_cumulative: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: String,
    pub config_hash: String,
    pub seed: u64,
    pub message_unit: MessageUnit,
    /// Algorithm parameters actually used, e.g. the chosen step size.
    pub params: serde_json::Map<String, serde_json::Value>,
    pub converged: bool,
    pub diverged: bool,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: [&str; 7] = [
    "iter",
    "objective",
    "consensus_error",
    "grad_mnorm",
    "phase",
    "messages_cumulative",
    "wall_ms",
];

/// Per-iteration record of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    /// Per-node iterates after the last row.
    #[serde(skip)]
    pub final_iterate: Vec<DVector<f64>>,
}

impl RunTrace {
    pub fn new(algorithm: impl Into<String>, unit: MessageUnit) -> Self {
        RunTrace {
            meta: TraceMeta { algorithm: algorithm.into(), message_unit: unit, ..TraceMeta::default() },
            ..RunTrace::default()
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.messages_cumulative <= row.messages_cumulative));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Number of iterations recorded after the initial row.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iter)
    }

    /// First row satisfying `pred`.
    pub fn first_row(&self, pred: impl Fn(&TraceRow) -> bool) -> Option<&TraceRow> {
        self.rows.iter().find(|r| pred(r))
    }

    /// First row from which the objective stays within `tol` (relative) of
    /// `f_star` until the end of the trace. Iterates off the consensus set
    /// can dip below the optimum and cross back, so a single row inside the
    /// band does not count.
    pub fn first_within_gap(&self, f_star: f64, tol: f64) -> Option<&TraceRow> {
        let outside = self.rows.iter().rposition(|r| !(relative_gap(r.objective, f_star) <= tol));
        match outside {
            None => self.rows.first(),
            Some(k) => self.rows.get(k + 1),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W, include_wall: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                r.objective.to_string(),
                r.consensus_error.to_string(),
                r.grad_mnorm.map(|g| g.to_string()).unwrap_or_default(),
                r.phase.map(|p| p.to_string()).unwrap_or_default(),
                r.messages_cumulative.to_string(),
                if include_wall { format!("{:.3}", r.wall_ms) } else { String::new() },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, include_wall: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, include_wall).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Writes `<stem>.csv` and the `<stem>.json` metadata sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?, true)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }
}

pub fn relative_gap(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}
