use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lattice::{State, STATE_DIM};

/// The `(a_p, a_i, a_n)` context of an execution. Entries are `None` when
/// the trace comes from a plan that is not a triplet.
pub type Triplet = [Option<usize>; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    /// World time in seconds.
    pub t: f64,
    /// Time since the primitive started.
    pub tau: f64,
    /// Observed state with positions in the primitive frame.
    pub state: State,
}

/// Noisy state observations of one primitive execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub primitive_id: usize,
    pub triplet: Triplet,
    pub samples: Vec<TraceSample>,
}

/// One line of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub tau: f64,
    pub primitive_id: usize,
    pub triplet: Triplet,
    pub state: [f64; STATE_DIM],
}

impl ExecutionTrace {
    pub fn new(primitive_id: usize, triplet: Triplet) -> Self {
        Self { primitive_id, triplet, samples: Vec::new() }
    }

    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }

    pub fn dimension(&self, d: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.to_array()[d]).collect()
    }

    /// Check ordering, finiteness and that the samples span at least 90% of
    /// the primitive duration.
    pub fn validate(&self, t_f: f64) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InvalidTrace(format!(
                "trace of primitive {} has {} samples",
                self.primitive_id,
                self.samples.len()
            )));
        }
        if self.samples.iter().any(|s| !s.state.is_finite() || !s.tau.is_finite() || !s.t.is_finite()) {
            return Err(Error::InvalidTrace("non-finite sample".into()));
        }
        if self.samples.windows(2).any(|w| w[1].tau <= w[0].tau) {
            return Err(Error::InvalidTrace("sample times are not strictly increasing".into()));
        }
        let first = self.samples[0].tau;
        let last = self.samples[self.samples.len() - 1].tau;
        if first < -1e-9 || last > t_f + 1e-9 {
            return Err(Error::InvalidTrace(format!("samples outside [0, {t_f}]")));
        }
        if last - first < 0.9 * t_f {
            return Err(Error::InvalidTrace(format!(
                "samples span {:.3} s of a {t_f} s primitive",
                last - first
            )));
        }
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.samples.iter().map(|s| TraceRecord {
            t: s.t,
            tau: s.tau,
            primitive_id: self.primitive_id,
            triplet: self.triplet,
            state: s.state.to_array(),
        })
    }

    /// Group records into traces. A new trace starts whenever the primitive
    /// or triplet changes or `tau` fails to increase.
    pub fn from_records(records: &[TraceRecord]) -> Vec<ExecutionTrace> {
        let mut out: Vec<ExecutionTrace> = Vec::new();
        for r in records {
            let continues = out.last().is_some_and(|tr| {
                tr.primitive_id == r.primitive_id
                    && tr.triplet == r.triplet
                    && tr.samples.last().is_some_and(|s| r.tau > s.tau)
            });
            if !continues {
                out.push(ExecutionTrace::new(r.primitive_id, r.triplet));
            }
            let tr = out.last_mut().expect("just pushed");
            tr.samples.push(TraceSample { t: r.t, tau: r.tau, state: State::from_array(r.state) });
        }
        out
    }

    pub fn to_json_lines(&self) -> Result<Vec<u8>> {
        io::to_json_lines(&self.records().collect::<Vec<_>>())
    }

    pub fn save(&self, path: &Path) -> Result<bool> {
        io::write_atomic(path, &self.to_json_lines()?)
    }

    pub fn load(path: &Path) -> Result<ExecutionTrace> {
        let records: Vec<TraceRecord> = io::read_json_lines(path)?;
        let mut traces = Self::from_records(&records);
        match traces.len() {
            1 => Ok(traces.pop().expect("one trace")),
            n => Err(Error::InvalidTrace(format!("{} holds {n} traces, expected one", path.display()))),
        }
    }
}
