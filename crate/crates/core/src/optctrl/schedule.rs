//! Piecewise-constant control schedules.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::meanfield::format_sig;

/// Segments shorter than this fraction of the horizon are merged into their
/// predecessor when a schedule is assembled from grid cells.
const MIN_SEGMENT: f64 = 1e-9;

/// Control signals, constant on `[starts[k], starts[k+1])` (the last segment
/// runs to the horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySchedule {
    /// Column prefix for CSV output (`u`, `delta`, ...).
    pub signal: String,
    pub horizon: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `starts[0] = 0`, strictly increasing, all below the horizon.
    pub starts: Vec<f64>,
    /// `values[k][s]`: signal `s` on segment `k`.
    pub values: Vec<Vec<f64>>,
}

impl PolicySchedule {
    pub fn new(
        signal: impl Into<String>,
        horizon: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        starts: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, ControlError> {
        let s = Self {
            signal: signal.into(),
            horizon,
            lower,
            upper,
            starts,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    /// The same value for all time.
    pub fn constant(
        signal: impl Into<String>,
        horizon: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        value: Vec<f64>,
    ) -> Result<Self, ControlError> {
        Self::new(signal, horizon, lower, upper, vec![0.0], vec![value])
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |reason: String| Err(ControlError::Schedule(reason));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        let m = self.lower.len();
        if self.upper.len() != m || m == 0 {
            return bad("lower and upper bounds must have the same nonzero length".into());
        }
        for s in 0..m {
            if !(self.lower[s] <= self.upper[s]) {
                return bad(format!("bounds of signal {s} are inverted"));
            }
        }
        if self.starts.is_empty() || self.starts[0] != 0.0 {
            return bad("the first segment must start at 0".into());
        }
        if self.values.len() != self.starts.len() {
            return bad("one value vector is needed per segment".into());
        }
        for (k, w) in self.starts.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return bad(format!("breakpoint {} = {} does not increase", k + 1, w[1]));
            }
        }
        let last = *self.starts.last().expect("nonempty");
        if !(last < self.horizon) {
            return Err(ControlError::BreakpointOutside {
                time: last,
                horizon: self.horizon,
            });
        }
        for (k, v) in self.values.iter().enumerate() {
            if v.len() != m {
                return bad(format!("segment {k} has {} values, expected {m}", v.len()));
            }
            for (s, &x) in v.iter().enumerate() {
                if !(x >= self.lower[s] && x <= self.upper[s]) {
                    return bad(format!(
                        "signal {s} = {x} on segment {k} is outside [{}, {}]",
                        self.lower[s], self.upper[s]
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn signals(&self) -> usize {
        self.lower.len()
    }

    /// Interior breakpoints.
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    /// Segment containing `t` (the last one for `t ≥ horizon`).
    pub fn segment(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.segment(t)]
    }

    /// Number of value changes of one signal.
    pub fn switches(&self, signal: usize) -> usize {
        self.values
            .windows(2)
            .filter(|w| w[0][signal] != w[1][signal])
            .count()
    }

    /// Times at which `signal` changes value.
    pub fn switch_times(&self, signal: usize) -> Vec<f64> {
        (1..self.values.len())
            .filter(|&k| self.values[k - 1][signal] != self.values[k][signal])
            .map(|k| self.starts[k])
            .collect()
    }

    /// Total time signal `s` spends at its upper bound.
    pub fn time_at_upper(&self, s: usize) -> f64 {
        (0..self.starts.len())
            .filter(|&k| self.values[k][s] == self.upper[s])
            .map(|k| self.end(k) - self.starts[k])
            .sum()
    }

    fn end(&self, k: usize) -> f64 {
        self.starts.get(k + 1).copied().unwrap_or(self.horizon)
    }

    /// Step-function CSV: one row per segment start plus a closing row at
    /// the horizon repeating the final values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        let m = self.signals();
        for s in 0..m {
            if m == 1 {
                let _ = write!(out, ",{}", self.signal);
            } else {
                let _ = write!(out, ",{}_{s}", self.signal);
            }
        }
        out.push('\n');
        let mut row = |t: f64, v: &[f64]| {
            out.push_str(&format_sig(t));
            for x in v {
                let _ = write!(out, ",{}", format_sig(*x));
            }
            out.push('\n');
        };
        for (t, v) in self.starts.iter().zip(&self.values) {
            row(*t, v);
        }
        row(self.horizon, self.values.last().expect("nonempty"));
        out
    }

    /// Schedule from `(start, values)` pieces: adjacent equal pieces are
    /// merged and slivers below `MIN_SEGMENT · horizon` are absorbed by
    /// their predecessor.
    pub(crate) fn from_pieces(
        signal: &str,
        horizon: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        pieces: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self, ControlError> {
        let min_len = MIN_SEGMENT * horizon;
        let mut starts: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (k, (t, v)) in pieces.iter().enumerate() {
            let end = pieces.get(k + 1).map_or(horizon, |p| p.0);
            if end - t < min_len && !starts.is_empty() {
                continue;
            }
            if values.last() == Some(v) {
                continue;
            }
            starts.push(if starts.is_empty() { 0.0 } else { *t });
            values.push(v.clone());
        }
        Self::new(signal, horizon, lower, upper, starts, values)
    }
}
