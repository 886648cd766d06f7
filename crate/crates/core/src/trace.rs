//! Training traces and the observer hooks used by the run loops.

use serde::{Deserialize, Serialize};

/// One cadenced measurement of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub train_risk: f64,
    pub reg: f64,
    pub total: f64,
    pub test_risk: Option<f64>,
    pub test01: Option<f64>,
    pub alignment: Option<f64>,
    /// Wall time since the run started; zero unless a clock is supplied.
    pub seconds: f64,
    /// Noise steps drawn so far; the next draw opens stream `noise_stream`.
    pub noise_stream: u64,
}

impl TraceRecord {
    pub fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.map_or(true, f64::is_finite);
        self.train_risk.is_finite()
            && self.reg.is_finite()
            && self.total.is_finite()
            && self.seconds.is_finite()
            && opt(self.test_risk)
            && opt(self.test01)
            && opt(self.alignment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Receives every trace record as it is produced.
pub trait Observer {
    fn record(&mut self, rec: &TraceRecord) -> Control;
}

/// Keeps every record.
impl Observer for alloc::vec::Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) -> Control {
        self.push(*rec);
        Control::Continue
    }
}

/// Stops once the test 0-1 error reaches a target.
#[derive(Debug, Clone, Copy)]
pub struct StopAtTest01(pub f64);

impl Observer for StopAtTest01 {
    fn record(&mut self, rec: &TraceRecord) -> Control {
        match rec.test01 {
            Some(e) if e <= self.0 => Control::Stop,
            _ => Control::Continue,
        }
    }
}

/// Stops once the training risk falls to a target.
#[derive(Debug, Clone, Copy)]
pub struct StopAtTrainRisk(pub f64);

impl Observer for StopAtTrainRisk {
    fn record(&mut self, rec: &TraceRecord) -> Control {
        if rec.train_risk <= self.0 {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}

/// Wall clock for the `seconds` column.
pub trait Clock {
    fn seconds(&self) -> f64;
}
