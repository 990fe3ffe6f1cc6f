//! Line-delimited JSON traces and their replay.
//!
//! The first line is a header naming the format, its version and the SHA-256
//! digest of the instance in canonical native text. Each following line is one
//! [`Step`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{self, BufRead, Write};
use thiserror::Error;

use super::{Budgets, Kernel, KernelState, RuleViolation, Step};
use crate::frontend::native::print_native;
use crate::model::ImtInstance;

pub const TRACE_FORMAT: &str = "imt-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<Step>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header")]
    MissingHeader,
    #[error("unsupported trace format {format} version {version}")]
    Unsupported { format: String, version: u32 },
    #[error("instance digest mismatch: trace has {found}, instance has {expected}")]
    DigestMismatch { expected: String, found: String },
}

/// SHA-256 of the canonical native rendering of the instance.
pub fn instance_digest(instance: &ImtInstance) -> String {
    Sha256::digest(print_native(instance).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Trace {
    pub fn new(instance: &ImtInstance) -> Self {
        Trace {
            header: TraceHeader {
                format: TRACE_FORMAT.to_string(),
                version: TRACE_VERSION,
                digest: instance_digest(instance),
            },
            steps: Vec::new(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| TraceError::Parse { line: i + 1, message: e.to_string() };
            if header.is_none() {
                let h: TraceHeader = serde_json::from_str(&line).map_err(parse_err)?;
                if h.format != TRACE_FORMAT || h.version != TRACE_VERSION {
                    return Err(TraceError::Unsupported { format: h.format, version: h.version });
                }
                header = Some(h);
            } else {
                steps.push(serde_json::from_str(&line).map_err(parse_err)?);
            }
        }
        Ok(Trace { header: header.ok_or(TraceError::MissingHeader)?, steps })
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        Trace::read_from(text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    Violation(RuleViolation),
    NotFinal,
}

#[derive(Clone, Debug)]
pub enum ReplayVerdict {
    Accepted(KernelState),
    /// `index` is the offending step, or the trace length when the final
    /// state was not reached.
    Rejected { index: usize, reason: RejectReason },
}

impl ReplayVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ReplayVerdict::Accepted(_))
    }
}

/// Replays `trace` from the starting state of `instance`.
pub fn replay_trace(
    instance: &ImtInstance,
    trace: &Trace,
    budgets: Budgets,
) -> Result<ReplayVerdict, TraceError> {
    let expected = instance_digest(instance);
    if trace.header.digest != expected {
        return Err(TraceError::DigestMismatch { expected, found: trace.header.digest.clone() });
    }
    let mut kernel = Kernel::new(instance, budgets);
    for (index, step) in trace.steps.iter().enumerate() {
        if let Err(v) = kernel.apply(step) {
            return Ok(ReplayVerdict::Rejected { index, reason: RejectReason::Violation(v) });
        }
    }
    if kernel.state().is_final() {
        Ok(ReplayVerdict::Accepted(kernel.state().clone()))
    } else {
        Ok(ReplayVerdict::Rejected { index: trace.steps.len(), reason: RejectReason::NotFinal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::Combination;
    use crate::kernel::DropCert;
    use crate::model::{LinConstraint, SubproblemId, VarBounds};
    use crate::num::rat;

    fn contradictory() -> ImtInstance {
        let mut i = ImtInstance::new();
        i.add_var("x", VarBounds::closed(-3, 3));
        i.add_constraint("x >= 1".parse().unwrap());
        i.add_constraint("x <= 0".parse().unwrap());
        i
    }

    fn drop_step() -> Step {
        let mut k = Combination::new();
        k.push("x >= 1".parse::<LinConstraint>().unwrap(), rat(1, 1));
        k.push("x <= 0".parse::<LinConstraint>().unwrap(), rat(1, 1));
        Step::Drop { target: SubproblemId(0), cert: DropCert::Farkas { combination: k } }
    }

    #[test]
    fn empty_trace_is_not_accepted() {
        let i = contradictory();
        let v = replay_trace(&i, &Trace::new(&i), Budgets::default()).unwrap();
        assert!(matches!(v, ReplayVerdict::Rejected { index: 0, reason: RejectReason::NotFinal }));
    }

    #[test]
    fn drop_trace_round_trips_and_replays() {
        let i = contradictory();
        let mut t = Trace::new(&i);
        t.steps.push(drop_step());
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert!(replay_trace(&i, &back, Budgets::default()).unwrap().is_accepted());
    }

    #[test]
    fn digest_mismatch_is_an_error() {
        let i = contradictory();
        let mut t = Trace::new(&i);
        t.steps.push(drop_step());
        let mut other = i.clone();
        other.add_constraint("x <= 2".parse().unwrap());
        assert!(matches!(
            replay_trace(&other, &t, Budgets::default()),
            Err(TraceError::DigestMismatch { .. })
        ));
    }
}
