use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageOutcome {
    Exit,
    Continue,
    /// Last stage, returned without assessment.
    Final,
}

impl StageOutcome {
    fn as_str(self) -> &'static str {
        match self {
            StageOutcome::Exit => "EXIT",
            StageOutcome::Continue => "CONTINUE",
            StageOutcome::Final => "FINAL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub exit: usize,
    pub label: String,
    /// `None` for the final stage, which is never assessed.
    pub score: Option<f64>,
    pub outcome: StageOutcome,
    pub stage_macs: u64,
    pub cumulative_macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTrace {
    pub schema_version: u32,
    pub per_exit: Vec<ExitRecord>,
    pub chosen_exit: usize,
    pub accumulated_cost: u64,
    pub wall_time_s: f64,
}

impl ExitTrace {
    pub(super) fn new(per_exit: Vec<ExitRecord>, chosen_exit: usize, elapsed: Duration) -> Self {
        let accumulated_cost = per_exit.last().map_or(0, |r| r.cumulative_macs);
        ExitTrace {
            schema_version: SCHEMA_VERSION,
            per_exit,
            chosen_exit,
            accumulated_cost,
            wall_time_s: elapsed.as_secs_f64(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    /// `schema_version,exit,label,score,decision,stage_macs,cumulative_macs`;
    /// the final stage's score is written as `not_assessed`.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Format(format!("CSV: {e}"));
        wtr.write_record([
            "schema_version",
            "exit",
            "label",
            "score",
            "decision",
            "stage_macs",
            "cumulative_macs",
        ])
        .map_err(err)?;
        for r in &self.per_exit {
            wtr.write_record([
                SCHEMA_VERSION.to_string(),
                r.exit.to_string(),
                r.label.clone(),
                r.score
                    .map_or_else(|| "not_assessed".to_string(), |q| q.to_string()),
                r.outcome.as_str().to_string(),
                r.stage_macs.to_string(),
                r.cumulative_macs.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Format(format!("CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}
