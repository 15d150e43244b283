//! Early-exit controller.
//!
//! Stages run in order. Every stage but the last produces a candidate that
//! is scored; the first candidate whose score reaches `t_q` is returned.
//! The last stage's output is returned without scoring.

mod filters;
mod trace;

pub use filters::{deblock, gaussian_blur};
pub use trace::{ExitRecord, ExitTrace, StageOutcome};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flopsmodel::{incremental_cost, ArchConfig};
use crate::imagecore::{load_plane_auto, CodecKind, Plane};
use crate::iqam::{assess, decide_exit, ExitDecision, IqamParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageKind {
    /// Passes the previous candidate through.
    Identity,
    Gaussian {
        sigma: f64,
    },
    Deblock {
        strength: f64,
    },
    /// Precomputed network output `exit_{j}.pgm` in `dir`. `exit` defaults to
    /// the stage position plus one, matching network exits numbered from 2.
    External {
        dir: PathBuf,
        #[serde(default)]
        exit: Option<usize>,
    },
}

/// Compute charged for a stage: a literal MAC count, or the incremental
/// cost of a backbone exit from the cost model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeclaredCost {
    Macs(u64),
    FlopsExit { flops_exit: usize },
}

impl Default for DeclaredCost {
    fn default() -> Self {
        DeclaredCost::Macs(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    #[serde(flatten)]
    pub kind: StageKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub declared_cost: DeclaredCost,
}

impl StageSpec {
    pub fn new(kind: StageKind) -> Self {
        StageSpec {
            kind,
            label: None,
            declared_cost: DeclaredCost::default(),
        }
    }

    pub fn with_cost(mut self, cost: DeclaredCost) -> Self {
        self.declared_cost = cost;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label_at(&self, position: usize) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.kind {
            StageKind::Identity => "identity".into(),
            StageKind::Gaussian { sigma } => format!("gaussian({sigma})"),
            StageKind::Deblock { strength } => format!("deblock({strength})"),
            StageKind::External { .. } => format!("exit_{}", external_index(&self.kind, position)),
        }
    }
}

fn external_index(kind: &StageKind, position: usize) -> usize {
    match kind {
        StageKind::External { exit, .. } => exit.unwrap_or(position + 1),
        _ => position,
    }
}

/// Ordered stage list plus the backbone used to price `flops_exit` costs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub arch: Option<ArchConfig>,
}

impl PipelineConfig {
    pub fn new(stages: Vec<StageSpec>) -> Self {
        PipelineConfig { stages, arch: None }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        if let Some(a) = &cfg.arch {
            a.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text)
    }

    /// Points relative external directories at `base`.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        for s in &mut self.stages {
            if let StageKind::External { dir, .. } = &mut s.kind {
                if dir.is_relative() {
                    *dir = base.join(&*dir);
                }
            }
        }
    }

    /// Declared cost per stage at input resolution `h×w`.
    pub fn stage_costs(&self, h: usize, w: usize) -> Result<Vec<u64>> {
        let arch = self.arch.clone().unwrap_or_default();
        self.stages
            .iter()
            .map(|s| match s.declared_cost {
                DeclaredCost::Macs(m) => Ok(m),
                DeclaredCost::FlopsExit { flops_exit } => {
                    incremental_cost(&arch, flops_exit, h as u64, w as u64)
                }
            })
            .collect()
    }

    /// Fails if any external stage lacks its exit file.
    pub fn check_external_files(&self) -> Result<()> {
        for (k, s) in self.stages.iter().enumerate() {
            if let StageKind::External { dir, .. } = &s.kind {
                let j = external_index(&s.kind, k + 1);
                let path = exit_file(dir, j);
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "exit {j}: missing external file {}",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn exit_file(dir: &Path, exit: usize) -> PathBuf {
    dir.join(format!("exit_{exit}.pgm"))
}

#[derive(Clone, Copy, Debug)]
pub struct StageContext {
    pub codec: CodecKind,
    /// 1-based position in the stage list.
    pub position: usize,
}

/// Produces one candidate. Classical stages refine `previous`; external
/// stages are independent candidates for `original`.
pub fn stage_apply(
    spec: &StageSpec,
    original: &Plane,
    previous: &Plane,
    ctx: StageContext,
) -> Result<Plane> {
    original.ensure_same_dims(previous)?;
    let wrap = |e: Error| Error::Stage {
        exit: ctx.position,
        label: spec.label_at(ctx.position),
        message: e.to_string(),
    };
    let out = match &spec.kind {
        StageKind::Identity => previous.clone(),
        StageKind::Gaussian { sigma } => gaussian_blur(previous, *sigma).map_err(wrap)?,
        StageKind::Deblock { strength } => {
            deblock(previous, ctx.codec.patch_size(), *strength).map_err(wrap)?
        }
        StageKind::External { dir, .. } => {
            let j = external_index(&spec.kind, ctx.position);
            let path = exit_file(dir, j);
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "exit {j}: missing external file {}",
                    path.display()
                )));
            }
            load_plane_auto(&path).map_err(|e| Error::Stage {
                exit: j,
                label: spec.label_at(ctx.position),
                message: e.to_string(),
            })?
        }
    };
    if !out.same_dims(original) {
        return Err(Error::Stage {
            exit: ctx.position,
            label: spec.label_at(ctx.position),
            message: format!(
                "output is {}x{}, input is {}x{}",
                out.width(),
                out.height(),
                original.width(),
                original.height()
            ),
        });
    }
    Ok(out)
}

/// Scores a candidate for the exit decision.
pub trait Assessor {
    fn score(&mut self, candidate: &Plane) -> Result<f64>;
}

/// Scores with the Tchebichef-moment quality model.
pub struct IqamAssessor<'a> {
    pub params: &'a IqamParams,
}

impl Assessor for IqamAssessor<'_> {
    fn score(&mut self, candidate: &Plane) -> Result<f64> {
        Ok(assess(candidate, self.params)?.q)
    }
}

pub fn run(
    input: &Plane,
    config: &PipelineConfig,
    params: &IqamParams,
) -> Result<(Plane, ExitTrace)> {
    run_with(input, config, params, &mut IqamAssessor { params })
}

/// Runs the controller with a caller-supplied scorer.
pub fn run_with<A: Assessor + ?Sized>(
    input: &Plane,
    config: &PipelineConfig,
    params: &IqamParams,
    assessor: &mut A,
) -> Result<(Plane, ExitTrace)> {
    if config.stages.is_empty() {
        return Err(Error::Config("pipeline needs at least one stage".into()));
    }
    config.check_external_files()?;
    let costs = config.stage_costs(input.height(), input.width())?;
    let started = Instant::now();
    let n = config.stages.len();
    let mut records = Vec::with_capacity(n);
    let mut cumulative = 0u64;
    let mut previous = input.clone();

    for (k, spec) in config.stages.iter().enumerate() {
        let position = k + 1;
        let ctx = StageContext {
            codec: params.codec,
            position,
        };
        let candidate = stage_apply(spec, input, &previous, ctx)?;
        cumulative += costs[k];
        let mut record = ExitRecord {
            exit: position,
            label: spec.label_at(position),
            score: None,
            outcome: StageOutcome::Final,
            stage_macs: costs[k],
            cumulative_macs: cumulative,
        };
        if position == n {
            records.push(record);
            return Ok((
                candidate,
                ExitTrace::new(records, position, started.elapsed()),
            ));
        }
        let q = assessor.score(&candidate)?;
        record.score = Some(q);
        match decide_exit(q, params.t_q) {
            ExitDecision::Exit => {
                record.outcome = StageOutcome::Exit;
                records.push(record);
                return Ok((
                    candidate,
                    ExitTrace::new(records, position, started.elapsed()),
                ));
            }
            ExitDecision::Continue => {
                record.outcome = StageOutcome::Continue;
                records.push(record);
                previous = candidate;
            }
        }
    }
    unreachable!("the last stage always returns")
}
