use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::HarnessConfig;
use super::run::run_clips;
use crate::backend::{OracleBackend, PromptTemplates};
use crate::domain::{ClipMeta, GroundTruth, Prediction};
use crate::error::HarnessError;
use crate::metrics::{score_dataset, ScoreReport};
use crate::pipeline::{StageConfig, StageSelection};
use crate::postprocess::{blend_runs, DetectionIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub acc_s: f64,
    pub t: f64,
    pub s: f64,
    pub c: f64,
    /// ACC^S change against the previous row.
    pub delta: Option<f64>,
}

impl AblationRow {
    fn from_report(name: &str, r: &ScoreReport, prev: Option<&AblationRow>) -> Self {
        Self {
            name: name.into(),
            acc_s: r.acc_s,
            t: r.t,
            s: r.s,
            c: r.c,
            delta: prev.map(|p| r.acc_s - p.acc_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub n_clips: usize,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>8} {:>8} {:>9}",
            "configuration", "ACC^S", "T", "S", "C", "delta"
        );
        for r in &self.rows {
            let delta = r.delta.map_or("-".to_string(), |d| format!("{d:+.4}"));
            let _ = writeln!(
                out,
                "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9}",
                r.name, r.acc_s, r.t, r.s, r.c, delta
            );
        }
        let _ = writeln!(out, "clips: {}", self.n_clips);
        out
    }
}

pub const ABLATION_ROWS: [&str; 6] = [
    "stage1-only",
    "+stage3",
    "+type-rule",
    "+stage2",
    "+ensemble",
    "+snap",
];

fn stage_cfg(base: &StageConfig, stages: &str, type_rule: bool) -> StageConfig {
    StageConfig {
        stages: stages
            .parse::<StageSelection>()
            .expect("static stage selection"),
        type_rule,
        ..base.clone()
    }
}

/// Scores the cumulative ladder stage1-only, +stage3, +type-rule, +stage2,
/// +ensemble, +snap on oracle backends built from `cfg.oracle_a` and
/// `cfg.oracle_b`. Without detections the +snap row repeats +ensemble.
pub fn ablate(
    clips: &[ClipMeta],
    truths: &[GroundTruth],
    detections: Option<&DetectionIndex>,
    cfg: &HarnessConfig,
) -> Result<AblationTable, HarnessError> {
    cfg.validate()?;
    let oracle_a = OracleBackend::new(truths.iter().cloned(), cfg.oracle_a.clone())?;
    let oracle_b = OracleBackend::new(truths.iter().cloned(), cfg.oracle_b.clone())?;
    let prompts = PromptTemplates::default();
    let run =
        |backend: &OracleBackend, stage: &StageConfig| -> Result<Vec<Prediction>, HarnessError> {
            let mut recs = run_clips(
                clips,
                backend,
                stage,
                &prompts,
                "ablate",
                cfg.concurrency,
                None,
            )?;
            recs.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
            Ok(recs.into_iter().map(|r| r.prediction).collect())
        };
    let score = |preds: &[Prediction]| score_dataset(preds, truths, &cfg.metrics);

    let mut rows: Vec<AblationRow> = Vec::new();
    let mut push = |name: &str, report: ScoreReport| {
        let row = AblationRow::from_report(name, &report, rows.last());
        rows.push(row);
    };

    push(
        "stage1-only",
        score(&run(&oracle_a, &stage_cfg(&cfg.stage, "1", false))?)?,
    );
    push(
        "+stage3",
        score(&run(&oracle_a, &stage_cfg(&cfg.stage, "13", false))?)?,
    );
    push(
        "+type-rule",
        score(&run(&oracle_a, &stage_cfg(&cfg.stage, "13", true))?)?,
    );
    let full = stage_cfg(&cfg.stage, "123", true);
    let preds_a = run(&oracle_a, &full)?;
    push("+stage2", score(&preds_a)?);
    let preds_b = run(&oracle_b, &full)?;
    let ens = blend_runs(&preds_a, &preds_b, &cfg.ensemble)?;
    push("+ensemble", score(&ens)?);
    let snapped: Vec<Prediction> = match detections {
        Some(index) => index
            .snap_all(&ens, &cfg.snap)
            .into_iter()
            .map(|o| o.prediction)
            .collect(),
        None => ens,
    };
    push("+snap", score(&snapped)?);

    Ok(AblationTable {
        rows,
        n_clips: truths.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::LayoutPolicy;
    use crate::harness::synthetic::{generate_synthetic, SyntheticParams};

    #[test]
    fn noiseless_ladder_is_perfect() {
        let set =
            generate_synthetic(12, &SyntheticParams::default(), &LayoutPolicy::default()).unwrap();
        let index = DetectionIndex::new(set.detection_fps, set.detections.clone());
        let table = ablate(
            &set.clips(),
            &set.truths(),
            Some(&index),
            &HarnessConfig::default(),
        )
        .unwrap();
        let names: Vec<&str> = table.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ABLATION_ROWS);
        for r in &table.rows {
            assert_eq!(r.acc_s, 1.0, "{}", r.name);
        }
        assert!(table.to_table().contains("+ensemble"));
    }
}
