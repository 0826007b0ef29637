//! Manipulation strategies against the matching engine, and the experiments
//! that measure their effect on visibility.
//!
//! Each experiment takes an election, applies one manipulation (crafted
//! answers, calibrated answers, cloned candidates, alternative weights,
//! question games, tie-break changes), recomputes visibility, and reports
//! baseline vs. attacked values with relative changes.

mod anneal;
mod experiments;

pub use anneal::{brute_force_optimal, optimize_answers};
pub use experiments::{
    calibration_experiment, diversification_analysis, diversification_simulation,
    duplicate_question_attack, greedy_question_subset, list_centralization_analysis, list_spread,
    question_correlation_matrix, question_order_experiment, tiebreak_impact,
    top_match_distribution, weight_scenario, CorrelationMatrix, DiversificationAnalysis,
    DiversificationRow, GreedyPick, GreedySubsetReport, ListCentralization,
    ListCentralizationRow, OrderExperimentReport, OrderRow, TopMatchDistribution, WeightRemap,
};
pub(crate) use experiments::CalibrationLab;

use crate::matching::MatchError;
use crate::model::{ModelError, Profile, Question};
use crate::ranking::RankError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("instance too large: {combinations:e} answer combinations exceed the 1e6 budget")]
    InstanceTooLarge { combinations: f64 },
    #[error("operation requires a complete profile")]
    IncompleteProfile,
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("unknown list `{0}`")]
    UnknownList(String),
    #[error("question index {0} out of range")]
    UnknownQuestion(usize),
    #[error("election carries no party vote shares")]
    MissingVoteShares,
    #[error("no voters with complete profiles")]
    NoCompleteVoters,
    #[error("invalid drop model: {0}")]
    InvalidDropModel(String),
    #[error("invalid weight mapping: {0}")]
    InvalidWeightMap(String),
}

/// Simulated-annealing schedule for answer optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealingConfig {
    /// Moves per restart.
    pub iterations: u32,
    /// Starting temperature, in visibility units.
    pub initial_temperature: f64,
    /// Geometric cooling multiplier per move, in (0, 1).
    pub cooling_factor: f64,
    /// Independent runs; the best full-population result wins.
    pub restarts: u32,
    /// Fraction of the state's voters the search objective samples, in
    /// (0, 1]. The returned visibility is always measured on all voters.
    pub voter_subsample_fraction: f64,
    pub seed: u64,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        AnnealingConfig {
            iterations: 20_000,
            initial_temperature: 0.05,
            cooling_factor: 0.9995,
            restarts: 4,
            voter_subsample_fraction: 1.0,
            seed: 0,
        }
    }
}

impl AnnealingConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.iterations < 1 {
            return Err(AttackError::InvalidConfig("iterations must be ≥ 1".into()));
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(AttackError::InvalidConfig(
                "cooling_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.voter_subsample_fraction > 0.0 && self.voter_subsample_fraction <= 1.0) {
            return Err(AttackError::InvalidConfig(
                "voter_subsample_fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(AttackError::InvalidConfig(
                "initial_temperature must be positive and finite".into(),
            ));
        }
        if self.restarts < 1 {
            return Err(AttackError::InvalidConfig("restarts must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Which way answer calibration shifts a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationDirection {
    /// One allowed step toward the scale neutral (never crossing it).
    Moderate,
    /// One allowed step away from the neutral, toward the answer's own pole.
    Strong,
}

impl CalibrationDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            CalibrationDirection::Moderate => "moderate",
            CalibrationDirection::Strong => "strong",
        }
    }
}

/// Probability model for answering the question presented at a given
/// position: `f(t)` is the chance position `t` (1-based) gets answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropModel {
    pub intercept: f64,
    /// Per-position decline of the answer rate.
    pub slope: f64,
    pub mode: DropMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "table")]
pub enum DropMode {
    /// `f(t) = intercept − slope·t`.
    #[default]
    FittedLinear,
    /// Explicit per-position answer rates (index 0 = first position).
    Custom(Vec<f64>),
}

impl Default for DropModel {
    fn default() -> Self {
        DropModel {
            intercept: 0.96,
            slope: 0.0012,
            mode: DropMode::FittedLinear,
        }
    }
}

impl DropModel {
    /// Answer probability for 1-based presented position `t`.
    pub fn answer_rate(&self, position: usize) -> f64 {
        match &self.mode {
            DropMode::FittedLinear => self.intercept - self.slope * position as f64,
            DropMode::Custom(table) => table[position - 1],
        }
    }

    /// Checks every position of an `n_questions`-long questionnaire has a
    /// rate in [0, 1].
    pub fn validate(&self, n_questions: usize) -> Result<(), AttackError> {
        match &self.mode {
            DropMode::FittedLinear => {
                for pos in [1, n_questions.max(1)] {
                    let f = self.answer_rate(pos);
                    if !(0.0..=1.0).contains(&f) {
                        return Err(AttackError::InvalidDropModel(format!(
                            "f({pos}) = {f} outside [0, 1]"
                        )));
                    }
                }
            }
            DropMode::Custom(table) => {
                if table.len() < n_questions {
                    return Err(AttackError::InvalidDropModel(format!(
                        "table covers {} positions, need {n_questions}",
                        table.len()
                    )));
                }
                if let Some(f) = table.iter().find(|f| !(0.0..=1.0).contains(*f)) {
                    return Err(AttackError::InvalidDropModel(format!(
                        "rate {f} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One entity's baseline-vs-attacked visibility. `rel_change` is
/// `(attacked − baseline)/baseline`, or `None` (flagged undefined) when the
/// baseline is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub entity: String,
    pub baseline: f64,
    pub attacked: f64,
    pub rel_change: Option<f64>,
}

/// Outcome of one manipulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub scenario: String,
    pub rows: Vec<AttackRow>,
    /// Config echo: seed, method, scenario parameters.
    pub metadata: BTreeMap<String, String>,
}

impl AttackReport {
    pub fn row(&self, entity: &str) -> Option<&AttackRow> {
        self.rows.iter().find(|r| r.entity == entity)
    }

    /// CSV serialization: `scenario,entity,baseline,attacked,rel_change`
    /// (empty cell for flagged undefined changes).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,entity,baseline,attacked,rel_change\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.scenario,
                r.entity,
                r.baseline,
                r.attacked,
                r.rel_change.map_or(String::new(), |c| c.to_string())
            ));
        }
        out
    }
}

pub(crate) fn rel_change(baseline: f64, attacked: f64) -> Option<f64> {
    (baseline > 0.0).then(|| (attacked - baseline) / baseline)
}

pub(crate) fn attack_rows(
    baseline: &BTreeMap<String, f64>,
    attacked: &BTreeMap<String, f64>,
) -> Vec<AttackRow> {
    baseline
        .iter()
        .map(|(entity, &b)| {
            let a = attacked.get(entity).copied().unwrap_or(0.0);
            AttackRow {
                entity: entity.clone(),
                baseline: b,
                attacked: a,
                rel_change: rel_change(b, a),
            }
        })
        .collect()
}

/// Shifts one answer a single allowed step on its scale, per the direction.
/// Toward-neutral steps never cross the neutral; away-from-neutral steps
/// stop at the pole; answers exactly at the neutral never move.
pub fn calibrate_answer(answer: f64, question: &Question, direction: CalibrationDirection) -> f64 {
    let allowed = question.scale.allowed();
    let neutral = question.scale.neutral();
    if answer == neutral {
        return answer;
    }
    let pos = allowed
        .iter()
        .position(|&a| a == answer)
        .expect("answer on scale");
    match (direction, answer > neutral) {
        (CalibrationDirection::Moderate, true) => {
            // Step down, but not past the neutral.
            let next = allowed[pos - 1];
            if next >= neutral {
                next
            } else {
                answer
            }
        }
        (CalibrationDirection::Moderate, false) => {
            let next = allowed[pos + 1];
            if next <= neutral {
                next
            } else {
                answer
            }
        }
        (CalibrationDirection::Strong, true) => {
            if pos + 1 < allowed.len() {
                allowed[pos + 1]
            } else {
                answer
            }
        }
        (CalibrationDirection::Strong, false) => {
            if pos > 0 {
                allowed[pos - 1]
            } else {
                answer
            }
        }
    }
}

/// Calibrates every answer of a complete profile (weights preserved).
pub fn calibrate_answers(
    profile: &Profile,
    questions: &[Question],
    direction: CalibrationDirection,
) -> Result<Profile, AttackError> {
    if profile.len() != questions.len() {
        return Err(AttackError::Model(ModelError::ProfileLengthMismatch {
            answers: profile.len(),
            weights: questions.len(),
        }));
    }
    let answers: Vec<Option<f64>> = profile
        .answers()
        .iter()
        .zip(questions)
        .map(|(a, q)| match a {
            Some(v) => Ok(Some(calibrate_answer(*v, q, direction))),
            None => Err(AttackError::IncompleteProfile),
        })
        .collect::<Result<_, _>>()?;
    Profile::new(answers, profile.weights().to_vec()).map_err(AttackError::Model)
}

/// Nearest allowed value on a scale; exact midpoints round down.
pub(crate) fn nearest_allowed(x: f64, allowed: &[f64]) -> f64 {
    let mut best = allowed[0];
    let mut gap = (x - best).abs();
    for &a in &allowed[1..] {
        let g = (x - a).abs();
        if g < gap {
            gap = g;
            best = a;
        }
    }
    best
}
