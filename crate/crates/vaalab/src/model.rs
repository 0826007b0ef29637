//! Core election data model: answer scales, questions, profiles, candidates,
//! voters, party lists and the [`Election`] container, plus structural
//! validation and the default top-k policy.
//!
//! Conventions shared by the whole crate:
//!
//! * Answers live on a 0–100 grid. The built-in scales are the 4-point policy
//!   scale {0, 25, 75, 100}, the 7-point value scale
//!   {0, 17, 33, 50, 67, 83, 100} and the 5-point budget scale
//!   {0, 25, 50, 75, 100}; custom scales are allowed.
//! * Weights come from the election's weight set (default {0, 0.5, 1, 2});
//!   an unanswered question always carries weight 0, which the [`Profile`]
//!   constructor enforces and [`validate_election`] re-checks.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use thiserror::Error;

/// Lowest representable answer value.
pub const ANSWER_MIN: f64 = 0.0;
/// Highest representable answer value.
pub const ANSWER_MAX: f64 = 100.0;
/// The default voter weight for an answered question.
pub const DEFAULT_WEIGHT: f64 = 1.0;
/// The canonical weight set: 0 (skip), 0.5 (half), 1 (default), 2 (double).
pub const DEFAULT_WEIGHT_SET: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

/// Which entity kind a visibility or ranking computation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityTarget {
    Candidate,
    Party,
    List,
}

impl VisibilityTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            VisibilityTarget::Candidate => "candidate",
            VisibilityTarget::Party => "party",
            VisibilityTarget::List => "list",
        }
    }
}

/// Errors from model constructors and lookups.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("answer scale needs at least two distinct values")]
    ScaleTooSmall,
    #[error("answer scale value {0} is outside [{ANSWER_MIN}, {ANSWER_MAX}] or not finite")]
    ScaleValueOutOfRange(f64),
    #[error("answer scale values must be strictly ascending")]
    ScaleNotAscending,
    #[error("profile has {answers} answers but {weights} weights")]
    ProfileLengthMismatch { answers: usize, weights: usize },
    #[error("answer {0} is not finite")]
    NonFiniteAnswer(f64),
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown voter `{0}`")]
    UnknownVoter(String),
    #[error("unknown candidate `{0}`")]
    UnknownCandidate(String),
    #[error("candidate `{0}` has an incomplete profile")]
    IncompleteCandidate(String),
}

/// The family a scale belongs to. `Custom` carries its values explicitly in
/// serialized documents; the three presets are fixed by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Policy,
    Value,
    Budget,
    Custom,
}

/// An ordered set of allowed answer values with a neutral midpoint.
///
/// The neutral point is `(min + max) / 2` and does not have to be a member of
/// the scale (it is not on the 4-point policy scale).
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerScale {
    kind: ScaleKind,
    allowed: Vec<f64>,
}

impl AnswerScale {
    /// 4-point policy scale: no, rather no, rather yes, yes.
    pub fn policy() -> Self {
        AnswerScale {
            kind: ScaleKind::Policy,
            allowed: vec![0.0, 25.0, 75.0, 100.0],
        }
    }

    /// 7-point value scale.
    pub fn value() -> Self {
        AnswerScale {
            kind: ScaleKind::Value,
            allowed: vec![0.0, 17.0, 33.0, 50.0, 67.0, 83.0, 100.0],
        }
    }

    /// 5-point budget scale: strongly reduce ... strongly expand.
    pub fn budget() -> Self {
        AnswerScale {
            kind: ScaleKind::Budget,
            allowed: vec![0.0, 25.0, 50.0, 75.0, 100.0],
        }
    }

    /// A custom scale from explicit values (strictly ascending, inside
    /// [0, 100], at least two values).
    pub fn custom(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() < 2 {
            return Err(ModelError::ScaleTooSmall);
        }
        for &v in &values {
            if !v.is_finite() || !(ANSWER_MIN..=ANSWER_MAX).contains(&v) {
                return Err(ModelError::ScaleValueOutOfRange(v));
            }
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::ScaleNotAscending);
        }
        Ok(AnswerScale {
            kind: ScaleKind::Custom,
            allowed: values,
        })
    }

    pub fn from_kind(kind: ScaleKind, custom: Option<Vec<f64>>) -> Result<Self, ModelError> {
        match kind {
            ScaleKind::Policy => Ok(Self::policy()),
            ScaleKind::Value => Ok(Self::value()),
            ScaleKind::Budget => Ok(Self::budget()),
            ScaleKind::Custom => Self::custom(custom.unwrap_or_default()),
        }
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn allowed(&self) -> &[f64] {
        &self.allowed
    }

    pub fn min(&self) -> f64 {
        self.allowed[0]
    }

    pub fn max(&self) -> f64 {
        *self.allowed.last().unwrap()
    }

    /// The neutral midpoint `(min + max) / 2`.
    pub fn neutral(&self) -> f64 {
        0.5 * (self.min() + self.max())
    }

    pub fn contains(&self, value: f64) -> bool {
        self.allowed.iter().any(|&a| a == value)
    }

    /// Quantizes an arbitrary value to the nearest allowed value, with
    /// thresholds at the midpoints between adjacent values. Exact midpoint
    /// ties choose the lower value (deterministic; measure-zero for the
    /// continuous responses this is used on).
    pub fn nearest(&self, value: f64) -> f64 {
        let mut best = self.allowed[0];
        for w in self.allowed.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if value <= mid {
                return best;
            }
            best = w[1];
        }
        best
    }

    /// One allowed step toward the neutral midpoint, never crossing it.
    /// Answers at neutral, or whose next step would overshoot to the other
    /// side, are unchanged (on the 4-point policy scale, 25 and 75 are
    /// already maximally moderate).
    pub fn step_toward_neutral(&self, value: f64) -> f64 {
        let n = self.neutral();
        if value < n {
            match self.allowed.iter().find(|&&a| a > value) {
                Some(&next) if next <= n => next,
                _ => value,
            }
        } else if value > n {
            match self.allowed.iter().rev().find(|&&a| a < value) {
                Some(&prev) if prev >= n => prev,
                _ => value,
            }
        } else {
            value
        }
    }

    /// One allowed step away from neutral toward the pole on the answer's own
    /// side. Answers exactly at neutral are unchanged (they have no side).
    pub fn step_toward_pole(&self, value: f64) -> f64 {
        let n = self.neutral();
        if value < n {
            match self.allowed.iter().rev().find(|&&a| a < value) {
                Some(&prev) => prev,
                None => value,
            }
        } else if value > n {
            match self.allowed.iter().find(|&&a| a > value) {
                Some(&next) => next,
                None => value,
            }
        } else {
            value
        }
    }
}

/// One questionnaire item. `index` is the 1-based presentation position and
/// must match the question's position in `Election::questions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub id: String,
    pub index: usize,
    pub scale: AnswerScale,
    pub text: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, index: usize, scale: AnswerScale) -> Self {
        Question {
            id: id.into(),
            index,
            scale,
            text: None,
        }
    }
}

/// The standard 75-question layout: 60 policy, 7 value, 8 budget questions.
pub fn standard_questions() -> Vec<Question> {
    let mut out = Vec::with_capacity(75);
    for i in 1..=75usize {
        let scale = if i <= 60 {
            AnswerScale::policy()
        } else if i <= 67 {
            AnswerScale::value()
        } else {
            AnswerScale::budget()
        };
        out.push(Question::new(format!("q{i}"), i, scale));
    }
    out
}

/// A (possibly partial) answer vector with per-question weights.
///
/// Invariant: `answers.len() == weights.len()`, and every unanswered question
/// has weight exactly 0. The constructor enforces both.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    answers: Vec<Option<f64>>,
    weights: Vec<f64>,
}

impl Profile {
    /// Builds a profile, forcing weight 0 wherever the answer is absent.
    pub fn new(answers: Vec<Option<f64>>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if answers.len() != weights.len() {
            return Err(ModelError::ProfileLengthMismatch {
                answers: answers.len(),
                weights: weights.len(),
            });
        }
        for a in answers.iter().flatten() {
            if !a.is_finite() {
                return Err(ModelError::NonFiniteAnswer(*a));
            }
        }
        let mut weights = weights;
        for (w, a) in weights.iter_mut().zip(&answers) {
            if !w.is_finite() && !(a.is_some() && *w == f64::INFINITY) || *w < 0.0 {
                // Infinite weights are reserved for deal-breaker profiles and
                // only meaningful on answered questions.
                return Err(ModelError::InvalidWeight(*w));
            }
            if a.is_none() {
                *w = 0.0;
            }
        }
        Ok(Profile { answers, weights })
    }

    /// A complete profile with every question answered at weight 1.
    pub fn complete(answers: Vec<f64>) -> Self {
        let n = answers.len();
        Profile {
            answers: answers.into_iter().map(Some).collect(),
            weights: vec![DEFAULT_WEIGHT; n],
        }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[Option<f64>] {
        &self.answers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn answer(&self, t: usize) -> Option<f64> {
        self.answers[t]
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t]
    }

    pub fn answered_count(&self) -> usize {
        self.answers.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.answers.iter().all(|a| a.is_some())
    }

    /// True when every question is answered and carries a positive weight
    /// (the fully-weighted population used by order-sensitivity experiments).
    pub fn is_fully_weighted(&self) -> bool {
        self.answers.iter().all(|a| a.is_some()) && self.weights.iter().all(|&w| w > 0.0)
    }

    /// Sets an answer. Clearing an answer forces its weight to 0; answering a
    /// previously skipped question restores the default weight 1.
    pub fn set_answer(&mut self, t: usize, answer: Option<f64>) {
        let was_answered = self.answers[t].is_some();
        self.answers[t] = answer;
        match answer {
            None => self.weights[t] = 0.0,
            Some(_) if !was_answered => self.weights[t] = DEFAULT_WEIGHT,
            Some(_) => {}
        }
    }

    /// Sets a weight. Ignored (kept at 0) for unanswered questions.
    pub fn set_weight(&mut self, t: usize, weight: f64) {
        if self.answers[t].is_some() {
            self.weights[t] = weight;
        }
    }
}

/// A candidate: complete answers, a state, a party and exactly one list.
/// `sort_key` is the deterministic tie-break key (alphabetical ordering uses
/// it bytewise).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub sort_key: String,
    pub state: String,
    pub party: String,
    pub list: String,
    pub profile: Profile,
}

/// A voter: partial answers with weights, an optional stated party
/// preference, and bookkeeping fields used by the cleaning pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Voter {
    pub id: String,
    pub state: String,
    pub preferred_party: Option<String>,
    pub profile: Profile,
    pub timestamp: i64,
    pub election_id: Option<String>,
}

/// A party list: an ordered set of candidate ids within one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyList {
    pub id: String,
    pub state: String,
    pub party: String,
    pub members: Vec<String>,
}

/// A full election: questionnaire, weight alphabet, states with seat counts,
/// candidates, voters, lists, and (optionally) party vote shares used by
/// share-weighted metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    pub questions: Vec<Question>,
    pub weight_set: Vec<f64>,
    /// State id → number of seats (the default top-k for that state).
    pub states: BTreeMap<String, u32>,
    pub candidates: Vec<Candidate>,
    pub voters: Vec<Voter>,
    pub lists: Vec<PartyList>,
    /// Party → vote share fraction in [0, 1]. Shares need not sum to 1
    /// (small parties may be unlisted).
    pub party_vote_shares: Option<BTreeMap<String, f64>>,
}

impl Election {
    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    /// All party ids that field at least one candidate, sorted.
    pub fn parties(&self) -> BTreeSet<String> {
        self.candidates.iter().map(|c| c.party.clone()).collect()
    }

    pub fn voter(&self, id: &str) -> Result<&Voter, ModelError> {
        self.voters
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| ModelError::UnknownVoter(id.to_string()))
    }

    pub fn candidate(&self, id: &str) -> Result<&Candidate, ModelError> {
        self.candidates
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| ModelError::UnknownCandidate(id.to_string()))
    }

    /// The default k for a visibility computation: the state's seat count for
    /// candidate and party targets, 1 for list targets.
    pub fn default_k(&self, state: &str, target: VisibilityTarget) -> Result<u32, ModelError> {
        let seats = self
            .states
            .get(state)
            .copied()
            .ok_or_else(|| ModelError::UnknownState(state.to_string()))?;
        Ok(match target {
            VisibilityTarget::Candidate | VisibilityTarget::Party => seats,
            VisibilityTarget::List => 1,
        })
    }

    pub fn validate(&self) -> ValidationReport {
        validate_election(self)
    }
}

/// One structural rule violation, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Which entity broke the rule (e.g. `voter v-17`, `question q3`).
    pub entity: String,
    /// Stable machine-readable rule code.
    pub rule: &'static str,
    /// Human-readable detail.
    pub detail: String,
}

/// Outcome of [`validate_election`]: an empty violation list means the
/// election satisfies every structural invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn push(violations: &mut Vec<Violation>, entity: String, rule: &'static str, detail: String) {
    violations.push(Violation {
        entity,
        rule,
        detail,
    });
}

/// Checks every structural invariant of an election and returns the (possibly
/// empty) violation list, each violation naming the entity and rule.
///
/// Validation is total: it never stops at the first problem, so a report over
/// a dirty import names everything that needs fixing.
pub fn validate_election(e: &Election) -> ValidationReport {
    let mut v = Vec::new();
    let nq = e.questions.len();

    if e.questions.is_empty() {
        push(&mut v, "election".into(), "questions.empty", "an election needs at least one question".into());
    }
    let mut qids = HashSet::new();
    for (pos, q) in e.questions.iter().enumerate() {
        if q.id.is_empty() {
            push(&mut v, format!("question #{}", pos + 1), "question.empty_id", "question id must be non-empty".into());
        }
        if !qids.insert(q.id.as_str()) {
            push(&mut v, format!("question {}", q.id), "question.duplicate_id", "question id appears more than once".into());
        }
        if q.index != pos + 1 {
            push(
                &mut v,
                format!("question {}", q.id),
                "question.index",
                format!("index {} does not match position {}", q.index, pos + 1),
            );
        }
    }

    // Weight set: finite, non-negative, strictly ascending, contains 0 and 1.
    if !e.weight_set.contains(&0.0) {
        push(&mut v, "election".into(), "weights.missing_zero", "weight set must contain 0".into());
    }
    if !e.weight_set.contains(&DEFAULT_WEIGHT) {
        push(&mut v, "election".into(), "weights.missing_default", "weight set must contain the default weight 1".into());
    }
    for &w in &e.weight_set {
        if !w.is_finite() || w < 0.0 {
            push(&mut v, "election".into(), "weights.invalid", format!("weight {w} is negative or not finite"));
        }
    }
    if e.weight_set.windows(2).any(|w| w[0] >= w[1]) {
        push(&mut v, "election".into(), "weights.unsorted", "weight set must be strictly ascending".into());
    }

    if e.states.is_empty() {
        push(&mut v, "election".into(), "states.empty", "an election needs at least one state".into());
    }
    for (s, &seats) in &e.states {
        if seats == 0 {
            push(&mut v, format!("state {s}"), "state.seats", "seat count must be at least 1".into());
        }
    }

    let list_by_id: HashMap<&str, &PartyList> = e.lists.iter().map(|l| (l.id.as_str(), l)).collect();
    if list_by_id.len() != e.lists.len() {
        let mut seen = HashSet::new();
        for l in &e.lists {
            if !seen.insert(l.id.as_str()) {
                push(&mut v, format!("list {}", l.id), "list.duplicate_id", "list id appears more than once".into());
            }
        }
    }

    // How many lists claim each candidate (must end up exactly 1).
    let mut membership: HashMap<&str, usize> = HashMap::new();
    let cand_by_id: HashMap<&str, &Candidate> = e.candidates.iter().map(|c| (c.id.as_str(), c)).collect();
    for l in &e.lists {
        if l.members.is_empty() {
            push(&mut v, format!("list {}", l.id), "list.empty", "list has no members".into());
        }
        if !e.states.contains_key(&l.state) {
            push(&mut v, format!("list {}", l.id), "list.unknown_state", format!("state `{}` is not defined", l.state));
        }
        let mut seen = HashSet::new();
        for m in &l.members {
            if !seen.insert(m.as_str()) {
                push(&mut v, format!("list {}", l.id), "list.duplicate_member", format!("candidate `{m}` listed twice"));
            }
            *membership.entry(m.as_str()).or_insert(0) += 1;
            match cand_by_id.get(m.as_str()) {
                None => push(&mut v, format!("list {}", l.id), "list.unknown_member", format!("candidate `{m}` does not exist")),
                Some(c) if c.state != l.state => push(
                    &mut v,
                    format!("list {}", l.id),
                    "list.member_state",
                    format!("candidate `{m}` is in state `{}` but the list is in `{}`", c.state, l.state),
                ),
                Some(_) => {}
            }
        }
    }

    if cand_by_id.len() != e.candidates.len() {
        let mut seen = HashSet::new();
        for c in &e.candidates {
            if !seen.insert(c.id.as_str()) {
                push(&mut v, format!("candidate {}", c.id), "candidate.duplicate_id", "candidate id appears more than once".into());
            }
        }
    }

    for c in &e.candidates {
        let who = format!("candidate {}", c.id);
        if !e.states.contains_key(&c.state) {
            push(&mut v, who.clone(), "candidate.unknown_state", format!("state `{}` is not defined", c.state));
        }
        match list_by_id.get(c.list.as_str()) {
            None => push(&mut v, who.clone(), "candidate.unknown_list", format!("list `{}` does not exist", c.list)),
            Some(l) if !l.members.contains(&c.id) => push(
                &mut v,
                who.clone(),
                "candidate.list_mismatch",
                format!("candidate names list `{}` but the list does not include them", c.list),
            ),
            Some(_) => {}
        }
        match membership.get(c.id.as_str()).copied().unwrap_or(0) {
            1 => {}
            0 => push(&mut v, who.clone(), "candidate.no_list", "candidate appears on no list".into()),
            n => push(&mut v, who.clone(), "candidate.multiple_lists", format!("candidate appears on {n} lists")),
        }
        check_profile(&mut v, &who, &c.profile, e, nq, true);
    }

    for voter in &e.voters {
        let who = format!("voter {}", voter.id);
        if !e.states.contains_key(&voter.state) {
            push(&mut v, who.clone(), "voter.unknown_state", format!("state `{}` is not defined", voter.state));
        }
        check_profile(&mut v, &who, &voter.profile, e, nq, false);
        if voter.profile.answered_count() == 0 {
            push(&mut v, who.clone(), "voter.no_answers", "voter has no answered questions".into());
        }
    }

    if let Some(shares) = &e.party_vote_shares {
        for (p, &s) in shares {
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                push(&mut v, format!("party {p}"), "shares.range", format!("vote share {s} is outside [0, 1]"));
            }
        }
    }

    v.sort_by(|a, b| (a.entity.as_str(), a.rule).cmp(&(b.entity.as_str(), b.rule)));
    ValidationReport { violations: v }
}

fn check_profile(
    v: &mut Vec<Violation>,
    who: &str,
    p: &Profile,
    e: &Election,
    nq: usize,
    must_be_complete: bool,
) {
    if p.len() != nq {
        push(
            v,
            who.to_string(),
            "profile.length",
            format!("profile has {} entries for {} questions", p.len(), nq),
        );
        return;
    }
    for (t, (a, &w)) in p.answers().iter().zip(p.weights()).enumerate() {
        let q = &e.questions[t];
        match a {
            Some(ans) => {
                if !q.scale.contains(*ans) {
                    push(
                        v,
                        who.to_string(),
                        "profile.answer_scale",
                        format!("answer {ans} to question {} is not on its scale", q.id),
                    );
                }
            }
            None => {
                if must_be_complete {
                    push(
                        v,
                        who.to_string(),
                        "profile.incomplete",
                        format!("question {} is unanswered", q.id),
                    );
                }
                if w != 0.0 {
                    push(
                        v,
                        who.to_string(),
                        "profile.unanswered_weight",
                        format!("unanswered question {} carries weight {w}", q.id),
                    );
                }
            }
        }
        if !e.weight_set.contains(&w) {
            push(
                v,
                who.to_string(),
                "profile.weight_set",
                format!("weight {w} on question {} is not in the weight set", q.id),
            );
        }
    }
}
