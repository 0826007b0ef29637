//! Visibility experiments: each operation perturbs one aspect of an election
//! (candidate answers, voter weights, the questionnaire, the tie-break rule,
//! or the candidate roster), recomputes visibility with the production
//! pipeline, and reports baseline vs. attacked values.
//!
//! All baselines are computed by the same pass code as the stand-alone
//! visibility functions, so a report's baseline column always equals the
//! corresponding `ranking` result bit for bit.

use super::{
    attack_rows, calibrate_answer, nearest_allowed, rel_change, AttackError, AttackReport,
    CalibrationDirection, DropModel,
};
use crate::engine::{self, Indexed, PassConfig, RawRows, Scenario};
use crate::matching::MatchingMethod;
use crate::model::{Candidate, Election, Profile, Question, VisibilityTarget, Voter};
use crate::ranking::{
    candidate_visibility, list_visibility, party_shares_of_pass, party_visibility_global,
    ListScoreMode, MatchSession, TieBreakPolicy,
};
use crate::rng::stream;
use crate::stats;
use rand::Rng;
use std::collections::BTreeMap;

/// Runs one candidate pass under the deployed tie-break rule and folds it
/// into nationwide party slot shares.
fn shares_pass(
    ix: &Indexed,
    method: &MatchingMethod,
    k: Option<u32>,
    scn: &Scenario,
) -> Result<BTreeMap<String, f64>, AttackError> {
    let mut cfg = PassConfig::new(method, VisibilityTarget::Candidate);
    cfg.k_override = k;
    cfg.parallel = true;
    let out = engine::run_pass(ix, &cfg, scn)?;
    Ok(party_shares_of_pass(ix, &out))
}

fn metadata(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn k_label(k: Option<u32>) -> String {
    k.map_or_else(|| "state-seats".into(), |k| k.to_string())
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Shared context for calibration studies: one baseline pass (with cached
/// per-voter rows for methods whose scores are independent across candidates)
/// plus re-evaluation of party shares after calibrating a party's answers.
pub(crate) struct CalibrationLab<'e> {
    election: &'e Election,
    ix: Indexed<'e>,
    method: &'e MatchingMethod,
    k: Option<u32>,
    parallel: bool,
    baseline: BTreeMap<String, f64>,
    raw: Option<RawRows>,
}

impl<'e> CalibrationLab<'e> {
    pub fn new(
        election: &'e Election,
        method: &'e MatchingMethod,
        k: Option<u32>,
        parallel: bool,
    ) -> Result<Self, AttackError> {
        let ix = Indexed::build(election)?;
        let mut cfg = PassConfig::new(method, VisibilityTarget::Candidate);
        cfg.k_override = k;
        cfg.parallel = parallel;
        let (baseline, raw) = if method.needs_precision_context() {
            let out = engine::run_pass(&ix, &cfg, &Scenario::default())?;
            (party_shares_of_pass(&ix, &out), None)
        } else {
            let (out, rows) = engine::run_pass_capture(&ix, &cfg, &Scenario::default())?;
            (party_shares_of_pass(&ix, &out), Some(rows))
        };
        Ok(CalibrationLab {
            election,
            ix,
            method,
            k,
            parallel,
            baseline,
            raw,
        })
    }

    pub fn baseline(&self) -> &BTreeMap<String, f64> {
        &self.baseline
    }

    /// Party shares after replacing every answer of every candidate of
    /// `party` with its calibrated value. Candidates of other parties keep
    /// their cached rows (methods without cross-candidate coupling) or are
    /// re-scored in full (covariance-based methods).
    pub fn calibrated_shares(
        &self,
        party: &str,
        direction: CalibrationDirection,
    ) -> Result<BTreeMap<String, f64>, AttackError> {
        if !self.ix.parties.iter().any(|&p| p == party) {
            return Err(AttackError::UnknownParty(party.to_string()));
        }
        let n_q = self.ix.n_q;
        let mut eff = self.ix.cand_answers.clone();
        let mut changed: Vec<u32> = Vec::new();
        for (g, c) in self.election.candidates.iter().enumerate() {
            if c.party != party {
                continue;
            }
            for (t, q) in self.election.questions.iter().enumerate() {
                eff[g * n_q + t] = calibrate_answer(eff[g * n_q + t], q, direction);
            }
            changed.push(g as u32);
        }
        let scn = Scenario {
            cand_answers: Some(&eff),
            changed_cands: Some(&changed),
            ..Scenario::default()
        };
        let mut cfg = PassConfig::new(self.method, VisibilityTarget::Candidate);
        cfg.k_override = self.k;
        cfg.parallel = self.parallel;
        let out = match &self.raw {
            Some(rows) => engine::run_pass_delta(&self.ix, &cfg, &scn, rows)?,
            None => engine::run_pass(&self.ix, &cfg, &scn)?,
        };
        Ok(party_shares_of_pass(&self.ix, &out))
    }
}

/// Recomputes party visibility after one party calibrates all its answers in
/// `direction`, and reports the relative change for every party.
pub fn calibration_experiment(
    election: &Election,
    party: &str,
    method: &MatchingMethod,
    direction: CalibrationDirection,
    k: Option<u32>,
) -> Result<AttackReport, AttackError> {
    let lab = CalibrationLab::new(election, method, k, true)?;
    let attacked = lab.calibrated_shares(party, direction)?;
    Ok(AttackReport {
        scenario: format!("calibration-{}", direction.as_str()),
        rows: attack_rows(lab.baseline(), &attacked),
        metadata: metadata(&[
            ("party", party.to_string()),
            ("method", method.name().to_string()),
            ("direction", direction.as_str().to_string()),
            ("k", k_label(k)),
        ]),
    })
}

// ---------------------------------------------------------------------------
// Weight scenarios
// ---------------------------------------------------------------------------

/// A total remapping of the platform's weight alphabet, applied to voters'
/// chosen weights in a counterfactual run.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRemap {
    pairs: Vec<(f64, f64)>,
}

impl WeightRemap {
    pub fn new(pairs: Vec<(f64, f64)>) -> Self {
        WeightRemap { pairs }
    }

    /// Maps every weight to itself (a null scenario).
    pub fn identity(weight_set: &[f64]) -> Self {
        WeightRemap {
            pairs: weight_set.iter().map(|&w| (w, w)).collect(),
        }
    }

    /// Stronger emphasis: {0, 1/2, 1, 2} → {0, 1/10, 1, 10}.
    pub fn strong() -> Self {
        WeightRemap {
            pairs: vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0), (2.0, 10.0)],
        }
    }

    /// Weaker emphasis: {0, 1/2, 1, 2} → {0, 9/10, 1, 10/9}.
    pub fn weak() -> Self {
        WeightRemap {
            pairs: vec![(0.0, 0.0), (0.5, 0.9), (1.0, 1.0), (2.0, 10.0 / 9.0)],
        }
    }

    /// The image of `w`, or None when `w` is not in the mapping's domain.
    pub fn apply(&self, w: f64) -> Option<f64> {
        self.pairs.iter().find(|(from, _)| *from == w).map(|p| p.1)
    }

    /// A usable mapping covers the whole weight alphabet (plus the implicit 0
    /// on unanswered questions), preserves 0, and maps into finite
    /// non-negative weights.
    fn validate(&self, weight_set: &[f64]) -> Result<(), AttackError> {
        for &w in weight_set.iter().chain(std::iter::once(&0.0)) {
            match self.apply(w) {
                None => {
                    return Err(AttackError::InvalidWeightMap(format!(
                        "weight {w} has no image"
                    )))
                }
                Some(img) if !(img.is_finite() && img >= 0.0) => {
                    return Err(AttackError::InvalidWeightMap(format!(
                        "weight {w} maps to {img}"
                    )))
                }
                Some(img) if w == 0.0 && img != 0.0 => {
                    return Err(AttackError::InvalidWeightMap(
                        "unanswered questions must keep weight 0".into(),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Re-runs matching with every voter's weights passed through `remap`,
/// restricted to the voters the change can affect: those with at least one
/// answered question whose weight is neither 0 nor the default 1.
pub fn weight_scenario(
    election: &Election,
    method: &MatchingMethod,
    remap: &WeightRemap,
    k: Option<u32>,
) -> Result<AttackReport, AttackError> {
    remap.validate(&election.weight_set)?;
    let ix = Indexed::build(election)?;
    let n_q = ix.n_q;
    let mut subset: Vec<u32> = Vec::new();
    for g in 0..election.voters.len() {
        let (va, vw) = ix.voter_row(g as u32);
        if (0..n_q).any(|t| va[t].is_finite() && vw[t] != 0.0 && vw[t] != 1.0) {
            subset.push(g as u32);
        }
    }
    let mut remapped = ix.voter_weights.clone();
    for &g in &subset {
        for t in 0..n_q {
            let idx = g as usize * n_q + t;
            if ix.voter_answers[idx].is_finite() {
                remapped[idx] = remap.apply(ix.voter_weights[idx]).ok_or_else(|| {
                    AttackError::InvalidWeightMap(format!(
                        "weight {} has no image",
                        ix.voter_weights[idx]
                    ))
                })?;
            }
        }
    }
    let base_scn = Scenario {
        voter_subset: Some(&subset),
        ..Scenario::default()
    };
    let atk_scn = Scenario {
        voter_weights: Some(&remapped),
        voter_subset: Some(&subset),
        ..Scenario::default()
    };
    let baseline = shares_pass(&ix, method, k, &base_scn)?;
    let attacked = shares_pass(&ix, method, k, &atk_scn)?;
    Ok(AttackReport {
        scenario: "weight-remap".into(),
        rows: attack_rows(&baseline, &attacked),
        metadata: metadata(&[
            ("method", method.name().to_string()),
            ("k", k_label(k)),
            ("population", subset.len().to_string()),
            ("voters", election.voters.len().to_string()),
        ]),
    })
}

// ---------------------------------------------------------------------------
// Questionnaire manipulation
// ---------------------------------------------------------------------------

/// `election` with `copies` exact duplicates of question `question` appended
/// to the questionnaire; every profile repeats its original answer and weight.
fn with_duplicated_question(
    election: &Election,
    question: usize,
    copies: u32,
) -> Result<Election, AttackError> {
    let mut out = election.clone();
    let base = &election.questions[question];
    for i in 1..=copies as usize {
        out.questions.push(Question::new(
            format!("{}-copy-{i}", base.id),
            election.questions.len() + i,
            base.scale.clone(),
        ));
    }
    let extend = |profile: &Profile| -> Result<Profile, AttackError> {
        let mut answers = profile.answers().to_vec();
        let mut weights = profile.weights().to_vec();
        for _ in 0..copies {
            answers.push(answers[question]);
            weights.push(weights[question]);
        }
        Ok(Profile::new(answers, weights)?)
    };
    for c in &mut out.candidates {
        c.profile = extend(&c.profile)?;
    }
    for v in &mut out.voters {
        v.profile = extend(&v.profile)?;
    }
    Ok(out)
}

/// Appends exact copies of one question and reports the party-share shift.
/// Under L1 each copy adds the question's weighted term once more; under L2
/// one copy is numerically equivalent to scaling the question's weight by √2.
pub fn duplicate_question_attack(
    election: &Election,
    question: usize,
    copies: u32,
    method: &MatchingMethod,
    k: Option<u32>,
) -> Result<AttackReport, AttackError> {
    if question >= election.n_questions() {
        return Err(AttackError::UnknownQuestion(question));
    }
    if copies < 1 {
        return Err(AttackError::InvalidConfig("copies must be ≥ 1".into()));
    }
    let ix = Indexed::build(election)?;
    let baseline = shares_pass(&ix, method, k, &Scenario::default())?;
    let dup = with_duplicated_question(election, question, copies)?;
    let ix_dup = Indexed::build(&dup)?;
    let attacked = shares_pass(&ix_dup, method, k, &Scenario::default())?;
    Ok(AttackReport {
        scenario: "duplicate-question".into(),
        rows: attack_rows(&baseline, &attacked),
        metadata: metadata(&[
            ("question", election.questions[question].id.clone()),
            ("copies", copies.to_string()),
            ("method", method.name().to_string()),
            ("k", k_label(k)),
        ]),
    })
}

/// One party's outcome under a question-order experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub party: String,
    pub baseline: f64,
    /// Mean attacked share over the trials.
    pub attacked_mean: f64,
    /// Mean relative change, flagged undefined when the baseline is 0.
    pub rel_mean: Option<f64>,
    /// Sample standard deviation of the relative change (0 for one trial).
    pub rel_std: Option<f64>,
}

/// Party shares under position-dependent answer drop, aggregated over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderExperimentReport {
    pub trials: u32,
    /// Number of complete-profile voters the experiment ran on.
    pub population: u64,
    pub rows: Vec<OrderRow>,
}

impl OrderExperimentReport {
    /// CSV serialization: `party,baseline,attacked_mean,rel_mean,rel_std`
    /// (empty cells for flagged undefined changes).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("party,baseline,attacked_mean,rel_mean,rel_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.party,
                r.baseline,
                r.attacked_mean,
                r.rel_mean.map_or(String::new(), |x| x.to_string()),
                r.rel_std.map_or(String::new(), |x| x.to_string()),
            ));
        }
        out
    }
}

/// Presents the questionnaire in `ordering` and drops each voter's answer at
/// presented position p with probability 1 − f(p) (answer removed, weight
/// forced to 0), then measures the party-share shift against the no-drop
/// baseline. Only voters with complete profiles participate, so every drop is
/// attributable to position. Changes are per-party means over `trials`
/// independent drop draws.
pub fn question_order_experiment(
    election: &Election,
    ordering: &[usize],
    drop: &DropModel,
    trials: u32,
    seed: u64,
    method: &MatchingMethod,
    k: Option<u32>,
) -> Result<OrderExperimentReport, AttackError> {
    if trials < 1 {
        return Err(AttackError::InvalidConfig("trials must be ≥ 1".into()));
    }
    let ix = Indexed::build(election)?;
    let n_q = ix.n_q;
    if ordering.len() != n_q {
        return Err(AttackError::InvalidConfig(format!(
            "ordering has {} entries for {} questions",
            ordering.len(),
            n_q
        )));
    }
    let mut seen = vec![false; n_q];
    for &t in ordering {
        if t >= n_q || seen[t] {
            return Err(AttackError::InvalidConfig(
                "ordering must be a permutation of the question indices".into(),
            ));
        }
        seen[t] = true;
    }
    drop.validate(n_q)?;

    let subset: Vec<u32> = (0..election.voters.len() as u32)
        .filter(|&g| ix.voter_row(g).0.iter().all(|a| a.is_finite()))
        .collect();
    if subset.is_empty() {
        return Err(AttackError::NoCompleteVoters);
    }
    let base_scn = Scenario {
        voter_subset: Some(&subset),
        ..Scenario::default()
    };
    let baseline = shares_pass(&ix, method, k, &base_scn)?;

    let rate: Vec<f64> = (1..=n_q).map(|p| drop.answer_rate(p)).collect();
    let mut per_trial: Vec<BTreeMap<String, f64>> = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let mut rng = stream(seed, "qo-trial", &[trial as u64]);
        let mut answers = ix.voter_answers.clone();
        let mut weights = ix.voter_weights.clone();
        for &g in &subset {
            let off = g as usize * n_q;
            for (p, &keep) in rate.iter().enumerate() {
                let u: f64 = rng.random();
                if !(u < keep) {
                    let t = ordering[p];
                    answers[off + t] = f64::NAN;
                    weights[off + t] = 0.0;
                }
            }
        }
        let scn = Scenario {
            voter_answers: Some(&answers),
            voter_weights: Some(&weights),
            voter_subset: Some(&subset),
            ..Scenario::default()
        };
        per_trial.push(shares_pass(&ix, method, k, &scn)?);
    }

    let rows = baseline
        .iter()
        .map(|(party, &b)| {
            let samples: Vec<f64> = per_trial
                .iter()
                .map(|m| m.get(party).copied().unwrap_or(0.0))
                .collect();
            let attacked_mean = stats::mean(&samples).unwrap_or(0.0);
            let (rel_mean, rel_std) = if b > 0.0 {
                let rels: Vec<f64> = samples.iter().map(|&a| (a - b) / b).collect();
                (stats::mean(&rels), Some(stats::sample_std(&rels)))
            } else {
                (None, None)
            };
            OrderRow {
                party: party.clone(),
                baseline: b,
                attacked_mean,
                rel_mean,
                rel_std,
            }
        })
        .collect();
    Ok(OrderExperimentReport {
        trials,
        population: subset.len() as u64,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Tie-break sensitivity
// ---------------------------------------------------------------------------

/// Per-candidate visibility under the deployed alphabetical tie-break versus
/// the proportional-credit reference; the relative change isolates how much
/// of a candidate's visibility exists only by grace of their sort key.
pub fn tiebreak_impact(
    election: &Election,
    method: &MatchingMethod,
    k: Option<u32>,
) -> Result<AttackReport, AttackError> {
    let fair = candidate_visibility(election, method, k, &TieBreakPolicy::ProportionalCredit)?;
    let lex = candidate_visibility(election, method, k, &TieBreakPolicy::LexicographicSortKey)?;
    let to_map = |table: &crate::ranking::VisibilityTable| -> BTreeMap<String, f64> {
        table
            .rows
            .iter()
            .map(|r| (r.entity.clone(), r.visibility))
            .collect()
    };
    Ok(AttackReport {
        scenario: "tiebreak-lexicographic".into(),
        rows: attack_rows(&to_map(&fair), &to_map(&lex)),
        metadata: metadata(&[
            ("method", method.name().to_string()),
            ("k", k_label(k)),
            ("baseline_tiebreak", "proportional-credit".to_string()),
            ("attacked_tiebreak", "lexicographic".to_string()),
        ]),
    })
}

// ---------------------------------------------------------------------------
// Question-subset targeting
// ---------------------------------------------------------------------------

/// One step of the greedy question-subset search.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPick {
    /// 0-based question index added at this step.
    pub question: usize,
    pub question_id: String,
    /// Target-party share when matching is restricted to the subset so far.
    pub visibility: f64,
    /// Relative gain over the full-questionnaire baseline.
    pub rel_gain: Option<f64>,
}

/// Greedy search for the question subset that maximizes one party's
/// visibility when voters only answer (and weight) that subset.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySubsetReport {
    pub party: String,
    /// Target-party share with the full questionnaire in play.
    pub baseline: f64,
    pub picks: Vec<GreedyPick>,
    /// Size of the best prefix (argmax of visibility, earliest on ties).
    pub best_size: usize,
    pub best_visibility: f64,
}

impl GreedySubsetReport {
    /// CSV serialization: `step,question_id,visibility,rel_gain`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,question_id,visibility,rel_gain\n");
        for (i, p) in self.picks.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                p.question_id,
                p.visibility,
                p.rel_gain.map_or(String::new(), |x| x.to_string()),
            ));
        }
        out
    }
}

/// Party share when every voter's answers and weights are cleared outside
/// `mask` (candidates keep their full profiles).
fn restricted_party_share(
    ix: &Indexed,
    method: &MatchingMethod,
    k: Option<u32>,
    mask: &[bool],
    party: &str,
) -> Result<f64, AttackError> {
    let n_q = ix.n_q;
    let mut answers = ix.voter_answers.clone();
    let mut weights = ix.voter_weights.clone();
    for g in 0..answers.len() / n_q.max(1) {
        for (t, &keep) in mask.iter().enumerate() {
            if !keep {
                answers[g * n_q + t] = f64::NAN;
                weights[g * n_q + t] = 0.0;
            }
        }
    }
    let scn = Scenario {
        voter_answers: Some(&answers),
        voter_weights: Some(&weights),
        ..Scenario::default()
    };
    Ok(shares_pass(ix, method, k, &scn)?
        .get(party)
        .copied()
        .unwrap_or(0.0))
}

/// Forward greedy selection: starting from the empty set, repeatedly adds the
/// question whose inclusion maximizes `party`'s share when voters answer only
/// the selected questions (smallest index wins ties). Reports the share after
/// each step and the best prefix. With `max_size` equal to the questionnaire
/// size the final step restores the full questionnaire, so its share equals
/// the baseline exactly.
pub fn greedy_question_subset(
    election: &Election,
    party: &str,
    method: &MatchingMethod,
    k: Option<u32>,
    max_size: usize,
) -> Result<GreedySubsetReport, AttackError> {
    let ix = Indexed::build(election)?;
    if !ix.parties.iter().any(|&p| p == party) {
        return Err(AttackError::UnknownParty(party.to_string()));
    }
    let n_q = ix.n_q;
    if max_size == 0 || max_size > n_q {
        return Err(AttackError::InvalidConfig(format!(
            "subset size must lie in 1..={n_q}"
        )));
    }
    let baseline = shares_pass(&ix, method, k, &Scenario::default())?
        .get(party)
        .copied()
        .unwrap_or(0.0);

    let mut mask = vec![false; n_q];
    let mut picks: Vec<GreedyPick> = Vec::with_capacity(max_size);
    for _ in 0..max_size {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..n_q {
            if mask[t] {
                continue;
            }
            mask[t] = true;
            let vis = restricted_party_share(&ix, method, k, &mask, party)?;
            mask[t] = false;
            if best.is_none_or(|(_, bv)| vis > bv) {
                best = Some((t, vis));
            }
        }
        let (t, vis) = best.expect("max_size ≤ n_q leaves a question to add");
        mask[t] = true;
        picks.push(GreedyPick {
            question: t,
            question_id: election.questions[t].id.clone(),
            visibility: vis,
            rel_gain: rel_change(baseline, vis),
        });
    }
    let (best_idx, best_visibility) = picks
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.visibility))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    Ok(GreedySubsetReport {
        party: party.to_string(),
        baseline,
        picks,
        best_size: best_idx + 1,
        best_visibility,
    })
}

// ---------------------------------------------------------------------------
// Question redundancy
// ---------------------------------------------------------------------------

/// Pairwise absolute Pearson correlations between questions over a voter
/// population (pairwise-complete observations).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n_q: usize,
    values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn n_questions(&self) -> usize {
        self.n_q
    }

    /// |r| for the pair (i, j); None when undefined (fewer than two complete
    /// pairs, or a constant column among them). The diagonal is 1.
    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n_q + j]
    }

    /// CSV serialization of the upper triangle (including the diagonal):
    /// `question_i,question_j,abs_correlation` with empty cells for
    /// undefined entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("question_i,question_j,abs_correlation\n");
        for i in 0..self.n_q {
            for j in i..self.n_q {
                out.push_str(&format!(
                    "{},{},{}\n",
                    i,
                    j,
                    self.at(i, j).map_or(String::new(), |x| x.to_string()),
                ));
            }
        }
        out
    }
}

/// Absolute Pearson correlation between every pair of questions, computed
/// over the voters answering both (pairwise-complete). Redundant question
/// pairs — the precondition for duplicate-question leverage — show up as
/// entries near 1.
pub fn question_correlation_matrix(voters: &[Voter]) -> CorrelationMatrix {
    let n_q = voters.first().map_or(0, |v| v.profile.len());
    let mut values = vec![None; n_q * n_q];
    for i in 0..n_q {
        values[i * n_q + i] = Some(1.0);
        for j in i + 1..n_q {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for v in voters {
                let a = v.profile.answers().get(i).copied().flatten();
                let b = v.profile.answers().get(j).copied().flatten();
                if let (Some(a), Some(b)) = (a, b) {
                    xs.push(a);
                    ys.push(b);
                }
            }
            let r = stats::pearson(&xs, &ys).map(f64::abs);
            values[i * n_q + j] = r;
            values[j * n_q + i] = r;
        }
    }
    CorrelationMatrix { n_q, values }
}

// ---------------------------------------------------------------------------
// Top-match quality
// ---------------------------------------------------------------------------

/// Histogram of each voter's best-match similarity score, overall and by the
/// party of the top candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TopMatchDistribution {
    pub bins: usize,
    /// Counts per bin; bin b covers [100·b/bins, 100·(b+1)/bins), with the
    /// last bin closed at 100.
    pub overall: Vec<u64>,
    pub by_party: BTreeMap<String, Vec<u64>>,
    /// Voters with a usable top match.
    pub counted: u64,
    /// Voters without one (no candidates in scope or a flagged top entry).
    pub flagged: u64,
}

impl TopMatchDistribution {
    /// CSV serialization: `group,bin_low,bin_high,count` with group `all`
    /// first, then one group per party.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,bin_low,bin_high,count\n");
        let width = 100.0 / self.bins as f64;
        let emit = |group: &str, counts: &[u64], out: &mut String| {
            for (b, &c) in counts.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    group,
                    b as f64 * width,
                    (b + 1) as f64 * width,
                    c
                ));
            }
        };
        emit("all", &self.overall, &mut out);
        for (party, counts) in &self.by_party {
            emit(party, counts, &mut out);
        }
        out
    }
}

/// Ranks every voter's candidates and histograms the top-1 similarity score
/// into `bins` equal-width bins over [0, 100], overall and grouped by the
/// top candidate's party. Voters whose best entry is flagged (or who see no
/// candidates at all) are counted separately, never binned.
pub fn top_match_distribution(
    election: &Election,
    method: &MatchingMethod,
    bins: usize,
) -> Result<TopMatchDistribution, AttackError> {
    if bins == 0 {
        return Err(AttackError::InvalidConfig("bins must be ≥ 1".into()));
    }
    let session = MatchSession::new(election, method.clone())?;
    let party_of: BTreeMap<&str, &str> = election
        .candidates
        .iter()
        .map(|c| (c.id.as_str(), c.party.as_str()))
        .collect();
    let mut overall = vec![0u64; bins];
    let mut by_party: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut counted = 0u64;
    let mut flagged = 0u64;
    for voter in &election.voters {
        let ranking = session.rank_candidates(voter, &TieBreakPolicy::LexicographicSortKey)?;
        match ranking.entries.first() {
            Some(top) if !top.flagged && top.score.is_some() => {
                let s = top.score.expect("checked above");
                let b = ((s * bins as f64 / 100.0).floor() as usize).min(bins - 1);
                overall[b] += 1;
                let party = party_of
                    .get(top.entity.as_str())
                    .expect("ranked entity is a candidate id");
                by_party
                    .entry(party.to_string())
                    .or_insert_with(|| vec![0; bins])[b] += 1;
                counted += 1;
            }
            _ => flagged += 1,
        }
    }
    Ok(TopMatchDistribution {
        bins,
        overall,
        by_party,
        counted,
        flagged,
    })
}

// ---------------------------------------------------------------------------
// Candidate-count leverage
// ---------------------------------------------------------------------------

/// One party's nomination intensity vs. its visibility return.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversificationRow {
    pub party: String,
    pub candidates: usize,
    /// Vote share as a fraction in [0, 1].
    pub vote_share: f64,
    /// Candidates fielded per percentage point of vote share.
    pub candidates_per_point: f64,
    /// Nationwide share of top-k slots.
    pub visibility: f64,
    /// Visibility relative to the party's share of the recorded vote
    /// (> 1 means overrepresented in recommendations).
    pub ratio: f64,
}

/// Observational analysis of candidate-count leverage across parties.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversificationAnalysis {
    pub rows: Vec<DiversificationRow>,
    /// Pearson correlation between candidates-per-point and the
    /// visibility/vote-share ratio; None when undefined (fewer than two
    /// parties or a constant column).
    pub correlation: Option<f64>,
}

impl DiversificationAnalysis {
    /// CSV serialization:
    /// `party,candidates,vote_share,candidates_per_point,visibility,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("party,candidates,vote_share,candidates_per_point,visibility,ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.party,
                r.candidates,
                r.vote_share,
                r.candidates_per_point,
                r.visibility,
                r.ratio
            ));
        }
        out
    }
}

/// For every party, relates how many candidates it fields per point of vote
/// share to how overrepresented it is in top-k slots relative to that share.
/// Requires recorded vote shares covering every fielding party.
pub fn diversification_analysis(
    election: &Election,
    method: &MatchingMethod,
    k: Option<u32>,
) -> Result<DiversificationAnalysis, AttackError> {
    let shares = election
        .party_vote_shares
        .as_ref()
        .ok_or(AttackError::MissingVoteShares)?;
    let visibility =
        party_visibility_global(election, method, k, &TieBreakPolicy::LexicographicSortKey)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &election.candidates {
        *counts.entry(c.party.as_str()).or_insert(0) += 1;
    }
    let share_total: f64 = shares.values().sum();
    let mut rows = Vec::with_capacity(counts.len());
    for (party, n) in counts {
        let share = shares
            .get(party)
            .copied()
            .filter(|s| *s > 0.0)
            .ok_or(AttackError::MissingVoteShares)?;
        let vis = visibility.get(party).copied().unwrap_or(0.0);
        rows.push(DiversificationRow {
            party: party.to_string(),
            candidates: n,
            vote_share: share,
            candidates_per_point: n as f64 / (share * 100.0),
            visibility: vis,
            ratio: vis / (share / share_total),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.candidates_per_point).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    Ok(DiversificationAnalysis {
        correlation: stats::pearson(&xs, &ys),
        rows,
    })
}

/// The clone candidates `diversification_simulation` would add: clone i joins
/// the party's states round-robin and answers the per-question mean of the
/// party's candidates in that state (re-quantized to the scale), displaced by
/// a uniform ±`noise_scale` grid steps per question.
fn clone_roster(
    election: &Election,
    party: &str,
    n_clones: u32,
    noise_scale: u32,
    seed: u64,
) -> Result<Vec<Candidate>, AttackError> {
    let mut states: Vec<&str> = election
        .candidates
        .iter()
        .filter(|c| c.party == party)
        .map(|c| c.state.as_str())
        .collect();
    states.sort_unstable();
    states.dedup();
    if states.is_empty() {
        return Err(AttackError::UnknownParty(party.to_string()));
    }
    let n_q = election.n_questions();
    let mut mean_by_state: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &state in &states {
        let members: Vec<&Candidate> = election
            .candidates
            .iter()
            .filter(|c| c.party == party && c.state == state)
            .collect();
        let mut means = Vec::with_capacity(n_q);
        for (t, q) in election.questions.iter().enumerate() {
            let vals: Vec<f64> = members.iter().filter_map(|c| c.profile.answer(t)).collect();
            means.push(stats::mean(&vals).unwrap_or_else(|| q.scale.neutral()));
        }
        mean_by_state.insert(state, means);
    }
    let mut rng = stream(seed, "diversify-clones", &[]);
    let mut clones = Vec::with_capacity(n_clones as usize);
    for i in 0..n_clones as usize {
        let state = states[i % states.len()];
        let means = &mean_by_state[state];
        let mut answers = Vec::with_capacity(n_q);
        for (t, q) in election.questions.iter().enumerate() {
            let allowed = q.scale.allowed();
            let center = nearest_allowed(means[t], allowed);
            let pos = allowed
                .iter()
                .position(|&a| a == center)
                .expect("nearest_allowed returns a grid value") as i64;
            let step: i64 = rng.random_range(-(noise_scale as i64)..=noise_scale as i64);
            let idx = (pos + step).clamp(0, allowed.len() as i64 - 1) as usize;
            answers.push(allowed[idx]);
        }
        let id = format!("{party}-clone-{}", i + 1);
        clones.push(Candidate {
            sort_key: id.clone(),
            list: id.clone(),
            id,
            state: state.to_string(),
            party: party.to_string(),
            profile: Profile::complete(answers),
        });
    }
    Ok(clones)
}

/// Simulates one party flooding the field with near-duplicate candidates:
/// clones of the party's per-state mean profile (±`noise_scale` grid steps of
/// uniform noise per question) are added round-robin across the party's
/// states, and party visibility is recomputed.
pub fn diversification_simulation(
    election: &Election,
    party: &str,
    n_clones: u32,
    noise_scale: u32,
    seed: u64,
    method: &MatchingMethod,
    k: Option<u32>,
) -> Result<AttackReport, AttackError> {
    let tiebreak = TieBreakPolicy::LexicographicSortKey;
    let baseline = party_visibility_global(election, method, k, &tiebreak)?;
    let clones = clone_roster(election, party, n_clones, noise_scale, seed)?;
    let mut attacked_election = election.clone();
    attacked_election.candidates.extend(clones);
    let attacked = party_visibility_global(&attacked_election, method, k, &tiebreak)?;
    Ok(AttackReport {
        scenario: "diversification-clones".into(),
        rows: attack_rows(&baseline, &attacked),
        metadata: metadata(&[
            ("party", party.to_string()),
            ("clones", n_clones.to_string()),
            ("noise_scale", noise_scale.to_string()),
            ("seed", seed.to_string()),
            ("method", method.name().to_string()),
            ("k", k_label(k)),
        ]),
    })
}

// ---------------------------------------------------------------------------
// List centralization
// ---------------------------------------------------------------------------

/// Mean over questions of the population standard deviation of the list
/// members' answers — 0 for perfectly centralized (identical) lists. Requires
/// complete member profiles.
pub fn list_spread(list_id: &str, election: &Election) -> Result<f64, AttackError> {
    let list = election
        .lists
        .iter()
        .find(|l| l.id == list_id)
        .ok_or_else(|| AttackError::UnknownList(list_id.to_string()))?;
    let n_q = election.n_questions();
    if list.members.is_empty() || n_q == 0 {
        return Ok(0.0);
    }
    let members: Vec<&Candidate> = list
        .members
        .iter()
        .map(|id| election.candidate(id).map_err(AttackError::from))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for t in 0..n_q {
        let vals: Vec<f64> = members
            .iter()
            .map(|c| c.profile.answer(t).ok_or(AttackError::IncompleteProfile))
            .collect::<Result<_, _>>()?;
        total += stats::population_std(&vals).expect("list checked non-empty");
    }
    Ok(total / n_q as f64)
}

/// One list's spread and visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ListCentralizationRow {
    pub list: String,
    pub state: String,
    pub spread: f64,
    pub visibility: f64,
}

/// Spread vs. visibility across all lists, with their correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct ListCentralization {
    pub rows: Vec<ListCentralizationRow>,
    /// Signed Pearson correlation between spread and visibility (negative
    /// when centralized lists crowd out diverse ones); None when undefined.
    pub correlation: Option<f64>,
}

impl ListCentralization {
    /// CSV serialization: `list,state,spread,visibility`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("list,state,spread,visibility\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.list, r.state, r.spread, r.visibility
            ));
        }
        out
    }
}

/// Measures whether ideologically centralized lists (low member spread) win
/// more top-1 list recommendations under mean-of-scores list matching.
pub fn list_centralization_analysis(
    election: &Election,
    method: &MatchingMethod,
) -> Result<ListCentralization, AttackError> {
    let table = list_visibility(
        election,
        method,
        None,
        &TieBreakPolicy::LexicographicSortKey,
        ListScoreMode::MeanOfScores,
    )?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        rows.push(ListCentralizationRow {
            list: r.entity.clone(),
            state: r.state.clone(),
            spread: list_spread(&r.entity, election)?,
            visibility: r.visibility,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.spread).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.visibility).collect();
    Ok(ListCentralization {
        correlation: stats::pearson(&xs, &ys),
        rows,
    })
}
