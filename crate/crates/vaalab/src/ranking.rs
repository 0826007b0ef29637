//! Rankings and k-visibility for candidates, parties, and lists, plus the
//! mitigation operations (deal-breaker weighting, party caps, relative score
//! normalization, mean-vector list scoring).
//!
//! All per-voter rankings are deterministic: exact-distance ties fall back to
//! the policy order (candidate sort key, a seeded per-voter random draw, or —
//! for visibility accounting only — fractional slot credit).

use crate::engine::{self, Collect, Indexed, PassConfig, Scenario, StatePrep};
use crate::matching::{
    score_scale, similarity_score, MatchError, MatchingMethod, ScoreScale,
};
use crate::model::{Election, ModelError, Profile, VisibilityTarget, Voter};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// How exact-distance ties are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TieBreakPolicy {
    /// Deterministic order by candidate sort key (then id). The default, and
    /// the behavior of the deployed platform.
    LexicographicSortKey,
    /// A per-voter pseudorandom order derived from (seed, voter id); stable
    /// across runs and independent between voters.
    SeededFairRandom { seed: u64 },
    /// Ties across the top-k boundary share the remaining slots equally.
    /// Only meaningful for visibility accounting — it does not define a
    /// single ranking.
    ProportionalCredit,
}

impl Default for TieBreakPolicy {
    fn default() -> Self {
        TieBreakPolicy::LexicographicSortKey
    }
}

/// How a list is scored from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListScoreMode {
    /// Mean of the members' similarity scores (the deployed behavior).
    #[default]
    MeanOfScores,
    /// Similarity between the voter and the per-question mean member answer
    /// vector (a spread-robust mitigation).
    ScoreOfMean,
}

impl fmt::Display for ListScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ListScoreMode::MeanOfScores => "mean_of_scores",
            ListScoreMode::ScoreOfMean => "score_of_mean",
        })
    }
}

impl FromStr for ListScoreMode {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self, RankError> {
        match s {
            "mean_of_scores" | "mean-of-scores" => Ok(ListScoreMode::MeanOfScores),
            "score_of_mean" | "score-of-mean" => Ok(ListScoreMode::ScoreOfMean),
            other => Err(RankError::UnknownListMode(other.to_string())),
        }
    }
}

/// Ranking-side mitigation toggles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    /// Treat infinite-weight questions as hard filters ranked by
    /// disagreement count.
    pub deal_breaker: bool,
    /// Cap each party's share of the top-k by voter–party-mean similarity.
    pub party_cap: bool,
    /// Rescale displayed scores so the top candidate shows 100.
    pub relative_normalization: bool,
    /// Score lists against their mean member answer vector.
    pub mean_vector_list_score: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("proportional credit does not define a single ranking; use a ranking tie policy")]
    InvalidTieBreak,
    #[error("state `{0}` has no candidates")]
    NoCandidates(String),
    #[error("state `{0}` has no lists")]
    NoLists(String),
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("deal-breaker weights must be 0, 1, or infinite; found {0}")]
    InvalidDealBreakerWeight(f64),
    #[error("unknown list score mode `{0}`")]
    UnknownListMode(String),
}

/// One ranked entity. `distance` is the value the ranking compared (after
/// the neutral-profile fallback); `score` is the 0–100 display score. Both
/// are `None` for flagged entities (no participating questions), which rank
/// after every scored entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub entity: String,
    pub distance: Option<f64>,
    pub score: Option<f64>,
    pub flagged: bool,
}

/// A voter's complete ranking of one entity kind, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub voter: String,
    pub k: u32,
    pub entries: Vec<RankedEntry>,
}

impl Ranking {
    /// Entity ids of the top-k prefix.
    pub fn topk(&self) -> Vec<&str> {
        self.entries
            .iter()
            .take(self.k as usize)
            .map(|e| e.entity.as_str())
            .collect()
    }
}

/// Per-(entity, state) k-visibility fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityRow {
    pub entity: String,
    pub state: String,
    pub k: u32,
    pub visibility: f64,
}

/// Visibility fractions for one entity kind across all states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityTable {
    pub kind: VisibilityTarget,
    pub rows: Vec<VisibilityRow>,
}

impl VisibilityTable {
    pub fn value(&self, state: &str, entity: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.state == state && r.entity == entity)
            .map(|r| r.visibility)
    }

    /// Sum of visibilities within one state (k for candidates when the state
    /// fields at least k of them, 1 for parties and for k=1 lists).
    pub fn state_sum(&self, state: &str) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.state == state)
            .map(|r| r.visibility)
            .sum()
    }

    /// CSV serialization: `entity_id,state,kind,k,visibility`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("entity_id,state,kind,k,visibility\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.entity,
                r.state,
                self.kind.as_str(),
                r.k,
                r.visibility
            ));
        }
        out
    }
}

/// A prepared matcher for one (election, method) pair: builds the indexed
/// matrices, per-state method tables and covariance state once, then ranks
/// any number of voters cheaply.
pub struct MatchSession<'e> {
    method: MatchingMethod,
    ix: Indexed<'e>,
    cand_preps: Vec<StatePrep>,
    list_preps: Vec<StatePrep>,
}

impl<'e> MatchSession<'e> {
    pub fn new(election: &'e Election, method: MatchingMethod) -> Result<Self, RankError> {
        let ix = Indexed::build(election)?;
        let pooled = engine::pooled_precision(&ix, &method, &ix.cand_answers)?;
        let mut cand_preps = Vec::with_capacity(ix.states.len());
        let mut list_preps = Vec::with_capacity(ix.states.len());
        for st in &ix.states {
            cand_preps.push(StatePrep::build_candidates(
                &ix,
                &method,
                &ix.cand_answers,
                st,
                pooled.as_ref(),
            )?);
            list_preps.push(StatePrep::build_pseudo_lists(
                &ix,
                &method,
                &ix.cand_answers,
                st,
                pooled.as_ref(),
            )?);
        }
        Ok(MatchSession {
            method,
            ix,
            cand_preps,
            list_preps,
        })
    }

    pub fn election(&self) -> &'e Election {
        self.ix.election
    }

    pub fn method(&self) -> &MatchingMethod {
        &self.method
    }

    fn state_of(&self, voter: &Voter) -> Result<usize, RankError> {
        self.ix
            .state_index(&voter.state)
            .ok_or_else(|| RankError::Model(ModelError::UnknownState(voter.state.clone())))
    }

    /// Dense answer/weight rows for an arbitrary voter profile.
    fn voter_rows(&self, profile: &Profile) -> Result<(Vec<f64>, Vec<f64>), RankError> {
        if profile.len() != self.ix.n_q {
            return Err(RankError::Model(ModelError::ProfileLengthMismatch {
                answers: profile.len(),
                weights: self.ix.n_q,
            }));
        }
        let va: Vec<f64> = profile
            .answers()
            .iter()
            .map(|a| a.unwrap_or(f64::NAN))
            .collect();
        let vw = profile.weights().to_vec();
        Ok((va, vw))
    }

    /// The display-score map for this voter, or `None` when the voter has no
    /// participating questions (every entity is flagged anyway).
    fn scale_for(&self, profile: &Profile, si: usize) -> Result<Option<ScoreScale>, RankError> {
        match score_scale(
            &self.method,
            profile,
            &self.ix.election.questions,
            self.cand_preps[si].precision(),
        ) {
            Ok(s) => Ok(Some(s)),
            Err(MatchError::EmptyOverlap) => Ok(None),
            Err(e) => Err(RankError::Match(e)),
        }
    }

    /// Ranks the candidates of the voter's state, best first.
    pub fn rank_candidates(
        &self,
        voter: &Voter,
        tiebreak: &TieBreakPolicy,
    ) -> Result<Ranking, RankError> {
        if matches!(tiebreak, TieBreakPolicy::ProportionalCredit) {
            return Err(RankError::InvalidTieBreak);
        }
        let si = self.state_of(voter)?;
        let st = &self.ix.states[si];
        if st.cands.is_empty() {
            return Err(RankError::NoCandidates(voter.state.clone()));
        }
        let (va, vw) = self.voter_rows(&voter.profile)?;
        let eval = engine::StateEval::new(
            &self.ix,
            &self.method,
            &self.ix.cand_answers,
            st,
            &self.cand_preps[si],
        );
        let mut scratch = engine::Scratch::default();
        eval.raw_row(&va, &vw, &mut scratch);
        engine::resolve_row(&mut scratch.row);
        let rands = self.tie_rands(tiebreak, "rank-cand", &voter.id, st.cands.len());
        let order = engine::full_order(&scratch.row, &st.cand_rank, rands.as_deref());
        let scale = self.scale_for(&voter.profile, si)?;
        let entries = order
            .iter()
            .map(|&p| {
                let d = scratch.row[p as usize];
                let cand = &self.ix.election.candidates[st.cands[p as usize] as usize];
                entry(cand.id.clone(), d, scale.as_ref())
            })
            .collect();
        Ok(Ranking {
            voter: voter.id.clone(),
            k: st.seats,
            entries,
        })
    }

    /// Ranks the lists of the voter's state, best first. Ties are broken by
    /// list id.
    pub fn rank_lists(&self, voter: &Voter, mode: ListScoreMode) -> Result<Ranking, RankError> {
        let si = self.state_of(voter)?;
        let st = &self.ix.states[si];
        if st.lists.is_empty() {
            return Err(RankError::NoLists(voter.state.clone()));
        }
        let (va, vw) = self.voter_rows(&voter.profile)?;
        let mut scratch = engine::Scratch::default();
        let listrow: Vec<f64> = match mode {
            ListScoreMode::MeanOfScores => {
                if st.cands.is_empty() {
                    return Err(RankError::NoCandidates(voter.state.clone()));
                }
                let eval = engine::StateEval::new(
                    &self.ix,
                    &self.method,
                    &self.ix.cand_answers,
                    st,
                    &self.cand_preps[si],
                );
                eval.raw_row(&va, &vw, &mut scratch);
                engine::resolve_row(&mut scratch.row);
                st.list_members
                    .iter()
                    .map(|members| {
                        members.iter().map(|&m| scratch.row[m as usize]).sum::<f64>()
                            / members.len() as f64
                    })
                    .collect()
            }
            ListScoreMode::ScoreOfMean => {
                let eval = engine::StateEval::new(
                    &self.ix,
                    &self.method,
                    &self.ix.cand_answers,
                    st,
                    &self.list_preps[si],
                );
                eval.raw_row(&va, &vw, &mut scratch);
                engine::resolve_row(&mut scratch.row);
                scratch.row.clone()
            }
        };
        let order = engine::full_order(&listrow, &st.list_rank, None);
        let scale = self.scale_for(&voter.profile, si)?;
        let entries = order
            .iter()
            .map(|&p| {
                let d = listrow[p as usize];
                let list = &self.ix.election.lists[st.lists[p as usize] as usize];
                entry(list.id.clone(), d, scale.as_ref())
            })
            .collect();
        Ok(Ranking {
            voter: voter.id.clone(),
            k: 1,
            entries,
        })
    }

    /// Ranks candidates treating infinite-weight questions as deal-breakers:
    /// primary key is the count of exact disagreements on those questions,
    /// secondary key the base distance with infinite weights lowered to 1.
    pub fn deal_breaker_rank(&self, voter: &Voter) -> Result<Ranking, RankError> {
        for &w in voter.profile.weights() {
            if !(w == 0.0 || w == 1.0 || w == f64::INFINITY) {
                return Err(RankError::InvalidDealBreakerWeight(w));
            }
        }
        let si = self.state_of(voter)?;
        let st = &self.ix.states[si];
        if st.cands.is_empty() {
            return Err(RankError::NoCandidates(voter.state.clone()));
        }
        // Soften ∞ → 1 for the base distance.
        let softened = Profile::new(
            voter.profile.answers().to_vec(),
            voter
                .profile
                .weights()
                .iter()
                .map(|&w| if w == f64::INFINITY { 1.0 } else { w })
                .collect(),
        )
        .map_err(RankError::Model)?;
        let (va, vw) = self.voter_rows(&softened)?;
        let eval = engine::StateEval::new(
            &self.ix,
            &self.method,
            &self.ix.cand_answers,
            st,
            &self.cand_preps[si],
        );
        let mut scratch = engine::Scratch::default();
        eval.raw_row(&va, &vw, &mut scratch);
        engine::resolve_row(&mut scratch.row);

        // Exact-disagreement counts on the deal-breaker questions.
        let hard: Vec<usize> = voter
            .profile
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w == f64::INFINITY)
            .map(|(t, _)| t)
            .collect();
        let n_q = self.ix.n_q;
        let breaks: Vec<u32> = st
            .cands
            .iter()
            .map(|&g| {
                hard.iter()
                    .filter(|&&t| {
                        let v = voter.profile.answer(t).expect("∞ weight implies answered");
                        self.ix.cand_answers[g as usize * n_q + t] != v
                    })
                    .count() as u32
            })
            .collect();

        let mut order: Vec<u32> = (0..st.cands.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            let (a, b) = (a as usize, b as usize);
            breaks[a]
                .cmp(&breaks[b])
                .then_with(|| {
                    scratch.row[a]
                        .partial_cmp(&scratch.row[b])
                        .expect("resolved rows have no NaN")
                })
                .then_with(|| st.cand_rank[a].cmp(&st.cand_rank[b]))
        });
        let scale = self.scale_for(&softened, si)?;
        let entries = order
            .iter()
            .map(|&p| {
                let d = scratch.row[p as usize];
                let cand = &self.ix.election.candidates[st.cands[p as usize] as usize];
                entry(cand.id.clone(), d, scale.as_ref())
            })
            .collect();
        Ok(Ranking {
            voter: voter.id.clone(),
            k: st.seats,
            entries,
        })
    }

    fn tie_rands(
        &self,
        tiebreak: &TieBreakPolicy,
        domain: &str,
        voter_id: &str,
        n: usize,
    ) -> Option<Vec<u64>> {
        match tiebreak {
            TieBreakPolicy::SeededFairRandom { seed } => {
                let mut out = Vec::new();
                engine::draw_rands(*seed, domain, voter_id, n, &mut out);
                Some(out)
            }
            _ => None,
        }
    }
}

fn entry(entity: String, d: f64, scale: Option<&ScoreScale>) -> RankedEntry {
    if d.is_infinite() {
        RankedEntry {
            entity,
            distance: None,
            score: None,
            flagged: true,
        }
    } else {
        RankedEntry {
            entity,
            distance: Some(d),
            score: scale.map(|s| s.score(d)),
            flagged: false,
        }
    }
}

/// Ranks the candidates of the voter's state under `method`, best first.
/// Convenience wrapper that prepares a [`MatchSession`] per call; use the
/// session directly to rank many voters.
pub fn rank_candidates(
    voter: &Voter,
    election: &Election,
    method: &MatchingMethod,
    tiebreak: &TieBreakPolicy,
) -> Result<Ranking, RankError> {
    MatchSession::new(election, method.clone())?.rank_candidates(voter, tiebreak)
}

/// Ranks the lists of the voter's state under `method`, best first.
pub fn rank_lists(
    voter: &Voter,
    election: &Election,
    method: &MatchingMethod,
    mode: ListScoreMode,
) -> Result<Ranking, RankError> {
    MatchSession::new(election, method.clone())?.rank_lists(voter, mode)
}

/// Deal-breaker ranking (see [`MatchSession::deal_breaker_rank`]).
pub fn deal_breaker_rank(
    voter: &Voter,
    election: &Election,
    method: &MatchingMethod,
) -> Result<Ranking, RankError> {
    MatchSession::new(election, method.clone())?.deal_breaker_rank(voter)
}

/// Re-selects the top-k of `ranking` so party representation follows the
/// voter's similarity to each party's per-question mean answer vector
/// (largest-remainder apportionment; slots a party cannot fill cascade to
/// the next-largest remainder). A no-op when k covers the whole field.
pub fn cap_party_topk(
    ranking: &Ranking,
    election: &Election,
    k: u32,
) -> Result<Ranking, RankError> {
    let voter = election.voter(&ranking.voter)?;
    let n = ranking.entries.len();
    if n == 0 {
        return Err(RankError::EmptyRanking);
    }
    if k as usize >= n {
        let mut out = ranking.clone();
        out.k = k;
        return Ok(out);
    }

    // Party of every ranked entry, plus per-party mean answer vectors.
    let mut parties: Vec<&str> = Vec::new();
    let mut entry_party: Vec<usize> = Vec::with_capacity(n);
    for e in &ranking.entries {
        let cand = election.candidate(&e.entity)?;
        let p = match parties.iter().position(|&p| p == cand.party) {
            Some(p) => p,
            None => {
                parties.push(&cand.party);
                parties.len() - 1
            }
        };
        entry_party.push(p);
    }
    if parties.len() == 1 {
        let mut out = ranking.clone();
        out.k = k;
        return Ok(out);
    }
    let n_q = election.n_questions();
    let mut sums = vec![vec![0.0f64; n_q]; parties.len()];
    let mut counts = vec![0usize; parties.len()];
    for (e, &p) in ranking.entries.iter().zip(&entry_party) {
        let cand = election.candidate(&e.entity)?;
        for (t, a) in cand.profile.answers().iter().enumerate() {
            sums[p][t] += a.expect("candidates answer everything");
        }
        counts[p] += 1;
    }
    let sims: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let mean = Profile::complete(s.iter().map(|x| x / c as f64).collect());
            match similarity_score(&voter.profile, &mean) {
                Ok(v) => v,
                Err(_) => 0.0,
            }
        })
        .collect();

    // Largest-remainder apportionment with per-party capacity, deterministic
    // tie order by party name.
    let total: f64 = sims.iter().sum();
    let quotas: Vec<f64> = if total > 0.0 {
        sims.iter().map(|s| k as f64 * s / total).collect()
    } else {
        vec![k as f64 / parties.len() as f64; parties.len()]
    };
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(&counts)
        .map(|(q, &cap)| (q.floor() as usize).min(cap))
        .collect();
    let mut left = k as usize - alloc.iter().sum::<usize>();
    while left > 0 {
        let next = (0..parties.len())
            .filter(|&p| alloc[p] < counts[p])
            .max_by(|&a, &b| {
                let ra = quotas[a] - alloc[a] as f64;
                let rb = quotas[b] - alloc[b] as f64;
                ra.partial_cmp(&rb)
                    .expect("finite quotas")
                    .then_with(|| parties[b].cmp(parties[a]))
            })
            .expect("k < field size, so some party has spare capacity");
        alloc[next] += 1;
        left -= 1;
    }

    // Fill each party's slots with its best-ranked entries.
    let mut taken = vec![false; n];
    let mut used = vec![0usize; parties.len()];
    for (i, &p) in entry_party.iter().enumerate() {
        if used[p] < alloc[p] {
            taken[i] = true;
            used[p] += 1;
        }
    }
    let mut entries: Vec<RankedEntry> = Vec::with_capacity(n);
    for (i, e) in ranking.entries.iter().enumerate() {
        if taken[i] {
            entries.push(e.clone());
        }
    }
    for (i, e) in ranking.entries.iter().enumerate() {
        if !taken[i] {
            entries.push(e.clone());
        }
    }
    Ok(Ranking {
        voter: ranking.voter.clone(),
        k,
        entries,
    })
}

/// Rescales scores so the best one displays as 100 (order unchanged). If
/// every score is 0, all become 100; flagged entries keep no score.
pub fn relative_score_normalization(ranking: &Ranking) -> Result<Ranking, RankError> {
    if ranking.entries.is_empty() {
        return Err(RankError::EmptyRanking);
    }
    let top = ranking.entries.iter().filter_map(|e| e.score).fold(
        f64::NEG_INFINITY,
        f64::max,
    );
    let mut out = ranking.clone();
    if top == f64::NEG_INFINITY {
        return Ok(out);
    }
    for e in &mut out.entries {
        if let Some(s) = e.score {
            e.score = Some(if top == 0.0 { 100.0 } else { s * 100.0 / top });
        }
    }
    Ok(out)
}

/// Runs one visibility pass and shapes it into a table.
fn visibility_pass_table(
    election: &Election,
    method: &MatchingMethod,
    target: VisibilityTarget,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
    mode: ListScoreMode,
    parallel: bool,
) -> Result<VisibilityTable, RankError> {
    let ix = Indexed::build(election)?;
    let mut cfg = PassConfig::new(
        method,
        match target {
            VisibilityTarget::Party => VisibilityTarget::Candidate,
            t => t,
        },
    );
    cfg.k_override = k_override;
    cfg.tiebreak = *tiebreak;
    cfg.list_mode = mode;
    cfg.parallel = parallel;
    cfg.collect = Collect::Nothing;
    let out = engine::run_pass(&ix, &cfg, &Scenario::default())?;

    let mut rows = Vec::new();
    for (sp, st) in out.states.iter().zip(&ix.states) {
        match target {
            VisibilityTarget::Candidate => {
                for (pos, &g) in st.cands.iter().enumerate() {
                    let v = if sp.voters_counted == 0 {
                        0.0
                    } else {
                        sp.credit[pos] / sp.voters_counted as f64
                    };
                    rows.push(VisibilityRow {
                        entity: ix.election.candidates[g as usize].id.clone(),
                        state: st.id.to_string(),
                        k: sp.k,
                        visibility: v,
                    });
                }
            }
            VisibilityTarget::Party => {
                // Fraction of filled top-k slots held by each party's
                // candidates; the filled-slot denominator keeps one-party
                // or undersized states summing to 1.
                let total: f64 = sp.credit.iter().sum();
                let mut by_party: BTreeMap<&str, f64> = BTreeMap::new();
                for (pos, &g) in st.cands.iter().enumerate() {
                    *by_party
                        .entry(ix.parties[ix.cand_party[g as usize] as usize])
                        .or_insert(0.0) += sp.credit[pos];
                }
                for (party, credit) in by_party {
                    let v = if total > 0.0 { credit / total } else { 0.0 };
                    rows.push(VisibilityRow {
                        entity: party.to_string(),
                        state: st.id.to_string(),
                        k: sp.k,
                        visibility: v,
                    });
                }
            }
            VisibilityTarget::List => {
                for (pos, &li) in st.lists.iter().enumerate() {
                    let v = if sp.voters_counted == 0 {
                        0.0
                    } else {
                        sp.credit[pos] / sp.voters_counted as f64
                    };
                    rows.push(VisibilityRow {
                        entity: ix.election.lists[li as usize].id.clone(),
                        state: st.id.to_string(),
                        k: sp.k,
                        visibility: v,
                    });
                }
            }
        }
    }
    Ok(VisibilityTable { kind: target, rows })
}

/// Fraction of same-state voters whose top-k contains each candidate.
pub fn candidate_visibility(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
) -> Result<VisibilityTable, RankError> {
    candidate_visibility_mode(election, method, k_override, tiebreak, true)
}

/// [`candidate_visibility`] with an explicit execution mode (serial or
/// work-stealing); both modes produce bit-identical tables.
pub(crate) fn candidate_visibility_mode(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
    parallel: bool,
) -> Result<VisibilityTable, RankError> {
    visibility_pass_table(
        election,
        method,
        VisibilityTarget::Candidate,
        k_override,
        tiebreak,
        ListScoreMode::MeanOfScores,
        parallel,
    )
}

/// Fraction of each state's filled top-k slots occupied by each party's
/// candidates.
pub fn party_visibility(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
) -> Result<VisibilityTable, RankError> {
    visibility_pass_table(
        election,
        method,
        VisibilityTarget::Party,
        k_override,
        tiebreak,
        ListScoreMode::MeanOfScores,
        true,
    )
}

/// Fraction of same-state voters whose top-k (default k=1) lists contain
/// each list.
pub fn list_visibility(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
    mode: ListScoreMode,
) -> Result<VisibilityTable, RankError> {
    visibility_pass_table(
        election,
        method,
        VisibilityTarget::List,
        k_override,
        tiebreak,
        mode,
        true,
    )
}

/// Nationwide party slot shares: every state's filled top-k slots pooled
/// into one denominator.
pub fn party_visibility_global(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
) -> Result<BTreeMap<String, f64>, RankError> {
    party_visibility_global_mode(election, method, k_override, tiebreak, true)
}

/// [`party_visibility_global`] with an explicit execution mode; both modes
/// produce bit-identical shares.
pub(crate) fn party_visibility_global_mode(
    election: &Election,
    method: &MatchingMethod,
    k_override: Option<u32>,
    tiebreak: &TieBreakPolicy,
    parallel: bool,
) -> Result<BTreeMap<String, f64>, RankError> {
    let ix = Indexed::build(election)?;
    let mut cfg = PassConfig::new(method, VisibilityTarget::Candidate);
    cfg.k_override = k_override;
    cfg.tiebreak = *tiebreak;
    cfg.parallel = parallel;
    let out = engine::run_pass(&ix, &cfg, &Scenario::default())?;
    Ok(party_shares_of_pass(&ix, &out))
}

/// Folds a candidate pass into nationwide party slot shares (all states'
/// credit pooled into one denominator); every fielding party gets an entry.
pub(crate) fn party_shares_of_pass(
    ix: &Indexed,
    out: &engine::PassOutcome,
) -> BTreeMap<String, f64> {
    let mut by_party: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (sp, st) in out.states.iter().zip(&ix.states) {
        for (pos, &g) in st.cands.iter().enumerate() {
            let party = ix.parties[ix.cand_party[g as usize] as usize];
            *by_party.entry(party.to_string()).or_insert(0.0) += sp.credit[pos];
            total += sp.credit[pos];
        }
    }
    if total > 0.0 {
        for v in by_party.values_mut() {
            *v /= total;
        }
    }
    by_party
}
