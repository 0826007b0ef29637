//! Deterministic synthetic electorates: party-clustered candidates and a
//! looser voter population over a low-dimensional latent opinion space.
//!
//! Candidates are drawn around their party's latent mean; voters come from
//! the same party mixture with a wider spread. Each latent point maps to
//! questionnaire answers through a per-question logistic response snapped to
//! the question's answer grid. All randomness is derived from per-entity
//! substreams of a single seed, so generation is reproducible entity by
//! entity and independent of iteration order.

use crate::attacks::{nearest_allowed, DropModel};
use crate::model::{
    AnswerScale, Candidate, Election, ModelError, PartyList, Profile, Question, ScaleKind, Voter,
    DEFAULT_WEIGHT_SET,
};
use crate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One electoral district to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub id: String,
    pub seats: u32,
    pub candidates: usize,
    pub voters: usize,
}

/// One party: where its supporters sit in the latent space and how tightly
/// its candidates cluster there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartySpec {
    pub name: String,
    /// Voter mixture weight; shares sum to 1.
    pub vote_share: f64,
    /// Candidate apportionment weight; None reuses `vote_share`. The
    /// resolved weights must sum to 1. A party with weight 0 fields no
    /// candidates — a voter pool without its own slate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_share: Option<f64>,
    /// Latent mean, one coordinate per latent dimension.
    pub mean: Vec<f64>,
    /// Standard deviation of candidate latent positions around the mean.
    pub candidate_spread: f64,
}

/// How one question reads the latent space: a unit direction, an offset,
/// and the answer scale the logistic response is snapped to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionLoading {
    pub kind: ScaleKind,
    /// Unit vector, one coordinate per latent dimension.
    pub direction: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

/// Full recipe for a synthetic election. Serializable so generation runs
/// from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub states: Vec<StateSpec>,
    pub parties: Vec<PartySpec>,
    /// Voter latent standard deviation = candidate spread × this (≥ 1):
    /// electorates are looser than the candidate fields they elect.
    #[serde(default = "default_voter_spread")]
    pub voter_spread: f64,
    /// Per-question idiosyncratic opinion noise for voters, as a standard
    /// deviation added to each question's logit before snapping. Candidates
    /// stay on their party's ideological line; voters don't.
    #[serde(default)]
    pub answer_noise: f64,
    /// One loading per question; the questionnaire length is implied.
    pub loadings: Vec<QuestionLoading>,
    /// Sampling probabilities over the standard weight set {0, 0.5, 1, 2}.
    #[serde(default = "default_weight_probs")]
    pub weight_probs: Vec<f64>,
    /// Position-dependent probability that a voter answers each question.
    #[serde(default)]
    pub skip_model: DropModel,
    /// Chance a voter's stated preference flips to a uniformly random
    /// other party.
    #[serde(default)]
    pub preferred_party_noise: f64,
    /// Latent-space dimensionality; 2 by default (an economic and a
    /// social axis).
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
}

fn default_voter_spread() -> f64 {
    1.0
}

fn default_latent_dim() -> usize {
    2
}

fn default_weight_probs() -> Vec<f64> {
    vec![0.10, 0.15, 0.55, 0.20]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.states.is_empty() {
            return bad("at least one state is required".into());
        }
        let mut state_ids = BTreeSet::new();
        for s in &self.states {
            if s.id.is_empty() {
                return bad("state id must be non-empty".into());
            }
            if !state_ids.insert(s.id.as_str()) {
                return bad(format!("duplicate state id `{}`", s.id));
            }
            if s.seats == 0 {
                return bad(format!("state `{}` needs at least one seat", s.id));
            }
            if s.candidates == 0 {
                return bad(format!("state `{}` needs at least one candidate", s.id));
            }
        }
        if self.parties.is_empty() {
            return bad("at least one party is required".into());
        }
        let mut names = BTreeSet::new();
        let mut share_sum = 0.0;
        for p in &self.parties {
            if p.name.is_empty() {
                return bad("party name must be non-empty".into());
            }
            if !names.insert(p.name.as_str()) {
                return bad(format!("duplicate party `{}`", p.name));
            }
            if !(p.vote_share.is_finite() && (0.0..=1.0).contains(&p.vote_share)) {
                return bad(format!("vote share {} for `{}` is outside [0, 1]", p.vote_share, p.name));
            }
            if let Some(cs) = p.candidate_share {
                if !(cs.is_finite() && (0.0..=1.0).contains(&cs)) {
                    return bad(format!(
                        "candidate share {cs} for `{}` is outside [0, 1]",
                        p.name
                    ));
                }
            }
            if !(p.candidate_spread.is_finite() && p.candidate_spread >= 0.0) {
                return bad(format!("candidate spread for `{}` must be a non-negative number", p.name));
            }
            if p.mean.len() != self.latent_dim {
                return bad(format!(
                    "party `{}` has a {}-dimensional mean in a {}-dimensional latent space",
                    p.name,
                    p.mean.len(),
                    self.latent_dim
                ));
            }
            if p.mean.iter().any(|x| !x.is_finite()) {
                return bad(format!("party `{}` has a non-finite latent mean", p.name));
            }
            share_sum += p.vote_share;
        }
        if (share_sum - 1.0).abs() > 1e-9 {
            return bad(format!("vote shares sum to {share_sum}, expected 1"));
        }
        let cand_sum: f64 = self
            .parties
            .iter()
            .map(|p| p.candidate_share.unwrap_or(p.vote_share))
            .sum();
        if (cand_sum - 1.0).abs() > 1e-9 {
            return bad(format!("candidate shares sum to {cand_sum}, expected 1"));
        }
        if !(self.voter_spread.is_finite() && self.voter_spread >= 1.0) {
            return bad(format!("voter spread multiplier {} must be ≥ 1", self.voter_spread));
        }
        if !(self.answer_noise.is_finite() && self.answer_noise >= 0.0) {
            return bad(format!("answer noise {} must be finite and ≥ 0", self.answer_noise));
        }
        if self.loadings.is_empty() {
            return bad("at least one question loading is required".into());
        }
        for (i, l) in self.loadings.iter().enumerate() {
            if l.kind == ScaleKind::Custom {
                return bad(format!("loading #{}: custom scales are not generatable", i + 1));
            }
            if l.direction.len() != self.latent_dim {
                return bad(format!(
                    "loading #{} has a {}-dimensional direction in a {}-dimensional latent space",
                    i + 1,
                    l.direction.len(),
                    self.latent_dim
                ));
            }
            let norm2: f64 = l.direction.iter().map(|x| x * x).sum();
            if !norm2.is_finite() || (norm2.sqrt() - 1.0).abs() > 1e-6 {
                return bad(format!("loading #{} direction is not a unit vector", i + 1));
            }
            if !l.offset.is_finite() {
                return bad(format!("loading #{} offset must be finite", i + 1));
            }
        }
        if self.weight_probs.len() != DEFAULT_WEIGHT_SET.len() {
            return bad(format!(
                "weight model needs {} probabilities, one per weight",
                DEFAULT_WEIGHT_SET.len()
            ));
        }
        let wsum: f64 = self.weight_probs.iter().sum();
        if self.weight_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (wsum - 1.0).abs() > 1e-9
        {
            return bad("weight probabilities must be non-negative and sum to 1".into());
        }
        self.skip_model
            .validate(self.loadings.len())
            .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        if !(self.preferred_party_noise.is_finite() && (0.0..=1.0).contains(&self.preferred_party_noise)) {
            return bad("preferred-party noise must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` seats over `shares`:
/// floor the quotas, then hand remaining units to the largest fractional
/// parts (ties to the earlier entry).
fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).expect("finite quotas").then(a.cmp(&b))
    });
    for i in 0..total.saturating_sub(assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// First index whose cumulative probability exceeds a uniform draw.
fn categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_latent(rng: &mut impl Rng, mean: &[f64], spread: f64) -> Vec<f64> {
    mean.iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            m + spread * z
        })
        .collect()
}

/// Logistic read-out of a latent point on one question, snapped to the
/// scale: answer = nearest allowed value to min + σ(direction·point +
/// offset + jitter)·(max − min), so the snap thresholds sit at midpoints
/// between adjacent allowed values.
fn latent_answer(point: &[f64], loading: &QuestionLoading, scale: &AnswerScale, jitter: f64) -> f64 {
    let z: f64 = loading
        .direction
        .iter()
        .zip(point)
        .map(|(d, x)| d * x)
        .sum::<f64>()
        + loading.offset
        + jitter;
    let u = 1.0 / (1.0 + (-z).exp());
    let x = scale.min() + u * (scale.max() - scale.min());
    nearest_allowed(x, scale.allowed())
}

/// Generates the full election described by `cfg`. Candidate profiles are
/// complete; voter answers follow the skip model (with at least one answer
/// forced so every voter is rankable); party lists chunk each party's state
/// candidates into groups of at most `seats`.
pub fn generate_election(cfg: &SynthConfig) -> Result<Election, SynthError> {
    cfg.validate()?;
    let n_q = cfg.loadings.len();
    let questions: Vec<Question> = cfg
        .loadings
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let scale = AnswerScale::from_kind(l.kind, None)?;
            Ok(Question::new(format!("q{}", i + 1), i + 1, scale))
        })
        .collect::<Result<_, ModelError>>()?;
    let shares: Vec<f64> = cfg.parties.iter().map(|p| p.vote_share).collect();
    let cand_shares: Vec<f64> = cfg
        .parties
        .iter()
        .map(|p| p.candidate_share.unwrap_or(p.vote_share))
        .collect();

    let mut candidates = Vec::new();
    let mut lists = Vec::new();
    let mut ci: u64 = 0;
    for st in &cfg.states {
        let per_party = apportion(st.candidates, &cand_shares);
        for (party, &count) in cfg.parties.iter().zip(&per_party) {
            let mut group: Vec<(String, Profile)> = Vec::with_capacity(count);
            for _ in 0..count {
                let mut rng = stream(cfg.seed, "synth-cand", &[ci]);
                let point = draw_latent(&mut rng, &party.mean, party.candidate_spread);
                let answers: Vec<f64> = questions
                    .iter()
                    .zip(&cfg.loadings)
                    .map(|(q, l)| latent_answer(&point, l, &q.scale, 0.0))
                    .collect();
                group.push((format!("cand-{:05}", ci + 1), Profile::complete(answers)));
                ci += 1;
            }
            for (li, chunk) in group.chunks(st.seats as usize).enumerate() {
                let list_id = format!("{}-{}-{}", st.id, party.name, li + 1);
                lists.push(PartyList {
                    id: list_id.clone(),
                    state: st.id.clone(),
                    party: party.name.clone(),
                    members: chunk.iter().map(|(id, _)| id.clone()).collect(),
                });
                for (id, profile) in chunk {
                    candidates.push(Candidate {
                        id: id.clone(),
                        sort_key: id.clone(),
                        state: st.id.clone(),
                        party: party.name.clone(),
                        list: list_id.clone(),
                        profile: profile.clone(),
                    });
                }
            }
        }
    }

    let election_id = format!("synth-{}", cfg.seed);
    let mut voters = Vec::new();
    let mut vi: u64 = 0;
    for st in &cfg.states {
        for _ in 0..st.voters {
            let mut rng = stream(cfg.seed, "synth-voter", &[vi]);
            let comp = categorical(&mut rng, &shares);
            let party = &cfg.parties[comp];
            let point = draw_latent(
                &mut rng,
                &party.mean,
                party.candidate_spread * cfg.voter_spread,
            );
            let jitters: Vec<f64> = if cfg.answer_noise > 0.0 {
                (0..n_q)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        cfg.answer_noise * z
                    })
                    .collect()
            } else {
                vec![0.0; n_q]
            };
            let mut kept: Vec<bool> = (1..=n_q)
                .map(|t| rng.random::<f64>() < cfg.skip_model.answer_rate(t))
                .collect();
            if kept.iter().all(|k| !k) {
                kept[0] = true;
            }
            let weights: Vec<f64> = (0..n_q)
                .map(|_| DEFAULT_WEIGHT_SET[categorical(&mut rng, &cfg.weight_probs)])
                .collect();
            let answers: Vec<Option<f64>> = questions
                .iter()
                .zip(&cfg.loadings)
                .zip(&kept)
                .zip(&jitters)
                .map(|(((q, l), &keep), &jit)| keep.then(|| latent_answer(&point, l, &q.scale, jit)))
                .collect();
            let mut preferred = party.name.clone();
            if cfg.preferred_party_noise > 0.0
                && cfg.parties.len() > 1
                && rng.random::<f64>() < cfg.preferred_party_noise
            {
                let mut other = rng.random_range(0..cfg.parties.len() - 1);
                if other >= comp {
                    other += 1;
                }
                preferred = cfg.parties[other].name.clone();
            }
            voters.push(Voter {
                id: format!("voter-{:06}", vi + 1),
                state: st.id.clone(),
                preferred_party: Some(preferred),
                profile: Profile::new(answers, weights)?,
                timestamp: vi as i64,
                election_id: Some(election_id.clone()),
            });
            vi += 1;
        }
    }

    Ok(Election {
        questions,
        weight_set: DEFAULT_WEIGHT_SET.to_vec(),
        states: cfg
            .states
            .iter()
            .map(|s| (s.id.clone(), s.seats))
            .collect(),
        candidates,
        voters,
        lists,
        party_vote_shares: Some(
            cfg.parties
                .iter()
                .map(|p| (p.name.clone(), p.vote_share))
                .collect(),
        ),
    })
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Standard 75-question questionnaire shape (policy, then value, then
/// budget questions) with loadings marching around the latent plane at the
/// golden angle, so every direction is read roughly evenly.
pub fn standard_loadings(n_q: usize) -> Vec<QuestionLoading> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let policy_end = (0.80 * n_q as f64).round() as usize;
    let value_end = policy_end + ((7.0 / 75.0) * n_q as f64).round() as usize;
    (0..n_q)
        .map(|i| {
            let kind = if i < policy_end {
                ScaleKind::Policy
            } else if i < value_end.min(n_q) {
                ScaleKind::Value
            } else {
                ScaleKind::Budget
            };
            let theta = golden * i as f64;
            QuestionLoading {
                kind,
                direction: vec![theta.cos(), theta.sin()],
                offset: 0.0,
            }
        })
        .collect()
}

/// The benchmark electorate: 3 states, 500 candidates, 10,000 voters,
/// 5 slate parties around the latent plane plus a candidate-free pool of
/// floating centrist voters, 75 questions.
pub fn default_benchmark(seed: u64) -> SynthConfig {
    let names = ["unity", "forward", "heritage", "meadow", "anchor"];
    let vote_shares = [0.22, 0.19, 0.16, 0.13, 0.10];
    let cand_shares = [0.28, 0.24, 0.20, 0.16, 0.12];
    let radius = 3.0;
    let mut parties: Vec<PartySpec> = names
        .iter()
        .zip(vote_shares.iter().zip(cand_shares))
        .enumerate()
        .map(|(i, (name, (&vote_share, candidate_share)))| {
            let theta = std::f64::consts::TAU * i as f64 / 5.0 + std::f64::consts::FRAC_PI_2;
            PartySpec {
                name: name.to_string(),
                vote_share,
                candidate_share: Some(candidate_share),
                mean: vec![radius * theta.cos(), radius * theta.sin()],
                candidate_spread: 0.8,
            }
        })
        .collect();
    parties.push(PartySpec {
        name: "floating".into(),
        vote_share: 0.20,
        candidate_share: Some(0.0),
        mean: vec![0.0, 0.0],
        candidate_spread: 1.0,
    });
    SynthConfig {
        seed,
        states: vec![
            StateSpec {
                id: "north".into(),
                seats: 8,
                candidates: 200,
                voters: 4000,
            },
            StateSpec {
                id: "center".into(),
                seats: 6,
                candidates: 180,
                voters: 3500,
            },
            StateSpec {
                id: "south".into(),
                seats: 4,
                candidates: 120,
                voters: 2500,
            },
        ],
        parties,
        voter_spread: 1.5625,
        answer_noise: 3.0,
        loadings: standard_loadings(75),
        weight_probs: default_weight_probs(),
        skip_model: DropModel::default(),
        preferred_party_noise: 0.08,
        latent_dim: 2,
    }
}

/// Two parties at mirrored latent means with a tight electorate: the
/// sanity configuration where recommendations should almost always point
/// at the voter's own party.
pub fn two_party_symmetric(seed: u64, voters: usize) -> SynthConfig {
    SynthConfig {
        seed,
        states: vec![StateSpec {
            id: "main".into(),
            seats: 10,
            candidates: 40,
            voters,
        }],
        parties: vec![
            PartySpec {
                name: "left-bloc".into(),
                vote_share: 0.5,
                candidate_share: None,
                mean: vec![-1.4, 0.0],
                candidate_spread: 0.25,
            },
            PartySpec {
                name: "right-bloc".into(),
                vote_share: 0.5,
                candidate_share: None,
                mean: vec![1.4, 0.0],
                candidate_spread: 0.25,
            },
        ],
        voter_spread: 1.0,
        answer_noise: 0.0,
        loadings: standard_loadings(75),
        weight_probs: default_weight_probs(),
        skip_model: DropModel::default(),
        preferred_party_noise: 0.0,
        latent_dim: 2,
    }
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub state: String,
    pub seats: u32,
    pub candidates: usize,
    pub voters: usize,
    pub lists: usize,
}

/// Read-only description of an election: per-state counts, party shares of
/// the candidate field and of voter preferences, and the distribution of
/// voters' answered-question counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionSummary {
    pub states: Vec<StateSummary>,
    pub party_candidate_shares: BTreeMap<String, f64>,
    pub party_voter_shares: BTreeMap<String, f64>,
    /// `completeness[n]` = how many voters answered exactly `n` questions.
    pub completeness: Vec<u64>,
}

impl ElectionSummary {
    /// Mean answered-question count over voters; None without voters.
    pub fn mean_answered(&self) -> Option<f64> {
        let total: u64 = self.completeness.iter().sum();
        if total == 0 {
            return None;
        }
        let sum: f64 = self
            .completeness
            .iter()
            .enumerate()
            .map(|(n, &c)| n as f64 * c as f64)
            .sum();
        Some(sum / total as f64)
    }

    /// Per-state counts as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,seats,candidates,voters,lists\n");
        for s in &self.states {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.state, s.seats, s.candidates, s.voters, s.lists
            ));
        }
        out
    }
}

pub fn describe_election(e: &Election) -> ElectionSummary {
    let states = e
        .states
        .iter()
        .map(|(id, &seats)| StateSummary {
            state: id.clone(),
            seats,
            candidates: e.candidates.iter().filter(|c| &c.state == id).count(),
            voters: e.voters.iter().filter(|v| &v.state == id).count(),
            lists: e.lists.iter().filter(|l| &l.state == id).count(),
        })
        .collect();
    let mut party_candidate_shares = BTreeMap::new();
    if !e.candidates.is_empty() {
        let per = 1.0 / e.candidates.len() as f64;
        for c in &e.candidates {
            *party_candidate_shares.entry(c.party.clone()).or_insert(0.0) += per;
        }
    }
    let mut party_voter_shares = BTreeMap::new();
    let preferring = e
        .voters
        .iter()
        .filter_map(|v| v.preferred_party.as_ref())
        .count();
    if preferring > 0 {
        let per = 1.0 / preferring as f64;
        for v in &e.voters {
            if let Some(p) = &v.preferred_party {
                *party_voter_shares.entry(p.clone()).or_insert(0.0) += per;
            }
        }
    }
    let mut completeness = vec![0u64; e.questions.len() + 1];
    for v in &e.voters {
        completeness[v.profile.answered_count()] += 1;
    }
    ElectionSummary {
        states,
        party_candidate_shares,
        party_voter_shares,
        completeness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::DropMode;
    use crate::matching::{MatchingMethod, MethodKind};
    use crate::model::validate_election;
    use crate::ranking::party_visibility_global;
    use crate::ranking::TieBreakPolicy;

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            states: vec![
                StateSpec {
                    id: "east".into(),
                    seats: 3,
                    candidates: 11,
                    voters: 40,
                },
                StateSpec {
                    id: "west".into(),
                    seats: 2,
                    candidates: 7,
                    voters: 25,
                },
            ],
            parties: vec![
                PartySpec {
                    name: "alpha".into(),
                    vote_share: 0.5,
                    candidate_share: None,
                    mean: vec![-1.2, 0.3],
                    candidate_spread: 0.4,
                },
                PartySpec {
                    name: "beta".into(),
                    vote_share: 0.3,
                    candidate_share: None,
                    mean: vec![1.0, 0.8],
                    candidate_spread: 0.4,
                },
                PartySpec {
                    name: "gamma".into(),
                    vote_share: 0.2,
                    candidate_share: None,
                    mean: vec![0.4, -1.3],
                    candidate_spread: 0.4,
                },
            ],
            voter_spread: 1.5,
            answer_noise: 0.0,
            loadings: standard_loadings(12),
            weight_probs: default_weight_probs(),
            skip_model: DropModel::default(),
            preferred_party_noise: 0.1,
            latent_dim: 2,
        }
    }

    #[test]
    fn apportionment_floors_then_hands_out_remainders() {
        assert_eq!(apportion(10, &[0.5, 0.3, 0.2]), vec![5, 3, 2]);
        // Quotas 1.65 / 1.35: the larger fraction takes the leftover unit.
        assert_eq!(apportion(3, &[0.55, 0.45]), vec![2, 1]);
        // Fraction tie → earlier entry.
        assert_eq!(apportion(1, &[0.5, 0.5]), vec![1, 0]);
        assert_eq!(apportion(0, &[0.6, 0.4]), vec![0, 0]);
    }

    #[test]
    fn same_seed_is_bit_identical_and_different_seeds_diverge() {
        let a = generate_election(&small_config(11)).unwrap();
        let b = generate_election(&small_config(11)).unwrap();
        assert_eq!(a, b);
        let c = generate_election(&small_config(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_elections_validate_cleanly_and_match_their_config() {
        let cfg = small_config(5);
        let e = generate_election(&cfg).unwrap();
        let report = validate_election(&e);
        assert!(report.is_valid(), "violations: {:?}", report.violations);

        let summary = describe_election(&e);
        for spec in &cfg.states {
            let s = summary.states.iter().find(|s| s.state == spec.id).unwrap();
            assert_eq!(s.candidates, spec.candidates);
            assert_eq!(s.voters, spec.voters);
            assert_eq!(s.seats, spec.seats);
        }
        // Candidate profiles are complete.
        assert!(e
            .candidates
            .iter()
            .all(|c| c.profile.answered_count() == e.questions.len()));
        // Lists partition each party's state candidates into chunks ≤ seats.
        for l in &e.lists {
            assert!(l.members.len() <= e.states[&l.state] as usize);
        }
        assert_eq!(
            e.lists.iter().map(|l| l.members.len()).sum::<usize>(),
            e.candidates.len()
        );
        // Recorded vote shares come straight from the config.
        let shares = e.party_vote_shares.as_ref().unwrap();
        for p in &cfg.parties {
            assert_eq!(shares[&p.name], p.vote_share);
        }
    }

    #[test]
    fn zero_spread_collapses_each_party_to_identical_candidates() {
        let mut cfg = small_config(9);
        for p in &mut cfg.parties {
            p.candidate_spread = 0.0;
        }
        let e = generate_election(&cfg).unwrap();
        for a in &e.candidates {
            for b in &e.candidates {
                if a.party == b.party {
                    assert_eq!(a.profile.answers(), b.profile.answers());
                }
            }
        }
        // Permuting list membership leaves party visibility untouched.
        let method = MatchingMethod::from_kind(MethodKind::L2);
        let before =
            party_visibility_global(&e, &method, None, &TieBreakPolicy::LexicographicSortKey)
                .unwrap();
        let mut permuted = e.clone();
        for l in &mut permuted.lists {
            l.members.reverse();
        }
        let after = party_visibility_global(
            &permuted,
            &method,
            None,
            &TieBreakPolicy::LexicographicSortKey,
        )
        .unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn mirrored_parties_split_visibility_evenly() {
        let cfg = two_party_symmetric(21, 10_000);
        let e = generate_election(&cfg).unwrap();
        let method = MatchingMethod::from_kind(MethodKind::L2);
        let vis =
            party_visibility_global(&e, &method, None, &TieBreakPolicy::LexicographicSortKey)
                .unwrap();
        let left = vis["left-bloc"];
        let right = vis["right-bloc"];
        assert!((left + right - 1.0).abs() < 1e-12);
        assert!(
            (left - 0.5).abs() < 0.02,
            "left {left}, right {right}: asymmetry beyond sampling noise"
        );
    }

    #[test]
    fn completeness_follows_the_skip_model() {
        let cfg = two_party_symmetric(3, 10_000);
        let e = generate_election(&cfg).unwrap();
        let summary = describe_election(&e);
        let n_q = e.questions.len();
        let mean_fraction = summary.mean_answered().unwrap() / n_q as f64;
        let model_mean: f64 = (1..=n_q)
            .map(|t| cfg.skip_model.answer_rate(t))
            .sum::<f64>()
            / n_q as f64;
        assert!(
            (mean_fraction - model_mean).abs() < 0.01,
            "simulated {mean_fraction} vs model {model_mean}"
        );
    }

    #[test]
    fn every_voter_keeps_at_least_one_answer() {
        let mut cfg = small_config(2);
        cfg.skip_model = DropModel {
            intercept: 0.0,
            slope: 0.0,
            mode: DropMode::Custom(vec![0.0; cfg.loadings.len()]),
        };
        let e = generate_election(&cfg).unwrap();
        assert!(e.voters.iter().all(|v| v.profile.answered_count() == 1));
        assert!(e
            .voters
            .iter()
            .all(|v| v.profile.answer(0).is_some()));
        assert!(validate_election(&e).is_valid());
    }

    #[test]
    fn preference_noise_flips_the_expected_fraction() {
        let mut cfg = two_party_symmetric(17, 10_000);
        cfg.parties[0].vote_share = 0.8;
        cfg.parties[1].vote_share = 0.2;
        // Noise 0: preferences mirror the mixture draw.
        let shares = describe_election(&generate_election(&cfg).unwrap()).party_voter_shares;
        assert!((shares["left-bloc"] - 0.8).abs() < 0.02);
        // Noise 0.5 with two parties: P(pref = A) = 0.8·0.5 + 0.2·0.5 = 0.5.
        cfg.preferred_party_noise = 0.5;
        let noisy = describe_election(&generate_election(&cfg).unwrap()).party_voter_shares;
        assert!((noisy["left-bloc"] - 0.5).abs() < 0.02);
    }

    #[test]
    fn recommendations_track_preferences_on_the_tight_symmetric_config() {
        let cfg = two_party_symmetric(29, 2_000);
        let e = generate_election(&cfg).unwrap();
        let method = MatchingMethod::from_kind(MethodKind::L2);
        let a1 = crate::metrics::acc1(&e, &method).unwrap();
        assert!(a1 > 0.9, "ACC1 = {a1}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let expect_invalid = |mutate: fn(&mut SynthConfig)| {
            let mut cfg = small_config(1);
            mutate(&mut cfg);
            assert!(matches!(
                generate_election(&cfg).unwrap_err(),
                SynthError::InvalidConfig(_)
            ));
        };
        expect_invalid(|c| c.states[0].candidates = 0);
        expect_invalid(|c| c.states[0].seats = 0);
        expect_invalid(|c| c.states[1].id = "east".into());
        expect_invalid(|c| c.parties[0].vote_share = 0.9);
        expect_invalid(|c| c.parties[0].mean = vec![0.0]);
        expect_invalid(|c| c.voter_spread = 0.5);
        expect_invalid(|c| c.loadings[3].direction = vec![0.5, 0.5]);
        expect_invalid(|c| c.loadings[0].kind = ScaleKind::Custom);
        expect_invalid(|c| c.weight_probs = vec![0.5, 0.5]);
        expect_invalid(|c| c.preferred_party_noise = 1.5);
        expect_invalid(|c| {
            c.skip_model = DropModel {
                intercept: 1.2,
                slope: 0.0,
                mode: DropMode::FittedLinear,
            }
        });
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = default_benchmark(4);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: SynthConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        // Omitted optional knobs take defaults.
        let minimal: SynthConfig = serde_json::from_str(
            r#"{
                "seed": 1,
                "states": [{"id": "main", "seats": 2, "candidates": 4, "voters": 3}],
                "parties": [
                    {"name": "a", "vote_share": 1.0, "mean": [0.0, 0.0], "candidate_spread": 0.2}
                ],
                "loadings": [
                    {"kind": "policy", "direction": [1.0, 0.0]},
                    {"kind": "budget", "direction": [0.0, 1.0]}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(minimal.voter_spread, 1.0);
        assert_eq!(minimal.latent_dim, 2);
        assert_eq!(minimal.preferred_party_noise, 0.0);
        assert_eq!(minimal.weight_probs, default_weight_probs());
        generate_election(&minimal).unwrap();
    }

    #[test]
    fn summaries_handle_voterless_elections() {
        let mut cfg = small_config(8);
        for s in &mut cfg.states {
            s.voters = 0;
        }
        let e = generate_election(&cfg).unwrap();
        let summary = describe_election(&e);
        assert!(summary.states.iter().all(|s| s.voters == 0));
        assert!(summary.party_voter_shares.is_empty());
        assert_eq!(summary.mean_answered(), None);
        assert!(summary.completeness.iter().all(|&c| c == 0));
        let csv = summary.to_csv();
        assert_eq!(csv.lines().count(), 1 + cfg.states.len());
    }

    #[test]
    fn benchmark_config_has_the_advertised_shape() {
        let cfg = default_benchmark(1);
        assert_eq!(cfg.states.len(), 3);
        assert_eq!(cfg.states.iter().map(|s| s.candidates).sum::<usize>(), 500);
        assert_eq!(cfg.states.iter().map(|s| s.voters).sum::<usize>(), 10_000);
        assert_eq!(cfg.parties.len(), 5);
        assert_eq!(cfg.loadings.len(), 75);
        let policy = cfg
            .loadings
            .iter()
            .filter(|l| l.kind == ScaleKind::Policy)
            .count();
        let value = cfg
            .loadings
            .iter()
            .filter(|l| l.kind == ScaleKind::Value)
            .count();
        let budget = cfg
            .loadings
            .iter()
            .filter(|l| l.kind == ScaleKind::Budget)
            .count();
        assert_eq!((policy, value, budget), (60, 7, 8));
        cfg.validate().unwrap();
    }
}
