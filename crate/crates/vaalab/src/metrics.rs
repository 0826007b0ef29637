//! Robustness metrics and the cross-method scorecard.
//!
//! Each metric condenses one manipulation surface into a number: party bias
//! against the consensus of the other methods (BIA), gain available to
//! coordinated answer calibration (CP), correlation between answer extremity
//! and exposure (ASC), concentration of recommendations (GIN), and agreement
//! between recommendations and voters' own party preferences (ACC1–ACC3).
//! `method_comparison` evaluates all of them for a set of methods and lays
//! the results out as one row per method.

use crate::attacks::{AttackError, CalibrationDirection, CalibrationLab};
use crate::engine::{self, Collect, Indexed, PassConfig, Scenario};
use crate::matching::{MatchError, MatchingMethod, MethodKind};
use crate::model::{Election, ModelError, Profile, Question, VisibilityTarget};
use crate::ranking::{candidate_visibility_mode, party_visibility_global_mode, RankError, TieBreakPolicy};
use crate::stats;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("profile has unanswered questions")]
    IncompleteProfile,
    #[error("need at least one other method for the median")]
    NotEnoughMethods,
    #[error("no voters with a stated preferred party")]
    NoPreferredVoters,
    #[error("no (voter, recommended candidate, strong question) triples")]
    NoQualifyingTriples,
    #[error("vote shares unavailable")]
    MissingVoteShares,
    #[error("metric undefined: {0}")]
    Undefined(String),
}

/// Shared knobs for the metric suite.
#[derive(Debug, Clone, Default)]
pub struct MetricConfig {
    /// Party set for BIA; None resolves to the 8 largest parties by recorded
    /// vote share.
    pub bia_parties: Option<Vec<String>>,
    /// Per-party weights for CP; None falls back to the election's recorded
    /// vote shares.
    pub cp_weights: Option<BTreeMap<String, f64>>,
    /// Top-k override; None uses each state's default (seats for candidates).
    pub k: Option<u32>,
    /// Voter weight that marks a question as high-priority for ACC3; None
    /// uses the maximum of the election's weight set.
    pub strong_weight: Option<f64>,
    /// Run the underlying ranking passes on the worker pool; false (the
    /// default) keeps every pass single-threaded. Both modes produce
    /// bit-identical results because per-voter outcomes are folded in a
    /// fixed order.
    pub parallel: bool,
}

impl MetricConfig {
    fn validate(&self) -> Result<(), MetricError> {
        if let Some(parties) = &self.bia_parties {
            if parties.is_empty() {
                return Err(MetricError::InvalidConfig(
                    "BIA party set must be non-empty".into(),
                ));
            }
        }
        if let Some(weights) = &self.cp_weights {
            validate_cp_weights(weights)?;
        }
        if let Some(w) = self.strong_weight {
            if !(w.is_finite() && w >= 0.0) {
                return Err(MetricError::InvalidConfig(format!(
                    "strong weight {w} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

fn validate_cp_weights(weights: &BTreeMap<String, f64>) -> Result<(), MetricError> {
    let mut total = 0.0;
    for (party, &w) in weights {
        if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
            return Err(MetricError::InvalidConfig(format!(
                "CP weight for {party} is {w}, outside [0, 1]"
            )));
        }
        total += w;
    }
    if total > 1.0 + 1e-9 {
        return Err(MetricError::InvalidConfig(format!(
            "CP weights sum to {total} > 1"
        )));
    }
    Ok(())
}

/// The 8 largest parties by recorded vote share (all of them when fewer than
/// 8 have shares); ties broken alphabetically. None without recorded shares.
pub fn default_bia_parties(election: &Election) -> Option<Vec<String>> {
    let shares = election.party_vote_shares.as_ref()?;
    let mut ranked: Vec<(&String, f64)> = shares.iter().map(|(p, &s)| (p, s)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite shares").then(a.0.cmp(b.0)));
    Some(ranked.into_iter().take(8).map(|(p, _)| p.clone()).collect())
}

// ---------------------------------------------------------------------------
// Answer strength and expectation normalization
// ---------------------------------------------------------------------------

/// Mean absolute deviation of a complete profile's answers from each
/// question's scale neutral — 0 for all-neutral, 50 for all-pole answers on
/// the standard scales.
pub fn answer_strength(profile: &Profile, questions: &[Question]) -> Result<f64, MetricError> {
    if profile.len() != questions.len() {
        return Err(MetricError::InvalidConfig(format!(
            "profile has {} answers for {} questions",
            profile.len(),
            questions.len()
        )));
    }
    let deviations: Vec<f64> = profile
        .answers()
        .iter()
        .zip(questions)
        .map(|(a, q)| {
            a.map(|a| (a - q.scale.neutral()).abs())
                .ok_or(MetricError::IncompleteProfile)
        })
        .collect::<Result<_, _>>()?;
    stats::mean(&deviations).ok_or_else(|| MetricError::Undefined("empty questionnaire".into()))
}

/// Rescales a visibility by the state's candidates-per-slot ratio so that a
/// candidate exactly meeting expectation scores 1 regardless of field size.
pub fn expectation_normalized_visibility(visibility: f64, candidates: usize, k: u32) -> f64 {
    assert!(k >= 1, "top-k size must be at least 1");
    visibility * candidates as f64 / k as f64
}

// ---------------------------------------------------------------------------
// BIA — party bias against the other methods' median
// ---------------------------------------------------------------------------

/// Party bias of one method against the median of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct Bia {
    /// Mean |relative deviation| over the party set.
    pub bia1: f64,
    /// Signed relative deviation at the party where it is largest in
    /// absolute value.
    pub bia2: f64,
    pub bia2_party: String,
    /// Parties skipped because the other methods' median visibility is 0.
    pub excluded: Vec<String>,
}

/// Relative deviation of `method`'s party visibilities from the median of
/// every *other* method in `visibilities`, over `parties`.
pub fn bia(
    method: &str,
    visibilities: &BTreeMap<String, BTreeMap<String, f64>>,
    parties: &[String],
) -> Result<Bia, MetricError> {
    let own = visibilities
        .get(method)
        .ok_or_else(|| MetricError::InvalidConfig(format!("no visibilities for {method}")))?;
    let others: Vec<&BTreeMap<String, f64>> = visibilities
        .iter()
        .filter(|(name, _)| name.as_str() != method)
        .map(|(_, v)| v)
        .collect();
    if others.is_empty() {
        return Err(MetricError::NotEnoughMethods);
    }
    if parties.is_empty() {
        return Err(MetricError::InvalidConfig(
            "BIA party set must be non-empty".into(),
        ));
    }
    let mut deviations: Vec<f64> = Vec::with_capacity(parties.len());
    let mut excluded = Vec::new();
    let mut worst: Option<(f64, &str)> = None;
    for party in parties {
        let sample: Vec<f64> = others
            .iter()
            .map(|v| v.get(party).copied().unwrap_or(0.0))
            .collect();
        let med = stats::median(&sample).expect("at least one other method");
        if med == 0.0 {
            excluded.push(party.clone());
            continue;
        }
        let dev = (own.get(party).copied().unwrap_or(0.0) - med) / med;
        if worst.is_none_or(|(w, _)| dev.abs() > w.abs()) {
            worst = Some((dev, party));
        }
        deviations.push(dev.abs());
    }
    let (bia2, bia2_party) = worst.ok_or_else(|| {
        MetricError::Undefined("every party has zero median visibility".into())
    })?;
    Ok(Bia {
        bia1: stats::mean(&deviations).expect("at least one included party"),
        bia2,
        bia2_party: bia2_party.to_string(),
        excluded,
    })
}

// ---------------------------------------------------------------------------
// CP — calibration potential
// ---------------------------------------------------------------------------

/// Vote-share-weighted calibration gain.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPotential {
    /// Weighted mean relative visibility change when each weighted party
    /// calibrates all answers.
    pub value: f64,
    /// Weighted parties skipped because their baseline visibility is 0.
    pub excluded: Vec<String>,
}

/// For every vote-share-weighted party in turn, recomputes party visibility
/// after that party calibrates all its answers in `direction`, and returns
/// the share-weighted mean of the relative changes.
pub fn calibration_potential(
    election: &Election,
    method: &MatchingMethod,
    direction: CalibrationDirection,
    cfg: &MetricConfig,
    k: Option<u32>,
) -> Result<CalibrationPotential, MetricError> {
    let weights = match &cfg.cp_weights {
        Some(w) => w.clone(),
        None => election
            .party_vote_shares
            .clone()
            .ok_or(MetricError::MissingVoteShares)?,
    };
    validate_cp_weights(&weights)?;
    let lab = CalibrationLab::new(election, method, k, cfg.parallel)?;
    let mut weighted_sum = 0.0;
    let mut weight_total = 0.0;
    let mut excluded = Vec::new();
    for (party, &w) in &weights {
        if w == 0.0 {
            continue;
        }
        let baseline = lab.baseline().get(party).copied().unwrap_or(0.0);
        if baseline == 0.0 {
            excluded.push(party.clone());
            continue;
        }
        let attacked = lab.calibrated_shares(party, direction)?;
        let after = attacked.get(party).copied().unwrap_or(0.0);
        weighted_sum += w * (after - baseline) / baseline;
        weight_total += w;
    }
    if weight_total == 0.0 {
        return Err(MetricError::Undefined(
            "no weighted party has nonzero baseline visibility".into(),
        ));
    }
    Ok(CalibrationPotential {
        value: weighted_sum / weight_total,
        excluded,
    })
}

// ---------------------------------------------------------------------------
// ASC and GIN — strength correlation and concentration
// ---------------------------------------------------------------------------

/// Per-candidate (answer strength, expectation-normalized visibility) pairs
/// under the deployed tie-break, pooled across states.
fn strength_and_env(
    election: &Election,
    method: &MatchingMethod,
    k: Option<u32>,
    parallel: bool,
) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    let table = candidate_visibility_mode(
        election,
        method,
        k,
        &TieBreakPolicy::LexicographicSortKey,
        parallel,
    )?;
    let mut state_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &election.candidates {
        *state_counts.entry(c.state.as_str()).or_insert(0) += 1;
    }
    let mut strengths = Vec::with_capacity(table.rows.len());
    let mut envs = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let cand = election.candidate(&row.entity)?;
        strengths.push(answer_strength(&cand.profile, &election.questions)?);
        envs.push(expectation_normalized_visibility(
            row.visibility,
            state_counts[row.state.as_str()],
            row.k,
        ));
    }
    Ok((strengths, envs))
}

/// Pearson correlation between candidates' answer strength and their
/// expectation-normalized visibility, pooled across states. Near 0 means the
/// method gives extreme and moderate answer profiles equal exposure.
pub fn asc(election: &Election, method: &MatchingMethod, k: Option<u32>) -> Result<f64, MetricError> {
    let (strengths, envs) = strength_and_env(election, method, k, true)?;
    stats::pearson(&strengths, &envs).ok_or_else(|| {
        MetricError::Undefined("constant answer strength or constant visibility".into())
    })
}

/// Population Gini coefficient via the mean absolute difference:
/// Σᵢⱼ|xᵢ−xⱼ| / (2n²·mean). 0 for an even distribution, 1 for a maximally
/// concentrated one.
pub fn gini(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Undefined("empty input".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricError::InvalidConfig(
            "Gini requires finite non-negative values".into(),
        ));
    }
    let total = stats::compensated_sum(values.iter().copied());
    if total == 0.0 {
        return Err(MetricError::Undefined("all values are zero".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    // Sorted form of the pairwise mean absolute difference:
    // Σᵢⱼ|xᵢ−xⱼ| = 2·Σᵢ (2i − n + 1)·x₍ᵢ₎.
    let weighted = stats::compensated_sum(
        sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| (2.0 * i as f64 - n + 1.0) * x),
    );
    Ok(weighted / (n * total))
}

// ---------------------------------------------------------------------------
// ACC1–ACC3 — recommendation/preference agreement
// ---------------------------------------------------------------------------

/// Global voter indices with a stated preferred party.
fn preferring_voters(election: &Election) -> Result<Vec<u32>, MetricError> {
    let subset: Vec<u32> = election
        .voters
        .iter()
        .enumerate()
        .filter(|(_, v)| v.preferred_party.is_some())
        .map(|(g, _)| g as u32)
        .collect();
    if subset.is_empty() {
        return Err(MetricError::NoPreferredVoters);
    }
    Ok(subset)
}

/// Fraction of preferring voters whose top-1 list belongs to their preferred
/// party (mean-of-member-scores list ranking, deployed tie-break).
pub fn acc1(election: &Election, method: &MatchingMethod) -> Result<f64, MetricError> {
    acc1_mode(election, method, true)
}

fn acc1_mode(
    election: &Election,
    method: &MatchingMethod,
    parallel: bool,
) -> Result<f64, MetricError> {
    let subset = preferring_voters(election)?;
    let ix = Indexed::build(election)?;
    let mut cfg = PassConfig::new(method, VisibilityTarget::List);
    cfg.collect = Collect::TopK;
    cfg.parallel = parallel;
    let scn = Scenario {
        voter_subset: Some(&subset),
        ..Scenario::default()
    };
    let out = engine::run_pass(&ix, &cfg, &scn)?;
    let mut hits = 0u64;
    for (sp, st) in out.states.iter().zip(&ix.states) {
        for (g, tops) in sp.topk.as_ref().expect("collected") {
            let preferred = election.voters[*g as usize]
                .preferred_party
                .as_deref()
                .expect("subset keeps preferring voters");
            if tops
                .first()
                .is_some_and(|&p| election.lists[st.lists[p as usize] as usize].party == preferred)
            {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / subset.len() as f64)
}

/// Mean normalized rank of preferred-party lists, with the exclusion tally
/// the normalization forces.
#[derive(Debug, Clone, PartialEq)]
pub struct Acc2 {
    /// Mean over included voters of (best preferred-list rank − 1)/(L − 1):
    /// 0 when the preferred party's list always comes first, 1 when last.
    pub value: f64,
    /// Preferring voters skipped: state with fewer than two lists, or the
    /// preferred party fields no list there.
    pub excluded: u64,
}

/// Where in each voter's list ranking the preferred party's best list lands,
/// normalized by the number of lists in the voter's state.
pub fn acc2(election: &Election, method: &MatchingMethod) -> Result<Acc2, MetricError> {
    acc2_mode(election, method, true)
}

fn acc2_mode(
    election: &Election,
    method: &MatchingMethod,
    parallel: bool,
) -> Result<Acc2, MetricError> {
    let subset = preferring_voters(election)?;
    let ix = Indexed::build(election)?;
    let mut cfg = PassConfig::new(method, VisibilityTarget::List);
    cfg.collect = Collect::FullOrder;
    cfg.parallel = parallel;
    let scn = Scenario {
        voter_subset: Some(&subset),
        ..Scenario::default()
    };
    let out = engine::run_pass(&ix, &cfg, &scn)?;
    let mut sum = 0.0;
    let mut included = 0u64;
    let mut excluded = 0u64;
    for (sp, st) in out.states.iter().zip(&ix.states) {
        let n_lists = st.lists.len();
        let orders = sp.order.as_ref().expect("collected");
        if n_lists < 2 {
            excluded += orders.len() as u64;
            continue;
        }
        for (g, order) in orders {
            let preferred = election.voters[*g as usize]
                .preferred_party
                .as_deref()
                .expect("subset keeps preferring voters");
            let best = order
                .iter()
                .position(|&p| election.lists[st.lists[p as usize] as usize].party == preferred);
            match best {
                Some(rank) => {
                    sum += rank as f64 / (n_lists - 1) as f64;
                    included += 1;
                }
                None => excluded += 1,
            }
        }
    }
    if included == 0 {
        return Err(MetricError::Undefined(
            "every preferring voter was excluded from normalization".into(),
        ));
    }
    Ok(Acc2 {
        value: sum / included as f64,
        excluded,
    })
}

/// Over all (voter, top-k candidate, question the voter weighted at the
/// strong threshold) triples, the fraction where the two answers fall on
/// strictly opposite sides of the question's neutral.
pub fn acc3(
    election: &Election,
    method: &MatchingMethod,
    k: Option<u32>,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    let strong = match cfg.strong_weight {
        Some(w) => w,
        None => election
            .weight_set
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let ix = Indexed::build(election)?;
    let mut pass = PassConfig::new(method, VisibilityTarget::Candidate);
    pass.k_override = k;
    pass.collect = Collect::TopK;
    pass.parallel = cfg.parallel;
    let out = engine::run_pass(&ix, &pass, &Scenario::default())?;
    let neutrals: Vec<f64> = election.questions.iter().map(|q| q.scale.neutral()).collect();
    let mut triples = 0u64;
    let mut opposite = 0u64;
    for (sp, st) in out.states.iter().zip(&ix.states) {
        for (g, tops) in sp.topk.as_ref().expect("collected") {
            let (va, vw) = ix.voter_row(*g);
            let strong_qs: Vec<usize> = (0..ix.n_q)
                .filter(|&t| vw[t] == strong && va[t].is_finite())
                .collect();
            if strong_qs.is_empty() {
                continue;
            }
            for &p in tops {
                let c = st.cands[p as usize] as usize;
                let row = &ix.cand_answers[c * ix.n_q..(c + 1) * ix.n_q];
                for &t in &strong_qs {
                    triples += 1;
                    let n = neutrals[t];
                    if (va[t] < n && row[t] > n) || (va[t] > n && row[t] < n) {
                        opposite += 1;
                    }
                }
            }
        }
    }
    if triples == 0 {
        return Err(MetricError::NoQualifyingTriples);
    }
    Ok(opposite as f64 / triples as f64)
}

// ---------------------------------------------------------------------------
// Method comparison
// ---------------------------------------------------------------------------

/// One method's row in the comparison table. None marks a cell whose metric
/// is undefined on this election (missing inputs or degenerate data).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScorecard {
    pub method: String,
    pub bia1: Option<f64>,
    pub bia2: Option<f64>,
    pub bia2_party: Option<String>,
    pub cp_m: Option<f64>,
    pub cp_s: Option<f64>,
    pub asc: Option<f64>,
    pub gin: Option<f64>,
    pub acc1: Option<f64>,
    pub acc2: Option<f64>,
    pub acc3: Option<f64>,
}

/// The full comparison: one scorecard per method plus per-column best/worst
/// markers (columns without a preferred direction, like GIN, carry none).
#[derive(Debug, Clone, PartialEq)]
pub struct ScorecardTable {
    pub rows: Vec<MethodScorecard>,
    pub best: BTreeMap<String, String>,
    pub worst: BTreeMap<String, String>,
}

/// How a column is judged: smaller magnitude, smaller value, or larger value.
enum ColumnGoal {
    MinAbs,
    Min,
    Max,
}

const JUDGED_COLUMNS: [(&str, ColumnGoal); 8] = [
    ("BIA1", ColumnGoal::MinAbs),
    ("BIA2", ColumnGoal::MinAbs),
    ("CP_M", ColumnGoal::Min),
    ("CP_S", ColumnGoal::Min),
    ("ASC", ColumnGoal::MinAbs),
    ("ACC1", ColumnGoal::Max),
    ("ACC2", ColumnGoal::Min),
    ("ACC3", ColumnGoal::Min),
];

impl ScorecardTable {
    /// CSV serialization with the pinned column order; undefined cells are
    /// left empty.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out =
            String::from("method,BIA1,BIA2,BIA2_party,CP_M,CP_S,ASC,GIN,ACC1,ACC2,ACC3\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.method,
                cell(r.bia1),
                cell(r.bia2),
                r.bia2_party.clone().unwrap_or_default(),
                cell(r.cp_m),
                cell(r.cp_s),
                cell(r.asc),
                cell(r.gin),
                cell(r.acc1),
                cell(r.acc2),
                cell(r.acc3),
            ));
        }
        out
    }

    fn markers(rows: &[MethodScorecard]) -> (BTreeMap<String, String>, BTreeMap<String, String>) {
        let mut best = BTreeMap::new();
        let mut worst = BTreeMap::new();
        for (name, goal) in &JUDGED_COLUMNS {
            let value = |r: &MethodScorecard| -> Option<f64> {
                let raw = match *name {
                    "BIA1" => r.bia1,
                    "BIA2" => r.bia2,
                    "CP_M" => r.cp_m,
                    "CP_S" => r.cp_s,
                    "ASC" => r.asc,
                    "ACC1" => r.acc1,
                    "ACC2" => r.acc2,
                    _ => r.acc3,
                }?;
                // Map every goal onto "smaller is better".
                Some(match goal {
                    ColumnGoal::MinAbs => raw.abs(),
                    ColumnGoal::Min => raw,
                    ColumnGoal::Max => -raw,
                })
            };
            let defined: Vec<(&MethodScorecard, f64)> =
                rows.iter().filter_map(|r| value(r).map(|v| (r, v))).collect();
            if let Some((r, _)) = defined
                .iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite cells"))
            {
                best.insert(name.to_string(), r.method.clone());
            }
            if let Some((r, _)) = defined
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite cells"))
            {
                worst.insert(name.to_string(), r.method.clone());
            }
        }
        (best, worst)
    }
}

/// Runs the full metric suite for every method. Metrics that are undefined
/// on this election (no vote shares, no preferring voters, degenerate data,
/// too few methods for a median) appear as empty cells rather than failing
/// the whole table.
pub fn method_comparison(
    election: &Election,
    methods: &[MethodKind],
    cfg: &MetricConfig,
) -> Result<ScorecardTable, MetricError> {
    if methods.is_empty() {
        return Err(MetricError::InvalidConfig("no methods given".into()));
    }
    cfg.validate()?;
    let built: Vec<MatchingMethod> = methods.iter().map(|&k| MatchingMethod::from_kind(k)).collect();
    let mut names: Vec<&str> = built.iter().map(|m| m.name()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != built.len() {
        return Err(MetricError::InvalidConfig(
            "duplicate methods in comparison".into(),
        ));
    }

    let mut visibilities: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for m in &built {
        visibilities.insert(
            m.name().to_string(),
            party_visibility_global_mode(
                election,
                m,
                cfg.k,
                &TieBreakPolicy::LexicographicSortKey,
                cfg.parallel,
            )?,
        );
    }
    let bia_parties = cfg
        .bia_parties
        .clone()
        .or_else(|| default_bia_parties(election));

    let mut rows = Vec::with_capacity(built.len());
    for m in &built {
        let bia_cells = bia_parties
            .as_ref()
            .and_then(|ps| bia(m.name(), &visibilities, ps).ok());
        let (cp_m, cp_s) = (
            calibration_potential(election, m, CalibrationDirection::Moderate, cfg, cfg.k)
                .ok()
                .map(|c| c.value),
            calibration_potential(election, m, CalibrationDirection::Strong, cfg, cfg.k)
                .ok()
                .map(|c| c.value),
        );
        let (asc_cell, gin_cell) = match strength_and_env(election, m, cfg.k, cfg.parallel) {
            Ok((strengths, envs)) => (
                stats::pearson(&strengths, &envs),
                gini(&envs).ok(),
            ),
            Err(_) => (None, None),
        };
        rows.push(MethodScorecard {
            method: m.name().to_string(),
            bia1: bia_cells.as_ref().map(|b| b.bia1),
            bia2: bia_cells.as_ref().map(|b| b.bia2),
            bia2_party: bia_cells.map(|b| b.bia2_party),
            cp_m,
            cp_s,
            asc: asc_cell,
            gin: gin_cell,
            acc1: acc1_mode(election, m, cfg.parallel).ok(),
            acc2: acc2_mode(election, m, cfg.parallel).ok().map(|a| a.value),
            acc3: acc3(election, m, cfg.k, cfg).ok(),
        });
    }
    let (best, worst) = ScorecardTable::markers(&rows);
    Ok(ScorecardTable { rows, best, worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnswerScale, Candidate, PartyList, Voter, DEFAULT_WEIGHT_SET};
    use crate::testutil::{placed_election, toy_election};

    fn l2() -> MatchingMethod {
        MatchingMethod::from_kind(MethodKind::L2)
    }

    fn placed(seats: u32, cands: &[(&str, &str, &[f64])], voters: &[(&str, &[f64])]) -> Election {
        let owned: Vec<(&str, Vec<Option<f64>>)> = voters
            .iter()
            .map(|(id, a)| (*id, a.iter().copied().map(Some).collect()))
            .collect();
        let borrowed: Vec<(&str, &[Option<f64>])> =
            owned.iter().map(|(id, a)| (*id, a.as_slice())).collect();
        placed_election(seats, cands, &borrowed)
    }

    fn prefer(e: &mut Election, prefs: &[(&str, &str)]) {
        for (voter, party) in prefs {
            let v = e.voters.iter_mut().find(|v| v.id == *voter).unwrap();
            v.preferred_party = Some(party.to_string());
        }
    }

    // --- answer strength -----------------------------------------------------

    #[test]
    fn answer_strength_measures_deviation_from_neutral() {
        let qs: Vec<Question> = (0..4)
            .map(|i| Question::new(format!("q{i}"), i, AnswerScale::policy()))
            .collect();
        let poles = Profile::complete(vec![0.0, 100.0, 0.0, 100.0]);
        assert_eq!(answer_strength(&poles, &qs).unwrap(), 50.0);
        let mild = Profile::complete(vec![25.0, 75.0, 25.0, 75.0]);
        assert_eq!(answer_strength(&mild, &qs).unwrap(), 25.0);
    }

    #[test]
    fn answer_strength_mixes_scales_by_their_own_neutrals() {
        // 60 policy answers at poles plus 15 non-policy answers at neutral:
        // (60·50 + 15·0)/75 = 40.
        let mut qs = Vec::new();
        let mut answers = Vec::new();
        for i in 0..60 {
            qs.push(Question::new(format!("p{i}"), i, AnswerScale::policy()));
            answers.push(if i % 2 == 0 { 0.0 } else { 100.0 });
        }
        for i in 0..15 {
            let scale = if i % 2 == 0 {
                AnswerScale::value()
            } else {
                AnswerScale::budget()
            };
            qs.push(Question::new(format!("n{i}"), 60 + i, scale));
            answers.push(50.0);
        }
        let profile = Profile::complete(answers);
        assert_eq!(answer_strength(&profile, &qs).unwrap(), 40.0);
    }

    #[test]
    fn answer_strength_is_invariant_under_mirroring_about_neutral() {
        let e = toy_election(6, 5, 9, 77);
        for c in &e.candidates {
            let original = answer_strength(&c.profile, &e.questions).unwrap();
            let mirrored: Vec<f64> = c
                .profile
                .answers()
                .iter()
                .zip(&e.questions)
                .map(|(a, q)| {
                    let m = 2.0 * q.scale.neutral() - a.unwrap();
                    assert!(q.scale.allowed().contains(&m), "mirror stays on scale");
                    m
                })
                .collect();
            let flipped = answer_strength(&Profile::complete(mirrored), &e.questions).unwrap();
            assert_eq!(original, flipped);
        }
    }

    #[test]
    fn answer_strength_rejects_incomplete_or_mismatched_profiles() {
        let qs = vec![Question::new("q1", 0, AnswerScale::policy())];
        let incomplete = Profile::new(vec![None], vec![0.0]).unwrap();
        assert!(matches!(
            answer_strength(&incomplete, &qs).unwrap_err(),
            MetricError::IncompleteProfile
        ));
        let wrong_len = Profile::complete(vec![0.0, 25.0]);
        assert!(matches!(
            answer_strength(&wrong_len, &qs).unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
    }

    // --- expectation normalization ---------------------------------------------

    #[test]
    fn expectation_normalization_rescales_by_candidates_per_slot() {
        assert_eq!(expectation_normalized_visibility(0.5, 10, 5), 1.0);
        assert_eq!(expectation_normalized_visibility(0.0, 321, 7), 0.0);
        // A large-state shape: 1029 candidates for 36 seats at visibility
        // 0.2477 lands just above 7.08.
        let v = expectation_normalized_visibility(0.2477, 1029, 36);
        assert!((v - 7.080091666666666).abs() < 1e-12);
    }

    // --- BIA ---------------------------------------------------------------------

    fn vis(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
        entries.iter().map(|(p, v)| (p.to_string(), *v)).collect()
    }

    fn party_names(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_methods_have_zero_bias() {
        let shared = vis(&[("p1", 0.25), ("p2", 0.75)]);
        let all: BTreeMap<String, BTreeMap<String, f64>> = ["m1", "m2", "m3"]
            .into_iter()
            .map(|m| (m.to_string(), shared.clone()))
            .collect();
        let b = bia("m1", &all, &party_names(&["p1", "p2"])).unwrap();
        assert_eq!(b.bia1, 0.0);
        assert_eq!(b.bia2, 0.0);
        assert!(b.excluded.is_empty());
    }

    #[test]
    fn doubling_one_party_under_one_method_shows_up_as_one_over_party_count() {
        let base = vis(&[
            ("p1", 0.1),
            ("p2", 0.1),
            ("p3", 0.1),
            ("p4", 0.1),
            ("p5", 0.1),
            ("p6", 0.1),
            ("p7", 0.1),
            ("p8", 0.1),
        ]);
        let mut boosted = base.clone();
        boosted.insert("p3".into(), 0.2);
        let mut all = BTreeMap::new();
        all.insert("loud".to_string(), boosted);
        all.insert("m2".to_string(), base.clone());
        all.insert("m3".to_string(), base.clone());
        all.insert("m4".to_string(), base);
        let parties = party_names(&["p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"]);
        let b = bia("loud", &all, &parties).unwrap();
        assert_eq!(b.bia1, 0.125);
        assert_eq!(b.bia2, 1.0);
        assert_eq!(b.bia2_party, "p3");
        // The unperturbed methods see the boost only through the median of
        // the *others*, which the loud method now belongs to.
        let quiet = bia("m2", &all, &parties).unwrap();
        assert_eq!(quiet.bia1, 0.0);
    }

    #[test]
    fn bia_medians_are_computed_by_hand() {
        // Method A: 4, B: 1, C: 2 on a single party.
        let mut all = BTreeMap::new();
        all.insert("A".to_string(), vis(&[("p", 4.0)]));
        all.insert("B".to_string(), vis(&[("p", 1.0)]));
        all.insert("C".to_string(), vis(&[("p", 2.0)]));
        let parties = party_names(&["p"]);
        // A: median(1, 2) = 1.5 → (4 − 1.5)/1.5 = 5/3.
        let a = bia("A", &all, &parties).unwrap();
        assert!((a.bia2 - 5.0 / 3.0).abs() < 1e-15);
        // B: median(4, 2) = 3 → (1 − 3)/3 = −2/3.
        let b = bia("B", &all, &parties).unwrap();
        assert!((b.bia2 + 2.0 / 3.0).abs() < 1e-15);
        // C: median(4, 1) = 2.5 → (2 − 2.5)/2.5 = −0.2 — and the median
        // never includes C's own value of 2.
        let c = bia("C", &all, &parties).unwrap();
        assert_eq!(c.bia2, -0.2);
        assert_eq!(c.bia1, 0.2);
    }

    #[test]
    fn parties_with_zero_median_are_excluded_and_flagged() {
        let mut all = BTreeMap::new();
        all.insert("A".to_string(), vis(&[("p1", 0.5), ("p2", 0.5)]));
        all.insert("B".to_string(), vis(&[("p1", 1.0), ("p2", 0.0)]));
        all.insert("C".to_string(), vis(&[("p1", 1.0), ("p2", 0.0)]));
        let b = bia("A", &all, &party_names(&["p1", "p2"])).unwrap();
        assert_eq!(b.excluded, vec!["p2".to_string()]);
        assert_eq!(b.bia1, 0.5);
        assert_eq!(b.bia2, -0.5);
        assert_eq!(b.bia2_party, "p1");
        // All parties excluded → undefined.
        let mut degenerate = BTreeMap::new();
        degenerate.insert("A".to_string(), vis(&[("p", 1.0)]));
        degenerate.insert("B".to_string(), vis(&[("p", 0.0)]));
        assert!(matches!(
            bia("A", &degenerate, &party_names(&["p"])).unwrap_err(),
            MetricError::Undefined(_)
        ));
    }

    #[test]
    fn bia_preconditions_are_enforced() {
        let mut all = BTreeMap::new();
        all.insert("A".to_string(), vis(&[("p", 1.0)]));
        assert!(matches!(
            bia("A", &all, &party_names(&["p"])).unwrap_err(),
            MetricError::NotEnoughMethods
        ));
        all.insert("B".to_string(), vis(&[("p", 1.0)]));
        assert!(matches!(
            bia("A", &all, &[]).unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
        assert!(matches!(
            bia("missing", &all, &party_names(&["p"])).unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
        // A single other method is enough: its values are the median.
        let b = bia("A", &all, &party_names(&["p"])).unwrap();
        assert_eq!(b.bia1, 0.0);
    }

    #[test]
    fn default_bia_party_set_is_the_largest_by_share() {
        let mut e = placed(
            1,
            &[("aa", "alpha", &[0.0]), ("bb", "beta", &[100.0])],
            &[("v1", &[0.0])],
        );
        assert_eq!(default_bia_parties(&e), None);
        e.party_vote_shares = Some(
            (0..10)
                .map(|i| (format!("p{i}"), 0.01 * (i + 1) as f64))
                .collect(),
        );
        let parties = default_bia_parties(&e).unwrap();
        assert_eq!(parties.len(), 8);
        assert_eq!(parties[0], "p9");
        assert!(!parties.contains(&"p0".to_string()));
        assert!(!parties.contains(&"p1".to_string()));
    }

    // --- CP ------------------------------------------------------------------------

    /// Election on the budget scale so the scale contains its own neutral.
    /// Two seats for two candidates: every top-k slot is always filled by
    /// both, so neither party starts from zero visibility.
    fn all_neutral_election() -> Election {
        let questions = vec![
            Question::new("b1", 0, AnswerScale::budget()),
            Question::new("b2", 1, AnswerScale::budget()),
        ];
        let mk_cand = |id: &str, party: &str| Candidate {
            id: id.into(),
            sort_key: id.into(),
            state: "main".into(),
            party: party.into(),
            list: format!("main-{party}"),
            profile: Profile::complete(vec![50.0, 50.0]),
        };
        let mk_voter = |id: &str, answers: Vec<f64>, i: i64| Voter {
            id: id.into(),
            state: "main".into(),
            preferred_party: None,
            profile: Profile::complete(answers),
            timestamp: i,
            election_id: None,
        };
        Election {
            questions,
            weight_set: DEFAULT_WEIGHT_SET.to_vec(),
            states: [("main".to_string(), 2)].into_iter().collect(),
            candidates: vec![mk_cand("aa", "alpha"), mk_cand("bb", "beta")],
            voters: vec![
                mk_voter("v1", vec![0.0, 25.0], 0),
                mk_voter("v2", vec![75.0, 100.0], 1),
                mk_voter("v3", vec![50.0, 50.0], 2),
            ],
            lists: vec![
                PartyList {
                    id: "main-alpha".into(),
                    state: "main".into(),
                    party: "alpha".into(),
                    members: vec!["aa".into()],
                },
                PartyList {
                    id: "main-beta".into(),
                    state: "main".into(),
                    party: "beta".into(),
                    members: vec!["bb".into()],
                },
            ],
            party_vote_shares: Some(
                [("alpha".to_string(), 0.6), ("beta".to_string(), 0.4)]
                    .into_iter()
                    .collect(),
            ),
        }
    }

    #[test]
    fn all_neutral_candidates_have_zero_calibration_potential() {
        // Neutral answers are fixed points of both calibration directions,
        // so the attacked pass is identical to the baseline.
        let e = all_neutral_election();
        let method = l2();
        let cfg = MetricConfig::default();
        for direction in [CalibrationDirection::Moderate, CalibrationDirection::Strong] {
            let cp = calibration_potential(&e, &method, direction, &cfg, None).unwrap();
            assert_eq!(cp.value, 0.0);
            assert!(cp.excluded.is_empty());
        }
    }

    #[test]
    fn single_weighted_party_cp_equals_its_own_relative_change() {
        let mut e = placed(
            1,
            &[
                ("at1", "target", &[0.0, 0.0]),
                ("at2", "target", &[100.0, 100.0]),
                ("zo1", "other", &[25.0, 25.0]),
                ("zo2", "other", &[75.0, 75.0]),
            ],
            &[
                ("v1", &[25.0, 25.0]),
                ("v2", &[75.0, 75.0]),
                ("v3", &[0.0, 0.0]),
            ],
        );
        e.party_vote_shares = Some([("target".to_string(), 1.0)].into_iter().collect());
        let method = l2();
        let cfg = MetricConfig::default();
        let cp = calibration_potential(&e, &method, CalibrationDirection::Moderate, &cfg, Some(1))
            .unwrap();
        let report = crate::attacks::calibration_experiment(
            &e,
            "target",
            &method,
            CalibrationDirection::Moderate,
            Some(1),
        )
        .unwrap();
        assert_eq!(cp.value, report.row("target").unwrap().rel_change.unwrap());
    }

    #[test]
    fn cp_weights_the_parties_by_their_shares() {
        let mut e = placed(
            1,
            &[
                ("aa", "alpha", &[0.0, 0.0]),
                ("bb", "beta", &[100.0, 75.0]),
            ],
            &[
                ("v1", &[0.0, 25.0]),
                ("v2", &[75.0, 75.0]),
                ("v3", &[25.0, 75.0]),
                ("v4", &[100.0, 100.0]),
            ],
        );
        e.party_vote_shares = Some(
            [("alpha".to_string(), 0.5), ("beta".to_string(), 0.25)]
                .into_iter()
                .collect(),
        );
        let method = l2();
        let cfg = MetricConfig::default();
        // Baseline: alpha wins only v1 (share 1/4); beta takes v2–v4, with
        // v3 a narrow call (75 vs 79.06). Moderated alpha sits on (25,25)
        // and pulls v3 over (distance 50 vs beta's 75) → share 2/4, a
        // relative gain of 1. Moderated beta (75,75) keeps exactly its
        // three voters → gain 0. Weighting by shares 0.5 and 0.25:
        let cp = calibration_potential(&e, &method, CalibrationDirection::Moderate, &cfg, Some(1))
            .unwrap();
        assert!(cp.excluded.is_empty());
        assert_eq!(cp.value, (0.5 * 1.0 + 0.25 * 0.0) / 0.75);
    }

    #[test]
    fn cp_excludes_zero_baseline_parties_and_validates_weights() {
        let mut e = placed(
            1,
            &[
                ("aa", "alpha", &[25.0, 25.0]),
                ("bb", "beta", &[100.0, 100.0]),
            ],
            &[("v1", &[25.0, 25.0]), ("v2", &[0.0, 25.0])],
        );
        // beta never wins a slot → zero baseline → excluded.
        e.party_vote_shares = Some(
            [("alpha".to_string(), 0.5), ("beta".to_string(), 0.5)]
                .into_iter()
                .collect(),
        );
        let method = l2();
        let cfg = MetricConfig::default();
        let cp = calibration_potential(&e, &method, CalibrationDirection::Strong, &cfg, Some(1))
            .unwrap();
        assert_eq!(cp.excluded, vec!["beta".to_string()]);

        e.party_vote_shares = None;
        assert!(matches!(
            calibration_potential(&e, &method, CalibrationDirection::Strong, &cfg, Some(1))
                .unwrap_err(),
            MetricError::MissingVoteShares
        ));
        let bad = MetricConfig {
            cp_weights: Some([("alpha".to_string(), 0.9), ("beta".to_string(), 0.9)]
                .into_iter()
                .collect()),
            ..MetricConfig::default()
        };
        assert!(matches!(
            calibration_potential(&e, &method, CalibrationDirection::Strong, &bad, Some(1))
                .unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
    }

    // --- ASC --------------------------------------------------------------------

    #[test]
    fn visibility_affine_in_strength_gives_perfect_correlation() {
        // Strengths 25, 37.5, 37.5, 50 with top-1 shares 0, 0.25, 0.25, 0.5:
        // expectation-normalized visibility is affine in strength.
        let e = placed(
            1,
            &[
                ("a", "p1", &[0.0, 0.0]),   // strength 50
                ("b", "p2", &[0.0, 25.0]),  // strength 37.5
                ("c", "p3", &[25.0, 25.0]), // strength 25
                ("d", "p4", &[25.0, 0.0]),  // strength 37.5
            ],
            &[
                ("v1", &[0.0, 0.0]),
                ("v2", &[0.0, 0.0]),
                ("v3", &[0.0, 25.0]),
                ("v4", &[25.0, 0.0]),
            ],
        );
        let method = l2();
        let r = asc(&e, &method, Some(1)).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn asc_is_undefined_on_constant_strength() {
        let e = placed(
            1,
            &[("a", "p1", &[0.0, 0.0]), ("b", "p2", &[100.0, 100.0])],
            &[("v1", &[0.0, 0.0]), ("v2", &[0.0, 25.0])],
        );
        let method = l2();
        assert!(matches!(
            asc(&e, &method, Some(1)).unwrap_err(),
            MetricError::Undefined(_)
        ));
    }

    #[test]
    fn two_candidates_give_a_degenerate_correlation() {
        let e = placed(
            1,
            &[("a", "p1", &[0.0, 0.0]), ("b", "p2", &[25.0, 25.0])],
            &[("v1", &[0.0, 0.0]), ("v2", &[0.0, 25.0])],
        );
        let method = l2();
        // Two points with distinct strengths and distinct visibilities: ±1.
        let r = asc(&e, &method, Some(1)).unwrap();
        assert!((r.abs() - 1.0).abs() < 1e-12, "r = {r}");
    }

    // --- GIN --------------------------------------------------------------------

    #[test]
    fn gini_matches_the_mean_absolute_difference_formula() {
        assert_eq!(gini(&[3.0, 3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
        assert_eq!(gini(&[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn gini_is_scale_invariant() {
        let xs = [0.2, 1.4, 0.0, 3.3, 0.7, 0.7];
        let base = gini(&xs).unwrap();
        for c in [0.01, 3.0, 1e6] {
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            assert!((gini(&scaled).unwrap() - base).abs() < 1e-12);
        }
        // Direct O(n²) evaluation of Σᵢⱼ|xᵢ−xⱼ|/(2n²·mean) as a cross-check.
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut pair_sum = 0.0;
        for a in &xs {
            for b in &xs {
                pair_sum += (a - b).abs();
            }
        }
        assert!((base - pair_sum / (2.0 * n * n * mean)).abs() < 1e-12);
    }

    #[test]
    fn gini_rejects_degenerate_inputs() {
        assert!(matches!(gini(&[]).unwrap_err(), MetricError::Undefined(_)));
        assert!(matches!(
            gini(&[0.0, 0.0]).unwrap_err(),
            MetricError::Undefined(_)
        ));
        assert!(matches!(
            gini(&[1.0, -0.5]).unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
    }

    // --- ACC1 / ACC2 ------------------------------------------------------------

    /// Three lists with hand-computable rankings for three voters.
    fn preference_election() -> Election {
        let mut e = placed(
            1,
            &[
                ("aa", "alpha", &[0.0, 0.0]),
                ("bb", "beta", &[100.0, 100.0]),
                ("cc", "gamma", &[25.0, 75.0]),
            ],
            &[
                ("v1", &[0.0, 0.0]),
                ("v2", &[0.0, 25.0]),
                ("v3", &[75.0, 100.0]),
            ],
        );
        prefer(
            &mut e,
            &[("v1", "alpha"), ("v2", "beta"), ("v3", "gamma")],
        );
        e
    }

    #[test]
    fn acc_metrics_match_hand_rankings() {
        // List orders (single-member lists ↔ candidate distances):
        //   v1 (0,0):    alpha, gamma, beta → pref alpha: rank 1 → 0
        //   v2 (0,25):   alpha, gamma, beta → pref beta:  rank 3 → 1
        //   v3 (75,100): beta, gamma, alpha → pref gamma: rank 2 → 0.5
        let e = preference_election();
        let method = l2();
        let a1 = acc1(&e, &method).unwrap();
        assert!((a1 - 1.0 / 3.0).abs() < 1e-15);
        let a2 = acc2(&e, &method).unwrap();
        assert_eq!(a2.excluded, 0);
        assert_eq!(a2.value, 0.5);
    }

    #[test]
    fn perfect_acc1_forces_zero_acc2() {
        let mut e = preference_election();
        // Point every voter at their actual top list.
        prefer(&mut e, &[("v2", "alpha"), ("v3", "beta")]);
        let method = l2();
        assert_eq!(acc1(&e, &method).unwrap(), 1.0);
        assert_eq!(acc2(&e, &method).unwrap().value, 0.0);
    }

    #[test]
    fn acc2_excludes_unlisted_preferences_and_single_list_states() {
        let mut e = preference_election();
        prefer(&mut e, &[("v3", "delta")]); // no delta list anywhere
        let method = l2();
        let a2 = acc2(&e, &method).unwrap();
        assert_eq!(a2.excluded, 1);
        // v1 rank 1 → 0, v2 rank 3 → 1.
        assert_eq!(a2.value, 0.5);
        // The excluded voter still counts as an ACC1 miss.
        let a1 = acc1(&e, &method).unwrap();
        assert!((a1 - 1.0 / 3.0).abs() < 1e-15);

        // One party only → a single list → everyone excluded.
        let mut single = placed(
            1,
            &[("aa", "alpha", &[0.0, 0.0])],
            &[("v1", &[0.0, 0.0])],
        );
        prefer(&mut single, &[("v1", "alpha")]);
        assert_eq!(acc1(&single, &method).unwrap(), 1.0);
        assert!(matches!(
            acc2(&single, &method).unwrap_err(),
            MetricError::Undefined(_)
        ));
    }

    #[test]
    fn acc_metrics_need_preferring_voters() {
        let e = placed(
            1,
            &[("aa", "alpha", &[0.0, 0.0])],
            &[("v1", &[0.0, 0.0])],
        );
        let method = l2();
        assert!(matches!(
            acc1(&e, &method).unwrap_err(),
            MetricError::NoPreferredVoters
        ));
        assert!(matches!(
            acc2(&e, &method).unwrap_err(),
            MetricError::NoPreferredVoters
        ));
    }

    // --- ACC3 --------------------------------------------------------------------

    fn weighted_voter(id: &str, answers: Vec<f64>, weights: Vec<f64>, i: i64) -> Voter {
        Voter {
            id: id.into(),
            state: "main".into(),
            preferred_party: None,
            profile: Profile::new(answers.into_iter().map(Some).collect(), weights).unwrap(),
            timestamp: i,
            election_id: None,
        }
    }

    #[test]
    fn acc3_counts_strong_question_disagreements_by_hand() {
        let mut e = placed(
            1,
            &[("aa", "alpha", &[0.0, 100.0]), ("bb", "beta", &[100.0, 0.0])],
            &[],
        );
        // v1: top match aa; strong q1 where both answer 0 → agree.
        e.voters
            .push(weighted_voter("v1", vec![0.0, 0.0], vec![2.0, 1.0], 0));
        // v2: tie (aa by sort key); strong q1 opposite sides, q2 same side.
        e.voters
            .push(weighted_voter("v2", vec![100.0, 100.0], vec![2.0, 2.0], 1));
        let method = l2();
        let cfg = MetricConfig::default();
        // Triples: (v1,aa,q1) agree; (v2,aa,q1) opposite; (v2,aa,q2) agree.
        let a3 = acc3(&e, &method, Some(1), &cfg).unwrap();
        assert!((a3 - 1.0 / 3.0).abs() < 1e-15);
        // Raising k to 2 adds bb's triples: (v1,bb,q1) opposite,
        // (v2,bb,q1) agree, (v2,bb,q2) opposite → 3 of 6 overall.
        let a3 = acc3(&e, &method, Some(2), &cfg).unwrap();
        assert_eq!(a3, 0.5);
    }

    #[test]
    fn acc3_hits_both_boundaries() {
        let mut agree = placed(1, &[("aa", "alpha", &[0.0, 0.0])], &[]);
        agree
            .voters
            .push(weighted_voter("v1", vec![25.0, 25.0], vec![2.0, 2.0], 0));
        let method = l2();
        let cfg = MetricConfig::default();
        assert_eq!(acc3(&agree, &method, Some(1), &cfg).unwrap(), 0.0);

        let mut oppose = placed(1, &[("aa", "alpha", &[100.0, 100.0])], &[]);
        oppose
            .voters
            .push(weighted_voter("v1", vec![25.0, 0.0], vec![2.0, 2.0], 0));
        assert_eq!(acc3(&oppose, &method, Some(1), &cfg).unwrap(), 1.0);
    }

    #[test]
    fn acc3_respects_the_strong_weight_knob_and_requires_triples() {
        let mut e = placed(1, &[("aa", "alpha", &[0.0, 0.0])], &[]);
        e.voters
            .push(weighted_voter("v1", vec![100.0, 25.0], vec![1.0, 1.0], 0));
        let method = l2();
        // No weight-2 answers anywhere → no triples at the default threshold.
        assert!(matches!(
            acc3(&e, &method, Some(1), &MetricConfig::default()).unwrap_err(),
            MetricError::NoQualifyingTriples
        ));
        // Lowering the threshold to 1 counts both questions: one opposite,
        // one same-side.
        let cfg = MetricConfig {
            strong_weight: Some(1.0),
            ..MetricConfig::default()
        };
        assert_eq!(acc3(&e, &method, Some(1), &cfg).unwrap(), 0.5);
    }

    // --- method comparison ---------------------------------------------------------

    #[test]
    fn single_method_comparison_flags_bias_but_fills_the_rest() {
        let mut e = toy_election(8, 30, 5, 41);
        e.party_vote_shares = Some(
            [
                ("alpha".to_string(), 0.4),
                ("beta".to_string(), 0.35),
                ("gamma".to_string(), 0.25),
            ]
            .into_iter()
            .collect(),
        );
        let table = method_comparison(&e, &[MethodKind::L2], &MetricConfig::default()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.bia1, None);
        assert_eq!(row.bia2, None);
        assert_eq!(row.bia2_party, None);
        assert!(row.cp_m.is_some());
        assert!(row.asc.is_some());
        assert!(row.gin.is_some());
        assert!(row.acc1.is_some());
        assert!(row.acc2.is_some());
        assert!(row.acc3.is_some());
    }

    #[test]
    fn methods_with_identical_visibilities_have_zero_bias_rows() {
        // One candidate: every method gives its party the whole visibility.
        let mut e = placed(1, &[("aa", "alpha", &[0.0, 25.0])], &[("v1", &[0.0, 25.0])]);
        e.party_vote_shares = Some([("alpha".to_string(), 1.0)].into_iter().collect());
        let table = method_comparison(
            &e,
            &[MethodKind::L2, MethodKind::L1],
            &MetricConfig::default(),
        )
        .unwrap();
        for row in &table.rows {
            assert_eq!(row.bia1, Some(0.0));
            assert_eq!(row.bia2, Some(0.0));
        }
    }

    #[test]
    fn comparison_cells_equal_their_standalone_operations() {
        let mut e = toy_election(10, 40, 5, 7);
        e.party_vote_shares = Some(
            [
                ("alpha".to_string(), 0.4),
                ("beta".to_string(), 0.35),
                ("gamma".to_string(), 0.25),
            ]
            .into_iter()
            .collect(),
        );
        let kinds = [MethodKind::L2, MethodKind::L1, MethodKind::AgreementCount];
        let cfg = MetricConfig::default();
        let table = method_comparison(&e, &kinds, &cfg).unwrap();

        let mut visibilities = BTreeMap::new();
        for kind in kinds {
            let m = MatchingMethod::from_kind(kind);
            visibilities.insert(
                m.name().to_string(),
                crate::ranking::party_visibility_global(
                    &e,
                    &m,
                    None,
                    &TieBreakPolicy::LexicographicSortKey,
                )
                .unwrap(),
            );
        }
        let parties = default_bia_parties(&e).unwrap();
        for (row, kind) in table.rows.iter().zip(kinds) {
            let m = MatchingMethod::from_kind(kind);
            assert_eq!(row.method, m.name());
            let b = bia(m.name(), &visibilities, &parties).unwrap();
            assert_eq!(row.bia1, Some(b.bia1));
            assert_eq!(row.bia2, Some(b.bia2));
            assert_eq!(row.bia2_party.as_deref(), Some(b.bia2_party.as_str()));
            let cp_m =
                calibration_potential(&e, &m, CalibrationDirection::Moderate, &cfg, None).unwrap();
            let cp_s =
                calibration_potential(&e, &m, CalibrationDirection::Strong, &cfg, None).unwrap();
            assert_eq!(row.cp_m, Some(cp_m.value));
            assert_eq!(row.cp_s, Some(cp_s.value));
            assert_eq!(row.asc, Some(asc(&e, &m, None).unwrap()));
            let (_, envs) = strength_and_env(&e, &m, None, true).unwrap();
            assert_eq!(row.gin, Some(gini(&envs).unwrap()));
            assert_eq!(row.acc1, Some(acc1(&e, &m).unwrap()));
            assert_eq!(row.acc2, Some(acc2(&e, &m).unwrap().value));
            assert_eq!(row.acc3, Some(acc3(&e, &m, None, &cfg).unwrap()));
        }
    }

    #[test]
    fn execution_mode_does_not_change_the_table() {
        let mut e = toy_election(12, 50, 6, 31);
        e.party_vote_shares = Some(
            [
                ("alpha".to_string(), 0.4),
                ("beta".to_string(), 0.35),
                ("gamma".to_string(), 0.25),
            ]
            .into_iter()
            .collect(),
        );
        let kinds = [MethodKind::L2, MethodKind::Mahalanobis, MethodKind::Hybrid];
        let serial = method_comparison(&e, &kinds, &MetricConfig::default()).unwrap();
        let parallel = method_comparison(
            &e,
            &kinds,
            &MetricConfig {
                parallel: true,
                ..MetricConfig::default()
            },
        )
        .unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.to_csv(), parallel.to_csv());
    }

    #[test]
    fn scorecards_serialize_and_mark_leaders() {
        let mut e = toy_election(8, 30, 4, 19);
        e.party_vote_shares = Some(
            [
                ("alpha".to_string(), 0.4),
                ("beta".to_string(), 0.35),
                ("gamma".to_string(), 0.25),
            ]
            .into_iter()
            .collect(),
        );
        let kinds = [MethodKind::L2, MethodKind::L1];
        let table = method_comparison(&e, &kinds, &MetricConfig::default()).unwrap();
        let csv = table.to_csv();
        assert!(csv.starts_with(
            "method,BIA1,BIA2,BIA2_party,CP_M,CP_S,ASC,GIN,ACC1,ACC2,ACC3\n"
        ));
        assert_eq!(csv.lines().count(), 1 + table.rows.len());

        // Markers agree with a direct scan of the column.
        let best_acc1 = table
            .rows
            .iter()
            .max_by(|a, b| a.acc1.partial_cmp(&b.acc1).unwrap())
            .unwrap();
        assert_eq!(table.best["ACC1"], best_acc1.method);
        let best_acc3 = table
            .rows
            .iter()
            .min_by(|a, b| a.acc3.partial_cmp(&b.acc3).unwrap())
            .unwrap();
        assert_eq!(table.best["ACC3"], best_acc3.method);
        assert!(!table.best.contains_key("GIN"));

        // Duplicate methods are rejected.
        assert!(matches!(
            method_comparison(&e, &[MethodKind::L2, MethodKind::L2], &MetricConfig::default())
                .unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
        assert!(matches!(
            method_comparison(&e, &[], &MetricConfig::default()).unwrap_err(),
            MetricError::InvalidConfig(_)
        ));
    }
}
