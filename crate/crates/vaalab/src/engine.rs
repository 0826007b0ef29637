//! Internal computation core shared by the ranking, metrics and attack
//! modules: an indexed view of an election, fused per-state distance-row
//! evaluation for every method, tie-policy ranking with slot credits, and
//! scenario overrides so experiments can re-run passes with patched answers
//! or weights without cloning the election.
//!
//! Conventions:
//!
//! * Candidate/voter answer matrices are row-major `[entity × question]`
//!   `f64` slabs; unanswered voter questions are `NaN`.
//! * A raw distance row uses two sentinels: `NaN` for the angular
//!   neutral-profile outcome and `+∞` for an empty overlap. [`resolve_row`]
//!   maps `NaN` to (max finite distance in the row) + 1 — so an all-neutral
//!   comparison ranks strictly worst among scored candidates — and leaves
//!   `+∞` as the flag the ranking layer reports as "no score".
//! * All aggregation folds run in a fixed voter order, so the parallel mode
//!   (rayon map, collect in order, sequential fold) is bit-identical to the
//!   sequential one.

use crate::matching::{MahalanobisOptions, MatchError, MatchingMethod, PrecisionContext};
use crate::model::{Election, ModelError, PartyList, VisibilityTarget};
use crate::ranking::{ListScoreMode, TieBreakPolicy};
use rand::Rng;
use rayon::prelude::*;
use std::collections::HashMap;

/// Sentinel for pairs whose distance is undefined but scored via the
/// worst-plus-one fallback (angular neutral profiles).
pub(crate) const NEUTRAL: f64 = f64::NAN;
/// Sentinel for pairs with no participating questions; stays infinite and
/// flags the entity as unscored.
pub(crate) const FLAGGED: f64 = f64::INFINITY;

/// One state's slice of the indexed election.
pub(crate) struct StateBlock<'a> {
    pub id: &'a str,
    pub seats: u32,
    /// Global candidate indices, in election order.
    pub cands: Vec<u32>,
    /// Global voter indices, in election order.
    pub voters: Vec<u32>,
    /// Indices into `election.lists`, in election order.
    pub lists: Vec<u32>,
    /// Per local list: member positions into `cands`.
    pub list_members: Vec<Vec<u32>>,
    /// Per candidate position: rank under (sort_key, id, index) — the
    /// deterministic tie order.
    pub cand_rank: Vec<u32>,
    /// Per list position: rank under (list id, index).
    pub list_rank: Vec<u32>,
}

/// Preprocessed election: dense matrices and per-state index blocks.
pub(crate) struct Indexed<'a> {
    pub election: &'a Election,
    pub n_q: usize,
    pub neutrals: Vec<f64>,
    /// Sorted unique party names.
    pub parties: Vec<&'a str>,
    /// Per global candidate: index into `parties`.
    pub cand_party: Vec<u32>,
    /// Row-major `[n_candidates × n_q]`; candidates answer everything.
    pub cand_answers: Vec<f64>,
    /// Row-major `[n_voters × n_q]`; `NaN` = unanswered.
    pub voter_answers: Vec<f64>,
    pub voter_weights: Vec<f64>,
    pub states: Vec<StateBlock<'a>>,
}

impl<'a> Indexed<'a> {
    /// Builds the index. The election should already be structurally valid;
    /// this only re-checks what it needs to avoid undefined behavior
    /// (known states/candidates, complete candidate profiles).
    pub fn build(e: &'a Election) -> Result<Self, ModelError> {
        let n_q = e.questions.len();
        let neutrals: Vec<f64> = e.questions.iter().map(|q| q.scale.neutral()).collect();

        let mut parties: Vec<&str> = e.candidates.iter().map(|c| c.party.as_str()).collect();
        parties.sort_unstable();
        parties.dedup();
        let party_pos: HashMap<&str, u32> = parties
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as u32))
            .collect();

        let mut state_pos: HashMap<&str, usize> = HashMap::new();
        let mut states: Vec<StateBlock<'a>> = Vec::new();
        for (id, &seats) in &e.states {
            state_pos.insert(id.as_str(), states.len());
            states.push(StateBlock {
                id,
                seats,
                cands: Vec::new(),
                voters: Vec::new(),
                lists: Vec::new(),
                list_members: Vec::new(),
                cand_rank: Vec::new(),
                list_rank: Vec::new(),
            });
        }

        let mut cand_party = Vec::with_capacity(e.candidates.len());
        let mut cand_answers = Vec::with_capacity(e.candidates.len() * n_q);
        // Per global candidate: its position within its state block.
        let mut pos_in_state = vec![0u32; e.candidates.len()];
        let mut cand_global: HashMap<&str, u32> = HashMap::new();
        for (g, c) in e.candidates.iter().enumerate() {
            let si = *state_pos
                .get(c.state.as_str())
                .ok_or_else(|| ModelError::UnknownState(c.state.clone()))?;
            pos_in_state[g] = states[si].cands.len() as u32;
            states[si].cands.push(g as u32);
            cand_party.push(*party_pos.get(c.party.as_str()).expect("interned above"));
            cand_global.insert(c.id.as_str(), g as u32);
            if c.profile.len() != n_q {
                return Err(ModelError::ProfileLengthMismatch {
                    answers: c.profile.len(),
                    weights: n_q,
                });
            }
            for a in c.profile.answers() {
                cand_answers
                    .push(a.ok_or_else(|| ModelError::IncompleteCandidate(c.id.clone()))?);
            }
        }

        let mut voter_answers = Vec::with_capacity(e.voters.len() * n_q);
        let mut voter_weights = Vec::with_capacity(e.voters.len() * n_q);
        for (g, v) in e.voters.iter().enumerate() {
            let si = *state_pos
                .get(v.state.as_str())
                .ok_or_else(|| ModelError::UnknownState(v.state.clone()))?;
            states[si].voters.push(g as u32);
            if v.profile.len() != n_q {
                return Err(ModelError::ProfileLengthMismatch {
                    answers: v.profile.len(),
                    weights: n_q,
                });
            }
            for (a, &w) in v.profile.answers().iter().zip(v.profile.weights()) {
                voter_answers.push(a.unwrap_or(f64::NAN));
                voter_weights.push(w);
            }
        }

        for (li, l) in e.lists.iter().enumerate() {
            let si = *state_pos
                .get(l.state.as_str())
                .ok_or_else(|| ModelError::UnknownState(l.state.clone()))?;
            let mut members = Vec::with_capacity(l.members.len());
            for m in &l.members {
                let g = *cand_global
                    .get(m.as_str())
                    .ok_or_else(|| ModelError::UnknownCandidate(m.clone()))?;
                members.push(pos_in_state[g as usize]);
            }
            states[si].lists.push(li as u32);
            states[si].list_members.push(members);
        }

        for st in &mut states {
            st.cand_rank = tie_ranks(st.cands.len(), |&a, &b| {
                let ca = &e.candidates[st.cands[a] as usize];
                let cb = &e.candidates[st.cands[b] as usize];
                (ca.sort_key.as_bytes(), ca.id.as_bytes(), st.cands[a])
                    .cmp(&(cb.sort_key.as_bytes(), cb.id.as_bytes(), st.cands[b]))
            });
            st.list_rank = tie_ranks(st.lists.len(), |&a, &b| {
                let la: &PartyList = &e.lists[st.lists[a] as usize];
                let lb: &PartyList = &e.lists[st.lists[b] as usize];
                (la.id.as_bytes(), st.lists[a]).cmp(&(lb.id.as_bytes(), st.lists[b]))
            });
        }

        Ok(Indexed {
            election: e,
            n_q,
            neutrals,
            parties,
            cand_party,
            cand_answers,
            voter_answers,
            voter_weights,
            states,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.election.candidates.len()
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn voter_row(&self, g: u32) -> (&[f64], &[f64]) {
        let o = g as usize * self.n_q;
        (
            &self.voter_answers[o..o + self.n_q],
            &self.voter_weights[o..o + self.n_q],
        )
    }
}

/// Ranks positions `0..n` under `cmp`: `rank[i]` is the position's index in
/// the sorted order, so comparing ranks is equivalent to comparing keys.
fn tie_ranks<F>(n: usize, cmp: F) -> Vec<u32>
where
    F: Fn(&usize, &usize) -> std::cmp::Ordering,
{
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(cmp);
    let mut rank = vec![0u32; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    rank
}

/// Answer/weight overrides applied to a pass without touching the election.
#[derive(Default, Clone, Copy)]
pub(crate) struct Scenario<'a> {
    /// Full replacement of the candidate answer matrix.
    pub cand_answers: Option<&'a [f64]>,
    /// Global indices of candidates whose rows differ from the index
    /// baseline; enables delta passes over cached rows.
    pub changed_cands: Option<&'a [u32]>,
    /// Full replacement of the voter answer matrix.
    pub voter_answers: Option<&'a [f64]>,
    /// Full replacement of the voter weight matrix.
    pub voter_weights: Option<&'a [f64]>,
    /// Restrict to these global voter indices.
    pub voter_subset: Option<&'a [u32]>,
}

/// What per-voter structure a pass should retain.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Collect {
    Nothing,
    /// The top-k entity positions per voter (unordered set).
    TopK,
    /// The complete entity order per voter (rankings only; not valid for
    /// proportional credit).
    FullOrder,
}

#[derive(Clone)]
pub(crate) struct PassConfig<'a> {
    pub method: &'a MatchingMethod,
    pub target: VisibilityTarget,
    pub k_override: Option<u32>,
    pub tiebreak: TieBreakPolicy,
    pub list_mode: ListScoreMode,
    pub parallel: bool,
    pub collect: Collect,
}

impl<'a> PassConfig<'a> {
    pub fn new(method: &'a MatchingMethod, target: VisibilityTarget) -> Self {
        PassConfig {
            method,
            target,
            k_override: None,
            tiebreak: TieBreakPolicy::LexicographicSortKey,
            list_mode: ListScoreMode::MeanOfScores,
            parallel: false,
            collect: Collect::Nothing,
        }
    }
}

/// Per-state result of a pass. `credit[p]` is the number of top-k slots
/// (possibly fractional under proportional credit) entity position `p`
/// received, summed over counted voters.
pub(crate) struct StatePass {
    pub k: u32,
    pub voters_counted: u64,
    pub credit: Vec<f64>,
    pub topk: Option<Vec<(u32, Vec<u32>)>>,
    pub order: Option<Vec<(u32, Vec<u32>)>>,
}

pub(crate) struct PassOutcome {
    pub states: Vec<StatePass>,
}

/// Cached raw distance rows from a capture pass, reusable by delta passes
/// that change only a known subset of candidates.
pub(crate) struct RawRows {
    /// Per state: `[voter-in-state-order × candidate position]`, raw
    /// (sentinels included).
    per_state: Vec<Vec<f64>>,
}

enum RowMode<'a> {
    Fresh,
    Capture,
    Delta(&'a RawRows),
}

pub(crate) fn run_pass(
    ix: &Indexed,
    cfg: &PassConfig,
    scn: &Scenario,
) -> Result<PassOutcome, MatchError> {
    run_pass_impl(ix, cfg, scn, RowMode::Fresh).map(|(o, _)| o)
}

/// Runs a candidate-target pass and captures the raw rows for later delta
/// reuse. Not available for Mahalanobis (whose rows depend on the whole
/// candidate field through the covariance).
pub(crate) fn run_pass_capture(
    ix: &Indexed,
    cfg: &PassConfig,
    scn: &Scenario,
) -> Result<(PassOutcome, RawRows), MatchError> {
    assert!(
        !cfg.method.needs_precision_context() && cfg.target == VisibilityTarget::Candidate,
        "row capture is only valid for per-pair methods on candidate passes"
    );
    run_pass_impl(ix, cfg, scn, RowMode::Capture).map(|(o, rows)| (o, rows.expect("captured")))
}

/// Re-runs a captured pass with `scn.changed_cands` rows recomputed and all
/// other distances reused. Voter matrices must match the capture pass.
pub(crate) fn run_pass_delta(
    ix: &Indexed,
    cfg: &PassConfig,
    scn: &Scenario,
    base: &RawRows,
) -> Result<PassOutcome, MatchError> {
    assert!(
        !cfg.method.needs_precision_context() && cfg.target == VisibilityTarget::Candidate,
        "delta passes are only valid for per-pair methods on candidate passes"
    );
    run_pass_impl(ix, cfg, scn, RowMode::Delta(base)).map(|(o, _)| o)
}

fn run_pass_impl(
    ix: &Indexed,
    cfg: &PassConfig,
    scn: &Scenario,
    mode: RowMode,
) -> Result<(PassOutcome, Option<RawRows>), MatchError> {
    let eff_cand: &[f64] = scn.cand_answers.unwrap_or(&ix.cand_answers);
    let v_ans: &[f64] = scn.voter_answers.unwrap_or(&ix.voter_answers);
    let v_w: &[f64] = scn.voter_weights.unwrap_or(&ix.voter_weights);
    let n_q = ix.n_q;

    let subset_mask: Option<Vec<bool>> = scn.voter_subset.map(|s| {
        let mut m = vec![false; ix.election.voters.len()];
        for &g in s {
            m[g as usize] = true;
        }
        m
    });

    // Pooled covariance is shared by every state.
    let pooled_ctx = pooled_precision(ix, cfg.method, eff_cand)?;

    let pseudo_rows =
        cfg.target == VisibilityTarget::List && cfg.list_mode == ListScoreMode::ScoreOfMean;
    let list_aggregate =
        cfg.target == VisibilityTarget::List && cfg.list_mode == ListScoreMode::MeanOfScores;

    let mut states_out = Vec::with_capacity(ix.states.len());
    let mut captured: Vec<Vec<f64>> = Vec::new();
    let capture = matches!(mode, RowMode::Capture);

    for (si, st) in ix.states.iter().enumerate() {
        let k = cfg.k_override.unwrap_or(match cfg.target {
            VisibilityTarget::List => 1,
            _ => st.seats,
        });
        let prep = if pseudo_rows {
            StatePrep::build_pseudo_lists(ix, cfg.method, eff_cand, st, pooled_ctx.as_ref())?
        } else {
            StatePrep::build_candidates(ix, cfg.method, eff_cand, st, pooled_ctx.as_ref())?
        };
        let eval = StateEval::new(ix, cfg.method, eff_cand, st, &prep);
        let changed_local: Vec<u32> = match (&mode, scn.changed_cands) {
            (RowMode::Delta(_), Some(changed)) => {
                let mut set: Vec<u32> = changed
                    .iter()
                    .filter_map(|&g| st.cands.iter().position(|&c| c == g).map(|p| p as u32))
                    .collect();
                set.sort_unstable();
                set
            }
            _ => Vec::new(),
        };
        let base_rows = match &mode {
            RowMode::Delta(b) => Some(&b.per_state[si]),
            _ => None,
        };

        let voters: Vec<u32> = st
            .voters
            .iter()
            .copied()
            .filter(|&g| subset_mask.as_ref().is_none_or(|m| m[g as usize]))
            .collect();
        let n_ranked = if cfg.target == VisibilityTarget::List {
            st.lists.len()
        } else {
            st.cands.len()
        };

        let eval_voter = |scratch: &mut Scratch, row_i: usize, g: u32| -> VoterOut {
            let vo = g as usize * n_q;
            let va = &v_ans[vo..vo + n_q];
            let vw = &v_w[vo..vo + n_q];
            match base_rows {
                Some(rows) => {
                    scratch.row.resize(eval.n_rows(), 0.0);
                    let o = row_i * eval.n_rows();
                    scratch.row.copy_from_slice(&rows[o..o + eval.n_rows()]);
                    eval.recompute_columns(va, vw, &changed_local, scratch);
                }
                None => eval.raw_row(va, vw, scratch),
            }
            let raw = capture.then(|| scratch.row.clone());
            let mut out = VoterOut {
                credits: Vec::new(),
                topk: None,
                order: None,
                raw,
            };
            resolve_row(&mut scratch.row);
            // Aggregate candidate rows into list rows when ranking lists by
            // mean member score.
            let ranked_row: &[f64] = if list_aggregate {
                scratch.listrow.clear();
                for members in &st.list_members {
                    let mut s = 0.0;
                    for &m in members {
                        s += scratch.row[m as usize];
                    }
                    scratch.listrow.push(s / members.len() as f64);
                }
                &scratch.listrow
            } else {
                &scratch.row
            };
            let ranks = if cfg.target == VisibilityTarget::List {
                &st.list_rank
            } else {
                &st.cand_rank
            };
            let rands: Option<&[u64]> = match &cfg.tiebreak {
                TieBreakPolicy::SeededFairRandom { seed } => {
                    let domain = if cfg.target == VisibilityTarget::List {
                        "rank-list"
                    } else {
                        "rank-cand"
                    };
                    draw_rands(
                        *seed,
                        domain,
                        &ix.election.voters[g as usize].id,
                        n_ranked,
                        &mut scratch.rands,
                    );
                    Some(&scratch.rands)
                }
                _ => None,
            };
            rank_credit(
                ranked_row,
                k,
                &cfg.tiebreak,
                ranks,
                rands,
                &mut scratch.idxs,
                &mut out,
                cfg.collect,
            );
            out
        };

        let outs: Vec<VoterOut> = if cfg.parallel {
            voters
                .par_iter()
                .enumerate()
                .map_init(Scratch::default, |scratch, (i, &g)| eval_voter(scratch, i, g))
                .collect()
        } else {
            let mut scratch = Scratch::default();
            voters
                .iter()
                .enumerate()
                .map(|(i, &g)| eval_voter(&mut scratch, i, g))
                .collect()
        };

        let mut credit = vec![0.0f64; n_ranked];
        let mut topk = (cfg.collect == Collect::TopK).then(Vec::new);
        let mut order = (cfg.collect == Collect::FullOrder).then(Vec::new);
        let mut raw_state = capture.then(|| Vec::with_capacity(voters.len() * eval.n_rows()));
        for (i, o) in outs.into_iter().enumerate() {
            for (p, c) in o.credits {
                credit[p as usize] += c;
            }
            if let (Some(t), Some(list)) = (o.topk, topk.as_mut()) {
                list.push((voters[i], t));
            }
            if let (Some(t), Some(list)) = (o.order, order.as_mut()) {
                list.push((voters[i], t));
            }
            if let (Some(r), Some(all)) = (o.raw, raw_state.as_mut()) {
                all.extend_from_slice(&r);
            }
        }
        if let Some(r) = raw_state {
            captured.push(r);
        }
        states_out.push(StatePass {
            k,
            voters_counted: voters.len() as u64,
            credit,
            topk,
            order,
        });
    }

    let raw = capture.then(|| RawRows {
        per_state: captured,
    });
    Ok((PassOutcome { states: states_out }, raw))
}

struct VoterOut {
    credits: Vec<(u32, f64)>,
    topk: Option<Vec<u32>>,
    order: Option<Vec<u32>>,
    raw: Option<Vec<f64>>,
}

#[derive(Default)]
pub(crate) struct Scratch {
    part: Vec<u32>,
    dv: Vec<f64>,
    vanchor: Vec<u8>,
    y: Vec<f64>,
    psub: Vec<f64>,
    idxs: Vec<u32>,
    rands: Vec<u64>,
    pub row: Vec<f64>,
    listrow: Vec<f64>,
}

/// Fills `out` with per-entity tie-break draws from the voter's named
/// stream; used identically by visibility passes and per-voter rankings so
/// both see the same fair-random order.
pub(crate) fn draw_rands(seed: u64, domain: &str, voter_id: &str, n: usize, out: &mut Vec<u64>) {
    let mut rng = crate::rng::voter_stream(seed, domain, voter_id);
    out.clear();
    out.extend((0..n).map(|_| rng.random::<u64>()));
}

/// Builds the pooled precision context when the method asks for one.
pub(crate) fn pooled_precision(
    ix: &Indexed,
    method: &MatchingMethod,
    eff_cand: &[f64],
) -> Result<Option<PrecisionContext>, MatchError> {
    match method {
        MatchingMethod::Mahalanobis(o) if o.pooled_covariance => {
            Ok(Some(build_precision(ix, o, eff_cand, None)?))
        }
        _ => Ok(None),
    }
}

/// Precision context for a pass: per-state or pooled, with an identity
/// fallback for states whose candidate field is too small to estimate a
/// covariance.
fn build_precision(
    ix: &Indexed,
    options: &MahalanobisOptions,
    eff_cand: &[f64],
    state: Option<&StateBlock>,
) -> Result<PrecisionContext, MatchError> {
    let n_q = ix.n_q;
    let rows: Vec<&[f64]> = match state {
        Some(st) => st
            .cands
            .iter()
            .map(|&g| &eff_cand[g as usize * n_q..(g as usize + 1) * n_q])
            .collect(),
        None => (0..ix.n_candidates())
            .map(|g| &eff_cand[g * n_q..(g + 1) * n_q])
            .collect(),
    };
    match PrecisionContext::build(&rows, options.ridge) {
        Ok(ctx) => Ok(ctx),
        Err(MatchError::TooFewCandidates(_)) => Ok(PrecisionContext::identity(n_q)),
        Err(e) => Err(e),
    }
}

pub(crate) struct MahalState {
    p: PrecisionContext,
    /// Per distance-row entity: P · row (length n_q each).
    pc: Vec<f64>,
    /// Per entity: rowᵀ · P · row.
    cpc: Vec<f64>,
}

/// Owned per-state preparation for one (method, candidate matrix) pair:
/// anchor tables, precision state, pseudo list rows. Reusable across voters
/// and across calls as long as the candidate matrix is unchanged.
pub(crate) struct StatePrep {
    anchors: Option<Vec<u8>>,
    table: Option<[f64; 25]>,
    mahal: Option<MahalState>,
    /// Per-question mean member answers per list, when rows are lists.
    pseudo: Option<Vec<f64>>,
    n_rows: usize,
}

impl StatePrep {
    /// Prepares candidate distance rows.
    pub fn build_candidates(
        ix: &Indexed,
        method: &MatchingMethod,
        eff_cand: &[f64],
        st: &StateBlock,
        pooled: Option<&PrecisionContext>,
    ) -> Result<Self, MatchError> {
        Self::build(ix, method, eff_cand, st, pooled, None)
    }

    /// Prepares per-list pseudo rows (mean member answer vectors).
    pub fn build_pseudo_lists(
        ix: &Indexed,
        method: &MatchingMethod,
        eff_cand: &[f64],
        st: &StateBlock,
        pooled: Option<&PrecisionContext>,
    ) -> Result<Self, MatchError> {
        let n_q = ix.n_q;
        let mut mat = vec![0.0f64; st.lists.len() * n_q];
        for (li, members) in st.list_members.iter().enumerate() {
            let out = &mut mat[li * n_q..(li + 1) * n_q];
            for &m in members {
                let g = st.cands[m as usize] as usize;
                let row = &eff_cand[g * n_q..(g + 1) * n_q];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            let inv = 1.0 / members.len() as f64;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        Self::build(ix, method, eff_cand, st, pooled, Some(mat))
    }

    fn build(
        ix: &Indexed,
        method: &MatchingMethod,
        eff_cand: &[f64],
        st: &StateBlock,
        pooled: Option<&PrecisionContext>,
        pseudo: Option<Vec<f64>>,
    ) -> Result<Self, MatchError> {
        let n_q = ix.n_q;
        let n_rows = match &pseudo {
            Some(m) => {
                if n_q == 0 {
                    0
                } else {
                    m.len() / n_q
                }
            }
            None => st.cands.len(),
        };
        let row = |i: usize| -> &[f64] {
            match &pseudo {
                Some(m) => &m[i * n_q..(i + 1) * n_q],
                None => {
                    let g = st.cands[i] as usize;
                    &eff_cand[g * n_q..(g + 1) * n_q]
                }
            }
        };

        let table = method.matrix().map(|m| {
            let mut t = [0.0f64; 25];
            for i in 0..5 {
                for j in 0..5 {
                    t[i * 5 + j] = m.cell(i, j);
                }
            }
            t
        });
        let anchors = if table.is_some() {
            let mut a = Vec::with_capacity(n_rows * n_q);
            for i in 0..n_rows {
                for &x in row(i) {
                    a.push(anchor_u8(x));
                }
            }
            Some(a)
        } else {
            None
        };

        let mahal = match method {
            MatchingMethod::Mahalanobis(o) => {
                let p = match pooled {
                    Some(ctx) => ctx.clone(),
                    None => build_precision(ix, o, eff_cand, Some(st))?,
                };
                let mut pc = vec![0.0f64; n_rows * n_q];
                let mut cpc = vec![0.0f64; n_rows];
                for e in 0..n_rows {
                    let r = row(e);
                    let out = &mut pc[e * n_q..(e + 1) * n_q];
                    for i in 0..n_q {
                        let mut s = 0.0;
                        for (j, &cj) in r.iter().enumerate() {
                            s += p.at(i, j) * cj;
                        }
                        out[i] = s;
                    }
                    cpc[e] = r.iter().zip(out.iter()).map(|(&c, &y)| c * y).sum();
                }
                Some(MahalState { p, pc, cpc })
            }
            _ => None,
        };

        Ok(StatePrep {
            anchors,
            table,
            mahal,
            pseudo,
            n_rows,
        })
    }

    /// The precision context used by this prep, when the method has one.
    pub fn precision(&self) -> Option<&PrecisionContext> {
        self.mahal.as_ref().map(|m| &m.p)
    }
}

enum RowsStore<'a> {
    /// Rows live in the global candidate matrix, selected by index.
    Cands { mat: &'a [f64], idxs: &'a [u32] },
    /// Pseudo rows owned by the prep.
    Pseudo { mat: &'a [f64], n: usize },
}

impl RowsStore<'_> {
    fn n(&self) -> usize {
        match self {
            RowsStore::Cands { idxs, .. } => idxs.len(),
            RowsStore::Pseudo { n, .. } => *n,
        }
    }

    fn row(&self, i: usize, n_q: usize) -> &[f64] {
        match self {
            RowsStore::Cands { mat, idxs } => {
                let g = idxs[i] as usize;
                &mat[g * n_q..(g + 1) * n_q]
            }
            RowsStore::Pseudo { mat, .. } => &mat[i * n_q..(i + 1) * n_q],
        }
    }
}

/// Cheap per-state evaluation view over a [`StatePrep`].
pub(crate) struct StateEval<'a> {
    n_q: usize,
    method: &'a MatchingMethod,
    neutrals: &'a [f64],
    rows: RowsStore<'a>,
    prep: &'a StatePrep,
}

impl<'a> StateEval<'a> {
    pub fn new(
        ix: &'a Indexed,
        method: &'a MatchingMethod,
        eff_cand: &'a [f64],
        st: &'a StateBlock,
        prep: &'a StatePrep,
    ) -> Self {
        let rows = match &prep.pseudo {
            Some(mat) => RowsStore::Pseudo {
                mat,
                n: prep.n_rows,
            },
            None => RowsStore::Cands {
                mat: eff_cand,
                idxs: &st.cands,
            },
        };
        StateEval {
            n_q: ix.n_q,
            method,
            neutrals: &ix.neutrals,
            rows,
            prep,
        }
    }

    /// Number of distance-row entities (candidates, or pseudo list rows).
    pub fn n_rows(&self) -> usize {
        self.rows.n()
    }

    /// Fills `scratch.row` with the raw distances from one voter to every
    /// row entity (sentinels for neutral/empty outcomes).
    pub fn raw_row(&self, va: &[f64], vw: &[f64], scratch: &mut Scratch) {
        scratch.row.resize(self.rows.n(), 0.0);
        self.prepare_voter(va, vw, scratch);
        for e in 0..self.rows.n() {
            scratch.row[e] = self.entity_distance(va, vw, e, scratch);
        }
    }

    /// Recomputes only the given entity columns of `scratch.row`.
    fn recompute_columns(&self, va: &[f64], vw: &[f64], cols: &[u32], scratch: &mut Scratch) {
        if cols.is_empty() {
            return;
        }
        self.prepare_voter(va, vw, scratch);
        for &e in cols {
            scratch.row[e as usize] = self.entity_distance(va, vw, e as usize, scratch);
        }
    }

    /// Per-voter precomputation shared by all entities of the row.
    fn prepare_voter(&self, va: &[f64], vw: &[f64], scratch: &mut Scratch) {
        scratch.part.clear();
        if matches!(self.method, MatchingMethod::Mahalanobis(_)) {
            // Participation ignores weights: every answered question.
            for (t, a) in va.iter().enumerate() {
                if a.is_finite() {
                    scratch.part.push(t as u32);
                }
            }
            let st = self.prep.mahal.as_ref().expect("prepared");
            let m = scratch.part.len();
            if m == 0 {
                return;
            }
            // y = P · v over the answered mask.
            scratch.y.resize(self.n_q, 0.0);
            for i in 0..self.n_q {
                let mut s = 0.0;
                for &t in &scratch.part {
                    s += st.p.at(i, t as usize) * va[t as usize];
                }
                scratch.y[i] = s;
            }
            // Out-of-mask indices and the P submatrix over them, for the
            // decomposition path (cheap when few questions are skipped).
            scratch.idxs.clear();
            for t in 0..self.n_q {
                if !va[t].is_finite() {
                    scratch.idxs.push(t as u32);
                }
            }
            let s_out = scratch.idxs.len();
            if s_out * s_out <= m * m {
                scratch.psub.resize(s_out * s_out, 0.0);
                for (a, &i) in scratch.idxs.iter().enumerate() {
                    for (b, &j) in scratch.idxs.iter().enumerate() {
                        scratch.psub[a * s_out + b] = st.p.at(i as usize, j as usize);
                    }
                }
            } else {
                // Direct path: P over the answered mask.
                scratch.psub.resize(m * m, 0.0);
                for (a, &i) in scratch.part.iter().enumerate() {
                    for (b, &j) in scratch.part.iter().enumerate() {
                        scratch.psub[a * m + b] = st.p.at(i as usize, j as usize);
                    }
                }
            }
            return;
        }
        for (t, (a, &w)) in va.iter().zip(vw).enumerate() {
            if a.is_finite() && w > 0.0 {
                scratch.part.push(t as u32);
            }
        }
        match self.method {
            MatchingMethod::Angular => {
                scratch.dv.resize(self.n_q, 0.0);
                for &t in &scratch.part {
                    let t = t as usize;
                    scratch.dv[t] = vw[t] * (va[t] - self.neutrals[t]);
                }
            }
            MatchingMethod::L1Bonus(_) | MatchingMethod::Hybrid(_) => {
                scratch.vanchor.resize(self.n_q, 0);
                for &t in &scratch.part {
                    let t = t as usize;
                    scratch.vanchor[t] = anchor_u8(va[t]);
                }
            }
            _ => {}
        }
    }

    fn entity_distance(&self, va: &[f64], vw: &[f64], e: usize, scratch: &Scratch) -> f64 {
        if scratch.part.is_empty() {
            return FLAGGED;
        }
        let row = self.rows.row(e, self.n_q);
        match self.method {
            MatchingMethod::L2 => {
                let mut s = 0.0;
                for &t in &scratch.part {
                    let t = t as usize;
                    let d = vw[t] * (va[t] - row[t]);
                    s += d * d;
                }
                s.sqrt()
            }
            MatchingMethod::L1 => {
                let mut s = 0.0;
                for &t in &scratch.part {
                    let t = t as usize;
                    s += vw[t] * (va[t] - row[t]).abs();
                }
                s
            }
            MatchingMethod::AgreementCount => {
                let mut s = 0.0;
                for &t in &scratch.part {
                    let t = t as usize;
                    if va[t] == row[t] {
                        s += vw[t];
                    }
                }
                -s
            }
            MatchingMethod::Angular => {
                let mut nv = 0.0;
                let mut dot = 0.0;
                let mut nc = 0.0;
                for &t in &scratch.part {
                    let t = t as usize;
                    let dvt = scratch.dv[t];
                    nv += dvt * dvt;
                    let dct = vw[t] * (row[t] - self.neutrals[t]);
                    dot += dvt * dct;
                    nc += dct * dct;
                }
                if nv == 0.0 || nc == 0.0 {
                    NEUTRAL
                } else {
                    (dot / (nv.sqrt() * nc.sqrt())).clamp(-1.0, 1.0).acos()
                }
            }
            MatchingMethod::L1Bonus(_) | MatchingMethod::Hybrid(_) => {
                let table = self.prep.table.as_ref().expect("prepared");
                let anchors = self.prep.anchors.as_ref().expect("prepared");
                let ca = &anchors[e * self.n_q..(e + 1) * self.n_q];
                let mut s = 0.0;
                for &t in &scratch.part {
                    let t = t as usize;
                    s += vw[t] * table[scratch.vanchor[t] as usize * 5 + ca[t] as usize];
                }
                s
            }
            MatchingMethod::Mahalanobis(_) => {
                let st = self.prep.mahal.as_ref().expect("prepared");
                let m = scratch.part.len();
                let s_out = self.n_q - m;
                let d2 = if s_out * s_out <= m * m {
                    // Decomposition around the full-matrix quadratic form:
                    // d² = vᵀPv − 2·(Pv)ᵀc + cᵀPc, corrected for the
                    // out-of-mask block.
                    let mut qv = 0.0;
                    let mut t1 = 0.0;
                    for &t in &scratch.part {
                        let t = t as usize;
                        qv += va[t] * scratch.y[t];
                        t1 += scratch.y[t] * row[t];
                    }
                    let pc = &st.pc[e * self.n_q..(e + 1) * self.n_q];
                    let mut t2 = 0.0;
                    for &i in &scratch.idxs {
                        t2 += row[i as usize] * pc[i as usize];
                    }
                    let mut t3 = 0.0;
                    for (a, &i) in scratch.idxs.iter().enumerate() {
                        let ci = row[i as usize];
                        let prow = &scratch.psub[a * s_out..(a + 1) * s_out];
                        for (b, &j) in scratch.idxs.iter().enumerate() {
                            t3 += prow[b] * ci * row[j as usize];
                        }
                    }
                    qv - 2.0 * t1 + (st.cpc[e] - 2.0 * t2 + t3)
                } else {
                    let mut d2 = 0.0;
                    for (a, &i) in scratch.part.iter().enumerate() {
                        let da = va[i as usize] - row[i as usize];
                        let prow = &scratch.psub[a * m..(a + 1) * m];
                        for (b, &j) in scratch.part.iter().enumerate() {
                            d2 += prow[b] * da * (va[j as usize] - row[j as usize]);
                        }
                    }
                    d2
                };
                d2.max(0.0).sqrt()
            }
        }
    }
}

pub(crate) fn anchor_u8(value: f64) -> u8 {
    debug_assert!((0.0..=100.0).contains(&value));
    (value / 25.0).round() as u8
}

/// Maps the neutral sentinel to (max finite distance) + 1 so all-neutral
/// comparisons rank strictly after every scored entity but before flagged
/// ones; empty-overlap stays infinite.
pub(crate) fn resolve_row(row: &mut [f64]) {
    let mut max_valid = f64::NEG_INFINITY;
    let mut any_nan = false;
    for &d in row.iter() {
        if d.is_nan() {
            any_nan = true;
        } else if d.is_finite() && d > max_valid {
            max_valid = d;
        }
    }
    if any_nan {
        let fallback = if max_valid.is_finite() {
            max_valid + 1.0
        } else {
            1.0
        };
        for d in row.iter_mut() {
            if d.is_nan() {
                *d = fallback;
            }
        }
    }
}

/// Orders all entity positions of a resolved row under a ranking policy
/// (not proportional credit): ascending distance, ties by fair-random draw
/// and then the deterministic rank order.
pub(crate) fn full_order(row: &[f64], ranks: &[u32], rands: Option<&[u64]>) -> Vec<u32> {
    let mut idxs: Vec<u32> = (0..row.len() as u32).collect();
    idxs.sort_unstable_by(|&a, &b| order_cmp(row, ranks, rands, a, b));
    idxs
}

fn order_cmp(
    row: &[f64],
    ranks: &[u32],
    rands: Option<&[u64]>,
    a: u32,
    b: u32,
) -> std::cmp::Ordering {
    let (a, b) = (a as usize, b as usize);
    row[a]
        .partial_cmp(&row[b])
        .expect("resolved rows have no NaN")
        .then_with(|| match rands {
            Some(r) => (r[a], ranks[a]).cmp(&(r[b], ranks[b])),
            None => ranks[a].cmp(&ranks[b]),
        })
}

/// Ranks one resolved row and assigns top-k slot credit per the tie policy.
#[allow(clippy::too_many_arguments)]
fn rank_credit(
    row: &[f64],
    k: u32,
    policy: &TieBreakPolicy,
    ranks: &[u32],
    rands: Option<&[u64]>,
    idxs: &mut Vec<u32>,
    out: &mut VoterOut,
    collect: Collect,
) {
    let n = row.len();
    if k == 0 || n == 0 {
        if collect == Collect::TopK {
            out.topk = Some(Vec::new());
        }
        if collect == Collect::FullOrder {
            out.order = Some(Vec::new());
        }
        return;
    }
    let ku = k as usize;
    idxs.clear();
    idxs.extend(0..n as u32);

    if matches!(policy, TieBreakPolicy::ProportionalCredit) {
        debug_assert!(collect == Collect::Nothing, "credit mode has no ranking");
        if n <= ku {
            out.credits.extend((0..n as u32).map(|p| (p, 1.0)));
            return;
        }
        idxs.select_nth_unstable_by(ku - 1, |&a, &b| {
            row[a as usize]
                .partial_cmp(&row[b as usize])
                .expect("resolved rows have no NaN")
        });
        let threshold = row[idxs[ku - 1] as usize];
        let mut n_better = 0usize;
        let mut n_tie = 0usize;
        for &d in row {
            if d < threshold {
                n_better += 1;
            } else if d == threshold {
                n_tie += 1;
            }
        }
        let tie_credit = (ku - n_better) as f64 / n_tie as f64;
        for (p, &d) in row.iter().enumerate() {
            if d < threshold {
                out.credits.push((p as u32, 1.0));
            } else if d == threshold {
                out.credits.push((p as u32, tie_credit));
            }
        }
        return;
    }

    if collect == Collect::FullOrder {
        idxs.sort_unstable_by(|&a, &b| order_cmp(row, ranks, rands, a, b));
        let take = ku.min(n);
        out.credits.extend(idxs[..take].iter().map(|&p| (p, 1.0)));
        out.order = Some(idxs.clone());
        return;
    }
    let take = ku.min(n);
    if take < n {
        idxs.select_nth_unstable_by(take - 1, |&a, &b| order_cmp(row, ranks, rands, a, b));
    }
    out.credits.extend(idxs[..take].iter().map(|&p| (p, 1.0)));
    if collect == Collect::TopK {
        out.topk = Some(idxs[..take].to_vec());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{compute_distance, DistanceMatrix, MatchError};
    use crate::model::*;
    use crate::testutil::toy_election;
    use rand::Rng;

    fn methods_under_test() -> Vec<MatchingMethod> {
        vec![
            MatchingMethod::L2,
            MatchingMethod::L1,
            MatchingMethod::AgreementCount,
            MatchingMethod::Angular,
            MatchingMethod::Mahalanobis(MahalanobisOptions::default()),
            MatchingMethod::Mahalanobis(MahalanobisOptions {
                ridge: None,
                pooled_covariance: true,
            }),
            MatchingMethod::L1Bonus(DistanceMatrix::l1_bonus()),
            MatchingMethod::Hybrid(DistanceMatrix::hybrid()),
        ]
    }

    #[test]
    fn engine_rows_match_reference_distances() {
        let e = toy_election(14, 25, 12, 42);
        assert!(e.validate().is_valid());
        let ix = Indexed::build(&e).unwrap();
        for method in methods_under_test() {
            let pooled_ctx = pooled_precision(&ix, &method, &ix.cand_answers).unwrap();
            for (si, st) in ix.states.iter().enumerate() {
                let prep = StatePrep::build_candidates(
                    &ix,
                    &method,
                    &ix.cand_answers,
                    st,
                    pooled_ctx.as_ref(),
                )
                .unwrap();
                let eval = StateEval::new(&ix, &method, &ix.cand_answers, st, &prep);
                let ref_ctx = match &method {
                    MatchingMethod::Mahalanobis(o) => Some(if o.pooled_covariance {
                        PrecisionContext::pooled(&e, o).unwrap()
                    } else {
                        PrecisionContext::for_state(&e, st.id, o).unwrap()
                    }),
                    _ => None,
                };
                let mut scratch = Scratch::default();
                for &vg in &st.voters {
                    let (va, vw) = ix.voter_row(vg);
                    eval.raw_row(va, vw, &mut scratch);
                    for (pos, &cg) in st.cands.iter().enumerate() {
                        let want = compute_distance(
                            &method,
                            &e.voters[vg as usize].profile,
                            &e.candidates[cg as usize].profile,
                            &e.questions,
                            ref_ctx.as_ref(),
                        );
                        let got = scratch.row[pos];
                        match want {
                            Ok(d) => {
                                let tol = if method.needs_precision_context() {
                                    1e-9 * d.abs().max(1.0)
                                } else {
                                    0.0
                                };
                                assert!(
                                    (got - d).abs() <= tol,
                                    "{method} state {si} voter {vg} cand {pos}: engine {got} vs reference {d}"
                                );
                            }
                            Err(MatchError::NeutralProfile) => assert!(got.is_nan()),
                            Err(MatchError::EmptyOverlap) => assert!(got == FLAGGED),
                            Err(e) => panic!("unexpected reference error {e}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mahalanobis_paths_agree_on_sparse_and_dense_voters() {
        // Voters answering fewer than half the questions exercise the direct
        // submatrix path; dense voters the decomposition path.
        let mut e = toy_election(10, 0, 10, 43);
        let answers_dense: Vec<Option<f64>> = (0..10)
            .map(|t| Some(if t % 2 == 0 { 25.0 } else { 75.0 }))
            .collect();
        let mut answers_sparse = vec![None; 10];
        answers_sparse[2] = Some(25.0);
        answers_sparse[7] = Some(100.0);
        for (i, answers) in [answers_dense, answers_sparse].into_iter().enumerate() {
            let weights = answers
                .iter()
                .map(|a| if a.is_some() { 1.0 } else { 0.0 })
                .collect();
            e.voters.push(Voter {
                id: format!("v{i}"),
                state: "east".into(),
                preferred_party: None,
                profile: Profile::new(answers, weights).unwrap(),
                timestamp: 0,
                election_id: None,
            });
        }
        let ix = Indexed::build(&e).unwrap();
        let method = MatchingMethod::Mahalanobis(MahalanobisOptions::default());
        let si = ix.state_index("east").unwrap();
        let st = &ix.states[si];
        let prep = StatePrep::build_candidates(&ix, &method, &ix.cand_answers, st, None).unwrap();
        let eval = StateEval::new(&ix, &method, &ix.cand_answers, st, &prep);
        let ref_ctx =
            PrecisionContext::for_state(&e, "east", &MahalanobisOptions::default()).unwrap();
        let mut scratch = Scratch::default();
        for &vg in &st.voters {
            let (va, vw) = ix.voter_row(vg);
            eval.raw_row(va, vw, &mut scratch);
            for (pos, &cg) in st.cands.iter().enumerate() {
                let want = compute_distance(
                    &method,
                    &e.voters[vg as usize].profile,
                    &e.candidates[cg as usize].profile,
                    &e.questions,
                    Some(&ref_ctx),
                )
                .unwrap();
                let got = scratch.row[pos];
                assert!(
                    (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "voter {vg} cand {pos}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn resolve_maps_neutral_to_worst_plus_one() {
        let mut row = vec![2.0, f64::NAN, 0.5, f64::INFINITY];
        resolve_row(&mut row);
        assert_eq!(row, vec![2.0, 3.0, 0.5, f64::INFINITY]);
        let mut all_undefined = vec![f64::NAN, f64::NAN];
        resolve_row(&mut all_undefined);
        assert_eq!(all_undefined, vec![1.0, 1.0]);
    }

    #[test]
    fn proportional_credit_sums_to_k() {
        let e = toy_election(16, 40, 8, 44);
        let ix = Indexed::build(&e).unwrap();
        let method = MatchingMethod::L2;
        let mut cfg = PassConfig::new(&method, VisibilityTarget::Candidate);
        cfg.tiebreak = TieBreakPolicy::ProportionalCredit;
        let out = run_pass(&ix, &cfg, &Scenario::default()).unwrap();
        for (sp, st) in out.states.iter().zip(&ix.states) {
            let expect = sp.voters_counted as f64 * (sp.k as usize).min(st.cands.len()) as f64;
            let total: f64 = sp.credit.iter().sum();
            assert!(
                (total - expect).abs() < 1e-9,
                "state {} credit {total} vs {expect}",
                st.id
            );
        }
    }

    #[test]
    fn policies_agree_when_distances_are_distinct() {
        let e = toy_election(9, 30, 10, 45);
        let ix = Indexed::build(&e).unwrap();
        let method = MatchingMethod::L2;
        let mut outs = Vec::new();
        for tiebreak in [
            TieBreakPolicy::LexicographicSortKey,
            TieBreakPolicy::SeededFairRandom { seed: 5 },
            TieBreakPolicy::ProportionalCredit,
        ] {
            let mut cfg = PassConfig::new(&method, VisibilityTarget::Candidate);
            cfg.tiebreak = tiebreak;
            outs.push(run_pass(&ix, &cfg, &Scenario::default()).unwrap());
        }
        // Random on-grid profiles rarely tie under L2; if they do not, all
        // policies must produce identical credit vectors.
        for si in 0..ix.states.len() {
            let lexi = &outs[0].states[si].credit;
            for other in &outs[1..] {
                for (a, b) in lexi.iter().zip(&other.states[si].credit) {
                    assert!(
                        (a - b).abs() < 1e-9,
                        "state {si}: {a} vs {b} (credit differs off ties)"
                    );
                }
            }
        }
    }

    #[test]
    fn parallel_pass_is_bit_identical() {
        let e = toy_election(12, 60, 10, 46);
        let ix = Indexed::build(&e).unwrap();
        for method in methods_under_test() {
            for target in [VisibilityTarget::Candidate, VisibilityTarget::List] {
                let mut cfg = PassConfig::new(&method, target);
                cfg.tiebreak = TieBreakPolicy::SeededFairRandom { seed: 11 };
                let seq = run_pass(&ix, &cfg, &Scenario::default()).unwrap();
                cfg.parallel = true;
                let par = run_pass(&ix, &cfg, &Scenario::default()).unwrap();
                for (a, b) in seq.states.iter().zip(&par.states) {
                    assert_eq!(a.credit, b.credit, "{method}: parallel parity");
                }
            }
        }
    }

    #[test]
    fn delta_pass_equals_fresh_pass() {
        let e = toy_election(12, 40, 10, 47);
        let ix = Indexed::build(&e).unwrap();
        let mut rng = crate::rng::stream(48, "engine-delta", &[]);
        for method in [
            MatchingMethod::L2,
            MatchingMethod::L1,
            MatchingMethod::AgreementCount,
            MatchingMethod::Angular,
            MatchingMethod::L1Bonus(DistanceMatrix::l1_bonus()),
        ] {
            let cfg = PassConfig::new(&method, VisibilityTarget::Candidate);
            let (_base_out, raw) = run_pass_capture(&ix, &cfg, &Scenario::default()).unwrap();
            // Patch three random candidates' answers.
            let mut patched = ix.cand_answers.clone();
            let mut changed = Vec::new();
            for _ in 0..3 {
                let g = rng.random_range(0..ix.n_candidates()) as u32;
                changed.push(g);
                for t in 0..ix.n_q {
                    let scale = &e.questions[t].scale;
                    let a = scale.allowed();
                    patched[g as usize * ix.n_q + t] = a[rng.random_range(0..a.len())];
                }
            }
            changed.sort_unstable();
            changed.dedup();
            let scn = Scenario {
                cand_answers: Some(&patched),
                changed_cands: Some(&changed),
                ..Scenario::default()
            };
            let fresh = run_pass(&ix, &cfg, &scn).unwrap();
            let delta = run_pass_delta(&ix, &cfg, &scn, &raw).unwrap();
            for (a, b) in fresh.states.iter().zip(&delta.states) {
                assert_eq!(a.credit, b.credit, "{method}: delta parity");
            }
        }
    }

    #[test]
    fn k_larger_than_field_gives_everyone_full_credit() {
        let e = toy_election(6, 10, 8, 49);
        let ix = Indexed::build(&e).unwrap();
        let method = MatchingMethod::L2;
        for tiebreak in [
            TieBreakPolicy::LexicographicSortKey,
            TieBreakPolicy::ProportionalCredit,
        ] {
            let mut cfg = PassConfig::new(&method, VisibilityTarget::Candidate);
            cfg.tiebreak = tiebreak;
            cfg.k_override = Some(1000);
            let out = run_pass(&ix, &cfg, &Scenario::default()).unwrap();
            for sp in &out.states {
                for &c in &sp.credit {
                    assert_eq!(c, sp.voters_counted as f64);
                }
            }
        }
    }

    #[test]
    fn voter_subset_restricts_the_denominator() {
        let e = toy_election(8, 20, 8, 50);
        let ix = Indexed::build(&e).unwrap();
        let subset: Vec<u32> = (0..10).collect();
        let method = MatchingMethod::L2;
        let cfg = PassConfig::new(&method, VisibilityTarget::Candidate);
        let scn = Scenario {
            voter_subset: Some(&subset),
            ..Scenario::default()
        };
        let out = run_pass(&ix, &cfg, &scn).unwrap();
        let total: u64 = out.states.iter().map(|s| s.voters_counted).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn list_modes_rank_lists() {
        let e = toy_election(12, 30, 9, 51);
        let ix = Indexed::build(&e).unwrap();
        let method = MatchingMethod::L2;
        for mode in [ListScoreMode::MeanOfScores, ListScoreMode::ScoreOfMean] {
            let mut cfg = PassConfig::new(&method, VisibilityTarget::List);
            cfg.list_mode = mode;
            cfg.collect = Collect::FullOrder;
            let out = run_pass(&ix, &cfg, &Scenario::default()).unwrap();
            for (sp, st) in out.states.iter().zip(&ix.states) {
                assert_eq!(sp.k, 1);
                assert_eq!(sp.credit.len(), st.lists.len());
                let total: f64 = sp.credit.iter().sum();
                assert!((total - sp.voters_counted as f64).abs() < 1e-9);
                for (_, order) in sp.order.as_ref().unwrap() {
                    assert_eq!(order.len(), st.lists.len());
                }
            }
        }
    }

    #[test]
    fn monotone_transform_preserves_full_order() {
        let row = vec![3.0, 1.0, 2.5, 1.0, 7.0, 0.0];
        let ranks: Vec<u32> = vec![5, 4, 3, 2, 1, 0];
        let base = full_order(&row, &ranks, None);
        let transformed: Vec<f64> = row.iter().map(|d| (d * 0.3).exp() + 2.0).collect();
        let after = full_order(&transformed, &ranks, None);
        assert_eq!(base, after);
    }
}
