//! Crafted-answer optimization: simulated annealing over the discrete
//! answer grid, and exhaustive search for tiny instances.
//!
//! The objective is the crafted candidate's k-visibility when injected into
//! the state's field. The crafted entrant is handicapped conservatively: it
//! loses every exact-distance tie (as if its sort key ranked last), so the
//! reported visibility never depends on a flattering tie-break.

use super::{AnnealingConfig, AttackError};
use crate::engine::{self, anchor_u8, Indexed, StatePrep};
use crate::matching::{MatchingMethod, MethodKind};
use crate::model::{Election, ModelError, Profile};
use crate::rng::voter_stream;
use rand::Rng;

/// Per-voter precomputed context for scoring an arbitrary crafted answer
/// vector against one state's electorate, plus the top-k entry thresholds
/// derived from the real candidates.
pub(crate) struct CraftedContext {
    kind: MethodKind,
    n_q: usize,
    pub allowed: Vec<Vec<f64>>,
    neutrals: Vec<f64>,
    table: Option<[f64; 25]>,
    n_voters: usize,
    va: Vec<f64>,
    vw: Vec<f64>,
    /// The crafted candidate enters the voter's top-k iff its distance is
    /// strictly below this (`None`: fewer than k real candidates, so it
    /// always enters).
    thresholds: Vec<Option<f64>>,
    /// Participating questions per voter (answered with positive weight;
    /// for the covariance method, every answered question).
    part: Vec<Vec<u16>>,
    /// Angular: weighted neutral-centered voter coordinates, dense.
    dv: Vec<f64>,
    /// Anchor indices per voter answer, dense (matrix methods).
    vanchor: Vec<u8>,
    /// Covariance method state: dense precision copy plus per-voter
    /// P·v, vᵀPv, the out-of-mask index list, and the cached submatrix for
    /// whichever evaluation path the mask size selects.
    p: Vec<f64>,
    y: Vec<f64>,
    qv: Vec<f64>,
    outlist: Vec<Vec<u16>>,
    psub: Vec<Vec<f64>>,
    decomp: Vec<bool>,
    /// Answers of the real candidate with the highest baseline visibility.
    warm: Option<Vec<f64>>,
}

/// Scratch recomputed once per candidate answer vector, shared by all
/// voters.
#[derive(Default)]
pub(crate) struct MoveScratch {
    canchor: Vec<u8>,
    z: Vec<f64>,
    cpc: f64,
}

impl CraftedContext {
    pub fn build(
        election: &Election,
        state: &str,
        k: Option<u32>,
        method: &MatchingMethod,
    ) -> Result<Self, AttackError> {
        let ix = Indexed::build(election)?;
        let si = ix
            .state_index(state)
            .ok_or_else(|| AttackError::Model(ModelError::UnknownState(state.to_string())))?;
        let st = &ix.states[si];
        let n_q = ix.n_q;
        if n_q == 0 {
            return Err(AttackError::InvalidConfig(
                "election has no questions".into(),
            ));
        }
        let k = k.unwrap_or(st.seats).max(1);

        let pooled = engine::pooled_precision(&ix, method, &ix.cand_answers)?;
        let prep = StatePrep::build_candidates(&ix, method, &ix.cand_answers, st, pooled.as_ref())?;
        let eval = engine::StateEval::new(&ix, method, &ix.cand_answers, st, &prep);

        let mut ctx = CraftedContext {
            kind: method.kind(),
            n_q,
            allowed: election
                .questions
                .iter()
                .map(|q| q.scale.allowed().to_vec())
                .collect(),
            neutrals: ix.neutrals.clone(),
            table: method.matrix().map(|m| {
                let mut t = [0.0f64; 25];
                for i in 0..5 {
                    for j in 0..5 {
                        t[i * 5 + j] = m.cell(i, j);
                    }
                }
                t
            }),
            n_voters: st.voters.len(),
            va: Vec::with_capacity(st.voters.len() * n_q),
            vw: Vec::with_capacity(st.voters.len() * n_q),
            thresholds: Vec::with_capacity(st.voters.len()),
            part: Vec::with_capacity(st.voters.len()),
            dv: Vec::new(),
            vanchor: Vec::new(),
            p: Vec::new(),
            y: Vec::new(),
            qv: Vec::new(),
            outlist: Vec::new(),
            psub: Vec::new(),
            decomp: Vec::new(),
            warm: None,
        };

        let is_mahal = matches!(ctx.kind, MethodKind::Mahalanobis);
        if is_mahal {
            let p = prep.precision().expect("covariance method has precision");
            ctx.p = (0..n_q)
                .flat_map(|i| (0..n_q).map(move |j| p.at(i, j)))
                .collect();
        }

        // Per-voter rows, thresholds, and baseline top-k counts (for the
        // warm start).
        let mut scratch = engine::Scratch::default();
        let mut counts = vec![0u64; st.cands.len()];
        let mut sorted: Vec<f64> = Vec::new();
        for &g in &st.voters {
            let (row_a, row_w) = ix.voter_row(g);
            ctx.va.extend_from_slice(row_a);
            ctx.vw.extend_from_slice(row_w);
            eval.raw_row(row_a, row_w, &mut scratch);

            // Entry threshold: the k-th best real distance, with neutral
            // and empty-overlap outcomes pushed to +∞ (the crafted entrant
            // loses those comparisons anyway — see resolve_row: a neutral
            // sentinel resolves above every finite distance in its row, and
            // flagged entities rank last).
            sorted.clear();
            sorted.extend(scratch.row.iter().map(|d| if d.is_finite() { *d } else { f64::INFINITY }));
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("no NaN after mapping"));
            ctx.thresholds.push(if sorted.len() >= k as usize {
                Some(sorted[k as usize - 1])
            } else {
                None
            });

            // Baseline slot counts under the deployed tie policy.
            let mut resolved = scratch.row.clone();
            engine::resolve_row(&mut resolved);
            let order = engine::full_order(&resolved, &st.cand_rank, None);
            for &pos in order.iter().take(k as usize) {
                counts[pos as usize] += 1;
            }

            // Participation and per-voter method state.
            let vi = ctx.part.len();
            let mut part: Vec<u16> = Vec::new();
            for t in 0..n_q {
                let answered = row_a[t].is_finite();
                let joins = if is_mahal {
                    answered
                } else {
                    answered && row_w[t] > 0.0
                };
                if joins {
                    part.push(t as u16);
                }
            }
            match ctx.kind {
                MethodKind::Angular => {
                    ctx.dv.resize((vi + 1) * n_q, 0.0);
                    let dv = &mut ctx.dv[vi * n_q..];
                    for &t in &part {
                        let t = t as usize;
                        dv[t] = row_w[t] * (row_a[t] - ctx.neutrals[t]);
                    }
                }
                MethodKind::L1Bonus | MethodKind::Hybrid => {
                    ctx.vanchor.resize((vi + 1) * n_q, 0);
                    let va = &mut ctx.vanchor[vi * n_q..];
                    for &t in &part {
                        let t = t as usize;
                        va[t] = anchor_u8(row_a[t]);
                    }
                }
                MethodKind::Mahalanobis => {
                    let m = part.len();
                    ctx.y.resize((vi + 1) * n_q, 0.0);
                    let y = &mut ctx.y[vi * n_q..];
                    for i in 0..n_q {
                        let mut s = 0.0;
                        for &t in &part {
                            s += ctx.p[i * n_q + t as usize] * row_a[t as usize];
                        }
                        y[i] = s;
                    }
                    let mut qv = 0.0;
                    for &t in &part {
                        let t = t as usize;
                        qv += row_a[t] * y[t];
                    }
                    ctx.qv.push(qv);
                    let out: Vec<u16> = (0..n_q as u16)
                        .filter(|&t| !row_a[t as usize].is_finite())
                        .collect();
                    let s_out = out.len();
                    let use_decomp = s_out * s_out <= m * m;
                    let idxs: &[u16] = if use_decomp { &out } else { &part };
                    let side = idxs.len();
                    let mut psub = vec![0.0f64; side * side];
                    for (a, &i) in idxs.iter().enumerate() {
                        for (b, &j) in idxs.iter().enumerate() {
                            psub[a * side + b] = ctx.p[i as usize * n_q + j as usize];
                        }
                    }
                    ctx.outlist.push(out);
                    ctx.psub.push(psub);
                    ctx.decomp.push(use_decomp);
                }
                _ => {}
            }
            ctx.part.push(part);
        }

        // Warm start: the real candidate holding the most baseline slots.
        ctx.warm = counts
            .iter()
            .enumerate()
            .max_by_key(|&(pos, &c)| (c, std::cmp::Reverse(pos)))
            .map(|(pos, _)| {
                let g = st.cands[pos] as usize;
                ix.cand_answers[g * n_q..(g + 1) * n_q].to_vec()
            });

        debug_assert_eq!(ctx.thresholds.len(), ctx.n_voters);
        Ok(ctx)
    }

    /// Per-answer-vector precomputation shared across voters.
    fn prepare_move(&self, c: &[f64], mv: &mut MoveScratch) {
        match self.kind {
            MethodKind::L1Bonus | MethodKind::Hybrid => {
                mv.canchor.clear();
                mv.canchor.extend(c.iter().map(|&x| anchor_u8(x)));
            }
            MethodKind::Mahalanobis => {
                let n_q = self.n_q;
                mv.z.resize(n_q, 0.0);
                for i in 0..n_q {
                    let mut s = 0.0;
                    for (j, &cj) in c.iter().enumerate() {
                        s += self.p[i * n_q + j] * cj;
                    }
                    mv.z[i] = s;
                }
                mv.cpc = c.iter().zip(mv.z.iter()).map(|(&x, &y)| x * y).sum();
            }
            _ => {}
        }
    }

    /// Distance from voter `vi` to the crafted answers, with neutral and
    /// empty-overlap outcomes mapped to +∞ (they never enter the top-k
    /// ahead of the threshold rule).
    fn distance(&self, vi: usize, c: &[f64], mv: &MoveScratch) -> f64 {
        let part = &self.part[vi];
        if part.is_empty() {
            return f64::INFINITY;
        }
        let va = &self.va[vi * self.n_q..(vi + 1) * self.n_q];
        let vw = &self.vw[vi * self.n_q..(vi + 1) * self.n_q];
        match self.kind {
            MethodKind::L2 => {
                let mut s = 0.0;
                for &t in part {
                    let t = t as usize;
                    let d = vw[t] * (va[t] - c[t]);
                    s += d * d;
                }
                s.sqrt()
            }
            MethodKind::L1 => {
                let mut s = 0.0;
                for &t in part {
                    let t = t as usize;
                    s += vw[t] * (va[t] - c[t]).abs();
                }
                s
            }
            MethodKind::AgreementCount => {
                let mut s = 0.0;
                for &t in part {
                    let t = t as usize;
                    if va[t] == c[t] {
                        s += vw[t];
                    }
                }
                -s
            }
            MethodKind::Angular => {
                let dv = &self.dv[vi * self.n_q..(vi + 1) * self.n_q];
                let mut nv = 0.0;
                let mut dot = 0.0;
                let mut nc = 0.0;
                for &t in part {
                    let t = t as usize;
                    let dvt = dv[t];
                    nv += dvt * dvt;
                    let dct = vw[t] * (c[t] - self.neutrals[t]);
                    dot += dvt * dct;
                    nc += dct * dct;
                }
                if nv == 0.0 || nc == 0.0 {
                    f64::INFINITY
                } else {
                    (dot / (nv.sqrt() * nc.sqrt())).clamp(-1.0, 1.0).acos()
                }
            }
            MethodKind::L1Bonus | MethodKind::Hybrid => {
                let table = self.table.as_ref().expect("matrix method has a table");
                let vanchor = &self.vanchor[vi * self.n_q..(vi + 1) * self.n_q];
                let mut s = 0.0;
                for &t in part {
                    let t = t as usize;
                    s += vw[t] * table[vanchor[t] as usize * 5 + mv.canchor[t] as usize];
                }
                s
            }
            MethodKind::Mahalanobis => {
                let n_q = self.n_q;
                let y = &self.y[vi * n_q..(vi + 1) * n_q];
                let psub = &self.psub[vi];
                let d2 = if self.decomp[vi] {
                    let mut t1 = 0.0;
                    for &t in part {
                        let t = t as usize;
                        t1 += y[t] * c[t];
                    }
                    let out = &self.outlist[vi];
                    let s_out = out.len();
                    let mut t2 = 0.0;
                    for &i in out {
                        t2 += c[i as usize] * mv.z[i as usize];
                    }
                    let mut t3 = 0.0;
                    for (a, &i) in out.iter().enumerate() {
                        let ci = c[i as usize];
                        let prow = &psub[a * s_out..(a + 1) * s_out];
                        for (b, &j) in out.iter().enumerate() {
                            t3 += prow[b] * ci * c[j as usize];
                        }
                    }
                    self.qv[vi] - 2.0 * t1 + (mv.cpc - 2.0 * t2 + t3)
                } else {
                    let m = part.len();
                    let mut d2 = 0.0;
                    for (a, &i) in part.iter().enumerate() {
                        let da = va[i as usize] - c[i as usize];
                        let prow = &psub[a * m..(a + 1) * m];
                        for (b, &j) in part.iter().enumerate() {
                            d2 += prow[b] * da * (va[j as usize] - c[j as usize]);
                        }
                    }
                    d2
                };
                d2.max(0.0).sqrt()
            }
        }
    }

    fn enters_topk(&self, vi: usize, dc: f64) -> bool {
        match self.thresholds[vi] {
            None => true,
            Some(t) => dc < t,
        }
    }

    /// Fraction of `voters` (local indices; `None` = everyone) whose top-k
    /// the crafted answers enter.
    pub fn visibility(&self, c: &[f64], mv: &mut MoveScratch, voters: Option<&[u32]>) -> f64 {
        self.prepare_move(c, mv);
        let count = |vi: usize| -> u64 { self.enters_topk(vi, self.distance(vi, c, mv)) as u64 };
        let (hits, total) = match voters {
            Some(vs) => (vs.iter().map(|&v| count(v as usize)).sum::<u64>(), vs.len()),
            None => ((0..self.n_voters).map(count).sum::<u64>(), self.n_voters),
        };
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }

    fn random_answers(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.allowed
            .iter()
            .map(|a| a[rng.random_range(0..a.len())])
            .collect()
    }
}

/// Searches for the answer profile maximizing a crafted candidate's
/// k-visibility in `state` by simulated annealing. The first run starts
/// from the most visible real candidate's answers; further restarts start
/// from random profiles. Returns the best profile across restarts with its
/// visibility over the state's full electorate (even when the search
/// objective sampled a voter subset).
pub fn optimize_answers(
    election: &Election,
    state: &str,
    k: Option<u32>,
    method: &MatchingMethod,
    cfg: &AnnealingConfig,
) -> Result<(Profile, f64), AttackError> {
    cfg.validate()?;
    let ctx = CraftedContext::build(election, state, k, method)?;
    let n_q = ctx.n_q;

    // Deterministic voter subsample, shared by every restart.
    let subsample: Option<Vec<u32>> = {
        let n = ctx.n_voters;
        let m = ((cfg.voter_subsample_fraction * n as f64).round() as usize).clamp(1.min(n), n);
        if m == n {
            None
        } else {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            let mut rng = voter_stream(cfg.seed, "anneal-subsample", state);
            for i in 0..m {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            idx.truncate(m);
            idx.sort_unstable();
            Some(idx)
        }
    };
    let sub = subsample.as_deref();

    let mut mv = MoveScratch::default();
    let mut winners: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts as usize);
    for r in 0..cfg.restarts {
        let mut rng = voter_stream(cfg.seed, &format!("anneal-run-{r}"), state);
        let mut cur = match (r, &ctx.warm) {
            (0, Some(w)) => w.clone(),
            _ => ctx.random_answers(&mut rng),
        };
        let mut cur_vis = ctx.visibility(&cur, &mut mv, sub);
        let mut best = cur.clone();
        let mut best_vis = cur_vis;
        let mut temp = cfg.initial_temperature;
        for _ in 0..cfg.iterations {
            let t = rng.random_range(0..n_q);
            let choices = &ctx.allowed[t];
            let proposal = choices[rng.random_range(0..choices.len())];
            let old = cur[t];
            if proposal != old {
                cur[t] = proposal;
                let vis = ctx.visibility(&cur, &mut mv, sub);
                let delta = vis - cur_vis;
                if delta >= 0.0 || rng.random::<f64>() < (delta / temp).exp() {
                    cur_vis = vis;
                    if vis > best_vis {
                        best_vis = vis;
                        best.copy_from_slice(&cur);
                    }
                } else {
                    cur[t] = old;
                }
            }
            temp *= cfg.cooling_factor;
        }
        winners.push(best);
    }

    // Judge every restart's best on the full electorate.
    let mut best_answers = None;
    let mut best_vis = f64::NEG_INFINITY;
    for w in winners {
        let vis = ctx.visibility(&w, &mut mv, None);
        if vis > best_vis {
            best_vis = vis;
            best_answers = Some(w);
        }
    }
    let answers = best_answers.expect("restarts ≥ 1");
    Ok((Profile::complete(answers), best_vis))
}

/// Exhaustively enumerates every answer profile (lexicographic order over
/// the allowed values) and returns the k-visibility maximizer; ties keep
/// the lexicographically smallest profile. Refuses instances with more
/// than 10⁶ combinations.
pub fn brute_force_optimal(
    election: &Election,
    state: &str,
    k: Option<u32>,
    method: &MatchingMethod,
) -> Result<(Profile, f64), AttackError> {
    let ctx = CraftedContext::build(election, state, k, method)?;
    let combinations: f64 = ctx.allowed.iter().map(|a| a.len() as f64).product();
    if combinations > 1e6 {
        return Err(AttackError::InstanceTooLarge { combinations });
    }

    let n_q = ctx.n_q;
    let mut digits = vec![0usize; n_q];
    let mut mv = MoveScratch::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let c: Vec<f64> = digits
            .iter()
            .enumerate()
            .map(|(t, &d)| ctx.allowed[t][d])
            .collect();
        let vis = ctx.visibility(&c, &mut mv, None);
        if best.as_ref().is_none_or(|(_, b)| vis > *b) {
            best = Some((c, vis));
        }
        // Advance the odometer, last question fastest, so profiles appear
        // in lexicographic order.
        let mut t = n_q;
        loop {
            if t == 0 {
                let (c, vis) = best.expect("at least one profile");
                return Ok((Profile::complete(c), vis));
            }
            t -= 1;
            digits[t] += 1;
            if digits[t] < ctx.allowed[t].len() {
                break;
            }
            digits[t] = 0;
        }
    }
}
