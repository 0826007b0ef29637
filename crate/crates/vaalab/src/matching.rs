//! Distance methods between voter and candidate profiles.
//!
//! Seven methods are provided:
//!
//! * `L2` — weighted Euclidean distance, the production default. Its paired
//!   display score is `100·(1 − d/d_max)` where `d_max` is the distance
//!   between an all-100 and an all-0 profile under the voter's weights.
//! * `L1` — weighted sum of absolute differences.
//! * `AgreementCount` — negated weighted count of exact answer agreements
//!   (lower is better, like every other method).
//! * `Angular` — angle between the weighted deviation-from-neutral vectors.
//! * `Mahalanobis` — covariance-rescaled Euclidean distance over the voter's
//!   answered questions; ignores voter weights and needs a
//!   [`PrecisionContext`] built from the candidate field.
//! * `L1Bonus` / `Hybrid` — weighted table lookups on the 5-anchor grid
//!   {0, 25, 50, 75, 100}, with historical default tables built in.
//!
//! All distances are plain `f64`s; ties are handled downstream by the
//! ranking layer using exact comparison.

use crate::model::{AnswerScale, Election, Profile, Question};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// The anchor grid distance tables are defined on.
pub const ANCHOR_VALUES: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];

/// Errors from distance computation and its supporting constructors.
#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("voter profile covers {voter} questions, candidate {candidate}, questionnaire {expected}")]
    LengthMismatch {
        voter: usize,
        candidate: usize,
        expected: usize,
    },
    #[error("no participating questions: every shared question is unanswered or zero-weighted")]
    EmptyOverlap,
    #[error("angular distance is undefined: a deviation vector is exactly zero (all-neutral answers)")]
    NeutralProfile,
    #[error("this method requires a precision context")]
    MissingContext,
    #[error("precision context covers {actual} questions but the questionnaire has {expected}")]
    ContextMismatch { expected: usize, actual: usize },
    #[error("distance matrix cell ({0},{1}) is negative or not finite")]
    BadMatrixCell(usize, usize),
    #[error("distance matrix must be symmetric but cell ({0},{1}) differs from its mirror")]
    AsymmetricMatrix(usize, usize),
    #[error("matrix csv line {line}: {detail}")]
    MatrixParse { line: usize, detail: String },
    #[error("answer {0} is outside the anchor range [0, 100]")]
    AnchorOutOfRange(f64),
    #[error("ridge must be positive and finite, got {0}")]
    InvalidRidge(f64),
    #[error("precision context needs at least two candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("candidate {0} has unanswered questions; covariance needs complete profiles")]
    IncompleteCandidate(String),
    #[error("covariance plus ridge is not positive definite")]
    NotPositiveDefinite,
    #[error("unknown method name `{0}`")]
    UnknownMethod(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
}

/// Index of the nearest anchor in {0, 25, 50, 75, 100} (ties round away from
/// zero, i.e. 12.5 → 25). Errors outside [0, 100].
pub fn anchor_index(value: f64) -> Result<usize, MatchError> {
    if !value.is_finite() || !(0.0..=100.0).contains(&value) {
        return Err(MatchError::AnchorOutOfRange(value));
    }
    Ok((value / 25.0).round() as usize)
}

/// A symmetric, non-negative 5×5 distance table on the anchor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    cells: [[f64; 5]; 5],
}

impl DistanceMatrix {
    pub fn new(cells: [[f64; 5]; 5]) -> Result<Self, MatchError> {
        for (i, row) in cells.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(MatchError::BadMatrixCell(i, j));
                }
                if cells[j][i] != c {
                    return Err(MatchError::AsymmetricMatrix(i, j));
                }
            }
        }
        Ok(DistanceMatrix { cells })
    }

    /// The historical bonus table: plain L1 plus a 100-point penalty on
    /// full-scale disagreements and a 25-point bonus (distance reduction) on
    /// exact agreement at a non-extreme position.
    pub fn l1_bonus() -> Self {
        DistanceMatrix {
            cells: [
                [0.0, 125.0, 150.0, 175.0, 200.0],
                [125.0, 75.0, 125.0, 150.0, 175.0],
                [150.0, 125.0, 100.0, 125.0, 150.0],
                [175.0, 150.0, 125.0, 75.0, 125.0],
                [200.0, 175.0, 150.0, 125.0, 0.0],
            ],
        }
    }

    /// The hybrid table: the entrywise mean of doubled-L1 and a
    /// bonus-for-agreement scheme, as deployed by a 2014 European VAA.
    pub fn hybrid() -> Self {
        DistanceMatrix {
            cells: [
                [0.0, 50.0, 100.0, 150.0, 200.0],
                [50.0, 37.5, 75.0, 112.5, 150.0],
                [100.0, 75.0, 50.0, 75.0, 100.0],
                [150.0, 112.5, 75.0, 37.5, 50.0],
                [200.0, 150.0, 100.0, 50.0, 0.0],
            ],
        }
    }

    pub fn cell(&self, voter_anchor: usize, candidate_anchor: usize) -> f64 {
        self.cells[voter_anchor][candidate_anchor]
    }

    /// Table value for a (voter, candidate) answer pair, each mapped to its
    /// nearest anchor.
    pub fn lookup(&self, voter_answer: f64, candidate_answer: f64) -> Result<f64, MatchError> {
        Ok(self.cells[anchor_index(voter_answer)?][anchor_index(candidate_answer)?])
    }

    pub fn max_cell(&self) -> f64 {
        self.cells
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parses a 5×5 table from CSV: five data rows of five comma-separated
    /// numbers; blank lines and lines starting with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self, MatchError> {
        let mut cells = [[0.0f64; 5]; 5];
        let mut row = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if row >= 5 {
                return Err(MatchError::MatrixParse {
                    line: lineno + 1,
                    detail: "more than five data rows".into(),
                });
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(MatchError::MatrixParse {
                    line: lineno + 1,
                    detail: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            for (j, f) in fields.iter().enumerate() {
                cells[row][j] = f.parse::<f64>().map_err(|e| MatchError::MatrixParse {
                    line: lineno + 1,
                    detail: format!("field {}: {e}", j + 1),
                })?;
            }
            row += 1;
        }
        if row != 5 {
            return Err(MatchError::MatrixParse {
                line: text.lines().count(),
                detail: format!("expected 5 data rows, found {row}"),
            });
        }
        Self::new(cells)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.cells {
            let fields: Vec<String> = row.iter().map(|c| format!("{c}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// A distance table specialized to one answer scale: `cells[i][j]` is the
/// matrix distance between the scale's i-th and j-th allowed values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    pub values: Vec<f64>,
    pub cells: Vec<Vec<f64>>,
}

impl ScaleMatrix {
    pub fn lookup(&self, voter_answer: f64, candidate_answer: f64) -> Option<f64> {
        let i = self.values.iter().position(|&v| v == voter_answer)?;
        let j = self.values.iter().position(|&v| v == candidate_answer)?;
        Some(self.cells[i][j])
    }
}

/// Specializes an anchor-grid table to an arbitrary scale by mapping every
/// scale value to its nearest anchor (e.g. on the 7-point scale, 17 and 33
/// both use the 25 column). Scale values are within [0, 100] by construction,
/// so the lookup cannot fail.
pub fn generalize_matrix(dm: &DistanceMatrix, scale: &AnswerScale) -> ScaleMatrix {
    let values = scale.allowed().to_vec();
    let cells = values
        .iter()
        .map(|&v| {
            values
                .iter()
                .map(|&c| dm.lookup(v, c).expect("scale values are within [0,100]"))
                .collect()
        })
        .collect();
    ScaleMatrix { values, cells }
}

/// Options for the covariance-rescaled method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MahalanobisOptions {
    /// Explicit ridge ε; `None` uses 10⁻⁶·trace(Cov)/N_q (or 1.0 when the
    /// candidates are identical and the trace vanishes).
    pub ridge: Option<f64>,
    /// Pool candidates across all states when building the covariance
    /// (default is per-state).
    pub pooled_covariance: bool,
}

impl Default for MahalanobisOptions {
    fn default() -> Self {
        MahalanobisOptions {
            ridge: None,
            pooled_covariance: false,
        }
    }
}

/// Method tag without parameters; used for naming, parsing and dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    L2,
    L1,
    AgreementCount,
    Angular,
    Mahalanobis,
    L1Bonus,
    Hybrid,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::L2,
        MethodKind::L1,
        MethodKind::AgreementCount,
        MethodKind::Angular,
        MethodKind::Mahalanobis,
        MethodKind::L1Bonus,
        MethodKind::Hybrid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::L2 => "l2",
            MethodKind::L1 => "l1",
            MethodKind::AgreementCount => "agreement_count",
            MethodKind::Angular => "angular",
            MethodKind::Mahalanobis => "mahalanobis",
            MethodKind::L1Bonus => "l1_bonus",
            MethodKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(MethodKind::L2),
            "l1" => Ok(MethodKind::L1),
            "agreement_count" | "agreement-count" | "ac" => Ok(MethodKind::AgreementCount),
            "angular" => Ok(MethodKind::Angular),
            "mahalanobis" => Ok(MethodKind::Mahalanobis),
            "l1_bonus" | "l1-bonus" | "l1bonus" => Ok(MethodKind::L1Bonus),
            "hybrid" => Ok(MethodKind::Hybrid),
            other => Err(MatchError::UnknownMethod(other.to_string())),
        }
    }
}

/// A fully parameterized matching method.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchingMethod {
    L2,
    L1,
    AgreementCount,
    Angular,
    Mahalanobis(MahalanobisOptions),
    L1Bonus(DistanceMatrix),
    Hybrid(DistanceMatrix),
}

impl MatchingMethod {
    pub fn kind(&self) -> MethodKind {
        match self {
            MatchingMethod::L2 => MethodKind::L2,
            MatchingMethod::L1 => MethodKind::L1,
            MatchingMethod::AgreementCount => MethodKind::AgreementCount,
            MatchingMethod::Angular => MethodKind::Angular,
            MatchingMethod::Mahalanobis(_) => MethodKind::Mahalanobis,
            MatchingMethod::L1Bonus(_) => MethodKind::L1Bonus,
            MatchingMethod::Hybrid(_) => MethodKind::Hybrid,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// A method with default parameters for the given tag.
    pub fn from_kind(kind: MethodKind) -> Self {
        match kind {
            MethodKind::L2 => MatchingMethod::L2,
            MethodKind::L1 => MatchingMethod::L1,
            MethodKind::AgreementCount => MatchingMethod::AgreementCount,
            MethodKind::Angular => MatchingMethod::Angular,
            MethodKind::Mahalanobis => MatchingMethod::Mahalanobis(MahalanobisOptions::default()),
            MethodKind::L1Bonus => MatchingMethod::L1Bonus(DistanceMatrix::l1_bonus()),
            MethodKind::Hybrid => MatchingMethod::Hybrid(DistanceMatrix::hybrid()),
        }
    }

    /// All seven methods with default parameters, in scorecard row order.
    pub fn all_defaults() -> Vec<MatchingMethod> {
        MethodKind::ALL.iter().map(|&k| Self::from_kind(k)).collect()
    }

    pub fn matrix(&self) -> Option<&DistanceMatrix> {
        match self {
            MatchingMethod::L1Bonus(m) | MatchingMethod::Hybrid(m) => Some(m),
            _ => None,
        }
    }

    pub fn needs_precision_context(&self) -> bool {
        matches!(self, MatchingMethod::Mahalanobis(_))
    }
}

impl fmt::Display for MatchingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatchingMethod {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::from_kind(s.parse::<MethodKind>()?))
    }
}

/// Regularized inverse covariance of a candidate answer matrix, shared by
/// all Mahalanobis evaluations against that candidate field.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionContext {
    n_q: usize,
    ridge: f64,
    /// Row-major n_q × n_q symmetric positive definite matrix.
    precision: Vec<f64>,
}

impl PrecisionContext {
    /// Builds the precision matrix from complete candidate answer rows:
    /// column-mean-centered covariance with 1/(N_c − 1) normalization, plus
    /// `ridge`·I, inverted. `ridge = None` applies the default
    /// 10⁻⁶·trace(Cov)/N_q, falling back to 1.0 for a zero covariance.
    pub fn build<R: AsRef<[f64]>>(rows: &[R], ridge: Option<f64>) -> Result<Self, MatchError> {
        let n_c = rows.len();
        if n_c < 2 {
            return Err(MatchError::TooFewCandidates(n_c));
        }
        let n_q = rows[0].as_ref().len();
        let mut mean = vec![0.0f64; n_q];
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_q, "candidate rows must share one length");
            for (m, &x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n_c as f64;
        }
        let mut cov = vec![0.0f64; n_q * n_q];
        for r in rows {
            let r = r.as_ref();
            for i in 0..n_q {
                let di = r[i] - mean[i];
                for j in i..n_q {
                    cov[i * n_q + j] += di * (r[j] - mean[j]);
                }
            }
        }
        let norm = 1.0 / (n_c as f64 - 1.0);
        for i in 0..n_q {
            for j in i..n_q {
                let v = cov[i * n_q + j] * norm;
                cov[i * n_q + j] = v;
                cov[j * n_q + i] = v;
            }
        }
        let trace: f64 = (0..n_q).map(|i| cov[i * n_q + i]).sum();
        let ridge = match ridge {
            Some(r) if r.is_finite() && r > 0.0 => r,
            Some(r) => return Err(MatchError::InvalidRidge(r)),
            None if trace > 0.0 => 1e-6 * trace / n_q as f64,
            None => 1.0,
        };
        for i in 0..n_q {
            cov[i * n_q + i] += ridge;
        }
        let precision = invert_spd(&cov, n_q)?;
        Ok(PrecisionContext {
            n_q,
            ridge,
            precision,
        })
    }

    /// Precision context from the complete profiles of one state's
    /// candidates.
    pub fn for_state(
        election: &Election,
        state: &str,
        options: &MahalanobisOptions,
    ) -> Result<Self, MatchError> {
        if !election.states.contains_key(state) {
            return Err(MatchError::UnknownState(state.to_string()));
        }
        let rows = candidate_rows(election, Some(state))?;
        Self::build(&rows, options.ridge)
    }

    /// Precision context pooled over every candidate in the election.
    pub fn pooled(election: &Election, options: &MahalanobisOptions) -> Result<Self, MatchError> {
        let rows = candidate_rows(election, None)?;
        Self::build(&rows, options.ridge)
    }

    /// An identity precision over `n_q` questions; the degenerate fallback
    /// used when a covariance cannot be estimated (single-candidate states).
    pub fn identity(n_q: usize) -> Self {
        let mut precision = vec![0.0; n_q * n_q];
        for i in 0..n_q {
            precision[i * n_q + i] = 1.0;
        }
        PrecisionContext {
            n_q,
            ridge: 1.0,
            precision,
        }
    }

    pub fn n_questions(&self) -> usize {
        self.n_q
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Row-major precision matrix entries.
    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        self.precision[i * self.n_q + j]
    }
}

fn candidate_rows(election: &Election, state: Option<&str>) -> Result<Vec<Vec<f64>>, MatchError> {
    let mut rows = Vec::new();
    for c in &election.candidates {
        if state.is_some_and(|s| s != c.state) {
            continue;
        }
        let row: Option<Vec<f64>> = c.profile.answers().iter().copied().collect();
        rows.push(row.ok_or_else(|| MatchError::IncompleteCandidate(c.id.clone()))?);
    }
    Ok(rows)
}

/// Inverts a symmetric positive definite matrix via Cholesky factorization.
fn invert_spd(a: &[f64], n: usize) -> Result<Vec<f64>, MatchError> {
    // Lower-triangular factor L with A = L·Lᵀ.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(MatchError::NotPositiveDefinite);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Solve A·X = I column by column: L·y = e_k, then Lᵀ·x = y.
    let mut inv = vec![0.0f64; n * n];
    let mut y = vec![0.0f64; n];
    for k in 0..n {
        for i in 0..n {
            let mut s = if i == k { 1.0 } else { 0.0 };
            for j in 0..i {
                s -= l[i * n + j] * y[j];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= l[j * n + i] * inv[j * n + k];
            }
            inv[i * n + k] = s / l[i * n + i];
        }
    }
    // Cholesky round-off can leave the inverse imperceptibly asymmetric;
    // symmetrize so downstream code can rely on exact P[i,j] == P[j,i].
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = v;
            inv[j * n + i] = v;
        }
    }
    Ok(inv)
}

fn check_lengths(
    voter: &Profile,
    candidate: &Profile,
    n_q: usize,
) -> Result<(), MatchError> {
    if voter.len() != n_q || candidate.len() != n_q {
        return Err(MatchError::LengthMismatch {
            voter: voter.len(),
            candidate: candidate.len(),
            expected: n_q,
        });
    }
    Ok(())
}

/// Distance between a voter and a candidate under `method`.
///
/// Questions participate when both sides answered them and the voter weight
/// is positive — except Mahalanobis, which ignores weights and uses every
/// question both sides answered.
///
/// Errors are semantic signals the ranking layer interprets:
/// [`MatchError::EmptyOverlap`] flags the pair as uncomparable and
/// [`MatchError::NeutralProfile`] (Angular only) asks for the worst-distance
/// fallback.
pub fn compute_distance(
    method: &MatchingMethod,
    voter: &Profile,
    candidate: &Profile,
    questions: &[Question],
    ctx: Option<&PrecisionContext>,
) -> Result<f64, MatchError> {
    check_lengths(voter, candidate, questions.len())?;
    let pairs = || {
        voter
            .answers()
            .iter()
            .zip(voter.weights())
            .zip(candidate.answers())
            .enumerate()
            .filter_map(|(t, ((va, &w), ca))| match (va, ca) {
                (Some(v), Some(c)) if w > 0.0 => Some((t, *v, w, *c)),
                _ => None,
            })
    };
    match method {
        MatchingMethod::L2 => {
            let mut sum = 0.0;
            let mut any = false;
            for (_, v, w, c) in pairs() {
                any = true;
                let d = w * (v - c);
                sum += d * d;
            }
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(sum.sqrt())
        }
        MatchingMethod::L1 => {
            let mut sum = 0.0;
            let mut any = false;
            for (_, v, w, c) in pairs() {
                any = true;
                sum += w * (v - c).abs();
            }
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(sum)
        }
        MatchingMethod::AgreementCount => {
            let mut agree = 0.0;
            let mut any = false;
            for (_, v, w, c) in pairs() {
                any = true;
                if v == c {
                    agree += w;
                }
            }
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(-agree)
        }
        MatchingMethod::Angular => {
            let mut dot = 0.0;
            let mut nv = 0.0;
            let mut nc = 0.0;
            let mut any = false;
            for (t, v, w, c) in pairs() {
                any = true;
                let n = questions[t].scale.neutral();
                let dv = w * (v - n);
                let dc = w * (c - n);
                dot += dv * dc;
                nv += dv * dv;
                nc += dc * dc;
            }
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            if nv == 0.0 || nc == 0.0 {
                return Err(MatchError::NeutralProfile);
            }
            Ok((dot / (nv.sqrt() * nc.sqrt())).clamp(-1.0, 1.0).acos())
        }
        MatchingMethod::Mahalanobis(_) => {
            let ctx = ctx.ok_or(MatchError::MissingContext)?;
            if ctx.n_q != questions.len() {
                return Err(MatchError::ContextMismatch {
                    expected: questions.len(),
                    actual: ctx.n_q,
                });
            }
            let mut mask = Vec::new();
            let mut diff = Vec::new();
            for (t, (va, ca)) in voter.answers().iter().zip(candidate.answers()).enumerate() {
                if let (Some(v), Some(c)) = (va, ca) {
                    mask.push(t);
                    diff.push(v - c);
                }
            }
            if mask.is_empty() {
                return Err(MatchError::EmptyOverlap);
            }
            let mut d2 = 0.0;
            for (a, &i) in mask.iter().enumerate() {
                for (b, &j) in mask.iter().enumerate() {
                    d2 += ctx.at(i, j) * diff[a] * diff[b];
                }
            }
            Ok(d2.max(0.0).sqrt())
        }
        MatchingMethod::L1Bonus(m) | MatchingMethod::Hybrid(m) => {
            let mut sum = 0.0;
            let mut any = false;
            for (_, v, w, c) in pairs() {
                any = true;
                sum += w * m.lookup(v, c)?;
            }
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(sum)
        }
    }
}

/// The production similarity score: `100·(1 − d/d_max)` where `d` is the
/// weighted Euclidean distance and `d_max = 100·√(Σw²)` is the distance
/// between the all-100 and all-0 profiles under the same weights. 100 means
/// identical answers on every weighted question; 0 means maximally distant
/// on all of them.
pub fn similarity_score(voter: &Profile, candidate: &Profile) -> Result<f64, MatchError> {
    if voter.len() != candidate.len() {
        return Err(MatchError::LengthMismatch {
            voter: voter.len(),
            candidate: candidate.len(),
            expected: voter.len(),
        });
    }
    let mut sum = 0.0;
    let mut wsq = 0.0;
    let mut any = false;
    for ((va, &w), ca) in voter
        .answers()
        .iter()
        .zip(voter.weights())
        .zip(candidate.answers())
    {
        if let (Some(v), Some(c)) = (va, ca) {
            if w > 0.0 {
                any = true;
                let d = w * (v - c);
                sum += d * d;
                wsq += w * w;
            }
        }
    }
    if !any {
        return Err(MatchError::EmptyOverlap);
    }
    Ok(100.0 * (1.0 - sum.sqrt() / (100.0 * wsq.sqrt())))
}

/// Per-voter affine map from a method's distance to its 0–100 display score:
/// `score(d) = (offset − d)·scale`, optionally clamped to [0, 100].
///
/// For `L2` the map reproduces [`similarity_score`] exactly; for the other
/// methods it is the analogous normalization by the voter's worst attainable
/// distance (table maximum, π for Angular, the all-100-vs-all-0 reference for
/// Mahalanobis, with clamping because that reference is not a sharp bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreScale {
    pub offset: f64,
    pub scale: f64,
    pub clamp: bool,
}

impl ScoreScale {
    pub fn score(&self, distance: f64) -> f64 {
        let s = (self.offset - distance) * self.scale;
        if self.clamp {
            s.clamp(0.0, 100.0)
        } else {
            s
        }
    }
}

/// Builds the display-score map for one voter under `method`, assuming the
/// compared candidates answered every question (the election invariant), so
/// the participating set is determined by the voter alone.
pub fn score_scale(
    method: &MatchingMethod,
    voter: &Profile,
    questions: &[Question],
    ctx: Option<&PrecisionContext>,
) -> Result<ScoreScale, MatchError> {
    if voter.len() != questions.len() {
        return Err(MatchError::LengthMismatch {
            voter: voter.len(),
            candidate: voter.len(),
            expected: questions.len(),
        });
    }
    let mut w_sum = 0.0;
    let mut w_sq = 0.0;
    let mut any = false;
    for (a, &w) in voter.answers().iter().zip(voter.weights()) {
        if a.is_some() && w > 0.0 {
            any = true;
            w_sum += w;
            w_sq += w * w;
        }
    }
    match method {
        MatchingMethod::L2 => {
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            let d_max = 100.0 * w_sq.sqrt();
            Ok(ScoreScale {
                offset: d_max,
                scale: 100.0 / d_max,
                clamp: false,
            })
        }
        MatchingMethod::L1 => {
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            let d_max = 100.0 * w_sum;
            Ok(ScoreScale {
                offset: d_max,
                scale: 100.0 / d_max,
                clamp: false,
            })
        }
        MatchingMethod::AgreementCount => {
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(ScoreScale {
                offset: 0.0,
                scale: 100.0 / w_sum,
                clamp: false,
            })
        }
        MatchingMethod::Angular => {
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            Ok(ScoreScale {
                offset: std::f64::consts::PI,
                scale: 100.0 / std::f64::consts::PI,
                clamp: false,
            })
        }
        MatchingMethod::L1Bonus(m) | MatchingMethod::Hybrid(m) => {
            if !any {
                return Err(MatchError::EmptyOverlap);
            }
            let d_max = m.max_cell() * w_sum;
            Ok(ScoreScale {
                offset: d_max,
                scale: 100.0 / d_max,
                clamp: false,
            })
        }
        MatchingMethod::Mahalanobis(_) => {
            let ctx = ctx.ok_or(MatchError::MissingContext)?;
            if ctx.n_q != questions.len() {
                return Err(MatchError::ContextMismatch {
                    expected: questions.len(),
                    actual: ctx.n_q,
                });
            }
            // Reference distance between the all-100 and all-0 profiles over
            // the voter's answered questions: 100·√(Σ_{i,j∈mask} P[i,j]).
            let mask: Vec<usize> = voter
                .answers()
                .iter()
                .enumerate()
                .filter_map(|(t, a)| a.is_some().then_some(t))
                .collect();
            if mask.is_empty() {
                return Err(MatchError::EmptyOverlap);
            }
            let mut s = 0.0;
            for &i in &mask {
                for &j in &mask {
                    s += ctx.at(i, j);
                }
            }
            let d_ref = 100.0 * s.max(0.0).sqrt();
            if d_ref <= 0.0 {
                return Err(MatchError::NotPositiveDefinite);
            }
            Ok(ScoreScale {
                offset: d_ref,
                scale: 100.0 / d_ref,
                clamp: true,
            })
        }
    }
}
