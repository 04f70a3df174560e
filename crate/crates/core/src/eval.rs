//! Factor Match Score with optimal component matching, detection of
//! degenerate (diverging, mutually cancelling) components, and best-run
//! selection over multi-start fits.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::record::RunRecord;
use crate::linalg::{Mat, Vector};
use crate::model::Parafac2Factors;
use crate::solver::ExitReason;

/// Triple cosine below `-threshold` flags a degenerate pair.
pub const DEFAULT_DEGENERACY_THRESHOLD: f64 = 0.85;

/// Largest rank matched by exhaustive permutation search.
const EXHAUSTIVE_MAX_RANK: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    MaxIterations,
    Degenerate,
    Diverged,
}

impl DiscardReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiscardReason::MaxIterations => "max-iterations",
            DiscardReason::Degenerate => "degenerate",
            DiscardReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub fms: f64,
    /// `permutation[i]` is the truth component matched to estimate component `i`.
    pub permutation: Vec<usize>,
    /// Score of each estimate component against its matched truth component.
    pub per_component_scores: Vec<f64>,
    pub degenerate: bool,
    pub discarded_reason: Option<DiscardReason>,
    /// Estimate components with a zero-norm factor column.
    pub zero_norm_components: Vec<usize>,
}

/// Column vectors describing one component in each compared mode.
pub(crate) struct ComponentModes {
    pub modes: Vec<Vec<Vector>>,
}

impl ComponentModes {
    pub fn rank(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }
}

/// `(a_r, concat_k B_k[:, r], (D_k[r])_k)` for each component `r`.
pub(crate) fn parafac2_modes(f: &Parafac2Factors) -> ComponentModes {
    let r = f.rank();
    let a = (0..r).map(|c| f.a.column(c).into_owned()).collect();
    ComponentModes { modes: vec![a, concat_b(&f.b, r), (0..r).map(|c| Vector::from_iterator(f.k(), f.d.iter().map(|d| d[c]))).collect()] }
}

pub(crate) fn concat_b(b: &[Mat], r: usize) -> Vec<Vector> {
    (0..r)
        .map(|c| Vector::from_iterator(b.iter().map(|m| m.nrows()).sum(), b.iter().flat_map(|m| m.column(c).iter().copied().collect::<Vec<_>>())))
        .collect()
}

fn abs_cosine(x: &Vector, y: &Vector) -> Option<f64> {
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        None
    } else {
        Some((x.dot(y) / (nx * ny)).abs().min(1.0))
    }
}

fn signed_cosine(x: &Vector, y: &Vector) -> f64 {
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        (x.dot(y) / (nx * ny)).clamp(-1.0, 1.0)
    }
}

/// Generic FMS over any number of modes.
pub(crate) fn match_components(estimate: &ComponentModes, truth: &ComponentModes) -> Result<MatchReport> {
    let r = estimate.rank();
    if r != truth.rank() {
        return Err(Error::RankMismatch { estimate: r, truth: truth.rank() });
    }
    if estimate.modes.len() != truth.modes.len() {
        return Err(Error::Shape("estimate and truth compare different mode counts".into()));
    }
    for (em, tm) in estimate.modes.iter().zip(&truth.modes) {
        if em.iter().zip(tm).any(|(e, t)| e.len() != t.len()) {
            return Err(Error::Shape("estimate and truth factor lengths differ".into()));
        }
    }
    let mut zero_norm = Vec::new();
    let mut scores = Mat::zeros(r, r);
    for i in 0..r {
        if estimate.modes.iter().any(|m| m[i].norm() == 0.0) {
            zero_norm.push(i);
            continue;
        }
        for j in 0..r {
            scores[(i, j)] = estimate
                .modes
                .iter()
                .zip(&truth.modes)
                .map(|(em, tm)| abs_cosine(&em[i], &tm[j]).unwrap_or(0.0))
                .product();
        }
    }
    let permutation = best_assignment(&scores);
    let per_component_scores: Vec<f64> = permutation.iter().enumerate().map(|(i, j)| scores[(i, *j)]).collect();
    let fms = if r == 0 { 0.0 } else { per_component_scores.iter().sum::<f64>() / r as f64 };
    Ok(MatchReport {
        fms,
        permutation,
        per_component_scores,
        degenerate: false,
        discarded_reason: None,
        zero_norm_components: zero_norm,
    })
}

/// Maximum-weight perfect matching of rows to columns.
pub(crate) fn best_assignment(scores: &Mat) -> Vec<usize> {
    let r = scores.nrows();
    if r <= EXHAUSTIVE_MAX_RANK {
        let mut best: (f64, Vec<usize>) = (f64::NEG_INFINITY, (0..r).collect());
        for perm in (0..r).permutations(r) {
            let total: f64 = perm.iter().enumerate().map(|(i, j)| scores[(i, *j)]).sum();
            if total > best.0 {
                best = (total, perm);
            }
        }
        best.1
    } else {
        hungarian_max(scores)
    }
}

/// Hungarian algorithm (shortest augmenting paths) on negated scores.
fn hungarian_max(scores: &Mat) -> Vec<usize> {
    let n = scores.nrows();
    let cost = |i: usize, j: usize| -scores[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Factor Match Score between a PARAFAC2 estimate and ground truth,
/// averaged over components under the best matching. `B` columns are
/// compared after concatenating over all slices; `C` is the stacked `D_k`.
pub fn fms(estimate: &Parafac2Factors, truth: &Parafac2Factors) -> Result<MatchReport> {
    if estimate.k() != truth.k() {
        return Err(Error::Shape(format!("estimate has {} slices, truth {}", estimate.k(), truth.k())));
    }
    let mut report = match_components(&parafac2_modes(estimate), &parafac2_modes(truth))?;
    report.degenerate = estimate.rank() >= 2 && detect_degenerate(estimate, DEFAULT_DEGENERACY_THRESHOLD);
    Ok(report)
}

/// True when some pair of components points in nearly opposite directions
/// across all modes: `cos(a_i,a_j)·cos(b_i,b_j)·cos(c_i,c_j) < −threshold`.
pub fn detect_degenerate(factors: &Parafac2Factors, threshold: f64) -> bool {
    degenerate_modes(&parafac2_modes(factors), threshold)
}

pub(crate) fn degenerate_modes(modes: &ComponentModes, threshold: f64) -> bool {
    let r = modes.rank();
    (0..r).tuple_combinations().any(|(i, j)| {
        let product: f64 = modes.modes.iter().map(|m| signed_cosine(&m[i], &m[j])).product();
        product < -threshold
    })
}

/// Chosen run plus why, if at all, it would have been discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRun {
    pub record: RunRecord,
    pub discarded_reason: Option<DiscardReason>,
}

fn discard_reason(r: &RunRecord) -> Option<DiscardReason> {
    match r.exit_reason {
        ExitReason::Diverged => Some(DiscardReason::Diverged),
        ExitReason::MaxIterations => Some(DiscardReason::MaxIterations),
        ExitReason::LossTolerance if r.degenerate => Some(DiscardReason::Degenerate),
        ExitReason::LossTolerance => None,
    }
}

/// Lowest-loss run among those that met the loss tolerance and are not
/// degenerate. If none qualifies the lowest-loss run overall is returned
/// with the reason it would have been discarded.
pub fn select_best(runs: &[RunRecord]) -> Result<BestRun> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs to select from"));
    }
    let by_loss = |a: &&RunRecord, b: &&RunRecord| a.final_loss.total_cmp(&b.final_loss);
    if let Some(best) = runs.iter().filter(|r| discard_reason(r).is_none()).min_by(by_loss) {
        return Ok(BestRun { record: best.clone(), discarded_reason: None });
    }
    let fallback = runs
        .iter()
        .filter(|r| r.exit_reason != ExitReason::Diverged)
        .min_by(by_loss)
        .or_else(|| runs.iter().min_by(by_loss))
        .expect("non-empty");
    Ok(BestRun { record: fallback.clone(), discarded_reason: discard_reason(fallback) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::random_init;

    fn orthogonal_truth() -> Parafac2Factors {
        let a = Mat::identity(4, 3);
        let b = vec![Mat::identity(5, 3); 2];
        let d = vec![Vector::from_vec(vec![1.0, 2.0, 3.0]), Vector::from_vec(vec![2.0, 1.0, 0.5])];
        Parafac2Factors::new(a, b, d).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let t = random_init(6, 5, 4, 3, 7);
        let rep = fms(&t, &t).unwrap();
        assert!((rep.fms - 1.0).abs() < 1e-12);
        assert_eq!(rep.permutation, vec![0, 1, 2]);
    }

    #[test]
    fn permuted_and_rescaled_is_one() {
        let t = random_init(6, 5, 4, 3, 8);
        let perm = [2, 0, 1];
        let scales = [(-2.0, 0.5, 3.0), (0.1, -7.0, 1.0), (4.0, 1.0, 0.2)];
        let mut e = t.clone();
        for (new, old) in perm.iter().enumerate() {
            let (sa, sb, sd) = scales[new];
            e.a.set_column(new, &(t.a.column(*old) * sa));
            for k in 0..t.k() {
                e.b[k].set_column(new, &(t.b[k].column(*old) * sb));
                e.d[k][new] = t.d[k][*old] * sd;
            }
        }
        let rep = fms(&e, &t).unwrap();
        assert!((rep.fms - 1.0).abs() < 1e-12);
        assert_eq!(rep.permutation, perm.to_vec());
    }

    #[test]
    fn averaged_components_score_below_one() {
        let truth = orthogonal_truth();
        let mut est = truth.clone();
        let avg_a = (truth.a.column(0) + truth.a.column(1)) / 2.0;
        est.a.set_column(0, &avg_a);
        est.a.set_column(1, &avg_a);
        for k in 0..2 {
            let avg_b = (truth.b[k].column(0) + truth.b[k].column(1)) / 2.0;
            est.b[k].set_column(0, &avg_b);
            est.b[k].set_column(1, &avg_b);
            let avg_d = (truth.d[k][0] + truth.d[k][1]) / 2.0;
            est.d[k][0] = avg_d;
            est.d[k][1] = avg_d;
        }
        // direct evaluation: cos(a) = cos(b) = 1/√2 for both merged slots,
        // cos(c) against c_0 = (1,2) and c_1 = (2,1) with ĉ ∝ (1.5,1.5)
        let c_hat = Vector::from_vec(vec![1.5, 1.5]);
        let cos_c0 = c_hat.dot(&Vector::from_vec(vec![1.0, 2.0])) / (c_hat.norm() * 5f64.sqrt());
        let merged = 0.5 * cos_c0;
        let expected = (merged + merged + 1.0) / 3.0;
        let rep = fms(&est, &truth).unwrap();
        assert!(rep.fms < 1.0);
        assert!((rep.fms - expected).abs() < 1e-12, "{} vs {}", rep.fms, expected);
    }

    #[test]
    fn zero_norm_component_flagged() {
        let truth = orthogonal_truth();
        let mut est = truth.clone();
        est.a.set_column(1, &Vector::zeros(4));
        let rep = fms(&est, &truth).unwrap();
        assert_eq!(rep.zero_norm_components, vec![1]);
        assert!((rep.fms - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_mismatch_errors() {
        let a = random_init(6, 5, 4, 3, 1);
        let b = random_init(6, 5, 4, 2, 1);
        assert!(matches!(fms(&a, &b), Err(Error::RankMismatch { .. })));
    }

    #[test]
    fn degeneracy_cases() {
        let mut f = random_init(6, 5, 4, 2, 3);
        // component 1 duplicates component 0 with A flipped
        let a0 = f.a.column(0).into_owned();
        f.a.set_column(1, &(-a0));
        for k in 0..f.k() {
            let b0 = f.b[k].column(0).into_owned();
            f.b[k].set_column(1, &b0);
            f.d[k][1] = f.d[k][0];
        }
        assert!(detect_degenerate(&f, 0.85));
        assert!(!detect_degenerate(&f, 1.0));
        assert!(!detect_degenerate(&orthogonal_truth(), 0.85));
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 2..=6 {
            for _ in 0..20 {
                let s = Mat::from_fn(n, n, |_, _| rng.gen::<f64>());
                let total = |p: &[usize]| p.iter().enumerate().map(|(i, j)| s[(i, *j)]).sum::<f64>();
                let h = hungarian_max(&s);
                assert!((total(&h) - total(&best_assignment(&s))).abs() < 1e-12);
            }
        }
    }
}
