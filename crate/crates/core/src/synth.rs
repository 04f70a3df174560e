//! Topic-model style synthetic tensors: authors × words × time, built from
//! concepts whose word sets drift over time and whose strength follows a
//! simple profile, plus scaled Gaussian noise.

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{Parafac2Factors, TensorSlices};

/// Mean and standard deviation of the clipped-normal loadings.
pub const LOADING_MEAN: f64 = 0.5;
pub const LOADING_SD: f64 = 0.5;
/// Strength used inside an almost-zero window.
pub const LOW_STRENGTH: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftKind {
    Sudden,
    Gradual,
    Reoccurring,
    Incremental,
}

/// How a concept's active words change over the `K` time points.
/// Time indices (`t0`, `tp`) are 1-based, matching the slice count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Switch point for sudden and gradual drift.
    #[serde(default)]
    pub t0: usize,
    /// Half-period for reoccurring drift.
    #[serde(default)]
    pub tp: usize,
    /// Per-slice activation probability of each pending incremental word.
    #[serde(default)]
    pub p_new: f64,
    /// Sigmoid steepness of the incremental importance ramp.
    #[serde(default)]
    pub steepness: f64,
    /// `word_sets[0]` is the initial set; `word_sets[1]` is the second
    /// state (sudden/gradual/reoccurring) or the candidate pool (incremental).
    pub word_sets: Vec<Vec<usize>>,
    /// Incremental only: words that fade out, one per candidate in order,
    /// as their replacement ramps in. They are gone by the last slice.
    #[serde(default)]
    pub retiring: Vec<usize>,
}

impl DriftSpec {
    pub fn validate(&self, k: usize, j: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let needed = if self.kind == DriftKind::Incremental { 1 } else { 2 };
        if self.word_sets.len() < needed || self.word_sets.len() > 2 {
            return bad(format!("{:?} drift needs {needed} word set(s)", self.kind));
        }
        if self.word_sets[0].is_empty() || self.word_sets.iter().flatten().any(|w| *w >= j) {
            return bad("word sets must be non-empty and index into 0..J".into());
        }
        if self.kind != DriftKind::Incremental && self.word_sets[1].is_empty() {
            return bad("second word set must be non-empty".into());
        }
        let window = |t: usize| k >= 4 && (2..=k - 2).contains(&t);
        match self.kind {
            DriftKind::Sudden | DriftKind::Gradual if !window(self.t0) => {
                bad(format!("t0 = {} outside 2..=K-2 (K = {k})", self.t0))
            }
            DriftKind::Reoccurring if !window(self.tp) => bad(format!("tp = {} outside 2..=K-2 (K = {k})", self.tp)),
            DriftKind::Incremental => {
                if !(self.p_new > 0.0 && self.p_new <= 1.0) {
                    return bad(format!("p_new = {} outside (0, 1]", self.p_new));
                }
                if !(self.steepness > 0.0) {
                    return bad("steepness must be > 0".into());
                }
                let candidates = self.word_sets.get(1).map_or(0, Vec::len);
                if self.retiring.len() > candidates || self.retiring.iter().any(|w| *w >= j) {
                    return bad("every retiring word needs a replacement candidate".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Active words and their importance multipliers at one time point.
pub type Activity = Vec<(usize, f64)>;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Importance multiplier of an incremental word `elapsed` slices after it
/// was drawn: one half-step past the sigmoid centre on activation, so an
/// infinitely steep ramp is at full weight immediately.
fn ramp(steepness: f64, elapsed: usize) -> f64 {
    sigmoid(steepness * (elapsed as f64 + 0.5))
}

/// Index of the active word set per slice for the switching drift kinds.
fn switching_states<R: Rng + ?Sized>(spec: &DriftSpec, k: usize, rng: &mut R) -> Vec<usize> {
    (1..=k)
        .map(|t| match spec.kind {
            DriftKind::Sudden => usize::from(t >= spec.t0),
            DriftKind::Gradual => usize::from(t >= spec.t0 || rng.gen_bool(0.5)),
            DriftKind::Reoccurring => ((t - 1) / spec.tp) % 2,
            DriftKind::Incremental => 0,
        })
        .collect()
}

/// Per-slice active words (0-based slice index) for one concept.
pub fn drift_activity<R: Rng + ?Sized>(spec: &DriftSpec, k: usize, rng: &mut R) -> Vec<Activity> {
    match spec.kind {
        DriftKind::Incremental => incremental_activity(spec, k, rng),
        _ => switching_states(spec, k, rng)
            .into_iter()
            .map(|s| spec.word_sets[s].iter().map(|w| (*w, 1.0)).collect())
            .collect(),
    }
}

fn incremental_activity<R: Rng + ?Sized>(spec: &DriftSpec, k: usize, rng: &mut R) -> Vec<Activity> {
    let empty = Vec::new();
    let candidates = spec.word_sets.get(1).unwrap_or(&empty);
    // 1-based activation time per candidate
    let mut activated: Vec<Option<usize>> = vec![None; candidates.len()];
    let mut out = Vec::with_capacity(k);
    for t in 1..=k {
        if t >= 2 {
            for (c, slot) in activated.iter_mut().enumerate() {
                let forced = c < spec.retiring.len() && t + 1 >= k;
                if slot.is_none() && (forced || rng.gen_bool(spec.p_new)) {
                    *slot = Some(t);
                }
            }
        }
        let mut act: Activity = spec.word_sets[0].iter().map(|w| (*w, 1.0)).collect();
        for (c, word) in candidates.iter().enumerate() {
            if let Some(t_act) = activated[c] {
                act.push((*word, ramp(spec.steepness, t - t_act)));
            }
        }
        for (c, word) in spec.retiring.iter().enumerate() {
            let weight = match activated[c] {
                _ if t == k => 0.0,
                Some(t_act) => 1.0 - ramp(spec.steepness, t - t_act),
                None => 1.0,
            };
            if weight > 0.0 {
                act.push((*word, weight));
            }
        }
        out.push(act);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthKind {
    Constant,
    Increasing,
    Decreasing,
    Periodic,
}

/// Strength of one concept over time.
///
/// constant: `base`; increasing/decreasing: linear ramp between `base` and
/// `base + variation`; periodic: `base + variation·(1 + sin(2πt/period + phase))/2`.
/// An optional window of slices is pinned to [`LOW_STRENGTH`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthProfile {
    pub kind: StrengthKind,
    pub base: f64,
    #[serde(default)]
    pub variation: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
    /// `(first slice, length)`, 0-based.
    #[serde(default)]
    pub low_window: Option<(usize, usize)>,
}

fn default_period() -> f64 {
    6.0
}

impl StrengthProfile {
    pub fn constant(level: f64) -> Self {
        Self { kind: StrengthKind::Constant, base: level, variation: 0.0, period: default_period(), phase: 0.0, low_window: None }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.base >= 0.0 && self.variation >= 0.0 && self.period > 0.0) {
            return Err(Error::InvalidConfig("strength parameters must be non-negative, period > 0".into()));
        }
        if let Some((start, len)) = self.low_window {
            if len == 0 || start + len > k {
                return Err(Error::InvalidConfig(format!("low window {start}+{len} outside {k} slices")));
            }
        }
        Ok(())
    }

    pub fn sequence(&self, k: usize) -> Vec<f64> {
        let denom = (k.max(2) - 1) as f64;
        (0..k)
            .map(|t| {
                let frac = t as f64 / denom;
                let v = match self.kind {
                    StrengthKind::Constant => self.base,
                    StrengthKind::Increasing => self.base + self.variation * frac,
                    StrengthKind::Decreasing => self.base + self.variation * (1.0 - frac),
                    StrengthKind::Periodic => {
                        let angle = 2.0 * std::f64::consts::PI * t as f64 / self.period + self.phase;
                        self.base + self.variation * 0.5 * (1.0 + angle.sin())
                    }
                };
                match self.low_window {
                    Some((start, len)) if (start..start + len).contains(&t) => LOW_STRENGTH,
                    _ => v,
                }
            })
            .collect()
    }
}

/// One latent concept: its authors, word drift and strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub authors: Vec<usize>,
    pub drift: DriftSpec,
    pub strength: StrengthProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub concepts: Vec<ConceptSpec>,
    /// Fraction of each concept's initial words shared by all concepts.
    #[serde(default)]
    pub overlap_fraction: f64,
    pub eta: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn rank(&self) -> usize {
        self.concepts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.i == 0 || self.j == 0 || self.k == 0 || self.concepts.is_empty() {
            return Err(Error::InvalidConfig("I, J, K and the concept count must be positive".into()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise level {} must be >= 0", self.eta)));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidConfig("overlap fraction must lie in [0, 1)".into()));
        }
        for c in &self.concepts {
            if c.authors.is_empty() || c.authors.iter().any(|a| *a >= self.i) {
                return Err(Error::InvalidConfig("author sets must be non-empty and index into 0..I".into()));
            }
            c.drift.validate(self.k, self.j)?;
            c.strength.validate(self.k)?;
        }
        let non_incremental: Vec<DriftKind> = self
            .concepts
            .iter()
            .map(|c| c.drift.kind)
            .filter(|k| *k != DriftKind::Incremental)
            .collect();
        if self.rank() <= 4 {
            for (p, a) in non_incremental.iter().enumerate() {
                if non_incremental[p + 1..].contains(a) {
                    return Err(Error::InvalidConfig(format!("two concepts share drift kind {a:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub noisy: TensorSlices,
    pub clean: TensorSlices,
    pub truth: Parafac2Factors,
}

fn clipped_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let n = Normal::new(LOADING_MEAN, LOADING_SD).expect("valid normal");
    n.sample(rng).max(0.0)
}

/// Draws a dataset from `config`; fully determined by `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let (i, j, k, r) = (config.i, config.j, config.k, config.rank());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut a = Mat::zeros(i, r);
    let mut b = vec![Mat::zeros(j, r); k];
    let mut d = vec![Vector::zeros(r); k];
    for (c, concept) in config.concepts.iter().enumerate() {
        for author in &concept.authors {
            a[(*author, c)] = clipped_normal(&mut rng);
        }
        fill_words(&concept.drift, k, c, &mut b, &mut rng);
        for (t, s) in concept.strength.sequence(k).into_iter().enumerate() {
            d[t][c] = s;
        }
    }
    let truth = Parafac2Factors::new(a, b, d)?;
    let clean = truth.to_tensor()?;
    let noisy = add_noise(&clean, config.eta, &mut rng)?;
    Ok(SyntheticData { noisy, clean, truth })
}

/// Writes column `c` of every `B_k`. Switching kinds draw loadings once per
/// word set and rescale the second set to the norm of the first, so the
/// column norm is the same whichever set is active. Incremental kinds draw
/// once per word and scale by the ramp weights.
fn fill_words<R: Rng + ?Sized>(spec: &DriftSpec, k: usize, c: usize, b: &mut [Mat], rng: &mut R) {
    if spec.kind == DriftKind::Incremental {
        let mut values: Vec<(usize, f64)> = Vec::new();
        for w in spec.word_sets.iter().flatten().chain(&spec.retiring) {
            let v = clipped_normal(rng);
            if !values.iter().any(|(x, _)| x == w) {
                values.push((*w, v));
            }
        }
        for (t, act) in drift_activity(spec, k, rng).iter().enumerate() {
            for (word, weight) in act {
                let v = values.iter().find(|(x, _)| x == word).map_or(0.0, |(_, v)| *v);
                b[t][(*word, c)] = v * weight;
            }
        }
        return;
    }
    let mut values: Vec<Vec<f64>> = spec
        .word_sets
        .iter()
        .map(|set| set.iter().map(|_| clipped_normal(rng)).collect())
        .collect();
    let norm = |v: &Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (n0, n1) = (norm(&values[0]), norm(&values[1]));
    if n1 > 0.0 {
        values[1].iter_mut().for_each(|x| *x *= n0 / n1);
    }
    for (t, s) in switching_states(spec, k, rng).into_iter().enumerate() {
        for (word, v) in spec.word_sets[s].iter().zip(&values[s]) {
            b[t][(*word, c)] = *v;
        }
    }
}

/// `clean + η‖clean‖ Θ/‖Θ‖` with `Θ` i.i.d. standard normal. `η = 0`
/// returns an exact copy.
pub fn add_noise<R: Rng + ?Sized>(clean: &TensorSlices, eta: f64, rng: &mut R) -> Result<TensorSlices> {
    if eta == 0.0 {
        return Ok(clean.clone());
    }
    let theta: Vec<Mat> = clean
        .slices()
        .iter()
        .map(|s| Mat::from_fn(s.nrows(), s.ncols(), |_, _| StandardNormal.sample(rng)))
        .collect();
    let theta_norm = theta.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let scale = eta * clean.norm() / theta_norm;
    TensorSlices::new(clean.slices().iter().zip(theta).map(|(x, n)| x + n * scale).collect())
}

/// Rewrites `config` so all concepts drift incrementally away from a word
/// block shared by every concept at the first slice; by the last slice the
/// concepts' active word sets are pairwise disjoint.
pub fn make_overlapping(config: &SyntheticConfig, overlap_fraction: f64) -> Result<SyntheticConfig> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidConfig(format!("overlap fraction {overlap_fraction} outside [0, 1)")));
    }
    let r = config.rank();
    let set_size = config
        .concepts
        .iter()
        .map(|c| c.drift.word_sets[0].len())
        .max()
        .ok_or(Error::Empty("config has no concepts"))?;
    let shared = (overlap_fraction * set_size as f64).round() as usize;
    let needed = shared + r * set_size;
    if needed > config.j {
        return Err(Error::InvalidConfig(format!(
            "need {needed} distinct words for {r} concepts of {set_size} with {shared} shared, J = {}",
            config.j
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6f76_6572_6c61_70);
    let mut words: Vec<usize> = (0..config.j).collect();
    words.shuffle(&mut rng);
    let shared_words: Vec<usize> = words[..shared].to_vec();
    let mut next = shared;
    let mut out = config.clone();
    out.overlap_fraction = overlap_fraction;
    for concept in out.concepts.iter_mut() {
        let own: Vec<usize> = words[next..next + set_size - shared].to_vec();
        next += set_size - shared;
        let replacements: Vec<usize> = words[next..next + shared].to_vec();
        next += shared;
        let (p_new, steepness) = match concept.drift.kind {
            DriftKind::Incremental => (concept.drift.p_new, concept.drift.steepness),
            _ => (0.25, 1.5),
        };
        concept.drift = DriftSpec {
            kind: DriftKind::Incremental,
            t0: 0,
            tp: 0,
            p_new,
            steepness,
            word_sets: vec![own, replacements],
            retiring: shared_words.clone(),
        };
    }
    out.validate()?;
    Ok(out)
}

/// Desk-scale dimensions used by the presets unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetScale {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub rank: usize,
    pub authors_per_concept: usize,
    pub words_per_concept: usize,
}

impl PresetScale {
    pub const DESK: Self = Self { i: 60, j: 40, k: 15, rank: 3, authors_per_concept: 20, words_per_concept: 8 };
    pub const PAPER: Self = Self { i: 150, j: 100, k: 20, rank: 3, authors_per_concept: 50, words_per_concept: 20 };
}

impl Default for PresetScale {
    fn default() -> Self {
        Self::DESK
    }
}

const EASY_DRIFTS: [DriftKind; 3] = [DriftKind::Sudden, DriftKind::Gradual, DriftKind::Reoccurring];
const EASY_STRENGTHS: [StrengthKind; 3] = [StrengthKind::Constant, StrengthKind::Periodic, StrengthKind::Decreasing];

fn easy_strength<R: Rng + ?Sized>(kind: StrengthKind, k: usize, rng: &mut R) -> StrengthProfile {
    StrengthProfile {
        kind,
        base: rng.gen_range(0.5..1.0),
        variation: rng.gen_range(0.5..1.5),
        period: rng.gen_range(4.0..(k as f64 / 2.0).max(5.0)),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
        low_window: None,
    }
}

/// Shared layout for the switching presets: every concept owns a disjoint
/// pool of words from which both of its word sets are drawn, so the
/// concepts never share a word and column norms stay constant.
fn switching_config(seed: u64, scale: PresetScale, eta: f64) -> SyntheticConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let PresetScale { i, j, k, rank, authors_per_concept, words_per_concept } = scale;
    let mut drifts = EASY_DRIFTS.to_vec();
    drifts.shuffle(&mut rng);
    let mut strengths = EASY_STRENGTHS.to_vec();
    strengths.shuffle(&mut rng);
    let mut words: Vec<usize> = (0..j).collect();
    words.shuffle(&mut rng);
    let pool = (j / rank).max(words_per_concept);
    let concepts = (0..rank)
        .map(|c| {
            let start = (c * pool).min(j.saturating_sub(pool));
            let pool_words = &words[start..start + pool];
            let pick = |rng: &mut ChaCha8Rng| -> Vec<usize> {
                let mut s: Vec<usize> = sample(rng, pool, words_per_concept).into_iter().map(|x| pool_words[x]).collect();
                s.sort_unstable();
                s
            };
            let set1 = pick(&mut rng);
            let set2 = pick(&mut rng);
            let mut authors: Vec<usize> = sample(&mut rng, i, authors_per_concept).into_vec();
            authors.sort_unstable();
            let t_switch = rng.gen_range(2..=k - 2);
            let kind = drifts[c % drifts.len()];
            ConceptSpec {
                authors,
                drift: DriftSpec {
                    kind,
                    t0: if kind == DriftKind::Reoccurring { 0 } else { t_switch },
                    tp: if kind == DriftKind::Reoccurring { t_switch } else { 0 },
                    p_new: 0.0,
                    steepness: 0.0,
                    word_sets: vec![set1, set2],
                    retiring: Vec::new(),
                },
                strength: easy_strength(strengths[c % strengths.len()], k, &mut rng),
            }
        })
        .collect();
    SyntheticConfig { i, j, k, concepts, overlap_fraction: 0.0, eta, seed }
}

/// Sudden/gradual/reoccurring drift, strengths well above zero; the truth
/// has a shared cross-product across slices.
pub fn easy_preset(seed: u64, scale: PresetScale, eta: f64) -> SyntheticConfig {
    switching_config(seed, scale, eta)
}

/// Easy-style data where `n_low_concepts` concepts drop to strength 0.01
/// for a window of 4–6 consecutive slices.
pub fn almostzero_preset(seed: u64, scale: PresetScale, eta: f64, n_low_concepts: usize) -> Result<SyntheticConfig> {
    if !(1..=2).contains(&n_low_concepts) || n_low_concepts > scale.rank {
        return Err(Error::InvalidConfig(format!("n_low_concepts must be 1 or 2, got {n_low_concepts}")));
    }
    if scale.k < 8 {
        return Err(Error::InvalidConfig("almost-zero preset needs K >= 8".into()));
    }
    let mut cfg = switching_config(seed, scale, eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x6c6f_77));
    let mut which: Vec<usize> = (0..scale.rank).collect();
    which.shuffle(&mut rng);
    for c in which.into_iter().take(n_low_concepts) {
        let len = rng.gen_range(4..=6);
        let start = rng.gen_range(1..=scale.k - len - 1);
        cfg.concepts[c].strength.low_window = Some((start, len));
    }
    Ok(cfg)
}

/// All concepts drift incrementally from a shared word block to disjoint sets.
pub fn overlap_preset(seed: u64, scale: PresetScale, eta: f64, fraction: f64) -> Result<SyntheticConfig> {
    let mut base = switching_config(seed, scale, eta);
    for c in base.concepts.iter_mut() {
        c.drift = DriftSpec {
            kind: DriftKind::Incremental,
            t0: 0,
            tp: 0,
            p_new: 0.25,
            steepness: 1.5,
            word_sets: vec![c.drift.word_sets[0].clone()],
            retiring: Vec::new(),
        };
    }
    make_overlapping(&base, fraction)
}
