mod common;

use common::cases;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tparafac2::model::parafac2_residual;
use tparafac2::synth::{
    almostzero_preset, drift_activity, easy_preset, generate, overlap_preset, DriftKind, PresetScale, SyntheticConfig,
};

const SMALL: PresetScale = PresetScale { i: 24, j: 24, k: 10, rank: 3, authors_per_concept: 8, words_per_concept: 4 };

fn noise_ratio(cfg: &SyntheticConfig) -> f64 {
    let data = generate(cfg).unwrap();
    let diff: f64 = data
        .noisy
        .slices()
        .iter()
        .zip(data.clean.slices())
        .map(|(n, c)| (n - c).norm_squared())
        .sum::<f64>()
        .sqrt();
    diff / data.clean.norm()
}

fn support(col: impl Iterator<Item = f64>) -> BTreeSet<usize> {
    col.enumerate().filter(|(_, v)| *v != 0.0).map(|(w, _)| w).collect()
}

#[test]
fn noise_level_is_exact() {
    for eta in [0.1, 0.5, 1.0] {
        for seed in 0..5 {
            let ratio = noise_ratio(&easy_preset(seed, PresetScale::DESK, eta));
            assert!((ratio - eta).abs() <= 1e-12, "eta {eta}: ratio {ratio}");
        }
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn noise_ratio_matches_any_level(seed in any::<u64>(), eta in 1e-3f64..3.0) {
        let ratio = noise_ratio(&easy_preset(seed, SMALL, eta));
        prop_assert!((ratio - eta).abs() <= 1e-12 * eta.max(1.0));
    }

    #[test]
    fn generation_is_seed_deterministic(seed in 0u64..u64::MAX - 1) {
        let cfg = easy_preset(seed, SMALL, 0.3);
        let (x, y) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
        prop_assert_eq!(&x.noisy, &y.noisy);
        prop_assert_eq!(&x.truth, &y.truth);
        let other = generate(&easy_preset(seed + 1, SMALL, 0.3)).unwrap();
        prop_assert_ne!(&x.noisy, &other.noisy);
    }

    #[test]
    fn strengths_non_negative_and_inactive_entries_zero(seed in any::<u64>(), group in 0usize..3) {
        let cfg = match group {
            0 => easy_preset(seed, SMALL, 0.0),
            1 => almostzero_preset(seed, SMALL, 0.0, 1 + (seed % 2) as usize).unwrap(),
            _ => overlap_preset(seed, SMALL, 0.0, 0.25).unwrap(),
        };
        let data = generate(&cfg).unwrap();
        prop_assert!(data.truth.d.iter().flat_map(|d| d.iter()).all(|v| *v >= 0.0));
        let k = cfg.k;
        for (c, concept) in cfg.concepts.iter().enumerate() {
            let authors: BTreeSet<usize> = concept.authors.iter().copied().collect();
            prop_assert!(support(data.truth.a.column(c).iter().copied()).is_subset(&authors));
            let drift = &concept.drift;
            let allowed: BTreeSet<usize> = drift.word_sets.iter().flatten().chain(&drift.retiring).copied().collect();
            for t in 0..k {
                let s = support(data.truth.b[t].column(c).iter().copied());
                prop_assert!(s.is_subset(&allowed));
                let exact: Option<&Vec<usize>> = match drift.kind {
                    DriftKind::Sudden => Some(&drift.word_sets[usize::from(t + 1 >= drift.t0)]),
                    DriftKind::Reoccurring => Some(&drift.word_sets[(t / drift.tp) % 2]),
                    DriftKind::Gradual if t + 1 >= drift.t0 => Some(&drift.word_sets[1]),
                    _ => None,
                };
                if let Some(set) = exact {
                    let set: BTreeSet<usize> = set.iter().copied().collect();
                    prop_assert!(s.is_subset(&set), "slice {t} concept {c}");
                }
            }
            if drift.kind == DriftKind::Incremental {
                let last = support(data.truth.b[k - 1].column(c).iter().copied());
                prop_assert!(drift.retiring.iter().all(|w| !last.contains(w)));
            }
        }
    }

    #[test]
    fn switching_drift_keeps_set_sizes(seed in any::<u64>()) {
        let cfg = easy_preset(seed, PresetScale::DESK, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for concept in &cfg.concepts {
            let act = drift_activity(&concept.drift, cfg.k, &mut rng);
            let sizes: BTreeSet<usize> = act.iter().map(|a| a.len()).collect();
            prop_assert_eq!(sizes.len(), 1, "{:?}", concept.drift.kind);
        }
    }

    #[test]
    fn easy_truth_satisfies_the_constraint(seed in any::<u64>()) {
        let data = generate(&easy_preset(seed, PresetScale::DESK, 0.5)).unwrap();
        prop_assert!(parafac2_residual(&data.truth) <= 0.02);
    }
}

#[test]
fn heavy_overlap_breaks_the_constraint() {
    for seed in 0..5 {
        let cfg = overlap_preset(seed, PresetScale::DESK, 0.0, 0.4).unwrap();
        assert!(cfg.concepts.iter().all(|c| c.drift.kind == DriftKind::Incremental));
        let res = parafac2_residual(&generate(&cfg).unwrap().truth);
        assert!(res > 0.05, "seed {seed}: residual {res}");
    }
}
