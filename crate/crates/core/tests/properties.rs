use std::collections::BTreeSet;

use proptest::prelude::*;
use sae_core::estimator::{estimate_from_probabilities, ProbabilityTable};
use sae_core::oracle::{self, UnitPovertyProblem};
use sae_core::{Dataset, DomainId, IndicatorSpec, Level, Role, UnitRecord};

fn names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("y_{i}")).collect()
}

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.iter().map(|v| v / t).collect()
    })
}

fn rows(k: usize, max: usize) -> impl Strategy<Value = Vec<Vec<Option<bool>>>> {
    prop::collection::vec(prop::collection::vec(any::<bool>().prop_map(Some), k), 1..max)
}

fn census(rows: &[Vec<Option<bool>>], muni: impl Fn(usize) -> String) -> Dataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let m = muni(j);
            UnitRecord {
                department: DomainId::new(&m[..2]),
                domain: DomainId::new(m),
                unit_id: None,
                covariates: vec![],
                indicators: r.clone(),
                design_weight: 1.0,
            }
        })
        .collect();
    Dataset::new(Role::Census, vec![], names(rows[0].len()), records).unwrap()
}

fn hide(rows: &[Vec<Option<bool>>], missing: &BTreeSet<usize>) -> Vec<Vec<Option<bool>>> {
    rows.iter()
        .map(|r| r.iter().enumerate().map(|(k, &y)| if missing.contains(&k) { None } else { y }).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn headcount_ignores_row_order(w in weights(6), z in 0.05f64..0.95, r in rows(6, 15), seed in any::<u64>()) {
        let spec = IndicatorSpec::new(w, z, BTreeSet::new(), names(6)).unwrap();
        let mut shuffled = r.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(spec.headcount(&r).unwrap(), spec.headcount(&shuffled).unwrap());
    }

    #[test]
    fn flipping_a_cell_on_never_lowers_headcount(w in weights(5), z in 0.05f64..0.95, r in rows(5, 12), idx in any::<prop::sample::Index>()) {
        let spec = IndicatorSpec::new(w, z, BTreeSet::new(), names(5)).unwrap();
        let cell = idx.index(r.len() * 5);
        let mut flipped = r.clone();
        flipped[cell / 5][cell % 5] = Some(true);
        prop_assert!(spec.headcount(&flipped).unwrap() >= spec.headcount(&r).unwrap());
    }

    #[test]
    fn score_is_linear_and_bounded(w in weights(7), y in prop::collection::vec(any::<bool>(), 7)) {
        let spec = IndicatorSpec::new(w.clone(), 0.4, BTreeSet::new(), names(7)).unwrap();
        let cells: Vec<Option<bool>> = y.iter().map(|&b| Some(b)).collect();
        let q = spec.deprivation_score(&cells).unwrap();
        let manual: f64 = w.iter().zip(&y).filter(|(_, &b)| b).map(|(w, _)| w).sum();
        prop_assert!((q - manual).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&q));
        // linearity: score of y equals score of its ones taken one at a time
        let singles: f64 = (0..7)
            .filter(|&k| y[k])
            .map(|k| {
                let mut e = vec![Some(false); 7];
                e[k] = Some(true);
                spec.deprivation_score(&e).unwrap()
            })
            .sum();
        prop_assert!((q - singles).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_bounded_and_increasing(
        alpha in 0.01f64..0.3,
        k in 0.0f64..0.7,
        delta in 0.01f64..0.99,
        p1 in 0.0f64..=1.0,
        p2 in 0.0f64..=1.0,
        bump in 0.0f64..=1.0,
    ) {
        let one = |pi: f64| oracle::expected_poor_one_missing(&UnitPovertyProblem { alpha, k, delta, pis: vec![pi] }).unwrap();
        let two = |a: f64, b: f64| oracle::expected_poor_two_missing(&UnitPovertyProblem { alpha, k, delta, pis: vec![a, b] }).unwrap();
        let q1 = p1 + (1.0 - p1) * bump;
        let q2 = p2 + (1.0 - p2) * bump;
        prop_assert!((0.0..=1.0).contains(&one(p1)));
        prop_assert!((0.0..=1.0).contains(&two(p1, p2)));
        prop_assert!(one(q1) >= one(p1));
        prop_assert!(two(q1, p2) >= two(p1, p2) - 1e-15);
        prop_assert!(two(p1, q2) >= two(p1, p2) - 1e-15);
    }

    #[test]
    fn deterministic_second_indicator_collapses(
        alpha in 0.01f64..0.3,
        k in 0.0f64..0.6,
        delta in 0.01f64..0.99,
        p1 in 0.0f64..=1.0,
        on in any::<bool>(),
    ) {
        let p2 = if on { 1.0 } else { 0.0 };
        let two = oracle::expected_poor_two_missing(&UnitPovertyProblem { alpha, k, delta, pis: vec![p1, p2] }).unwrap();
        let one = oracle::expected_poor_one_missing(&UnitPovertyProblem { alpha, k: k + alpha * p2, delta, pis: vec![p1] }).unwrap();
        prop_assert!((two - one).abs() < 1e-12, "two {} one {}", two, one);
    }

    #[test]
    fn estimates_lie_in_unit_interval(
        w in weights(4),
        z in 0.05f64..0.95,
        r in rows(4, 20),
        p in prop::collection::vec(0.0f64..=1.0, 40),
        seed in any::<u64>(),
    ) {
        let missing: BTreeSet<usize> = [0, 2].into_iter().collect();
        let spec = IndicatorSpec::new(w, z, missing.clone(), names(4)).unwrap();
        let c = census(&hide(&r, &missing), |j| format!("0{}00{}", 1 + j % 2, j % 3));
        let probs: Vec<Vec<f64>> = (0..r.len()).map(|j| vec![p[2 * j], p[2 * j + 1]]).collect();
        let table = ProbabilityTable::from_rows(&probs, 2).unwrap();
        for e in estimate_from_probabilities(&c, &table, &spec, 7, seed).unwrap() {
            prop_assert!((0.0..=1.0).contains(&e.h_hat));
            prop_assert!(e.mc_stderr >= 0.0);
            prop_assert!(e.mse.is_none() && e.cv_percent.is_none());
        }
    }

    #[test]
    fn raising_probabilities_raises_estimates(
        w in weights(3),
        z in 0.05f64..0.95,
        r in rows(3, 10),
        p in prop::collection::vec(0.0f64..=1.0, 10),
        bump in prop::collection::vec(0.0f64..=1.0, 10),
        seed in any::<u64>(),
    ) {
        let missing: BTreeSet<usize> = [1].into_iter().collect();
        let spec = IndicatorSpec::new(w, z, missing.clone(), names(3)).unwrap();
        let c = census(&hide(&r, &missing), |_| "01001".to_string());
        let low: Vec<Vec<f64>> = (0..r.len()).map(|j| vec![p[j]]).collect();
        let high: Vec<Vec<f64>> = (0..r.len()).map(|j| vec![p[j] + (1.0 - p[j]) * bump[j]]).collect();
        let est = |probs: &[Vec<f64>]| {
            let t = ProbabilityTable::from_rows(probs, 1).unwrap();
            estimate_from_probabilities(&c, &t, &spec, 50, seed).unwrap()
        };
        for (a, b) in est(&low).iter().zip(est(&high).iter()) {
            prop_assert!(b.h_hat >= a.h_hat - 1e-12, "{} < {}", b.h_hat, a.h_hat);
        }
    }

    #[test]
    fn no_missing_indicators_gives_census_headcount(w in weights(4), z in 0.05f64..0.95, r in rows(4, 20), seed in any::<u64>()) {
        let spec = IndicatorSpec::new(w, z, BTreeSet::new(), names(4)).unwrap();
        let c = census(&r, |j| format!("010{:02}", j % 3));
        let table = ProbabilityTable::from_rows(&vec![vec![]; r.len()], 0).unwrap();
        for e in estimate_from_probabilities(&c, &table, &spec, 3, seed).unwrap() {
            let idx = &c.index(e.level)[&e.domain];
            let truth = spec.headcount(&idx.iter().map(|&i| r[i].clone()).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(e.h_hat, truth);
            prop_assert_eq!(e.mc_stderr, 0.0);
        }
    }

    #[test]
    fn same_seed_same_estimates(w in weights(3), r in rows(3, 15), p in prop::collection::vec(0.0f64..=1.0, 15), seed in any::<u64>()) {
        let missing: BTreeSet<usize> = [2].into_iter().collect();
        let spec = IndicatorSpec::new(w, 0.4, missing.clone(), names(3)).unwrap();
        let c = census(&hide(&r, &missing), |j| format!("0{}001", 1 + j % 2));
        let probs: Vec<Vec<f64>> = (0..r.len()).map(|j| vec![p[j]]).collect();
        let t = ProbabilityTable::from_rows(&probs, 1).unwrap();
        let a = estimate_from_probabilities(&c, &t, &spec, 20, seed).unwrap();
        let b = estimate_from_probabilities(&c, &t, &spec, 20, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().any(|e| e.level == Level::Department));
    }
}
