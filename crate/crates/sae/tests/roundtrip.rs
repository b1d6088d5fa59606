use std::collections::BTreeSet;

use proptest::prelude::*;
use sae::io::{read_dataset, write_dataset, Schema};
use sae_core::{Dataset, DomainId, Role, UnitRecord};

fn record(p: usize, k: usize, missing: BTreeSet<usize>) -> impl Strategy<Value = UnitRecord> {
    (
        1u8..4,
        0u16..20,
        prop::collection::vec(-1e6f64..1e6, p),
        prop::collection::vec(any::<bool>(), k),
        0.01f64..500.0,
    )
        .prop_map(move |(dept, muni, covariates, y, w)| UnitRecord {
            department: DomainId::new(format!("{dept:02}")),
            domain: DomainId::new(format!("{dept:02}{muni:03}")),
            unit_id: None,
            covariates,
            indicators: y.iter().enumerate().map(|(i, &b)| (!missing.contains(&i)).then_some(b)).collect(),
            design_weight: w,
        })
}

fn dataset(role: Role, p: usize, k: usize, missing: BTreeSet<usize>) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(record(p, k, missing), 1..30).prop_map(move |mut records| {
        for (j, r) in records.iter_mut().enumerate() {
            r.unit_id = Some(format!("u{j}"));
        }
        Dataset::new(
            role,
            (1..=p).map(|i| format!("x_{i}")).collect(),
            (1..=k).map(|i| format!("y_{i}")).collect(),
            records,
        )
        .unwrap()
    })
}

fn round_trip(ds: &Dataset, omit: &BTreeSet<usize>) -> Dataset {
    let schema = Schema::default();
    let mut buf = Vec::new();
    write_dataset(&mut buf, ds, &schema, omit).unwrap();
    read_dataset(buf.as_slice(), ds.role(), &schema, ds.k(), omit).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn survey_round_trips(ds in dataset(Role::Survey, 3, 4, BTreeSet::new())) {
        let back = round_trip(&ds, &BTreeSet::new());
        prop_assert_eq!(back.records(), ds.records());
        prop_assert_eq!(back.covariate_names(), ds.covariate_names());
        prop_assert_eq!(back.domain_index(), ds.domain_index());
    }

    #[test]
    fn census_round_trips_without_missing_columns(ds in dataset(Role::Census, 2, 5, [1, 4].into_iter().collect())) {
        let omit: BTreeSet<usize> = [1, 4].into_iter().collect();
        let back = round_trip(&ds, &omit);
        prop_assert_eq!(back.records(), ds.records());
    }

    #[test]
    fn domain_index_partitions_records(ds in dataset(Role::Survey, 1, 2, BTreeSet::new())) {
        let mut seen: Vec<usize> = ds.domain_index().values().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
        for (d, rows) in ds.domain_index() {
            prop_assert!(rows.iter().all(|&r| &ds.records()[r].domain == d));
        }
    }
}
