mod common;

use std::collections::HashMap;

use credit_stack::ingest::{self, compact_types, denoise_round, join_labels, mask_outliers, StatementTable};
use proptest::prelude::*;

fn csv_bytes(t: &StatementTable) -> Vec<u8> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn denoise_is_idempotent(customers in common::customers(8), precision in prop_oneof![Just(0.01), Just(0.1), Just(0.25), Just(1.0)]) {
        let once = denoise_round(common::table(&customers, None), precision).unwrap();
        let twice = denoise_round(once.clone(), precision).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn masking_keeps_shape(customers in common::customers(8)) {
        let before = common::table(&customers, None);
        let (after, report) = mask_outliers(before.clone());
        prop_assert_eq!(after.n_rows(), before.n_rows());
        prop_assert_eq!(after.columns().len(), before.columns().len());
        for (a, b) in after.columns().iter().zip(before.columns()) {
            prop_assert_eq!(a.data.len(), b.data.len());
        }
        let expected = customers.iter().flatten().filter(|r| r.0 == Some(999.0) || r.0.is_some_and(|x| x.abs() > 50.0)).count();
        prop_assert_eq!(report.total(), expected);
    }

    #[test]
    fn cleaning_is_deterministic(customers in common::customers(8)) {
        let run = || {
            let t = compact_types(common::table(&customers, None)).unwrap();
            csv_bytes(&denoise_round(t, 0.01).unwrap())
        };
        prop_assert_eq!(run(), run());
        let (a, ra) = ingest::clean(common::table(&customers, None), 0.01).unwrap();
        let (b, rb) = ingest::clean(common::table(&customers, None), 0.01).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn join_pairs_every_customer(customers in common::customers(8), extra in 0usize..4) {
        let t = common::table(&customers, None);
        let mut labels: HashMap<String, u8> = t.customer_ids().iter().enumerate().map(|(i, id)| (id.clone(), (i % 2) as u8)).collect();
        for e in 0..extra {
            labels.insert(format!("ghost{e}"), 1);
        }
        let n = t.n_customers();
        let joined = join_labels(t, &labels).unwrap();
        prop_assert_eq!(joined.labels.len(), n);
        prop_assert_eq!(joined.unmatched_labels, extra);
    }
}
