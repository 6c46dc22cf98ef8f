use std::collections::BTreeSet;

use proptest::prelude::*;
use rheocast::protocol::{make_folds, FoldConcrete, FoldPlan, FoldSpec};

fn concretes(n: usize, recycled: &BTreeSet<usize>, deltas: &[f64]) -> Vec<FoldConcrete> {
    (0..n)
        .map(|id| FoldConcrete {
            id,
            delta1: deltas[id],
            recycled: recycled.contains(&id),
        })
        .collect()
}

fn campaign() -> impl Strategy<Value = (Vec<FoldConcrete>, u64)> {
    (15usize..60)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::btree_set(0..n, 5),
                prop::collection::vec(30.0..63.5f64, n),
                any::<u64>(),
            )
        })
        .prop_map(|(n, rec, deltas, seed)| (concretes(n, &rec, &deltas), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaled_plans_partition_and_balance((cs, seed) in campaign()) {
        let spec = FoldSpec::scaled(cs.len(), 5);
        let plan = make_folds(&cs, &spec, seed).unwrap();
        plan.check(&cs).unwrap();
        let mut tested = BTreeSet::new();
        for f in &plan.folds {
            let roles = [&f.train, &f.val, &f.test];
            let all: BTreeSet<usize> = roles.iter().flat_map(|r| r.iter().copied()).collect();
            prop_assert_eq!(all.len(), cs.len());
            prop_assert_eq!(f.val.len(), spec.val_size);
            prop_assert_eq!(f.test.iter().filter(|&&i| cs[i].recycled).count(), 1);
            prop_assert_eq!(f.val.iter().filter(|&&i| cs[i].recycled).count(), 1);
            for &i in &f.test {
                prop_assert!(tested.insert(i));
            }
        }
        prop_assert_eq!(tested.len(), cs.len());
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn plans_are_seed_deterministic_and_round_trip((cs, seed) in campaign()) {
        let spec = FoldSpec::scaled(cs.len(), 5);
        let a = make_folds(&cs, &spec, seed).unwrap();
        let b = make_folds(&cs, &spec, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let parsed = FoldPlan::parse(&a.to_text()).unwrap();
        prop_assert_eq!(parsed.digest(), a.digest());
        prop_assert_eq!(parsed, a);
    }
}

#[test]
fn wrong_recycled_count_is_rejected() {
    let rec: BTreeSet<usize> = [0, 1].into();
    let cs = concretes(45, &rec, &[45.0; 45]);
    assert!(make_folds(&cs, &FoldSpec::paper(), 1).is_err());
}
