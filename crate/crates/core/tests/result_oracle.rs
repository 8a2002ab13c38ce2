use std::collections::BTreeSet;

use proptest::prelude::*;
use seasql::exec::{results_equal, Row, Value};

// Values within 1e-6 relative of each other canonicalize identically; all
// other pairs in the domain are far apart.
fn cell() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        (0i64..3).prop_map(Value::Integer),
        prop::sample::select(vec![0.0, 1.0, 2.5, 2.5 + 1e-9, 1.0 + 1e-10, -3.75])
            .prop_map(Value::Real),
        prop::sample::select(vec!["a", "b", "1", "A"]).prop_map(|s| Value::Text(s.into())),
    ]
}

fn rows(width: usize) -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(prop::collection::vec(cell(), width), 0..6)
}

fn canonical(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Integer(i) => format!("n:{:.4}", *i as f64),
        Value::Real(f) => format!("n:{:.4}", f),
        Value::Text(s) => format!("t:{s}"),
        Value::Blob(b) => format!("b:{:?}", b.blob),
    }
}

fn oracle(a: &[Row], b: &[Row]) -> bool {
    let set = |rs: &[Row]| -> BTreeSet<Vec<String>> {
        rs.iter()
            .map(|r| r.iter().map(canonical).collect())
            .collect()
    };
    set(a) == set(b)
}

fn pair() -> impl Strategy<Value = (Vec<Row>, Vec<Row>)> {
    (1usize..4).prop_flat_map(|w| {
        prop_oneof![
            (rows(w), rows(w)),
            // b is a shuffled, duplicated copy of a: equal by construction
            rows(w).prop_flat_map(|a| {
                let mut b = a.clone();
                b.extend(a.iter().take(2).cloned());
                (Just(a), Just(b).prop_shuffle())
            }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agrees_with_set_oracle((a, b) in pair()) {
        prop_assert_eq!(results_equal(&a, &b), oracle(&a, &b));
    }

    #[test]
    fn equivalence_relation(a in rows(2), b in rows(2), c in rows(2)) {
        prop_assert!(results_equal(&a, &a));
        prop_assert_eq!(results_equal(&a, &b), results_equal(&b, &a));
        if results_equal(&a, &b) && results_equal(&b, &c) {
            prop_assert!(results_equal(&a, &c));
        }
    }
}

#[test]
fn width_mismatch_is_unequal() {
    let a = vec![vec![Value::Integer(1)]];
    let b = vec![vec![Value::Integer(1), Value::Null]];
    assert!(!results_equal(&a, &b));
}

#[test]
fn integer_and_real_compare_numerically() {
    let a = vec![vec![Value::Integer(2)]];
    let b = vec![vec![Value::Real(2.0)]];
    assert!(results_equal(&a, &b));
    assert!(!results_equal(&a, &[vec![Value::Text("2".into())]]));
}
