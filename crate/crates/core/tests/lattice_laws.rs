use std::collections::BTreeSet;
use std::sync::Arc;

use dfa_core::lattice::{
    check_equality_lemma, check_prediction_lemma_cd, check_prediction_lemma_reverse,
    check_prediction_lemma_subset, Def, Element, Fact, LatticeOrder, LemmaForm,
};
use dfa_core::syntax::{Label, Var};
use proptest::prelude::*;

fn var_universe() -> Arc<BTreeSet<Var>> {
    Arc::new(["a", "b", "c", "d", "e", "f", "g", "h"].iter().map(Var::new).collect())
}

fn def_universe() -> Arc<BTreeSet<Def>> {
    let mut u = BTreeSet::new();
    for v in ["x", "y"] {
        for l in 0..4 {
            u.insert(Def {
                var: Var::new(v),
                label: Label::new(format!("l{l}")),
            });
        }
    }
    Arc::new(u)
}

/// The members selected by the bits of `mask`, in universe order.
fn pick<T: Element>(order: LatticeOrder, u: &Arc<BTreeSet<T>>, mask: u8) -> Fact<T> {
    let members = u.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, m)| m.clone());
    Fact::new(order, u.clone(), members).unwrap()
}

fn check_laws<T: Element>(order: LatticeOrder, u: &Arc<BTreeSet<T>>, ma: u8, mb: u8, mc: u8) {
    let (a, b, c) = (pick(order, u, ma), pick(order, u, mb), pick(order, u, mc));
    let top = Fact::top(order, u.clone());
    let bot = Fact::bottom(order, u.clone());
    let j = |x: &Fact<T>, y: &Fact<T>| x.join(y).unwrap();
    let m = |x: &Fact<T>, y: &Fact<T>| x.meet(y).unwrap();
    let le = |x: &Fact<T>, y: &Fact<T>| x.leq(y).unwrap();

    assert!(le(&a, &a));
    if le(&a, &b) && le(&b, &a) {
        assert_eq!(a, b);
    }
    if le(&a, &b) && le(&b, &c) {
        assert!(le(&a, &c));
    }
    assert!(le(&bot, &a) && le(&a, &top));

    assert_eq!(j(&a, &b), j(&b, &a));
    assert_eq!(m(&a, &b), m(&b, &a));
    assert_eq!(j(&j(&a, &b), &c), j(&a, &j(&b, &c)));
    assert_eq!(m(&m(&a, &b), &c), m(&a, &m(&b, &c)));
    assert!(le(&a, &j(&a, &b)) && le(&m(&a, &b), &a));
    assert_eq!(le(&a, &b), j(&a, &b) == b);

    assert_eq!(j(&a, &m(&a, &b)), a);
    assert_eq!(m(&a, &j(&a, &b)), a);

    assert_eq!(m(&a, &j(&b, &c)), j(&m(&a, &b), &m(&a, &c)));
    assert_eq!(j(&a, &m(&b, &c)), m(&j(&a, &b), &j(&a, &c)));

    let ac = a.complement();
    assert_eq!(j(&a, &ac), top);
    assert_eq!(m(&a, &ac), bot);
    assert_eq!(ac.complement(), a);
}

fn lemma_sets(ma: u8, md: u8, mu: u8, ms: u8) -> [BTreeSet<u8>; 4] {
    let bits = |m: u8| (0..8).filter(|i| m >> i & 1 == 1).collect::<BTreeSet<u8>>();
    [bits(ma), bits(md), bits(mu), bits(ms)]
}

/// Both complemented-lattice lemmas on one sampled instance.
fn cd_lemmas<T: Element>(order: LatticeOrder, u: &Arc<BTreeSet<T>>, masks: [u8; 4]) -> bool {
    let [after, d, uses, succ] = masks.map(|m| pick(order, u, m));
    // Any element below `after`.
    let succ = succ.meet(&after).unwrap();
    let and_before = after.meet(&d.complement()).unwrap().join(&uses).unwrap();
    let or_before = after.join(&d.complement()).unwrap().meet(&uses).unwrap();
    check_prediction_lemma_cd(LemmaForm::And, &and_before, &after, &succ, &d, &uses).unwrap()
        && check_prediction_lemma_cd(LemmaForm::Or, &or_before, &after, &succ, &d, &uses).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn subset_lattice_laws(a: u8, b: u8, c: u8) {
        check_laws(LatticeOrder::Subset, &var_universe(), a, b, c);
    }

    #[test]
    fn reverse_subset_lattice_laws(a: u8, b: u8, c: u8) {
        check_laws(LatticeOrder::ReverseSubset, &var_universe(), a, b, c);
    }

    #[test]
    fn pointwise_lattice_laws(a: u8, b: u8, c: u8) {
        check_laws(LatticeOrder::PointwiseSubset, &def_universe(), a, b, c);
    }

    #[test]
    fn difference_as_lattice_operation(a: u8, d: u8) {
        let u = var_universe();
        for (order, via_meet) in [(LatticeOrder::Subset, true), (LatticeOrder::ReverseSubset, false)] {
            let (fa, fd) = (pick(order, &u, a), pick(order, &u, d));
            let expected = fa.difference(&fd);
            let got = if via_meet {
                fa.meet(&fd.complement()).unwrap()
            } else {
                fa.join(&fd.complement()).unwrap()
            };
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn subset_prediction_lemma(after: u8, d: u8, u: u8, succ: u8) {
        let [after, d, u, s] = lemma_sets(after, d, u, succ);
        let before: BTreeSet<u8> = after.difference(&d).copied().collect::<BTreeSet<_>>().union(&u).copied().collect();
        let succ: BTreeSet<u8> = s.intersection(&after).copied().collect();
        prop_assert!(check_prediction_lemma_subset(&before, &after, &succ, &d, &u));
    }

    #[test]
    fn reverse_prediction_lemma(after: u8, d: u8, u: u8, succ: u8) {
        let [after, d, u, s] = lemma_sets(after, d, u, succ);
        let before: BTreeSet<u8> = after.difference(&d).copied().collect::<BTreeSet<_>>().union(&u).copied().collect();
        let succ: BTreeSet<u8> = s.union(&after).copied().collect();
        prop_assert!(check_prediction_lemma_reverse(&before, &after, &succ, &d, &u));
    }

    #[test]
    fn equality_lemmas(a: u8) {
        let u = var_universe();
        for order in [LatticeOrder::Subset, LatticeOrder::ReverseSubset] {
            let f = pick(order, &u, a);
            prop_assert!(check_equality_lemma(&f, &f.clone(), &f.clone()).unwrap());
        }
    }

    #[test]
    fn complemented_lattice_lemmas(after: u8, d: u8, u: u8, succ: u8, which in 0..3usize) {
        let order = [LatticeOrder::Subset, LatticeOrder::ReverseSubset, LatticeOrder::PointwiseSubset][which];
        let ok = if order == LatticeOrder::PointwiseSubset {
            cd_lemmas(order, &def_universe(), [after, d, u, succ])
        } else {
            cd_lemmas(order, &var_universe(), [after, d, u, succ])
        };
        prop_assert!(ok);
    }
}

#[test]
fn lemma_bounds_are_tight() {
    // Dropping D from the bound breaks the subset lemma when the successor
    // needs a defined element.
    let after: BTreeSet<u8> = [1].into();
    let d: BTreeSet<u8> = [1].into();
    let before: BTreeSet<u8> = BTreeSet::new();
    assert!(check_prediction_lemma_subset(&before, &after, &after, &d, &BTreeSet::new()));
    assert!(!check_prediction_lemma_subset(&before, &after, &after, &BTreeSet::new(), &BTreeSet::new()));
}
