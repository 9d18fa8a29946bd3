use propnli_core::datagen::sample_formula;
use propnli_core::logic::{parse, relation, relation_of_pair, Formula, Relation, TruthSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn formula(max_connectives: usize) -> impl Strategy<Value = Formula> {
    (any::<u64>(), 0..=max_connectives)
        .prop_map(|(seed, k)| sample_formula(&mut ChaCha8Rng::seed_from_u64(seed), k, 1.0 / 3.0))
}

fn table1() -> [(&'static str, &'static str, Relation); 4] {
    [
        ("( not p3 )", "p3", Relation::Negation),
        ("p3", "( p3 ( or p2 ) )", Relation::ForwardEntailment),
        ("( ( not p2 ) ( and p6 ) )", "( not ( p6 ( or ( p5 ( or p3 ) ) ) ) )", Relation::Alternation),
        (
            "( p4 ( or ( not ( ( p1 ( or p6 ) ) ( or p4 ) ) ) ) )",
            "( not ( ( ( ( not p6 ) ( or ( not p4 ) ) ) ( and ( not p5 ) ) ) ( and ( p6 ( and p6 ) ) ) ) )",
            Relation::ForwardEntailment,
        ),
    ]
}

#[test]
fn table1_pairs() {
    for (p, h, want) in table1() {
        let p: Formula = p.parse().unwrap();
        let h: Formula = h.parse().unwrap();
        assert_eq!(relation_of_pair(&p, &h), want, "{p} vs {h}");
    }
}

#[test]
fn contradiction_against_its_negation_is_entailment() {
    // Empty vs universal: the subset check fires before the negation check.
    let x: Formula = "( p1 ( and ( not p1 ) ) )".parse().unwrap();
    assert_eq!(relation_of_pair(&x, &Formula::not(x.clone())), Relation::ForwardEntailment);
}

#[test]
fn relation_is_total_over_structured_sets() {
    let samples = [
        TruthSet::EMPTY,
        TruthSet::UNIVERSE,
        TruthSet::variable(1),
        TruthSet::variable(2),
        TruthSet::variable(1).complement(),
        TruthSet::variable(1).union(TruthSet::variable(2)),
        TruthSet::variable(1).intersection(TruthSet::variable(2)),
    ];
    for a in samples {
        for b in samples {
            let r = relation(a, b);
            assert_eq!(relation(b, a), r.converse());
        }
    }
}

proptest! {
    #[test]
    fn render_parse_round_trip(f in formula(12)) {
        let tokens = f.render_tokens();
        prop_assert_eq!(tokens.len(), f.token_len());
        prop_assert_eq!(parse(&tokens).unwrap(), f.clone());
        prop_assert_eq!(f.to_string().parse::<Formula>().unwrap(), f);
    }

    #[test]
    fn exactly_one_relation(a in any::<u64>(), b in any::<u64>()) {
        let (a, b) = (TruthSet(a), TruthSet(b));
        let disjoint = a.intersection(b).is_empty();
        let exhaustive = a.union(b) == TruthSet::UNIVERSE;
        let holds = [
            a == b,
            a != b && a.is_subset(b),
            a != b && b.is_subset(a),
            !a.is_subset(b) && !b.is_subset(a) && disjoint && exhaustive,
            !a.is_subset(b) && !b.is_subset(a) && disjoint && !exhaustive,
            !a.is_subset(b) && !b.is_subset(a) && !disjoint && exhaustive,
            !a.is_subset(b) && !b.is_subset(a) && !disjoint && !exhaustive,
        ];
        prop_assert_eq!(holds.iter().filter(|h| **h).count(), 1);
        prop_assert!(holds[relation(a, b).index()]);
    }

    #[test]
    fn set_algebra(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (a, b, c) = (TruthSet(a), TruthSet(b), TruthSet(c));
        prop_assert_eq!(a.complement().complement(), a);
        prop_assert_eq!(a.union(b), b.union(a));
        prop_assert_eq!(a.intersection(b), b.intersection(a));
        prop_assert_eq!(a.union(b).union(c), a.union(b.union(c)));
        prop_assert_eq!(a.intersection(b).intersection(c), a.intersection(b.intersection(c)));
    }

    #[test]
    fn oracle_laws(x in formula(8), y in formula(8)) {
        use Relation::*;
        prop_assert_eq!(relation_of_pair(&x, &y), relation_of_pair(&y, &x).converse());
        prop_assert_eq!(relation_of_pair(&x, &x), Equivalence);
        prop_assert_eq!(relation_of_pair(&x, &Formula::not(Formula::not(x.clone()))), Equivalence);
        let degenerate = x.satisfying_set().is_empty() || x.satisfying_set() == TruthSet::UNIVERSE;
        if !degenerate {
            prop_assert_eq!(relation_of_pair(&x, &Formula::not(x.clone())), Negation);
        }
        prop_assert_eq!(
            relation_of_pair(
                &Formula::not(Formula::and(x.clone(), y.clone())),
                &Formula::or(Formula::not(x.clone()), Formula::not(y.clone())),
            ),
            Equivalence
        );
        let weak = relation_of_pair(&x, &Formula::or(x.clone(), y.clone()));
        prop_assert!(matches!(weak, ForwardEntailment | Equivalence));
        let strong = relation_of_pair(&Formula::and(x.clone(), y.clone()), &x);
        prop_assert!(matches!(strong, ForwardEntailment | Equivalence));
    }

    #[test]
    fn negation_complements(f in formula(10)) {
        prop_assert_eq!(Formula::not(f.clone()).satisfying_set(), f.satisfying_set().complement());
    }
}
