//! Property tests over randomly generated DAGs and tuner inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplgen::absint::{analyze, AnalysisConfig};
use simplgen::engine::{simplify, size_metric, Limits};
use simplgen::eval::random_environment;
use simplgen::hashcons::{baseline, hash_cons};
use simplgen::matcher::Matcher;
use simplgen::pattern::Pattern;
use simplgen::predicate::{Atom, Operand, Predicate, Relation};
use simplgen::synth::RewriteRule;
use simplgen::tuner::{reward, search, TunerConfig};
use simplgen::{
    evaluate, parse_dag, serialize_dag, FormulaDag, Node, OpKind, Semantics, Sort, Value,
};

/// A random well-sorted DAG over BOOL and INT with `ops` operation nodes.
fn random_dag(seed: u64, ops: usize) -> FormulaDag {
    use OpKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![
        Node::source(Sort::Bool, "p"),
        Node::source(Sort::Bool, "q"),
        Node::source(Sort::Int, "x"),
        Node::source(Sort::Int, "y"),
        Node::constant(Sort::Int, rng.gen_range(-8..8)),
    ];
    let mut pools = [vec![0, 1], vec![2, 3, 4]];
    for _ in 0..ops {
        let pick = |s: usize, rng: &mut ChaCha8Rng| pools[s][rng.gen_range(0..pools[s].len())];
        let (op, sort, operands) = match rng.gen_range(0..11) {
            0 => (Not, Sort::Bool, vec![pick(0, &mut rng)]),
            k @ 1..=3 => (
                [And, Or, Xor][k - 1],
                Sort::Bool,
                vec![pick(0, &mut rng), pick(0, &mut rng)],
            ),
            k @ 4..=5 => (
                [Lt, Eq][k - 4],
                Sort::Bool,
                vec![pick(1, &mut rng), pick(1, &mut rng)],
            ),
            k @ 6..=8 => (
                [Plus, Times, Div][k - 6],
                Sort::Int,
                vec![pick(1, &mut rng), pick(1, &mut rng)],
            ),
            9 => (Neg, Sort::Int, vec![pick(1, &mut rng)]),
            _ => (
                ArrAcc,
                Sort::Int,
                vec![pick(0, &mut rng), pick(1, &mut rng), pick(1, &mut rng)],
            ),
        };
        nodes.push(Node::op(op, sort, operands));
        pools[usize::from(sort == Sort::Int)].push(nodes.len() - 1);
    }
    let n = nodes.len();
    let mut roots: Vec<usize> = (0..3)
        .map(|_| rng.gen_range(5..n.max(6)))
        .filter(|&r| r < n)
        .collect();
    roots.push(n - 1);
    FormulaDag::new(nodes, roots, 3).unwrap()
}

fn pat(text: &str) -> Pattern {
    Pattern::new(parse_dag(text).unwrap()).unwrap()
}

fn rules() -> Vec<RewriteRule> {
    let t = Predicate::new([]);
    vec![
        RewriteRule::new(
            pat("0 = S BOOL a\n1 = NOT BOOL 0\n2 = NOT BOOL 1\n2"),
            t.clone(),
            pat("0 = S BOOL a\n0"),
            4,
        )
        .unwrap(),
        RewriteRule::new(
            pat("0 = S BOOL a\n1 = AND BOOL 0 0\n1"),
            t.clone(),
            pat("0 = S BOOL a\n0"),
            4,
        )
        .unwrap(),
        RewriteRule::new(
            pat("0 = S INT a\n1 = NEG INT 0\n2 = NEG INT 1\n2"),
            t,
            pat("0 = S INT a\n0"),
            4,
        )
        .unwrap(),
        RewriteRule::new(
            pat("0 = S BOOL t\n1 = S INT c\n2 = S INT d\n3 = ARRACC INT 0 1 2\n3"),
            Predicate::new([Atom::new("c", Relation::Eq, Operand::Var("d".into()))]),
            pat("0 = S INT c\n0"),
            4,
        )
        .unwrap(),
    ]
}

fn root_values(d: &FormulaDag, env: &simplgen::Environment, sem: &Semantics) -> Vec<Value> {
    evaluate(d, env, sem).unwrap().root_values(d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip(seed in any::<u64>(), ops in 1usize..60) {
        let d = random_dag(seed, ops);
        let text = serialize_dag(&d);
        let back = parse_dag(&text).unwrap();
        prop_assert_eq!(serialize_dag(&back), text);
        prop_assert_eq!(back, d);
    }

    #[test]
    fn hash_consing_is_idempotent_and_shrinks(seed in any::<u64>(), ops in 1usize..60) {
        let d = random_dag(seed, ops);
        let once = hash_cons(&d);
        prop_assert!(once.len() <= d.len());
        prop_assert_eq!(hash_cons(&once), once);
    }

    #[test]
    fn abstract_facts_cover_concrete_values(seed in any::<u64>(), ops in 1usize..40) {
        let d = random_dag(seed, ops);
        let sem = Semantics::default();
        let cfg = AnalysisConfig::new(sem);
        let facts = analyze(&d, &BTreeMap::new(), &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..20 {
            let env = random_environment(&d, &sem, &mut rng);
            let ev = evaluate(&d, &env, &sem).unwrap();
            for (id, v) in ev.values.iter().enumerate() {
                if let Value::Scalar(x) = v {
                    prop_assert!(facts[id].contains(*x, &cfg), "node {} value {} fact {:?}", id, x, facts[id]);
                }
            }
        }
    }

    #[test]
    fn simplification_preserves_roots_and_never_grows(seed in any::<u64>(), ops in 1usize..80) {
        let d = random_dag(seed, ops);
        let sem = Semantics::default();
        let m = Matcher::compile(&rules(), None).unwrap();
        let out = simplify(&d, &m, &Limits::default(), &sem);
        prop_assert!(size_metric(&out.dag) <= size_metric(&baseline(&d, &sem)));
        prop_assert_eq!(out.root_map.len(), d.roots().len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..30 {
            let env = random_environment(&d, &sem, &mut rng);
            let want = root_values(&d, &env, &sem);
            let ev = evaluate(&out.dag, &env, &sem).unwrap();
            let got: Vec<Value> = out.root_map.iter().map(|&r| ev.values[r].clone()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn reward_penalizes_regressions_asymmetrically(b in 1.0f64..1e6, d in 0.0f64..1.0, k in 1.0f64..10.0) {
        let up = reward(b, b * (1.0 + d), k);
        let down = reward(b, b * (1.0 - d), k);
        prop_assert!((up + k * down).abs() < 1e-9);
        prop_assert!(down >= 0.0 && up <= 0.0);
        prop_assert!(reward(b, b, k) == 0.0);
    }

    #[test]
    fn search_never_returns_worse_than_empty(
        sizes in proptest::collection::vec(1usize..4, 1..4),
        weights in proptest::collection::vec(-1.0f64..1.0, 12),
        budget in 1usize..40,
        seed in any::<u64>(),
    ) {
        let mut next = 0;
        let groups: Vec<Vec<usize>> = sizes.iter().map(|&s| { let g = (next..next + s).collect(); next += s; g }).collect();
        let score = |c: &TunerConfig| -> f64 {
            c.order().iter().enumerate().map(|(pos, &r)| weights[r] / (1.0 + pos as f64)).sum()
        };
        let empty = score(&TunerConfig::empty(&groups));
        let res = search(&groups, budget, seed, 12, |c, _| Ok::<_, ()>((score(c), ()))).unwrap();
        prop_assert!(res.evaluations <= budget);
        prop_assert!(score(&res.best) >= empty);
        prop_assert!(res.best.validate(&groups).is_ok());
    }
}
