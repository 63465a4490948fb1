use std::collections::BTreeSet;

use proptest::prelude::*;

use dpln::atom_store::{AtomId, AtomRef, AtomSpace, AtomType, TruthValue};
use dpln::autodiff::{sigmoid, Algebra, Plain, Tape, Var};
use dpln::pattern_matcher::{match_query, Binding, Query};
use dpln::pln_rules::{
    deduction_strength, fuzzy_and, fuzzy_not, fuzzy_or, make_rule_set, modus_ponens_strength, trainable_mp_strength, Formula,
    FormulaWeights, DEDUCTION_EPSILON,
};
use dpln::rule_engine::{backward_chain, forward_chain, ChainConfig};
use dpln::trainer::{cross_entropy, sgd_step, LearnableStrength};

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn interior() -> impl Strategy<Value = f64> {
    0.01..0.99f64
}

/// Central difference of `f` in coordinate `i`.
fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6;
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += h;
    lo[i] -= h;
    (f(&hi) - f(&lo)) / (2.0 * h)
}

/// Tape gradient of `formula` at `x`.
fn tape_grad(formula: &Formula, tape: &mut Tape, x: &[f64]) -> (f64, Vec<f64>) {
    let vars: Vec<Var> = x.iter().map(|&v| tape.parameter(v).unwrap()).collect();
    let out = formula.apply(tape, &vars).unwrap();
    tape.zero_grads();
    tape.backward(out).unwrap();
    let g = vars.iter().map(|&v| tape.grad(v).unwrap()).collect();
    (tape.value(out).unwrap(), g)
}

fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-5 + 1e-4 * analytic.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn modus_ponens_gradient(a in interior(), b in interior(), c in interior()) {
        let f = |x: &[f64]| modus_ponens_strength(&mut Plain, x[0], x[1], x[2]).unwrap();
        let mut tape = Tape::new();
        let (_, g) = tape_grad(&Formula::ModusPonens, &mut tape, &[a, b, c]);
        for i in 0..3 {
            prop_assert!(grad_close(g[i], numeric_grad(&f, &[a, b, c], i)));
        }
    }

    #[test]
    fn deduction_gradient(ab in interior(), bc in interior(), sb in 0.01..0.9f64, sc in interior()) {
        // stay clear of the clamp kinks
        let ratio = (sc - sb * bc) / (1.0 - sb);
        prop_assume!(ratio > 1e-3 && ratio < 1.0 - 1e-3);
        let x = [ab, bc, sb, sc];
        let f = |x: &[f64]| deduction_strength(&mut Plain, x[0], x[1], x[2], x[3]).unwrap();
        let mut tape = Tape::new();
        let (_, g) = tape_grad(&Formula::Deduction, &mut tape, &x);
        for i in 0..4 {
            prop_assert!(grad_close(g[i], numeric_grad(&f, &x, i)), "input {} analytic {} numeric {}", i, g[i], numeric_grad(&f, &x, i));
        }
    }

    #[test]
    fn trainable_gradient_wrt_weights(a in unit(), b in unit(), w in proptest::array::uniform4(-4.0..4.0f64)) {
        let mut tape = Tape::new();
        let pa = tape.constant(a).unwrap();
        let pb = tape.constant(b).unwrap();
        let wv = FormulaWeights::from_values(&mut tape, w).unwrap();
        let out = Formula::TrainableModusPonens(wv).apply(&mut tape, &[pa, pb]).unwrap();
        tape.backward(out).unwrap();
        let f = |x: &[f64]| trainable_mp_strength(&mut Plain, a, b, &[x[0], x[1], x[2], x[3]]).unwrap();
        for (i, v) in wv.vars().into_iter().enumerate() {
            prop_assert!(grad_close(tape.grad(v).unwrap(), numeric_grad(&f, &w, i)));
        }
    }

    #[test]
    fn connectives_stay_in_unit_interval(a in unit(), b in unit()) {
        for v in [
            fuzzy_and(&mut Plain, a, b).unwrap(),
            fuzzy_or(&mut Plain, a, b).unwrap(),
            fuzzy_not(&mut Plain, a).unwrap(),
        ] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn rule_formulas_stay_in_unit_interval(x in proptest::array::uniform4(unit()), w in proptest::array::uniform4(-50.0..50.0f64)) {
        let mp = modus_ponens_strength(&mut Plain, x[0], x[1], x[2]).unwrap();
        let ded = deduction_strength(&mut Plain, x[0], x[1], x[2], x[3]).unwrap();
        let tmp = trainable_mp_strength(&mut Plain, x[0], x[1], &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&mp));
        prop_assert!((0.0..=1.0).contains(&ded));
        prop_assert!((0.0..=1.0).contains(&tmp));
    }

    #[test]
    fn deduction_with_certain_middle_term_uses_sc(ab in unit(), bc in unit(), sc in unit()) {
        let sb = 1.0 - DEDUCTION_EPSILON / 2.0;
        let got = deduction_strength(&mut Plain, ab, bc, sb, sc).unwrap();
        let want = (ab * bc + (1.0 - ab) * sc).clamp(0.0, 1.0);
        prop_assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn learnable_strength_stays_open(init in 0.0..=1.0f64, label in unit(), lr in 0.1..10.0f64) {
        let mut tape = Tape::new();
        let s = LearnableStrength::new(&mut tape, init).unwrap();
        let mark = tape.mark();
        for _ in 0..50 {
            tape.rewind(mark);
            let p = s.strength(&mut tape).unwrap();
            let loss = cross_entropy(&mut tape, &[p], &[label]).unwrap();
            tape.backward(loss).unwrap();
            sgd_step(&mut tape, &[s.theta()], lr).unwrap();
            tape.zero_grads();
            let v = s.value(&tape).unwrap();
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(ps in proptest::collection::vec((unit(), unit()), 1..10)) {
        let mut tape = Tape::new();
        let preds: Vec<Var> = ps.iter().map(|&(p, _)| tape.constant(p).unwrap()).collect();
        let labels: Vec<f64> = ps.iter().map(|&(_, y)| y).collect();
        let l = cross_entropy(&mut tape, &preds, &labels).unwrap();
        prop_assert!(tape.value(l).unwrap() >= 0.0);
    }

    #[test]
    fn sigmoid_matches_definition(x in -30.0..30.0f64) {
        let want = 1.0 / (1.0 + (-x).exp());
        prop_assert!((sigmoid(x) - want).abs() < 1e-15);
    }
}

/// Small random hypergraph: concepts, predicates and links among them.
#[derive(Debug, Clone)]
struct RandomKb {
    concepts: usize,
    links: Vec<(u8, usize, usize)>,
}

fn random_kb() -> impl Strategy<Value = RandomKb> {
    (2usize..4, proptest::collection::vec((0u8..3, 0usize..4, 0usize..4), 0..8)).prop_map(|(concepts, links)| RandomKb {
        concepts,
        links: links.into_iter().map(|(t, a, b)| (t, a % concepts, b % concepts)).collect(),
    })
}

const LINK_TYPES: [AtomType; 3] = [AtomType::INHERITANCE_LINK, AtomType::LIST_LINK, AtomType::AND_LINK];

fn build(r: &RandomKb) -> (Tape, AtomSpace, Vec<AtomId>) {
    let mut tape = Tape::new();
    let mut kb = AtomSpace::new(&mut tape);
    let nodes: Vec<AtomId> = (0..r.concepts)
        .map(|i| kb.intern_node(AtomType::CONCEPT_NODE, &format!("c{i}")).unwrap())
        .collect();
    for &(t, a, b) in &r.links {
        kb.intern_link(LINK_TYPES[t as usize], &[nodes[a], nodes[b]]).unwrap();
    }
    (tape, kb, nodes)
}

/// Lookup-only substitution, written independently of the matcher.
fn lookup(kb: &AtomSpace, pattern: AtomId, b: &[(AtomId, AtomId)]) -> Option<AtomId> {
    if let Some(&(_, g)) = b.iter().find(|(v, _)| *v == pattern) {
        return Some(g);
    }
    match kb.get(pattern).ok()? {
        AtomRef::Node { .. } => Some(pattern),
        AtomRef::Link { ty, outgoing } => {
            let kids: Option<Vec<AtomId>> = outgoing.iter().map(|&c| lookup(kb, c, b)).collect();
            kb.find_link(ty, &kids?)
        }
    }
}

fn brute_force(kb: &AtomSpace, vars: &[AtomId], clauses: &[AtomId]) -> BTreeSet<Vec<(AtomId, AtomId)>> {
    let ground: Vec<AtomId> = kb.ids().filter(|&id| kb.is_ground(id).unwrap()).collect();
    let mut out = BTreeSet::new();
    let mut idx = vec![0usize; vars.len()];
    if ground.is_empty() && !vars.is_empty() {
        return out;
    }
    loop {
        let b: Vec<(AtomId, AtomId)> = vars.iter().zip(&idx).map(|(&v, &i)| (v, ground[i])).collect();
        if clauses.iter().all(|&c| lookup(kb, c, &b).is_some()) {
            out.insert(b);
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < ground.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    out
}

fn as_set(results: &[Binding], vars: &[AtomId]) -> BTreeSet<Vec<(AtomId, AtomId)>> {
    results
        .iter()
        .map(|b| vars.iter().map(|&v| (v, b.get(v).expect("query variable bound"))).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn matcher_agrees_with_brute_force(r in random_kb(), shape in 0u8..4, t1 in 0u8..3, t2 in 0u8..3, c in 0usize..4) {
        let (_tape, mut kb, nodes) = build(&r);
        let x = kb.intern_node(AtomType::VARIABLE_NODE, "$X").unwrap();
        let y = kb.intern_node(AtomType::VARIABLE_NODE, "$Y").unwrap();
        let node = nodes[c % nodes.len()];
        let l1 = LINK_TYPES[t1 as usize];
        let l2 = LINK_TYPES[t2 as usize];
        let (vars, clauses) = match shape {
            0 => (vec![x], vec![kb.intern_link(l1, &[node, x]).unwrap()]),
            1 => (vec![x, y], vec![kb.intern_link(l1, &[x, y]).unwrap()]),
            2 => (
                vec![x, y],
                vec![kb.intern_link(l1, &[x, y]).unwrap(), kb.intern_link(l2, &[y, x]).unwrap()],
            ),
            _ => {
                let inner = kb.intern_link(l1, &[x, node]).unwrap();
                (vec![x, y], vec![kb.intern_link(l2, &[inner, y]).unwrap(), kb.intern_link(l1, &[x, x]).unwrap()])
            }
        };
        let q = Query::with_implicit_variables(&kb, clauses.clone()).unwrap();
        let got = match_query(&kb, &q).unwrap();
        let want = brute_force(&kb, &vars, &clauses);
        prop_assert_eq!(got.len(), as_set(&got, &vars).len(), "duplicate bindings");
        prop_assert_eq!(as_set(&got, &vars), want);
    }

    #[test]
    fn chaining_traces_reevaluate_exactly(ss in proptest::collection::vec(unit(), 6), terms in proptest::collection::vec(unit(), 4)) {
        let mut tape = Tape::new();
        let mut kb = AtomSpace::new(&mut tape);
        let c: Vec<AtomId> = (0..4).map(|i| kb.intern_node(AtomType::CONCEPT_NODE, &format!("n{i}")).unwrap()).collect();
        for (i, &t) in terms.iter().enumerate() {
            let tv = TruthValue::constant(&mut tape, t, 1.0).unwrap();
            kb.set_tv(c[i], tv).unwrap();
        }
        let pairs = [(0, 1), (1, 2), (2, 3), (0, 2), (1, 3), (3, 0)];
        for (&(a, b), &s) in pairs.iter().zip(&ss) {
            let l = kb.intern_link(AtomType::INHERITANCE_LINK, &[c[a], c[b]]).unwrap();
            let tv = TruthValue::constant(&mut tape, s, 1.0).unwrap();
            kb.set_tv(l, tv).unwrap();
        }
        let rules = make_rule_set(&mut kb, &mut tape, 0.2).unwrap().standard();
        let v = kb.intern_node(AtomType::VARIABLE_NODE, "$W").unwrap();
        let target = kb.intern_link(AtomType::INHERITANCE_LINK, &[c[0], v]).unwrap();
        let cfg = ChainConfig::new(1, 3, 0, true).unwrap();
        for r in backward_chain(&mut kb, &mut tape, &rules, target, &cfg).unwrap() {
            let stored = tape.value(r.strength).unwrap();
            prop_assert_eq!(r.trace.evaluate(&tape).unwrap().to_bits(), stored.to_bits());
            prop_assert!((0.0..=1.0).contains(&stored));
        }
    }

    #[test]
    fn forward_chaining_is_reproducible(ss in proptest::collection::vec(unit(), 4), seed in any::<u64>()) {
        let run = || {
            let mut tape = Tape::new();
            let mut kb = AtomSpace::new(&mut tape);
            let c: Vec<AtomId> = (0..5).map(|i| kb.intern_node(AtomType::CONCEPT_NODE, &format!("n{i}")).unwrap()).collect();
            for (i, &s) in ss.iter().enumerate() {
                let l = kb.intern_link(AtomType::INHERITANCE_LINK, &[c[i], c[i + 1]]).unwrap();
                let tv = TruthValue::constant(&mut tape, s, 1.0).unwrap();
                kb.set_tv(l, tv).unwrap();
            }
            let rules = make_rule_set(&mut kb, &mut tape, 0.2).unwrap().standard();
            let cfg = ChainConfig::new(5, 3, seed, true).unwrap();
            let res = forward_chain(&mut kb, &mut tape, &rules, &cfg).unwrap();
            res.new_atoms
                .iter()
                .map(|&a| (a, tape.value(kb.get_tv(a).unwrap().strength).unwrap().to_bits()))
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
