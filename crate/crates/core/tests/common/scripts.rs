use mebn::mtheory::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TYPES: [&str; 3] = ["VEHICLE", "TIME", "REGION"];

fn number() -> impl Strategy<Value = f64> {
    (-40i32..40).prop_map(|k| k as f64 / 4.0)
}

fn leaf(ovs: Vec<String>) -> impl Strategy<Value = Expr> {
    prop_oneof![
        number().prop_map(Expr::Number),
        "P[0-2]".prop_map(Expr::Name),
        (1u32..4, 1u32..4).prop_map(|(i, j)| Expr::Theta(i, j)),
        proptest::sample::select(ovs).prop_map(Expr::Cardinality),
        (0usize..3, "P[0-2]").prop_map(|(f, p)| {
            let f = [Aggregate::Average, Aggregate::Sum, Aggregate::Multiply][f];
            Expr::Aggregate(f, p)
        }),
    ]
}

pub fn expr(ovs: Vec<String>) -> impl Strategy<Value = Expr> {
    leaf(ovs).prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (0usize..4, inner.clone(), inner.clone()).prop_map(|(op, a, b)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][op];
                Expr::binary(op, a, b)
            }),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

/// Multiples of 1/20, so every probability prints exactly.
fn probabilities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0u32..=20, n - 1).prop_map(|w| {
        let mut left = 20;
        let mut out = Vec::new();
        for x in w {
            let x = x.min(left);
            left -= x;
            out.push(x as f64 / 20.0);
        }
        out.push(left as f64 / 20.0);
        out
    })
}

fn categorical_csd(states: Vec<String>, ovs: Vec<String>) -> impl Strategy<Value = Csd> {
    let n = states.len();
    let s2 = states.clone();
    prop_oneof![
        probabilities(n).prop_map(move |p| Csd::Categorical(CategoricalCsd {
            entries: states.iter().cloned().zip(p).collect()
        })),
        proptest::collection::vec(expr(ovs), n).prop_map(move |mut es| {
            es[0] = Expr::binary(BinOp::Add, Expr::Theta(9, 9), es[0].clone());
            Csd::Formula(FormulaCsd::Categorical(s2.iter().cloned().zip(es).collect()))
        }),
    ]
}

fn continuous_csd(ovs: Vec<String>) -> impl Strategy<Value = Csd> {
    let term = (0.25f64..4.0, any::<bool>(), "P[0-2]", proptest::option::of(0usize..3)).prop_map(|(c, neg, p, agg)| {
        let c = (c * 4.0).round() / 4.0;
        LinearTerm {
            parent: p,
            coefficient: if neg { -c } else { c },
            aggregate: agg.map(|f| [Aggregate::Average, Aggregate::Sum, Aggregate::Multiply][f]),
        }
    });
    prop_oneof![
        (number(), proptest::collection::vec(term, 0..3), 0u32..20).prop_map(|(intercept, terms, v)| {
            Csd::LinearGaussian(LinearGaussianCsd { intercept, terms, variance: v as f64 / 4.0 })
        }),
        (expr(ovs.clone()), expr(ovs)).prop_map(|(m, v)| {
            let m = Expr::binary(BinOp::Add, Expr::Theta(1, 1), m);
            Csd::Formula(FormulaCsd::Continuous(Expr::Normal(Box::new(m), Box::new(v))))
        }),
    ]
}

fn cpc(ovs: Vec<String>) -> impl Strategy<Value = Cpc> {
    let single = (proptest::sample::select(ovs.clone()), "P[0-2]", "[A-D]").prop_map(|(ov, parent, state)| Cpc::Some {
        ovs: vec![ov],
        parent,
        state,
    });
    let config = (
        proptest::sample::subsequence(ovs.clone(), 1..=ovs.len().min(2)),
        proptest::collection::vec(("P[0-2]", "[A-D]"), 1..3),
    )
        .prop_filter("config clause", |(o, c)| o.len() > 1 || c.len() > 1)
        .prop_map(|(ovs, conditions)| Cpc::Config { ovs, conditions });
    prop_oneof![single, config]
}

fn cld(csd: BoxedStrategy<Csd>, ovs: Vec<String>) -> impl Strategy<Value = Cld> {
    (proptest::collection::vec((cpc(ovs), csd.clone()), 0..3), csd).prop_map(|(branches, default)| Cld { branches, default })
}

fn value_space_and_cld(ovs: Vec<String>) -> impl Strategy<Value = (Option<ValueSpace>, Option<CldSpec>)> {
    let o1 = ovs.clone();
    let o2 = ovs.clone();
    prop_oneof![
        Just((None, None)),
        "[A-Z][a-z]{2,6}CLD".prop_map(|n| (None, Some(CldSpec::Named(n)))),
        (2usize..4, any::<bool>()).prop_flat_map(move |(n, boolean)| {
            let (vs, states) = if boolean {
                (ValueSpace::Boolean, vec!["True".to_string(), "False".to_string()])
            } else {
                let s: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
                (ValueSpace::Categorical(s.clone()), s)
            };
            let csd = categorical_csd(states, o1.clone()).boxed();
            proptest::option::of(cld(csd, o1.clone()).prop_map(CldSpec::Inline))
                .prop_map(move |c| (Some(vs.clone()), c))
        }),
        proptest::option::of(cld(continuous_csd(o2.clone()).boxed(), o2))
            .prop_map(|c| (Some(ValueSpace::Continuous), c.map(CldSpec::Inline))),
        proptest::sample::select(TYPES.to_vec()).prop_map(|t| (Some(ValueSpace::Entity(t.into())), None)),
    ]
}

fn context(ovs: Vec<String>) -> impl Strategy<Value = ContextNode> {
    let pick = proptest::sample::select(ovs.clone());
    prop_oneof![
        (pick.clone(), pick.clone()).prop_map(|(left, right)| ContextNode::Equality { left, right }),
        (pick.clone(), "[A-Z][a-z]{1,6}", proptest::sample::subsequence(ovs.clone(), 1..=ovs.len()))
            .prop_map(|(ov, function, args)| ContextNode::Relational { ov, function, args }),
        ("[A-Z][a-z]{1,6}", proptest::sample::subsequence(ovs.clone(), 1..=ovs.len()))
            .prop_map(|(function, args)| ContextNode::Predicate { function, args }),
    ]
}

fn parent(ovs: Vec<String>) -> impl Strategy<Value = ParentRef> {
    (any::<bool>(), "[A-Z][a-z]{1,6}", proptest::sample::subsequence(ovs.clone(), 1..=ovs.len())).prop_map(
        |(input, name, args)| ParentRef {
            kind: if input { ParentKind::Input } else { ParentKind::Resident },
            name,
            args,
        },
    )
}

fn mfrag(index: usize) -> impl Strategy<Value = MFrag> {
    proptest::collection::vec(proptest::sample::select(TYPES.to_vec()), 1..4).prop_flat_map(move |types| {
        let ovs: Vec<String> = (0..types.len()).map(|i| format!("o{i}")).collect();
        let isa: Vec<ContextNode> = ovs
            .iter()
            .zip(&types)
            .map(|(ov, t)| ContextNode::IsA { ov: ov.clone(), entity_type: t.to_string() })
            .collect();
        let resident = (
            proptest::sample::subsequence(ovs.clone(), 1..=ovs.len()),
            proptest::collection::vec(parent(ovs.clone()), 0..3),
            value_space_and_cld(ovs.clone()),
        );
        (
            Just(isa),
            proptest::collection::vec(context(ovs.clone()), 0..3),
            proptest::collection::vec(resident, 0..3),
            any::<bool>(),
        )
            .prop_map(move |(isa, extra, residents, interleave)| {
                let mut f = MFrag::new(format!("FRAG{index}"));
                f.contexts = isa;
                if interleave && !extra.is_empty() {
                    f.contexts.insert(1.min(f.contexts.len()), extra[0].clone());
                    f.contexts.extend(extra[1..].iter().cloned());
                } else {
                    f.contexts.extend(extra);
                }
                f.residents = residents
                    .into_iter()
                    .enumerate()
                    .map(|(j, (args, parents, (value_space, cld)))| ResidentNode {
                        name: format!("Res{index}_{j}"),
                        args,
                        value_space,
                        parents,
                        cld,
                    })
                    .collect();
                f
            })
    })
}

pub fn mtheory() -> impl Strategy<Value = MTheory> {
    (1usize..5).prop_flat_map(|n| (0..n).map(mfrag).collect::<Vec<_>>()).prop_map(MTheory::new)
}

const VOCAB: [&str; 32] = [
    "[", "]", "(", ")", ":", ",", ".", "=", "|", "+", "-", "*", "/", "F", "C", "R", "IP", "RP", "L", "V", "IsA",
    "if", "else", "some", "have", "x", "cat", "cont", "NormalDist", "CARDINALITY", "theta", "0.5",
];

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut chars: Vec<char> = base.chars().collect();
    for _ in 0..rng.random_range(1..6) {
        if chars.is_empty() {
            break;
        }
        let i = rng.random_range(0..chars.len());
        match rng.random_range(0..4) {
            0 => {
                chars.remove(i);
            }
            1 => chars.insert(i, char::from(rng.random_range(32u8..127))),
            2 => {
                let j = rng.random_range(0..chars.len());
                chars.swap(i, j);
            }
            _ => {
                let end = rng.random_range(i..=chars.len());
                chars.truncate(end);
            }
        }
    }
    chars.into_iter().collect()
}

/// Deterministic parser inputs: random bytes, random token soup and mutations of `corpus`.
pub fn fuzz_inputs(corpus: &[String], n: usize, seed: u64) -> impl Iterator<Item = String> + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(move |i| match i % 3 {
        0 => {
            let bytes: Vec<u8> = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => (0..rng.random_range(0..40)).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" "),
        _ => {
            let base = &corpus[rng.random_range(0..corpus.len())];
            mutate(&mut rng, base)
        }
    })
}
