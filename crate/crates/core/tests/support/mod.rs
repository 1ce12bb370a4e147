//! Shared fixtures, strategies and property checks for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use spalps_core::meanfield::{comm_flows, derive_equations, evaluate_equations, EquationSystem};
use spalps_core::oracle::Simulator;
use spalps_core::states::{StateSpace, Transition};
use spalps_core::{
    build_init_matrix, build_stt, ensemble, enumerate_states, parse, render, validate, InitMatrix, Phase,
    Rational, RunConfig, TransitionTable, ValidatedModel,
};

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(format!("{name}.palps"))
}

pub fn corpus(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).expect("corpus model present")
}

pub struct Compiled {
    pub model: ValidatedModel,
    pub space: StateSpace,
    pub table: TransitionTable,
    pub init: InitMatrix,
    pub eqs: EquationSystem,
}

pub fn compile(src: &str) -> Compiled {
    let model = validate(&parse(src).expect("parses")).expect("valid");
    let space = enumerate_states(&model).expect("enumerates");
    let table = build_stt(&model, &space);
    let init = build_init_matrix(&model, &space);
    let eqs = derive_equations(&table, &init).expect("dimensions agree");
    Compiled {
        model,
        space,
        table,
        init,
        eqs,
    }
}

/// A small model exercising every row kind, parameterised for property tests.
#[derive(Debug, Clone)]
pub struct Family {
    pub size: usize,
    pub weight: (u32, u32),
    /// `(count, location)` for A, B, C, D, F.
    pub entries: [(u64, usize); 5],
}

impl Family {
    pub fn source(&self) -> String {
        let names = ["A", "B", "C", "D", "F"];
        let system: String = names
            .iter()
            .zip(&self.entries)
            .map(|(n, (c, l))| format!("    {n} @ {} * {c};\n", l % self.size + 1))
            .collect();
        format!(
            "species a {{
    param w = {}/{};
    process A = pchoice {{ w: go (myloc+1) . B; 1-w: B }};
    process B = out c ? (tick . par(A, A), tick . A);
    process C = in c . tick . C;
    process D = c ? (tick . C, tick . D);
    process F = out f . tick . par(A, 0);
}}
habitat ring({});
system {{
{system}}} restrict {{ c }}
",
            self.weight.0, self.weight.1, self.size
        )
    }
}

pub fn family() -> impl Strategy<Value = Family> {
    (
        1usize..=5,
        (2u32..=7).prop_flat_map(|d| (1..d, Just(d))),
        proptest::array::uniform5((0u64..=20, 0usize..5)),
        any::<bool>(),
    )
        .prop_map(|(size, weight, mut entries, blocking)| {
            // Unmatched restricted prefixes deadlock, which would cut most runs short.
            if !blocking {
                entries[2].0 = 0;
            }
            Family { size, weight, entries }
        })
}

/// Probability literals for one `pchoice`, valid about half the time.
pub fn branch_weights() -> impl Strategy<Value = Vec<(i64, i64)>> {
    let normalized = proptest::collection::vec(1i64..=9, 1..=4).prop_map(|ws| {
        let total: i64 = ws.iter().sum();
        ws.into_iter().map(|w| (w, total)).collect::<Vec<_>>()
    });
    let arbitrary = proptest::collection::vec((0i64..=12, 1i64..=12), 1..=4);
    prop_oneof![normalized, arbitrary]
}

pub fn check_probability_sums(weights: Vec<(i64, i64)>) -> Result<(), TestCaseError> {
    let probs: Vec<Rational> = weights.iter().map(|&(n, d)| Rational::new(n, d)).collect();
    let branches: Vec<String> = weights
        .iter()
        .enumerate()
        .map(|(i, (n, d))| format!("{n}/{d}: tick . S{i}"))
        .collect();
    let defs: String = (0..weights.len()).map(|i| format!("process S{i} = 0; ")).collect();
    let src = format!(
        "species a {{ process P = pchoice {{ {} }}; {defs} }} habitat ring(1); system {{ P @ 1 * 1; }}",
        branches.join("; ")
    );
    let in_range = probs.iter().all(|p| p.is_positive() && *p <= Rational::one());
    let total: Rational = probs.iter().cloned().sum();
    let expect_ok = in_range && total.is_one();
    let result = validate(&parse(&src).map_err(|d| TestCaseError::fail(d.to_string()))?);
    match result {
        Ok(_) => prop_assert!(expect_ok, "accepted {src}"),
        Err(diags) => {
            prop_assert!(!expect_ok, "rejected {src}: {diags:?}");
            prop_assert!(diags.iter().all(|d| d.code == "E203" || d.code == "E204"), "{diags:?}");
            if in_range {
                let msg = format!("probabilities sum to {total} \u{2260} 1");
                prop_assert!(diags.iter().any(|d| d.message.contains(&msg)), "{diags:?}");
            }
        }
    }
    Ok(())
}

pub fn term_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![Just("0".to_string()), Just("A".to_string()), Just("B".to_string())];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| format!("tick . {t}")),
            (inner.clone(), 1usize..=3).prop_map(|(t, l)| format!("go {l} . {t}")),
            (inner.clone(), -2i64..=2).prop_map(|(t, k)| format!("go (myloc{k:+}) . {t}")),
            inner.clone().prop_map(|t| format!("in c . {t}")),
            inner.clone().prop_map(|t| format!("out d . {t}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("c ? ({a}, {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("out c ? ({a}, {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("pchoice {{ 1/3: {a}; 2/3: {b} }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("pchoice {{ p: {a}; 1-p: {b} }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("par({a}, {b})")),
            inner.prop_map(|t| format!("pchoice over neighbors {{ go it . {t} }}")),
        ]
    })
}

pub fn check_round_trip((a, b): (String, String)) -> Result<(), TestCaseError> {
    let src = format!(
        "species s {{ param p = 0.25; process A = tick . {a}; process B = {b}; }}
         habitat ring(3);
         system {{ A @ 1 * 2; B @ 3 * 0; }} restrict {{ c }}"
    );
    let spec = parse(&src).map_err(|d| TestCaseError::fail(format!("{d} in {src}")))?;
    let text = render(&spec);
    let again = parse(&text).map_err(|d| TestCaseError::fail(format!("{d} in {text}")))?;
    prop_assert_eq!(&again, &spec);
    prop_assert_eq!(render(&again), text);
    Ok(())
}

fn tick_growth(space: &StateSpace, i: usize) -> f64 {
    match space.transition(i) {
        Transition::Tick(t) => t.iter().map(|&(_, c)| c as f64).sum::<f64>() - 1.0,
        _ => 0.0,
    }
}

/// Mass law per phase, on frames computed by the evaluator.
pub fn check_mass_law(f: Family) -> Result<(), TestCaseError> {
    let c = compile(&f.source());
    let traj = evaluate_equations(&c.eqs, 15);
    let m = c.eqs.m;
    for w in traj.frames.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let before = prev.total();
        let expected = match next.phase {
            Phase::Tick => {
                before
                    + (0..c.eqs.n)
                        .map(|i| tick_growth(&c.space, i) * prev.values[i * m..(i + 1) * m].iter().sum::<f64>())
                        .sum::<f64>()
            }
            _ => before,
        };
        prop_assert!(
            (next.total() - expected).abs() <= 1e-12,
            "{:?} frame {}: total {} expected {}",
            next.phase,
            next.step,
            next.total(),
            expected
        );
    }
    Ok(())
}

/// Raw gated steps stay nonnegative and reproduce the evaluator's frames.
pub fn check_nonnegative(f: Family) -> Result<(), TestCaseError> {
    let c = compile(&f.source());
    let traj = evaluate_equations(&c.eqs, 15);
    for w in traj.frames.windows(2) {
        prop_assert!(w[1].values.iter().all(|v| v.is_finite() && *v >= 0.0));
        if w[1].phase == Phase::Stalled {
            continue;
        }
        let raw = c.eqs.step_phase(&w[0].values, w[1].phase);
        for (r, v) in raw.iter().zip(&w[1].values) {
            prop_assert!(*r >= -1e-12, "raw value {r}");
            prop_assert!((r - v).abs() <= 1e-12, "raw {r} vs frame {v}");
        }
    }
    Ok(())
}

/// Both sides of every restricted channel lose exactly `min(X, Y)` to matches.
pub fn check_comm_matching(f: Family) -> Result<(), TestCaseError> {
    let c = compile(&f.source());
    let traj = evaluate_equations(&c.eqs, 15);
    for w in traj.frames.windows(2) {
        if w[1].phase != Phase::Action {
            continue;
        }
        for l in 0..c.eqs.m {
            for (ch, inputs, outputs, min) in comm_flows(&c.table, &w[0].values, l) {
                let tol = 1e-12 * min.max(1.0);
                prop_assert!((inputs - min).abs() <= tol, "{ch}@{l}: in {inputs} vs {min}");
                prop_assert!((outputs - min).abs() <= tol, "{ch}@{l}: out {outputs} vs {min}");
            }
        }
    }
    Ok(())
}

fn pools() -> &'static (rayon::ThreadPool, rayon::ThreadPool) {
    static POOLS: OnceLock<(rayon::ThreadPool, rayon::ThreadPool)> = OnceLock::new();
    POOLS.get_or_init(|| {
        let build = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("pool");
        (build(1), build(3))
    })
}

pub fn mc_config() -> impl Strategy<Value = (Family, u64, usize, usize, u64)> {
    (family(), any::<u64>(), 1usize..=6, 0usize..=12, 1u64..=4)
}

/// Same seed, same output, whatever the thread count; integer mass law holds.
pub fn check_mc_determinism((f, seed, replicas, steps, scale): (Family, u64, usize, usize, u64)) -> Result<(), TestCaseError> {
    let c = compile(&f.source());
    let config = RunConfig {
        seed,
        steps,
        replicas,
        scale,
    };
    let (one, three) = pools();
    let a = one.install(|| ensemble(&c.model, &c.space, &config)).expect("runs");
    let b = three.install(|| ensemble(&c.model, &c.space, &config)).expect("runs");
    prop_assert_eq!(&a, &b);
    let sim = Simulator::new(&c.model, &c.space).expect("plan");
    let r1 = sim.run(&config, 1).expect("runs");
    prop_assert_eq!(&r1, &sim.run(&config, 1).expect("runs"));
    let m = c.eqs.m;
    for w in r1.frames.windows(2) {
        let before: u64 = w[0].counts.iter().sum();
        let after: u64 = w[1].counts.iter().sum();
        match w[1].phase {
            Phase::Tick => {
                let grown: f64 = (0..c.eqs.n)
                    .map(|i| tick_growth(&c.space, i) * w[0].counts[i * m..(i + 1) * m].iter().sum::<u64>() as f64)
                    .sum();
                prop_assert_eq!(after as f64, before as f64 + grown);
            }
            _ => prop_assert_eq!(after, before),
        }
    }
    Ok(())
}

/// Nonzero states at the start of a cycle.
pub fn support_of(values: &[f64], m: usize) -> BTreeSet<usize> {
    (0..values.len() / m)
        .filter(|i| values[i * m..(i + 1) * m].iter().any(|&v| v > 0.0))
        .collect()
}

#[test]
fn family_reaches_every_phase() {
    let f = Family {
        size: 3,
        weight: (2, 5),
        entries: [(5, 0), (3, 1), (0, 0), (2, 2), (1, 1)],
    };
    let c = compile(&f.source());
    let phases = evaluate_equations(&c.eqs, 15).phases();
    for p in [Phase::Prob, Phase::Action, Phase::Tick] {
        assert!(phases.contains(&p), "{phases:?}");
    }
}
