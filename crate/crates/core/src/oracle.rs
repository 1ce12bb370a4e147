//! Individual-based Monte Carlo simulation over per-cell counts.
//!
//! Replica `r` of a run seeded with `s` draws from ChaCha20 seeded with
//! `seed_from_u64(s)` on stream `r`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;

use crate::dsl::ValidatedModel;
use crate::meanfield::{read_table, Phase, PhaseClassifier, Trajectory};
use crate::model::{Direction, Habitat};
use crate::states::{build_init_matrix, Dest, StateSpace, Targets, Transition};
use crate::stt::RowKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub replicas: usize,
    /// Multiplies every initial count.
    pub scale: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            steps: 10,
            replicas: 1,
            scale: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("replicas must be at least 1")]
    NoReplicas,
    #[error("count overflow at step {0}")]
    Overflow(usize),
    #[error("parameter evaluation failed: {0}")]
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountFrame {
    pub step: usize,
    pub phase: Phase,
    /// State-major, `counts[i * m + l]`.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountTrajectory {
    pub n: usize,
    pub m: usize,
    pub frames: Vec<CountFrame>,
    pub stalled: bool,
}

impl CountTrajectory {
    pub fn total(&self, frame: usize) -> u64 {
        self.frames[frame].counts.iter().sum()
    }
}

#[derive(Debug, Clone)]
enum Move {
    Prob(Vec<(f64, Dest, Targets)>),
    Go(Dest, Targets),
    Tick(Targets),
    Free(Targets),
    Matched { then: Targets, otherwise: Option<Targets> },
    Nil,
}

/// Precomputed simulation plan for one model.
#[derive(Debug, Clone)]
pub struct Simulator {
    n: usize,
    m: usize,
    habitat: Habitat,
    moves: Vec<Move>,
    /// Per restricted channel: (input states, output states).
    groups: Vec<(Vec<usize>, Vec<usize>)>,
    classifier: PhaseClassifier,
    init: Vec<u64>,
}

fn kind_of(t: &Transition<Targets>) -> RowKind {
    match t {
        Transition::Prob(_) => RowKind::Prob,
        Transition::Go(..) => RowKind::Go,
        Transition::Tick(_) => RowKind::Tick,
        Transition::Free { .. } => RowKind::Free,
        Transition::Restricted { .. } => RowKind::Comm,
        Transition::CondComm { .. } => RowKind::CondComm,
        Transition::Nil => RowKind::Nil,
    }
}

impl Simulator {
    pub fn new(model: &ValidatedModel, space: &StateSpace) -> Result<Simulator, OracleError> {
        let n = space.len();
        let habitat = model.habitat().clone();
        let m = habitat.size();
        let mut channels: Vec<String> = Vec::new();
        let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        let mut moves = Vec::with_capacity(n);
        for i in 0..n {
            let t = space.transition(i);
            let mut group_of = |channel: &String, dir: Direction| {
                let g = match channels.iter().position(|c| c == channel) {
                    Some(g) => g,
                    None => {
                        channels.push(channel.clone());
                        groups.push((Vec::new(), Vec::new()));
                        groups.len() - 1
                    }
                };
                match dir {
                    Direction::In => groups[g].0.push(i),
                    Direction::Out => groups[g].1.push(i),
                }
                g
            };
            let mv = match t {
                Transition::Prob(outcomes) => {
                    let mut branches = Vec::new();
                    for o in outcomes {
                        let w = o
                            .weight
                            .eval(model.params())
                            .map_err(|e| OracleError::Param(e.to_string()))?;
                        branches.push((w.to_f64(), o.dest.clone(), o.targets.clone()));
                    }
                    Move::Prob(branches)
                }
                Transition::Go(d, t) => Move::Go(d.clone(), t.clone()),
                Transition::Tick(t) => Move::Tick(t.clone()),
                Transition::Free { cont, .. } => Move::Free(cont.clone()),
                Transition::Restricted { dir, channel, cont } => {
                    group_of(channel, *dir);
                    Move::Matched {
                        then: cont.clone(),
                        otherwise: None,
                    }
                }
                Transition::CondComm { dir, channel, then, otherwise } => {
                    group_of(channel, *dir);
                    Move::Matched {
                        then: then.clone(),
                        otherwise: Some(otherwise.clone()),
                    }
                }
                Transition::Nil => Move::Nil,
            };
            moves.push(mv);
        }
        let kinds = (0..n).map(|i| kind_of(space.transition(i))).collect();
        Ok(Simulator {
            n,
            m,
            habitat,
            moves,
            groups,
            classifier: PhaseClassifier::new(kinds, m),
            init: build_init_matrix(model, space).data().to_vec(),
        })
    }

    fn active(&self, phase: Phase, i: usize) -> bool {
        let kind = match &self.moves[i] {
            Move::Prob(_) => RowKind::Prob,
            Move::Go(..) => RowKind::Go,
            Move::Tick(_) => RowKind::Tick,
            Move::Free(_) => RowKind::Free,
            Move::Matched { .. } => RowKind::Comm,
            Move::Nil => RowKind::Nil,
        };
        Phase::of(kind) == Some(phase)
    }

    pub fn run(&self, config: &RunConfig, replica: u64) -> Result<CountTrajectory, OracleError> {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(replica);
        let mut counts: Vec<u64> = self
            .init
            .iter()
            .map(|&c| c.checked_mul(config.scale).ok_or(OracleError::Overflow(0)))
            .collect::<Result<_, _>>()?;
        let mut frames = vec![CountFrame {
            step: 0,
            phase: Phase::Init,
            counts: counts.clone(),
        }];
        let mut stalled = false;
        for step in 1..=config.steps {
            let phase = self.classifier.classify_counts(&counts);
            if phase == Phase::Stalled {
                frames.push(CountFrame { step, phase, counts: counts.clone() });
                stalled = true;
                break;
            }
            let next = self.step(phase, &counts, &mut rng).ok_or(OracleError::Overflow(step))?;
            if phase == Phase::Action && next == counts {
                frames.push(CountFrame {
                    step,
                    phase: Phase::Stalled,
                    counts: next,
                });
                stalled = true;
                break;
            }
            counts = next;
            frames.push(CountFrame {
                step,
                phase,
                counts: counts.clone(),
            });
        }
        Ok(CountTrajectory {
            n: self.n,
            m: self.m,
            frames,
            stalled,
        })
    }

    fn step(&self, phase: Phase, counts: &[u64], rng: &mut ChaCha20Rng) -> Option<Vec<u64>> {
        let m = self.m;
        let mut next = vec![0u64; counts.len()];
        let add = |next: &mut Vec<u64>, targets: &Targets, loc: usize, c: u64| -> Option<()> {
            for &(t, mult) in targets {
                let cell = &mut next[t * m + loc];
                *cell = cell.checked_add(c.checked_mul(mult)?)?;
            }
            Some(())
        };
        // Successful performers per (state, loc) for matched moves.
        let mut successes = vec![0u64; counts.len()];
        if phase == Phase::Action {
            for (inputs, outputs) in &self.groups {
                for l in 0..m {
                    let side = |states: &[usize]| states.iter().map(|&s| counts[s * m + l]).sum::<u64>();
                    let pairs = side(inputs).min(side(outputs));
                    for states in [inputs, outputs] {
                        let drawn = multivariate_hypergeometric(
                            &states.iter().map(|&s| counts[s * m + l]).collect::<Vec<_>>(),
                            pairs,
                            rng,
                        );
                        for (&s, d) in states.iter().zip(drawn) {
                            successes[s * m + l] = d;
                        }
                    }
                }
            }
        }
        for i in 0..self.n {
            for l in 0..m {
                let c = counts[i * m + l];
                if c == 0 {
                    continue;
                }
                if !self.active(phase, i) {
                    let cell = &mut next[i * m + l];
                    *cell = cell.checked_add(c)?;
                    continue;
                }
                match &self.moves[i] {
                    Move::Prob(branches) => {
                        let weights: Vec<f64> = branches.iter().map(|b| b.0).collect();
                        for ((_, dest, targets), k) in branches.iter().zip(multinomial(c, &weights, rng)) {
                            if k == 0 {
                                continue;
                            }
                            match dest {
                                Dest::Neighbors => {
                                    let nb = &self.habitat.adjacency()[l];
                                    let w = vec![1.0; nb.len()];
                                    for (&to, kk) in nb.iter().zip(multinomial(k, &w, rng)) {
                                        add(&mut next, targets, to, kk)?;
                                    }
                                }
                                d => add(&mut next, targets, self.resolve(d, l), k)?,
                            }
                        }
                    }
                    Move::Go(dest, targets) => add(&mut next, targets, self.resolve(dest, l), c)?,
                    Move::Tick(targets) | Move::Free(targets) => add(&mut next, targets, l, c)?,
                    Move::Matched { then, otherwise, .. } => {
                        let ok = successes[i * m + l];
                        add(&mut next, then, l, ok)?;
                        match otherwise {
                            Some(t) => add(&mut next, t, l, c - ok)?,
                            None => add(&mut next, &vec![(i, 1)], l, c - ok)?,
                        }
                    }
                    Move::Nil => unreachable!("nil states are never active"),
                }
            }
        }
        Some(next)
    }

    fn resolve(&self, dest: &Dest, loc: usize) -> usize {
        match dest {
            Dest::Here => loc,
            Dest::Offset(k) => self.habitat.shift(loc, *k),
            Dest::Abs(a) => *a,
            Dest::Neighbors => unreachable!("neighbor destinations are sampled"),
        }
    }
}

/// Counts per category from `n` independent draws, by sequential binomials.
fn multinomial<R: Rng>(n: u64, weights: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; weights.len()];
    let mut left = n;
    let mut mass: f64 = weights.iter().sum();
    for (i, &w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == weights.len() || w >= mass {
            out[i] = left;
            break;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, p).expect("valid binomial").sample(rng);
        out[i] = k;
        left -= k;
        mass -= w;
    }
    out
}

/// Successes per category when `draws` items are taken without replacement.
fn multivariate_hypergeometric<R: Rng>(counts: &[u64], draws: u64, rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; counts.len()];
    let mut population: u64 = counts.iter().sum();
    let mut left = draws.min(population);
    for (i, &c) in counts.iter().enumerate() {
        if left == 0 {
            break;
        }
        let k = if c == population {
            left
        } else if c == 0 {
            0
        } else {
            Hypergeometric::new(population, c, left).expect("valid hypergeometric").sample(rng)
        };
        out[i] = k;
        left -= k;
        population -= c;
    }
    out
}

pub fn simulate_once(
    model: &ValidatedModel,
    space: &StateSpace,
    config: &RunConfig,
) -> Result<CountTrajectory, OracleError> {
    Simulator::new(model, space)?.run(config, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFrame {
    pub step: usize,
    /// `None` when replicas disagree on the phase.
    pub phase: Option<Phase>,
    /// Replicas that reached this frame.
    pub replicas: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<String>,
    pub locations: Vec<String>,
    pub replicas: usize,
    pub frames: Vec<EnsembleFrame>,
}

pub fn ensemble(model: &ValidatedModel, space: &StateSpace, config: &RunConfig) -> Result<EnsembleStats, OracleError> {
    if config.replicas == 0 {
        return Err(OracleError::NoReplicas);
    }
    let sim = Simulator::new(model, space)?;
    let runs: Vec<CountTrajectory> = (0..config.replicas as u64)
        .into_par_iter()
        .map(|r| sim.run(config, r))
        .collect::<Result<_, _>>()?;
    let len = runs.iter().map(|r| r.frames.len()).max().unwrap_or(0);
    let cells = sim.n * sim.m;
    let mut frames = Vec::with_capacity(len);
    for f in 0..len {
        let present: Vec<&CountFrame> = runs.iter().filter_map(|r| r.frames.get(f)).collect();
        let k = present.len();
        let first = present[0].phase;
        let phase = present.iter().all(|p| p.phase == first).then_some(first);
        let mut mean = vec![0.0; cells];
        for p in &present {
            for (acc, &c) in mean.iter_mut().zip(&p.counts) {
                *acc += c as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= k as f64);
        let mut std = vec![0.0; cells];
        if k > 1 {
            for p in &present {
                for ((acc, &c), mu) in std.iter_mut().zip(&p.counts).zip(&mean) {
                    *acc += (c as f64 - mu).powi(2);
                }
            }
            std.iter_mut().for_each(|v| *v = (*v / (k - 1) as f64).sqrt());
        }
        frames.push(EnsembleFrame {
            step: f,
            phase,
            replicas: k,
            mean,
            std,
        });
    }
    Ok(EnsembleStats {
        n: sim.n,
        m: sim.m,
        labels: space.labels(),
        locations: sim.habitat.names().to_vec(),
        replicas: config.replicas,
        frames,
    })
}

const ENSEMBLE_HEADER: [&str; 7] = ["step", "phase", "state", "location", "replica_mean", "replica_std", "replicas"];

impl EnsembleStats {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(ENSEMBLE_HEADER)?;
        for f in &self.frames {
            let phase = f.phase.map_or("Mixed".to_string(), |p| p.to_string());
            for i in 0..self.n {
                for l in 0..self.m {
                    let c = i * self.m + l;
                    out.write_record([
                        f.step.to_string(),
                        phase.clone(),
                        self.labels[i].clone(),
                        self.locations[l].clone(),
                        f.mean[c].to_string(),
                        f.std[c].to_string(),
                        f.replicas.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<EnsembleStats, String> {
        let t = read_table(r, &ENSEMBLE_HEADER)?;
        let frames: Vec<EnsembleFrame> = t
            .frames
            .into_iter()
            .enumerate()
            .map(|(step, (phase, mut cols))| {
                let replicas = cols[2].first().copied().unwrap_or(0.0) as usize;
                let std = std::mem::take(&mut cols[1]);
                EnsembleFrame {
                    step,
                    phase,
                    replicas,
                    mean: std::mem::take(&mut cols[0]),
                    std,
                }
            })
            .collect();
        Ok(EnsembleStats {
            n: t.labels.len(),
            m: t.locations.len(),
            labels: t.labels,
            locations: t.locations,
            replicas: frames.first().map_or(0, |f| f.replicas),
            frames,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// `(step, relative L1 error)` for every frame present on both sides.
    pub errors: Vec<(usize, f64)>,
    pub max_error: f64,
    pub max_step: usize,
    /// Steps whose phases differ, or present on one side only.
    pub misaligned: Vec<usize>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frames compared: {}", self.errors.len());
        let _ = writeln!(out, "max relative L1 error: {} (step {})", self.max_error, self.max_step);
        if self.misaligned.is_empty() {
            out.push_str("misaligned frames: none\n");
        } else {
            let steps: Vec<String> = self.misaligned.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "misaligned frames: {}", steps.join(", "));
        }
        out.push_str("step,rel_l1\n");
        for (s, e) in &self.errors {
            let _ = writeln!(out, "{s},{e}");
        }
        out
    }
}

/// Per-frame `sum |mf - mean| / sum mf`, with phase alignment checked.
pub fn compare(mf: &Trajectory, ens: &EnsembleStats) -> Result<CompareReport, String> {
    if mf.n != ens.n || mf.m != ens.m {
        return Err(format!(
            "shape mismatch: mean-field is {}x{}, ensemble is {}x{}",
            mf.n, mf.m, ens.n, ens.m
        ));
    }
    let mut errors = Vec::new();
    let mut misaligned = Vec::new();
    for (i, f) in mf.frames.iter().enumerate() {
        let Some(e) = ens.frames.get(i) else {
            misaligned.push(i);
            continue;
        };
        if e.phase != Some(f.phase) {
            misaligned.push(i);
        }
        let diff: f64 = f.values.iter().zip(&e.mean).map(|(a, b)| (a - b).abs()).sum();
        let total = f.total();
        let err = if total > 0.0 {
            diff / total
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        errors.push((i, err));
    }
    misaligned.extend(mf.frames.len()..ens.frames.len());
    let (max_step, max_error) = errors
        .iter()
        .copied()
        .fold((0, 0.0), |acc, (s, e)| if e > acc.1 { (s, e) } else { acc });
    Ok(CompareReport {
        errors,
        max_error,
        max_step,
        misaligned,
    })
}

/// Ensemble view of a deterministic trajectory, for self-comparison.
pub fn as_ensemble(traj: &Trajectory) -> EnsembleStats {
    EnsembleStats {
        n: traj.n,
        m: traj.m,
        labels: traj.labels.clone(),
        locations: traj.locations.clone(),
        replicas: 1,
        frames: traj
            .frames
            .iter()
            .map(|f| EnsembleFrame {
                step: f.step,
                phase: Some(f.phase),
                replicas: 1,
                mean: f.values.clone(),
                std: vec![0.0; f.values.len()],
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, validate};
    use crate::meanfield::evaluate;
    use crate::states::enumerate_states;
    use crate::stt::build_stt;

    fn ring(p: &str) -> (ValidatedModel, StateSpace) {
        // Probability-zero branches are rejected, so p = 1 keeps only the first branch.
        let offspring = if p == "1" {
            "1: tick . par(P0, P0)".to_string()
        } else {
            format!("{p}: tick . par(P0, P0); 1-{p}: tick . par(P0, P0, P0)")
        };
        let src = format!(
            "species s {{
                process P0 = pchoice over neighbors {{ go it . tick . P1 }};
                process P1 = pchoice {{ {offspring} }};
            }}
            habitat ring(4);
            system {{ P0 @ 1 * 2; P0 @ 2 * 1; }}"
        );
        let m = validate(&parse(&src).unwrap()).unwrap();
        let s = enumerate_states(&m).unwrap();
        (m, s)
    }

    #[test]
    fn prob_step_partitions_population() {
        let (m, s) = ring("1/2");
        let t = simulate_once(&m, &s, &RunConfig { steps: 1, ..Default::default() }).unwrap();
        let c = &t.frames[1].counts;
        let r2: u64 = c[4..8].iter().sum();
        let r3: u64 = c[8..12].iter().sum();
        assert_eq!(r2 + r3, 3);
    }

    #[test]
    fn certain_branch_doubles() {
        let (m, s) = ring("1");
        for seed in 0..5 {
            let t = simulate_once(&m, &s, &RunConfig { seed, steps: 5, ..Default::default() }).unwrap();
            assert_eq!(t.total(5), 6);
        }
    }

    #[test]
    fn matching_is_exact() {
        let m = validate(
            &parse(
                "species a { process A = out c . tick . A; process B = in c . tick . B; }
                 habitat ring(1);
                 system { A @ 1 * 5; B @ 1 * 3; } restrict { c }",
            )
            .unwrap(),
        )
        .unwrap();
        let s = enumerate_states(&m).unwrap();
        for seed in 0..20 {
            let t = simulate_once(&m, &s, &RunConfig { seed, steps: 1, ..Default::default() }).unwrap();
            // States A, B, tick.A, tick.B.
            assert_eq!(t.frames[1].counts, vec![2, 0, 3, 3]);
        }
    }

    #[test]
    fn single_replica_has_zero_std() {
        let (m, s) = ring("1/2");
        let e = ensemble(&m, &s, &RunConfig { seed: 3, steps: 5, replicas: 1, scale: 1 }).unwrap();
        let one = simulate_once(&m, &s, &RunConfig { seed: 3, steps: 5, replicas: 1, scale: 1 }).unwrap();
        for (f, c) in e.frames.iter().zip(&one.frames) {
            assert!(f.std.iter().all(|&v| v == 0.0));
            let counts: Vec<f64> = c.counts.iter().map(|&v| v as f64).collect();
            assert_eq!(f.mean, counts);
        }
    }

    #[test]
    fn self_compare_is_zero() {
        let (m, s) = ring("1/2");
        let mf = evaluate(&build_stt(&m, &s), &build_init_matrix(&m, &s), 10).unwrap();
        let r = compare(&mf, &as_ensemble(&mf)).unwrap();
        assert_eq!(r.max_error, 0.0);
        assert!(r.misaligned.is_empty());
    }

    #[test]
    fn ensemble_csv_round_trip() {
        let (m, s) = ring("1/2");
        let e = ensemble(&m, &s, &RunConfig { seed: 1, steps: 5, replicas: 4, scale: 2 }).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        assert_eq!(EnsembleStats::read_csv(&buf[..]).unwrap(), e);
    }
}
