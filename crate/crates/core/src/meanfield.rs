//! Recurrence equations and their deterministic evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::expr::{Compiled, Expr, Loc, Printer, Var, VarStyle};
use crate::model::{Habitat, HabitatKind};
use crate::rational::Rational;
use crate::states::InitMatrix;
use crate::stt::{matched_share, RowKind, TransitionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Init,
    Prob,
    Action,
    Tick,
    Stalled,
}

impl Phase {
    /// Phase in which rows of `kind` fire; `None` for rows that never move mass.
    pub fn of(kind: RowKind) -> Option<Phase> {
        match kind {
            RowKind::Prob => Some(Phase::Prob),
            RowKind::Go | RowKind::Comm | RowKind::CondComm | RowKind::Free => Some(Phase::Action),
            RowKind::Tick => Some(Phase::Tick),
            RowKind::Nil => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "Init",
            Phase::Prob => "Prob",
            Phase::Action => "Action",
            Phase::Tick => "Tick",
            Phase::Stalled => "Stalled",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "Init" => Phase::Init,
            "Prob" => Phase::Prob,
            "Action" => Phase::Action,
            "Tick" => Phase::Tick,
            "Stalled" => Phase::Stalled,
            other => return Err(format!("unknown phase `{other}`")),
        })
    }
}

/// Chooses the phase of the next step from which states are populated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseClassifier {
    kinds: Vec<RowKind>,
    m: usize,
}

impl PhaseClassifier {
    pub fn new(kinds: Vec<RowKind>, m: usize) -> Self {
        PhaseClassifier { kinds, m }
    }

    fn populated(&self, values: &[f64], i: usize) -> bool {
        values[i * self.m..(i + 1) * self.m].iter().any(|&v| v > 0.0)
    }

    /// Same rule over integer counts.
    pub fn classify_counts(&self, counts: &[u64]) -> Phase {
        self.classify_by(|i| counts[i * self.m..(i + 1) * self.m].iter().any(|&c| c > 0))
    }

    pub fn classify(&self, values: &[f64]) -> Phase {
        self.classify_by(|i| self.populated(values, i))
    }

    fn classify_by(&self, populated: impl Fn(usize) -> bool) -> Phase {
        let mut prob = false;
        let mut action = false;
        let mut ticking = false;
        let mut timed = true;
        for (i, &k) in self.kinds.iter().enumerate() {
            if !populated(i) {
                continue;
            }
            match Phase::of(k) {
                Some(Phase::Prob) => prob = true,
                Some(Phase::Action) => action = true,
                Some(Phase::Tick) => ticking = true,
                _ => continue,
            }
            if k != RowKind::Tick {
                timed = false;
            }
        }
        if prob {
            Phase::Prob
        } else if action {
            Phase::Action
        } else if timed && ticking {
            Phase::Tick
        } else {
            Phase::Stalled
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub state: usize,
    pub loc: usize,
    /// Contribution of each source state, lag-1 variables at absolute locations.
    pub terms: Vec<(usize, Expr)>,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSystem {
    pub schema: u32,
    pub n: usize,
    pub m: usize,
    pub labels: Vec<String>,
    pub terms: Vec<String>,
    pub kinds: Vec<RowKind>,
    pub habitat: Habitat,
    pub params: BTreeMap<String, Rational>,
    pub fingerprint: String,
    /// Base case, state-major.
    pub init: Vec<u64>,
    /// State-major, `equations[i * m + l]`.
    pub equations: Vec<Equation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquationError {
    #[error("dimension mismatch: table is {table_n}x{table_m}, init is {init_n}x{init_m}")]
    Dimensions {
        table_n: usize,
        table_m: usize,
        init_n: usize,
        init_m: usize,
    },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("malformed document: {0}")]
    Json(String),
}

pub fn derive_equations(table: &TransitionTable, init: &InitMatrix) -> Result<EquationSystem, EquationError> {
    if init.states() != table.n || init.locations() != table.m {
        return Err(EquationError::Dimensions {
            table_n: table.n,
            table_m: table.m,
            init_n: init.states(),
            init_m: init.locations(),
        });
    }
    let (n, m) = (table.n, table.m);
    let mut equations = Vec::with_capacity(n * m);
    for i in 0..n {
        for l in 0..m {
            let terms: Vec<(usize, Expr)> = (0..n)
                .filter_map(|k| table.cell(k, i, l).map(|e| (k, e.clone())))
                .collect();
            let rhs = Expr::add(terms.iter().map(|(_, e)| e.clone()).collect()).normalize();
            equations.push(Equation { state: i, loc: l, terms, rhs });
        }
    }
    Ok(EquationSystem {
        schema: crate::SCHEMA_VERSION,
        n,
        m,
        labels: table.labels.clone(),
        terms: table.terms.clone(),
        kinds: table.kinds(),
        habitat: table.habitat.clone(),
        params: table.params.clone(),
        fingerprint: table.fingerprint.clone(),
        init: init.data().to_vec(),
        equations,
    })
}

impl EquationSystem {
    pub fn equation(&self, state: usize, loc: usize) -> &Equation {
        &self.equations[state * self.m + loc]
    }

    pub fn classifier(&self) -> PhaseClassifier {
        PhaseClassifier::new(self.kinds.clone(), self.m)
    }

    pub fn params_f64(&self) -> BTreeMap<String, f64> {
        self.params.iter().map(|(k, v)| (k.clone(), v.to_f64())).collect()
    }

    /// Right-hand side of `(state, loc)` when only rows of `phase` fire.
    pub fn gated_rhs(&self, state: usize, loc: usize, phase: Phase) -> Expr {
        let eq = self.equation(state, loc);
        let mut parts: Vec<Expr> = eq
            .terms
            .iter()
            .filter(|(k, _)| Phase::of(self.kinds[*k]) == Some(phase))
            .map(|(_, e)| e.clone())
            .collect();
        if Phase::of(self.kinds[state]) != Some(phase) {
            parts.push(Expr::var(state, Loc::Abs(loc), 1));
        }
        Expr::add(parts)
    }

    fn compile_phase(&self, phase: Phase, params: &BTreeMap<String, f64>) -> Vec<Compiled> {
        (0..self.n * self.m)
            .map(|c| {
                let e = self.gated_rhs(c / self.m, c % self.m, phase).normalize();
                Compiled::compile(&e, self.m, None, params, &self.habitat)
            })
            .collect()
    }

    /// One gated step without the rounding cleanup applied by evaluation.
    pub fn step_phase(&self, values: &[f64], phase: Phase) -> Vec<f64> {
        self.compile_phase(phase, &self.params_f64())
            .iter()
            .map(|c| c.eval(values))
            .collect()
    }

    /// One step of the full recurrence, every row firing at once.
    pub fn step_ungated(&self, values: &[f64]) -> Vec<f64> {
        let params = self.params_f64();
        self.equations
            .iter()
            .map(|eq| eq.rhs.eval(values, self.m, &params, &self.habitat))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("equation systems serialize")
    }

    pub fn from_json(text: &str) -> Result<EquationSystem, EquationError> {
        let eqs: EquationSystem = serde_json::from_str(text).map_err(|e| EquationError::Json(e.to_string()))?;
        if eqs.schema != crate::SCHEMA_VERSION {
            return Err(EquationError::Schema(eqs.schema));
        }
        if eqs.equations.len() != eqs.n * eqs.m || eqs.init.len() != eqs.n * eqs.m || eqs.habitat.size() != eqs.m {
            return Err(EquationError::Json("inconsistent dimensions".into()));
        }
        Ok(eqs)
    }

    /// Equation text. Translation-invariant ring systems print one pattern per
    /// state over `l`; otherwise one line per location.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# mean-field equations: {} states, {} locations",
            self.n, self.m
        );
        for (i, t) in self.terms.iter().enumerate() {
            let _ = writeln!(out, "# {} = {}", self.labels[i], t);
        }
        let p = Printer {
            labels: &self.labels,
            locations: self.habitat.names(),
            style: VarStyle::Equation,
        };
        for i in 0..self.n {
            match self.relative_pattern(i) {
                Some(e) => {
                    let _ = writeln!(out, "{}(t)@l = {}", self.labels[i], p.print(&e));
                }
                None => {
                    for l in 0..self.m {
                        let _ = writeln!(
                            out,
                            "{}(t)@{} = {}",
                            self.labels[i],
                            self.habitat.name(l),
                            p.print(&self.equation(i, l).rhs)
                        );
                    }
                }
            }
        }
        for i in 0..self.n {
            for l in 0..self.m {
                let v = self.init[i * self.m + l];
                if v != 0 {
                    let _ = writeln!(out, "{}(0)@{} = {}", self.labels[i], self.habitat.name(l), v);
                }
            }
        }
        out
    }

    fn relative_pattern(&self, state: usize) -> Option<Expr> {
        if self.habitat.kind() != HabitatKind::Ring {
            return None;
        }
        let m = self.m as i64;
        let mut pattern: Option<Expr> = None;
        for l in 0..self.m {
            let rel = self.equation(state, l).rhs.map_locs(&|loc| match loc {
                Loc::Abs(a) => {
                    let mut d = (*a as i64 - l as i64).rem_euclid(m);
                    if d > m / 2 {
                        d -= m;
                    }
                    Loc::Rel(d)
                }
                other => other.clone(),
            });
            match &pattern {
                None => pattern = Some(rel),
                Some(p) if *p == rel => {}
                Some(_) => return None,
            }
        }
        pattern
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub phase: Phase,
    /// State-major occupancy, `values[i * m + l]`.
    pub values: Vec<f64>,
}

impl Frame {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<String>,
    pub locations: Vec<String>,
    pub fingerprint: String,
    pub params: BTreeMap<String, Rational>,
    pub frames: Vec<Frame>,
    pub stalled: bool,
}

impl Trajectory {
    pub fn get(&self, frame: usize, state: usize, loc: usize) -> f64 {
        self.frames[frame].values[state * self.m + loc]
    }

    pub fn phases(&self) -> Vec<Phase> {
        self.frames.iter().map(|f| f.phase).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "phase", "state", "location", "value"])?;
        for f in &self.frames {
            for i in 0..self.n {
                for l in 0..self.m {
                    out.write_record([
                        f.step.to_string(),
                        f.phase.to_string(),
                        self.labels[i].clone(),
                        self.locations[l].clone(),
                        f.values[i * self.m + l].to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Trajectory, String> {
        let table = read_table(r, &["step", "phase", "state", "location", "value"])?;
        Ok(Trajectory {
            n: table.labels.len(),
            m: table.locations.len(),
            labels: table.labels,
            locations: table.locations,
            fingerprint: String::new(),
            params: BTreeMap::new(),
            stalled: table.frames.last().is_some_and(|f| f.0 == Some(Phase::Stalled)),
            frames: table
                .frames
                .into_iter()
                .enumerate()
                .map(|(step, (phase, cols))| {
                    Ok(Frame {
                        step,
                        phase: phase.ok_or_else(|| format!("frame {step} has no single phase"))?,
                        values: cols.into_iter().next().unwrap_or_default(),
                    })
                })
                .collect::<Result<_, String>>()?,
        })
    }
}

/// Long-format CSV split into frames, each with one state-major vector per value column.
pub(crate) struct LongTable {
    pub labels: Vec<String>,
    pub locations: Vec<String>,
    pub frames: Vec<(Option<Phase>, Vec<Vec<f64>>)>,
}

/// `(step, phase, state, location, columns)` for one CSV record.
type Record = (usize, Option<Phase>, usize, usize, Vec<f64>);
/// Phase and per-column values of a frame being assembled.
type PartialFrame = (Option<Phase>, Vec<Vec<f64>>);

pub(crate) fn read_table<R: Read>(r: R, header: &[&str]) -> Result<LongTable, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let got: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if got != header {
        return Err(format!("expected columns {}, found {}", header.join(","), got.join(",")));
    }
    let ncols = header.len() - 4;
    let mut labels: Vec<String> = Vec::new();
    let mut locations: Vec<String> = Vec::new();
    let mut rows: Vec<Record> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", line + 2);
        let step: usize = rec[0].parse().map_err(|_| bad("step"))?;
        let phase: Option<Phase> = match &rec[1] {
            "Mixed" => None,
            p => Some(p.parse().map_err(|_| bad("phase"))?),
        };
        let s = match labels.iter().position(|x| x == &rec[2]) {
            Some(p) => p,
            None => {
                labels.push(rec[2].to_string());
                labels.len() - 1
            }
        };
        let l = match locations.iter().position(|x| x == &rec[3]) {
            Some(p) => p,
            None => {
                locations.push(rec[3].to_string());
                locations.len() - 1
            }
        };
        let vals = (0..ncols)
            .map(|c| rec[4 + c].parse::<f64>().map_err(|_| bad(header[4 + c])))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((step, phase, s, l, vals));
    }
    let (n, m) = (labels.len(), locations.len());
    let steps = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut frames: Vec<Option<PartialFrame>> = vec![None; steps];
    let mut seen = vec![0usize; steps];
    for (step, phase, s, l, vals) in rows {
        let f = frames[step].get_or_insert_with(|| (phase, vec![vec![0.0; n * m]; ncols]));
        if f.0 != phase {
            return Err(format!("frame {step} has mixed phases"));
        }
        for (c, v) in vals.into_iter().enumerate() {
            f.1[c][s * m + l] = v;
        }
        seen[step] += 1;
    }
    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| match f {
            Some(f) if seen[i] == n * m => Ok(f),
            _ => Err(format!("frame {i} is incomplete")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LongTable { labels, locations, frames })
}

pub fn evaluate(table: &TransitionTable, init: &InitMatrix, steps: usize) -> Result<Trajectory, EquationError> {
    Ok(evaluate_equations(&derive_equations(table, init)?, steps))
}

/// Gated evaluation: each step fires only the rows of the selected phase and
/// self-loops every other state.
pub fn evaluate_equations(eqs: &EquationSystem, steps: usize) -> Trajectory {
    let params = eqs.params_f64();
    let classifier = eqs.classifier();
    let mut programs: BTreeMap<Phase, Vec<Compiled>> = BTreeMap::new();
    let mut values: Vec<f64> = eqs.init.iter().map(|&v| v as f64).collect();
    let mut frames = vec![Frame {
        step: 0,
        phase: Phase::Init,
        values: values.clone(),
    }];
    let mut stalled = false;
    for step in 1..=steps {
        let phase = classifier.classify(&values);
        if phase == Phase::Stalled {
            frames.push(Frame { step, phase, values: values.clone() });
            stalled = true;
            break;
        }
        let program = programs
            .entry(phase)
            .or_insert_with(|| eqs.compile_phase(phase, &params));
        // Clamping only removes rounding residue from `q - min(q, ..)` terms.
        let next: Vec<f64> = program.iter().map(|c| c.eval(&values).max(0.0)).collect();
        if phase == Phase::Action && next == values {
            frames.push(Frame {
                step,
                phase: Phase::Stalled,
                values: next,
            });
            stalled = true;
            break;
        }
        values = next;
        frames.push(Frame {
            step,
            phase,
            values: values.clone(),
        });
    }
    Trajectory {
        n: eqs.n,
        m: eqs.m,
        labels: eqs.labels.clone(),
        locations: eqs.habitat.names().to_vec(),
        fingerprint: eqs.fingerprint.clone(),
        params: eqs.params.clone(),
        frames,
        stalled,
    }
}

/// Frame 0 and each frame right after a tick, renumbered by tick.
pub fn collapse_ticks(traj: &Trajectory) -> Trajectory {
    let frames = traj
        .frames
        .iter()
        .filter(|f| f.phase == Phase::Init || f.phase == Phase::Tick)
        .enumerate()
        .map(|(t, f)| Frame {
            step: t,
            phase: f.phase,
            values: f.values.clone(),
        })
        .collect();
    Trajectory {
        frames,
        ..traj.clone()
    }
}

/// Expresses `state@loc` after the given phase sequence in terms of the
/// occupancy before it, by substituting gated right-hand sides backwards.
/// Variables at the earliest lag outside `support` are dropped.
pub fn collapse_symbolic(
    eqs: &EquationSystem,
    phases: &[Phase],
    state: usize,
    loc: usize,
    support: Option<&BTreeSet<usize>>,
) -> Expr {
    let mut e = Expr::var(state, Loc::Abs(loc), 0);
    for (depth, &phase) in phases.iter().rev().enumerate() {
        let depth = depth as u32;
        e = e
            .map_vars(&mut |v: &Var| {
                if v.lag != depth {
                    return Expr::Var(v.clone());
                }
                let Loc::Abs(l) = v.loc else {
                    return Expr::Var(v.clone());
                };
                eqs.gated_rhs(v.state, l, phase)
                    .expand_neighbors(&eqs.habitat)
                    .shift_lag(depth)
            })
            .normalize();
    }
    let total = phases.len() as u32;
    if let Some(support) = support {
        e = e
            .map_vars(&mut |v: &Var| {
                if v.lag == total && !support.contains(&v.state) {
                    Expr::zero()
                } else {
                    Expr::Var(v.clone())
                }
            })
            .normalize();
    }
    e
}

/// Matched flow per restricted channel at `loc`: `(channel, input side, output side, min(X, Y))`.
pub fn comm_flows(table: &TransitionTable, values: &[f64], loc: usize) -> Vec<(String, f64, f64, f64)> {
    let params: BTreeMap<String, f64> = table.params.iter().map(|(k, v)| (k.clone(), v.to_f64())).collect();
    let side = |states: &[usize], dir| -> f64 {
        states
            .iter()
            .map(|&k| {
                let g = table.groups.iter().find(|g| g.side(dir).contains(&k)).expect("member");
                Compiled::compile(&matched_share(k, g, dir), table.m, Some(loc), &params, &table.habitat)
                    .eval(values)
            })
            .sum()
    };
    let count = |states: &[usize]| -> f64 { states.iter().map(|&k| values[k * table.m + loc]).sum() };
    table
        .groups
        .iter()
        .map(|g| {
            (
                g.channel.clone(),
                side(&g.inputs, crate::model::Direction::In),
                side(&g.outputs, crate::model::Direction::Out),
                count(&g.inputs).min(count(&g.outputs)),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, validate};
    use crate::states::{build_init_matrix, enumerate_states};
    use crate::stt::build_stt;

    const RING: &str = "
        species s {
            param p = 1/2;
            process P0 = pchoice over neighbors { go it . tick . P1 };
            process P1 = pchoice { p: tick . par(P0, P0); 1-p: tick . par(P0, P0, P0) };
        }
        habitat ring(4);
        system { P0 @ 1 * 2; P0 @ 2 * 1; }
    ";

    fn ring() -> (TransitionTable, InitMatrix) {
        let m = validate(&parse(RING).unwrap()).unwrap();
        let space = enumerate_states(&m).unwrap();
        (build_stt(&m, &space), build_init_matrix(&m, &space))
    }

    #[test]
    fn ring_equations_print_as_patterns() {
        let (t, init) = ring();
        let text = derive_equations(&t, &init).unwrap().render();
        assert!(text.contains("R1(t)@l = 2*R6(t-1)@l + 3*R7(t-1)@l"), "{text}");
        assert!(text.contains("R4(t)@l = R2(t-1)@(l-1) + R3(t-1)@(l+1)"), "{text}");
        assert!(text.contains("R1(0)@1 = 2"), "{text}");
    }

    #[test]
    fn ring_trajectory_frames() {
        let (t, init) = ring();
        let traj = evaluate(&t, &init, 5).unwrap();
        let phases: Vec<Phase> = traj.phases();
        use Phase::*;
        assert_eq!(phases, vec![Init, Prob, Action, Tick, Prob, Tick]);
        let r4: Vec<f64> = (0..4).map(|l| traj.get(2, 3, l)).collect();
        assert_eq!(r4, vec![0.5, 1.0, 0.5, 1.0]);
        assert_eq!(traj.frames[5].total(), 7.5);
    }

    #[test]
    fn zero_steps_is_init() {
        let (t, init) = ring();
        let traj = evaluate(&t, &init, 0).unwrap();
        assert_eq!(traj.frames.len(), 1);
        assert_eq!(traj.frames[0].values, init.to_f64());
    }

    #[test]
    fn dimension_mismatch() {
        let (t, _) = ring();
        assert!(matches!(
            derive_equations(&t, &InitMatrix::zeros(3, 4)),
            Err(EquationError::Dimensions { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let (t, init) = ring();
        let traj = evaluate(&t, &init, 5).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back.frames, traj.frames);
        assert_eq!(back.labels, traj.labels);
        let empty = Trajectory { frames: vec![], ..traj };
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,phase,state,location,value\n");
    }

    #[test]
    fn stalls_when_partners_are_missing() {
        let m = validate(
            &parse(
                "species a { process A = in c . tick . A; }
                 habitat ring(1);
                 system { A @ 1 * 2; } restrict { c }",
            )
            .unwrap(),
        )
        .unwrap();
        let space = enumerate_states(&m).unwrap();
        let traj = evaluate(&build_stt(&m, &space), &build_init_matrix(&m, &space), 10).unwrap();
        assert!(traj.stalled);
        assert_eq!(traj.frames.len(), 2);
        assert_eq!(traj.frames[1].phase, Phase::Stalled);
    }

    #[test]
    fn collapse_keeps_tick_frames() {
        let (t, init) = ring();
        let traj = evaluate(&t, &init, 10).unwrap();
        let c = collapse_ticks(&traj);
        assert_eq!(c.frames.len(), 5);
        assert_eq!(c.frames[1].total(), 3.0);
        assert_eq!(c.frames[2].total(), 7.5);
        assert_eq!(c.frames[2].step, 2);
    }
}
