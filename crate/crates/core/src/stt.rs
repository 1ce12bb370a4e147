//! State-transition table: the mean one-step flow between (state, location) cells.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::dsl::ValidatedModel;
use crate::expr::{Expr, Loc, Printer, VarStyle};
use crate::model::{Direction, Habitat, HabitatKind, ProbExpr};
use crate::rational::Rational;
use crate::states::{Dest, StateSpace, Targets, Transition};

/// Expected number of `q` tagged performers matched when `x` performers share `y` partners.
pub fn comm_yield(q: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        q.min(q * y / x)
    }
}

pub fn comm_yield_exact(q: &Rational, x: &Rational, y: &Rational) -> Rational {
    if x.is_zero() {
        return Rational::zero();
    }
    let share = &(q * y) * &x.recip();
    if &share < q {
        share
    } else {
        q.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RowKind {
    Prob,
    Go,
    Tick,
    /// Prefix on a restricted channel.
    Comm,
    CondComm,
    /// Prefix on an unrestricted channel.
    Free,
    Nil,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowEntry {
    pub target: usize,
    pub dest: Dest,
    /// In terms of lag-1 variables at `Loc::Rel(0)`, the source location.
    pub amount: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub source: usize,
    pub kind: RowKind,
    pub label: String,
    pub entries: Vec<RowEntry>,
}

/// States performing each side of a restricted channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGroup {
    pub channel: String,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl CommGroup {
    pub fn side(&self, dir: Direction) -> &[usize] {
        match dir {
            Direction::In => &self.inputs,
            Direction::Out => &self.outputs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub n: usize,
    pub m: usize,
    pub habitat: Habitat,
    pub labels: Vec<String>,
    pub terms: Vec<String>,
    pub params: BTreeMap<String, Rational>,
    pub fingerprint: String,
    pub rows: Vec<Row>,
    pub groups: Vec<CommGroup>,
    pub warnings: Vec<String>,
    /// Per target location: `(source, target) -> expression` over absolute locations.
    pub cells: Vec<BTreeMap<(usize, usize), Expr>>,
}

impl TransitionTable {
    pub fn cell(&self, source: usize, target: usize, loc: usize) -> Option<&Expr> {
        self.cells[loc].get(&(source, target))
    }

    pub fn kinds(&self) -> Vec<RowKind> {
        self.rows.iter().map(|r| r.kind).collect()
    }

    pub fn group(&self, channel: &str) -> Option<&CommGroup> {
        self.groups.iter().find(|g| g.channel == channel)
    }

    /// Table in row form, one line per source state, relocations written `@(l+k)`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let kind = match self.habitat.kind() {
            HabitatKind::Ring => "ring",
            HabitatKind::Graph => "graph",
        };
        let _ = writeln!(
            out,
            "# state-transition table: {} states, {} locations ({kind})",
            self.n, self.m
        );
        for (i, t) in self.terms.iter().enumerate() {
            let _ = writeln!(out, "# {} = {}", self.labels[i], t);
        }
        for row in &self.rows {
            let printer = Printer {
                labels: &self.labels,
                locations: self.habitat.names(),
                style: VarStyle::Row { source: row.source },
            };
            let cells: Vec<String> = row
                .entries
                .iter()
                .map(|e| {
                    let amount = match &e.dest {
                        Dest::Here => printer.print(&e.amount),
                        Dest::Offset(k) => format!("{}@{}", paren(printer.print(&e.amount)), offset_label(*k)),
                        Dest::Abs(a) => format!("{}@{}", paren(printer.print(&e.amount)), self.habitat.name(*a)),
                        Dest::Neighbors => printer.print(&dispersal(&e.amount, Loc::Rel(0))),
                    };
                    format!("{}: {}", self.labels[e.target], amount)
                })
                .collect();
            let _ = writeln!(
                out,
                "{} [{}] -> {}",
                self.labels[row.source],
                row.label,
                cells.join("; ")
            );
        }
        out
    }
}

fn paren(s: String) -> String {
    if s.contains(' ') || s.contains('*') {
        format!("({s})")
    } else {
        s
    }
}

fn offset_label(k: i64) -> String {
    match k {
        0 => "l".into(),
        k if k > 0 => format!("(l+{k})"),
        k => format!("(l-{})", -k),
    }
}

/// Mass arriving at `center` from neighbors that disperse `amount` uniformly.
fn dispersal(amount: &Expr, center: Loc) -> Expr {
    Expr::NeighborSum {
        center,
        body: Box::new(Expr::mul(vec![
            Expr::InvDegree(Loc::Bound),
            amount.map_locs(&|l| match l {
                Loc::Rel(0) => Loc::Bound,
                other => other.clone(),
            }),
        ])),
    }
}

pub fn prob_to_expr(p: &ProbExpr) -> Expr {
    let mut terms = vec![Expr::Const(p.constant.clone())];
    for (name, coef) in &p.params {
        terms.push(Expr::mul(vec![Expr::Const(coef.clone()), Expr::Param(name.clone())]));
    }
    Expr::add(terms).normalize()
}

fn q(state: usize) -> Expr {
    Expr::var(state, Loc::Rel(0), 1)
}

fn side_sum(states: &[usize]) -> Expr {
    Expr::add(states.iter().map(|&s| q(s)).collect())
}

fn scaled(c: u64, e: &Expr) -> Expr {
    if c == 1 {
        e.clone()
    } else {
        Expr::mul(vec![Expr::Const(Rational::from(c as i64)), e.clone()])
    }
}

fn comm_groups(space: &StateSpace) -> Vec<CommGroup> {
    let mut groups: Vec<CommGroup> = Vec::new();
    for i in 0..space.len() {
        let (dir, channel) = match space.transition(i) {
            Transition::Restricted { dir, channel, .. } | Transition::CondComm { dir, channel, .. } => {
                (*dir, channel)
            }
            _ => continue,
        };
        let pos = match groups.iter().position(|g| &g.channel == channel) {
            Some(p) => p,
            None => {
                groups.push(CommGroup {
                    channel: channel.clone(),
                    inputs: Vec::new(),
                    outputs: Vec::new(),
                });
                groups.len() - 1
            }
        };
        match dir {
            Direction::In => groups[pos].inputs.push(i),
            Direction::Out => groups[pos].outputs.push(i),
        }
    }
    groups
}

/// `min(q, q*Y/X)` for a performer of `dir` on `group`'s channel.
pub fn matched_share(source: usize, group: &CommGroup, dir: Direction) -> Expr {
    let x = side_sum(group.side(dir));
    let y = side_sum(group.side(dir.complement()));
    Expr::min(q(source), Expr::div(Expr::mul(vec![q(source), y]), x)).normalize()
}

fn row_for(source: usize, t: &Transition<Targets>, groups: &[CommGroup]) -> Row {
    let qs = q(source);
    let mut entries = Vec::new();
    let mut push = |targets: &Targets, dest: &Dest, amount: &Expr| {
        for &(target, c) in targets {
            entries.push(RowEntry {
                target,
                dest: dest.clone(),
                amount: scaled(c, amount).normalize(),
            });
        }
    };
    let (kind, label) = match t {
        Transition::Prob(outcomes) => {
            for o in outcomes {
                let amount = Expr::mul(vec![prob_to_expr(&o.weight), qs.clone()]);
                push(&o.targets, &o.dest, &amount);
            }
            (RowKind::Prob, "prob".to_string())
        }
        Transition::Go(dest, targets) => {
            push(targets, dest, &qs);
            (RowKind::Go, "go".to_string())
        }
        Transition::Tick(targets) => {
            push(targets, &Dest::Here, &qs);
            (RowKind::Tick, "tick".to_string())
        }
        Transition::Free { dir, channel, cont } => {
            push(cont, &Dest::Here, &qs);
            (RowKind::Free, format!("{dir} {channel}"))
        }
        Transition::Restricted { dir, channel, cont } => {
            let g = groups.iter().find(|g| &g.channel == channel).expect("group exists");
            let matched = matched_share(source, g, *dir);
            push(cont, &Dest::Here, &matched);
            push(&vec![(source, 1)], &Dest::Here, &Expr::sub(qs.clone(), matched));
            (RowKind::Comm, format!("{dir} {channel}"))
        }
        Transition::CondComm { dir, channel, then, otherwise } => {
            let g = groups.iter().find(|g| &g.channel == channel).expect("group exists");
            let matched = matched_share(source, g, *dir);
            push(then, &Dest::Here, &matched);
            push(otherwise, &Dest::Here, &Expr::sub(qs.clone(), matched));
            (RowKind::CondComm, format!("{dir} {channel}?"))
        }
        Transition::Nil => {
            push(&vec![(source, 1)], &Dest::Here, &qs);
            (RowKind::Nil, "nil".to_string())
        }
    };
    entries.retain(|e| !e.amount.is_zero());
    Row {
        source,
        kind,
        label,
        entries,
    }
}

/// Builds row patterns and materializes them over every location.
pub fn build_stt(model: &ValidatedModel, space: &StateSpace) -> TransitionTable {
    let habitat = model.habitat().clone();
    let m = habitat.size();
    let n = space.len();
    let groups = comm_groups(space);
    let mut warnings = Vec::new();
    for g in &groups {
        if g.inputs.is_empty() || g.outputs.is_empty() {
            warnings.push(format!(
                "channel `{}` has performers on one side only; matched shares are zero",
                g.channel
            ));
        }
    }
    let rows: Vec<Row> = (0..n).map(|i| row_for(i, space.transition(i), &groups)).collect();

    let mut contributions: Vec<BTreeMap<(usize, usize), Vec<Expr>>> = vec![BTreeMap::new(); m];
    for row in &rows {
        for e in &row.entries {
            let key = (row.source, e.target);
            if e.dest == Dest::Neighbors {
                for (l, cell) in contributions.iter_mut().enumerate() {
                    if !habitat.adjacency()[l].is_empty() {
                        cell.entry(key).or_default().push(dispersal(&e.amount, Loc::Abs(l)));
                    }
                }
                continue;
            }
            for l in 0..m {
                let at = |loc: &Loc| match loc {
                    Loc::Rel(d) => Loc::Abs(habitat.shift(l, *d)),
                    other => other.clone(),
                };
                let target_loc = match &e.dest {
                    Dest::Here => l,
                    Dest::Offset(k) => habitat.shift(l, *k),
                    Dest::Abs(a) => *a,
                    Dest::Neighbors => unreachable!(),
                };
                contributions[target_loc]
                    .entry(key)
                    .or_default()
                    .push(e.amount.map_locs(&at));
            }
        }
    }
    let cells = contributions
        .into_iter()
        .map(|cell| {
            cell.into_iter()
                .map(|(k, parts)| (k, Expr::add(parts).normalize()))
                .filter(|(_, e)| !e.is_zero())
                .collect()
        })
        .collect();

    TransitionTable {
        n,
        m,
        habitat,
        labels: space.labels(),
        terms: (0..n).map(|i| space.state(i).to_string()).collect(),
        params: model.params().clone(),
        fingerprint: model.fingerprint(),
        rows,
        groups,
        warnings,
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassViolation {
    pub source: usize,
    pub label: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MassReport {
    pub rows_checked: usize,
    pub violations: Vec<MassViolation>,
}

impl MassReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits that every row redistributes exactly the mass its transition implies.
pub fn row_mass_check(table: &TransitionTable, space: &StateSpace) -> MassReport {
    let mut report = MassReport::default();
    let size = |t: &Targets| t.iter().map(|&(_, c)| c).sum::<u64>();
    for row in &table.rows {
        let k = row.source;
        let qk = q(k);
        let expected = match space.transition(k) {
            Transition::Prob(outcomes) => Expr::add(
                outcomes
                    .iter()
                    .map(|o| Expr::mul(vec![prob_to_expr(&o.weight), scaled(size(&o.targets), &qk)]))
                    .collect(),
            ),
            Transition::Go(_, t) | Transition::Tick(t) | Transition::Free { cont: t, .. } => {
                scaled(size(t), &qk)
            }
            Transition::Restricted { dir, channel, cont } => {
                let m = matched_share(k, table.group(channel).expect("group"), *dir);
                Expr::add(vec![scaled(size(cont), &m), Expr::sub(qk.clone(), m)])
            }
            Transition::CondComm { dir, channel, then, otherwise } => {
                let m = matched_share(k, table.group(channel).expect("group"), *dir);
                Expr::add(vec![
                    scaled(size(then), &m),
                    scaled(size(otherwise), &Expr::sub(qk.clone(), m)),
                ])
            }
            Transition::Nil => qk.clone(),
        };
        let actual = Expr::add(row.entries.iter().map(|e| e.amount.clone()).collect());
        let diff = Expr::sub(actual.clone(), expected.clone()).normalize();
        report.rows_checked += 1;
        if !diff.is_zero() {
            let p = Printer {
                labels: &table.labels,
                locations: table.habitat.names(),
                style: VarStyle::Row { source: k },
            };
            report.violations.push(MassViolation {
                source: k,
                label: table.labels[k].clone(),
                expected: p.print(&expected.normalize()),
                actual: p.print(&actual.normalize()),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, validate};
    use crate::states::enumerate_states;

    const RING: &str = "
        species s {
            param p = 1/2;
            process P0 = pchoice over neighbors { go it . tick . P1 };
            process P1 = pchoice { p: tick . par(P0, P0); 1-p: tick . par(P0, P0, P0) };
        }
        habitat ring(4);
        system { P0 @ 1 * 2; P0 @ 2 * 1; }
    ";

    fn table(src: &str) -> (TransitionTable, StateSpace) {
        let m = validate(&parse(src).unwrap()).unwrap();
        let space = enumerate_states(&m).unwrap();
        (build_stt(&m, &space), space)
    }

    #[test]
    fn comm_yield_cases() {
        assert_eq!(comm_yield(0.0, 5.0, 3.0), 0.0);
        assert_eq!(comm_yield(10.0, 10.0, 25.0), 10.0);
        assert_eq!(comm_yield(2.0, 4.0, 2.0), 1.0);
        assert_eq!(comm_yield(3.0, 0.0, 4.0), 0.0);
        assert_eq!(
            comm_yield_exact(&Rational::from(2), &Rational::from(3), &Rational::from(1)),
            Rational::new(2, 3)
        );
    }

    #[test]
    fn ring_rows() {
        let (t, _) = table(RING);
        let text = t.render();
        assert!(text.contains("R1 [prob] -> R2: 1/2*q; R3: 1/2*q"), "{text}");
        assert!(text.contains("R2 [go] -> R4: q@(l+1)"), "{text}");
        assert!(text.contains("R3 [go] -> R4: q@(l-1)"), "{text}");
        assert!(text.contains("R5 [prob] -> R6: p*q; R7: (1 - p)*q"), "{text}");
        assert!(text.contains("R6 [tick] -> R1: 2*q"), "{text}");
        assert!(text.contains("R7 [tick] -> R1: 3*q"), "{text}");
        // R2 at location 1 (index 0) deposits into R4 at location 2.
        assert_eq!(t.cell(1, 3, 1), Some(&Expr::var(1, Loc::Abs(0), 1)));
    }

    #[test]
    fn mass_check_passes_and_catches_corruption() {
        let (mut t, space) = table(RING);
        let report = row_mass_check(&t, &space);
        assert!(report.passed());
        assert_eq!(report.rows_checked, 7);
        t.rows[6].entries[0].amount = Expr::mul(vec![Expr::Const(Rational::from(2)), q(6)]);
        let report = row_mass_check(&t, &space);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].label, "R7");
    }

    #[test]
    fn conditional_rows_split_matched_and_shortfall() {
        let (t, space) = table(
            "species m { process W = infect ? (tick . W, tick . W); }
             species h { process S = out infect ? (tick . S, tick . S); }
             habitat ring(2);
             system { W @ 1 * 5; S @ 1 * 3; } restrict { infect }",
        );
        assert!(row_mass_check(&t, &space).passed());
        let w = &t.rows[0];
        assert_eq!(w.kind, RowKind::CondComm);
        let labels = t.labels.clone();
        let p = Printer {
            labels: &labels,
            locations: &[],
            style: VarStyle::Row { source: 0 },
        };
        assert_eq!(p.print(&w.entries[0].amount), "min(q, (q*q_R3)/q)");
    }

    #[test]
    fn graph_dispersal_uses_neighbor_sum() {
        let (t, space) = table(
            "species a { process A = pchoice over neighbors { go it . tick . A }; }
             habitat graph { nodes { x, y, z } edges { x - y, y - z } }
             system { A @ x * 4; }",
        );
        assert_eq!(space.len(), 2);
        assert!(t.render().contains("R2: sum[l' in Nb(l)] 1/|Nb(l')|*q@l'"));
        let hab = &t.habitat;
        let mut vals = vec![0.0; 6];
        vals[0] = 4.0; // A at x
        vals[2] = 2.0; // A at z
        let at_y = t.cell(0, 1, 1).unwrap();
        assert_eq!(at_y.eval(&vals, 3, &BTreeMap::new(), hab), 6.0);
        let at_x = t.cell(0, 1, 0).unwrap();
        assert_eq!(at_x.eval(&[0.0, 2.0, 0.0, 0.0, 0.0, 0.0], 3, &BTreeMap::new(), hab), 1.0);
    }
}
