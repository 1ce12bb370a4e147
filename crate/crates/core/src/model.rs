//! Process terms, habitats and systems, plus canonicalization of process
//! terms into individual states.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::rational::Rational;

/// Source position of a syntactic item.
///
/// Spans never take part in structural equality, ordering or hashing, so two
/// models parsed from differently formatted text compare equal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown process constant `{0}`")]
    UnknownConstant(String),
    #[error("unguarded recursion through {}", .0.join(" -> "))]
    UnguardedRecursion(Vec<String>),
    #[error("location index {loc} out of range for a habitat of {size} locations")]
    LocationOutOfRange { loc: usize, size: usize },
    #[error("unknown location `{0}`")]
    UnknownLocation(String),
    #[error("`myloc` offsets are only meaningful on ring habitats")]
    OffsetOnNonRing,
    #[error("`it` used outside a neighbor choice")]
    UnboundIt,
    #[error("invalid habitat: {0}")]
    InvalidHabitat(String),
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("neighbor choice at location `{0}`, which has no neighbors")]
    NoNeighbors(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn complement(self) -> Direction {
        match self {
            Direction::In => Direction::Out,
            Direction::Out => Direction::In,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::In => "in",
            Direction::Out => "out",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LocationExpr {
    /// A location named in the habitat declaration.
    Literal(String),
    MyLoc,
    /// `myloc + k`, modulo the ring size.
    MyLocOffset(i64),
    /// The neighbor bound by an enclosing `pchoice over neighbors`.
    It,
}

impl fmt::Display for LocationExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationExpr::Literal(name) => f.write_str(name),
            LocationExpr::MyLoc => f.write_str("myloc"),
            LocationExpr::MyLocOffset(k) if *k >= 0 => write!(f, "(myloc+{k})"),
            LocationExpr::MyLocOffset(k) => write!(f, "(myloc-{})", -k),
            LocationExpr::It => f.write_str("it"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Input(String),
    Output(String),
    Go(LocationExpr),
    Tick,
}

impl Action {
    /// Channel and direction of a communication action.
    pub fn channel(&self) -> Option<(Direction, &str)> {
        match self {
            Action::Input(c) => Some((Direction::In, c)),
            Action::Output(c) => Some((Direction::Out, c)),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Input(c) => write!(f, "in {c}"),
            Action::Output(c) => write!(f, "out {c}"),
            Action::Go(loc) => write!(f, "go {loc}"),
            Action::Tick => f.write_str("tick"),
        }
    }
}

/// A probability written as a linear form over named parameters, e.g. `1-p`.
///
/// Zero coefficients are never stored, so structurally equal forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ProbExpr {
    pub constant: Rational,
    pub params: BTreeMap<String, Rational>,
}

impl ProbExpr {
    pub fn constant(value: Rational) -> Self {
        ProbExpr {
            constant: value,
            params: BTreeMap::new(),
        }
    }

    pub fn param(name: &str) -> Self {
        let mut params = BTreeMap::new();
        params.insert(name.to_string(), Rational::one());
        ProbExpr {
            constant: Rational::zero(),
            params,
        }
    }

    /// `self + sign * other`, keeping the representation canonical.
    pub fn combine(mut self, other: &ProbExpr, negate: bool) -> Self {
        let other_const = if negate {
            -other.constant.clone()
        } else {
            other.constant.clone()
        };
        self.constant = self.constant + other_const;
        for (name, coef) in &other.params {
            let coef = if negate { -coef.clone() } else { coef.clone() };
            let slot = self.params.entry(name.clone()).or_insert_with(Rational::zero);
            *slot = slot.clone() + coef;
            if slot.is_zero() {
                self.params.remove(name);
            }
        }
        self
    }

    pub fn scale(mut self, factor: &Rational) -> Self {
        if factor.is_zero() {
            return ProbExpr::default();
        }
        self.constant = &self.constant * factor;
        for coef in self.params.values_mut() {
            *coef = &*coef * factor;
        }
        self
    }

    pub fn eval(&self, values: &BTreeMap<String, Rational>) -> Result<Rational, ModelError> {
        let mut total = self.constant.clone();
        for (name, coef) in &self.params {
            let v = values
                .get(name)
                .ok_or_else(|| ModelError::UnboundParameter(name.clone()))?;
            total = total + coef * v;
        }
        Ok(total)
    }
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !self.constant.is_zero() || self.params.is_empty() {
            write!(f, "{}", self.constant)?;
            first = false;
        }
        for (name, coef) in &self.params {
            let mag = coef.abs();
            if coef.is_negative() {
                f.write_str("-")?;
            } else if !first {
                f.write_str("+")?;
            }
            if mag.is_one() {
                f.write_str(name)?;
            } else {
                write!(f, "{mag}*{name}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// An individual-level process term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessTerm {
    Nil,
    Prefix(Action, Box<ProcessTerm>),
    ProbChoice(Vec<(ProbExpr, ProcessTerm)>),
    /// Uniform choice over the neighbors of the current location; the body
    /// refers to the chosen neighbor as `it`.
    NeighborChoice(Box<ProcessTerm>),
    CondComm {
        gamma: Action,
        then: Box<ProcessTerm>,
        otherwise: Box<ProcessTerm>,
    },
    Parallel(Vec<ProcessTerm>),
    ConstRef(String),
}

impl ProcessTerm {
    pub fn prefix(action: Action, cont: ProcessTerm) -> Self {
        ProcessTerm::Prefix(action, Box::new(cont))
    }

    pub fn constant(name: &str) -> Self {
        ProcessTerm::ConstRef(name.to_string())
    }

    /// Calls `f` on every subterm, including `self`.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a ProcessTerm)) {
        f(self);
        match self {
            ProcessTerm::Nil | ProcessTerm::ConstRef(_) => {}
            ProcessTerm::Prefix(_, t) | ProcessTerm::NeighborChoice(t) => t.visit(f),
            ProcessTerm::ProbChoice(branches) => {
                for (_, t) in branches {
                    t.visit(f);
                }
            }
            ProcessTerm::CondComm {
                then, otherwise, ..
            } => {
                then.visit(f);
                otherwise.visit(f);
            }
            ProcessTerm::Parallel(ts) => {
                for t in ts {
                    t.visit(f);
                }
            }
        }
    }

    pub fn mentions_it(&self) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if let ProcessTerm::Prefix(Action::Go(LocationExpr::It), _) = t {
                found = true;
            }
        });
        found
    }

    /// Replaces `go it` by `go loc` throughout.
    pub fn substitute_it(&self, loc: &LocationExpr) -> ProcessTerm {
        match self {
            ProcessTerm::Nil | ProcessTerm::ConstRef(_) => self.clone(),
            ProcessTerm::Prefix(a, t) => {
                let a = match a {
                    Action::Go(LocationExpr::It) => Action::Go(loc.clone()),
                    other => other.clone(),
                };
                ProcessTerm::Prefix(a, Box::new(t.substitute_it(loc)))
            }
            // An inner neighbor choice rebinds `it`.
            ProcessTerm::NeighborChoice(_) => self.clone(),
            ProcessTerm::ProbChoice(bs) => ProcessTerm::ProbChoice(
                bs.iter()
                    .map(|(p, t)| (p.clone(), t.substitute_it(loc)))
                    .collect(),
            ),
            ProcessTerm::CondComm {
                gamma,
                then,
                otherwise,
            } => ProcessTerm::CondComm {
                gamma: gamma.clone(),
                then: Box::new(then.substitute_it(loc)),
                otherwise: Box::new(otherwise.substitute_it(loc)),
            },
            ProcessTerm::Parallel(ts) => {
                ProcessTerm::Parallel(ts.iter().map(|t| t.substitute_it(loc)).collect())
            }
        }
    }
}

impl fmt::Display for ProcessTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessTerm::Nil => f.write_str("0"),
            ProcessTerm::Prefix(a, t) => write!(f, "{a} . {t}"),
            ProcessTerm::ProbChoice(branches) => {
                f.write_str("pchoice { ")?;
                for (i, (p, t)) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{p}: {t}")?;
                }
                f.write_str(" }")
            }
            ProcessTerm::NeighborChoice(t) => write!(f, "pchoice over neighbors {{ {t} }}"),
            ProcessTerm::CondComm {
                gamma,
                then,
                otherwise,
            } => write!(f, "{gamma} ? ({then}, {otherwise})"),
            ProcessTerm::Parallel(ts) => {
                f.write_str("par(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
            ProcessTerm::ConstRef(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HabitatKind {
    Ring,
    Graph,
}

/// A finite location graph with a symmetric, irreflexive neighbor relation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Habitat {
    kind: HabitatKind,
    names: Vec<String>,
    adjacency: Vec<Vec<usize>>,
}

impl Habitat {
    /// Ring of `size` locations named `1..=size`.
    pub fn ring(size: usize) -> Result<Habitat, ModelError> {
        if size == 0 {
            return Err(ModelError::InvalidHabitat("ring size must be at least 1".into()));
        }
        let adjacency = (0..size)
            .map(|loc| {
                let mut nb: Vec<usize> = [(loc + size - 1) % size, (loc + 1) % size]
                    .into_iter()
                    .filter(|&n| n != loc)
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        Ok(Habitat {
            kind: HabitatKind::Ring,
            names: (1..=size).map(|i| i.to_string()).collect(),
            adjacency,
        })
    }

    pub fn graph(nodes: Vec<String>, edges: &[(String, String)]) -> Result<Habitat, ModelError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(ModelError::InvalidHabitat(format!("duplicate location `{n}`")));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (a, b) in edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| ModelError::UnknownLocation(a.clone()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| ModelError::UnknownLocation(b.clone()))?;
            if ia == ib {
                return Err(ModelError::InvalidHabitat(format!("self-loop at `{a}`")));
            }
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Habitat {
            kind: HabitatKind::Graph,
            names: nodes,
            adjacency,
        })
    }

    pub fn kind(&self) -> HabitatKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, loc: usize) -> &str {
        &self.names[loc]
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn neighbors(&self, loc: usize) -> Result<&[usize], ModelError> {
        self.adjacency
            .get(loc)
            .map(Vec::as_slice)
            .ok_or(ModelError::LocationOutOfRange {
                loc,
                size: self.size(),
            })
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    /// Offsets `+1, -1` of the distinct ring neighbors, in that order.
    pub fn ring_neighbor_offsets(&self) -> Option<Vec<i64>> {
        if self.kind != HabitatKind::Ring {
            return None;
        }
        let size = self.size() as i64;
        let mut offsets = Vec::new();
        for k in [1i64, -1] {
            let wrapped = k.rem_euclid(size);
            if wrapped != 0 && !offsets.iter().any(|&o: &i64| o.rem_euclid(size) == wrapped) {
                offsets.push(k);
            }
        }
        Some(offsets)
    }

    /// `loc + offset` modulo the habitat size.
    pub fn shift(&self, loc: usize, offset: i64) -> usize {
        (loc as i64 + offset).rem_euclid(self.size() as i64) as usize
    }
}

pub fn resolve_location(
    expr: &LocationExpr,
    myloc: usize,
    habitat: &Habitat,
) -> Result<usize, ModelError> {
    if myloc >= habitat.size() {
        return Err(ModelError::LocationOutOfRange {
            loc: myloc,
            size: habitat.size(),
        });
    }
    match expr {
        LocationExpr::Literal(name) => habitat
            .location_index(name)
            .ok_or_else(|| ModelError::UnknownLocation(name.clone())),
        LocationExpr::MyLoc => Ok(myloc),
        LocationExpr::MyLocOffset(k) => match habitat.kind() {
            HabitatKind::Ring => Ok(habitat.shift(myloc, *k)),
            HabitatKind::Graph => Err(ModelError::OffsetOnNonRing),
        },
        LocationExpr::It => Err(ModelError::UnboundIt),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HabitatDecl {
    Ring(i64),
    Graph {
        nodes: Vec<String>,
        edges: Vec<(String, String)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessDef {
    pub name: String,
    pub term: ProcessTerm,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDef {
    pub name: String,
    pub value: Rational,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesDef {
    pub name: String,
    pub params: Vec<ParamDef>,
    pub processes: Vec<ProcessDef>,
    pub span: Span,
}

/// `term @ location * count [of species]`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemEntry {
    pub term: ProcessTerm,
    pub location: String,
    pub count: i64,
    pub species: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemSpec {
    pub entries: Vec<SystemEntry>,
    pub restrict: Vec<String>,
    pub span: Span,
}

/// A parsed model, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelSpec {
    pub species: Vec<SpeciesDef>,
    pub habitat: Option<(HabitatDecl, Span)>,
    pub system: SystemSpec,
}

pub type Definitions = BTreeMap<String, ProcessTerm>;

impl ModelSpec {
    /// All process definitions across species, by name. Later duplicates are ignored.
    pub fn definitions(&self) -> Definitions {
        let mut defs = Definitions::new();
        for sp in &self.species {
            for p in &sp.processes {
                defs.entry(p.name.clone()).or_insert_with(|| p.term.clone());
            }
        }
        defs
    }
}

/// A parallel-free process term whose head is not a constant reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(ProcessTerm);

impl State {
    pub fn nil() -> State {
        State(ProcessTerm::Nil)
    }

    pub fn term(&self) -> &ProcessTerm {
        &self.0
    }

    pub fn is_nil(&self) -> bool {
        matches!(self.0, ProcessTerm::Nil)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The individuals a term denotes: canonical states with multiplicities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SpawnMultiset(BTreeMap<State, u64>);

impl SpawnMultiset {
    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, state: &State) -> u64 {
        self.0.get(state).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&State, u64)> {
        self.0.iter().map(|(s, &c)| (s, c))
    }

    fn add(&mut self, state: State, count: u64) {
        *self.0.entry(state).or_insert(0) += count;
    }
}

/// Flattens parallel composition and unfolds constants until every component
/// has a non-constant head.
pub fn canonicalize(term: &ProcessTerm, defs: &Definitions) -> Result<SpawnMultiset, ModelError> {
    let mut out = SpawnMultiset::default();
    let mut unfolding = Vec::new();
    canonicalize_into(term, defs, &mut unfolding, &mut out)?;
    Ok(out)
}

fn canonicalize_into(
    term: &ProcessTerm,
    defs: &Definitions,
    unfolding: &mut Vec<String>,
    out: &mut SpawnMultiset,
) -> Result<(), ModelError> {
    match term {
        ProcessTerm::ConstRef(name) => {
            if let Some(pos) = unfolding.iter().position(|n| n == name) {
                let mut cycle = unfolding[pos..].to_vec();
                cycle.push(name.clone());
                return Err(ModelError::UnguardedRecursion(cycle));
            }
            let body = defs
                .get(name)
                .ok_or_else(|| ModelError::UnknownConstant(name.clone()))?;
            unfolding.push(name.clone());
            canonicalize_into(body, defs, unfolding, out)?;
            unfolding.pop();
            Ok(())
        }
        ProcessTerm::Parallel(ts) => {
            for t in ts {
                canonicalize_into(t, defs, unfolding, out)?;
            }
            Ok(())
        }
        other => {
            out.add(State(other.clone()), 1);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_defs() -> Definitions {
        let mut defs = Definitions::new();
        defs.insert(
            "P0".into(),
            ProcessTerm::NeighborChoice(Box::new(ProcessTerm::prefix(
                Action::Go(LocationExpr::It),
                ProcessTerm::prefix(Action::Tick, ProcessTerm::constant("P1")),
            ))),
        );
        defs.insert(
            "P1".into(),
            ProcessTerm::prefix(Action::Tick, ProcessTerm::constant("P0")),
        );
        defs
    }

    fn par(ts: Vec<ProcessTerm>) -> ProcessTerm {
        ProcessTerm::Parallel(ts)
    }

    #[test]
    fn parallel_copies_become_multiplicities() {
        let defs = ring_defs();
        let p0 = ProcessTerm::constant("P0");
        let two = canonicalize(&par(vec![p0.clone(), p0.clone()]), &defs).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two.total(), 2);
        let three = canonicalize(&par(vec![p0.clone(), par(vec![p0.clone(), p0])]), &defs).unwrap();
        assert_eq!(three.total(), 3);
        assert_eq!(three.len(), 1);
    }

    #[test]
    fn nil_is_its_own_state() {
        let ms = canonicalize(&ProcessTerm::Nil, &Definitions::new()).unwrap();
        assert_eq!(ms.count(&State::nil()), 1);
        assert_eq!(ms.total(), 1);
    }

    #[test]
    fn unknown_and_unguarded_constants() {
        let mut defs = Definitions::new();
        defs.insert("A".into(), ProcessTerm::constant("B"));
        defs.insert("B".into(), ProcessTerm::constant("A"));
        defs.insert(
            "C".into(),
            par(vec![ProcessTerm::prefix(Action::Tick, ProcessTerm::Nil), ProcessTerm::constant("C")]),
        );
        assert!(matches!(
            canonicalize(&ProcessTerm::constant("A"), &defs),
            Err(ModelError::UnguardedRecursion(_))
        ));
        assert!(matches!(
            canonicalize(&ProcessTerm::constant("C"), &defs),
            Err(ModelError::UnguardedRecursion(_))
        ));
        assert_eq!(
            canonicalize(&ProcessTerm::constant("Z"), &defs),
            Err(ModelError::UnknownConstant("Z".into()))
        );
    }

    #[test]
    fn ring_neighbors() {
        let r4 = Habitat::ring(4).unwrap();
        assert_eq!(r4.neighbors(1).unwrap(), &[0, 2]);
        let r2 = Habitat::ring(2).unwrap();
        assert_eq!(r2.neighbors(0).unwrap(), &[1]);
        assert_eq!(r2.ring_neighbor_offsets().unwrap(), vec![1]);
        assert_eq!(r4.ring_neighbor_offsets().unwrap(), vec![1, -1]);
        assert!(Habitat::ring(1).unwrap().neighbors(0).unwrap().is_empty());
        assert!(r4.neighbors(4).is_err());
    }

    #[test]
    fn graph_neighbors() {
        let g = Habitat::graph(
            vec!["a".into(), "b".into(), "c".into()],
            &[("a".into(), "b".into())],
        )
        .unwrap();
        assert!(g.neighbors(2).unwrap().is_empty());
        assert_eq!(g.neighbors(0).unwrap(), &[1]);
        assert!(Habitat::graph(vec!["a".into()], &[("a".into(), "a".into())]).is_err());
    }

    #[test]
    fn location_resolution() {
        let r4 = Habitat::ring(4).unwrap();
        assert_eq!(resolve_location(&LocationExpr::MyLocOffset(1), 3, &r4), Ok(0));
        assert_eq!(resolve_location(&LocationExpr::MyLocOffset(-1), 0, &r4), Ok(3));
        assert_eq!(resolve_location(&LocationExpr::MyLoc, 2, &r4), Ok(2));
        assert_eq!(
            resolve_location(&LocationExpr::Literal("5".into()), 0, &r4),
            Err(ModelError::UnknownLocation("5".into()))
        );
        let g = Habitat::graph(vec!["a".into(), "b".into()], &[]).unwrap();
        assert_eq!(
            resolve_location(&LocationExpr::MyLocOffset(1), 0, &g),
            Err(ModelError::OffsetOnNonRing)
        );
        assert_eq!(resolve_location(&LocationExpr::Literal("b".into()), 0, &g), Ok(1));
    }

    #[test]
    fn prob_expr_display_and_eval() {
        let one_minus_p = ProbExpr::constant(Rational::one()).combine(&ProbExpr::param("p"), true);
        assert_eq!(one_minus_p.to_string(), "1-p");
        let mut vals = BTreeMap::new();
        vals.insert("p".to_string(), Rational::new(1, 4));
        assert_eq!(one_minus_p.eval(&vals).unwrap(), Rational::new(3, 4));
        let back = one_minus_p.clone().combine(&ProbExpr::param("p"), false);
        assert_eq!(back, ProbExpr::constant(Rational::one()));
        assert!(back.params.is_empty());
    }
}
