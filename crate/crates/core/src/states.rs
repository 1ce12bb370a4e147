//! Reachable individual states and the initial-state matrix.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::dsl::ValidatedModel;
use crate::model::{
    canonicalize, Action, Direction, Habitat, HabitatKind, LocationExpr, ModelError, ProbExpr,
    ProcessTerm, SpawnMultiset, State,
};
use crate::rational::Rational;

pub const DEFAULT_STATE_CAP: usize = 10_000;

/// Where the individuals produced by a transition end up, relative to the source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dest {
    Here,
    /// Ring offset.
    Offset(i64),
    Abs(usize),
    /// Split uniformly over the neighbors of the source location.
    Neighbors,
}

/// Target states with multiplicities, by state index.
pub type Targets = Vec<(usize, u64)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome<T> {
    pub weight: ProbExpr,
    pub dest: Dest,
    pub targets: T,
}

/// The single top-level move a state can make.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition<T> {
    Prob(Vec<Outcome<T>>),
    Go(Dest, T),
    Tick(T),
    /// Prefix on an unrestricted channel; never blocks.
    Free { dir: Direction, channel: String, cont: T },
    /// Prefix on a restricted channel; unmatched individuals stay put.
    Restricted { dir: Direction, channel: String, cont: T },
    CondComm { dir: Direction, channel: String, then: T, otherwise: T },
    Nil,
}

impl<T> Transition<T> {
    fn map<U>(self, mut f: impl FnMut(T) -> U) -> Transition<U> {
        match self {
            Transition::Prob(os) => Transition::Prob(
                os.into_iter()
                    .map(|o| Outcome {
                        weight: o.weight,
                        dest: o.dest,
                        targets: f(o.targets),
                    })
                    .collect(),
            ),
            Transition::Go(d, t) => Transition::Go(d, f(t)),
            Transition::Tick(t) => Transition::Tick(f(t)),
            Transition::Free { dir, channel, cont } => Transition::Free { dir, channel, cont: f(cont) },
            Transition::Restricted { dir, channel, cont } => {
                Transition::Restricted { dir, channel, cont: f(cont) }
            }
            Transition::CondComm { dir, channel, then, otherwise } => {
                let then = f(then);
                Transition::CondComm { dir, channel, then, otherwise: f(otherwise) }
            }
            Transition::Nil => Transition::Nil,
        }
    }

    /// Every target collection, in a fixed order.
    pub fn target_sets(&self) -> Vec<&T> {
        match self {
            Transition::Prob(os) => os.iter().map(|o| &o.targets).collect(),
            Transition::Go(_, t) | Transition::Tick(t) => vec![t],
            Transition::Free { cont, .. } | Transition::Restricted { cont, .. } => vec![cont],
            Transition::CondComm { then, otherwise, .. } => vec![then, otherwise],
            Transition::Nil => Vec::new(),
        }
    }

    pub fn head(&self) -> HeadClass {
        match self {
            Transition::Prob(_) => HeadClass::Prob,
            Transition::Go(..) => HeadClass::Go,
            Transition::Tick(_) => HeadClass::Tick,
            Transition::Free { dir, channel, .. } => HeadClass::Chan {
                dir: *dir,
                channel: channel.clone(),
                restricted: false,
            },
            Transition::Restricted { dir, channel, .. } => HeadClass::Chan {
                dir: *dir,
                channel: channel.clone(),
                restricted: true,
            },
            Transition::CondComm { dir, channel, .. } => HeadClass::CondComm {
                dir: *dir,
                channel: channel.clone(),
            },
            Transition::Nil => HeadClass::Nil,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HeadClass {
    Prob,
    Go,
    Tick,
    Chan { dir: Direction, channel: String, restricted: bool },
    CondComm { dir: Direction, channel: String },
    Nil,
}

impl fmt::Display for HeadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadClass::Prob => f.write_str("prob"),
            HeadClass::Go => f.write_str("go"),
            HeadClass::Tick => f.write_str("tick"),
            HeadClass::Chan { dir, channel, restricted: true } => write!(f, "chan({dir} {channel})"),
            HeadClass::Chan { dir, channel, restricted: false } => {
                write!(f, "chan({dir} {channel}, free)")
            }
            HeadClass::CondComm { dir, channel } => write!(f, "condcomm({dir} {channel})"),
            HeadClass::Nil => f.write_str("nil"),
        }
    }
}

fn go_dest(loc: &LocationExpr, habitat: &Habitat) -> Result<Dest, ModelError> {
    match loc {
        LocationExpr::MyLoc => Ok(Dest::Here),
        LocationExpr::MyLocOffset(k) => {
            if habitat.kind() != HabitatKind::Ring {
                return Err(ModelError::OffsetOnNonRing);
            }
            if k.rem_euclid(habitat.size() as i64) == 0 {
                Ok(Dest::Here)
            } else {
                Ok(Dest::Offset(*k))
            }
        }
        LocationExpr::Literal(name) => habitat
            .location_index(name)
            .map(Dest::Abs)
            .ok_or_else(|| ModelError::UnknownLocation(name.clone())),
        LocationExpr::It => Err(ModelError::UnboundIt),
    }
}

/// One-step derivative of a state. Neighbor choices expand into per-offset
/// branches on rings and into a single dispersal outcome on graphs.
pub fn derive(state: &State, model: &ValidatedModel) -> Result<Transition<SpawnMultiset>, ModelError> {
    let defs = model.definitions();
    let habitat = model.habitat();
    Ok(match state.term() {
        ProcessTerm::Nil => Transition::Nil,
        ProcessTerm::Prefix(action, cont) => {
            let cont = canonicalize(cont, defs)?;
            match action {
                Action::Tick => Transition::Tick(cont),
                Action::Go(loc) => Transition::Go(go_dest(loc, habitat)?, cont),
                Action::Input(ch) | Action::Output(ch) => {
                    let dir = action.channel().expect("channel action").0;
                    if model.is_restricted(ch) {
                        Transition::Restricted { dir, channel: ch.clone(), cont }
                    } else {
                        Transition::Free { dir, channel: ch.clone(), cont }
                    }
                }
            }
        }
        ProcessTerm::ProbChoice(branches) => Transition::Prob(
            branches
                .iter()
                .map(|(p, t)| {
                    Ok(Outcome {
                        weight: p.clone(),
                        dest: Dest::Here,
                        targets: canonicalize(t, defs)?,
                    })
                })
                .collect::<Result<_, ModelError>>()?,
        ),
        ProcessTerm::NeighborChoice(body) => {
            let ProcessTerm::Prefix(Action::Go(LocationExpr::It), cont) = body.as_ref() else {
                return Err(ModelError::UnboundIt);
            };
            match habitat.ring_neighbor_offsets() {
                Some(offsets) => {
                    if offsets.is_empty() {
                        return Err(ModelError::NoNeighbors(habitat.name(0).to_string()));
                    }
                    let w = Rational::new(1, offsets.len() as i64);
                    Transition::Prob(
                        offsets
                            .into_iter()
                            .map(|k| {
                                let t = body.substitute_it(&LocationExpr::MyLocOffset(k));
                                Ok(Outcome {
                                    weight: ProbExpr::constant(w.clone()),
                                    dest: Dest::Here,
                                    targets: canonicalize(&t, defs)?,
                                })
                            })
                            .collect::<Result<_, ModelError>>()?,
                    )
                }
                None => Transition::Prob(vec![Outcome {
                    weight: ProbExpr::constant(Rational::one()),
                    dest: Dest::Neighbors,
                    targets: canonicalize(cont, defs)?,
                }]),
            }
        }
        ProcessTerm::CondComm { gamma, then, otherwise } => {
            let (dir, ch) = gamma.channel().ok_or(ModelError::UnboundIt)?;
            Transition::CondComm {
                dir,
                channel: ch.to_string(),
                then: canonicalize(then, defs)?,
                otherwise: canonicalize(otherwise, defs)?,
            }
        }
        ProcessTerm::Parallel(_) | ProcessTerm::ConstRef(_) => {
            unreachable!("canonical states have no parallel or constant head")
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumerateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state space exceeds {cap} states; growth witness `{witness}` derived from `{parent}`")]
    TooManyStates { cap: usize, witness: String, parent: String },
}

#[derive(Debug, Clone)]
pub struct StateInfo {
    pub state: State,
    pub species: String,
    pub transition: Transition<Targets>,
}

/// All reachable states, one block per species in order of first appearance.
#[derive(Debug, Clone)]
pub struct StateSpace {
    infos: Vec<StateInfo>,
    index: HashMap<State, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn info(&self, i: usize) -> &StateInfo {
        &self.infos[i]
    }

    pub fn state(&self, i: usize) -> &State {
        &self.infos[i].state
    }

    pub fn transition(&self, i: usize) -> &Transition<Targets> {
        &self.infos[i].transition
    }

    pub fn head(&self, i: usize) -> HeadClass {
        self.infos[i].transition.head()
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// `R1`, `R2`, ... in index order.
    pub fn labels(&self) -> Vec<String> {
        (1..=self.len()).map(|i| format!("R{i}")).collect()
    }

    /// Lines of the form `i: term [head=class]`.
    pub fn listing(&self) -> String {
        self.infos
            .iter()
            .enumerate()
            .map(|(i, info)| format!("{}: {} [head={}]\n", i + 1, info.state, info.transition.head()))
            .collect()
    }
}

pub fn enumerate_states(model: &ValidatedModel) -> Result<StateSpace, EnumerateError> {
    enumerate_states_capped(model, DEFAULT_STATE_CAP)
}

/// Fixed-point closure of the initial states under one-step derivatives.
pub fn enumerate_states_capped(model: &ValidatedModel, cap: usize) -> Result<StateSpace, EnumerateError> {
    let mut species_order: Vec<&str> = Vec::new();
    for e in model.entries() {
        if !species_order.contains(&e.species.as_str()) {
            species_order.push(&e.species);
        }
    }
    let mut states: Vec<(State, String)> = Vec::new();
    let mut raw: Vec<Transition<SpawnMultiset>> = Vec::new();
    let mut index: HashMap<State, usize> = HashMap::new();

    let mut add = |s: &State, species: &str, parent: &str, states: &mut Vec<(State, String)>, queue: &mut VecDeque<usize>| {
        if index.contains_key(s) {
            return Ok(());
        }
        if states.len() >= cap {
            return Err(EnumerateError::TooManyStates {
                cap,
                witness: s.to_string(),
                parent: parent.to_string(),
            });
        }
        index.insert(s.clone(), states.len());
        queue.push_back(states.len());
        states.push((s.clone(), species.to_string()));
        Ok(())
    };

    for species in species_order {
        let mut queue = VecDeque::new();
        for e in model.entries().iter().filter(|e| e.species == species) {
            let ms = canonicalize(&e.term, model.definitions())?;
            for (s, _) in ms.iter() {
                add(s, species, "the system block", &mut states, &mut queue)?;
            }
        }
        while let Some(i) = queue.pop_front() {
            let state = states[i].0.clone();
            let t = derive(&state, model)?;
            let parent = state.to_string();
            for set in t.target_sets() {
                for (s, _) in set.iter() {
                    add(s, species, &parent, &mut states, &mut queue)?;
                }
            }
            if raw.len() <= i {
                raw.resize(i + 1, Transition::Nil);
            }
            raw[i] = t;
        }
    }

    let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
    let infos = states
        .into_iter()
        .zip(raw)
        .map(|((state, species), t)| StateInfo {
            state,
            species,
            transition: t.map(|ms| ms.iter().map(|(s, c)| (index[s], c)).collect()),
        })
        .collect();
    Ok(StateSpace { infos, index })
}

/// Initial counts, stored states by locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitMatrix {
    n: usize,
    m: usize,
    data: Vec<u64>,
}

impl InitMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        InitMatrix { n, m, data: vec![0; n * m] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        InitMatrix {
            n,
            m,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn locations(&self) -> usize {
        self.m
    }

    pub fn get(&self, state: usize, loc: usize) -> u64 {
        self.data[state * self.m + loc]
    }

    pub fn set(&mut self, state: usize, loc: usize, value: u64) {
        self.data[state * self.m + loc] = value;
    }

    /// Flat state-major data.
    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn scaled(&self, k: u64) -> Option<InitMatrix> {
        let data = self.data.iter().map(|v| v.checked_mul(k)).collect::<Option<Vec<_>>>()?;
        Some(InitMatrix { n: self.n, m: self.m, data })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Locations by states, as nested lists.
    pub fn location_major(&self) -> String {
        let rows: Vec<String> = (0..self.m)
            .map(|j| {
                let cells: Vec<String> = (0..self.n).map(|i| self.get(i, j).to_string()).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        format!("[{}]", rows.join(", "))
    }
}

pub fn build_init_matrix(model: &ValidatedModel, space: &StateSpace) -> InitMatrix {
    let mut init = InitMatrix::zeros(space.len(), model.habitat().size());
    for e in model.entries() {
        let ms = canonicalize(&e.term, model.definitions()).expect("validated entry");
        for (s, mult) in ms.iter() {
            let i = space.index_of(s).expect("initial states are enumerated");
            let cur = init.get(i, e.location);
            init.set(i, e.location, cur + mult * e.count);
        }
    }
    init
}
