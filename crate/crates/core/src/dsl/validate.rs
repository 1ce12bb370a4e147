use std::collections::{BTreeMap, BTreeSet, HashSet};

use sha2::{Digest, Sha256};

use crate::model::{
    Action, Definitions, Habitat, HabitatDecl, HabitatKind, LocationExpr, ModelSpec, ProcessTerm,
    Span,
};
use crate::rational::Rational;

use super::{render, Diagnostic};

/// A system entry with its location resolved and its species known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedEntry {
    pub term: ProcessTerm,
    pub species: String,
    pub location: usize,
    pub count: u64,
}

/// A model that passed every validation rule.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    spec: ModelSpec,
    habitat: Habitat,
    defs: Definitions,
    params: BTreeMap<String, Rational>,
    restricted: BTreeSet<String>,
    species_of: BTreeMap<String, String>,
    entries: Vec<LocatedEntry>,
    warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverrideError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter override makes the model invalid")]
    Invalid(Vec<Diagnostic>),
}

impl ValidatedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn habitat(&self) -> &Habitat {
        &self.habitat
    }

    pub fn definitions(&self) -> &Definitions {
        &self.defs
    }

    pub fn params(&self) -> &BTreeMap<String, Rational> {
        &self.params
    }

    pub fn is_restricted(&self, channel: &str) -> bool {
        self.restricted.contains(channel)
    }

    /// Species that defines the constant `name`.
    pub fn species_of(&self, name: &str) -> Option<&str> {
        self.species_of.get(name).map(String::as_str)
    }

    pub fn entries(&self) -> &[LocatedEntry] {
        &self.entries
    }

    pub fn warnings(&self) -> &[Diagnostic] {
        &self.warnings
    }

    /// Short content hash of the canonical model text.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(render(&self.spec).as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Re-validates with some parameter values replaced.
    pub fn with_params(&self, overrides: &[(String, Rational)]) -> Result<ValidatedModel, OverrideError> {
        let mut spec = self.spec.clone();
        for (name, value) in overrides {
            let slot = spec
                .species
                .iter_mut()
                .flat_map(|s| s.params.iter_mut())
                .find(|p| &p.name == name)
                .ok_or_else(|| OverrideError::UnknownParameter(name.clone()))?;
            slot.value = value.clone();
        }
        validate(&spec).map_err(OverrideError::Invalid)
    }
}

struct Checker<'a> {
    habitat: Option<&'a Habitat>,
    defs: &'a Definitions,
    params: &'a BTreeMap<String, Rational>,
    diags: Vec<Diagnostic>,
    uses_neighbor_choice: bool,
}

impl Checker<'_> {
    fn term(&mut self, t: &ProcessTerm, span: Span, in_neighbor: bool) {
        match t {
            ProcessTerm::Nil => {}
            ProcessTerm::ConstRef(name) => {
                if !self.defs.contains_key(name) {
                    self.diags.push(Diagnostic::error(
                        "E201",
                        span,
                        format!("unknown process constant `{name}`"),
                    ));
                }
            }
            ProcessTerm::Prefix(action, cont) => {
                if let Action::Go(loc) = action {
                    self.location(loc, span, in_neighbor);
                }
                self.term(cont, span, in_neighbor);
            }
            ProcessTerm::ProbChoice(branches) => {
                self.probabilities(branches.iter().map(|(p, _)| p), span);
                for (_, b) in branches {
                    self.term(b, span, in_neighbor);
                }
            }
            ProcessTerm::NeighborChoice(body) => {
                self.uses_neighbor_choice = true;
                match body.as_ref() {
                    ProcessTerm::Prefix(Action::Go(LocationExpr::It), cont) => {
                        self.term(cont, span, false)
                    }
                    _ => self.diags.push(Diagnostic::error(
                        "E209",
                        span,
                        "the body of a neighbor choice must have the form `go it . P`",
                    )),
                }
            }
            ProcessTerm::CondComm {
                then, otherwise, ..
            } => {
                self.term(then, span, in_neighbor);
                self.term(otherwise, span, in_neighbor);
            }
            ProcessTerm::Parallel(ts) => {
                for t in ts {
                    self.term(t, span, in_neighbor);
                }
            }
        }
    }

    fn location(&mut self, loc: &LocationExpr, span: Span, in_neighbor: bool) {
        match loc {
            LocationExpr::It if !in_neighbor => self.diags.push(Diagnostic::error(
                "E209",
                span,
                "`it` used outside a neighbor choice",
            )),
            LocationExpr::Literal(name) => {
                if let Some(h) = self.habitat {
                    if h.location_index(name).is_none() {
                        self.diags.push(Diagnostic::error(
                            "E207",
                            span,
                            format!("unknown location `{name}`"),
                        ));
                    }
                }
            }
            LocationExpr::MyLocOffset(_) => {
                if let Some(h) = self.habitat {
                    if h.kind() != HabitatKind::Ring {
                        self.diags.push(Diagnostic::error(
                            "E208",
                            span,
                            "`myloc` offsets are only allowed on ring habitats",
                        ));
                    }
                }
            }
            _ => {}
        }
    }

    fn probabilities<'p>(&mut self, probs: impl Iterator<Item = &'p crate::model::ProbExpr>, span: Span) {
        let mut values = Vec::new();
        let mut unbound = false;
        for p in probs {
            for name in p.params.keys() {
                if !self.params.contains_key(name) {
                    unbound = true;
                    self.diags.push(Diagnostic::error(
                        "E205",
                        span,
                        format!("unbound parameter `{name}`"),
                    ));
                }
            }
            if let Ok(v) = p.eval(self.params) {
                values.push((p, v));
            }
        }
        if unbound {
            return;
        }
        for (p, v) in &values {
            if !v.is_positive() || *v > Rational::one() {
                self.diags.push(Diagnostic::error(
                    "E203",
                    span,
                    format!("probability `{p}` = {v} is outside (0, 1]"),
                ));
            }
        }
        let sum: Rational = values.iter().map(|(_, v)| v.clone()).sum();
        if !sum.is_one() {
            self.diags.push(Diagnostic::error(
                "E204",
                span,
                format!("probabilities sum to {sum} ≠ 1"),
            ));
        }
    }
}

/// Constants referenced without an intervening guard (directly or under `par`).
fn unguarded_refs(t: &ProcessTerm, out: &mut Vec<String>) {
    match t {
        ProcessTerm::ConstRef(n) => out.push(n.clone()),
        ProcessTerm::Parallel(ts) => ts.iter().for_each(|t| unguarded_refs(t, out)),
        _ => {}
    }
}

fn all_refs(t: &ProcessTerm, out: &mut Vec<String>) {
    t.visit(&mut |s| {
        if let ProcessTerm::ConstRef(n) = s {
            out.push(n.clone());
        }
    });
}

fn channel_checks(t: &ProcessTerm, restricted: &BTreeSet<String>, span: Span, diags: &mut Vec<Diagnostic>) {
    t.visit(&mut |s| match s {
        ProcessTerm::CondComm { gamma, .. } => {
            if let Some((_, ch)) = gamma.channel() {
                if !restricted.contains(ch) {
                    diags.push(Diagnostic::error(
                        "E206",
                        span,
                        format!("unrestricted conditional channel `{ch}`"),
                    ));
                }
            }
        }
        ProcessTerm::Prefix(a, _) => {
            if let Some((_, ch)) = a.channel() {
                if !restricted.contains(ch) {
                    diags.push(Diagnostic::warning(
                        "W301",
                        span,
                        format!("channel `{ch}` is not restricted, so this prefix never blocks"),
                    ));
                }
            }
        }
        _ => {}
    });
}

/// Checks every rule and reports all violations at once.
pub fn validate(spec: &ModelSpec) -> Result<ValidatedModel, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    let habitat = match &spec.habitat {
        None => {
            diags.push(Diagnostic::error("E214", Span::new(1, 1), "no habitat declared"));
            None
        }
        Some((decl, span)) => {
            let built = match decl {
                HabitatDecl::Ring(n) if *n < 1 => Err(format!("ring size {n} must be at least 1")),
                HabitatDecl::Ring(n) => Habitat::ring(*n as usize).map_err(|e| e.to_string()),
                HabitatDecl::Graph { nodes, edges } => {
                    Habitat::graph(nodes.clone(), edges).map_err(|e| e.to_string())
                }
            };
            match built {
                Ok(h) => Some(h),
                Err(msg) => {
                    diags.push(Diagnostic::error("E212", *span, msg));
                    None
                }
            }
        }
    };

    let mut species_names = HashSet::new();
    let mut defs = Definitions::new();
    let mut def_spans = BTreeMap::new();
    let mut def_order = Vec::new();
    let mut species_of = BTreeMap::new();
    let mut params = BTreeMap::new();
    for sp in &spec.species {
        if !species_names.insert(sp.name.clone()) {
            diags.push(Diagnostic::error(
                "E211",
                sp.span,
                format!("duplicate species `{}`", sp.name),
            ));
        }
        for p in &sp.params {
            if params.contains_key(&p.name) {
                diags.push(Diagnostic::error(
                    "E211",
                    p.span,
                    format!("duplicate parameter `{}`", p.name),
                ));
            } else {
                params.insert(p.name.clone(), p.value.clone());
            }
        }
        for p in &sp.processes {
            if defs.contains_key(&p.name) {
                diags.push(Diagnostic::error(
                    "E211",
                    p.span,
                    format!("duplicate process `{}`", p.name),
                ));
            } else {
                defs.insert(p.name.clone(), p.term.clone());
                def_spans.insert(p.name.clone(), p.span);
                def_order.push(p.name.clone());
                species_of.insert(p.name.clone(), sp.name.clone());
            }
        }
    }

    let restricted: BTreeSet<String> = spec.system.restrict.iter().cloned().collect();

    let mut checker = Checker {
        habitat: habitat.as_ref(),
        defs: &defs,
        params: &params,
        diags: Vec::new(),
        uses_neighbor_choice: false,
    };
    for name in &def_order {
        checker.term(&defs[name], def_spans[name], false);
    }

    // Unguarded recursion: cycles in the graph of unguarded references.
    let mut reported: HashSet<String> = HashSet::new();
    for start in &def_order {
        let mut stack = vec![(start.clone(), vec![start.clone()])];
        let mut seen = HashSet::new();
        while let Some((cur, path)) = stack.pop() {
            let mut refs = Vec::new();
            if let Some(body) = defs.get(&cur) {
                unguarded_refs(body, &mut refs);
            }
            for r in refs {
                if &r == start {
                    let mut cycle = path.clone();
                    cycle.push(r.clone());
                    let mut members: Vec<String> = path.clone();
                    members.sort();
                    if members.iter().all(|m| !reported.contains(m)) {
                        reported.extend(members);
                        checker.diags.push(Diagnostic::error(
                            "E202",
                            def_spans[start],
                            format!("unguarded recursion through {}", cycle.join(" -> ")),
                        ));
                    }
                } else if seen.insert(r.clone()) {
                    let mut p = path.clone();
                    p.push(r.clone());
                    stack.push((r, p));
                }
            }
        }
    }

    let mut entries = Vec::new();
    let mut reachable_roots = Vec::new();
    for e in &spec.system.entries {
        checker.term(&e.term, e.span, false);
        all_refs(&e.term, &mut reachable_roots);
        let location = habitat.as_ref().and_then(|h| {
            let idx = h.location_index(&e.location);
            if idx.is_none() {
                checker.diags.push(Diagnostic::error(
                    "E207",
                    e.span,
                    format!("unknown location `{}`", e.location),
                ));
            }
            idx
        });
        if e.count < 0 {
            checker.diags.push(Diagnostic::error(
                "E210",
                e.span,
                format!("population count {} is negative", e.count),
            ));
        }
        let species = match &e.species {
            Some(s) if species_names.contains(s) => Some(s.clone()),
            Some(s) => {
                checker.diags.push(Diagnostic::error(
                    "E213",
                    e.span,
                    format!("unknown species `{s}`"),
                ));
                None
            }
            None => {
                let mut refs = Vec::new();
                all_refs(&e.term, &mut refs);
                let inferred = refs
                    .iter()
                    .find_map(|r| species_of.get(r).cloned())
                    .or_else(|| (spec.species.len() == 1).then(|| spec.species[0].name.clone()));
                if inferred.is_none() {
                    checker.diags.push(Diagnostic::error(
                        "E213",
                        e.span,
                        "cannot infer the species of this entry; add `of SPECIES`",
                    ));
                }
                inferred
            }
        };
        if let (Some(location), Some(species)) = (location, species) {
            if e.count >= 0 {
                entries.push(LocatedEntry {
                    term: e.term.clone(),
                    species,
                    location,
                    count: e.count as u64,
                });
            }
        }
    }
    let uses_neighbor_choice = checker.uses_neighbor_choice;
    diags.extend(checker.diags);

    // Channel rules apply to everything reachable from the system.
    let mut reachable: Vec<String> = Vec::new();
    let mut queue = reachable_roots;
    let mut seen = HashSet::new();
    while let Some(name) = queue.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        if let Some(body) = defs.get(&name) {
            reachable.push(name.clone());
            all_refs(body, &mut queue);
        }
    }
    for name in &def_order {
        if reachable.contains(name) {
            channel_checks(&defs[name], &restricted, def_spans[name], &mut diags);
        }
    }
    for e in &spec.system.entries {
        channel_checks(&e.term, &restricted, e.span, &mut diags);
    }

    if uses_neighbor_choice {
        if let Some(h) = &habitat {
            if let Some(isolated) = (0..h.size()).find(|&l| h.adjacency()[l].is_empty()) {
                diags.push(Diagnostic::error(
                    "E215",
                    spec.habitat.as_ref().map(|(_, s)| *s).unwrap_or_default(),
                    format!(
                        "neighbor choice is used but location `{}` has no neighbors",
                        h.name(isolated)
                    ),
                ));
            }
        }
    }

    if diags.iter().any(Diagnostic::is_error) {
        return Err(diags);
    }
    Ok(ValidatedModel {
        spec: spec.clone(),
        habitat: habitat.expect("habitat present when there are no errors"),
        defs,
        params,
        restricted,
        species_of,
        entries,
        warnings: diags,
    })
}
