//! Symbolic expressions over lagged occupancy variables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Habitat, HabitatKind};
use crate::rational::Rational;

/// Where a variable is read.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Loc {
    Abs(usize),
    /// Offset from the location the expression is attached to.
    Rel(i64),
    /// The location bound by the innermost neighbor sum.
    Bound,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    pub state: usize,
    pub loc: Loc,
    pub lag: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Expr {
    Const(Rational),
    Param(String),
    Var(Var),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    /// Division with the convention `x / 0 = 0`.
    Div(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    /// Sum of `body` over the neighbors of `center`, with `Loc::Bound` naming the neighbor.
    NeighborSum { center: Loc, body: Box<Expr> },
    /// `1 / |Nb(loc)|`.
    InvDegree(Loc),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Rational::zero())
    }

    pub fn constant(r: Rational) -> Expr {
        Expr::Const(r)
    }

    pub fn var(state: usize, loc: Loc, lag: u32) -> Expr {
        Expr::Var(Var { state, loc, lag })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn add(terms: Vec<Expr>) -> Expr {
        Expr::Add(terms)
    }

    pub fn mul(factors: Vec<Expr>) -> Expr {
        Expr::Mul(factors)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Add(vec![a, Expr::Mul(vec![Expr::Const(Rational::from(-1)), b])])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }

    /// Applies `f` to every variable, bottom-up, replacing it by the returned expression.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Expr) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::InvDegree(_) => self.clone(),
            Expr::Var(v) => f(v),
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.map_vars(f)).collect()),
            Expr::Mul(ts) => Expr::Mul(ts.iter().map(|t| t.map_vars(f)).collect()),
            Expr::Div(a, b) => Expr::div(a.map_vars(f), b.map_vars(f)),
            Expr::Min(a, b) => Expr::min(a.map_vars(f), b.map_vars(f)),
            Expr::NeighborSum { center, body } => Expr::NeighborSum {
                center: center.clone(),
                body: Box::new(body.map_vars(f)),
            },
        }
    }

    /// Rewrites every location through `f` (including neighbor-sum centers and degrees).
    pub fn map_locs(&self, f: &impl Fn(&Loc) -> Loc) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => self.clone(),
            Expr::InvDegree(l) => Expr::InvDegree(f(l)),
            Expr::Var(v) => Expr::Var(Var {
                state: v.state,
                loc: f(&v.loc),
                lag: v.lag,
            }),
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.map_locs(f)).collect()),
            Expr::Mul(ts) => Expr::Mul(ts.iter().map(|t| t.map_locs(f)).collect()),
            Expr::Div(a, b) => Expr::div(a.map_locs(f), b.map_locs(f)),
            Expr::Min(a, b) => Expr::min(a.map_locs(f), b.map_locs(f)),
            Expr::NeighborSum { center, body } => Expr::NeighborSum {
                center: f(center),
                body: Box::new(body.map_locs(f)),
            },
        }
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(&Var)) {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::InvDegree(_) => {}
            Expr::Var(v) => f(v),
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| t.visit_vars(f)),
            Expr::Div(a, b) | Expr::Min(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::NeighborSum { body, .. } => body.visit_vars(f),
        }
    }

    pub fn shift_lag(&self, by: u32) -> Expr {
        self.map_vars(&mut |v| {
            Expr::Var(Var {
                state: v.state,
                loc: v.loc.clone(),
                lag: v.lag + by,
            })
        })
    }

    /// Replaces neighbor sums and inverse degrees centered at absolute locations
    /// by explicit sums over the habitat's neighbors.
    pub fn expand_neighbors(&self, habitat: &Habitat) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Var(_) => self.clone(),
            Expr::InvDegree(Loc::Abs(l)) => {
                let deg = habitat.adjacency()[*l].len() as i64;
                if deg == 0 {
                    Expr::zero()
                } else {
                    Expr::Const(Rational::new(1, deg))
                }
            }
            Expr::InvDegree(_) => self.clone(),
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.expand_neighbors(habitat)).collect()),
            Expr::Mul(ts) => Expr::Mul(ts.iter().map(|t| t.expand_neighbors(habitat)).collect()),
            Expr::Div(a, b) => Expr::div(a.expand_neighbors(habitat), b.expand_neighbors(habitat)),
            Expr::Min(a, b) => Expr::min(a.expand_neighbors(habitat), b.expand_neighbors(habitat)),
            Expr::NeighborSum {
                center: Loc::Abs(c),
                body,
            } => Expr::Add(
                habitat.adjacency()[*c]
                    .iter()
                    .map(|&nb| {
                        body.map_locs(&|l| match l {
                            Loc::Bound => Loc::Abs(nb),
                            other => other.clone(),
                        })
                        .expand_neighbors(habitat)
                    })
                    .collect(),
            ),
            Expr::NeighborSum { .. } => self.clone(),
        }
    }

    pub fn substitute_params(&self, values: &BTreeMap<String, Rational>) -> Expr {
        match self {
            Expr::Param(p) => match values.get(p) {
                Some(v) => Expr::Const(v.clone()),
                None => self.clone(),
            },
            Expr::Const(_) | Expr::Var(_) | Expr::InvDegree(_) => self.clone(),
            Expr::Add(ts) => Expr::Add(ts.iter().map(|t| t.substitute_params(values)).collect()),
            Expr::Mul(ts) => Expr::Mul(ts.iter().map(|t| t.substitute_params(values)).collect()),
            Expr::Div(a, b) => Expr::div(a.substitute_params(values), b.substitute_params(values)),
            Expr::Min(a, b) => Expr::min(a.substitute_params(values), b.substitute_params(values)),
            Expr::NeighborSum { center, body } => Expr::NeighborSum {
                center: center.clone(),
                body: Box::new(body.substitute_params(values)),
            },
        }
    }

    /// Canonical form: a sum of coefficient-times-atom-product terms with
    /// constants folded, zero terms dropped and equal atoms merged.
    ///
    /// `min` with a zero operand simplifies to zero, which assumes operands
    /// are nonnegative occupancies.
    pub fn normalize(&self) -> Expr {
        Poly::from_expr(self).into_expr()
    }

    /// Coefficient polynomial (over parameters) of a product of atoms in the
    /// normalized form, if present.
    pub fn coefficient_of(&self, atoms: &[Expr]) -> Option<BTreeMap<Vec<String>, Rational>> {
        let poly = Poly::from_expr(self);
        let mut key: Vec<Expr> = atoms.iter().map(|a| a.normalize()).collect();
        key.sort();
        poly.0.get(&key).map(|c| c.0.clone())
    }

    /// Evaluates with absolute locations only; `values[state * m + loc]`.
    pub fn eval(&self, values: &[f64], m: usize, params: &BTreeMap<String, f64>, habitat: &Habitat) -> f64 {
        Compiled::compile(self, m, None, params, habitat).eval(values)
    }
}

/// Product of parameters (sorted, with repetition) to coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Coef(BTreeMap<Vec<String>, Rational>);

impl Coef {
    fn constant(c: Rational) -> Coef {
        let mut m = BTreeMap::new();
        if !c.is_zero() {
            m.insert(Vec::new(), c);
        }
        Coef(m)
    }

    fn add_assign(&mut self, other: &Coef) {
        for (k, v) in &other.0 {
            let slot = self.0.entry(k.clone()).or_insert_with(Rational::zero);
            *slot = &*slot + v;
            if slot.is_zero() {
                self.0.remove(k);
            }
        }
    }

    fn mul(&self, other: &Coef) -> Coef {
        let mut out = Coef::default();
        for (ka, va) in &self.0 {
            for (kb, vb) in &other.0 {
                let mut k = ka.clone();
                k.extend(kb.iter().cloned());
                k.sort();
                let mut term = BTreeMap::new();
                term.insert(k, va * vb);
                out.add_assign(&Coef(term));
            }
        }
        out
    }

    fn as_constant(&self) -> Option<Rational> {
        match self.0.len() {
            0 => Some(Rational::zero()),
            1 => self.0.get(&Vec::new()).cloned(),
            _ => None,
        }
    }
}

/// Sorted atom product to coefficient.
#[derive(Debug, Clone, Default)]
struct Poly(BTreeMap<Vec<Expr>, Coef>);

impl Poly {
    fn constant(c: Rational) -> Poly {
        Poly::term(Vec::new(), Coef::constant(c))
    }

    fn term(atoms: Vec<Expr>, coef: Coef) -> Poly {
        let mut m = BTreeMap::new();
        if !coef.0.is_empty() {
            m.insert(atoms, coef);
        }
        Poly(m)
    }

    fn atom(e: Expr) -> Poly {
        Poly::term(vec![e], Coef::constant(Rational::one()))
    }

    fn add_assign(&mut self, other: Poly) {
        for (atoms, coef) in other.0 {
            let slot = self.0.entry(atoms.clone()).or_default();
            slot.add_assign(&coef);
            if slot.0.is_empty() {
                self.0.remove(&atoms);
            }
        }
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (aa, ca) in &self.0 {
            for (ab, cb) in &other.0 {
                let mut atoms = aa.clone();
                atoms.extend(ab.iter().cloned());
                atoms.sort();
                out.add_assign(Poly::term(atoms, ca.mul(cb)));
            }
        }
        out
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn as_constant(&self) -> Option<Rational> {
        match self.0.len() {
            0 => Some(Rational::zero()),
            1 => self.0.get(&Vec::new()).and_then(Coef::as_constant),
            _ => None,
        }
    }

    fn from_expr(e: &Expr) -> Poly {
        match e {
            Expr::Const(c) => Poly::constant(c.clone()),
            Expr::Param(p) => {
                let mut m = BTreeMap::new();
                m.insert(vec![p.clone()], Rational::one());
                Poly::term(Vec::new(), Coef(m))
            }
            Expr::Var(_) | Expr::InvDegree(_) => Poly::atom(e.clone()),
            Expr::Add(ts) => {
                let mut acc = Poly::default();
                for t in ts {
                    acc.add_assign(Poly::from_expr(t));
                }
                acc
            }
            Expr::Mul(ts) => {
                let mut acc = Poly::constant(Rational::one());
                for t in ts {
                    acc = acc.mul(&Poly::from_expr(t));
                    if acc.is_zero() {
                        break;
                    }
                }
                acc
            }
            Expr::Div(a, b) => {
                let pa = Poly::from_expr(a);
                let pb = Poly::from_expr(b);
                if pa.is_zero() || pb.is_zero() {
                    return Poly::default();
                }
                if let Some(c) = pb.as_constant() {
                    return pa.mul(&Poly::constant(c.recip()));
                }
                Poly::atom(Expr::div(pa.into_expr(), pb.into_expr()))
            }
            Expr::Min(a, b) => {
                let pa = Poly::from_expr(a);
                let pb = Poly::from_expr(b);
                if pa.is_zero() || pb.is_zero() {
                    return Poly::default();
                }
                if let (Some(x), Some(y)) = (pa.as_constant(), pb.as_constant()) {
                    return Poly::constant(if x <= y { x } else { y });
                }
                let (ea, eb) = (pa.into_expr(), pb.into_expr());
                if ea == eb {
                    return Poly::from_expr(&ea);
                }
                Poly::atom(Expr::min(ea, eb))
            }
            Expr::NeighborSum { center, body } => {
                let pb = Poly::from_expr(body);
                if pb.is_zero() {
                    return Poly::default();
                }
                Poly::atom(Expr::NeighborSum {
                    center: center.clone(),
                    body: Box::new(pb.into_expr()),
                })
            }
        }
    }

    fn into_expr(self) -> Expr {
        let mut terms: Vec<Expr> = Vec::new();
        for (atoms, coef) in self.0 {
            let mut factors = Vec::new();
            if coef.0.len() == 1 {
                let (params, c) = coef.0.into_iter().next().expect("one entry");
                if !c.is_one() || (params.is_empty() && atoms.is_empty()) {
                    factors.push(Expr::Const(c));
                }
                factors.extend(params.into_iter().map(Expr::Param));
            } else {
                let monos = coef
                    .0
                    .into_iter()
                    .map(|(params, c)| {
                        let mut fs = Vec::new();
                        if !c.is_one() || params.is_empty() {
                            fs.push(Expr::Const(c));
                        }
                        fs.extend(params.into_iter().map(Expr::Param));
                        single_or(fs, Expr::Mul)
                    })
                    .collect();
                factors.push(Expr::Add(monos));
            }
            factors.extend(atoms);
            terms.push(single_or(factors, Expr::Mul));
        }
        match terms.len() {
            0 => Expr::zero(),
            _ => single_or(terms, Expr::Add),
        }
    }
}

fn single_or(mut items: Vec<Expr>, wrap: fn(Vec<Expr>) -> Expr) -> Expr {
    if items.len() == 1 {
        items.pop().expect("one item")
    } else {
        wrap(items)
    }
}

/// Expression with every location and parameter resolved, ready for fast
/// repeated floating-point evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Compiled {
    Const(f64),
    Var(usize),
    Add(Vec<Compiled>),
    Mul(Vec<Compiled>),
    Div(Box<Compiled>, Box<Compiled>),
    Min(Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    /// `anchor` resolves `Loc::Rel`; parameters missing from `params` are a caller bug.
    pub fn compile(
        e: &Expr,
        m: usize,
        anchor: Option<usize>,
        params: &BTreeMap<String, f64>,
        habitat: &Habitat,
    ) -> Compiled {
        Self::compile_in(e, m, anchor, None, params, habitat)
    }

    fn resolve(loc: &Loc, anchor: Option<usize>, bound: Option<usize>, habitat: &Habitat) -> usize {
        match loc {
            Loc::Abs(l) => *l,
            Loc::Rel(k) => {
                let a = anchor.expect("relative location without an anchor");
                match habitat.kind() {
                    HabitatKind::Ring => habitat.shift(a, *k),
                    HabitatKind::Graph => {
                        assert_eq!(*k, 0, "nonzero offset on a graph habitat");
                        a
                    }
                }
            }
            Loc::Bound => bound.expect("bound location outside a neighbor sum"),
        }
    }

    fn compile_in(
        e: &Expr,
        m: usize,
        anchor: Option<usize>,
        bound: Option<usize>,
        params: &BTreeMap<String, f64>,
        habitat: &Habitat,
    ) -> Compiled {
        let rec = |x: &Expr| Self::compile_in(x, m, anchor, bound, params, habitat);
        match e {
            Expr::Const(c) => Compiled::Const(c.to_f64()),
            Expr::Param(p) => Compiled::Const(
                *params
                    .get(p)
                    .unwrap_or_else(|| panic!("parameter `{p}` has no value")),
            ),
            Expr::Var(v) => {
                Compiled::Var(v.state * m + Self::resolve(&v.loc, anchor, bound, habitat))
            }
            Expr::InvDegree(l) => {
                let deg = habitat.adjacency()[Self::resolve(l, anchor, bound, habitat)].len();
                Compiled::Const(if deg == 0 { 0.0 } else { 1.0 / deg as f64 })
            }
            Expr::Add(ts) => Compiled::Add(ts.iter().map(rec).collect()),
            Expr::Mul(ts) => Compiled::Mul(ts.iter().map(rec).collect()),
            Expr::Div(a, b) => Compiled::Div(Box::new(rec(a)), Box::new(rec(b))),
            Expr::Min(a, b) => Compiled::Min(Box::new(rec(a)), Box::new(rec(b))),
            Expr::NeighborSum { center, body } => {
                let c = Self::resolve(center, anchor, bound, habitat);
                Compiled::Add(
                    habitat.adjacency()[c]
                        .iter()
                        .map(|&nb| Self::compile_in(body, m, anchor, Some(nb), params, habitat))
                        .collect(),
                )
            }
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            Compiled::Const(c) => *c,
            Compiled::Var(i) => values[*i],
            Compiled::Add(ts) => ts.iter().map(|t| t.eval(values)).sum(),
            Compiled::Mul(ts) => ts.iter().map(|t| t.eval(values)).product(),
            Compiled::Div(a, b) => {
                let d = b.eval(values);
                if d == 0.0 {
                    0.0
                } else {
                    a.eval(values) / d
                }
            }
            Compiled::Min(a, b) => a.eval(values).min(b.eval(values)),
        }
    }
}

/// How variables are written when printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStyle {
    /// `R3(t-1)@l`
    Equation,
    /// Table rows: the source population is `q`, others `q_R3`, lags omitted.
    Row { source: usize },
}

/// Renders expressions with state labels and location names.
pub struct Printer<'a> {
    pub labels: &'a [String],
    pub locations: &'a [String],
    pub style: VarStyle,
}

impl Printer<'_> {
    pub fn print(&self, e: &Expr) -> String {
        self.expr(e, 0)
    }

    fn loc(&self, loc: &Loc) -> String {
        match loc {
            Loc::Abs(l) => self
                .locations
                .get(*l)
                .cloned()
                .unwrap_or_else(|| format!("#{l}")),
            Loc::Rel(0) => "l".into(),
            Loc::Rel(k) if *k > 0 => format!("(l+{k})"),
            Loc::Rel(k) => format!("(l-{})", -k),
            Loc::Bound => "l'".into(),
        }
    }

    fn var(&self, v: &Var) -> String {
        let label = self
            .labels
            .get(v.state)
            .cloned()
            .unwrap_or_else(|| format!("R{}", v.state + 1));
        match self.style {
            VarStyle::Equation => {
                let lag = if v.lag == 0 {
                    "t".to_string()
                } else {
                    format!("t-{}", v.lag)
                };
                format!("{label}({lag})@{}", self.loc(&v.loc))
            }
            VarStyle::Row { source } => {
                let name = if v.state == source {
                    "q".to_string()
                } else {
                    format!("q_{label}")
                };
                if v.loc == Loc::Rel(0) {
                    name
                } else {
                    format!("{name}@{}", self.loc(&v.loc))
                }
            }
        }
    }

    /// `prec`: 0 sum context, 1 product factor, 2 atomic.
    fn expr(&self, e: &Expr, prec: u8) -> String {
        let s = match e {
            Expr::Const(c) => {
                let s = c.to_string();
                if c.is_negative() && prec > 0 {
                    return format!("({s})");
                }
                if prec > 1 && !c.is_integer() {
                    return format!("({s})");
                }
                return s;
            }
            Expr::Param(p) => return p.clone(),
            Expr::Var(v) => return self.var(v),
            Expr::InvDegree(l) => return format!("1/|Nb({})|", self.loc(l)),
            Expr::Min(a, b) => return format!("min({}, {})", self.expr(a, 0), self.expr(b, 0)),
            Expr::NeighborSum { center, body } => {
                return format!("sum[l' in Nb({})] {}", self.loc(center), self.expr(body, 1))
            }
            Expr::Add(ts) => {
                let mut out = String::new();
                for (i, t) in ts.iter().enumerate() {
                    let (neg, body) = self.signed(t);
                    match (i, neg) {
                        (0, true) => out.push('-'),
                        (0, false) => {}
                        (_, true) => out.push_str(" - "),
                        (_, false) => out.push_str(" + "),
                    }
                    out.push_str(&body);
                }
                if prec > 0 && ts.len() > 1 {
                    return format!("({out})");
                }
                return out;
            }
            Expr::Mul(ts) => ts
                .iter()
                .map(|t| self.expr(t, 1))
                .collect::<Vec<_>>()
                .join("*"),
            Expr::Div(a, b) => format!("{}/{}", self.expr(a, 2), self.expr(b, 2)),
        };
        if prec > 1 {
            format!("({s})")
        } else {
            s
        }
    }

    /// Splits a leading negative constant off a summand.
    fn signed(&self, t: &Expr) -> (bool, String) {
        match t {
            Expr::Const(c) if c.is_negative() => (true, c.abs().to_string()),
            Expr::Mul(fs) => match fs.first() {
                Some(Expr::Const(c)) if c.is_negative() => {
                    let mut rest: Vec<Expr> = Vec::with_capacity(fs.len());
                    if !c.abs().is_one() {
                        rest.push(Expr::Const(c.abs()));
                    }
                    rest.extend(fs[1..].iter().cloned());
                    (true, self.expr(&single_or(rest, Expr::Mul), 0))
                }
                _ => (false, self.expr(t, 0)),
            },
            _ => (false, self.expr(t, 0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(state: usize) -> Expr {
        Expr::var(state, Loc::Rel(0), 1)
    }

    fn r(n: i64, d: i64) -> Expr {
        Expr::Const(Rational::new(n, d))
    }

    fn printer<'a>(labels: &'a [String]) -> Printer<'a> {
        Printer {
            labels,
            locations: &[],
            style: VarStyle::Equation,
        }
    }

    #[test]
    fn merges_like_terms_and_folds_constants() {
        let p = Expr::Param("p".into());
        let e = Expr::add(vec![
            Expr::mul(vec![r(2, 1), p.clone(), v(4)]),
            Expr::mul(vec![r(3, 1), Expr::sub(r(1, 1), p), v(4)]),
        ]);
        let labels: Vec<String> = (1..=7).map(|i| format!("R{i}")).collect();
        assert_eq!(printer(&labels).print(&e.normalize()), "(3 - p)*R5(t-1)@l");
    }

    #[test]
    fn drops_zero_terms() {
        let e = Expr::add(vec![v(0), Expr::mul(vec![r(-1, 1), v(0)]), Expr::mul(vec![r(0, 1), v(1)])]);
        assert!(e.normalize().is_zero());
    }

    #[test]
    fn min_remainder_cancels() {
        let x = Expr::add(vec![v(0), v(1)]);
        let matched = Expr::min(v(0), Expr::div(Expr::mul(vec![v(0), v(2)]), x));
        let total = Expr::add(vec![matched.clone(), Expr::sub(v(0), matched)]);
        assert_eq!(total.normalize(), v(0));
    }

    #[test]
    fn division_conventions() {
        assert!(Expr::div(v(0), r(0, 1)).normalize().is_zero());
        assert_eq!(Expr::div(v(0), r(2, 1)).normalize(), Expr::mul(vec![r(1, 2), v(0)]));
        assert!(Expr::min(r(0, 1), v(0)).normalize().is_zero());
    }

    #[test]
    fn normalize_is_idempotent() {
        let p = Expr::Param("p".into());
        let e = Expr::add(vec![
            Expr::mul(vec![p.clone(), Expr::min(v(1), Expr::div(Expr::mul(vec![v(1), v(2)]), Expr::add(vec![v(1), v(3)])))]),
            Expr::mul(vec![Expr::sub(r(1, 1), p), v(2)]),
            r(1, 3),
        ]);
        let once = e.normalize();
        assert_eq!(once.normalize(), once);
    }

    #[test]
    fn compiled_eval_matches_convention() {
        let hab = Habitat::ring(2).unwrap();
        let e = Expr::add(vec![
            Expr::div(Expr::var(0, Loc::Abs(0), 1), Expr::var(1, Loc::Abs(0), 1)),
            Expr::min(Expr::var(0, Loc::Abs(1), 1), r(1, 2)),
        ]);
        // values laid out state-major over 2 locations
        let vals = [3.0, 0.25, 0.0, 7.0];
        assert_eq!(e.eval(&vals, 2, &BTreeMap::new(), &hab), 0.0 + 0.25);
    }

    #[test]
    fn neighbor_sum_expands() {
        let hab = Habitat::ring(4).unwrap();
        let z = Expr::NeighborSum {
            center: Loc::Abs(0),
            body: Box::new(Expr::mul(vec![Expr::InvDegree(Loc::Bound), Expr::var(2, Loc::Bound, 1)])),
        };
        let expanded = z.expand_neighbors(&hab).normalize();
        let expected = Expr::add(vec![
            Expr::mul(vec![r(1, 2), Expr::var(2, Loc::Abs(1), 1)]),
            Expr::mul(vec![r(1, 2), Expr::var(2, Loc::Abs(3), 1)]),
        ])
        .normalize();
        assert_eq!(expanded, expected);
        let mut vals = vec![0.0; 12];
        vals[2 * 4 + 1] = 2.0;
        vals[2 * 4 + 3] = 6.0;
        assert_eq!(z.eval(&vals, 4, &BTreeMap::new(), &hab), 4.0);
    }

    #[test]
    fn printing_rows_and_offsets() {
        let labels: Vec<String> = (1..=3).map(|i| format!("R{i}")).collect();
        let row = Printer {
            labels: &labels,
            locations: &[],
            style: VarStyle::Row { source: 0 },
        };
        let e = Expr::mul(vec![r(1, 2), v(0)]);
        assert_eq!(row.print(&e), "1/2*q");
        let eq = printer(&labels);
        let e = Expr::add(vec![Expr::var(1, Loc::Rel(-1), 1), Expr::var(2, Loc::Rel(1), 1)]);
        assert_eq!(eq.print(&e), "R2(t-1)@(l-1) + R3(t-1)@(l+1)");
        let e = Expr::sub(v(0), Expr::min(v(0), v(1)));
        assert_eq!(eq.print(&e), "R1(t-1)@l - min(R1(t-1)@l, R2(t-1)@l)");
    }
}
