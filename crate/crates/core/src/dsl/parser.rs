use crate::model::{
    Action, HabitatDecl, LocationExpr, ModelSpec, ParamDef, ProbExpr, ProcessDef, ProcessTerm,
    Span, SpeciesDef, SystemEntry,
};
use crate::rational::Rational;

use super::lexer::{lex, Tok, Token};
use super::Diagnostic;

pub(crate) const KEYWORDS: &[&str] = &[
    "species", "param", "process", "habitat", "ring", "graph", "nodes", "edges", "system",
    "restrict", "of", "tick", "in", "out", "go", "pchoice", "over", "neighbors", "par", "myloc",
    "it",
];

/// Parses model text. Syntax errors stop at the first problem.
pub fn parse(src: &str) -> Result<ModelSpec, Diagnostic> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.model()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(s) => format!("number `{s}`"),
        Tok::Punct(c) => format!("`{c}`"),
        Tok::Eof => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let code = if *self.peek() == Tok::Eof { "E104" } else { "E101" };
        Diagnostic::error(
            code,
            self.span(),
            format!("expected {expected}, found {}", describe(self.peek())),
        )
    }

    fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    /// A non-keyword identifier.
    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// Location names may be identifiers or bare integers.
    fn location_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            Tok::Number(s) if !s.contains('.') => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("a location name")),
        }
    }

    fn integer(&mut self) -> PResult<i64> {
        let span = self.span();
        let neg = self.eat_punct('-');
        match self.peek().clone() {
            Tok::Number(s) => {
                self.bump();
                let v: i64 = s.parse().map_err(|_| {
                    Diagnostic::error("E103", span, format!("expected an integer, found `{s}`"))
                })?;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    /// `-`? NUMBER (`/` NUMBER)?
    fn rational(&mut self) -> PResult<Rational> {
        let span = self.span();
        let mut text = String::new();
        if self.eat_punct('-') {
            text.push('-');
        }
        match self.peek().clone() {
            Tok::Number(s) => {
                self.bump();
                text.push_str(&s);
            }
            _ => return Err(self.unexpected("a number")),
        }
        if self.is_punct('/') {
            if let Tok::Number(d) = self.peek_at(1).clone() {
                self.bump();
                self.bump();
                text.push('/');
                text.push_str(&d);
            }
        }
        text.parse().map_err(|_| {
            Diagnostic::error("E103", span, format!("malformed probability literal `{text}`"))
        })
    }

    fn model(&mut self) -> PResult<ModelSpec> {
        let mut spec = ModelSpec::default();
        let mut saw_system = false;
        loop {
            let span = self.span();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "species" => {
                    self.bump();
                    spec.species.push(self.species(span)?);
                }
                Tok::Ident(kw) if kw == "habitat" => {
                    self.bump();
                    let decl = self.habitat()?;
                    if spec.habitat.is_some() {
                        return Err(Diagnostic::error("E211", span, "duplicate habitat declaration"));
                    }
                    spec.habitat = Some((decl, span));
                }
                Tok::Ident(kw) if kw == "system" => {
                    self.bump();
                    if saw_system {
                        return Err(Diagnostic::error("E211", span, "duplicate system block"));
                    }
                    saw_system = true;
                    spec.system.span = span;
                    self.system(&mut spec)?;
                }
                Tok::Ident(kw) => {
                    return Err(Diagnostic::error("E106", span, format!("unknown keyword `{kw}`")))
                }
                _ => return Err(self.unexpected("`species`, `habitat` or `system`")),
            }
        }
        Ok(spec)
    }

    fn species(&mut self, span: Span) -> PResult<SpeciesDef> {
        let name = self.name("a species name")?;
        self.expect_punct('{')?;
        let mut def = SpeciesDef {
            name,
            params: Vec::new(),
            processes: Vec::new(),
            span,
        };
        while !self.eat_punct('}') {
            let span = self.span();
            if self.is_kw("param") {
                self.bump();
                let name = self.name("a parameter name")?;
                self.expect_punct('=')?;
                let value = self.rational()?;
                self.expect_punct(';')?;
                def.params.push(ParamDef { name, value, span });
            } else if self.is_kw("process") {
                self.bump();
                let name = self.name("a process name")?;
                self.expect_punct('=')?;
                let term = self.term()?;
                self.expect_punct(';')?;
                def.processes.push(ProcessDef { name, term, span });
            } else if let Tok::Ident(kw) = self.peek().clone() {
                return Err(Diagnostic::error("E106", span, format!("unknown keyword `{kw}`")));
            } else {
                return Err(self.unexpected("`param`, `process` or `}`"));
            }
        }
        Ok(def)
    }

    fn habitat(&mut self) -> PResult<HabitatDecl> {
        if self.is_kw("ring") {
            self.bump();
            self.expect_punct('(')?;
            let size = self.integer()?;
            self.expect_punct(')')?;
            self.eat_punct(';');
            return Ok(HabitatDecl::Ring(size));
        }
        if self.is_kw("graph") {
            self.bump();
            self.expect_punct('{')?;
            self.expect_kw("nodes")?;
            self.expect_punct('{')?;
            let mut nodes = Vec::new();
            while !self.eat_punct('}') {
                nodes.push(self.location_name()?);
                if !self.eat_punct(',') {
                    self.expect_punct('}')?;
                    break;
                }
            }
            self.expect_kw("edges")?;
            self.expect_punct('{')?;
            let mut edges = Vec::new();
            while !self.eat_punct('}') {
                let a = self.location_name()?;
                self.expect_punct('-')?;
                let b = self.location_name()?;
                edges.push((a, b));
                if !self.eat_punct(',') {
                    self.expect_punct('}')?;
                    break;
                }
            }
            self.expect_punct('}')?;
            return Ok(HabitatDecl::Graph { nodes, edges });
        }
        Err(self.unexpected("`ring` or `graph`"))
    }

    fn system(&mut self, spec: &mut ModelSpec) -> PResult<()> {
        self.expect_punct('{')?;
        while !self.eat_punct('}') {
            let span = self.span();
            let term = self.term()?;
            self.expect_punct('@')?;
            let location = self.location_name()?;
            self.expect_punct('*')?;
            let count = self.integer()?;
            let species = if self.is_kw("of") {
                self.bump();
                Some(self.name("a species name")?)
            } else {
                None
            };
            self.expect_punct(';')?;
            spec.system.entries.push(SystemEntry {
                term,
                location,
                count,
                species,
                span,
            });
        }
        if self.is_kw("restrict") {
            self.bump();
            self.expect_punct('{')?;
            while !self.eat_punct('}') {
                spec.system.restrict.push(self.name("a channel name")?);
                if !self.eat_punct(',') {
                    self.expect_punct('}')?;
                    break;
                }
            }
        }
        Ok(())
    }

    fn term(&mut self) -> PResult<ProcessTerm> {
        match self.peek().clone() {
            Tok::Number(n) if n == "0" => {
                self.bump();
                Ok(ProcessTerm::Nil)
            }
            Tok::Punct('(') => {
                self.bump();
                let t = self.term()?;
                self.expect_punct(')')?;
                Ok(t)
            }
            Tok::Ident(kw) => match kw.as_str() {
                "tick" => {
                    self.bump();
                    self.prefix_rest(Action::Tick)
                }
                "go" => {
                    self.bump();
                    let loc = self.location_expr()?;
                    self.prefix_rest(Action::Go(loc))
                }
                "in" | "out" => {
                    self.bump();
                    let ch = self.name("a channel name")?;
                    let action = if kw == "in" {
                        Action::Input(ch)
                    } else {
                        Action::Output(ch)
                    };
                    if self.is_punct('?') {
                        self.cond_rest(action)
                    } else {
                        self.prefix_rest(action)
                    }
                }
                "pchoice" => {
                    self.bump();
                    self.pchoice()
                }
                "par" => {
                    self.bump();
                    self.expect_punct('(')?;
                    let mut parts = vec![self.term()?];
                    while self.eat_punct(',') {
                        parts.push(self.term()?);
                    }
                    self.expect_punct(')')?;
                    Ok(ProcessTerm::Parallel(parts))
                }
                _ => {
                    let name = self.name("a process term")?;
                    if self.is_punct('?') {
                        self.cond_rest(Action::Input(name))
                    } else {
                        Ok(ProcessTerm::ConstRef(name))
                    }
                }
            },
            _ => Err(self.unexpected("a process term")),
        }
    }

    fn prefix_rest(&mut self, action: Action) -> PResult<ProcessTerm> {
        self.expect_punct('.')?;
        let cont = self.term()?;
        Ok(ProcessTerm::Prefix(action, Box::new(cont)))
    }

    fn cond_rest(&mut self, gamma: Action) -> PResult<ProcessTerm> {
        self.expect_punct('?')?;
        self.expect_punct('(')?;
        let then = self.term()?;
        self.expect_punct(',')?;
        let otherwise = self.term()?;
        self.expect_punct(')')?;
        Ok(ProcessTerm::CondComm {
            gamma,
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        })
    }

    fn pchoice(&mut self) -> PResult<ProcessTerm> {
        if self.is_kw("over") {
            self.bump();
            self.expect_kw("neighbors")?;
            self.expect_punct('{')?;
            let body = self.term()?;
            self.eat_punct(';');
            self.expect_punct('}')?;
            return Ok(ProcessTerm::NeighborChoice(Box::new(body)));
        }
        self.expect_punct('{')?;
        let mut branches = Vec::new();
        while !self.eat_punct('}') {
            let p = self.prob_expr()?;
            self.expect_punct(':')?;
            let t = self.term()?;
            branches.push((p, t));
            if !self.eat_punct(';') {
                self.expect_punct('}')?;
                break;
            }
        }
        if branches.is_empty() {
            return Err(self.unexpected("at least one probabilistic branch"));
        }
        Ok(ProcessTerm::ProbChoice(branches))
    }

    fn prob_expr(&mut self) -> PResult<ProbExpr> {
        let negate_first = self.eat_punct('-');
        let first = self.prob_term()?;
        let mut acc = ProbExpr::default().combine(&first, negate_first);
        loop {
            if self.eat_punct('+') {
                let t = self.prob_term()?;
                acc = acc.combine(&t, false);
            } else if self.eat_punct('-') {
                let t = self.prob_term()?;
                acc = acc.combine(&t, true);
            } else {
                return Ok(acc);
            }
        }
    }

    fn prob_term(&mut self) -> PResult<ProbExpr> {
        let span = self.span();
        let mut acc = self.prob_factor()?;
        while self.eat_punct('*') {
            let rhs = self.prob_factor()?;
            acc = if acc.params.is_empty() {
                rhs.scale(&acc.constant)
            } else if rhs.params.is_empty() {
                acc.scale(&rhs.constant)
            } else {
                return Err(Diagnostic::error(
                    "E105",
                    span,
                    "probability expressions must be linear in the parameters",
                ));
            };
        }
        Ok(acc)
    }

    fn prob_factor(&mut self) -> PResult<ProbExpr> {
        match self.peek().clone() {
            Tok::Number(_) => Ok(ProbExpr::constant(self.rational()?)),
            Tok::Punct('(') => {
                self.bump();
                let e = self.prob_expr()?;
                self.expect_punct(')')?;
                Ok(e)
            }
            Tok::Ident(_) => Ok(ProbExpr::param(&self.name("a parameter name")?)),
            _ => Err(self.unexpected("a probability")),
        }
    }

    fn location_expr(&mut self) -> PResult<LocationExpr> {
        if self.eat_punct('(') {
            let l = self.location_expr()?;
            self.expect_punct(')')?;
            return Ok(l);
        }
        if self.is_kw("it") {
            self.bump();
            return Ok(LocationExpr::It);
        }
        if self.is_kw("myloc") {
            self.bump();
            if self.is_punct('+') || self.is_punct('-') {
                let neg = self.is_punct('-');
                self.bump();
                let k = self.integer()?;
                return Ok(LocationExpr::MyLocOffset(if neg { -k } else { k }));
            }
            return Ok(LocationExpr::MyLoc);
        }
        Ok(LocationExpr::Literal(self.location_name()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RING: &str = "
        species s {
            param p = 1/2;
            process P0 = pchoice over neighbors { go it . tick . P1 };
            process P1 = pchoice { p: tick . par(P0, P0); 1-p: tick . par(P0, P0, P0) };
        }
        habitat ring(4);
        system { P0 @ 1 * 2; P0 @ 2 * 1; }
    ";

    #[test]
    fn parses_the_dispersal_model() {
        let spec = parse(RING).unwrap();
        assert_eq!(spec.species.len(), 1);
        let p1 = &spec.species[0].processes[1].term;
        let ProcessTerm::ProbChoice(branches) = p1 else {
            panic!("P1 should be a probabilistic choice")
        };
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].0, ProbExpr::param("p"));
        assert_eq!(branches[1].0.to_string(), "1-p");
        assert_eq!(spec.system.entries.len(), 2);
        assert_eq!(spec.habitat.as_ref().unwrap().0, HabitatDecl::Ring(4));
    }

    #[test]
    fn empty_system() {
        let spec = parse("system { }").unwrap();
        assert!(spec.system.entries.is_empty());
    }

    #[test]
    fn conditional_forms() {
        let spec = parse("species h { process s = out infect ? (0, tick . s); process w = infect ? (0, 0); }")
            .unwrap();
        let ProcessTerm::CondComm { gamma, .. } = &spec.species[0].processes[0].term else {
            panic!()
        };
        assert_eq!(*gamma, Action::Output("infect".into()));
        let ProcessTerm::CondComm { gamma, .. } = &spec.species[0].processes[1].term else {
            panic!()
        };
        assert_eq!(*gamma, Action::Input("infect".into()));
    }

    #[test]
    fn locations() {
        let spec = parse("species a { process A = go (myloc-1) . go myloc + 2 . go b . 0; }").unwrap();
        let t = spec.species[0].processes[0].term.to_string();
        assert_eq!(t, "go (myloc-1) . go (myloc+2) . go b . 0");
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse("species a {\n  process A = tick P;\n}").unwrap_err();
        assert_eq!(err.code, "E101");
        assert_eq!((err.span.line, err.span.col), (2, 20));
        assert_eq!(parse("spices a {}").unwrap_err().code, "E106");
        assert_eq!(parse("species a { process A = tick . ").unwrap_err().code, "E104");
        assert_eq!(
            parse("species a { param p = 0.1.2; }").unwrap_err().code,
            "E101"
        );
        assert_eq!(
            parse("species a { process A = pchoice { p*q: 0 }; }").unwrap_err().code,
            "E105"
        );
    }
}
