use std::collections::BTreeSet;

use super::lexer::{tokenize, Tok, Token};
use super::{ScriptError, ScriptErrorKind};
use crate::mtheory::{
    Aggregate, BinOp, CategoricalCsd, Cld, CldSpec, ContextNode, Cpc, Csd, Expr, FormulaCsd, LinearGaussianCsd,
    LinearTerm, MFrag, MTheory, ParentKind, ParentRef, ResidentNode, ValueSpace,
};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

type PResult<T> = Result<T, ScriptError>;

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        let toks = tokenize(text)?;
        let lines = text.lines().count().max(1);
        let last = text.lines().last().map_or(0, |l| l.chars().count());
        Ok(Parser {
            toks,
            pos: 0,
            end: (lines, last + 1),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col))
    }

    fn error(&self, kind: ScriptErrorKind) -> ScriptError {
        let (l, c) = self.here();
        ScriptError::new(kind, l, c)
    }

    fn unexpected(&self, expected: &str) -> ScriptError {
        match self.peek() {
            Some(t) => self.error(ScriptErrorKind::UnexpectedToken {
                found: t.describe(),
                expected: expected.into(),
            }),
            None => self.error(ScriptErrorKind::UnexpectedEnd {
                expected: expected.into(),
            }),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
    }

    fn keyword(&mut self, word: &str) -> PResult<()> {
        if self.peek_ident(word) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{word}'")))
        }
    }

    fn done(&self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.unexpected("end of input")),
        }
    }

    // ---- MTheory ----

    fn mtheory(&mut self) -> PResult<MTheory> {
        let mut mfrags = Vec::new();
        while self.peek().is_some() {
            mfrags.push(self.mfrag()?);
        }
        Ok(MTheory::new(mfrags))
    }

    fn mfrag(&mut self) -> PResult<MFrag> {
        self.expect(Tok::LBracket)?;
        let head = self.ident()?;
        if !(head.starts_with('F') && head[1..].chars().all(|c| c.is_ascii_digit())) {
            self.pos -= 1;
            return Err(self.unexpected("MFrag block 'F:'"));
        }
        self.expect(Tok::Colon)?;
        let mut frag = MFrag::new(self.ident()?);
        let mut uses: Vec<(String, usize, usize)> = Vec::new();
        while !self.eat(&Tok::RBracket) {
            self.expect(Tok::LBracket)?;
            let (l, c) = self.here();
            match self.ident()?.as_str() {
                "C" => {
                    self.expect(Tok::Colon)?;
                    loop {
                        let node = self.context(&mut uses)?;
                        frag.contexts.push(node);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                }
                "R" => {
                    self.expect(Tok::Colon)?;
                    let r = self.resident(&mut uses)?;
                    frag.residents.push(r);
                }
                other => {
                    return Err(ScriptError::new(
                        ScriptErrorKind::UnexpectedToken {
                            found: format!("'{other}'"),
                            expected: "'C' or 'R' block".into(),
                        },
                        l,
                        c,
                    ))
                }
            }
        }
        let declared: BTreeSet<&str> = frag
            .contexts
            .iter()
            .filter_map(|c| match c {
                ContextNode::IsA { ov, .. } => Some(ov.as_str()),
                _ => None,
            })
            .collect();
        if let Some((ov, l, c)) = uses.iter().find(|(ov, _, _)| !declared.contains(ov.as_str())) {
            return Err(ScriptError::new(ScriptErrorKind::UndeclaredOrdinaryVariable(ov.clone()), *l, *c));
        }
        Ok(frag)
    }

    fn ov_use(&mut self, uses: &mut Vec<(String, usize, usize)>) -> PResult<String> {
        let (l, c) = self.here();
        let ov = self.ident()?;
        uses.push((ov.clone(), l, c));
        Ok(ov)
    }

    fn ov_args(&mut self, uses: &mut Vec<(String, usize, usize)>) -> PResult<Vec<String>> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.ov_use(uses)?];
        while self.eat(&Tok::Comma) {
            args.push(self.ov_use(uses)?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn context(&mut self, uses: &mut Vec<(String, usize, usize)>) -> PResult<ContextNode> {
        if self.peek_ident("IsA") && self.peek_at(1) == Some(&Tok::LParen) {
            self.pos += 2;
            let ov = self.ident()?;
            self.expect(Tok::Comma)?;
            let entity_type = self.ident()?;
            self.expect(Tok::RParen)?;
            return Ok(ContextNode::IsA { ov, entity_type });
        }
        let (l, c) = self.here();
        let first = self.ident()?;
        if self.eat(&Tok::Eq) {
            uses.push((first.clone(), l, c));
            if self.peek_at(1) == Some(&Tok::LParen) {
                let function = self.ident()?;
                let args = self.ov_args(uses)?;
                Ok(ContextNode::Relational {
                    ov: first,
                    function,
                    args,
                })
            } else {
                let right = self.ov_use(uses)?;
                Ok(ContextNode::Equality { left: first, right })
            }
        } else if self.peek() == Some(&Tok::LParen) {
            let args = self.ov_args(uses)?;
            Ok(ContextNode::Predicate { function: first, args })
        } else {
            Err(self.unexpected("'=' or '('"))
        }
    }

    fn resident(&mut self, uses: &mut Vec<(String, usize, usize)>) -> PResult<ResidentNode> {
        let mut r = ResidentNode::new(self.ident()?, vec![]);
        r.args = self.ov_args(uses)?;
        let mut cld_pos = None;
        while !self.eat(&Tok::RBracket) {
            self.expect(Tok::LBracket)?;
            let block = self.ident()?;
            self.expect(Tok::Colon)?;
            match block.as_str() {
                "IP" | "RP" => {
                    let name = self.ident()?;
                    let args = self.ov_args(uses)?;
                    r.parents.push(ParentRef {
                        kind: if block == "IP" { ParentKind::Input } else { ParentKind::Resident },
                        name,
                        args,
                    });
                }
                "V" => r.value_space = Some(self.value_space()?),
                "L" => {
                    cld_pos = Some(self.here());
                    if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek_at(1) == Some(&Tok::RBracket) {
                        r.cld = Some(CldSpec::Named(self.ident()?));
                    } else {
                        r.cld = Some(CldSpec::Inline(self.lpdl()?));
                    }
                }
                _ => {
                    self.pos -= 2;
                    return Err(self.unexpected("'IP', 'RP', 'V' or 'L' block"));
                }
            }
            self.expect(Tok::RBracket)?;
        }
        if let (Some(CldSpec::Inline(cld)), Some(vs), Some((l, c))) = (&r.cld, &r.value_space, cld_pos) {
            check_against_value_space(cld, vs).map_err(|k| ScriptError::new(k, l, c))?;
        }
        Ok(r)
    }

    fn value_space(&mut self) -> PResult<ValueSpace> {
        match self.ident()?.as_str() {
            "cat" => {
                let mut states = vec![self.ident()?];
                while self.eat(&Tok::Pipe) {
                    states.push(self.ident()?);
                }
                Ok(ValueSpace::Categorical(states))
            }
            "cont" => Ok(ValueSpace::Continuous),
            "bool" => Ok(ValueSpace::Boolean),
            "entity" => Ok(ValueSpace::Entity(self.ident()?)),
            _ => {
                self.pos -= 1;
                Err(self.unexpected("'cat', 'cont', 'bool' or 'entity'"))
            }
        }
    }

    // ---- LPDL ----

    fn lpdl(&mut self) -> PResult<Cld> {
        let start = self.here();
        let cld = if self.peek_ident("if") {
            let mut branches = Vec::new();
            let default;
            loop {
                self.keyword("if")?;
                let cpc = self.clause()?;
                self.expect(Tok::LBracket)?;
                let csd = self.body()?;
                self.expect(Tok::RBracket)?;
                branches.push((cpc, csd));
                if self.peek_ident("else") {
                    self.pos += 1;
                    if self.peek_ident("if") {
                        continue;
                    }
                    self.expect(Tok::LBracket)?;
                    default = self.body()?;
                    self.expect(Tok::RBracket)?;
                    break;
                } else if self.peek_ident("if") {
                    continue;
                } else {
                    return Err(self.error(ScriptErrorKind::BadDistributionForm(
                        "distribution has no 'else' branch".into(),
                    )));
                }
            }
            Cld { branches, default }
        } else {
            Cld::default_only(self.body()?)
        };
        check_branch_states(&cld).map_err(|k| ScriptError::new(k, start.0, start.1))?;
        Ok(cld)
    }

    fn clause(&mut self) -> PResult<Cpc> {
        self.keyword("some")?;
        let mut ovs = vec![self.ident()?];
        while self.eat(&Tok::Dot) || self.eat(&Tok::Comma) {
            ovs.push(self.ident()?);
        }
        self.keyword("have")?;
        self.expect(Tok::LParen)?;
        let mut conditions = Vec::new();
        loop {
            let p = self.ident()?;
            self.expect(Tok::Eq)?;
            let s = self.ident()?;
            conditions.push((p, s));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Cpc::from_parts(ovs, conditions))
    }

    fn body(&mut self) -> PResult<Csd> {
        let start = self.here();
        let bad = |m: &str| ScriptError::new(ScriptErrorKind::BadDistributionForm(m.into()), start.0, start.1);
        if matches!(self.peek(), Some(Tok::Ident(_))) && self.peek_at(1) == Some(&Tok::Eq) {
            let mut entries: Vec<(String, Expr)> = Vec::new();
            loop {
                let (l, c) = self.here();
                let s = self.ident()?;
                self.expect(Tok::Eq)?;
                let e = self.expr()?;
                if entries.iter().any(|(x, _)| *x == s) {
                    return Err(ScriptError::new(
                        ScriptErrorKind::BadDistributionForm(format!("state {s} assigned twice")),
                        l,
                        c,
                    ));
                }
                if randomness(&e).map_err(|m| bad(&m))? {
                    return Err(bad("NormalDist cannot appear in a categorical assignment"));
                }
                entries.push((s, e));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            if entries.iter().all(|(_, e)| matches!(e, Expr::Number(_))) {
                Ok(Csd::Categorical(CategoricalCsd {
                    entries: entries
                        .into_iter()
                        .map(|(s, e)| match e {
                            Expr::Number(x) => (s, x),
                            _ => unreachable!(),
                        })
                        .collect(),
                }))
            } else {
                Ok(Csd::Formula(FormulaCsd::Categorical(entries)))
            }
        } else {
            let e = self.expr()?;
            randomness(&e).map_err(|m| bad(&m))?;
            Ok(match linearize(&e) {
                Some(l) => Csd::LinearGaussian(l),
                None => Csd::Formula(FormulaCsd::Continuous(e)),
            })
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.term()?;
        loop {
            let op = if self.eat(&Tok::Plus) {
                BinOp::Add
            } else if self.eat(&Tok::Minus) {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            e = Expr::binary(op, e, self.term()?);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat(&Tok::Star) {
                BinOp::Mul
            } else if self.eat(&Tok::Slash) {
                BinOp::Div
            } else {
                return Ok(e);
            };
            e = Expr::binary(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            if let Some(Tok::Number(x)) = self.peek() {
                let x = *x;
                self.pos += 1;
                return Ok(Expr::Number(-x));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn integer(&mut self) -> PResult<u32> {
        match self.peek() {
            Some(Tok::Number(x)) if x.fract() == 0.0 && *x >= 0.0 => {
                let x = *x as u32;
                self.pos += 1;
                Ok(x)
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().cloned() {
            Some(Tok::Number(x)) => {
                self.pos += 1;
                Ok(Expr::Number(x))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let (l, c) = self.here();
                self.pos += 1;
                if !self.eat(&Tok::LParen) {
                    return Ok(Expr::Name(name));
                }
                let e = match name.as_str() {
                    "CARDINALITY" => Expr::Cardinality(self.ident()?),
                    "theta" => {
                        let i = self.integer()?;
                        self.expect(Tok::Comma)?;
                        Expr::Theta(i, self.integer()?)
                    }
                    "NormalDist" => {
                        let m = self.expr()?;
                        self.expect(Tok::Comma)?;
                        Expr::Normal(Box::new(m), Box::new(self.expr()?))
                    }
                    other => match Aggregate::from_name(other) {
                        Some(f) => Expr::Aggregate(f, self.ident()?),
                        None => return Err(ScriptError::new(ScriptErrorKind::UnknownFunction(name), l, c)),
                    },
                };
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Whether an expression has a random (`NormalDist`) part; errors on shapes that are
/// not Gaussian.
fn randomness(e: &Expr) -> Result<bool, String> {
    Ok(match e {
        Expr::Normal(a, b) => {
            if randomness(a)? || randomness(b)? {
                return Err("NormalDist arguments must be deterministic".into());
            }
            true
        }
        Expr::Neg(a) => randomness(a)?,
        Expr::Binary(op, a, b) => {
            let (ra, rb) = (randomness(a)?, randomness(b)?);
            match op {
                BinOp::Mul if ra && rb => return Err("product of two random terms".into()),
                BinOp::Div if rb => return Err("division by a random term".into()),
                _ => ra || rb,
            }
        }
        _ => false,
    })
}

fn additive_terms(e: &Expr, sign: f64, out: &mut Vec<(f64, Expr)>) {
    match e {
        Expr::Binary(BinOp::Add, a, b) => {
            additive_terms(a, sign, out);
            additive_terms(b, sign, out);
        }
        Expr::Binary(BinOp::Sub, a, b) => {
            additive_terms(a, sign, out);
            additive_terms(b, -sign, out);
        }
        Expr::Neg(a) => additive_terms(a, -sign, out),
        other => out.push((sign, other.clone())),
    }
}

fn parent_term(e: &Expr) -> Option<(String, Option<Aggregate>)> {
    match e {
        Expr::Name(p) => Some((p.clone(), None)),
        Expr::Aggregate(f, p) => Some((p.clone(), Some(*f))),
        _ => None,
    }
}

/// Recognises `c0 + Σ ci·Parent + NormalDist(a, b)`.
pub(crate) fn linearize(e: &Expr) -> Option<LinearGaussianCsd> {
    let mut terms = Vec::new();
    additive_terms(e, 1.0, &mut terms);
    let mut out = LinearGaussianCsd {
        intercept: 0.0,
        terms: vec![],
        variance: 0.0,
    };
    let mut normals = 0;
    for (sign, t) in terms {
        match &t {
            Expr::Number(c) => out.intercept += sign * c,
            Expr::Normal(a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Number(a), Expr::Number(b)) => {
                    out.intercept += sign * a;
                    out.variance += b;
                    normals += 1;
                }
                _ => return None,
            },
            Expr::Binary(BinOp::Mul, a, b) => {
                let (c, p) = match (a.as_ref(), b.as_ref()) {
                    (Expr::Number(c), p) | (p, Expr::Number(c)) => (*c, parent_term(p)?),
                    _ => return None,
                };
                out.terms.push(LinearTerm {
                    parent: p.0,
                    coefficient: sign * c,
                    aggregate: p.1,
                });
            }
            other => {
                let (p, agg) = parent_term(other)?;
                out.terms.push(LinearTerm {
                    parent: p,
                    coefficient: sign,
                    aggregate: agg,
                });
            }
        }
    }
    (normals == 1).then_some(out)
}

fn check_branch_states(cld: &Cld) -> Result<(), ScriptErrorKind> {
    let continuous = cld.default.is_continuous();
    let reference: Option<BTreeSet<&str>> = cld.default.states().map(|s| s.into_iter().collect());
    for csd in cld.csds() {
        if csd.is_continuous() != continuous {
            return Err(ScriptErrorKind::BadDistributionForm(
                "branches mix categorical and continuous distributions".into(),
            ));
        }
        if let (Some(r), Some(s)) = (&reference, csd.states()) {
            let s: BTreeSet<&str> = s.into_iter().collect();
            if let Some(missing) = r.symmetric_difference(&s).next() {
                return Err(ScriptErrorKind::StatesNotCovered(format!(
                    "state {missing} is not assigned in every branch"
                )));
            }
        }
    }
    Ok(())
}

fn check_against_value_space(cld: &Cld, vs: &ValueSpace) -> Result<(), ScriptErrorKind> {
    match vs.states() {
        Some(states) => {
            for csd in cld.csds() {
                let Some(got) = csd.states() else {
                    return Err(ScriptErrorKind::BadDistributionForm(
                        "continuous distribution for a discrete node".into(),
                    ));
                };
                for s in &states {
                    if !got.contains(&s.as_str()) {
                        return Err(ScriptErrorKind::StatesNotCovered(format!("state {s} has no probability")));
                    }
                }
                if let Some(extra) = got.iter().find(|g| !states.iter().any(|s| s == *g)) {
                    return Err(ScriptErrorKind::StatesNotCovered(format!("{extra} is not a state of the node")));
                }
            }
            Ok(())
        }
        None if cld.default.is_continuous() => Ok(()),
        None => Err(ScriptErrorKind::BadDistributionForm(
            "categorical distribution for a non-discrete node".into(),
        )),
    }
}

/// Parses an MTheory script.
pub fn parse_mtheory(text: &str) -> Result<MTheory, ScriptError> {
    let mut p = Parser::new(text)?;
    let m = p.mtheory()?;
    m.validate().map_err(|e| ScriptError::new(ScriptErrorKind::Model(e), 0, 0))?;
    Ok(m)
}

/// Parses a standalone local-distribution script.
pub fn parse_lpdl(text: &str) -> Result<Cld, ScriptError> {
    let mut p = Parser::new(text)?;
    let cld = p.lpdl()?;
    p.done()?;
    Ok(cld)
}

pub fn parse_expr(text: &str) -> Result<Expr, ScriptError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.done()?;
    Ok(e)
}
