//! Recursive-descent parser and the closure/type checker.

use std::collections::HashMap;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::DslError;
use crate::grid::{Action, BlockFilter, Color, Corner, Dir};

/// Words that cannot name a state or register.
pub const RESERVED: &[&str] = &[
    "state", "reg", "goto", "set", "true", "false", "and", "or", "not", "holding", "on_block", "wall_adjacent",
    "at", "nearest_block_exists", "nearest_block", "corner", "empty_corner", "beside", "greedy_toward",
    "astar_toward", "avoid", "agent_x", "agent_y", "agent_pos", "width", "height", "lonely", "off_corner", "x",
    "y", "Up", "Down", "Left", "Right", "Interact", "Noop",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Furthest error seen, reported when every alternative fails.
    furthest: Option<DslError>,
}

type PResult<T> = Result<T, DslError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Ident(s)) => Some(s),
            _ => None,
        }
    }

    fn error_here(&mut self, msg: impl Into<String>) -> DslError {
        let (line, col) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self.toks.last().map_or((1, 1), |t| (t.line, t.col + t.tok.text().len())),
        };
        let found = self.peek().map_or("end of input".to_string(), |t| format!("`{}`", t.text()));
        let err = DslError::syntax(line, col, format!("{}, found {found}", msg.into()));
        let further = match &self.furthest {
            Some(DslError::Syntax { line: l, column: c, .. }) => (line, col) > (*l, *c),
            _ => true,
        };
        if further {
            self.furthest = Some(err.clone());
        }
        err
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{}`", t.text())))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{kw}`")))
        }
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek_ident() {
            Some(s) if !RESERVED.contains(&s) => {
                let s = s.to_string();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error_here(format!("expected {what} name"))),
        }
    }

    fn word<T>(&mut self, what: &str, table: &[(&str, T)]) -> PResult<T>
    where
        T: Copy,
    {
        if let Some(s) = self.peek_ident() {
            if let Some(&(_, v)) = table.iter().find(|(k, _)| *k == s) {
                self.pos += 1;
                return Ok(v);
            }
        }
        Err(self.error_here(format!("expected {what}")))
    }

    fn color(&mut self) -> PResult<Color> {
        let table = Color::ALL.map(|c| (c.name(), c));
        self.word("a color", &table)
    }

    fn dir(&mut self) -> PResult<Dir> {
        let table = Dir::ALL.map(|d| (d.name(), d));
        self.word("a direction", &table)
    }

    fn corner(&mut self) -> PResult<Corner> {
        let table = Corner::ALL.map(|c| (c.name(), c));
        self.word("a corner", &table)
    }

    fn filter(&mut self) -> PResult<BlockFilter> {
        self.word("`lonely` or `off_corner`", &[("lonely", BlockFilter::Lonely), ("off_corner", BlockFilter::OffCorner)])
    }

    fn program(&mut self) -> PResult<Program> {
        let mut registers = Vec::new();
        while self.eat_kw("reg") {
            let name = self.name("register")?;
            self.expect(&Tok::Assign)?;
            let init = self.expr()?;
            self.eat(&Tok::Semi);
            registers.push(RegisterDecl { name, init });
        }
        let mut states = Vec::new();
        while self.peek().is_some() {
            states.push(self.state()?);
        }
        if states.is_empty() {
            return Err(self.error_here("expected `state`"));
        }
        Ok(Program { registers, states })
    }

    fn state(&mut self) -> PResult<StateDef> {
        self.expect_kw("state")?;
        let name = self.name("state")?;
        self.expect(&Tok::Colon)?;
        let mut rules = vec![self.rule()?];
        while self.peek().is_some() && self.peek_ident() != Some("state") {
            rules.push(self.rule()?);
        }
        Ok(StateDef { name, rules })
    }

    fn rule(&mut self) -> PResult<Rule> {
        let guard = self.guard()?;
        self.expect(&Tok::Arrow)?;
        let mut effects = vec![self.effect()?];
        while self.eat(&Tok::Comma) {
            effects.push(self.effect()?);
        }
        self.eat(&Tok::Semi);
        Ok(Rule { guard, effects })
    }

    fn effect(&mut self) -> PResult<Effect> {
        if self.eat_kw("goto") {
            self.expect(&Tok::LParen)?;
            let name = self.name("state")?;
            self.expect(&Tok::RParen)?;
            return Ok(Effect::Goto(name));
        }
        if self.eat_kw("set") {
            self.expect(&Tok::LParen)?;
            let reg = self.name("register")?;
            self.expect(&Tok::Comma)?;
            let value = self.expr()?;
            self.expect(&Tok::RParen)?;
            return Ok(Effect::Set(reg, value));
        }
        self.action().map(Effect::Act)
    }

    fn action(&mut self) -> PResult<ActionExpr> {
        let prims = Action::ALL.map(|a| (a.name(), a));
        if let Some(s) = self.peek_ident() {
            if let Some(&(_, a)) = prims.iter().find(|(k, _)| *k == s) {
                self.pos += 1;
                return Ok(ActionExpr::Primitive(a));
            }
        }
        if self.eat_kw("greedy_toward") {
            self.expect(&Tok::LParen)?;
            let t = self.target()?;
            self.expect(&Tok::RParen)?;
            return Ok(ActionExpr::Greedy(t));
        }
        if self.eat_kw("astar_toward") {
            self.expect(&Tok::LParen)?;
            let target = self.target()?;
            let mut avoid = Vec::new();
            if self.eat(&Tok::Comma) {
                self.expect_kw("avoid")?;
                self.expect(&Tok::Assign)?;
                self.expect(&Tok::LBracket)?;
                if !self.eat(&Tok::RBracket) {
                    avoid.push(self.color()?);
                    while self.eat(&Tok::Comma) {
                        avoid.push(self.color()?);
                    }
                    self.expect(&Tok::RBracket)?;
                }
            }
            self.expect(&Tok::RParen)?;
            return Ok(ActionExpr::Astar { target, avoid });
        }
        Err(self.error_here("expected an action, `goto` or `set`"))
    }

    fn target(&mut self) -> PResult<Target> {
        if self.peek_at(1) == Some(&Tok::LParen) {
            if self.eat_kw("nearest_block") {
                self.expect(&Tok::LParen)?;
                let c = self.color()?;
                let f = if self.eat(&Tok::Comma) { self.filter()? } else { BlockFilter::Any };
                self.expect(&Tok::RParen)?;
                return Ok(Target::Nearest(c, f));
            }
            if self.eat_kw("corner") {
                self.expect(&Tok::LParen)?;
                let c = self.corner()?;
                self.expect(&Tok::RParen)?;
                return Ok(Target::Corner(c));
            }
            if self.eat_kw("empty_corner") {
                self.expect(&Tok::LParen)?;
                self.expect(&Tok::RParen)?;
                return Ok(Target::EmptyCorner);
            }
            if self.eat_kw("beside") {
                self.expect(&Tok::LParen)?;
                let t = self.target()?;
                self.expect(&Tok::RParen)?;
                return Ok(Target::Beside(Box::new(t)));
            }
        }
        Ok(Target::Cell(self.expr()?))
    }

    fn guard(&mut self) -> PResult<Guard> {
        let mut parts = vec![self.conj()?];
        while self.eat_kw("or") {
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Guard::Or(parts) })
    }

    fn conj(&mut self) -> PResult<Guard> {
        let mut parts = vec![self.unary()?];
        while self.eat_kw("and") {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Guard::And(parts) })
    }

    fn unary(&mut self) -> PResult<Guard> {
        if self.eat_kw("not") {
            return Ok(Guard::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Guard> {
        if self.eat_kw("true") {
            return Ok(Guard::True);
        }
        if self.eat_kw("false") {
            return Ok(Guard::False);
        }
        if self.peek_at(1) == Some(&Tok::LParen) {
            let kw = self.peek_ident().map(str::to_string);
            match kw.as_deref() {
                Some("holding") | Some("on_block") => {
                    self.pos += 2;
                    let c = if self.peek() == Some(&Tok::RParen) { None } else { Some(self.color()?) };
                    self.expect(&Tok::RParen)?;
                    return Ok(if kw.as_deref() == Some("holding") { Guard::Holding(c) } else { Guard::OnBlock(c) });
                }
                Some("wall_adjacent") => {
                    self.pos += 2;
                    let d = self.dir()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(Guard::Wall(d));
                }
                Some("at") => {
                    self.pos += 2;
                    let t = self.target()?;
                    self.expect(&Tok::RParen)?;
                    return Ok(Guard::At(t));
                }
                Some("nearest_block_exists") => {
                    self.pos += 2;
                    let c = self.color()?;
                    let f = if self.eat(&Tok::Comma) { self.filter()? } else { BlockFilter::Any };
                    self.expect(&Tok::RParen)?;
                    return Ok(Guard::Exists(c, f));
                }
                _ => {}
            }
        }
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            if let Ok(g) = self.comparison() {
                return Ok(g);
            }
            self.pos = save;
            self.expect(&Tok::LParen)?;
            let g = self.guard()?;
            self.expect(&Tok::RParen)?;
            return Ok(g);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Guard> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            _ => return Err(self.error_here("expected a comparison operator")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Guard::Compare(lhs, op, rhs))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(&Tok::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.term()?)));
        }
        let base = match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Expr::Int(n)
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let a = self.expr()?;
                if self.eat(&Tok::Comma) {
                    let b = self.expr()?;
                    self.expect(&Tok::RParen)?;
                    Expr::Pair(Box::new(a), Box::new(b))
                } else {
                    self.expect(&Tok::RParen)?;
                    a
                }
            }
            Some(Tok::Ident(s)) => match s.as_str() {
                "agent_x" => {
                    self.pos += 1;
                    Expr::AgentX
                }
                "agent_y" => {
                    self.pos += 1;
                    Expr::AgentY
                }
                "agent_pos" => {
                    self.pos += 1;
                    Expr::AgentPos
                }
                "width" => {
                    self.pos += 1;
                    Expr::Width
                }
                "height" => {
                    self.pos += 1;
                    Expr::Height
                }
                _ => Expr::Reg(self.name("register")?),
            },
            _ => return Err(self.error_here("expected an expression")),
        };
        if self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            let axis = self.word("`x` or `y`", &[("x", Axis::X), ("y", Axis::Y)])?;
            return Ok(Expr::Field(Box::new(base), axis));
        }
        Ok(base)
    }
}

/// Parses source text into an AST (syntax only).
pub fn parse_syntax(src: &str) -> Result<Program, DslError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, furthest: None };
    match p.program() {
        Ok(prog) => Ok(prog),
        Err(e) => Err(p.furthest.take().unwrap_or(e)),
    }
}

/// Name and type environment of a checked program.
pub(crate) struct Scope {
    pub states: HashMap<String, usize>,
    pub registers: HashMap<String, (usize, Ty)>,
}

/// Checks closure (every referenced state and register exists) and types.
pub(crate) fn check(prog: &Program) -> Result<Scope, DslError> {
    let mut states = HashMap::new();
    for (i, s) in prog.states.iter().enumerate() {
        if states.insert(s.name.clone(), i).is_some() {
            return Err(DslError::semantic(&s.name, "state declared twice"));
        }
    }
    let mut scope = Scope { states, registers: HashMap::new() };
    for (i, r) in prog.registers.iter().enumerate() {
        if scope.registers.contains_key(&r.name) || scope.states.contains_key(&r.name) {
            return Err(DslError::semantic(&r.name, "name declared twice"));
        }
        let ty = type_of(&r.init, &scope)?;
        scope.registers.insert(r.name.clone(), (i, ty));
    }
    for s in &prog.states {
        for rule in &s.rules {
            check_guard(&rule.guard, &scope)?;
            for (k, e) in rule.effects.iter().enumerate() {
                match e {
                    Effect::Goto(name) => {
                        if !scope.states.contains_key(name) {
                            return Err(DslError::semantic(name, "unknown state"));
                        }
                    }
                    Effect::Set(name, expr) => {
                        let (_, want) = *scope
                            .registers
                            .get(name)
                            .ok_or_else(|| DslError::semantic(name, "unknown register"))?;
                        if type_of(expr, &scope)? != want {
                            return Err(DslError::semantic(name, "assigned value has the wrong type"));
                        }
                    }
                    Effect::Act(a) => {
                        if k + 1 != rule.effects.len() {
                            return Err(DslError::semantic(&s.name, "an action must be the last effect of a rule"));
                        }
                        match a {
                            ActionExpr::Primitive(_) => {}
                            ActionExpr::Greedy(t) | ActionExpr::Astar { target: t, .. } => check_target(t, &scope)?,
                        }
                    }
                }
            }
        }
    }
    Ok(scope)
}

fn check_target(t: &Target, scope: &Scope) -> Result<(), DslError> {
    match t {
        Target::Nearest(..) | Target::Corner(_) | Target::EmptyCorner => Ok(()),
        Target::Beside(inner) => check_target(inner, scope),
        Target::Cell(e) => match type_of(e, scope)? {
            Ty::Pair => Ok(()),
            Ty::Int => Err(DslError::semantic("target", "a target cell must be a pair")),
        },
    }
}

fn check_guard(g: &Guard, scope: &Scope) -> Result<(), DslError> {
    match g {
        Guard::Not(inner) => check_guard(inner, scope),
        Guard::And(v) | Guard::Or(v) => v.iter().try_for_each(|g| check_guard(g, scope)),
        Guard::At(t) => check_target(t, scope),
        Guard::Compare(a, op, b) => {
            let (ta, tb) = (type_of(a, scope)?, type_of(b, scope)?);
            if ta != tb {
                return Err(DslError::semantic(op.symbol(), "cannot compare an integer with a pair"));
            }
            if ta == Ty::Pair && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                return Err(DslError::semantic(op.symbol(), "pairs only support == and !="));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

pub(crate) fn type_of(e: &Expr, scope: &Scope) -> Result<Ty, DslError> {
    let int = |e: &Expr| -> Result<(), DslError> {
        match type_of(e, scope)? {
            Ty::Int => Ok(()),
            Ty::Pair => Err(DslError::semantic("expression", "expected an integer, found a pair")),
        }
    };
    Ok(match e {
        Expr::Int(_) | Expr::AgentX | Expr::AgentY | Expr::Width | Expr::Height => Ty::Int,
        Expr::AgentPos => Ty::Pair,
        Expr::Reg(name) => scope
            .registers
            .get(name)
            .map(|&(_, t)| t)
            .ok_or_else(|| DslError::semantic(name, "unknown register"))?,
        Expr::Field(inner, _) => match type_of(inner, scope)? {
            Ty::Pair => Ty::Int,
            Ty::Int => return Err(DslError::semantic("field", "`.x`/`.y` need a pair")),
        },
        Expr::Pair(a, b) => {
            int(a)?;
            int(b)?;
            Ty::Pair
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            int(a)?;
            int(b)?;
            Ty::Int
        }
        Expr::Neg(a) => {
            int(a)?;
            Ty::Int
        }
    })
}
