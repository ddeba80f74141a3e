use std::fmt::Write;

use super::ast::*;
use crate::grid::BlockFilter;

/// Canonical text of a program. Re-parsing it yields the same AST.
pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    for r in &p.registers {
        let _ = writeln!(out, "reg {} = {}", r.name, expr(&r.init));
    }
    if !p.registers.is_empty() {
        out.push('\n');
    }
    for (i, s) in p.states.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "state {}:", s.name);
        for rule in &s.rules {
            let effects: Vec<String> = rule.effects.iter().map(effect).collect();
            let _ = writeln!(out, "  {} -> {}", guard(&rule.guard, 0), effects.join(", "));
        }
    }
    out
}

fn effect(e: &Effect) -> String {
    match e {
        Effect::Goto(s) => format!("goto({s})"),
        Effect::Set(r, v) => format!("set({r}, {})", expr(v)),
        Effect::Act(a) => action(a),
    }
}

fn action(a: &ActionExpr) -> String {
    match a {
        ActionExpr::Primitive(p) => p.name().to_string(),
        ActionExpr::Greedy(t) => format!("greedy_toward({})", target(t)),
        ActionExpr::Astar { target: t, avoid } if avoid.is_empty() => format!("astar_toward({})", target(t)),
        ActionExpr::Astar { target: t, avoid } => {
            let colors: Vec<&str> = avoid.iter().map(|c| c.name()).collect();
            format!("astar_toward({}, avoid=[{}])", target(t), colors.join(", "))
        }
    }
}

fn filter_suffix(f: BlockFilter) -> &'static str {
    match f {
        BlockFilter::Any => "",
        BlockFilter::Lonely => ", lonely",
        BlockFilter::OffCorner => ", off_corner",
    }
}

fn target(t: &Target) -> String {
    match t {
        Target::Nearest(c, f) => format!("nearest_block({}{})", c.name(), filter_suffix(*f)),
        Target::Corner(c) => format!("corner({})", c.name()),
        Target::EmptyCorner => "empty_corner()".to_string(),
        Target::Beside(inner) => format!("beside({})", target(inner)),
        Target::Cell(e) => expr(e),
    }
}

/// `prec`: 0 at top level, 1 inside `or`, 2 inside `and`, 3 under `not`.
fn guard(g: &Guard, prec: u8) -> String {
    let wrap = |s: String, mine: u8| if mine < prec { format!("({s})") } else { s };
    match g {
        Guard::True => "true".into(),
        Guard::False => "false".into(),
        Guard::Not(inner) => format!("not {}", guard(inner, 3)),
        Guard::Or(v) => wrap(v.iter().map(|g| guard(g, 2)).collect::<Vec<_>>().join(" or "), 1),
        Guard::And(v) => wrap(v.iter().map(|g| guard(g, 3)).collect::<Vec<_>>().join(" and "), 2),
        Guard::Holding(c) => format!("holding({})", c.map_or("", |c| c.name())),
        Guard::OnBlock(c) => format!("on_block({})", c.map_or("", |c| c.name())),
        Guard::Wall(d) => format!("wall_adjacent({})", d.name()),
        Guard::At(t) => format!("at({})", target(t)),
        Guard::Exists(c, f) => format!("nearest_block_exists({}{})", c.name(), filter_suffix(*f)),
        Guard::Compare(a, op, b) => format!("{} {} {}", expr(a), op.symbol(), expr(b)),
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Add(a, b) => format!("{} + {}", expr(a), term(b)),
        Expr::Sub(a, b) => format!("{} - {}", expr(a), term(b)),
        _ => term(e),
    }
}

fn term(e: &Expr) -> String {
    match e {
        Expr::Int(n) if *n < 0 => format!("-{}", n.unsigned_abs()),
        Expr::Int(n) => n.to_string(),
        Expr::AgentX => "agent_x".into(),
        Expr::AgentY => "agent_y".into(),
        Expr::AgentPos => "agent_pos".into(),
        Expr::Width => "width".into(),
        Expr::Height => "height".into(),
        Expr::Reg(r) => r.clone(),
        Expr::Field(inner, axis) => {
            let base = match **inner {
                Expr::Add(..) | Expr::Sub(..) | Expr::Neg(_) => format!("({})", expr(inner)),
                Expr::Int(n) if n < 0 => format!("({})", term(inner)),
                _ => term(inner),
            };
            format!("{base}.{}", if *axis == Axis::X { "x" } else { "y" })
        }
        Expr::Pair(a, b) => format!("({}, {})", expr(a), expr(b)),
        Expr::Neg(inner) => format!("-{}", term(inner)),
        Expr::Add(..) | Expr::Sub(..) => format!("({})", expr(e)),
    }
}
