//! Deterministic interpreter. Reads only the observation and the program's
//! own registers.

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::BehaviorProgram;
use crate::agents::planner::{plan_step, PlannerQuery};
use crate::grid::{Action, GridWorld, Observation, Pos};

/// Rule firings without an action allowed within one step.
pub const TRANSITION_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Pair(i64, i64),
}

impl Value {
    fn int(self) -> i64 {
        match self {
            Value::Int(n) => n,
            // Unreachable for checked programs.
            Value::Pair(..) => 0,
        }
    }

    fn pair(self) -> (i64, i64) {
        match self {
            Value::Pair(a, b) => (a, b),
            Value::Int(n) => (n, 0),
        }
    }
}

/// Current FSM state and register file of a running program.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProgramState {
    pub state: usize,
    pub registers: Vec<Value>,
    /// Set once a step exceeds the transition budget; a broken program
    /// emits `Noop` from then on.
    pub broken: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("more than {TRANSITION_BUDGET} transitions without an action in state `{state}`")]
    BudgetExceeded { state: String },
}

struct Ctx<'a> {
    world: &'a GridWorld,
    prog: &'a BehaviorProgram,
    regs: &'a [Value],
}

impl Ctx<'_> {
    fn eval(&self, e: &Expr) -> Value {
        let me = self.world.agent_pos();
        match e {
            Expr::Int(n) => Value::Int(*n),
            Expr::AgentX => Value::Int(me.x.into()),
            Expr::AgentY => Value::Int(me.y.into()),
            Expr::AgentPos => Value::Pair(me.x.into(), me.y.into()),
            Expr::Width => Value::Int(self.world.width().into()),
            Expr::Height => Value::Int(self.world.height().into()),
            Expr::Reg(name) => {
                let i = self.prog.register_index(name).expect("checked register");
                self.regs[i]
            }
            Expr::Field(inner, axis) => {
                let (a, b) = self.eval(inner).pair();
                Value::Int(if *axis == Axis::X { a } else { b })
            }
            Expr::Pair(a, b) => Value::Pair(self.eval(a).int(), self.eval(b).int()),
            Expr::Add(a, b) => Value::Int(self.eval(a).int().wrapping_add(self.eval(b).int())),
            Expr::Sub(a, b) => Value::Int(self.eval(a).int().wrapping_sub(self.eval(b).int())),
            Expr::Neg(a) => Value::Int(self.eval(a).int().wrapping_neg()),
        }
    }

    fn resolve(&self, t: &Target) -> Option<Pos> {
        match t {
            Target::Nearest(c, f) => self.world.nearest_block(*c, *f),
            Target::Corner(c) => Some(self.world.corner(*c)),
            Target::EmptyCorner => self.world.empty_corner(),
            Target::Beside(inner) => self.resolve(inner).and_then(|p| self.world.beside(p)),
            Target::Cell(e) => {
                let (a, b) = self.eval(e).pair();
                Some(Pos::new(i32::try_from(a).ok()?, i32::try_from(b).ok()?))
            }
        }
    }

    fn test(&self, g: &Guard) -> bool {
        let w = self.world;
        match g {
            Guard::True => true,
            Guard::False => false,
            Guard::Not(inner) => !self.test(inner),
            Guard::And(v) => v.iter().all(|g| self.test(g)),
            Guard::Or(v) => v.iter().any(|g| self.test(g)),
            Guard::Holding(None) => w.held().is_some(),
            Guard::Holding(Some(c)) => w.held() == Some(*c),
            Guard::OnBlock(None) => w.block_at(w.agent_pos()).is_some(),
            Guard::OnBlock(Some(c)) => w.block_at(w.agent_pos()) == Some(*c),
            Guard::Wall(d) => w.wall_toward(*d),
            Guard::At(t) => self.resolve(t) == Some(w.agent_pos()),
            Guard::Exists(c, f) => w.nearest_block(*c, *f).is_some(),
            Guard::Compare(a, op, b) => {
                let (a, b) = (self.eval(a), self.eval(b));
                match (a, b, op) {
                    (_, _, CmpOp::Eq) => a == b,
                    (_, _, CmpOp::Ne) => a != b,
                    (Value::Int(a), Value::Int(b), CmpOp::Lt) => a < b,
                    (Value::Int(a), Value::Int(b), CmpOp::Le) => a <= b,
                    (Value::Int(a), Value::Int(b), CmpOp::Gt) => a > b,
                    (Value::Int(a), Value::Int(b), CmpOp::Ge) => a >= b,
                    _ => false,
                }
            }
        }
    }

    fn act(&self, a: &ActionExpr) -> Action {
        let me = self.world.agent_pos();
        match a {
            ActionExpr::Primitive(p) => *p,
            ActionExpr::Greedy(t) => match self.resolve(t) {
                Some(goal) => plan_step(&PlannerQuery::greedy(me, goal), self.world),
                None => Action::Noop,
            },
            ActionExpr::Astar { target, avoid } => match self.resolve(target) {
                Some(goal) => {
                    let cells = self.world.floor_blocks().iter().filter(|(_, c)| avoid.contains(c)).map(|(&p, _)| p);
                    plan_step(&PlannerQuery::astar(me, goal).avoiding(cells), self.world)
                }
                None => Action::Noop,
            },
        }
    }
}

impl BehaviorProgram {
    /// Entry state with registers evaluated, in order, against `obs`.
    pub fn init(&self, obs: &Observation) -> ProgramState {
        let mut registers = Vec::with_capacity(self.ast().registers.len());
        for decl in &self.ast().registers {
            let v = Ctx { world: obs.world(), prog: self, regs: &registers }.eval(&decl.init);
            registers.push(v);
        }
        ProgramState { state: 0, registers, broken: false }
    }

    /// One decision. On a runaway transition chain the error names the
    /// state where the budget ran out.
    pub fn try_step(&self, state: &ProgramState, obs: &Observation) -> Result<(Action, ProgramState), StepError> {
        if state.broken {
            return Ok((Action::Noop, state.clone()));
        }
        let mut cur = state.state;
        let mut regs = state.registers.clone();
        let mut transitions = 0;
        'dispatch: loop {
            let def = &self.ast().states[cur];
            for rule in &def.rules {
                let ctx = Ctx { world: obs.world(), prog: self, regs: &regs };
                if !ctx.test(&rule.guard) {
                    continue;
                }
                for e in &rule.effects {
                    match e {
                        Effect::Goto(s) => cur = self.state_index(s).expect("checked state"),
                        Effect::Set(r, v) => {
                            let val = Ctx { world: obs.world(), prog: self, regs: &regs }.eval(v);
                            regs[self.register_index(r).expect("checked register")] = val;
                        }
                        Effect::Act(a) => {
                            let action = Ctx { world: obs.world(), prog: self, regs: &regs }.act(a);
                            return Ok((action, ProgramState { state: cur, registers: regs, broken: false }));
                        }
                    }
                }
                transitions += 1;
                if transitions >= TRANSITION_BUDGET {
                    return Err(StepError::BudgetExceeded { state: self.ast().states[cur].name.clone() });
                }
                continue 'dispatch;
            }
            return Ok((Action::Noop, ProgramState { state: cur, registers: regs, broken: false }));
        }
    }

    /// Like [`BehaviorProgram::try_step`] but never fails: a program that
    /// exceeds the budget is marked broken and emits `Noop`.
    pub fn step(&self, state: &ProgramState, obs: &Observation) -> (Action, ProgramState) {
        match self.try_step(state, obs) {
            Ok(r) => r,
            Err(_) => (Action::Noop, ProgramState { broken: true, ..state.clone() }),
        }
    }

    pub fn state_name(&self, state: &ProgramState) -> &str {
        &self.ast().states[state.state].name
    }
}
