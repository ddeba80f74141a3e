use crate::grid::{Action, BlockFilter, Color, Corner, Dir};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub registers: Vec<RegisterDecl>,
    pub states: Vec<StateDef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterDecl {
    pub name: String,
    pub init: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateDef {
    pub name: String,
    pub rules: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub guard: Guard,
    /// Executed in order; an action, if present, is last.
    pub effects: Vec<Effect>,
}

impl Rule {
    pub fn action(&self) -> Option<&ActionExpr> {
        self.effects.iter().find_map(|e| match e {
            Effect::Act(a) => Some(a),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Goto(String),
    Set(String, Expr),
    Act(ActionExpr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionExpr {
    Primitive(Action),
    Greedy(Target),
    Astar { target: Target, avoid: Vec<Color> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Nearest(Color, BlockFilter),
    Corner(Corner),
    EmptyCorner,
    Beside(Box<Target>),
    /// Any pair-valued expression.
    Cell(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Guard {
    True,
    False,
    Not(Box<Guard>),
    And(Vec<Guard>),
    Or(Vec<Guard>),
    Holding(Option<Color>),
    OnBlock(Option<Color>),
    Wall(Dir),
    At(Target),
    Exists(Color, BlockFilter),
    Compare(Expr, CmpOp, Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    /// Agent x / y coordinate.
    AgentX,
    AgentY,
    /// Agent position as a pair.
    AgentPos,
    Width,
    Height,
    Reg(String),
    Field(Box<Expr>, Axis),
    Pair(Box<Expr>, Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

/// Static type of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Int,
    Pair,
}
