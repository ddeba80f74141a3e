//! The behavior-program language: a small guarded-rule state machine with
//! planner builtins. Programs are parsed, checked and then stepped against
//! observations by a sandboxed interpreter.

pub mod ast;
mod interp;
mod lexer;
pub mod library;
mod parser;
mod printer;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub use ast::Ty;
pub use interp::{ProgramState, StepError, Value, TRANSITION_BUDGET};
pub use parser::RESERVED;
pub use printer::pretty;

use ast::Program;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("`{name}`: {message}")]
    Semantic { name: String, message: String },
}

impl DslError {
    pub fn syntax(line: usize, column: usize, message: String) -> Self {
        DslError::Syntax { line, column, message }
    }

    pub fn semantic(name: &str, message: &str) -> Self {
        DslError::Semantic { name: name.to_string(), message: message.to_string() }
    }
}

/// A parsed, checked program. Cheap to clone.
#[derive(Clone)]
pub struct BehaviorProgram {
    inner: Arc<Inner>,
}

struct Inner {
    source: String,
    ast: Program,
    size: usize,
    states: HashMap<String, usize>,
    registers: HashMap<String, usize>,
    register_types: Vec<Ty>,
}

impl BehaviorProgram {
    pub fn parse(source: &str) -> Result<BehaviorProgram, DslError> {
        let ast = parser::parse_syntax(source)?;
        Self::build(source.to_string(), ast)
    }

    /// Builds a program from an AST; the source text is its pretty form.
    pub fn from_ast(ast: Program) -> Result<BehaviorProgram, DslError> {
        Self::build(pretty(&ast), ast)
    }

    fn build(source: String, ast: Program) -> Result<BehaviorProgram, DslError> {
        let scope = parser::check(&ast)?;
        let size = program_size(&source)?;
        let mut register_types = vec![Ty::Int; ast.registers.len()];
        let mut registers = HashMap::new();
        for (name, (i, ty)) in scope.registers {
            register_types[i] = ty;
            registers.insert(name, i);
        }
        Ok(BehaviorProgram {
            inner: Arc::new(Inner { source, ast, size, states: scope.states, registers, register_types }),
        })
    }

    pub fn source(&self) -> &str {
        &self.inner.source
    }

    pub fn ast(&self) -> &Program {
        &self.inner.ast
    }

    /// `|λ|`: characters of the whitespace-normalized source.
    pub fn size(&self) -> usize {
        self.inner.size
    }

    pub fn entry_state(&self) -> &str {
        &self.inner.ast.states[0].name
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.inner.ast.states.iter().map(|s| s.name.as_str())
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.inner.states.get(name).copied()
    }

    pub fn register_index(&self, name: &str) -> Option<usize> {
        self.inner.registers.get(name).copied()
    }

    pub fn register_types(&self) -> &[Ty] {
        &self.inner.register_types
    }

    pub fn pretty(&self) -> String {
        pretty(&self.inner.ast)
    }
}

impl PartialEq for BehaviorProgram {
    fn eq(&self, other: &Self) -> bool {
        self.inner.ast == other.inner.ast
    }
}

impl Eq for BehaviorProgram {}

impl fmt::Debug for BehaviorProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BehaviorProgram").field("source", &self.inner.source).finish()
    }
}

impl std::str::FromStr for BehaviorProgram {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviorProgram::parse(s)
    }
}

/// Character count of `source` with comments removed and tokens joined by
/// single spaces.
pub fn program_size(source: &str) -> Result<usize, DslError> {
    let toks = lexer::lex(source)?;
    let chars: usize = toks.iter().map(|t| t.tok.text().len()).sum();
    Ok(chars + toks.len().saturating_sub(1))
}

/// Free-function form of [`BehaviorProgram::parse`].
pub fn parse(source: &str) -> Result<BehaviorProgram, DslError> {
    BehaviorProgram::parse(source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_program() {
        let p = parse("state go: true -> Up").unwrap();
        assert_eq!(p.entry_state(), "go");
        assert_eq!(p.state_names().count(), 1);
        assert!(p.register_types().is_empty());
    }

    #[test]
    fn missing_state_is_named() {
        let err = parse("state a: true -> goto(missing)").unwrap_err();
        assert!(matches!(&err, DslError::Semantic { name, .. } if name == "missing"), "{err}");
    }

    #[test]
    fn unknown_register_is_named() {
        let err = parse("state a: home == agent_pos -> Up").unwrap_err();
        assert!(matches!(&err, DslError::Semantic { name, .. } if name == "home"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse("state a:\n  true -> Sideways").unwrap_err();
        match err {
            DslError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 11)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn size_of_smallest_program() {
        // "state go : true -> Up"
        assert_eq!(program_size("state go: true -> Up").unwrap(), 21);
        assert_eq!(program_size("state   go:\n   true->Up  # c").unwrap(), 21);
    }

    #[test]
    fn size_grows_with_states() {
        let a = program_size("state go: true -> Up").unwrap();
        let b = program_size("state go: true -> Up\nstate s: true -> Noop").unwrap();
        assert!(b > a);
    }

    #[test]
    fn type_errors() {
        assert!(parse("reg h = agent_pos\nstate a: h < (1, 2) -> Up").is_err());
        assert!(parse("reg h = 3\nstate a: true -> greedy_toward(h)").is_err());
        assert!(parse("reg h = 3\nstate a: true -> set(h, agent_pos), Up").is_err());
        assert!(parse("state a: true -> Up, goto(a)").is_err());
        assert!(parse("reg h = agent_pos\nstate a: h.x + 1 >= agent_y -> set(h, (agent_x, 0)), Up").is_ok());
    }

    #[test]
    fn reserved_words_rejected_as_names() {
        assert!(parse("state wall_adjacent: true -> Up").is_err());
        assert!(parse("reg agent_x = 1\nstate a: true -> Up").is_err());
        assert!(parse("state a: true -> Up\nstate a: true -> Down").is_err());
    }
}
