//! Text form of MTheories and of local-distribution (LPDL) scripts.
//!
//! ```text
//! [F: SITUATION
//!   [C: IsA (rgn, REGION), IsA (t, TIME), IsA (v, VEHICLE)]
//!   [C: rgn = Location (v, t)]
//!   [R: ThreatLevel (rgn, t)
//!     [V: cat High | Low]
//!     [IP: VehicleType (v)]
//!     [L:
//!       if some v have (VehicleType = Tracked) [
//!         High = 0.9, Low = 0.1
//!       ] else [
//!         High = 0.5, Low = 0.5
//!       ]
//!     ]
//!   ]
//! ]
//! ```

mod emit;
mod lexer;
mod parser;

use std::fmt;

use crate::mtheory::ModelError;

pub use emit::{emit_cld, emit_expr, emit_mtheory, format_number};
pub use parser::{parse_expr, parse_lpdl, parse_mtheory};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptErrorKind {
    UnexpectedChar(char),
    BadNumber(String),
    UnexpectedToken { found: String, expected: String },
    UnexpectedEnd { expected: String },
    UndeclaredOrdinaryVariable(String),
    StatesNotCovered(String),
    BadDistributionForm(String),
    UnknownFunction(String),
    Model(ModelError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ScriptError {
    pub kind: ScriptErrorKind,
    pub line: usize,
    pub col: usize,
}

impl ScriptError {
    pub(crate) fn new(kind: ScriptErrorKind, line: usize, col: usize) -> Self {
        ScriptError { kind, line, col }
    }

    pub fn code(&self) -> &'static str {
        match self.kind {
            ScriptErrorKind::UndeclaredOrdinaryVariable(_) => "E_UNDECLARED_OV",
            ScriptErrorKind::StatesNotCovered(_) => "E_STATES",
            ScriptErrorKind::BadDistributionForm(_) => "E_DIST_FORM",
            ScriptErrorKind::UnknownFunction(_) => "E_UNKNOWN_FUNCTION",
            ScriptErrorKind::Model(_) => "E_MODEL",
            _ => "E_SYNTAX",
        }
    }
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ScriptErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ScriptErrorKind::BadNumber(s) => write!(f, "bad number '{s}'"),
            ScriptErrorKind::UnexpectedToken { found, expected } => write!(f, "expected {expected}, found {found}"),
            ScriptErrorKind::UnexpectedEnd { expected } => write!(f, "expected {expected}, found end of input"),
            ScriptErrorKind::UndeclaredOrdinaryVariable(ov) => {
                write!(f, "ordinary variable {ov} is used without an IsA declaration")
            }
            ScriptErrorKind::StatesNotCovered(m) => write!(f, "{m}"),
            ScriptErrorKind::BadDistributionForm(m) => write!(f, "{m}"),
            ScriptErrorKind::UnknownFunction(n) => write!(f, "unknown function {n}"),
            ScriptErrorKind::Model(e) => write!(f, "{e}"),
        }
    }
}
