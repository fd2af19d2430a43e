//! Bounded model checking for hybrid numerical programs, with structural
//! checkers for tripolar-grid halo exchange and coupled-model run sequences.

pub mod grid;
pub mod ir;
pub mod kpp;
pub mod rational;
pub mod runseq;
pub mod solve;
pub mod symexec;

pub use grid::{FieldKind, GridConfig, GridSpec, OwnedRef, Owner, OwnerMap, Stagger, Topology, TopologyReport};
pub use ir::{Expr, Program, Stmt, VarSort};
pub use kpp::KppVariant;
pub use rational::Rational;
pub use runseq::{ComponentDecl, CycleReport, Entry, RunSequence, ValidationReport};
pub use solve::{Backend, CheckConfig, CheckReport, Outcome, Trace, Verdict, Witness};
pub use symexec::{AssertObligation, Bounds, ExplorationSummary, SymExpr, SymbolId};
