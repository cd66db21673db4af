//! Compiler, deployment-time validator and interpreter for Mandala.

pub mod bytecode;
pub mod registry;
pub mod sema;
pub mod syntax;
pub mod types;
pub mod validator;
pub mod ledger;
pub mod runtime;
pub mod corpus;
