//! Content-addressed bytecode: a typed instruction tree per function, with
//! a canonical binary encoding whose SHA-256 digest is the module address.

pub mod codec;
pub mod compile;
pub mod ir;

pub use codec::{address, address_of, decode, encode, DecodeError};
pub use compile::compile;
pub use ir::*;
