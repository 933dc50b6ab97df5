//! Dataflow-analysis workbench for a small labeled imperative language.

pub mod syntax;
pub mod parser;
pub mod interp;
pub mod lattice;
pub mod solver;
pub mod analyses;
pub mod augmented;
pub mod optimizer;
pub mod fuzz;
pub mod render;
