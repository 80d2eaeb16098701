pub mod diagram;
pub mod error;
pub mod gibbs;
pub mod estimation;
pub mod replication;
pub mod field;
mod union_find;
pub mod inference;
pub mod svg;
pub mod cli;
