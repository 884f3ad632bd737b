//! Constructive sum-of-squares decompositions of non-negative `C^{k,α}`
//! functions on boxes.
//!
//! The pipeline follows the Whitney-partition route: a control function
//! `r` measures how degenerate `f` is near each point, a dyadic partition
//! of unity adapted to `r` localizes the problem, and on each cube `f` is
//! either a clean square (root branch) or splits into a square of a
//! signed factor plus a remainder in one dimension fewer (minimum branch).
//! A greedy colouring of the cube adjacency graph then merges local
//! squares with disjoint supports into a bounded number of global ones.

pub mod bounds;
pub mod control;
pub mod decompose;
pub mod docs;
pub mod error;
pub mod field;
pub mod graph;
pub mod jet;
pub mod oddvand;
pub mod sampling;
pub mod verify;
pub mod whitney;

pub use error::{Result, SosError};
