//! Numerical engines shared by the routing oracles and the splitting
//! optimizer: a dense two-phase simplex for linear programs and a log-barrier
//! interior point method for mixed linear / log-sum-exp convex programs.

pub mod convex;
pub mod lp;

pub use convex::{
    solve_convex, Constraint, ConvexError, ConvexOptions, ConvexProblem, ConvexSolution, ConvexStatus,
    ExpTerm, VarKind,
};
pub use lp::{solve_lp, LpError, LpProblem, LpSolution, LpStatus, Relation, RowId, Sense, VarId};
