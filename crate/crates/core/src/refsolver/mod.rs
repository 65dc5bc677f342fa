//! Ground truth: manufactured solutions with exact forcing and a 2D
//! staggered-grid projection solver.

mod manufactured;
mod solver;

pub use manufactured::{manufactured_db, Basis, Field, ManufacturedParams, ManufacturedSolution, Term};
pub use solver::{
    solve_boussinesq_2d, InitialCondition, Solver, SolverConfig, SolverError, SolverOutput, SolverStats,
    VerticalBoundary,
};
