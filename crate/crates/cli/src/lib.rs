//! Driver for the numerical experiments: problem cases, convergence studies,
//! flow solves and the built-in verification suite.

pub mod cases;
pub mod run;
pub mod verify;
