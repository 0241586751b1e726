//! Moving-mesh solver for 1-D heat equations driven by traveling point
//! sources.
//!
//! The solver pins one mesh node to every source, splits the domain at the
//! pinned nodes, and relaxes each subdomain's nodes toward equidistribution
//! of a solution-adapted monitor while integrating the heat equation
//! implicitly on the moving mesh.

pub mod config;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod monitor;
pub mod output;
pub mod pde;
pub mod problems;
pub mod sources;
pub mod timestep;
