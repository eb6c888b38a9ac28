pub mod basis;
pub mod exact;
pub mod geom;
pub mod tmesh;
pub mod gpc;
pub mod solid;
pub mod merge;
pub mod fit;
pub mod io;
pub mod lattice;
pub mod cli;
pub mod fixtures;
