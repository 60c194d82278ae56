//! File formats, experiment sweeps and the `dcop` command-line front end
//! for `dcop-core`.

pub mod bench;
pub mod io;
