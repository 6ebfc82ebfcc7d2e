//! File formats, SVG charts and the `audit` command-line driver around
//! [`score_audit_core`].

pub mod cli;
pub mod cmd;
pub mod config;
pub mod io;
pub mod svg;
