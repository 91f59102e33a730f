//! Command-line front end: CSV ingestion, command dispatch and report emission.

pub mod commands;
pub mod ingest;

pub use commands::{dispatch, Cli, Command};
pub use ingest::{ingest_csv, rocof_transform, Ingested};

use serde_json::{json, Value};

/// Machine-readable form of a failure.
pub fn error_json(e: &anyhow::Error) -> Value {
    let kind = match e.downcast_ref::<multiscale::Error>() {
        Some(err) => match err {
            multiscale::Error::Domain(_) => "domain",
            multiscale::Error::InvalidInput(_) => "invalid_input",
            multiscale::Error::Index { .. } => "index",
            multiscale::Error::ResolutionMismatch { .. } => "resolution_mismatch",
            multiscale::Error::LengthMismatch { .. } => "length_mismatch",
            multiscale::Error::EmptyCandidates(_) => "empty_candidates",
            multiscale::Error::MissingAlpha(_) => "missing_alpha",
            multiscale::Error::BracketFailure(_) => "bracket_failure",
            multiscale::Error::Parse { .. } => "parse",
            multiscale::Error::Cache(_) => "cache",
            multiscale::Error::Internal(_) => "internal",
            multiscale::Error::Io(_) => "io",
            multiscale::Error::Json(_) => "json",
        },
        None if e.downcast_ref::<clap::Error>().is_some() => "usage",
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    };
    let line = match e.downcast_ref::<multiscale::Error>() {
        Some(multiscale::Error::Parse { line, .. }) => Some(*line),
        _ => None,
    };
    let mut v = json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
    if let Some(line) = line {
        v["error"]["line"] = json!(line);
    }
    v
}
