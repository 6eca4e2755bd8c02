//! Derivation engine and in-memory runtime for co-existing schema versions.
//!
//! A user writes a backward transformation (`putdelta`) that maps view
//! updates to source deltas. From it the [`derive`] pipeline produces the
//! forward transformation `get`, the delta-decomposed `putdelta'`, the `undef`
//! rules that route unsynchronized updates to an auxiliary relation, and the
//! total forward transformation `get'`. [`verify`] checks the round-tripping
//! laws and totality by bounded enumeration, [`runtime`] hosts several schema
//! versions over one physical store, and [`sqlgen`] renders the result as SQL.

pub mod datalog;
pub mod delta;
pub mod derive;
pub mod runtime;
pub mod sqlgen;
pub mod verify;
