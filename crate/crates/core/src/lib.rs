//! Brick structures as connectivity graphs.
//!
//! Parses LDraw models, detects typed connector pairings, extracts integer
//! connection parameters, turns spanning-tree traversals into text build
//! programs and back, checks assemblies for interpenetration, and computes
//! step-validity metrics.

pub mod catalog;
pub mod collision;
pub mod connectors;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod ldraw;
pub mod program;
pub mod synth;

pub use catalog::{Catalog, ColorTable, PartDef};
pub use connectors::{AnnotatedConnector, CompatTable, ConnIndex, ConnectorFamily, Subtype};
pub use error::{Error, Result};
pub use geometry::{ConnectorFrame, QuantizedParams, RigidTransform, Vec3};
pub use graph::{match_connectors, sample_path, BuildPath, ConnEdge, ConnectivityGraph, Endpoint, MatchTolerances};
pub use ldraw::{NodeId, PartInstance};
pub use program::{execute, parse_program, serialize, validate_prefix, BuildProgram, BuildStep, ErrorCode, ProgramError, ValidityReport};
