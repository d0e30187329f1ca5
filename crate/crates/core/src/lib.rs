//! Simulation engine for the parallel-lives picture of quantum mechanics.
//!
//! Systems live in classes of relative worlds. Each class carries a history of
//! local outcomes and a mass; interactions split classes, meetings pair them.
//! The crate also provides a universal-state oracle to cross-check every
//! engine run, continuum profiles for the eraser and square-well studies, a
//! scenario catalog with JSON input, and a session model for a classroom Bell
//! exercise.

pub mod campaign;
pub mod continuum;
pub mod engine;
pub mod exercise;
pub mod oracle;
pub mod qmath;
pub mod scenarios;
