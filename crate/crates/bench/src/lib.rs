//! Shared fixtures for the benchmarks.

use gspn_core::zoo::{build_model, Model};
use gspn_core::ModelKind;

/// Built-in model with default parameters.
pub fn fixture(kind: ModelKind) -> Model {
    build_model(kind, &Default::default(), Default::default()).expect("built-in model builds")
}
