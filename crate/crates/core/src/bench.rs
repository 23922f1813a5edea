//! Experiment harness.
