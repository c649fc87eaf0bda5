//! Shared helpers for the benchmark targets live in the bench files.
