//! Daemon-free container image building: a pure layered-filesystem model,
//! a content-addressed image store, and a task engine that runs builders
//! in throwaway environments and wraps their output as one new layer.

pub mod layerfs;
pub mod imagestore;
pub mod executors;
pub mod engine;
pub mod autobuild;
