//! Shared fixtures for the integration tests.

use std::sync::Arc;

use nlsgraph_core::graph::{validate_graph, MetricGraph, RawEdge, RawGraph};

/// A triangle `a-b-c` with unit sides and a tail `c-d` of length 4: one
/// cycle, a single terminal vertex `d`.
pub fn triangle_with_tail() -> Arc<MetricGraph> {
    let raw = RawGraph {
        vertices: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        edges: vec![
            RawEdge {
                id: "ab".into(),
                from: "a".into(),
                to: "b".into(),
                length: 1.0,
            },
            RawEdge {
                id: "bc".into(),
                from: "b".into(),
                to: "c".into(),
                length: 1.0,
            },
            RawEdge {
                id: "ca".into(),
                from: "c".into(),
                to: "a".into(),
                length: 1.0,
            },
            RawEdge {
                id: "tail".into(),
                from: "c".into(),
                to: "d".into(),
                length: 4.0,
            },
        ],
    };
    Arc::new(validate_graph(&raw).unwrap())
}
