use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use super::{NodeId, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cycle detected through node {node}")]
pub struct CycleError {
    /// A node that lies on a cycle.
    pub node: NodeId,
}

/// Kahn's algorithm with an ascending-id tie-break. Links whose source is not
/// in the graph are ignored here; the validator reports them.
pub fn topo_order(graph: &WorkflowGraph) -> Result<Vec<NodeId>, CycleError> {
    let mut indegree: BTreeMap<NodeId, usize> = graph.nodes.keys().map(|id| (*id, 0)).collect();
    let mut successors: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (id, node) in &graph.nodes {
        // several inputs may read the same source; count each edge once
        let sources: BTreeSet<NodeId> = node
            .links()
            .map(|(_, link)| link.source)
            .filter(|src| graph.nodes.contains_key(src))
            .collect();
        for src in sources {
            *indegree.get_mut(id).expect("node present") += 1;
            successors.entry(src).or_default().push(*id);
        }
    }

    let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
        .iter()
        .filter(|(_, deg)| **deg == 0)
        .map(|(id, _)| Reverse(*id))
        .collect();
    let mut order = Vec::with_capacity(graph.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id);
        for next in successors.get(&id).into_iter().flatten() {
            let deg = indegree.get_mut(next).expect("node present");
            *deg -= 1;
            if *deg == 0 {
                ready.push(Reverse(*next));
            }
        }
    }

    if order.len() == graph.len() {
        return Ok(order);
    }
    let done: BTreeSet<NodeId> = order.into_iter().collect();
    Err(CycleError {
        node: node_on_cycle(graph, &done),
    })
}

/// Walk predecessors among unfinished nodes until one repeats.
fn node_on_cycle(graph: &WorkflowGraph, done: &BTreeSet<NodeId>) -> NodeId {
    let mut current = *graph
        .nodes
        .keys()
        .find(|id| !done.contains(id))
        .expect("an unfinished node exists");
    let mut seen = BTreeSet::new();
    while seen.insert(current) {
        current = graph.nodes[&current]
            .links()
            .map(|(_, link)| link.source)
            .find(|src| graph.nodes.contains_key(src) && !done.contains(src))
            .expect("unfinished nodes always have an unfinished predecessor");
    }
    current
}
