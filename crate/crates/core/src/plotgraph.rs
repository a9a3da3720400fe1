//! The causal plot graph: events, weighted causal edges, greedy cycle
//! breaking, and the three traversal orders used for outline generation.
//!
//! A plot graph holds the events extracted from a novel plus directed causal
//! edges between them, each weighted low/medium/high. Raw extractions are
//! messy — duplicated relations, self-loops, cycles — so they pass through
//! [`sanitize_edges`] and then [`break_cycles`], which keeps the strongest
//! consistent subset of edges and guarantees a DAG.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Strength of a causal relationship, totally ordered `Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    /// Minimal or weak influence on the downstream event.
    Low,
    /// Partial or indirect influence, possibly via other factors.
    Medium,
    /// Direct and significant influence on the downstream event.
    High,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strength::Low => "low",
            Strength::Medium => "medium",
            Strength::High => "high",
        };
        f.write_str(s)
    }
}

/// Identifier of a plot event, `c{chapter:02}-e{seq:02}` by convention.
///
/// Hand-edited checkpoints may carry arbitrary id strings; the scheme only
/// matters for ids minted by the reader.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(String);

impl EventId {
    pub fn new(chapter: usize, seq: usize) -> Self {
        EventId(format!("c{chapter:02}-e{seq:02}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for EventId {
    fn from(s: String) -> Self {
        EventId(s)
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        EventId(s.to_string())
    }
}

/// A plot event extracted from the novel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotEvent {
    pub id: EventId,
    #[serde(default)]
    pub place_time: String,
    #[serde(default)]
    pub background: String,
    pub description: String,
    #[serde(default)]
    pub characters: Vec<String>,
    pub chapter: usize,
    pub seq: usize,
}

impl PlotEvent {
    /// Sort key used by every deterministic ordering over events.
    pub fn position(&self) -> (usize, usize) {
        (self.chapter, self.seq)
    }
}

/// A directed causal edge between two plot events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub from_event: EventId,
    pub to_event: EventId,
    #[serde(default)]
    pub description: String,
    pub strength: Strength,
    /// Extraction ordinal; the final tie-break in cycle breaking.
    pub order: usize,
}

/// One biography entry in a character arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiographyEntry {
    pub event: EventId,
    pub experience: String,
    #[serde(default)]
    pub change: String,
}

/// An undirected relationship link between two characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub other: String,
    pub description: String,
}

/// A character's biography entries plus relationship links.
///
/// The relation set is kept symmetric by the reader: if A lists B, then B
/// lists A with the same description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterArc {
    pub character: String,
    #[serde(default)]
    pub biography: Vec<BiographyEntry>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

impl CharacterArc {
    pub fn new(character: impl Into<String>) -> Self {
        CharacterArc {
            character: character.into(),
            biography: Vec::new(),
            relations: Vec::new(),
        }
    }
}

/// Errors raised by graph construction and traversal.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge {from} -> {to} references missing event id `{missing}`")]
    DanglingEndpoint {
        from: String,
        to: String,
        missing: String,
    },
    #[error("duplicate event id `{0}`")]
    DuplicateEventId(String),
    #[error("duplicate event position (chapter {0}, seq {1})")]
    DuplicatePosition(usize, usize),
    #[error("plot graph has not been made acyclic; run cycle breaking first")]
    CyclicGraph,
}

/// Serialized shape of a plot graph: events as a list, plus the DAG flag.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    events: Vec<PlotEvent>,
    edges: Vec<CausalEdge>,
    acyclic: bool,
}

/// The causal plot graph `⟨events, edges, strengths⟩`.
///
/// `acyclic` is set only after cycle breaking (or verified on load);
/// traversals refuse to run on graphs without the flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct PlotGraph {
    events: BTreeMap<EventId, PlotEvent>,
    edges: Vec<CausalEdge>,
    acyclic: bool,
}

impl TryFrom<GraphRepr> for PlotGraph {
    type Error = GraphError;

    fn try_from(repr: GraphRepr) -> Result<Self, GraphError> {
        let mut graph = PlotGraph::new(repr.events, repr.edges)?;
        if repr.acyclic && !is_acyclic(&graph) {
            return Err(GraphError::CyclicGraph);
        }
        graph.acyclic = repr.acyclic;
        Ok(graph)
    }
}

impl From<PlotGraph> for GraphRepr {
    fn from(g: PlotGraph) -> GraphRepr {
        GraphRepr {
            events: g.events.into_values().collect(),
            edges: g.edges,
            acyclic: g.acyclic,
        }
    }
}

impl PlotGraph {
    /// Build a graph, validating id uniqueness, position uniqueness, and
    /// edge endpoints. The acyclic flag starts unset.
    pub fn new(
        events: impl IntoIterator<Item = PlotEvent>,
        edges: Vec<CausalEdge>,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        let mut positions = HashSet::new();
        for event in events {
            if !positions.insert(event.position()) {
                return Err(GraphError::DuplicatePosition(event.chapter, event.seq));
            }
            let id = event.id.clone();
            if map.insert(id.clone(), event).is_some() {
                return Err(GraphError::DuplicateEventId(id.to_string()));
            }
        }
        for edge in &edges {
            for endpoint in [&edge.from_event, &edge.to_event] {
                if !map.contains_key(endpoint) {
                    return Err(GraphError::DanglingEndpoint {
                        from: edge.from_event.to_string(),
                        to: edge.to_event.to_string(),
                        missing: endpoint.to_string(),
                    });
                }
            }
        }
        Ok(PlotGraph {
            events: map,
            edges,
            acyclic: false,
        })
    }

    /// Build a graph from an edge set already known to be a DAG (the output
    /// of [`break_cycles`]), setting the acyclic flag.
    pub fn new_acyclic(
        events: impl IntoIterator<Item = PlotEvent>,
        edges: Vec<CausalEdge>,
    ) -> Result<Self, GraphError> {
        let mut graph = PlotGraph::new(events, edges)?;
        if !is_acyclic(&graph) {
            return Err(GraphError::CyclicGraph);
        }
        graph.acyclic = true;
        Ok(graph)
    }

    pub fn events(&self) -> impl Iterator<Item = &PlotEvent> {
        self.events.values()
    }

    pub fn event(&self, id: &EventId) -> Option<&PlotEvent> {
        self.events.get(id)
    }

    pub fn event_ids(&self) -> BTreeSet<EventId> {
        self.events.keys().cloned().collect()
    }

    pub fn edges(&self) -> &[CausalEdge] {
        &self.edges
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn is_flagged_acyclic(&self) -> bool {
        self.acyclic
    }
}

/// Drop self-loops and deduplicate parallel edges.
///
/// Among edges on the same ordered `(from, to)` pair, only the
/// highest-strength one survives; ties go to the lowest extraction order.
/// Survivors keep their input order. Edges naming an id outside `event_ids`
/// are an error — callers that want to drop them instead must filter first
/// (the reader's graph assembly does).
pub fn sanitize_edges(
    event_ids: &BTreeSet<EventId>,
    edges: Vec<CausalEdge>,
) -> Result<Vec<CausalEdge>, GraphError> {
    for edge in &edges {
        for endpoint in [&edge.from_event, &edge.to_event] {
            if !event_ids.contains(endpoint) {
                return Err(GraphError::DanglingEndpoint {
                    from: edge.from_event.to_string(),
                    to: edge.to_event.to_string(),
                    missing: endpoint.to_string(),
                });
            }
        }
    }

    // Best edge per ordered pair: highest strength, then lowest order.
    let mut best: HashMap<(&EventId, &EventId), usize> = HashMap::new();
    for (i, edge) in edges.iter().enumerate() {
        if edge.from_event == edge.to_event {
            continue;
        }
        let key = (&edge.from_event, &edge.to_event);
        match best.get(&key) {
            Some(&j) => {
                let cur = &edges[j];
                if (edge.strength, Reverse(edge.order)) > (cur.strength, Reverse(cur.order)) {
                    best.insert(key, i);
                }
            }
            None => {
                best.insert(key, i);
            }
        }
    }
    let keep: HashSet<usize> = best.into_values().collect();
    Ok(edges
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, e)| e)
        .collect())
}

/// Outcome of cycle breaking: the surviving DAG edges plus the skipped ones.
#[derive(Debug, Clone)]
pub struct CycleBreakOutcome {
    pub kept: Vec<CausalEdge>,
    pub skipped: Vec<CausalEdge>,
}

/// Greedy cycle breaking over a sanitized edge set.
///
/// Edges are considered strongest-first; among equals, the pair whose
/// endpoints have the smaller degree sum goes first (degrees counted once
/// over the full input), and extraction order breaks remaining ties. An edge
/// `a -> b` is skipped exactly when `a` is already reachable from `b`
/// through previously kept edges — keeping it would close a cycle. Forward
/// and backward reachability sets are maintained transitively as edges are
/// accepted, so the skip test is a set lookup.
///
/// Both returned lists preserve the input edge order. Every endpoint must
/// appear in `events` (the [`sanitize_edges`] postcondition).
pub fn break_cycles_detailed(events: &[PlotEvent], edges: &[CausalEdge]) -> CycleBreakOutcome {
    let index: HashMap<&EventId, usize> = events
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.id, i))
        .collect();
    let endpoint = |id: &EventId| -> usize {
        *index
            .get(id)
            .expect("edge endpoints must be validated before cycle breaking")
    };

    let mut degree = vec![0usize; events.len()];
    for edge in edges {
        degree[endpoint(&edge.from_event)] += 1;
        degree[endpoint(&edge.to_event)] += 1;
    }

    let mut consider: Vec<usize> = (0..edges.len()).collect();
    consider.sort_by_key(|&i| {
        let e = &edges[i];
        let degree_sum = degree[endpoint(&e.from_event)] + degree[endpoint(&e.to_event)];
        (Reverse(e.strength), degree_sum, e.order, i)
    });

    // reach_to[x] = nodes reachable from x; reach_from[x] = nodes that reach
    // x. Both start as {x} so the transitive updates below also cover the
    // endpoints themselves.
    let n = events.len();
    let mut reach_to: Vec<HashSet<usize>> = (0..n).map(|i| HashSet::from([i])).collect();
    let mut reach_from: Vec<HashSet<usize>> = (0..n).map(|i| HashSet::from([i])).collect();

    let mut keep = vec![false; edges.len()];
    for &i in &consider {
        let a = endpoint(&edges[i].from_event);
        let b = endpoint(&edges[i].to_event);
        if reach_to[b].contains(&a) {
            continue; // a is reachable from b: adding a -> b would close a cycle
        }
        keep[i] = true;
        let descendants: Vec<usize> = reach_to[b].iter().copied().collect();
        let ancestors: Vec<usize> = reach_from[a].iter().copied().collect();
        for &x in &ancestors {
            reach_to[x].extend(descendants.iter().copied());
        }
        for &y in &descendants {
            reach_from[y].extend(ancestors.iter().copied());
        }
    }

    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (i, edge) in edges.iter().enumerate() {
        if keep[i] {
            kept.push(edge.clone());
        } else {
            skipped.push(edge.clone());
        }
    }
    CycleBreakOutcome { kept, skipped }
}

/// [`break_cycles_detailed`] without the skip report.
pub fn break_cycles(events: &[PlotEvent], edges: &[CausalEdge]) -> Vec<CausalEdge> {
    break_cycles_detailed(events, edges).kept
}

/// True iff Kahn's algorithm consumes every node of the graph.
pub fn is_acyclic(graph: &PlotGraph) -> bool {
    let events: Vec<&PlotEvent> = graph.events().collect();
    edge_set_is_acyclic_impl(&events, graph.edges())
}

/// Kahn acyclicity check over a bare event/edge list, independent of the
/// reachability bookkeeping inside [`break_cycles`].
pub fn edge_set_is_acyclic(events: &[PlotEvent], edges: &[CausalEdge]) -> bool {
    let refs: Vec<&PlotEvent> = events.iter().collect();
    edge_set_is_acyclic_impl(&refs, edges)
}

fn edge_set_is_acyclic_impl(events: &[&PlotEvent], edges: &[CausalEdge]) -> bool {
    let index: HashMap<&EventId, usize> = events
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.id, i))
        .collect();
    let mut indegree = vec![0usize; events.len()];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); events.len()];
    for edge in edges {
        let (Some(&a), Some(&b)) = (index.get(&edge.from_event), index.get(&edge.to_event)) else {
            return false;
        };
        indegree[b] += 1;
        successors[a].push(b);
    }
    let mut queue: Vec<usize> = (0..events.len()).filter(|&i| indegree[i] == 0).collect();
    let mut consumed = 0;
    while let Some(node) = queue.pop() {
        consumed += 1;
        for &next in &successors[node] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                queue.push(next);
            }
        }
    }
    consumed == events.len()
}

/// Plot-graph orderings offered to the rewriter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraversalMode {
    /// Follow the main storyline: preorder depth-first from the roots.
    Dft,
    /// Chronological levels: Kahn topological level order.
    Bft,
    /// The novel's original narrative order, ignoring edges.
    Chapter,
}

impl fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraversalMode::Dft => "dft",
            TraversalMode::Bft => "bft",
            TraversalMode::Chapter => "chapter",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TraversalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dft" => Ok(TraversalMode::Dft),
            "bft" => Ok(TraversalMode::Bft),
            "chapter" => Ok(TraversalMode::Chapter),
            other => Err(format!("unknown traversal mode `{other}`")),
        }
    }
}

/// Emit every event id exactly once in the order given by `mode`.
///
/// All tie-breaks use the `(chapter, seq)` position: DFT visits roots and
/// children in position order, BFT sorts each topological level by position,
/// and Chapter mode is a plain position sort.
pub fn traverse(graph: &PlotGraph, mode: TraversalMode) -> Result<Vec<EventId>, GraphError> {
    if !graph.acyclic {
        return Err(GraphError::CyclicGraph);
    }
    let mut events: Vec<&PlotEvent> = graph.events().collect();
    events.sort_by_key(|e| e.position());

    if mode == TraversalMode::Chapter {
        return Ok(events.iter().map(|e| e.id.clone()).collect());
    }

    let index: HashMap<&EventId, usize> = events
        .iter()
        .enumerate()
        .map(|(i, e)| (&e.id, i))
        .collect();
    let n = events.len();
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for edge in graph.edges() {
        let a = index[&edge.from_event];
        let b = index[&edge.to_event];
        successors[a].push(b);
        indegree[b] += 1;
    }
    for list in &mut successors {
        list.sort_unstable();
        list.dedup();
    }

    let order = match mode {
        TraversalMode::Dft => {
            let mut visited = vec![false; n];
            let mut out = Vec::with_capacity(n);
            let roots: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
            for root in roots {
                if visited[root] {
                    continue;
                }
                let mut stack = vec![root];
                while let Some(node) = stack.pop() {
                    if visited[node] {
                        continue;
                    }
                    visited[node] = true;
                    out.push(node);
                    for &child in successors[node].iter().rev() {
                        if !visited[child] {
                            stack.push(child);
                        }
                    }
                }
            }
            out
        }
        TraversalMode::Bft => {
            let mut out = Vec::with_capacity(n);
            let mut level: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
            while !level.is_empty() {
                level.sort_unstable();
                let mut next = Vec::new();
                for &node in &level {
                    out.push(node);
                    for &succ in &successors[node] {
                        indegree[succ] -= 1;
                        if indegree[succ] == 0 {
                            next.push(succ);
                        }
                    }
                }
                level = next;
            }
            out
        }
        TraversalMode::Chapter => unreachable!(),
    };

    Ok(order.into_iter().map(|i| events[i].id.clone()).collect())
}

/// Render the graph as Graphviz DOT, edge width scaled by strength.
pub fn to_dot(graph: &PlotGraph) -> String {
    let mut out = String::from("digraph plot {\n  rankdir=LR;\n  node [shape=box];\n");
    for event in graph.events() {
        out.push_str(&format!(
            "  \"{}\" [label=\"{}\\n{}\"];\n",
            event.id,
            event.id,
            escape_dot(&event.description)
        ));
    }
    for edge in graph.edges() {
        let penwidth = match edge.strength {
            Strength::High => "3.0",
            Strength::Medium => "2.0",
            Strength::Low => "1.0",
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\", penwidth={}];\n",
            edge.from_event, edge.to_event, edge.strength, penwidth
        ));
    }
    out.push_str("}\n");
    out
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
