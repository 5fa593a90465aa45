//! Causal DAGs, d-separation by exhaustive path enumeration, and the three
//! instrumental-variable conditions as graph queries.
//!
//! Graphs in this domain have a handful of nodes, so every simple path between
//! the queried pair is enumerated and judged triple by triple. The verdicts
//! double as human-readable witnesses: each path records which rule decided
//! every interior node.
//!
//! Collider handling is full d-separation: a collider opens when it or any of
//! its descendants is conditioned on.
//!
//! Text format, one statement per line:
//!
//! ```text
//! # comment
//! latent U
//! node X
//! R -> T
//! U -> T
//! ```

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("self loop on `{0}`")]
    SelfLoop(String),
    #[error("edge {0} -> {1} would create a directed cycle")]
    Cycle(String, String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    latent: Vec<bool>,
    edges: Vec<(usize, usize)>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
}

/// How an interior node of a path was judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// `a -> m -> b` or `a <- m <- b`
    Chain,
    /// `a <- m -> b`
    Fork,
    /// `a -> m <- b`
    Collider,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Chain => "chain",
            Rule::Fork => "fork",
            Rule::Collider => "collider",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleVerdict {
    pub node: String,
    pub rule: Rule,
    pub blocked: bool,
}

/// Verdict for one simple path between the queried nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathVerdict {
    pub path: Vec<String>,
    /// `forward[i]` is true when the i-th edge points from `path[i]` to `path[i+1]`.
    pub forward: Vec<bool>,
    pub open: bool,
    /// First interior node that blocks the path.
    pub blocking_node: Option<String>,
    pub triples: Vec<TripleVerdict>,
}

impl fmt::Display for PathVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path[0])?;
        for (node, fwd) in self.path[1..].iter().zip(&self.forward) {
            write!(f, " {} {node}", if *fwd { "->" } else { "<-" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Separation {
    pub separated: bool,
    pub paths: Vec<PathVerdict>,
}

/// Result of checking relevance, randomization and exclusion for a candidate
/// instrument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IvReport {
    pub iv1: bool,
    pub iv2: bool,
    pub iv3: bool,
    /// Directed path instrument -> ... -> treatment, when one exists.
    pub relevance_path: Option<Vec<String>>,
    /// Open paths between the instrument and any confounder.
    pub iv2_witnesses: Vec<PathVerdict>,
    /// Open paths between instrument and outcome given treatment and confounders.
    pub iv3_witnesses: Vec<PathVerdict>,
}

impl Dag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str, latent: bool) -> Result<usize, DagError> {
        if self.index(name).is_some() {
            return Err(DagError::DuplicateNode(name.to_string()));
        }
        self.names.push(name.to_string());
        self.latent.push(latent);
        self.children.push(Vec::new());
        self.parents.push(Vec::new());
        Ok(self.names.len() - 1)
    }

    fn ensure_node(&mut self, name: &str) -> usize {
        match self.index(name) {
            Some(i) => i,
            None => self.add_node(name, false).expect("absent"),
        }
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), DagError> {
        let f = self.require(from)?;
        let t = self.require(to)?;
        if f == t {
            return Err(DagError::SelfLoop(from.to_string()));
        }
        if self.edges.contains(&(f, t)) {
            return Err(DagError::DuplicateEdge(from.to_string(), to.to_string()));
        }
        if self.reaches(t, f) {
            return Err(DagError::Cycle(from.to_string(), to.to_string()));
        }
        self.edges.push((f, t));
        self.children[f].push(t);
        self.children[f].sort_unstable();
        self.parents[t].push(f);
        self.parents[t].sort_unstable();
        Ok(())
    }

    /// Build from node names and edges; all nodes observed.
    pub fn from_edges(nodes: &[&str], edges: &[(&str, &str)]) -> Result<Self, DagError> {
        let mut g = Dag::new();
        for n in nodes {
            g.add_node(n, false)?;
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn parse(text: &str) -> Result<Self, DagError> {
        let mut g = Dag::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DagError::Parse {
                line: line_no,
                message,
            };
            if let Some((lhs, rhs)) = line.split_once("->") {
                let (a, b) = (lhs.trim(), rhs.trim());
                if !valid_name(a) || !valid_name(b) {
                    return Err(err(format!("malformed edge `{line}`")));
                }
                g.ensure_node(a);
                g.ensure_node(b);
                g.add_edge(a, b).map_err(|e| err(e.to_string()))?;
                continue;
            }
            let mut words = line.split_whitespace();
            match (words.next(), words.next(), words.next()) {
                (Some(kw @ ("latent" | "node")), Some(name), None) if valid_name(name) => {
                    let idx = g.ensure_node(name);
                    if kw == "latent" {
                        g.latent[idx] = true;
                    }
                }
                _ => {
                    return Err(err(format!(
                        "expected `A -> B`, `latent X` or `node X`, got `{line}`"
                    )))
                }
            }
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    pub fn is_latent(&self, name: &str) -> Result<bool, DagError> {
        Ok(self.latent[self.require(name)?])
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.names[a].as_str(), self.names[b].as_str()))
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize, DagError> {
        self.index(name)
            .ok_or_else(|| DagError::UnknownNode(name.to_string()))
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        self.directed_path(from, to).is_some()
    }

    /// Breadth-first directed path search.
    fn directed_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.names.len()];
        let mut queue = std::collections::VecDeque::from([from]);
        prev[from] = from;
        while let Some(v) = queue.pop_front() {
            if v == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &c in &self.children[v] {
                if prev[c] == usize::MAX {
                    prev[c] = v;
                    queue.push_back(c);
                }
            }
        }
        None
    }

    /// Node plus all its descendants.
    fn descendants_inclusive(&self, v: usize) -> Vec<bool> {
        let mut seen = vec![false; self.names.len()];
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            if !seen[x] {
                seen[x] = true;
                stack.extend(&self.children[x]);
            }
        }
        seen
    }

    /// Every simple path between `a` and `b` in the skeleton, with the
    /// orientation of each step.
    fn simple_paths(&self, a: usize, b: usize) -> Vec<(Vec<usize>, Vec<bool>)> {
        let n = self.names.len();
        let neighbours: Vec<Vec<(usize, bool)>> = (0..n)
            .map(|v| {
                let mut adj: Vec<(usize, bool)> =
                    self.children[v].iter().map(|&c| (c, true)).collect();
                adj.extend(self.parents[v].iter().map(|&p| (p, false)));
                adj.sort_unstable();
                adj
            })
            .collect();
        let mut out = Vec::new();
        let mut on_path = vec![false; n];
        let mut path = vec![a];
        let mut dirs = Vec::new();
        on_path[a] = true;
        self.extend_paths(b, &neighbours, &mut on_path, &mut path, &mut dirs, &mut out);
        out
    }

    fn extend_paths(
        &self,
        target: usize,
        neighbours: &[Vec<(usize, bool)>],
        on_path: &mut [bool],
        path: &mut Vec<usize>,
        dirs: &mut Vec<bool>,
        out: &mut Vec<(Vec<usize>, Vec<bool>)>,
    ) {
        let last = *path.last().expect("non-empty");
        if last == target {
            out.push((path.clone(), dirs.clone()));
            return;
        }
        for &(next, fwd) in &neighbours[last] {
            if on_path[next] {
                continue;
            }
            on_path[next] = true;
            path.push(next);
            dirs.push(fwd);
            self.extend_paths(target, neighbours, on_path, path, dirs, out);
            dirs.pop();
            path.pop();
            on_path[next] = false;
        }
    }

    /// Whether `a` and `b` are d-separated given `conditioned`, with a verdict
    /// for every simple path between them.
    pub fn d_separated(
        &self,
        a: &str,
        b: &str,
        conditioned: &[&str],
    ) -> Result<Separation, DagError> {
        let ai = self.require(a)?;
        let bi = self.require(b)?;
        let z: BTreeSet<usize> = conditioned
            .iter()
            .map(|c| self.require(c))
            .collect::<Result<_, _>>()?;
        if ai == bi {
            return Err(DagError::InvalidQuery(format!(
                "`{a}` queried against itself"
            )));
        }
        if z.contains(&ai) || z.contains(&bi) {
            return Err(DagError::InvalidQuery(
                "queried nodes may not be in the conditioning set".into(),
            ));
        }

        // A collider is opened by conditioning on it or on any descendant.
        let collider_opened: Vec<bool> = (0..self.names.len())
            .map(|v| {
                let desc = self.descendants_inclusive(v);
                z.iter().any(|&c| desc[c])
            })
            .collect();

        let mut paths = Vec::new();
        for (nodes, dirs) in self.simple_paths(ai, bi) {
            let mut triples = Vec::new();
            let mut blocking = None;
            for k in 1..nodes.len() - 1 {
                let into_from_left = dirs[k - 1];
                let into_from_right = !dirs[k];
                let rule = match (into_from_left, into_from_right) {
                    (true, true) => Rule::Collider,
                    (false, false) => Rule::Fork,
                    _ => Rule::Chain,
                };
                let mid = nodes[k];
                let blocked = match rule {
                    Rule::Collider => !collider_opened[mid],
                    Rule::Chain | Rule::Fork => z.contains(&mid),
                };
                if blocked && blocking.is_none() {
                    blocking = Some(self.names[mid].clone());
                }
                triples.push(TripleVerdict {
                    node: self.names[mid].clone(),
                    rule,
                    blocked,
                });
            }
            paths.push(PathVerdict {
                path: nodes.iter().map(|&i| self.names[i].clone()).collect(),
                forward: dirs,
                open: blocking.is_none(),
                blocking_node: blocking,
                triples,
            });
        }
        Ok(Separation {
            separated: paths.iter().all(|p| !p.open),
            paths,
        })
    }

    /// Relevance: a directed path instrument -> treatment exists.
    /// Randomization: the instrument is d-separated from every confounder.
    /// Exclusion: instrument and outcome are d-separated given the treatment
    /// and the confounders.
    pub fn check_iv(
        &self,
        instrument: &str,
        treatment: &str,
        outcome: &str,
        confounders: &[&str],
    ) -> Result<IvReport, DagError> {
        let ii = self.require(instrument)?;
        let ti = self.require(treatment)?;
        self.require(outcome)?;
        for c in confounders {
            self.require(c)?;
        }
        let mut distinct = vec![instrument, treatment, outcome];
        distinct.extend(confounders);
        for (i, n) in distinct.iter().enumerate() {
            if distinct[..i].contains(n) {
                return Err(DagError::InvalidQuery(format!(
                    "node `{n}` given more than one role"
                )));
            }
        }

        let relevance_path = self
            .directed_path(ii, ti)
            .map(|p| p.into_iter().map(|i| self.names[i].clone()).collect());

        let mut iv2_witnesses = Vec::new();
        for c in confounders {
            let sep = self.d_separated(instrument, c, &[])?;
            iv2_witnesses.extend(sep.paths.into_iter().filter(|p| p.open));
        }

        let mut cond = vec![treatment];
        cond.extend(confounders);
        let sep = self.d_separated(instrument, outcome, &cond)?;
        let iv3_witnesses: Vec<PathVerdict> = sep.paths.into_iter().filter(|p| p.open).collect();

        Ok(IvReport {
            iv1: relevance_path.is_some(),
            iv2: iv2_witnesses.is_empty(),
            iv3: iv3_witnesses.is_empty(),
            relevance_path,
            iv2_witnesses,
            iv3_witnesses,
        })
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case2() -> Dag {
        Dag::parse("latent U\nR -> T\nT -> Y\nU -> T\nU -> Y\n").unwrap()
    }

    #[test]
    fn case2_confounding_path_open() {
        let g = case2();
        let sep = g.d_separated("T", "Y", &[]).unwrap();
        assert!(!sep.separated);
        let confounding = sep
            .paths
            .iter()
            .find(|p| p.path == ["T", "U", "Y"])
            .unwrap();
        assert!(confounding.open);
        assert_eq!(confounding.to_string(), "T <- U -> Y");
        assert_eq!(confounding.triples[0].rule, Rule::Fork);
    }

    #[test]
    fn chain_blocked_by_middle() {
        let g = Dag::from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        assert!(g.d_separated("A", "C", &["B"]).unwrap().separated);
        assert!(!g.d_separated("A", "C", &[]).unwrap().separated);
    }

    #[test]
    fn collider_opened_by_conditioning() {
        let g = Dag::from_edges(&["A", "B", "C"], &[("A", "B"), ("C", "B")]).unwrap();
        assert!(g.d_separated("A", "C", &[]).unwrap().separated);
        let sep = g.d_separated("A", "C", &["B"]).unwrap();
        assert!(!sep.separated);
        assert_eq!(sep.paths[0].triples[0].rule, Rule::Collider);
    }

    #[test]
    fn collider_opened_by_descendant() {
        let g =
            Dag::from_edges(&["A", "B", "C", "D"], &[("A", "B"), ("C", "B"), ("B", "D")]).unwrap();
        assert!(!g.d_separated("A", "C", &["D"]).unwrap().separated);
    }

    #[test]
    fn blocking_node_reported() {
        let g = Dag::from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let sep = g.d_separated("A", "C", &["B"]).unwrap();
        assert_eq!(sep.paths[0].blocking_node.as_deref(), Some("B"));
    }

    #[test]
    fn iv_case2_all_hold() {
        let rep = case2().check_iv("R", "T", "Y", &["U"]).unwrap();
        assert!(rep.iv1 && rep.iv2 && rep.iv3);
        assert_eq!(rep.relevance_path.unwrap(), ["R", "T"]);
    }

    #[test]
    fn iv_direct_effect_violates_exclusion() {
        let mut g = case2();
        g.add_edge("R", "Y").unwrap();
        let rep = g.check_iv("R", "T", "Y", &["U"]).unwrap();
        assert!(rep.iv1 && rep.iv2 && !rep.iv3);
        assert_eq!(rep.iv3_witnesses[0].to_string(), "R -> Y");
    }

    #[test]
    fn iv_confounded_instrument() {
        let mut g = case2();
        g.add_edge("U", "R").unwrap();
        let rep = g.check_iv("R", "T", "Y", &["U"]).unwrap();
        assert!(!rep.iv2);
        assert!(rep.iv2_witnesses.iter().any(|p| p.to_string() == "R <- U"));
    }

    #[test]
    fn construction_errors() {
        let mut g = Dag::from_edges(&["A", "B"], &[("A", "B")]).unwrap();
        assert!(matches!(g.add_edge("B", "A"), Err(DagError::Cycle(..))));
        assert!(matches!(
            g.add_edge("A", "B"),
            Err(DagError::DuplicateEdge(..))
        ));
        assert!(matches!(g.add_edge("A", "A"), Err(DagError::SelfLoop(_))));
        assert!(matches!(
            g.add_edge("A", "Q"),
            Err(DagError::UnknownNode(_))
        ));
        assert!(matches!(
            g.d_separated("A", "Q", &[]),
            Err(DagError::UnknownNode(_))
        ));
        assert!(matches!(
            g.d_separated("A", "A", &[]),
            Err(DagError::InvalidQuery(_))
        ));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Dag::parse("A -> B\nB => C\n").unwrap_err();
        assert!(matches!(err, DagError::Parse { line: 2, .. }));
        let err = Dag::parse("A -> B\nB -> A\n").unwrap_err();
        assert!(matches!(err, DagError::Parse { line: 2, .. }));
    }

    #[test]
    fn latent_flags_parsed() {
        let g = case2();
        assert!(g.is_latent("U").unwrap());
        assert!(!g.is_latent("R").unwrap());
        assert_eq!(g.edges().count(), 4);
    }
}
