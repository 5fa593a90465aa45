//! Independent d-separation oracle via the moralized ancestral graph:
//! `a` and `b` are d-separated by `z` iff they are disconnected in the
//! moral graph of the ancestors of `{a, b} ∪ z` once `z` is deleted.

/// Graph on nodes `0..n` given by directed edges `(from, to)`.
pub fn d_separated(n: usize, edges: &[(usize, usize)], a: usize, b: usize, z: &[usize]) -> bool {
    let mut relevant = vec![false; n];
    let mut stack: Vec<usize> = vec![a, b];
    stack.extend_from_slice(z);
    while let Some(v) = stack.pop() {
        if !relevant[v] {
            relevant[v] = true;
            stack.extend(edges.iter().filter(|e| e.1 == v).map(|e| e.0));
        }
    }

    let mut adj = vec![vec![false; n]; n];
    let mut link = |u: usize, v: usize| {
        adj[u][v] = true;
        adj[v][u] = true;
    };
    for &(u, v) in edges {
        if relevant[u] && relevant[v] {
            link(u, v);
        }
    }
    for child in (0..n).filter(|&c| relevant[c]) {
        let parents: Vec<usize> = edges.iter().filter(|e| e.1 == child).map(|e| e.0).collect();
        for (i, &p) in parents.iter().enumerate() {
            for &q in &parents[i + 1..] {
                link(p, q);
            }
        }
    }

    let mut seen = vec![false; n];
    for &v in z {
        seen[v] = true;
    }
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(v) = stack.pop() {
        if v == b {
            return false;
        }
        for w in 0..n {
            if adj[v][w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    true
}

/// Every DAG on `n` nodes whose edges respect the order `0 < 1 < … < n-1`,
/// as edge lists. Each DAG on `n` labelled nodes is isomorphic to at least one.
pub fn ordered_dags(n: usize) -> impl Iterator<Item = Vec<(usize, usize)>> {
    let slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    (0u64..1 << slots.len()).map(move |mask| {
        slots
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect()
    })
}

/// Compare the library against the oracle on every ordered DAG with `n`
/// nodes, every unordered pair and every conditioning subset of the rest.
/// Returns (queries checked, first disagreement).
pub fn exhaustive_check(n: usize) -> (usize, Option<String>) {
    use ivtrial_core::Dag;
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut checked = 0;
    for edges in ordered_dags(n) {
        let named: Vec<(&str, &str)> = edges
            .iter()
            .map(|&(u, v)| (name_refs[u], name_refs[v]))
            .collect();
        let g = Dag::from_edges(&name_refs, &named).expect("ordered edges are acyclic");
        for a in 0..n {
            for b in a + 1..n {
                let rest: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
                for mask in 0u32..1 << rest.len() {
                    let z: Vec<usize> = rest
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask >> k & 1 == 1)
                        .map(|(_, &v)| v)
                        .collect();
                    let zn: Vec<&str> = z.iter().map(|&v| name_refs[v]).collect();
                    let got = g
                        .d_separated(name_refs[a], name_refs[b], &zn)
                        .unwrap()
                        .separated;
                    let want = d_separated(n, &edges, a, b, &z);
                    checked += 1;
                    if got != want {
                        return (
                            checked,
                            Some(format!("edges {edges:?}: V{a} vs V{b} given {zn:?}: library {got}, oracle {want}")),
                        );
                    }
                }
            }
        }
    }
    (checked, None)
}
