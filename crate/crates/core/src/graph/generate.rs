use super::{Edge, Graph};
use crate::error::{Error, Result};

/// `rows × cols` 4-neighbor lattice with unit weights. Node `(r, c)` has id
/// `r * cols + c`.
pub fn generate_grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid dimensions must be at least 1"));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(Edge::unit(id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push(Edge::unit(id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::new(rows * cols, edges, false)
}

/// Connected caveman graph: `cliques` complete subgraphs of `clique_size`
/// nodes on a ring. In clique `c` starting at node `s`, the smallest
/// intra-clique edge `(s, s+1)` is redirected so it joins `s+1` to the first
/// node of clique `(c+1) mod cliques`. Nodes are labeled with their clique.
pub fn generate_connected_caveman(cliques: usize, clique_size: usize) -> Result<Graph> {
    if cliques < 2 || clique_size < 2 {
        return Err(Error::invalid(
            "connected caveman needs at least 2 cliques of at least 2 nodes",
        ));
    }
    let n = cliques * clique_size;
    let mut edges = Vec::with_capacity(cliques * clique_size * (clique_size - 1) / 2);
    for c in 0..cliques {
        let s = c * clique_size;
        for i in s..s + clique_size {
            for j in i + 1..s + clique_size {
                if (i, j) != (s, s + 1) {
                    edges.push(Edge::unit(i, j));
                }
            }
        }
        let next = ((c + 1) % cliques) * clique_size;
        edges.push(Edge::unit(s + 1, next));
    }
    let labels = (0..n).map(|v| v / clique_size).collect();
    Graph::new(n, edges, false)?.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = generate_grid(20, 20).unwrap();
        assert_eq!((g.n(), g.edge_count()), (400, 760));
        let g = generate_grid(1, 1).unwrap();
        assert_eq!((g.n(), g.edge_count()), (1, 0));
        let g = generate_grid(2, 3).unwrap();
        assert_eq!((g.n(), g.edge_count()), (6, 7));
        assert!(generate_grid(0, 3).is_err());
        assert!(g.attributes().is_none() && g.labels().is_none());
    }

    #[test]
    fn caveman_counts() {
        let g = generate_connected_caveman(20, 20).unwrap();
        assert_eq!((g.n(), g.edge_count()), (400, 3800));
        assert_eq!(g.class_count(), 20);
        assert!(g.is_connected());
    }

    #[test]
    fn caveman_minimal() {
        // Two K2 cliques: each loses its only edge and gains a ring edge, so
        // the result has two edges and two components.
        let g = generate_connected_caveman(2, 2).unwrap();
        assert_eq!((g.n(), g.edge_count()), (4, 2));
        assert!(g.has_edge(1, 2) && g.has_edge(3, 0));
        assert!(!g.is_connected());
    }

    #[test]
    fn caveman_connected_for_cliques_of_three_or_more() {
        for cl in 2..6 {
            for sz in 3..7 {
                let g = generate_connected_caveman(cl, sz).unwrap();
                assert!(g.is_connected(), "({cl}, {sz})");
                assert_eq!(g.edge_count(), cl * sz * (sz - 1) / 2);
            }
        }
    }

    #[test]
    fn generators_deterministic() {
        assert_eq!(
            generate_connected_caveman(5, 4).unwrap(),
            generate_connected_caveman(5, 4).unwrap()
        );
        assert_eq!(generate_grid(3, 7).unwrap(), generate_grid(3, 7).unwrap());
    }

    #[test]
    fn caveman_rejects_small() {
        assert!(generate_connected_caveman(1, 5).is_err());
        assert!(generate_connected_caveman(5, 1).is_err());
    }
}
