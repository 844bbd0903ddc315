//! Progressive edge-growth construction of regular-column-weight LDPC codes.
//!
//! Each new edge of a variable node goes to a check that is as far away as
//! possible in the current Tanner graph, ties broken by lowest check degree
//! and then by a seeded random pick.

use std::collections::VecDeque;

use rand::Rng;

use super::ParityCheckMatrix;
use crate::rng::seeded;

pub fn build(n_rows: usize, n_cols: usize, col_degree: usize, seed: u64) -> ParityCheckMatrix {
    assert!(col_degree >= 1 && col_degree <= n_rows);
    let mut rng = seeded(seed);
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n_cols];
    let mut chk_adj: Vec<Vec<usize>> = vec![Vec::new(); n_rows];

    // Checks saturate at the regular row degree when the edge count allows.
    let row_cap = (n_cols * col_degree).div_ceil(n_rows);

    let pick = |v: usize,
                cands: &[usize],
                var_adj: &Vec<Vec<usize>>,
                chk_adj: &Vec<Vec<usize>>,
                rng: &mut crate::rng::SimRng| {
        let open = |c: &usize| chk_adj[*c].len() < row_cap && !var_adj[v].contains(c);
        let mut pool: Vec<usize> = cands.iter().copied().filter(open).collect();
        if pool.is_empty() {
            pool = (0..chk_adj.len()).filter(open).collect();
        }
        let min = pool.iter().map(|&c| chk_adj[c].len()).min().unwrap();
        let best: Vec<usize> = pool
            .into_iter()
            .filter(|&c| chk_adj[c].len() == min)
            .collect();
        best[rng.random_range(0..best.len())]
    };

    for v in 0..n_cols {
        for e in 0..col_degree {
            let chosen = if e == 0 {
                let all: Vec<usize> = (0..n_rows).collect();
                pick(v, &all, &var_adj, &chk_adj, &mut rng)
            } else {
                // BFS over checks reachable from v, level by level.
                let mut reached = vec![false; n_rows];
                let mut seen_var = vec![false; n_cols];
                seen_var[v] = true;
                let mut frontier: VecDeque<usize> = VecDeque::new();
                for &c in &var_adj[v] {
                    reached[c] = true;
                    frontier.push_back(c);
                }
                let mut n_reached = frontier.len();
                let mut prev_reached = reached.clone();
                loop {
                    let mut next = VecDeque::new();
                    for &c in &frontier {
                        for &u in &chk_adj[c] {
                            if seen_var[u] {
                                continue;
                            }
                            seen_var[u] = true;
                            for &c2 in &var_adj[u] {
                                if !reached[c2] {
                                    reached[c2] = true;
                                    next.push_back(c2);
                                }
                            }
                        }
                    }
                    if next.is_empty() {
                        // Graph component exhausted: any unreached check.
                        let cands: Vec<usize> = (0..n_rows).filter(|&c| !reached[c]).collect();
                        break pick(v, &cands, &var_adj, &chk_adj, &mut rng);
                    }
                    n_reached += next.len();
                    if n_reached == n_rows {
                        // Deepest level: checks first reached at this depth.
                        let cands: Vec<usize> = (0..n_rows).filter(|&c| !prev_reached[c]).collect();
                        break pick(v, &cands, &var_adj, &chk_adj, &mut rng);
                    }
                    prev_reached.clone_from(&reached);
                    frontier = next;
                }
            };
            var_adj[v].push(chosen);
            chk_adj[chosen].push(v);
        }
    }

    ParityCheckMatrix::from_rows(n_cols, chk_adj).expect("PEG graph has no duplicate edges")
}

/// Length of the shortest cycle in the Tanner graph (0 if acyclic).
pub fn girth(h: &ParityCheckMatrix) -> usize {
    let n_v = h.n_cols();
    let n_c = h.n_rows();
    let mut best = usize::MAX;
    // Nodes: variables 0..n_v, checks n_v..n_v+n_c.
    for start in 0..n_v {
        let mut dist = vec![usize::MAX; n_v + n_c];
        let mut parent = vec![usize::MAX; n_v + n_c];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        while let Some(x) = q.pop_front() {
            let nbrs: Vec<usize> = if x < n_v {
                h.cols()[x].iter().map(|&c| n_v + c).collect()
            } else {
                h.rows()[x - n_v].clone()
            };
            for y in nbrs {
                if y == parent[x] {
                    continue;
                }
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    parent[y] = x;
                    q.push_back(y);
                } else {
                    best = best.min(dist[x] + dist[y] + 1);
                }
            }
        }
    }
    if best == usize::MAX {
        0
    } else {
        best
    }
}
