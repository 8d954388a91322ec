//! HDBSCAN: mutual-reachability MST, condensed tree, excess-of-mass
//! cluster selection.

use crate::matrix::Distances;

const MAX_LAMBDA: f64 = 1e12;

fn lambda_of(dist: f64) -> f64 {
    if dist > 1.0 / MAX_LAMBDA {
        1.0 / dist
    } else {
        MAX_LAMBDA
    }
}

fn core_distances(d: &Distances, min_samples: usize) -> Vec<f64> {
    let n = d.len();
    let kth = min_samples.saturating_sub(1).min(n - 1);
    (0..n)
        .map(|i| {
            let mut row = d.row(i).to_vec();
            let (_, v, _) = row.select_nth_unstable_by(kth, |a, b| a.total_cmp(b));
            *v
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph.
fn mst(d: &Distances, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = d.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut cur = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = d.get(cur, j).max(core[cur]).max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                from[j] = cur;
            }
            if best[j] < next_d {
                next_d = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_d));
        cur = next;
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    edges
}

struct Linkage {
    /// children of internal node `n + i`
    children: Vec<(usize, usize)>,
    dist: Vec<f64>,
    size: Vec<usize>,
}

fn single_linkage(n: usize, edges: &[(usize, usize, f64)]) -> Linkage {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut size = vec![1usize; 2 * n - 1];
    let mut children = Vec::with_capacity(n - 1);
    let mut dist = Vec::with_capacity(n - 1);
    for (i, &(a, b, w)) in edges.iter().enumerate() {
        let node = n + i;
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        children.push((ra, rb));
        dist.push(w);
    }
    Linkage {
        children,
        dist,
        size,
    }
}

struct CondensedEdge {
    parent: usize,
    /// cluster label when `is_cluster`, otherwise a point index
    child: usize,
    lambda: f64,
    size: usize,
    is_cluster: bool,
}

fn leaves(link: &Linkage, n: usize, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let (l, r) = link.children[x - n];
            stack.push(l);
            stack.push(r);
        }
    }
}

fn condense(link: &Linkage, n: usize, mcs: usize) -> (Vec<CondensedEdge>, usize) {
    let root = 2 * n - 2;
    let mut label = vec![usize::MAX; 2 * n - 1];
    label[root] = 0;
    let mut next_label = 1;
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    let mut pts = Vec::new();
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let (l, r) = link.children[node - n];
        let lambda = lambda_of(link.dist[node - n]);
        let here = label[node];
        let (ls, rs) = (link.size[l], link.size[r]);
        let fall_out = |child: usize, out: &mut Vec<CondensedEdge>, pts: &mut Vec<usize>| {
            pts.clear();
            leaves(link, n, child, pts);
            for &p in pts.iter() {
                out.push(CondensedEdge {
                    parent: here,
                    child: p,
                    lambda,
                    size: 1,
                    is_cluster: false,
                });
            }
        };
        match (ls >= mcs, rs >= mcs) {
            (true, true) => {
                for (c, s) in [(l, ls), (r, rs)] {
                    label[c] = next_label;
                    out.push(CondensedEdge {
                        parent: here,
                        child: next_label,
                        lambda,
                        size: s,
                        is_cluster: true,
                    });
                    next_label += 1;
                    queue.push_back(c);
                }
            }
            (false, false) => {
                fall_out(l, &mut out, &mut pts);
                fall_out(r, &mut out, &mut pts);
            }
            (true, false) => {
                label[l] = here;
                fall_out(r, &mut out, &mut pts);
                queue.push_back(l);
            }
            (false, true) => {
                label[r] = here;
                fall_out(l, &mut out, &mut pts);
                queue.push_back(r);
            }
        }
    }
    (out, next_label)
}

/// Returns a cluster id per point, `None` for noise. The root cluster is
/// never selected, so a dataset without structure comes back all-noise.
pub fn hdbscan(d: &Distances, min_cluster_size: usize, min_samples: usize) -> Vec<Option<usize>> {
    let n = d.len();
    if n < 2 {
        return vec![None; n];
    }
    let core = core_distances(d, min_samples);
    let edges = mst(d, &core);
    let link = single_linkage(n, &edges);
    let (tree, n_clusters) = condense(&link, n, min_cluster_size.max(2));

    let mut birth = vec![0.0; n_clusters];
    let mut cluster_parent = vec![usize::MAX; n_clusters];
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree.iter().filter(|e| e.is_cluster) {
        birth[e.child] = e.lambda;
        cluster_parent[e.child] = e.parent;
        kids[e.parent].push(e.child);
    }
    let mut stability = vec![0.0; n_clusters];
    for e in &tree {
        stability[e.parent] += (e.lambda - birth[e.parent]) * e.size as f64;
    }

    let mut selected = vec![false; n_clusters];
    for c in (1..n_clusters).rev() {
        let child_sum: f64 = kids[c].iter().map(|&k| stability[k]).sum();
        if !kids[c].is_empty() && child_sum > stability[c] {
            stability[c] = child_sum;
        } else {
            selected[c] = true;
            let mut stack = kids[c].clone();
            while let Some(x) = stack.pop() {
                selected[x] = false;
                stack.extend(kids[x].iter().copied());
            }
        }
    }

    let mut out = vec![None; n];
    for e in tree.iter().filter(|e| !e.is_cluster) {
        let mut c = e.parent;
        while c != 0 && !selected[c] {
            c = cluster_parent[c];
        }
        if c != 0 {
            out[e.child] = Some(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    #[test]
    fn two_dense_groups_and_an_outlier() {
        let mut rows: Vec<[f64; 2]> = Vec::new();
        for i in 0..10 {
            rows.push([i as f64 * 0.01, 0.0]);
            rows.push([5.0 + i as f64 * 0.01, 0.0]);
        }
        rows.push([100.0, 100.0]);
        let x = Matrix::from_rows(&rows);
        let labels = hdbscan(&Distances::new(&x), 5, 5);
        assert_eq!(labels[20], None);
        let a = labels[0].unwrap();
        let b = labels[1].unwrap();
        assert_ne!(a, b);
        for i in 0..10 {
            assert_eq!(labels[2 * i], Some(a));
            assert_eq!(labels[2 * i + 1], Some(b));
        }
    }

    #[test]
    fn too_small_for_any_cluster_is_all_noise() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        assert!(hdbscan(&Distances::new(&x), 5, 5).iter().all(Option::is_none));
    }
}
