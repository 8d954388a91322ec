//! Ward linkage on Euclidean distance via the nearest-neighbour chain.

use crate::matrix::{sq_dist, Matrix};

/// One agglomeration step. `a` and `b` are representative point indices of
/// the two merged clusters; `height` is the Lance-Williams Ward distance
/// (twice the increase in within-cluster sum of squares).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

/// Returns the `n - 1` merges sorted by height.
pub fn ward_linkage(x: &Matrix) -> Vec<Merge> {
    let n = x.nrows();
    if n < 2 {
        return Vec::new();
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(x.row(i), x.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut remaining = n;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("active cluster"));
        }
        let a = *chain.last().expect("non-empty chain");
        let prev = if chain.len() >= 2 {
            Some(chain[chain.len() - 2])
        } else {
            None
        };
        let mut best = prev.unwrap_or(usize::MAX);
        let mut best_d = prev.map_or(f64::INFINITY, |p| d[a * n + p]);
        for c in 0..n {
            if c != a && active[c] && d[a * n + c] < best_d {
                best = c;
                best_d = d[a * n + c];
            }
        }
        if Some(best) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = if a < best { (a, best) } else { (best, a) };
            let (sa, sb) = (size[keep] as f64, size[gone] as f64);
            for c in 0..n {
                if !active[c] || c == keep || c == gone {
                    continue;
                }
                let sc = size[c] as f64;
                let t = sa + sb + sc;
                let v = ((sa + sc) * d[keep * n + c] + (sb + sc) * d[gone * n + c]
                    - sc * best_d)
                    / t;
                d[keep * n + c] = v;
                d[c * n + keep] = v;
            }
            size[keep] += size[gone];
            active[gone] = false;
            remaining -= 1;
            merges.push(Merge {
                a: keep,
                b: gone,
                height: best_d,
                size: size[keep],
            });
        } else {
            chain.push(best);
        }
    }
    merges.sort_by(|p, q| p.height.total_cmp(&q.height));
    merges
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Applies the lowest `n - k` merges and labels the resulting clusters.
pub fn ward_cut(n: usize, merges: &[Merge], k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n.saturating_sub(k)) {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        if ra != rb {
            parent[rb] = ra;
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}
