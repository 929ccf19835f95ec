use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, Dataset};
use crate::error::{Error, Result};

/// One agglomeration step.
///
/// `left` and `right` are observation indices, one drawn from each of the
/// two clusters being joined. `height` is the increase in total
/// within-cluster sum of squares caused by the merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// The `N − 1` merges of a Ward clustering, in non-decreasing height order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_points: usize,
    pub merges: Vec<Merge>,
}

/// Ward's minimum-variance hierarchy on Euclidean data.
///
/// Runs the nearest-neighbour chain algorithm over a dissimilarity matrix
/// kept in units of "inertia increase", updated with the Lance–Williams
/// recurrence
///
/// ```text
/// d(k, i∪j) = [(n_i + n_k) d(k,i) + (n_j + n_k) d(k,j) − n_k d(i,j)] / (n_i + n_j + n_k)
/// ```
///
/// starting from `d(i,j) = ‖x_i − x_j‖² / 2`. Ward's criterion is reducible,
/// so the chain finds the same merges as the greedy procedure; merges are
/// then sorted by height.
pub fn ward_dendrogram(data: &Dataset) -> Dendrogram {
    let n = data.n_rows();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 0.5 * sq_dist(data.row(i), data.row(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut alive: Vec<usize> = (0..n).collect();
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while merges.len() + 1 < n {
        if chain.is_empty() {
            chain.push(alive[0]);
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Prefer the previous chain element on ties so the chain terminates.
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, dist[a * n + p]),
                None => (usize::MAX, f64::INFINITY),
            };
            for &c in &alive {
                if c != a && dist[a * n + c] < best_d {
                    best = c;
                    best_d = dist[a * n + c];
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (a, best);
            }
            chain.push(best);
        };

        let (keep, gone) = (a.min(b), a.max(b));
        let d_ab = dist[a * n + b];
        let (na, nb) = (size[keep] as f64, size[gone] as f64);
        for &c in &alive {
            if c == keep || c == gone {
                continue;
            }
            let nc = size[c] as f64;
            let d = ((na + nc) * dist[keep * n + c] + (nb + nc) * dist[gone * n + c] - nc * d_ab) / (na + nb + nc);
            dist[keep * n + c] = d;
            dist[c * n + keep] = d;
        }
        size[keep] += size[gone];
        alive.retain(|&c| c != gone);
        merges.push(Merge {
            left: keep,
            right: gone,
            height: d_ab,
            size: size[keep],
        });
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    Dendrogram { n_points: n, merges }
}

/// Labels after undoing the last `k − 1` merges, numbered `0..k` in order
/// of first appearance.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n_points;
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &dendrogram.merges[..n - k] {
        let (ra, rb) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let r = find(&mut parent, i);
        if ids[r] == usize::MAX {
            ids[r] = next;
            next += 1;
        }
        labels.push(ids[r]);
    }
    Ok(labels)
}
