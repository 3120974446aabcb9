//! Comparison clusterers: single-linkage agglomeration and PAM-style
//! k-medoids on the correlation distance `sqrt(2(1 - rho))`.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::acc::Partition;
use crate::corrcore::{CorrelationMatrix, DissimilarityMatrix};
use crate::error::{Error, Result};

/// Entrywise `sqrt(2(1 - rho))`; 0 on the diagonal, 2 at perfect
/// anti-correlation.
pub fn corr_distance(corr: &CorrelationMatrix) -> DissimilarityMatrix {
    let d = corr.dim();
    let vals = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            0.0
        } else {
            (2.0 * (1.0 - corr.values()[[i, j]])).max(0.0).sqrt()
        }
    });
    DissimilarityMatrix::new(corr.tickers().to_vec(), vals).expect("valid by construction")
}

/// Runs the merge loop down to `target` clusters.
///
/// Clusters are keyed by their smallest member; ties on merge distance take
/// the lexicographically smallest key pair. Inter-cluster distance is the
/// closest cross pair, maintained with the min-update after each merge.
/// Returns the member lists and the distance at which each merge happened.
fn agglomerate(values: &Array2<f64>, target: usize) -> (Vec<Vec<usize>>, Vec<f64>) {
    let d = values.nrows();
    let mut dist = values.clone();
    let mut members: Vec<Option<Vec<usize>>> = (0..d).map(|i| Some(vec![i])).collect();
    let mut count = d;
    let mut merge_distances = Vec::new();
    while count > target {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..d {
            if members[i].is_none() {
                continue;
            }
            for j in (i + 1)..d {
                if members[j].is_none() {
                    continue;
                }
                let v = dist[[i, j]];
                if best.is_none_or(|(bv, _, _)| v < bv) {
                    best = Some((v, i, j));
                }
            }
        }
        let (v, i, j) = best.expect("more than `target` clusters remain");
        merge_distances.push(v);
        let absorbed = members[j].take().expect("cluster j active");
        members[i].as_mut().expect("cluster i active").extend(absorbed);
        for l in 0..d {
            if l != i && members[l].is_some() {
                let m = dist[[i, l]].min(dist[[j, l]]);
                dist[[i, l]] = m;
                dist[[l, i]] = m;
            }
        }
        count -= 1;
    }
    let mut clusters: Vec<Vec<usize>> = members.into_iter().flatten().collect();
    for c in &mut clusters {
        c.sort_unstable();
    }
    (clusters, merge_distances)
}

/// Single-linkage hierarchical clustering stopped at `k` clusters.
pub fn single_linkage(dissim: &DissimilarityMatrix, k: usize) -> Result<Partition> {
    let d = dissim.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!(
            "cannot form {k} clusters from {d} assets"
        )));
    }
    let (clusters, _) = agglomerate(dissim.values(), k);
    Partition::from_clusters(&clusters, d)
}

/// Merge distances of the full dendrogram (down to one cluster), in merge
/// order. On a connected graph these are exactly the minimum-spanning-tree
/// edge weights in ascending order.
pub fn single_linkage_merge_distances(dissim: &DissimilarityMatrix) -> Vec<f64> {
    agglomerate(dissim.values(), 1).1
}

/// Medoid set and the summed distance of non-medoids to their nearest medoid.
#[derive(Debug, Clone)]
pub struct MedoidState {
    pub medoids: Vec<usize>,
    pub cost: f64,
}

/// Diagnostics from a k-medoids run.
#[derive(Debug, Clone)]
pub struct KmedoidsRun {
    pub partition: Partition,
    pub state: MedoidState,
    pub init_cost: f64,
    /// Objective after each accepted swap; strictly decreasing.
    pub swap_costs: Vec<f64>,
}

fn medoid_cost(values: &Array2<f64>, medoids: &[usize]) -> f64 {
    let d = values.nrows();
    let mut cost = 0.0;
    for i in 0..d {
        if medoids.contains(&i) {
            continue;
        }
        cost += medoids
            .iter()
            .map(|&m| values[[i, m]])
            .fold(f64::INFINITY, f64::min);
    }
    cost
}

/// PAM-style k-medoids: seeded random first medoid, farthest-point
/// completion, then greedy best-improvement swaps until a local optimum.
pub fn kmedoids_run(dissim: &DissimilarityMatrix, k: usize, seed: u64) -> Result<KmedoidsRun> {
    let d = dissim.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!(
            "cannot pick {k} medoids from {d} assets"
        )));
    }
    let values = dissim.values();

    let mut medoids: Vec<usize> = if k == 1 {
        // degenerate case solved exactly: total-distance argmin, ties to the
        // smaller index
        let best = (0..d)
            .min_by(|&a, &b| {
                let ca: f64 = (0..d).map(|i| values[[i, a]]).sum();
                let cb: f64 = (0..d).map(|i| values[[i, b]]).sum();
                ca.partial_cmp(&cb).expect("finite distances")
            })
            .expect("d >= 1");
        vec![best]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut meds = vec![rng.gen_range(0..d)];
        while meds.len() < k {
            let mut far = None;
            let mut far_dist = f64::NEG_INFINITY;
            for i in 0..d {
                if meds.contains(&i) {
                    continue;
                }
                let near = meds
                    .iter()
                    .map(|&m| values[[i, m]])
                    .fold(f64::INFINITY, f64::min);
                if near > far_dist {
                    far_dist = near;
                    far = Some(i);
                }
            }
            meds.push(far.expect("non-medoid exists while len < k"));
        }
        meds
    };
    medoids.sort_unstable();
    let init_cost = medoid_cost(values, &medoids);
    let mut cost = init_cost;
    let mut swap_costs = Vec::new();

    loop {
        let mut best_swap: Option<(f64, usize, usize)> = None;
        for (mi, &h) in medoids.iter().enumerate() {
            for i in 0..d {
                if medoids.contains(&i) {
                    continue;
                }
                let mut candidate = medoids.clone();
                candidate[mi] = i;
                let c = medoid_cost(values, &candidate);
                if c < cost && best_swap.is_none_or(|(bc, _, _)| c < bc) {
                    best_swap = Some((c, h, i));
                }
            }
        }
        match best_swap {
            Some((c, h, i)) => {
                let pos = medoids.iter().position(|&m| m == h).expect("medoid present");
                medoids[pos] = i;
                medoids.sort_unstable();
                cost = c;
                swap_costs.push(c);
            }
            None => break,
        }
    }

    // assign to the nearest medoid, ties to the smaller medoid index
    let mut clusters: Vec<Vec<usize>> = medoids.iter().map(|&m| vec![m]).collect();
    for i in 0..d {
        if medoids.contains(&i) {
            continue;
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (ci, &m) in medoids.iter().enumerate() {
            if values[[i, m]] < best_dist {
                best_dist = values[[i, m]];
                best = ci;
            }
        }
        clusters[best].push(i);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    let partition = Partition::from_clusters(&clusters, d)?;
    Ok(KmedoidsRun {
        partition,
        state: MedoidState { medoids, cost },
        init_cost,
        swap_costs,
    })
}

/// k-medoids returning just the partition.
pub fn kmedoids(dissim: &DissimilarityMatrix, k: usize, seed: u64) -> Result<Partition> {
    Ok(kmedoids_run(dissim, k, seed)?.partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("A{i:03}")).collect()
    }

    #[test]
    fn corr_distance_values() {
        let corr = CorrelationMatrix::new(
            names(3),
            array![[1.0, 1.0, 0.5], [1.0, 1.0, -1.0], [0.5, -1.0, 1.0]],
        )
        .unwrap();
        let d = corr_distance(&corr);
        assert_eq!(d.values()[[0, 1]], 0.0);
        assert_abs_diff_eq!(d.values()[[0, 2]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.values()[[1, 2]], 2.0, epsilon = 1e-15);
        assert_eq!(d.values()[[0, 0]], 0.0);
    }

    fn chain() -> DissimilarityMatrix {
        DissimilarityMatrix::new(
            names(3),
            array![[0.0, 0.1, 0.9], [0.1, 0.0, 0.2], [0.9, 0.2, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn single_linkage_edges() {
        let d = chain();
        assert_eq!(single_linkage(&d, 3).unwrap().k(), 3);
        assert_eq!(single_linkage(&d, 1).unwrap().k(), 1);
        let p = single_linkage(&d, 2).unwrap();
        assert_eq!(p.clusters(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn single_linkage_merges_match_kruskal() {
        // Kruskal oracle: sort all edges, accept those joining distinct roots
        fn mst_edges(values: &Array2<f64>) -> Vec<f64> {
            let d = values.nrows();
            let mut edges: Vec<(f64, usize, usize)> = Vec::new();
            for i in 0..d {
                for j in (i + 1)..d {
                    edges.push((values[[i, j]], i, j));
                }
            }
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut parent: Vec<usize> = (0..d).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            let mut out = Vec::new();
            for (w, i, j) in edges {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                    out.push(w);
                }
            }
            out
        }

        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let d = rng.gen_range(3..12);
            let mut vals = Array2::zeros((d, d));
            for i in 0..d {
                for j in 0..i {
                    let v: f64 = rng.gen_range(0.01..1.0);
                    vals[[i, j]] = v;
                    vals[[j, i]] = v;
                }
            }
            let dm = DissimilarityMatrix::new(names(d), vals.clone()).unwrap();
            let merges = single_linkage_merge_distances(&dm);
            assert_eq!(merges, mst_edges(&vals));
        }
    }

    fn two_groups() -> DissimilarityMatrix {
        // assets 0..3 and 3..6 with tight within-distance, far across
        let d = 6;
        let vals = Array2::from_shape_fn((d, d), |(i, j)| {
            if i == j {
                0.0
            } else if (i < 3) == (j < 3) {
                0.1
            } else {
                1.0
            }
        });
        DissimilarityMatrix::new(names(d), vals).unwrap()
    }

    #[test]
    fn kmedoids_trivial_sizes() {
        let d = two_groups();
        let run = kmedoids_run(&d, 6, 0).unwrap();
        assert_eq!(run.partition.k(), 6);
        assert_eq!(run.state.cost, 0.0);

        // k = 1 is the exhaustive argmin; all columns tie here so index 0 wins
        let run = kmedoids_run(&d, 1, 123).unwrap();
        assert_eq!(run.state.medoids, vec![0]);
        // verify against an explicit scan
        let values = d.values();
        let scan = (0..6)
            .map(|m| (0..6).map(|i| values[[i, m]]).sum::<f64>())
            .collect::<Vec<_>>();
        let best = scan
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(run.state.medoids[0], best);
    }

    #[test]
    fn kmedoids_recovers_two_groups_for_all_seeds() {
        let d = two_groups();
        let want = Partition::from_clusters(&[vec![0, 1, 2], vec![3, 4, 5]], 6).unwrap();
        for seed in 0..10 {
            let p = kmedoids(&d, 2, seed).unwrap();
            assert!(p.same_clustering(&want), "seed {seed}");
        }
    }

    /// All k-subsets of 0..d.
    fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..d {
                cur.push(i);
                rec(i + 1, d, k, cur, out);
                cur.pop();
            }
        }
        rec(0, d, k, &mut cur, &mut out);
        out
    }

    #[test]
    fn kmedoids_two_group_optimum_matches_enumeration() {
        let d = two_groups();
        let run = kmedoids_run(&d, 2, 4).unwrap();
        let best_cost = subsets(6, 2)
            .into_iter()
            .map(|m| medoid_cost(d.values(), &m))
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(run.state.cost, best_cost, epsilon = 1e-12);
    }

    #[test]
    fn kmedoids_cost_is_monotone_and_gap_nonnegative() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let d = rng.gen_range(4..9);
            let k = rng.gen_range(2..d.min(4));
            let mut vals = Array2::zeros((d, d));
            for i in 0..d {
                for j in 0..i {
                    let v: f64 = rng.gen_range(0.05..1.0);
                    vals[[i, j]] = v;
                    vals[[j, i]] = v;
                }
            }
            let dm = DissimilarityMatrix::new(names(d), vals).unwrap();
            let run = kmedoids_run(&dm, k, trial).unwrap();
            assert!(run.state.cost <= run.init_cost + 1e-12);
            let mut prev = run.init_cost;
            for &c in &run.swap_costs {
                assert!(c < prev, "swap did not strictly decrease cost");
                prev = c;
            }
            // PAM is a local search: never better than the global optimum
            let global = subsets(d, k)
                .into_iter()
                .map(|m| medoid_cost(dm.values(), &m))
                .fold(f64::INFINITY, f64::min);
            assert!(run.state.cost >= global - 1e-12);
        }
    }

    #[test]
    fn kmedoids_is_deterministic_per_seed() {
        let d = two_groups();
        let a = kmedoids(&d, 3, 7).unwrap();
        let b = kmedoids(&d, 3, 7).unwrap();
        assert_eq!(a.labels(), b.labels());
    }
}
