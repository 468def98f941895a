//! Weighted K-means (Lloyd iterations with weighted k-means++ seeding).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index of every input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// `sum_i w_i * ||x_i - c_{a(i)}||^2`
    pub inertia: f64,
    /// Inertia after seeding and after every Lloyd iteration.
    pub history: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Members of each cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            m[c].push(i);
        }
        m
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// K-means settings. `restarts` independent seedings are run and the lowest
/// inertia wins (ties: lowest restart index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl KMeans {
    pub fn new(k: usize) -> Self {
        Self { k, max_iter: 100, tol: 1e-10, restarts: 1 }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    pub fn fit<P: AsRef<[f64]>>(&self, points: &[P], weights: &[f64], rng: &mut Rng) -> Result<ClusterResult> {
        if self.restarts <= 1 {
            return weighted_kmeans(points, weights, self.k, rng, self.max_iter, self.tol);
        }
        let root = Rng::new(rng.seed() ^ rng.below(usize::MAX) as u64);
        let mut best: Option<ClusterResult> = None;
        for r in 0..self.restarts {
            let mut sub = root.derive(r as u64);
            let res = weighted_kmeans(points, weights, self.k, &mut sub, self.max_iter, self.tol)?;
            if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
                best = Some(res);
            }
        }
        Ok(best.expect("at least one restart"))
    }
}

fn validate<P: AsRef<[f64]>>(points: &[P], weights: &[f64], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::TooManyClusters { k, n: points.len() });
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidWeight(format!("k-means weights must be positive, got {w}")));
    }
    let dim = points[0].as_ref().len();
    for p in points {
        if p.as_ref().len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.as_ref().len() });
        }
    }
    Ok(dim)
}

/// Weighted k-means++: first centre with probability proportional to `w_i`,
/// subsequent ones proportional to `w_i * D(x_i)^2`.
fn seed_plus_plus<P: AsRef<[f64]>>(points: &[P], weights: &[f64], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.weighted_index(weights).expect("positive weights");
    chosen[first] = true;
    let mut centroids = vec![points[first].as_ref().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> =
            (0..n).map(|i| if chosen[i] { 0.0 } else { weights[i] * d2[i] }).collect();
        let next = rng.weighted_index(&scores).unwrap_or_else(|| {
            // Every remaining point coincides with a centre.
            let rest: Vec<f64> = (0..n).map(|i| if chosen[i] { 0.0 } else { weights[i] }).collect();
            rng.weighted_index(&rest).expect("k <= n leaves an unchosen point")
        });
        chosen[next] = true;
        let c = points[next].as_ref().to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign<P: AsRef<[f64]>>(points: &[P], weights: &[f64], centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for ((p, w), a) in points.iter().zip(weights).zip(out.iter_mut()) {
        let (j, d) = nearest(p.as_ref(), centroids);
        *a = j;
        inertia += w * d;
    }
    inertia
}

/// Moves each empty cluster's centre onto the point with the largest weighted
/// distance to its own centre (taken from clusters with more than one member).
fn reseed_empty<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[f64],
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let cost = weights[i] * sq_dist(p.as_ref(), &centroids[assignments[i]]);
            if best.is_none_or(|(_, b)| cost > b) {
                best = Some((i, cost));
            }
        }
        let Some((i, _)) = best else { return };
        centroids[empty] = points[i].as_ref().to_vec();
        assignments[i] = empty;
    }
}

fn update_centroids<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[f64],
    assignments: &[usize],
    centroids: &mut [Vec<f64>],
) {
    let dim = centroids[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0; k];
    for ((p, &w), &a) in points.iter().zip(weights).zip(assignments) {
        mass[a] += w;
        for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
            *s += w * x;
        }
    }
    for ((c, s), m) in centroids.iter_mut().zip(sums).zip(mass) {
        if m > 0.0 {
            *c = s.into_iter().map(|v| v / m).collect();
        }
    }
}

/// One weighted k-means run. Stops when the inertia improvement drops below
/// `tol`, assignments stop changing, or after `max_iter` Lloyd iterations.
pub fn weighted_kmeans<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[f64],
    k: usize,
    rng: &mut Rng,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult> {
    validate(points, weights, k)?;
    let mut centroids = seed_plus_plus(points, weights, k, rng);
    let mut assignments = vec![0usize; points.len()];
    let mut inertia = assign(points, weights, &centroids, &mut assignments);
    let mut history = vec![inertia];
    for _ in 0..max_iter {
        reseed_empty(points, weights, &mut centroids, &mut assignments);
        update_centroids(points, weights, &assignments, &mut centroids);
        let before = assignments.clone();
        let next = assign(points, weights, &centroids, &mut assignments);
        history.push(next);
        let improvement = inertia - next;
        inertia = next;
        if before == assignments || improvement < tol {
            break;
        }
    }
    Ok(ClusterResult { assignments, centroids, inertia, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// All 2-partitions of a small 1-D set; returns the best split's weighted SSE.
    fn brute_force_two_clusters(xs: &[f64], ws: &[f64]) -> (f64, Vec<usize>) {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [0, 1] {
                let idx: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1) as usize == side).collect();
                let m: f64 = idx.iter().map(|&i| ws[i]).sum();
                let c: f64 = idx.iter().map(|&i| ws[i] * xs[i]).sum::<f64>() / m;
                cost += idx.iter().map(|&i| ws[i] * (xs[i] - c).powi(2)).sum::<f64>();
            }
            if cost < best.0 {
                best = (cost, (0..n).map(|i| ((mask >> i) & 1) as usize).collect());
            }
        }
        best
    }

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn four_points_two_clusters_matches_enumeration() {
        let xs = [0.0, 0.1, 0.5, 10.0];
        let ws = [1.0; 4];
        let (best_cost, _) = brute_force_two_clusters(&xs, &ws);
        let res = weighted_kmeans(&pts(&xs), &ws, 2, &mut Rng::new(3), 100, 1e-12).unwrap();
        assert_relative_eq!(res.inertia, best_cost, epsilon = 1e-12);
        let a = &res.assignments;
        assert!(a[0] == a[1] && a[1] == a[2] && a[3] != a[0]);
        let mut c: Vec<f64> = res.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_relative_eq!(c[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(c[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let xs = [3.0, -1.0, 7.5, 0.25, 2.0];
        let res = weighted_kmeans(&pts(&xs), &[1.0, 2.0, 0.5, 1.0, 3.0], 5, &mut Rng::new(1), 50, 0.0).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut seen = res.assignments.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 5);
    }

    /// Textbook unweighted k-means++ / Lloyd, written independently.
    fn plain_kmeans(xs: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<usize> {
        let n = xs.len();
        let first = rng.weighted_index(&vec![1.0; n]).unwrap();
        let mut cs = vec![xs[first].clone()];
        let mut taken = vec![first];
        while cs.len() < k {
            let d: Vec<f64> = (0..n)
                .map(|i| if taken.contains(&i) { 0.0 } else { cs.iter().map(|c| sq_dist(&xs[i], c)).fold(f64::INFINITY, f64::min) })
                .collect();
            let i = rng.weighted_index(&d).unwrap();
            taken.push(i);
            cs.push(xs[i].clone());
        }
        let mut labels = vec![usize::MAX; n];
        loop {
            let next: Vec<usize> = xs.iter().map(|x| nearest(x, &cs).0).collect();
            if next == labels {
                return labels;
            }
            labels = next;
            for (j, c) in cs.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = xs.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(x, _)| x).collect();
                if !members.is_empty() {
                    for (d, v) in c.iter_mut().enumerate() {
                        *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                    }
                }
            }
        }
    }

    #[test]
    fn unit_weights_reduce_to_plain_kmeans() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 13) as f64 + 0.01 * i as f64, (i * 3 % 5) as f64]).collect();
        let ones = vec![1.0; xs.len()];
        for seed in 0..10 {
            let a = weighted_kmeans(&xs, &ones, 3, &mut Rng::new(seed), 1000, 0.0).unwrap();
            let b = plain_kmeans(&xs, 3, &mut Rng::new(seed));
            assert_eq!(a.assignments, b, "seed {seed}");
        }
        // Uniformly scaled weights leave seeding and assignments unchanged.
        let a = weighted_kmeans(&xs, &ones, 3, &mut Rng::new(11), 100, 0.0).unwrap();
        let b = weighted_kmeans(&xs, &vec![2.5; xs.len()], 3, &mut Rng::new(11), 100, 0.0).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_relative_eq!(a.inertia * 2.5, b.inertia, max_relative = 1e-12);
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = Rng::new(99);
        for trial in 0..50 {
            let n = 20 + trial % 17;
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal() * 3.0, rng.normal()]).collect();
            let ws: Vec<f64> = (0..n).map(|_| 0.1 + rng.uniform() * 4.0).collect();
            let res = weighted_kmeans(&xs, &ws, 1 + trial % 6, &mut rng.derive(trial as u64), 200, 0.0).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "trial {trial}: {:?}", res.history);
            }
            for (x, &a) in xs.iter().zip(&res.assignments) {
                let (j, d) = nearest(x, &res.centroids);
                assert!(j == a || d == sq_dist(x, &res.centroids[a]));
            }
        }
    }

    #[test]
    fn errors() {
        let xs = pts(&[1.0, 2.0]);
        assert!(matches!(
            weighted_kmeans(&xs, &[1.0, 1.0], 3, &mut Rng::new(0), 10, 0.0),
            Err(Error::TooManyClusters { k: 3, n: 2 })
        ));
        assert!(matches!(
            weighted_kmeans(&xs, &[1.0, 0.0], 1, &mut Rng::new(0), 10, 0.0),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn heavy_point_pulls_centroid() {
        let xs = pts(&[0.0, 1.0]);
        let res = weighted_kmeans(&xs, &[3.0, 1.0], 1, &mut Rng::new(0), 10, 0.0).unwrap();
        assert_relative_eq!(res.centroids[0][0], 0.25);
        assert_relative_eq!(res.inertia, 3.0 * 0.0625 + 0.5625);
    }
}
