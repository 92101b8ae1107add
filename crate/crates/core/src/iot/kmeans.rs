use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Cluster, IotError, Point, SensorNode};

pub const MAX_ITERATIONS: usize = 100;

/// ⌈n/10⌉, at least 1.
pub fn default_k(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

fn nearest(p: Point, centers: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = p.dist2(*c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Farthest-point seeding: the first center is a seed-chosen node, each next
/// one is the node farthest from every chosen center (lowest index on ties).
fn seed_centers(points: &[Point], k: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut chosen = vec![false; points.len()];
    chosen[first] = true;
    let mut centers = vec![points[first]];
    let mut min_d: Vec<f64> = points.iter().map(|p| p.dist2(points[first])).collect();
    while centers.len() < k {
        let (idx, _) = min_d
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .fold((usize::MAX, -1.0), |acc, (i, d)| if *d > acc.1 { (i, *d) } else { acc });
        chosen[idx] = true;
        centers.push(points[idx]);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(p.dist2(points[idx]));
        }
    }
    centers
}

fn mean(points: &[Point], idx: impl Iterator<Item = usize>) -> Option<Point> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for i in idx {
        sx += points[i].x;
        sy += points[i].y;
        n += 1;
    }
    (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
}

/// Deterministic k-means over node positions.
pub fn partition_clusters(nodes: &[SensorNode], k: usize, seed: u64) -> Result<Vec<Cluster>, IotError> {
    if k == 0 || k > nodes.len() {
        return Err(IotError::InvalidK { k, n: nodes.len() });
    }
    let points: Vec<Point> = nodes.iter().map(|n| n.position).collect();
    let mut centers = seed_centers(&points, k, seed);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(*p, &centers)).collect();
    for _ in 0..MAX_ITERATIONS {
        fill_empty(&points, &centers, &mut assign, k);
        for (c, center) in centers.iter_mut().enumerate() {
            if let Some(m) = mean(&points, (0..points.len()).filter(|i| assign[*i] == c)) {
                *center = m;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(*p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    fill_empty(&points, &centers, &mut assign, k);
    Ok((0..k)
        .map(|c| {
            let idx: Vec<usize> = (0..points.len()).filter(|i| assign[*i] == c).collect();
            Cluster {
                id: c as u32,
                members: idx.iter().map(|i| nodes[*i].id).collect(),
                head: None,
                centroid: mean(&points, idx.iter().copied()).expect("non-empty after fill"),
            }
        })
        .collect())
}

/// Gives each empty cluster the point lying farthest from its own center,
/// taken from a cluster that can spare one.
fn fill_empty(points: &[Point], centers: &[Point], assign: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for a in assign.iter() {
            sizes[*a] += 1;
        }
        let Some(empty) = sizes.iter().position(|s| *s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|i| sizes[assign[*i]] > 1)
            .max_by(|a, b| {
                let da = points[*a].dist2(centers[assign[*a]]);
                let db = points[*b].dist2(centers[assign[*b]]);
                da.total_cmp(&db).then(b.cmp(a))
            })
            .expect("k <= n leaves a donor");
        assign[donor] = empty;
    }
}

/// Within-cluster sum of squared distances to each cluster's mean.
pub fn wcss(nodes: &[SensorNode], assign: &[usize], k: usize) -> f64 {
    let points: Vec<Point> = nodes.iter().map(|n| n.position).collect();
    (0..k)
        .filter_map(|c| {
            let idx: Vec<usize> = (0..points.len()).filter(|i| assign[*i] == c).collect();
            let m = mean(&points, idx.iter().copied())?;
            Some(idx.iter().map(|i| points[*i].dist2(m)).sum::<f64>())
        })
        .sum()
}
