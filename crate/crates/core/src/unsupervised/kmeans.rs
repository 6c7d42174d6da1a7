use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

const MAX_LLOYD_ITERS: usize = 10_000;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centroids(data: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![data[first].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &data[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2
            .iter()
            .zip(&chosen)
            .filter(|(_, &c)| !c)
            .map(|(d, _)| d)
            .sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, (&d, &c)) in d2.iter().zip(&chosen).enumerate() {
                if c || d == 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(data[pick].clone());
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &data[pick]));
        }
    }
    centroids
}

/// Lloyd iterations from k-means++ seeds until the assignment stops
/// changing. Empty clusters keep their previous centroid.
pub fn kmeans_init(data: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k ≥ 1"));
    }
    if k > data.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            data.len()
        )));
    }
    let dims = data[0].len();
    if data.iter().any(|x| x.len() != dims) {
        return Err(Error::invalid("ragged data"));
    }
    let mut rng = rng::stream(seed, 0);
    let mut centroids = seed_centroids(data, k, &mut rng);
    let mut labels: Vec<usize> = data.iter().map(|x| nearest(x, &centroids)).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        let next: Vec<usize> = data.iter().map(|x| nearest(x, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equal_to_points_returns_the_points() {
        let data = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![-3.0, 2.0]];
        let mut c = kmeans_init(&data, 3, 11).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut expect = data.clone();
        expect.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, expect);
    }

    #[test]
    fn separated_pairs_land_on_midpoints() {
        let data = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![100.0, 0.0], vec![100.0, 1.0]];
        for seed in 0..10 {
            let mut c = kmeans_init(&data, 2, seed).unwrap();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(c, vec![vec![0.0, 0.5], vec![100.0, 0.5]]);
        }
    }

    #[test]
    fn same_seed_same_centroids() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        assert_eq!(kmeans_init(&data, 4, 5).unwrap(), kmeans_init(&data, 4, 5).unwrap());
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        assert!(kmeans_init(&[vec![1.0]], 2, 0).is_err());
    }
}
