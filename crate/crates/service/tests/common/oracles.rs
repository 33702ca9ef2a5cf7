//! Reference computations written independently of the engine.

/// Pearson correlation from raw sums, `None` when either side is constant.
pub fn pearson_sums(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Accumulated return through each day, each prefix multiplied out afresh.
pub fn cumulative_direct(daily: &[f64]) -> Vec<f64> {
    (0..daily.len()).map(|i| daily[..=i].iter().map(|r| 1.0 + r).product::<f64>() - 1.0).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Share of points whose nearest class centroid is their own class.
pub fn nearest_centroid_purity(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let d = points[0].len();
    let mut centroids = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (c, v) in centroids[l].iter_mut().zip(p) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    let hits = points
        .iter()
        .zip(labels)
        .filter(|(p, &l)| {
            let best = (0..k)
                .filter(|&c| counts[c] > 0)
                .min_by(|&a, &b| sq_dist(p, &centroids[a]).total_cmp(&sq_dist(p, &centroids[b])))
                .unwrap();
            best == l
        })
        .count();
    hits as f64 / points.len() as f64
}

/// Mean silhouette under Euclidean distance; singleton classes score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(&points[i], &points[j]).sqrt();
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn oracle_sanity() {
    let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
    assert_eq!(nearest_centroid_purity(&pts, &[0, 0, 1, 1]), 1.0);
    assert!(silhouette(&pts, &[0, 0, 1, 1]) > 0.95);
    assert!(silhouette(&pts, &[0, 1, 0, 1]) < 0.0);
    assert!((pearson_sums(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap() - 0.9979487157886733).abs() < 1e-12);
    assert_eq!(cumulative_direct(&[0.1, 0.1]), vec![0.10000000000000009, 0.21000000000000019]);
}
