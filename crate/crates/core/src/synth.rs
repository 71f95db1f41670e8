//! Deterministic synthetic dataset generators for tests, benchmarks and the
//! bundled demo data. Everything is seeded; identical calls produce
//! identical datasets.

use crate::dataset::{Dataset, SparseVector};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

fn dense_point<F: Scalar>(coords: &[f64]) -> SparseVector<F> {
    let indices: Vec<u32> = (1..=coords.len() as u32).collect();
    let values: Vec<F> = coords.iter().map(|&v| F::cast(v)).collect();
    SparseVector::new(indices, values).expect("ascending indices by construction")
}

/// `n` points in `dim` dimensions drawn from Gaussian blobs at the given
/// centers (points are assigned to centers contiguously, proportionally to
/// the weights). Labels are random ±1 unless a center count is paired with
/// a label through [`labeled_blobs`].
pub fn gaussian_blobs<F: Scalar>(
    n: usize,
    dim: usize,
    centers: &[(Vec<f64>, usize)],
    std: f64,
    seed: u64,
) -> Dataset<F> {
    let total_w: usize = centers.iter().map(|(_, w)| *w).sum();
    let mut rng = SplitMix64::substream(seed, 0xb10b);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let share = i * total_w / n;
        let mut acc = 0usize;
        let mut center = &centers[0].0;
        for (c, w) in centers {
            acc += *w;
            if share < acc {
                center = c;
                break;
            }
        }
        let coords: Vec<f64> = (0..dim)
            .map(|k| center.get(k).copied().unwrap_or(0.0) + std * rng.next_gaussian())
            .collect();
        points.push(dense_point(&coords));
        labels.push(if rng.next_f64() < 0.5 { 1 } else { -1 });
    }
    Dataset::new(points, labels).expect("valid synthetic dataset")
}

/// Two Gaussian blobs with class labels tied to the blob.
pub fn labeled_blobs<F: Scalar>(
    n: usize,
    dim: usize,
    center_a: &[f64],
    center_b: &[f64],
    std: f64,
    seed: u64,
) -> Dataset<F> {
    let mut rng = SplitMix64::substream(seed, 0x1ab5);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (center, label) = if i % 2 == 0 {
            (center_a, 1)
        } else {
            (center_b, -1)
        };
        let coords: Vec<f64> = (0..dim)
            .map(|k| center.get(k).copied().unwrap_or(0.0) + std * rng.next_gaussian())
            .collect();
        points.push(dense_point(&coords));
        labels.push(label);
    }
    Dataset::new(points, labels).expect("valid synthetic dataset")
}

/// Stand-in for the 270-point heart disease benchmark: 13 features scaled to
/// `[-1, 1]`, a mix of continuous and discrete columns, 120 positive labels.
/// The last 30 records are repeat measurements of earlier patients
/// (identical discrete codes, continuous columns re-read with tiny noise),
/// a common artifact of clinical datasets.
pub fn heart_like<F: Scalar>(seed: u64) -> Dataset<F> {
    let n_base = 240;
    let n_repeat = 30;
    let mut rng = SplitMix64::substream(seed, 0xca4d);
    let mut raw: Vec<[f64; 13]> = Vec::with_capacity(n_base + n_repeat);
    let mut labels = Vec::with_capacity(n_base + n_repeat);
    for i in 0..n_base {
        let mut coords = [0.0f64; 13];
        for (j, c) in coords.iter_mut().enumerate() {
            *c = match j {
                // binary columns
                1 | 5 | 8 => {
                    if rng.next_f64() < 0.5 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                // three-level columns
                2 | 6 | 10 | 12 => [-1.0, 0.0, 1.0][rng.next_below(3)],
                // continuous columns
                _ => 2.0 * rng.next_f64() - 1.0,
            };
        }
        raw.push(coords);
        labels.push(if i < 90 { 1 } else { -1 });
    }
    for src in 0..n_repeat {
        let mut coords = raw[src];
        for (j, c) in coords.iter_mut().enumerate() {
            if !matches!(j, 1 | 2 | 5 | 6 | 8 | 10 | 12) {
                *c = (*c + 5e-4 * rng.next_gaussian()).clamp(-1.0, 1.0);
            }
        }
        raw.push(coords);
        labels.push(labels[src]);
    }
    let points = raw.iter().map(|c| dense_point(c)).collect();
    Dataset::new(points, labels).expect("valid synthetic dataset")
}

/// Stand-in for a dense low-dimensional classification benchmark in the
/// spirit of ijcnn1: 22 features, a 2-D latent manifold embedded
/// isometrically, ~10% positive class (a latent disc, slightly offset along
/// a third embedding direction), 1% label noise.
pub fn ijcnn_like<F: Scalar>(n: usize, seed: u64) -> Dataset<F> {
    const DIM: usize = 22;
    const DISC: (f64, f64, f64) = (0.45, 0.45, 0.18);
    const CLASS_OFFSET: f64 = 0.12;
    // fixed embedding basis: three orthonormal directions in R^22
    let mut brng = SplitMix64::substream(0xe3bed, 1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut w: Vec<f64> = (0..DIM).map(|_| brng.next_gaussian()).collect();
        for prev in &basis {
            let d: f64 = prev.iter().zip(&w).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(prev).for_each(|(v, a)| *v -= d * a);
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        basis.push(w);
    }
    let mut rng = SplitMix64::substream(seed, 0x13c9);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u1 = rng.next_f64();
        let u2 = rng.next_f64();
        let (cx, cy, r) = DISC;
        let inside = (u1 - cx).powi(2) + (u2 - cy).powi(2) <= r * r;
        let mut label = if inside { 1 } else { -1 };
        if rng.next_f64() < 0.01 {
            label = -label;
        }
        let u3 = if inside { CLASS_OFFSET } else { 0.0 };
        let coords: Vec<f64> = (0..DIM)
            .map(|k| {
                u1 * basis[0][k] + u2 * basis[1][k] + u3 * basis[2][k]
                    + 0.005 * rng.next_gaussian()
            })
            .collect();
        points.push(dense_point(&coords));
        labels.push(label);
    }
    Dataset::new(points, labels).expect("valid synthetic dataset")
}
