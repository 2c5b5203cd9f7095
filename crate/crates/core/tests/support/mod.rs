//! Reference implementations used as test oracles. They share no code with the
//! library beyond plain data types.

#![allow(dead_code)]

use facesub::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle free of distribution crates
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Classical Jacobi: always annihilates the largest off-diagonal entry.
/// Returns eigenvalues (descending) and eigenvectors as row-major columns.
pub fn jacobi_oracle(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..100 * n * n + 100 {
        let (mut p, mut q, mut big) = (0, 0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                if m[i][j].abs() > big {
                    big = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big <= 1e-15 * scale {
            break;
        }
        let phi = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
        let (c, s) = (phi.cos(), phi.sin());
        for k in 0..n {
            let (mkp, mkq) = (m[k][p], m[k][q]);
            m[k][p] = c * mkp - s * mkq;
            m[k][q] = s * mkp + c * mkq;
        }
        for k in 0..n {
            let (mpk, mqk) = (m[p][k], m[q][k]);
            m[p][k] = c * mpk - s * mqk;
            m[q][k] = s * mpk + c * mqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Projector `Σ_j u_j u_jᵀ` of the given vectors.
pub fn projector(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vectors.first().map_or(0, |v| v.len());
    let mut p = vec![vec![0.0; n]; n];
    for u in vectors {
        for i in 0..n {
            for j in 0..n {
                p[i][j] += u[i] * u[j];
            }
        }
    }
    p
}

pub fn frobenius_diff(a: &[Vec<f64>], b: &Matrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            acc += (x - b[(i, j)]).powi(2);
        }
    }
    acc.sqrt()
}

/// Top-`d` eigenvectors of `Σ w_i y_i y_iᵀ`, built directly from the samples.
pub fn weighted_subspace_oracle(samples: &[Vec<f64>], weights: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples[0].len();
    let mut s = vec![vec![0.0; n]; n];
    for (y, &w) in samples.iter().zip(weights) {
        for i in 0..n {
            for j in 0..n {
                s[i][j] += w * y[i] * y[j];
            }
        }
    }
    let (vals, vecs) = jacobi_oracle(&s);
    (vals[..d].to_vec(), vecs[..d].to_vec())
}

/// Quality weights straight from the definition: softmax of `q·min(½·logit, t)`.
pub fn quality_weights_oracle(scores: &[f64], t: f64, q: f64) -> Vec<f64> {
    let e: Vec<f64> = scores
        .iter()
        .map(|&d| (q * (0.5 * (d / (1.0 - d)).ln()).min(t)).exp())
        .collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Minimum-cost assignment by trying every injection of rows into columns.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, rows_left: usize, acc: f64, best: &mut f64) {
        if rows_left == 0 || row == cost.len() {
            *best = best.min(acc);
            return;
        }
        let cols = used.len();
        let need = cost.len() - row;
        let free = used.iter().filter(|u| !**u).count();
        // a row may stay unassigned only when rows outnumber columns
        if need > free {
            go(cost, row + 1, used, rows_left, acc, best);
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                go(cost, row + 1, used, rows_left - 1, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cols], rows.min(cols), 0.0, &mut best);
    best
}

/// Squared-hinge SVM objective evaluated from the definition.
pub fn svm_objective_oracle(w: &[f64], xs: &[Vec<f64>], ys: &[f64], cs: &[f64]) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .zip(cs)
        .map(|((x, &y), &c)| {
            let m = 1.0 - y * x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            c * m.max(0.0).powi(2)
        })
        .sum();
    reg + loss
}

/// Long-run fixed-step gradient descent on the squared-hinge objective.
pub fn svm_gd_oracle(xs: &[Vec<f64>], ys: &[f64], cs: &[f64], iterations: usize) -> Vec<f64> {
    let d = xs[0].len();
    let lipschitz = 1.0
        + 2.0
            * xs.iter()
                .zip(cs)
                .map(|(x, c)| c * x.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>();
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; d];
    for _ in 0..iterations {
        let mut g = w.clone();
        for ((x, &y), &c) in xs.iter().zip(ys).zip(cs) {
            let m = 1.0 - y * x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if m > 0.0 {
                for k in 0..d {
                    g[k] -= 2.0 * c * m * y * x[k];
                }
            }
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..d {
            w[k] -= step * g[k];
        }
        if gn < 1e-13 {
            break;
        }
    }
    w
}

/// Open-set ROC by counting at every candidate threshold, then the same
/// "last point within target, linear towards the next" read-out.
pub fn tpir_sweep_oracle(
    scores: &[Vec<f64>],
    probe_labels: &[Option<u32>],
    gallery_labels: &[u32],
    target: f64,
) -> f64 {
    let top = |row: &Vec<f64>| {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        (best, row[best])
    };
    let mate = |i: usize| probe_labels[i].and_then(|l| gallery_labels.iter().position(|&g| g == l));
    let known: Vec<usize> = (0..scores.len()).filter(|&i| mate(i).is_some()).collect();
    let unknown: Vec<usize> = (0..scores.len()).filter(|&i| mate(i).is_none()).collect();
    let mut taus: Vec<f64> = scores.iter().map(|r| top(r).1).collect();
    taus.push(f64::INFINITY);
    taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
    taus.dedup();
    let points: Vec<(f64, f64)> = taus
        .iter()
        .map(|&t| {
            let fp = unknown.iter().filter(|&&i| top(&scores[i]).1 >= t).count() as f64 / unknown.len() as f64;
            let tp = known
                .iter()
                .filter(|&&i| {
                    let (j, s) = top(&scores[i]);
                    s >= t && Some(j) == mate(i)
                })
                .count() as f64
                / known.len().max(1) as f64;
            (fp, tp)
        })
        .collect();
    let mut last = 0;
    for (k, p) in points.iter().enumerate() {
        if p.0 <= target {
            last = k;
        }
    }
    let a = points[last];
    match points.get(last + 1) {
        Some(b) if b.0 > a.0 => a.1 + (target - a.0) / (b.0 - a.0) * (b.1 - a.1),
        _ => a.1,
    }
}

/// Rank-K from the definition: mate within the top K after a stable sort.
pub fn rank_k_oracle(scores: &[Vec<f64>], probe_labels: &[Option<u32>], gallery_labels: &[u32], k: usize) -> f64 {
    let mut hits = 0;
    let mut total = 0;
    for (row, label) in scores.iter().zip(probe_labels) {
        let Some(mate) = label.and_then(|l| gallery_labels.iter().position(|&g| g == l)) else {
            continue;
        };
        total += 1;
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
        if idx[..k.min(idx.len())].contains(&mate) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Cyclic Jacobi with the classic `t = sgn(θ)/(|θ| + √(θ² + 1))` rotation.
/// Returns eigenvalues (descending) and eigenvectors as row-major columns.
pub fn cyclic_jacobi_oracle(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let total: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Top-`d` eigenpairs of `Σ w_i y_i y_iᵀ` through the cyclic oracle.
pub fn weighted_subspace_cyclic(samples: &[Vec<f64>], weights: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples[0].len();
    let mut s = vec![vec![0.0; n]; n];
    for (y, &w) in samples.iter().zip(weights) {
        for i in 0..n {
            for j in 0..n {
                s[i][j] += w * y[i] * y[j];
            }
        }
    }
    let (vals, vecs) = cyclic_jacobi_oracle(&s);
    (vals[..d].to_vec(), vecs[..d].to_vec())
}
