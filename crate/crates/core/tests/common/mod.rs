//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ptnn_core::{Mat, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    Mat::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

/// `r_{j} = min(planted_j, ∏ n_{..j}, ∏ n_{j+1..})` so every rank is attainable.
pub fn capped_ranks(modes: &[usize], planted: &[usize]) -> Vec<usize> {
    let d = modes.len();
    let mut ranks = vec![1; d + 1];
    for j in 1..d {
        let left: usize = modes[..j].iter().product();
        let right: usize = modes[j..].iter().product();
        ranks[j] = planted[j].min(left).min(right);
    }
    ranks
}

pub fn random_cores(modes: &[usize], ranks: &[usize], rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    modes
        .iter()
        .enumerate()
        .map(|(j, &n)| random_tensor(&[ranks[j], n, ranks[j + 1]], rng))
        .collect()
}

/// Literal evaluation of
/// `W[i_1..i_d] = Σ_{l_0..l_d} G_1[l_0,i_1,l_1]·…·G_d[l_{d-1},i_d,l_d]`
/// over every index tuple and every bond tuple.
pub fn nested_sum(cores: &[Tensor]) -> Tensor {
    let modes: Vec<usize> = cores.iter().map(|c| c.shape()[1]).collect();
    let bonds: Vec<usize> = std::iter::once(cores[0].shape()[0])
        .chain(cores.iter().map(|c| c.shape()[2]))
        .collect();
    Tensor::from_fn(modes.clone(), |ix| {
        let mut total = 0.0;
        let mut l = vec![0usize; bonds.len()];
        loop {
            let mut term = 1.0;
            for (j, core) in cores.iter().enumerate() {
                term *= core.get(&[l[j], ix[j], l[j + 1]]).unwrap();
            }
            total += term;
            // odometer over the bond indices
            let mut p = 0;
            loop {
                if p == l.len() {
                    return total;
                }
                l[p] += 1;
                if l[p] < bonds[p] {
                    break;
                }
                l[p] = 0;
                p += 1;
            }
        }
    })
    .unwrap()
}

/// Tensor with exact TT ranks at most `planted`, contracted by the nested-sum oracle.
pub fn planted_tensor(
    modes: &[usize],
    planted: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Tensor, Vec<usize>) {
    let ranks = capped_ranks(modes, planted);
    let cores = random_cores(modes, &ranks, rng);
    (nested_sum(&cores), ranks)
}

pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let den: f64 = a.data().iter().map(|x| x * x).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// `max |AᵀA − I|` computed entrywise.
pub fn gram_defect(a: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 0..a.cols() {
        for q in 0..a.cols() {
            let g: f64 = (0..a.rows()).map(|i| a.get(i, p) * a.get(i, q)).sum();
            let target = if p == q { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// Unfolding of core `j` as an `(r_{j-1}·n_j) × r_j` matrix.
pub fn left_unfolding(core: &Tensor) -> Mat {
    let s = core.shape();
    Mat::new(s[0] * s[1], s[2], core.data().to_vec()).unwrap()
}

/// Minimal `r ≥ 1` with `sqrt(Σ_{i ≥ r} s_i²) ≤ sigma`, by enumeration.
pub fn minimal_rank(s: &[f64], sigma: f64) -> usize {
    (1..=s.len())
        .find(|&r| s[r..].iter().map(|x| x * x).sum::<f64>().sqrt() <= sigma)
        .unwrap_or(s.len())
}

/// Every multiset of `d` factors ≥ 2 whose product is `volume`, ascending.
pub fn factorizations(volume: usize, d: usize) -> Vec<Vec<usize>> {
    fn go(rest: usize, d: usize, min: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if d == 1 {
            if rest >= min {
                acc.push(rest);
                out.push(acc.clone());
                acc.pop();
            }
            return;
        }
        let mut f = min;
        while f * f <= rest {
            if rest.is_multiple_of(f) {
                acc.push(f);
                go(rest / f, d - 1, f, acc, out);
                acc.pop();
            }
            f += 1;
        }
    }
    let mut out = Vec::new();
    go(volume, d, 2, &mut Vec::new(), &mut out);
    out
}

pub fn spread(shape: &[usize]) -> f64 {
    let max = *shape.iter().max().unwrap() as f64;
    let min = *shape.iter().min().unwrap() as f64;
    max / min
}
