//! Matrix permanents and permutation-weighted Gram sums.
//!
//! Multi-photon probabilities under partial distinguishability take the form
//! `sum_rho w(rho) prod_i G[i][rho(i)]`, where `G` is a Gram matrix of
//! single-photon amplitudes and `w` depends only on the cycle structure of
//! `rho`. [`PermutationTable`] enumerates the permutations once per photon
//! number and caches their weights.

use alloc::vec::Vec;

use crate::C64;

/// Permanent by Ryser's formula with Gray-code updates, `O(2^n n)`.
pub fn permanent_ryser(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    if n == 0 {
        return C64::new(1.0, 0.0);
    }
    let mut row_sums = alloc::vec![C64::new(0.0, 0.0); n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let bit = (next ^ gray).trailing_zeros() as usize;
        let added = next & (1 << bit) != 0;
        gray = next;
        for (i, sum) in row_sums.iter_mut().enumerate() {
            if added {
                *sum += m[i][bit];
            } else {
                *sum -= m[i][bit];
            }
        }
        let prod = row_sums.iter().fold(C64::new(1.0, 0.0), |acc, s| acc * s);
        if gray.count_ones() % 2 == (n as u32) % 2 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Permanent by direct expansion over all permutations.
pub fn permanent_naive(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    let table = PermutationTable::new(n);
    table
        .iter()
        .map(|p| (0..n).fold(C64::new(1.0, 0.0), |acc, i| acc * m[i][p[i] as usize]))
        .sum()
}

/// All permutations of `0..n` with their cycle counts.
#[derive(Debug, Clone)]
pub struct PermutationTable {
    n: usize,
    flat: Vec<u8>,
    cycles: Vec<u8>,
}

impl PermutationTable {
    /// Builds the table in lexicographic order; `n` must be small
    /// (`n! * n` bytes).
    pub fn new(n: usize) -> Self {
        assert!(n <= 10, "permutation table for n = {n} is too large");
        let mut flat = Vec::new();
        let mut cycles = Vec::new();
        let mut perm: Vec<u8> = (0..n as u8).collect();
        loop {
            flat.extend_from_slice(&perm);
            cycles.push(cycle_count(&perm) as u8);
            if !next_permutation(&mut perm) {
                break;
            }
        }
        Self { n, flat, cycles }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        // chunks_exact(0) panics, and the single empty permutation has no entries.
        let width = self.n.max(1);
        let count = self.len();
        (0..count).map(move |k| {
            if self.n == 0 {
                &self.flat[0..0]
            } else {
                &self.flat[k * width..(k + 1) * width]
            }
        })
    }

    pub fn cycles(&self) -> &[u8] {
        &self.cycles
    }

    /// `sum_p weights[p] * prod_i g[i][p(i)]`, with one weight per table entry.
    pub fn weighted_sum(&self, g: &[Vec<C64>], weights: &[f64]) -> C64 {
        debug_assert_eq!(g.len(), self.n);
        debug_assert_eq!(weights.len(), self.len());
        let mut total = C64::new(0.0, 0.0);
        for (p, &w) in self.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let mut prod = C64::new(w, 0.0);
            for (i, &j) in p.iter().enumerate() {
                prod *= g[i][j as usize];
            }
            total += prod;
        }
        total
    }
}

/// Number of cycles, fixed points included.
pub fn cycle_count(perm: &[u8]) -> usize {
    let mut seen = alloc::vec![false; perm.len()];
    let mut count = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = perm[j] as usize;
        }
    }
    count
}

/// Number of entries with `perm[i] != i`.
pub fn moved_points(perm: &[u8]) -> usize {
    perm.iter().enumerate().filter(|(i, &p)| *i != p as usize).count()
}

fn next_permutation(p: &mut [u8]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
