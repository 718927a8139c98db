//! Deterministic sample sets over the working compact and on spheres.
//!
//! The K grid is every box corner, the box center, then Halton points
//! `skip + 1 ..= skip + count`. No RNG state is involved, so the same
//! configuration always yields the same starts.

use serde::{Deserialize, Serialize};

use crate::models::BoxRegion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub halton_points: usize,
    /// Offset into the Halton sequence; acts as the sampling seed.
    pub halton_skip: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { halton_points: 64, halton_skip: 0 }
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= k).all(|p| k % p != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    primes(dim).into_iter().map(|p| halton(index, p)).collect()
}

pub fn corners(b: &BoxRegion) -> Vec<Vec<f64>> {
    let n = b.dim();
    (0..1usize << n).map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { b.hi[i] } else { b.lo[i] }).collect()).collect()
}

pub fn k_grid(b: &BoxRegion, cfg: &SamplingConfig) -> Vec<Vec<f64>> {
    let n = b.dim();
    let mut pts = corners(b);
    pts.push(b.center());
    let bases = primes(n);
    for i in 0..cfg.halton_points {
        let index = (cfg.halton_skip + i + 1) as u64;
        pts.push((0..n).map(|d| b.lo[d] + halton(index, bases[d]) * (b.hi[d] - b.lo[d])).collect());
    }
    pts
}

/// The 2n axis points of the sphere plus `extra` low-discrepancy directions.
pub fn sphere_points(center: &[f64], radius: f64, extra: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut pts = Vec::with_capacity(2 * n + extra);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut p = center.to_vec();
            p[i] += sign * radius;
            pts.push(p);
        }
    }
    if n < 2 {
        return pts;
    }
    let bases = primes(n);
    let mut index = 1u64;
    while pts.len() < 2 * n + extra {
        let v: Vec<f64> = bases.iter().map(|&b| 2.0 * halton(index, b) - 1.0).collect();
        index += 1;
        let len = crate::geom::norm(&v);
        if len < 1e-3 {
            continue;
        }
        pts.push(center.iter().zip(&v).map(|(c, d)| c + radius * d / len).collect());
    }
    pts
}
