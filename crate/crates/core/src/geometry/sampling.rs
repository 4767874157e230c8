//! Seeded low-discrepancy sampling of states.
//!
//! Points come from a Halton sequence with a Cranley-Patterson rotation:
//! every dimension is shifted by a uniform offset drawn from a ChaCha stream
//! seeded with the user seed, then wrapped into `[0, 1)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Distribution, DomainBox, TangentState};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_SEED: u64 = 42;

/// `count` points of the shifted Halton sequence in `[0, 1)^dims`.
pub fn halton(count: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let primes = first_primes(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    (1..=count)
        .map(|i| {
            primes
                .iter()
                .zip(&shifts)
                .map(|(&p, s)| (radical_inverse(i as u64, p) + s).fract())
                .collect()
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut c = 2u64;
    while out.len() < k {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// A reproducible set of sample states.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub seed: u64,
    pub states: Vec<TangentState>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// States on `C`: `q` in the box and `u = v^α X_α(q)` with `v^α ∈ [−1, 1]`.
pub fn on_constraint(d: &Distribution, domain: &DomainBox, count: usize, seed: u64) -> Result<SampleSet> {
    let n = d.dim();
    let m = d.rank();
    check_box(domain, n)?;
    let mut states = Vec::with_capacity(count);
    for p in halton(count, n + m, seed) {
        let q = domain.scale(&p[..n]);
        let v = DVector::from_iterator(m, p[n..].iter().map(|t| 2.0 * t - 1.0));
        let b = d.matrix_at(&super::point_values(&q))?;
        states.push(TangentState::new(q, b * v)?);
    }
    if states.is_empty() && count > 0 {
        return Err(Error::Precondition("no on-constraint states could be sampled".into()));
    }
    Ok(SampleSet { seed, states })
}

/// States anywhere in `TQ`: `q` in the box and `u ∈ [−1, 1]^n`.
pub fn unconstrained(domain: &DomainBox, count: usize, seed: u64) -> Result<SampleSet> {
    let n = domain.dim();
    let states = halton(count, 2 * n, seed)
        .into_iter()
        .map(|p| {
            let q = domain.scale(&p[..n]);
            let u = DVector::from_iterator(n, p[n..].iter().map(|t| 2.0 * t - 1.0));
            TangentState::new(q, u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet { seed, states })
}

/// Coordinate points in the box.
pub fn points(domain: &DomainBox, count: usize, seed: u64) -> Vec<DVector<f64>> {
    halton(count, domain.dim(), seed)
        .iter()
        .map(|p| domain.scale(p))
        .collect()
}

fn check_box(domain: &DomainBox, n: usize) -> Result<()> {
    if domain.dim() != n {
        return Err(Error::Precondition(format!(
            "domain box has dimension {}, system has {n}",
            domain.dim()
        )));
    }
    Ok(())
}
