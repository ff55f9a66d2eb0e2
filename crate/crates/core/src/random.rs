//! Seeded random test objects: Hermitian matrices, states, unitaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, dagger, frobenius, identity, trace, CMat, C64};

/// Deterministic generator used by seeded experiments.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex Ginibre matrix with standard normal entries.
pub fn matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Hermitian matrix `(G + G†)/2` with unit-order spectrum.
pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = matrix(d, rng);
    (&g + dagger(&g)).scale(0.5 / (d as f64).sqrt())
}

/// Real symmetric matrix (time-reversal invariant under complex conjugation).
pub fn real_symmetric<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| c(rng.sample(StandardNormal), 0.0));
    (&g + g.transpose()).scale(0.5 / (d as f64).sqrt())
}

/// Full-rank density matrix `G G† / tr`.
pub fn density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let g = matrix(d, rng);
    let w = &g * dagger(&g);
    let tr = trace(&w);
    w.map(|z| z / tr)
}

/// Density matrix mixed with the tracial state, so its spectrum stays above
/// `floor / d`.
pub fn faithful_density<R: Rng + ?Sized>(d: usize, floor: f64, rng: &mut R) -> CMat {
    density(d, rng).scale(1.0 - floor) + identity(d).scale(floor / d as f64)
}

/// Haar-distributed unitary via QR with the phase correction.
pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let qr = matrix(d, rng).qr();
    let (q, r) = qr.unpack();
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Normalized random vector.
pub fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..d)
        .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Normalized so that the Frobenius norm is one.
pub fn normalized(a: CMat) -> CMat {
    let n = frobenius(&a);
    a.scale(1.0 / n)
}
