//! Principal eigenvalues of `Delta + h` and sampled estimates of the
//! Sobolev constant `S_h` and the elliptic constant `C1`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fmath;
use crate::grid::{dot, same_grid, Grid, ScalarField, VectorField};
use crate::lichnerowicz::solve_shifted;
use crate::momentum::{solve_conformal, MomentumOptions};
use crate::{critical_exponent, Error, Result, DIM};

/// Shift below `min h` as a fraction of the smallest nonzero Laplacian
/// eigenvalue.
const SHIFT_FRACTION: f64 = 0.05;
const MAX_INVERSE_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub value: f64,
    /// Positive, `|field|_2 = 1` in the volume-weighted norm.
    pub field: ScalarField,
    pub iterations: usize,
    /// `|(Delta + h - value) field|_2`.
    pub residual: f64,
}

fn weighted_norm(g: &Grid, v: &[f64]) -> f64 {
    fmath::sqrt(dot(v, v) * g.volume_element())
}

/// Smallest eigenvalue of `Delta + h` by inverse iteration with the fixed
/// shift `min h - 0.05 lambda_1`, where `lambda_1` is the smallest nonzero
/// eigenvalue of the discrete Laplacian.
pub fn principal_eigen(h: &ScalarField, tol: f64) -> Result<EigenResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("eigen tolerance must be positive".into()));
    }
    let g = *h.grid();
    let n = g.len();
    let sigma = h.min() - SHIFT_FRACTION * g.laplacian_gap();
    let shifted: Vec<f64> = h.values().iter().map(|&v| v - sigma).collect();
    let apply_full = |u: &[f64], out: &mut [f64]| {
        g.laplacian_into(u, out);
        for i in 0..n {
            out[i] += h.values()[i] * u[i];
        }
    };

    let mut u = vec![1.0; n];
    let s = weighted_norm(&g, &u);
    u.iter_mut().for_each(|v| *v /= s);
    let mut next = vec![0.0; n];
    let mut au = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_INVERSE_ITERATIONS {
        apply_full(&u, &mut au);
        let value = dot(&u, &au) * g.volume_element();
        let r2: f64 = (0..n).map(|i| (au[i] - value * u[i]) * (au[i] - value * u[i])).sum();
        residual = fmath::sqrt(r2 * g.volume_element());
        if residual <= tol {
            if u.iter().sum::<f64>() < 0.0 {
                u.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(EigenResult {
                value,
                field: ScalarField::from_raw(g, u),
                iterations: it,
                residual,
            });
        }
        if it == MAX_INVERSE_ITERATIONS {
            break;
        }
        next.copy_from_slice(&u);
        solve_shifted(&g, &shifted, &u, &mut next, 1e-14, 20_000).or_else(|e| match e {
            Error::NoConvergence { .. } => Ok(0),
            other => Err(other),
        })?;
        let s = weighted_norm(&g, &next);
        for i in 0..n {
            u[i] = next[i] / s;
        }
    }
    Err(Error::IterationStalled {
        iterations: MAX_INVERSE_ITERATIONS,
        residual,
    })
}

/// Principal eigenvalue of the linearised Lichnerowicz operator
/// `Delta + h - (2*-1) f phi^{2*-2} + (2*+1) a phi^{-2*-2}`.
pub fn linearization_min_eig(
    phi: &ScalarField,
    h: &ScalarField,
    f: &ScalarField,
    a: &ScalarField,
    tol: f64,
) -> Result<f64> {
    for c in [h, f, a] {
        same_grid(phi.grid(), c.grid())?;
    }
    if phi.min() <= 0.0 {
        return Err(Error::InvalidInput("phi must be positive".into()));
    }
    let ts = critical_exponent(DIM) as i32;
    let potential: Vec<f64> = (0..phi.grid().len())
        .map(|i| {
            let p = phi.values()[i];
            h.values()[i] - (ts - 1) as f64 * f.values()[i] * fmath::powi(p, ts - 2)
                + (ts + 1) as f64 * a.values()[i] * fmath::powi(p, -ts - 2)
        })
        .collect();
    Ok(principal_eigen(&ScalarField::from_raw(*phi.grid(), potential), tol)?.value)
}

/// `(|u|_{2*} / |u|_{H1_h})^{2*} = int u^{2*} / (int |grad u|^2 + h u^2)^{2*/2}`.
pub fn sobolev_quotient(u: &ScalarField, h: &ScalarField) -> Result<f64> {
    same_grid(u.grid(), h.grid())?;
    let ts = critical_exponent(DIM);
    let g = u.grid();
    let mut au = vec![0.0; g.len()];
    g.laplacian_into(u.values(), &mut au);
    Ok(quotient_raw(g, u.values(), &au, h.values(), ts))
}

fn quotient_raw(g: &Grid, u: &[f64], lap: &[f64], h: &[f64], ts: f64) -> f64 {
    let dv = g.volume_element();
    let mut top = 0.0;
    let mut energy = 0.0;
    for i in 0..u.len() {
        top += fmath::powi(fmath::abs(u[i]), ts as i32);
        energy += u[i] * (lap[i] + h[i] * u[i]);
    }
    if energy <= 0.0 {
        return f64::INFINITY;
    }
    top * dv / fmath::powf(energy * dv, ts / 2.0)
}

/// Seeded ascent on the Sobolev quotient; returns the best quotient found.
struct SobolevAscent<'a> {
    g: Grid,
    h: &'a [f64],
    ts: f64,
}

impl SobolevAscent<'_> {
    fn quotient(&self, u: &[f64], lap: &mut [f64]) -> f64 {
        self.g.laplacian_into(u, lap);
        quotient_raw(&self.g, u, lap, self.h, self.ts)
    }

    /// Preconditioned ascent: `d = (Delta + h)^{-1}(u^{2*-1}) H / N - u`,
    /// where `N = int u^{2*}` and `H` is the energy; backtracking keeps the
    /// quotient increasing.
    fn refine(&self, mut u: Vec<f64>, steps: usize) -> Result<f64> {
        let n = u.len();
        let mut lap = vec![0.0; n];
        let mut best = self.quotient(&u, &mut lap);
        let mut rhs = vec![0.0; n];
        let mut sol = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let ts = self.ts as i32;
        for _ in 0..steps {
            self.g.laplacian_into(&u, &mut lap);
            let mut top = 0.0;
            let mut energy = 0.0;
            for i in 0..n {
                rhs[i] = fmath::powi(fmath::abs(u[i]), ts - 1) * u[i].signum();
                top += fmath::powi(fmath::abs(u[i]), ts);
                energy += u[i] * (lap[i] + self.h[i] * u[i]);
            }
            sol.iter_mut().for_each(|v| *v = 0.0);
            solve_shifted(&self.g, self.h, &rhs, &mut sol, 1e-10, 5000)?;
            let scale = energy / top;
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-4 {
                for i in 0..n {
                    trial[i] = u[i] + t * (sol[i] * scale - u[i]);
                }
                let q = self.quotient(&trial, &mut lap);
                if q.is_finite() && q > best * (1.0 + 1e-12) {
                    best = q;
                    core::mem::swap(&mut u, &mut trial);
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
            let s = u.iter().fold(0.0, |m, &v| f64::max(m, fmath::abs(v)));
            u.iter_mut().for_each(|v| *v /= s);
        }
        Ok(best)
    }
}

/// Seed fields for the ascent: the constant, a single-cell spike, periodic
/// bumps of several widths and random smooth positive fields.
fn sobolev_seeds(g: &Grid, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut seeds = Vec::with_capacity(count);
    seeds.push(vec![1.0; n]);
    if count > 1 {
        let mut spike = vec![1e-3; n];
        spike[0] = 1.0;
        seeds.push(spike);
    }
    let lengths = g.lengths();
    let mut k = 0usize;
    while seeds.len() < count {
        if k % 2 == 0 {
            let center: [f64; 3] = core::array::from_fn(|a| rng.random::<f64>() * lengths[a]);
            let width = lengths[0] * (0.05 + 0.25 * rng.random::<f64>());
            seeds.push(
                (0..n)
                    .map(|i| {
                        let x = g.coords(i);
                        let mut r2 = 0.0;
                        for a in 0..3 {
                            let mut d = fmath::abs(x[a] - center[a]);
                            d = f64::min(d, lengths[a] - d);
                            r2 += d * d;
                        }
                        1e-2 + fmath::exp(-r2 / (2.0 * width * width))
                    })
                    .collect(),
            );
        } else {
            let modes: Vec<([f64; 3], f64, f64)> = (0..6)
                .map(|_| {
                    let wave = core::array::from_fn(|a| {
                        let m = rng.random_range(-2i32..=2) as f64;
                        2.0 * fmath::PI * m / lengths[a]
                    });
                    (wave, rng.random::<f64>() * 0.3, rng.random::<f64>() * 2.0 * fmath::PI)
                })
                .collect();
            seeds.push(
                (0..n)
                    .map(|i| {
                        let x = g.coords(i);
                        1.0 + modes
                            .iter()
                            .map(|(kv, amp, ph)| {
                                amp * fmath::cos(kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2] + ph)
                            })
                            .sum::<f64>()
                    })
                    .collect(),
            );
        }
        k += 1;
    }
    seeds
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolevEstimate {
    /// `2 x best`.
    pub value: f64,
    /// Best refined quotient per seed.
    pub samples: Vec<f64>,
}

/// Twice the largest Sobolev quotient reached by multi-seed ascent.
pub fn estimate_s_h(h: &ScalarField, seeds: usize, rng_seed: u64) -> Result<f64> {
    Ok(estimate_s_h_detailed(h, seeds, rng_seed)?.value)
}

pub fn estimate_s_h_detailed(h: &ScalarField, seeds: usize, rng_seed: u64) -> Result<SobolevEstimate> {
    if seeds == 0 {
        return Err(Error::InvalidInput("at least one Sobolev seed is required".into()));
    }
    let mu = principal_eigen(h, 1e-9)?.value;
    if mu <= 0.0 {
        return Err(Error::NonCoercive { value: mu });
    }
    let g = *h.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ascent = SobolevAscent {
        g,
        h: h.values(),
        ts: critical_exponent(DIM),
    };
    let mut samples = Vec::with_capacity(seeds);
    for seed in sobolev_seeds(&g, seeds, &mut rng) {
        samples.push(ascent.refine(seed, 40)?);
    }
    let best = samples.iter().copied().fold(0.0, f64::max);
    Ok(SobolevEstimate {
        value: 2.0 * best,
        samples,
    })
}

fn random_probe(g: &Grid, rng: &mut ChaCha8Rng) -> VectorField {
    let lengths = g.lengths();
    let modes: Vec<([f64; 3], [f64; 3], f64)> = (0..4)
        .map(|_| {
            let mut wave = [0.0; 3];
            while wave.iter().all(|&w| w == 0.0) {
                wave = core::array::from_fn(|a| {
                    2.0 * fmath::PI * rng.random_range(-2i32..=2) as f64 / lengths[a]
                });
            }
            let amp = core::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
            (wave, amp, rng.random::<f64>() * 2.0 * fmath::PI)
        })
        .collect();
    let mut x = VectorField::from_fn(*g, |x| {
        let mut v = [0.0; 3];
        for (kv, amp, ph) in &modes {
            let c = fmath::cos(kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2] + ph);
            for a in 0..3 {
                v[a] += amp[a] * c;
            }
        }
        v
    });
    x.remove_mean();
    x
}

/// `|LW|_inf / |X|_inf` for `P W = X`, with `X` made mean-zero first.
pub fn elliptic_ratio(x: &VectorField) -> Result<f64> {
    let mut x = x.clone();
    x.remove_mean();
    let size = x.sup();
    if size == 0.0 {
        return Err(Error::InvalidInput("probe field vanishes".into()));
    }
    let sol = solve_conformal(&x, &MomentumOptions::default())?;
    Ok(sol.lw.sup() / size)
}

/// Twice the largest ratio `|LW|_inf / |X|_inf` over `probes` random
/// smooth mean-zero probes. Probes are drawn sequentially from the seed, so
/// more probes never lower the estimate.
pub fn estimate_c1(grid: &Grid, probes: usize, rng_seed: u64) -> Result<f64> {
    estimate_c1_with(grid, probes, rng_seed, &[])
}

/// [`estimate_c1`] with additional caller-supplied probes.
pub fn estimate_c1_with(
    grid: &Grid,
    probes: usize,
    rng_seed: u64,
    extra: &[VectorField],
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidInput("at least one C1 probe is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: f64 = 0.0;
    for _ in 0..probes {
        best = best.max(elliptic_ratio(&random_probe(grid, &mut rng))?);
    }
    for x in extra {
        same_grid(grid, x.grid())?;
        best = best.max(elliptic_ratio(x)?);
    }
    Ok(2.0 * best)
}
