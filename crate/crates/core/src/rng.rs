//! Seeded random streams and the chunked parallel runner.
//!
//! Work of `n` samples is cut into chunks of `chunk` samples; chunk `c` always
//! draws from stream `c` of the run seed, whatever the number of workers.
//! Per-chunk results come back in chunk order, so any reduction over them is
//! bit-identical for a fixed `(seed, chunk)`.

use std::ops::Range;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type Rng = Xoshiro256PlusPlus;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PERC_SLE_LAB_WORKERS";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `index` of `seed`: a xoshiro256++ generator whose state is expanded
/// by SplitMix64 from a mix of both values.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mixed = splitmix64(seed ^ splitmix64(index.wrapping_mul(GOLDEN).wrapping_add(1)));
    Xoshiro256PlusPlus::seed_from_u64(mixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parallelism {
    pub workers: usize,
    pub chunk: usize,
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism {
            workers: default_workers(),
            chunk: 1000,
        }
    }
}

impl Parallelism {
    pub fn new(workers: usize, chunk: usize) -> Self {
        Parallelism {
            workers: workers.max(1),
            chunk: chunk.max(1),
        }
    }

    pub fn serial(chunk: usize) -> Self {
        Self::new(1, chunk)
    }
}

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w: &usize| w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `f(rng, sample_range)` for every chunk of `0..n` and returns the
/// results in chunk order.  Each worker thread builds its state with `init`
/// once and reuses it across chunks.
pub fn run_chunks<S, T, I, F>(n: usize, seed: u64, par: Parallelism, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut Rng, Range<usize>) -> T + Sync + Send,
{
    let chunk = par.chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let job = |state: &mut S, c: usize| {
        let mut rng = stream(seed, c as u64);
        f(state, &mut rng, c * chunk..((c + 1) * chunk).min(n))
    };
    if par.workers <= 1 || n_chunks <= 1 {
        let mut state = init();
        return (0..n_chunks).map(|c| job(&mut state, c)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(par.workers)
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map_init(&init, |state, c| job(state, c))
            .collect()
    })
}

/// Maps `f` over items on `workers` threads, preserving order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}
