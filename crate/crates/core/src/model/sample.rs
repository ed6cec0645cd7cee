//! Bernoulli ensemble sampling with counter-based streams.

use crate::error::{Error, Result};
use crate::rng::{domain, StreamKey};

use super::{BinaryEnsemble, ProbabilityMap};

/// Sample one synapse: +1 with probability p.
#[inline]
fn draw(seed: u64, layer: usize, synapse: usize, ensemble: usize, p: f32) -> i8 {
    // p = 1 and p = 0 are exact: uniform() is in [0,1).
    let u = StreamKey::new(seed, domain::SAMPLE)
        .with(layer as u64)
        .with(synapse as u64)
        .with(ensemble as u64)
        .uniform();
    if u < p as f64 {
        1
    } else {
        -1
    }
}

fn sample_one(map: &ProbabilityMap, index: usize, seed: u64) -> BinaryEnsemble {
    let layers = map
        .layers
        .iter()
        .enumerate()
        .map(|(l, t)| {
            t.data
                .iter()
                .enumerate()
                .map(|(j, &p)| draw(seed, l, j, index, p))
                .collect()
        })
        .collect();
    BinaryEnsemble { index, layers }
}

/// Draw `n_mc` independent weight samples; output depends only on (map, seed, n_mc).
pub fn sample_ensembles(map: &ProbabilityMap, n_mc: usize, seed: u64) -> Result<Vec<BinaryEnsemble>> {
    sample_ensembles_with_threads(map, n_mc, seed, 1)
}

/// Same result for any worker count; ensembles are partitioned across threads.
pub fn sample_ensembles_with_threads(
    map: &ProbabilityMap,
    n_mc: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<BinaryEnsemble>> {
    if n_mc < 1 {
        return Err(Error::Range("n_mc must be >= 1".into()));
    }
    let threads = threads.max(1).min(n_mc);
    if threads == 1 {
        return Ok((1..=n_mc).map(|i| sample_one(map, i, seed)).collect());
    }
    let mut out: Vec<Option<BinaryEnsemble>> = vec![None; n_mc];
    std::thread::scope(|scope| {
        let chunk = n_mc.div_ceil(threads);
        for slot in out.chunks_mut(chunk).enumerate() {
            let (t, slice) = slot;
            scope.spawn(move || {
                for (k, cell) in slice.iter_mut().enumerate() {
                    let i = t * chunk + k + 1;
                    *cell = Some(sample_one(map, i, seed));
                }
            });
        }
    });
    Ok(out.into_iter().map(|e| e.unwrap()).collect())
}
