//! Forward simulation of sample paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ContributionKind, ProcessSpec, SamplePath};

/// Random stream for path `index` under `seed`. Streams are fixed per index,
/// so results do not depend on how paths are scheduled.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one path by sampling each step given the values drawn so far.
pub fn simulate_with(process: &ProcessSpec, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
    let mut full: Vec<Vec<f64>> = vec![process.x0().to_vec()];
    for n in 1..=process.n_steps() {
        let step = process.step(n);
        let mut x = step.innovation.sample(rng).map_err(|e| e.at_step(n))?;
        for c in &step.contributions {
            let source = full[c.source_step][c.source_coord];
            let z = match c.kind {
                ContributionKind::Linear => c.unit.mean()?.iter().map(|v| v * source).collect(),
                _ => {
                    if source < 0.0 {
                        return Err(Error::InvalidHistory(format!(
                            "step {n}: {:?} contribution driven by negative value {source}",
                            c.kind
                        )));
                    }
                    c.unit.sample_scaled(source, rng)?
                }
            };
            for (a, b) in x.iter_mut().zip(z) {
                *a += b;
            }
        }
        full.push(x);
    }
    full.remove(0);
    Ok(SamplePath::new(full))
}

/// One path, deterministic in `seed`.
pub fn simulate_path(process: &ProcessSpec, seed: u64) -> Result<SamplePath> {
    simulate_with(process, &mut path_rng(seed, 0))
}

/// `count` paths; path `i` uses stream `i` of `seed`.
pub fn simulate_paths(process: &ProcessSpec, count: usize, seed: u64) -> Result<Vec<SamplePath>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_with(process, &mut path_rng(seed, i)))
        .collect()
}
