use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::RetrievalError;
use crate::graph::EventGraph;

/// Independent stream for walk `walk` of seed `seed` under `master_seed`.
pub fn walk_rng(master_seed: u64, seed: usize, walk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((seed as u64) << 32) | walk as u64);
    rng
}

/// Weighted walk of at most `length` steps from `seed`. Each step picks a
/// neighbor with probability proportional to edge weight, skipping the node
/// just left unless it is the only neighbor.
pub fn random_walk<R: Rng + ?Sized>(
    graph: &EventGraph,
    seed: &str,
    length: usize,
    rng: &mut R,
) -> Result<Vec<String>, RetrievalError> {
    graph.neighbors(seed)?;
    let mut path = vec![seed.to_string()];
    for _ in 0..length {
        let here = path.last().expect("non-empty");
        let prev = path.len().checked_sub(2).map(|i| path[i].as_str());
        let all = graph.neighbors(here)?;
        let eligible: Vec<&(String, f64)> = match prev {
            Some(p) if all.len() > 1 => all.iter().filter(|(id, _)| id != p).collect(),
            _ => all.iter().collect(),
        };
        if eligible.is_empty() {
            break;
        }
        let dist = WeightedIndex::new(eligible.iter().map(|(_, w)| *w)).expect("edge weights are positive");
        let next = eligible[dist.sample(rng)].0.clone();
        path.push(next);
    }
    Ok(path)
}

/// `walks_per_seed` walks from each seed, run in parallel and returned in
/// `(seed, walk)` order.
pub fn run_walks(
    graph: &EventGraph,
    seeds: &[String],
    walks_per_seed: usize,
    length: usize,
    master_seed: u64,
) -> Result<Vec<Vec<String>>, RetrievalError> {
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..walks_per_seed).map(move |w| (s, w)))
        .collect();
    jobs.par_iter()
        .map(|&(s, w)| random_walk(graph, &seeds[s], length, &mut walk_rng(master_seed, s, w)))
        .collect()
}
