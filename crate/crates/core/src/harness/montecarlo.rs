//! Seed-indexed trial execution. Trials are independent, so the default
//! build fans them out with rayon; disabling the `parallel` feature falls
//! back to a plain sequential loop. Output order is the seed order either
//! way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `f` over every seed, in parallel when the `parallel` feature is on.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seeds_seq(seeds, f)
    }
}

/// Sequential reference path, always available (the benchmarks compare the
/// two).
pub fn map_seeds_seq<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let seeds: Vec<u64> = (0..64).collect();
        let f = |s: u64| s.wrapping_mul(2654435761) % 97;
        assert_eq!(map_seeds(&seeds, f), map_seeds_seq(&seeds, f));
    }
}
