//! Shared helpers for integration tests: a seeded random-CFG generator and a
//! brute-force immediate-post-dominator oracle that checks reachability
//! directly instead of running dataflow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpsim::kisa::{compute_ipdom, Cfg, IpdomTable};

/// Builds a random CFG with `2..=max_blocks` blocks where every non-exit
/// block has one or two successors and the last block is the sole exit.
/// Returns `None` when the draw is rejected by `compute_ipdom` (some block
/// reachable from entry cannot reach the exit).
pub fn random_cfg(seed: u64, max_blocks: usize) -> Option<(Cfg, IpdomTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_blocks);
    let exit = n - 1;
    let mut edges = Vec::new();
    for b in 0..exit {
        let fanout = rng.gen_range(1..=2usize);
        for _ in 0..fanout {
            // Bias forward so most draws can actually reach the exit.
            let target = if rng.gen_bool(0.75) {
                rng.gen_range(b + 1..=exit)
            } else {
                rng.gen_range(0..n)
            };
            edges.push((b, target));
        }
    }
    let cfg = Cfg::from_adjacency(n, &edges);
    let table = compute_ipdom(&cfg).ok()?;
    Some((cfg, table))
}

fn can_reach_exit_avoiding(cfg: &Cfg, from: usize, avoid: usize) -> bool {
    let exit = cfg.blocks.len() - 1;
    if from == avoid {
        return false;
    }
    let mut seen = vec![false; cfg.blocks.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(b) = stack.pop() {
        if b == exit {
            return true;
        }
        for &s in &cfg.succ[b] {
            if s != avoid && !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    false
}

/// `p` post-dominates `b` iff every path from `b` to the exit passes through
/// `p`, i.e. removing `p` disconnects `b` from the exit.
pub fn postdominators(cfg: &Cfg, b: usize) -> Vec<usize> {
    (0..cfg.blocks.len())
        .filter(|&p| p == b || !can_reach_exit_avoiding(cfg, b, p))
        .collect()
}

/// The immediate post-dominator by definition: the strict post-dominator of
/// `b` that every other strict post-dominator of `b` post-dominates.
pub fn ipdom_oracle(cfg: &Cfg, b: usize) -> Option<usize> {
    let strict: Vec<usize> = postdominators(cfg, b).into_iter().filter(|&p| p != b).collect();
    strict
        .iter()
        .copied()
        .find(|&c| strict.iter().all(|&q| q == c || postdominators(cfg, c).contains(&q)))
}

/// Blocks reachable from the entry; the oracle is only meaningful for these.
pub fn reachable_blocks(cfg: &Cfg) -> Vec<usize> {
    cfg.reachable()
        .iter()
        .enumerate()
        .filter_map(|(b, &r)| r.then_some(b))
        .collect()
}
