//! Immediate post-dominator computation. The immediate post-dominator of a
//! branch block is the reconvergence point used by the SIMT stack.

use thiserror::Error;

use super::Cfg;

/// Immediate post-dominator per block; the exit block has none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpdomTable {
    pub ipdom: Vec<Option<usize>>,
}

impl IpdomTable {
    pub fn of(&self, block: usize) -> Option<usize> {
        self.ipdom[block]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IpdomError {
    #[error("CFG has no exit block reachable from entry")]
    NoExit,
    #[error("CFG has multiple exit blocks: {0:?}")]
    MultipleExits(Vec<usize>),
    #[error("block {0} is reachable from entry but cannot reach the exit")]
    ExitUnreachableFrom(usize),
}

/// Iterative dataflow on the reverse CFG:
/// `pdom(exit) = {exit}`, `pdom(b) = {b} ∪ ⋂ pdom(succ(b))` to fixpoint,
/// then the immediate post-dominator of `b` is the nearest strict element.
///
/// Unreachable blocks are ignored; every reachable block must reach the
/// single exit sink.
pub fn compute_ipdom(cfg: &Cfg) -> Result<IpdomTable, IpdomError> {
    let n = cfg.num_blocks();
    let reachable = cfg.reachable();

    let exits: Vec<usize> = (0..n)
        .filter(|&b| reachable[b] && cfg.succ[b].is_empty())
        .collect();
    match exits.len() {
        0 => return Err(IpdomError::NoExit),
        1 => {}
        _ => return Err(IpdomError::MultipleExits(exits)),
    }
    let exit = exits[0];

    // pdom sets as bitsets over block ids.
    let full: u128 = if n >= 128 {
        // Fall back to a wider representation only if ever needed; programs
        // at desk scale stay far below 128 blocks.
        panic!("CFG too large for ipdom bitset (max 128 blocks)");
    } else {
        (1u128 << n) - 1
    };
    let mut pdom = vec![full; n];
    pdom[exit] = 1u128 << exit;

    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..n {
            if !reachable[b] || b == exit {
                continue;
            }
            let mut meet = full;
            for &s in &cfg.succ[b] {
                meet &= pdom[s];
            }
            let next = meet | (1u128 << b);
            if next != pdom[b] {
                pdom[b] = next;
                changed = true;
            }
        }
    }

    let mut ipdom = vec![None; n];
    for b in 0..n {
        if !reachable[b] || b == exit {
            continue;
        }
        let strict = pdom[b] & !(1u128 << b);
        if strict == 0 {
            return Err(IpdomError::ExitUnreachableFrom(b));
        }
        // Strict post-dominators are totally ordered by post-dominance; the
        // nearest one has the largest pdom set among them.
        let want = (pdom[b].count_ones() - 1) as usize;
        let mut nearest = None;
        for d in 0..n {
            if strict & (1u128 << d) != 0 && pdom[d].count_ones() as usize == want {
                nearest = Some(d);
                break;
            }
        }
        match nearest {
            Some(d) => ipdom[b] = Some(d),
            None => return Err(IpdomError::ExitUnreachableFrom(b)),
        }
    }

    Ok(IpdomTable { ipdom })
}
