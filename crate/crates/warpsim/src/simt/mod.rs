//! SIMT execution: warp formation and the cycle-level core model.
//!
//! The engine in [`engine`] executes warps (or, on the split-warp machine,
//! independently scheduled warp fragments) against the memory system, with a
//! per-warp reconvergence stack handling branch divergence.

mod engine;

pub use engine::{simulate, SimError, SimOutcome};

/// Bitmask with the low `lanes` bits set; lane masks are at most 64 wide.
pub fn lane_mask(lanes: usize) -> u64 {
    debug_assert!(lanes <= 64);
    if lanes == 64 {
        u64::MAX
    } else {
        (1u64 << lanes) - 1
    }
}

/// One warp's slot in a thread block: `lanes` consecutive threads starting at
/// `base_tid`. Only the last warp of a block may be partial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WarpSlot {
    pub base_tid: u32,
    pub lanes: usize,
}

/// Partitions a block's linearized thread ids into warps of consecutive
/// threads.
pub fn form_warps(block_threads: u32, warp_size: usize) -> Vec<WarpSlot> {
    assert!((1..=64).contains(&warp_size));
    assert!(block_threads > 0);
    let mut warps = Vec::new();
    let mut base = 0u32;
    while base < block_threads {
        let lanes = (block_threads - base).min(warp_size as u32) as usize;
        warps.push(WarpSlot {
            base_tid: base,
            lanes,
        });
        base += warp_size as u32;
    }
    warps
}
