//! Control-flow graph construction over a parsed program. The CFG exists to
//! locate the reconvergence points of divergent branches.

use thiserror::Error;

use super::{Instruction, Program};

/// A basic block: the half-open instruction range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
}

impl Block {
    /// Index of the block terminator.
    pub fn last(&self) -> usize {
        self.end - 1
    }
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    /// Successor block ids per block. A branch block lists taken first, then
    /// fall-through.
    pub succ: Vec<Vec<usize>>,
    /// Block id for every instruction index.
    pub block_of: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CfgError {
    #[error("program is empty")]
    Empty,
    #[error("control falls through the end of the program (instruction {0})")]
    FallsOffEnd(usize),
    #[error("block {0} cannot reach an exit; the program does not terminate on every path")]
    NoPathToExit(usize),
}

impl Cfg {
    /// Block id of the entry block.
    pub fn entry(&self) -> usize {
        self.block_of[0]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks reachable from entry, in discovery order.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.blocks.len()];
        let mut stack = vec![self.entry()];
        seen[self.entry()] = true;
        while let Some(b) = stack.pop() {
            for &s in &self.succ[b] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }

    /// Test/tooling constructor for a raw block graph: `n` blocks where block
    /// `i` stands for a single pseudo-instruction. The instruction ranges are
    /// synthetic.
    pub fn from_adjacency(n: usize, edges: &[(usize, usize)]) -> Cfg {
        let blocks = (0..n).map(|i| Block { start: i, end: i + 1 }).collect();
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            if !succ[a].contains(&b) {
                succ[a].push(b);
            }
        }
        Cfg {
            blocks,
            succ,
            block_of: (0..n).collect(),
        }
    }
}

/// Splits the program into basic blocks and wires fall-through plus branch
/// edges. Validates that every reachable block can reach an EXIT.
pub fn build_cfg(p: &Program) -> Result<Cfg, CfgError> {
    let n = p.instructions.len();
    if n == 0 {
        return Err(CfgError::Empty);
    }

    let mut leader = vec![false; n];
    leader[0] = true;
    for (i, insn) in p.instructions.iter().enumerate() {
        match insn {
            Instruction::Bra { target, .. } => {
                leader[*target] = true;
                if i + 1 < n {
                    leader[i + 1] = true;
                }
            }
            Instruction::Exit => {
                if i + 1 < n {
                    leader[i + 1] = true;
                }
            }
            _ => {}
        }
    }

    let mut blocks = Vec::new();
    let mut block_of = vec![0usize; n];
    let mut start = 0;
    for i in 1..=n {
        if i == n || leader[i] {
            let id = blocks.len();
            blocks.push(Block { start, end: i });
            for insn_idx in start..i {
                block_of[insn_idx] = id;
            }
            start = i;
        }
    }

    let mut succ = vec![Vec::new(); blocks.len()];
    for (id, b) in blocks.iter().enumerate() {
        match &p.instructions[b.last()] {
            Instruction::Exit => {}
            Instruction::Bra { target, .. } => {
                let taken = block_of[*target];
                succ[id].push(taken);
                if b.end >= n {
                    return Err(CfgError::FallsOffEnd(b.last()));
                }
                let ft = block_of[b.end];
                if ft != taken {
                    succ[id].push(ft);
                }
            }
            _ => {
                if b.end >= n {
                    return Err(CfgError::FallsOffEnd(b.last()));
                }
                succ[id].push(block_of[b.end]);
            }
        }
    }

    let cfg = Cfg {
        blocks,
        succ,
        block_of,
    };

    // Every block reachable from entry must reach an exit block.
    let reachable = cfg.reachable();
    let exits: Vec<usize> = cfg
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| p.instructions[b.last()].is_exit())
        .map(|(i, _)| i)
        .collect();
    let mut reaches_exit = vec![false; cfg.num_blocks()];
    // Walk predecessors backwards from the exits.
    let mut preds = vec![Vec::new(); cfg.num_blocks()];
    for (b, ss) in cfg.succ.iter().enumerate() {
        for &s in ss {
            preds[s].push(b);
        }
    }
    let mut stack = exits.clone();
    for &e in &exits {
        reaches_exit[e] = true;
    }
    while let Some(b) = stack.pop() {
        for &pb in &preds[b] {
            if !reaches_exit[pb] {
                reaches_exit[pb] = true;
                stack.push(pb);
            }
        }
    }
    for b in 0..cfg.num_blocks() {
        if reachable[b] && !reaches_exit[b] {
            return Err(CfgError::NoPathToExit(b));
        }
    }

    Ok(cfg)
}
