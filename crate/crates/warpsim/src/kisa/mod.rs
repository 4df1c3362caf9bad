//! The micro-ISA: program representation, parser, control-flow graph,
//! immediate post-dominators, and the sequential reference interpreter.

mod cfg;
mod interp;
mod ipdom;
mod parse;

pub use cfg::{build_cfg, Block, Cfg, CfgError};
pub use interp::{
    alu, compare, reference_execute, reference_execute_traced, ExecError, MemImage, RefRun,
    ThreadState, DEFAULT_STEP_BUDGET,
};
pub use ipdom::{compute_ipdom, IpdomError, IpdomTable};
pub use parse::{parse_program, ParseError};

use std::collections::BTreeMap;
use std::fmt;

pub const NUM_REGS: u8 = 16;
pub const NUM_PREDS: u8 = 4;

/// General-purpose register id, `r0`..`r15`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Reg(pub u8);

/// Predicate register id, `p0`..`p3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pred(pub u8);

/// Per-thread read-only specials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Special {
    /// Linearized thread id within the block.
    Tid,
    /// Linearized block id within the grid.
    Ctaid,
    /// Number of threads per block.
    Ntid,
}

/// A source operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Imm(i32),
    Special(Special),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    And,
    Shr,
}

/// Comparison condition for `setp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cond {
    Eq,
    Ne,
    Lt,
    Ge,
}

/// One decoded instruction. Branch targets are resolved instruction indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instruction {
    Mov { dst: Reg, src: Operand },
    Alu { op: AluOp, dst: Reg, a: Reg, b: Operand },
    Setp { cond: Cond, dst: Pred, a: Reg, b: Operand },
    Bra { pred: Pred, target: usize },
    LdGlobal { dst: Reg, addr: Reg, offset: i32 },
    StGlobal { addr: Reg, offset: i32, src: Reg },
    BarSync,
    Exit,
}

impl Instruction {
    pub fn is_branch(&self) -> bool {
        matches!(self, Instruction::Bra { .. })
    }

    pub fn is_exit(&self) -> bool {
        matches!(self, Instruction::Exit)
    }

    pub fn is_memory(&self) -> bool {
        matches!(
            self,
            Instruction::LdGlobal { .. } | Instruction::StGlobal { .. }
        )
    }
}

/// A parsed and label-resolved kernel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Original label names, for diagnostics and unparsing.
    pub labels: BTreeMap<String, usize>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Renders the program back to kernel text. `parse(unparse(p)) == p`
    /// up to label naming, and unparse∘parse is a fixpoint on text produced
    /// by this function.
    pub fn unparse(&self) -> String {
        // Invert the label map; synthesize labels for branch targets that
        // lost theirs.
        let mut names: BTreeMap<usize, String> = BTreeMap::new();
        for (name, &idx) in &self.labels {
            names.entry(idx).or_insert_with(|| name.clone());
        }
        for insn in &self.instructions {
            if let Instruction::Bra { target, .. } = insn {
                names
                    .entry(*target)
                    .or_insert_with(|| format!("L{}", target));
            }
        }
        let mut out = String::new();
        for (idx, insn) in self.instructions.iter().enumerate() {
            if let Some(name) = names.get(&idx) {
                out.push_str(name);
                out.push_str(": ");
            }
            out.push_str(&render(insn, &names));
            out.push('\n');
        }
        out
    }
}

fn render(insn: &Instruction, names: &BTreeMap<usize, String>) -> String {
    match insn {
        Instruction::Mov { dst, src } => format!("mov {}, {}", dst, src),
        Instruction::Alu { op, dst, a, b } => {
            let mnem = match op {
                AluOp::Add => "add",
                AluOp::Sub => "sub",
                AluOp::Mul => "mul",
                AluOp::And => "and",
                AluOp::Shr => "shr",
            };
            format!("{} {}, {}, {}", mnem, dst, a, b)
        }
        Instruction::Setp { cond, dst, a, b } => {
            let c = match cond {
                Cond::Eq => "eq",
                Cond::Ne => "ne",
                Cond::Lt => "lt",
                Cond::Ge => "ge",
            };
            format!("setp.{} {}, {}, {}", c, dst, a, b)
        }
        Instruction::Bra { pred, target } => {
            format!("bra {}, {}", pred, names[target])
        }
        Instruction::LdGlobal { dst, addr, offset } => {
            if *offset == 0 {
                format!("ld.global {}, [{}]", dst, addr)
            } else {
                format!("ld.global {}, [{}+{}]", dst, addr, offset)
            }
        }
        Instruction::StGlobal { addr, offset, src } => {
            if *offset == 0 {
                format!("st.global [{}], {}", addr, src)
            } else {
                format!("st.global [{}+{}], {}", addr, offset, src)
            }
        }
        Instruction::BarSync => "bar.sync".to_string(),
        Instruction::Exit => "exit".to_string(),
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{}", r),
            Operand::Imm(v) => write!(f, "{}", v),
            Operand::Special(Special::Tid) => write!(f, "%tid"),
            Operand::Special(Special::Ctaid) => write!(f, "%ctaid"),
            Operand::Special(Special::Ntid) => write!(f, "%ntid"),
        }
    }
}

/// Kernel launch geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaunchConfig {
    pub grid_dim: (u32, u32, u32),
    pub block_dim: (u32, u32, u32),
}

impl LaunchConfig {
    pub fn new(grid_dim: (u32, u32, u32), block_dim: (u32, u32, u32)) -> Self {
        LaunchConfig {
            grid_dim,
            block_dim,
        }
    }

    /// 1-D launch helper.
    pub fn linear(blocks: u32, threads: u32) -> Self {
        LaunchConfig::new((blocks, 1, 1), (threads, 1, 1))
    }

    pub fn block_threads(&self) -> u32 {
        self.block_dim.0 * self.block_dim.1 * self.block_dim.2
    }

    pub fn grid_blocks(&self) -> u32 {
        self.grid_dim.0 * self.grid_dim.1 * self.grid_dim.2
    }

    pub fn total_threads(&self) -> u64 {
        self.block_threads() as u64 * self.grid_blocks() as u64
    }

    pub fn validate(&self, threads_per_sm: usize) -> Result<(), String> {
        if self.block_threads() == 0 || self.grid_blocks() == 0 {
            return Err("grid and block dimensions must be positive".into());
        }
        if self.block_threads() as usize > threads_per_sm {
            return Err(format!(
                "block has {} threads, exceeding the {}-thread SM limit",
                self.block_threads(),
                threads_per_sm
            ));
        }
        Ok(())
    }
}
