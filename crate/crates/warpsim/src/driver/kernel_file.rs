//! Run directives embedded in `.kisa` files.
//!
//! Lines starting with `#!` are comments to the instruction parser but carry
//! launch metadata for the driver, so a kernel file is self-contained:
//!
//! ```text
//! #! name random_gather_n1024
//! #! grid 1 1024
//! #! init 0x100000 17 4 923 ...
//! ```
//!
//! `grid` gives blocks and threads-per-block; each `init` stores consecutive
//! 32-bit words starting at the (hex or decimal) address.

use thiserror::Error;

use crate::kisa::{LaunchConfig, MemImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelFileError {
    #[error("line {line}: malformed directive: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("init at 0x{addr:08x} falls outside the {size}-byte memory image")]
    InitOutOfBounds { addr: u32, size: usize },
}

/// Driver-level metadata extracted from a kernel file. The instruction text
/// itself is parsed separately by [`crate::kisa::parse_program`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KernelFile {
    pub name: Option<String>,
    pub launch: Option<LaunchConfig>,
    pub inits: Vec<(u32, Vec<u32>)>,
}

impl KernelFile {
    /// Writes all `init` words into the memory image.
    pub fn apply_inits(&self, mem: &mut MemImage) -> Result<(), KernelFileError> {
        for (addr, words) in &self.inits {
            for (i, &w) in words.iter().enumerate() {
                let a = addr + 4 * i as u32;
                mem.store_u32(a, w).ok_or(KernelFileError::InitOutOfBounds {
                    addr: a,
                    size: mem.len(),
                })?;
            }
        }
        Ok(())
    }
}

fn parse_word(s: &str) -> Option<u32> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

pub fn parse_kernel_text(text: &str) -> Result<KernelFile, KernelFileError> {
    let mut kf = KernelFile::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let Some(rest) = raw.trim_start().strip_prefix("#!") else {
            continue;
        };
        let mut parts = rest.split_whitespace();
        let malformed = |msg: &str| KernelFileError::Malformed {
            line,
            msg: msg.into(),
        };
        match parts.next() {
            Some("name") => {
                kf.name = Some(
                    parts
                        .next()
                        .ok_or_else(|| malformed("expected a kernel name"))?
                        .to_string(),
                );
            }
            Some("grid") => {
                let blocks: u32 = parts
                    .next()
                    .and_then(parse_word)
                    .ok_or_else(|| malformed("expected block count"))?;
                let threads: u32 = parts
                    .next()
                    .and_then(parse_word)
                    .ok_or_else(|| malformed("expected threads per block"))?;
                if blocks == 0 || threads == 0 {
                    return Err(malformed("grid dimensions must be positive"));
                }
                kf.launch = Some(LaunchConfig::linear(blocks, threads));
            }
            Some("init") => {
                let addr = parts
                    .next()
                    .and_then(parse_word)
                    .ok_or_else(|| malformed("expected an address"))?;
                if addr % 4 != 0 {
                    return Err(malformed("init address must be word-aligned"));
                }
                let words: Option<Vec<u32>> = parts.map(parse_word).collect();
                let words = words.ok_or_else(|| malformed("expected 32-bit words"))?;
                if words.is_empty() {
                    return Err(malformed("init carries no words"));
                }
                kf.inits.push((addr, words));
            }
            Some(other) => return Err(malformed(&format!("unknown directive `{other}`"))),
            None => return Err(malformed("empty directive")),
        }
    }
    Ok(kf)
}
