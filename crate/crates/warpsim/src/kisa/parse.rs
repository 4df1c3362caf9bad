//! Line-oriented parser for the `.kisa` kernel text format.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{AluOp, Cond, Instruction, Operand, Pred, Program, Reg, Special, NUM_PREDS, NUM_REGS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}, col {col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, col {col}: unknown opcode `{opcode}`")]
    UnknownOpcode {
        line: usize,
        col: usize,
        opcode: String,
    },
    #[error("line {line}, col {col}: undefined label `{label}`")]
    UndefinedLabel {
        line: usize,
        col: usize,
        label: String,
    },
    #[error("line {line}, col {col}: register id out of range: `{reg}`")]
    RegisterRange { line: usize, col: usize, reg: String },
    #[error("line {line}, col {col}: immediate does not fit in signed 32 bits: `{text}`")]
    ImmRange { line: usize, col: usize, text: String },
    #[error("program contains no instructions")]
    Empty,
}

struct Cursor<'a> {
    text: &'a str,
    line: usize,
    pos: usize, // byte offset within the line
}

impl<'a> Cursor<'a> {
    fn col(&self) -> usize {
        self.pos + 1
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.rest().is_empty()
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        }
    }

    /// Consumes one token: an identifier-ish word, a number, or a single
    /// punctuation character.
    fn token(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let mut chars = rest.char_indices();
        let (_, first) = chars.next()?;
        if is_word_char(first) {
            let end = rest
                .char_indices()
                .find(|&(_, c)| !is_word_char(c))
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            self.pos += end;
            Some(&rest[..end])
        } else {
            self.pos += first.len_utf8();
            Some(&rest[..first.len_utf8()])
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        self.skip_ws();
        let col = self.col();
        match self.token() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                line: self.line,
                col,
                msg: format!("expected `{}`, found `{}`", tok, t),
            }),
            None => Err(ParseError::Syntax {
                line: self.line,
                col,
                msg: format!("expected `{}`, found end of line", tok),
            }),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '%' || c == '.' || c == '-'
}

/// Parses kernel text into a [`Program`]. Labels are resolved to instruction
/// indices; every error carries its line and column.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut instructions = Vec::new();
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    // (line, col, label, index of the Bra placeholder)
    let mut fixups: Vec<(usize, usize, String, usize)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor {
            text: line,
            line: lineno + 1,
            pos: 0,
        };
        // Optional leading `label:`.
        cur.skip_ws();
        let word_start = cur.pos;
        let first = cur.token().ok_or_else(|| cur.syntax("expected opcode"))?;
        cur.skip_ws();
        if cur.rest().starts_with(':') {
            cur.pos += 1;
            if !is_label(first) {
                return Err(ParseError::Syntax {
                    line: cur.line,
                    col: word_start + 1,
                    msg: format!("invalid label `{}`", first),
                });
            }
            labels.insert(first.to_string(), instructions.len());
            if cur.at_end() {
                continue; // label-only line binds to the next instruction
            }
            let opcode_col = cur.col();
            let opcode = cur.token().ok_or_else(|| cur.syntax("expected opcode"))?;
            let insn = parse_instruction(&mut cur, opcode, opcode_col, &mut fixups)?;
            push_insn(&mut cur, &mut instructions, insn, &mut fixups)?;
        } else {
            let insn = parse_instruction(&mut cur, first, word_start + 1, &mut fixups)?;
            push_insn(&mut cur, &mut instructions, insn, &mut fixups)?;
        }
    }

    if instructions.is_empty() {
        return Err(ParseError::Empty);
    }

    // Resolve branch targets.
    for (line, col, label, idx) in fixups {
        match labels.get(&label) {
            Some(&target) if target < instructions.len() => {
                if let Instruction::Bra { target: t, .. } = &mut instructions[idx] {
                    *t = target;
                }
            }
            _ => {
                return Err(ParseError::UndefinedLabel { line, col, label });
            }
        }
    }

    Ok(Program {
        instructions,
        labels,
    })
}

fn push_insn(
    cur: &mut Cursor,
    instructions: &mut Vec<Instruction>,
    insn: Instruction,
    fixups: &mut [(usize, usize, String, usize)],
) -> Result<(), ParseError> {
    if !cur.at_end() {
        return Err(cur.syntax("trailing characters after instruction"));
    }
    if insn.is_branch() {
        // The fixup recorded by parse_instruction belongs to this slot.
        fixups.last_mut().expect("bra records a fixup").3 = instructions.len();
    }
    instructions.push(insn);
    Ok(())
}

fn is_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_alphabetic()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_instruction(
    cur: &mut Cursor,
    opcode: &str,
    opcode_col: usize,
    fixups: &mut Vec<(usize, usize, String, usize)>,
) -> Result<Instruction, ParseError> {
    let mut alu = |op| parse_alu(cur, op);
    match opcode {
        "mov" => {
            let dst = parse_reg(cur)?;
            cur.expect(",")?;
            let src = parse_operand(cur)?;
            Ok(Instruction::Mov { dst, src })
        }
        "add" => alu(AluOp::Add),
        "sub" => alu(AluOp::Sub),
        "mul" => alu(AluOp::Mul),
        "and" => alu(AluOp::And),
        "shr" => alu(AluOp::Shr),
        "setp.eq" | "setp.ne" | "setp.lt" | "setp.ge" => {
            let cond = match &opcode[5..] {
                "eq" => Cond::Eq,
                "ne" => Cond::Ne,
                "lt" => Cond::Lt,
                _ => Cond::Ge,
            };
            let dst = parse_pred(cur)?;
            cur.expect(",")?;
            let a = parse_reg(cur)?;
            cur.expect(",")?;
            let b = parse_operand(cur)?;
            if matches!(b, Operand::Special(_)) {
                return Err(cur.syntax("specials are not valid setp operands"));
            }
            Ok(Instruction::Setp { cond, dst, a, b })
        }
        "bra" => {
            let pred = parse_pred(cur)?;
            cur.expect(",")?;
            cur.skip_ws();
            let col = cur.col();
            let label = cur
                .token()
                .ok_or_else(|| cur.syntax("expected branch label"))?;
            if !is_label(label) {
                return Err(ParseError::Syntax {
                    line: cur.line,
                    col,
                    msg: format!("invalid label `{}`", label),
                });
            }
            // Target patched after all labels are known; the instruction
            // index slot is filled in by push_insn.
            fixups.push((cur.line, col, label.to_string(), usize::MAX));
            Ok(Instruction::Bra { pred, target: 0 })
        }
        "ld.global" => {
            let dst = parse_reg(cur)?;
            cur.expect(",")?;
            let (addr, offset) = parse_mem_operand(cur)?;
            Ok(Instruction::LdGlobal { dst, addr, offset })
        }
        "st.global" => {
            let (addr, offset) = parse_mem_operand(cur)?;
            cur.expect(",")?;
            let src = parse_reg(cur)?;
            Ok(Instruction::StGlobal { addr, offset, src })
        }
        "bar.sync" => Ok(Instruction::BarSync),
        "exit" => Ok(Instruction::Exit),
        other => Err(ParseError::UnknownOpcode {
            line: cur.line,
            col: opcode_col,
            opcode: other.to_string(),
        }),
    }
}

fn parse_alu(cur: &mut Cursor, op: AluOp) -> Result<Instruction, ParseError> {
    let dst = parse_reg(cur)?;
    cur.expect(",")?;
    let a = parse_reg(cur)?;
    cur.expect(",")?;
    let b = parse_operand(cur)?;
    if matches!(b, Operand::Special(_)) {
        return Err(cur.syntax("specials are not valid ALU second operands"));
    }
    Ok(Instruction::Alu { op, dst, a, b })
}

fn parse_reg(cur: &mut Cursor) -> Result<Reg, ParseError> {
    cur.skip_ws();
    let col = cur.col();
    let tok = cur
        .token()
        .ok_or_else(|| cur.syntax("expected register"))?;
    reg_from(tok).ok_or(ParseError::RegisterRange {
        line: cur.line,
        col,
        reg: tok.to_string(),
    })
}

fn reg_from(tok: &str) -> Option<Reg> {
    let num = tok.strip_prefix('r')?;
    let id: u8 = num.parse().ok()?;
    (id < NUM_REGS && num == id.to_string()).then_some(Reg(id))
}

fn parse_pred(cur: &mut Cursor) -> Result<Pred, ParseError> {
    cur.skip_ws();
    let col = cur.col();
    let tok = cur
        .token()
        .ok_or_else(|| cur.syntax("expected predicate register"))?;
    let id = tok
        .strip_prefix('p')
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|&id| id < NUM_PREDS);
    id.map(Pred).ok_or(ParseError::RegisterRange {
        line: cur.line,
        col,
        reg: tok.to_string(),
    })
}

fn parse_operand(cur: &mut Cursor) -> Result<Operand, ParseError> {
    cur.skip_ws();
    let col = cur.col();
    let tok = cur.token().ok_or_else(|| cur.syntax("expected operand"))?;
    if let Some(r) = reg_from(tok) {
        return Ok(Operand::Reg(r));
    }
    match tok {
        "%tid" => return Ok(Operand::Special(Special::Tid)),
        "%ctaid" => return Ok(Operand::Special(Special::Ctaid)),
        "%ntid" => return Ok(Operand::Special(Special::Ntid)),
        _ => {}
    }
    parse_imm(cur, tok, col).map(Operand::Imm)
}

fn parse_imm(cur: &Cursor, tok: &str, col: usize) -> Result<i32, ParseError> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let parsed: Option<i64> = if let Some(hex) = body.strip_prefix("0x").or(body.strip_prefix("0X"))
    {
        i64::from_str_radix(hex, 16).ok()
    } else if body.chars().all(|c| c.is_ascii_digit()) && !body.is_empty() {
        body.parse().ok()
    } else {
        return Err(ParseError::Syntax {
            line: cur.line,
            col,
            msg: format!("expected operand, found `{}`", tok),
        });
    };
    let v = parsed.map(|v| if neg { -v } else { v });
    match v {
        Some(v) if v >= i64::from(i32::MIN) && v <= i64::from(u32::MAX) => {
            // Allow unsigned hex constants up to u32::MAX; they wrap into i32.
            Ok(v as u32 as i32)
        }
        _ => Err(ParseError::ImmRange {
            line: cur.line,
            col,
            text: tok.to_string(),
        }),
    }
}

fn parse_mem_operand(cur: &mut Cursor) -> Result<(Reg, i32), ParseError> {
    cur.expect("[")?;
    let addr = parse_reg(cur)?;
    cur.skip_ws();
    let mut offset = 0;
    if cur.rest().starts_with('+') {
        cur.pos += 1;
        cur.skip_ws();
        let col = cur.col();
        let tok = cur
            .token()
            .ok_or_else(|| cur.syntax("expected offset immediate"))?;
        offset = parse_imm(cur, tok, col)?;
    }
    cur.expect("]")?;
    Ok((addr, offset))
}
