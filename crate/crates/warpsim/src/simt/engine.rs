//! The cycle-level core model.
//!
//! Schedulable units are warps; on the split-warp machine running free, each
//! divergence fragment becomes its own unit, while in per-instruction pacing
//! the fragments stay in one unit and advance one instruction per round.
//! Instructions execute functionally at issue (the machine is evaluated on
//! race-free kernels); timing only decides when a warp may issue next.
//!
//! Cost model per issue: a SIMD warp occupies the issue stage for
//! `warp_size / simd_width` cycles regardless of how many lanes are active; a
//! split-warp fragment occupies `ceil(active / simd_width)`. ALU results are
//! ready `pipeline_depth` cycles after issue; a memory instruction is ready
//! when every coalesced transaction it produced has completed. Each warp has
//! at most one instruction in flight. A cycle where an SM issues nothing is
//! idle, so `total = busy + idle` per SM by construction.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use thiserror::Error;

use crate::kisa::{
    alu, compare, Cfg, Instruction, IpdomTable, LaunchConfig, MemImage, Program, ThreadState,
};
use crate::machines::{LwSyncMode, MachineConfig, MachineModel};
use crate::memsys::{
    coalesce_warp_access, CacheModel, DramModel, IssueOutcome, MemoryTransaction, RequestTable,
};
use crate::metrics::{SimStats, SmCycles};

use super::{form_warps, lane_mask};

const NO_RECONV: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("launch rejected: {0}")]
    Launch(String),
    #[error("cycle budget of {budget} exceeded")]
    CycleBudget { budget: u64 },
    #[error("thread {thread}: out-of-bounds memory access at 0x{addr:08x}")]
    Fault { thread: u64, addr: u32 },
    #[error("no schedulable warp and no pending event at cycle {cycle} (barrier deadlock?)")]
    Deadlock { cycle: u64 },
}

/// Result of a simulation: the metrics and the final memory image (compared
/// against the reference interpreter by the driver).
#[derive(Debug)]
pub struct SimOutcome {
    pub stats: SimStats,
    pub memory: MemImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GState {
    Runnable,
    InFlight,
    AtBarrier,
    Done,
}

/// A suspended execution context on the reconvergence stack.
struct ReconvEntry {
    reconv_pc: usize,
    pc: usize,
    mask: u64,
}

/// One executable lane bundle: the whole warp on SIMD machines, one
/// divergence fragment on the split-warp machine.
struct Group {
    state: GState,
    pc: usize,
    mask: u64,
    reconv_pc: usize,
    stack: Vec<ReconvEntry>,
    /// Outstanding memory transactions of the in-flight instruction.
    mem_pending: usize,
}

struct Unit {
    block_slot: usize,
    warp_base_tid: u32,
    warp_lanes: usize,
    groups: Vec<Group>,
    outstanding: usize,
}

impl Unit {
    fn has_runnable(&self) -> bool {
        self.outstanding == 0 && self.groups.iter().any(|g| g.state == GState::Runnable)
    }
}

/// A resident thread block.
struct BlockRt {
    ctaid: u32,
    threads: Vec<ThreadState>,
    unit_ids: Vec<usize>,
    live_groups: usize,
}

/// An off-chip transaction waiting for a request-table slot.
struct StalledTxn {
    segment: u32,
    is_write: bool,
    waiters: Vec<(usize, usize)>,
}

struct Sm {
    units: Vec<Unit>,
    rr: usize,
    busy_until: u64,
    busy: u64,
    finished: bool,
    finish_time: u64,
    pending_blocks: VecDeque<u32>,
    resident: Vec<Option<BlockRt>>,
    resident_threads: usize,
    l1: CacheModel,
    table: RequestTable,
    stalled: VecDeque<StalledTxn>,
}

enum EventKind {
    /// A non-memory instruction of (unit, group) leaves the pipeline.
    InsnDone { sm: usize, unit: usize, group: usize },
    /// `count` L1-hit transactions of (unit, group) complete.
    TxnDone { sm: usize, unit: usize, group: usize, count: usize },
    /// An off-chip request returns.
    ReqDone { sm: usize, segment: u32, is_write: bool, req_id: u64 },
    /// All warps of the block arrived; wake them.
    BarrierRelease { sm: usize, slot: usize },
}

struct Ev {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct Engine<'a> {
    p: &'a Program,
    cfg: &'a Cfg,
    ipdom: &'a IpdomTable,
    launch: &'a LaunchConfig,
    mc: &'a MachineConfig,
    mem: MemImage,
    sms: Vec<Sm>,
    dram: DramModel,
    events: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    next_req: u64,
    /// Groups waiting on each pending off-chip request, keyed by request id;
    /// read merges append to the host request's list.
    req_waiters: HashMap<u64, Vec<(usize, usize)>>,
    stats: SimStats,
    lockstep: bool,
}

/// Runs the program to completion on the configured machine. `mem0` is the
/// initial memory image; the returned image reflects all committed stores.
pub fn simulate(
    p: &Program,
    cfg: &Cfg,
    ipdom: &IpdomTable,
    launch: &LaunchConfig,
    mc: &MachineConfig,
    mem0: &MemImage,
) -> Result<SimOutcome, SimError> {
    launch.validate(mc.threads_per_sm).map_err(SimError::Launch)?;
    if mc.warp_size > 64 {
        return Err(SimError::Launch(format!(
            "warp size {} exceeds the 64-lane limit",
            mc.warp_size
        )));
    }
    if p.is_empty() {
        return Err(SimError::Launch("empty program".into()));
    }

    let lockstep =
        mc.model == MachineModel::LwPlus && mc.lw_sync_mode == LwSyncMode::PerInstruction;
    let mut sms: Vec<Sm> = (0..mc.sm_count)
        .map(|_| Sm {
            units: Vec::new(),
            rr: 0,
            busy_until: 0,
            busy: 0,
            finished: false,
            finish_time: 0,
            pending_blocks: VecDeque::new(),
            resident: (0..mc.max_ctas_per_sm).map(|_| None).collect(),
            resident_threads: 0,
            l1: CacheModel::new(mc.l1_size, mc.l1_ways, mc.l1_block),
            table: RequestTable::new(mc.request_scope, mc.request_table_capacity),
            stalled: VecDeque::new(),
        })
        .collect();
    for b in 0..launch.grid_blocks() {
        sms[b as usize % mc.sm_count].pending_blocks.push_back(b);
    }

    let engine = Engine {
        p,
        cfg,
        ipdom,
        launch,
        mc,
        mem: mem0.clone(),
        sms,
        dram: DramModel::new(mc.dram_controllers, mc.dram_latency, mc.dram_service_cycles),
        events: BinaryHeap::new(),
        seq: 0,
        next_req: 0,
        req_waiters: HashMap::new(),
        stats: SimStats::default(),
        lockstep,
    };
    engine.run()
}

impl Engine<'_> {
    fn run(mut self) -> Result<SimOutcome, SimError> {
        for s in 0..self.sms.len() {
            self.admit_blocks(s);
            self.check_sm_finished(s);
        }

        let mut t = 0u64;
        loop {
            while let Some(Reverse(ev)) = self.events.peek() {
                if ev.time > t {
                    break;
                }
                let Reverse(ev) = self.events.pop().unwrap();
                self.apply_event(ev.kind, ev.time);
            }

            for s in 0..self.sms.len() {
                if self.sms[s].finished || self.sms[s].busy_until > t {
                    continue;
                }
                if let Some(u) = self.pick_unit(s) {
                    let cost = self.issue_unit(s, u, t)?;
                    let sm = &mut self.sms[s];
                    sm.busy_until = t + cost;
                    sm.busy += cost;
                    sm.rr = (u + 1) % sm.units.len();
                    self.check_sm_finished(s);
                }
            }

            if self.sms.iter().all(|sm| sm.finished) {
                break;
            }

            let mut t2 = self
                .events
                .peek()
                .map(|Reverse(ev)| ev.time)
                .unwrap_or(u64::MAX);
            for s in 0..self.sms.len() {
                let sm = &self.sms[s];
                if !sm.finished && sm.busy_until > t && self.pick_unit(s).is_some() {
                    t2 = t2.min(sm.busy_until);
                }
            }
            if t2 == u64::MAX {
                return Err(SimError::Deadlock { cycle: t });
            }
            if t2 > self.mc.cycle_budget {
                return Err(SimError::CycleBudget {
                    budget: self.mc.cycle_budget,
                });
            }
            t = t2;
        }

        self.stats.total_cycles = self.sms.iter().map(|sm| sm.finish_time).max().unwrap_or(0);
        self.stats.per_sm = self
            .sms
            .iter()
            .map(|sm| SmCycles {
                total: sm.finish_time,
                busy: sm.busy,
                idle: sm.finish_time - sm.busy,
            })
            .collect();
        Ok(SimOutcome {
            stats: self.stats,
            memory: self.mem,
        })
    }

    fn push_event(&mut self, time: u64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse(Ev {
            time,
            seq: self.seq,
            kind,
        }));
    }

    /// Loose round-robin: first unit at or after the rotation pointer that
    /// has a runnable group and nothing in flight.
    fn pick_unit(&self, s: usize) -> Option<usize> {
        let sm = &self.sms[s];
        let n = sm.units.len();
        (0..n).map(|k| (sm.rr + k) % n).find(|&u| sm.units[u].has_runnable())
    }

    fn check_sm_finished(&mut self, s: usize) {
        let sm = &mut self.sms[s];
        if !sm.finished
            && sm.pending_blocks.is_empty()
            && sm.resident.iter().all(|b| b.is_none())
        {
            sm.finished = true;
            sm.finish_time = sm.busy_until;
        }
    }

    fn admit_blocks(&mut self, s: usize) {
        let block_threads = self.launch.block_threads() as usize;
        loop {
            let sm = &self.sms[s];
            if sm.pending_blocks.is_empty()
                || sm.resident_threads + block_threads > self.mc.threads_per_sm
            {
                return;
            }
            let Some(slot) = sm.resident.iter().position(|b| b.is_none()) else {
                return;
            };
            let ctaid = self.sms[s].pending_blocks.pop_front().unwrap();
            self.spawn_block(s, slot, ctaid);
        }
    }

    fn spawn_block(&mut self, s: usize, slot: usize, ctaid: u32) {
        let ntid = self.launch.block_threads();
        let threads: Vec<ThreadState> =
            (0..ntid).map(|tid| ThreadState::new(tid, ctaid, ntid)).collect();
        let warps = form_warps(ntid, self.mc.warp_size);
        let sm = &mut self.sms[s];
        let mut unit_ids = Vec::with_capacity(warps.len());
        for w in &warps {
            unit_ids.push(sm.units.len());
            sm.units.push(Unit {
                block_slot: slot,
                warp_base_tid: w.base_tid,
                warp_lanes: w.lanes,
                groups: vec![Group {
                    state: GState::Runnable,
                    pc: 0,
                    mask: lane_mask(w.lanes),
                    reconv_pc: NO_RECONV,
                    stack: Vec::new(),
                    mem_pending: 0,
                }],
                outstanding: 0,
            });
        }
        sm.resident_threads += ntid as usize;
        sm.resident[slot] = Some(BlockRt {
            ctaid,
            threads,
            live_groups: unit_ids.len(),
            unit_ids,
        });
    }

    /// Issues one instruction per runnable group of the unit and returns the
    /// number of cycles the issue stage is occupied.
    fn issue_unit(&mut self, s: usize, u: usize, t: u64) -> Result<u64, SimError> {
        let (slot, base_tid, warp_lanes) = {
            let unit = &self.sms[s].units[u];
            (unit.block_slot, unit.warp_base_tid, unit.warp_lanes)
        };
        let ntid = self.launch.block_threads();
        let depth = self.mc.pipeline_depth;
        let runnable: Vec<usize> = self.sms[s].units[u]
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.state == GState::Runnable)
            .map(|(i, _)| i)
            .collect();
        debug_assert!(!runnable.is_empty());

        let mut cost = 0u64;
        // Sibling fragments of a per-instruction-paced warp that execute the
        // same memory instruction in one round coalesce jointly.
        type Bucket = (usize, bool, Vec<(usize, u32)>, Vec<(usize, u64)>);
        let mut buckets: Vec<Bucket> = Vec::new();

        for &gi in &runnable {
            let (pc, mask) = {
                let g = &self.sms[s].units[u].groups[gi];
                (g.pc, g.mask)
            };
            let insn = self.p.instructions[pc];
            let active = mask.count_ones() as u64;

            self.stats.issued_warp_instructions += 1;
            self.stats.committed_scalar_instructions += active;
            self.stats.active_slots += active;
            if self.mc.model == MachineModel::LwPlus {
                let beats = (active as usize).div_ceil(self.mc.simd_width);
                self.stats.simd_slots_issued += (beats * self.mc.simd_width) as u64;
            } else {
                self.stats.simd_slots_issued += warp_lanes as u64;
            }
            cost += self.mc.issue_cost(active as usize);

            match insn {
                Instruction::Exit => {
                    self.sms[s].units[u].groups[gi].state = GState::Done;
                    let block = self.sms[s].resident[slot].as_mut().unwrap();
                    block.live_groups -= 1;
                }
                Instruction::BarSync => {
                    let g = &mut self.sms[s].units[u].groups[gi];
                    g.pc += 1;
                    pop_reconverged(g);
                    g.state = GState::AtBarrier;
                }
                Instruction::Bra { pred, target } => {
                    let taken = {
                        let block = self.sms[s].resident[slot].as_ref().unwrap();
                        let mut taken = 0u64;
                        for lane in 0..warp_lanes {
                            if mask & (1 << lane) != 0
                                && block.threads[(base_tid as usize) + lane].preds
                                    [pred.0 as usize]
                            {
                                taken |= 1 << lane;
                            }
                        }
                        taken
                    };
                    self.apply_branch(s, u, gi, slot, t, pc, target, taken, mask & !taken);
                }
                _ => {
                    if insn.is_memory() {
                        self.stats.scalar_memory_instructions += active;
                    }
                    let accesses = {
                        let this = &mut *self;
                        let block = this.sms[s].resident[slot].as_mut().unwrap();
                        exec_lanes(
                            insn,
                            mask,
                            warp_lanes,
                            base_tid,
                            block.ctaid,
                            ntid,
                            &mut block.threads,
                            &mut this.mem,
                        )?
                    };
                    {
                        let unit = &mut self.sms[s].units[u];
                        let g = &mut unit.groups[gi];
                        g.pc += 1;
                        pop_reconverged(g);
                        g.state = GState::InFlight;
                        g.mem_pending = 0;
                        unit.outstanding += 1;
                    }
                    match accesses {
                        None => self.push_event(
                            t + depth,
                            EventKind::InsnDone { sm: s, unit: u, group: gi },
                        ),
                        Some(acc) => {
                            let is_write = matches!(insn, Instruction::StGlobal { .. });
                            match buckets.iter_mut().find(|b| b.0 == pc && b.1 == is_write) {
                                Some(b) => {
                                    b.2.extend(acc);
                                    b.3.push((gi, mask));
                                }
                                None => buckets.push((pc, is_write, acc, vec![(gi, mask)])),
                            }
                        }
                    }
                }
            }
        }

        for (_, is_write, accesses, groups) in buckets {
            for txn in coalesce_warp_access(&accesses, is_write) {
                self.handle_txn(s, u, &txn, &groups, t);
            }
        }

        self.check_block(s, slot, t);
        Ok(cost.max(1))
    }

    /// Control transfer for one group: uniform branches just move the pc;
    /// a divergent branch either pushes both paths on the reconvergence
    /// stack (SIMD, taken path first) or splits off a new fragment (LW+).
    #[allow(clippy::too_many_arguments)]
    fn apply_branch(
        &mut self,
        s: usize,
        u: usize,
        gi: usize,
        slot: usize,
        t: u64,
        pc: usize,
        target: usize,
        taken: u64,
        fall: u64,
    ) {
        let depth = self.mc.pipeline_depth;
        if fall == 0 {
            self.sms[s].units[u].groups[gi].pc = target;
        } else if taken == 0 {
            self.sms[s].units[u].groups[gi].pc = pc + 1;
        } else if self.mc.model != MachineModel::LwPlus {
            let block = self.cfg.block_of[pc];
            let rblock = self
                .ipdom
                .of(block)
                .expect("diverging branch block has a reconvergence point");
            let rpc = self.cfg.blocks[rblock].start;
            let g = &mut self.sms[s].units[u].groups[gi];
            g.stack.push(ReconvEntry {
                reconv_pc: g.reconv_pc,
                pc: rpc,
                mask: g.mask,
            });
            g.stack.push(ReconvEntry {
                reconv_pc: rpc,
                pc: pc + 1,
                mask: fall,
            });
            g.reconv_pc = rpc;
            g.pc = target;
            g.mask = taken;
        } else {
            // Split: the issuing fragment follows the taken path, a new
            // fragment takes the fall-through, and they never re-merge.
            self.stats.splits_created += 1;
            {
                let g = &mut self.sms[s].units[u].groups[gi];
                g.pc = target;
                g.mask = taken;
            }
            let child = |state| Group {
                state,
                pc: pc + 1,
                mask: fall,
                reconv_pc: NO_RECONV,
                stack: Vec::new(),
                mem_pending: 0,
            };
            let sm = &mut self.sms[s];
            sm.resident[slot].as_mut().unwrap().live_groups += 1;
            if self.lockstep {
                // Joins its siblings' rounds once the parent's branch (which
                // it logically executed) completes.
                sm.units[u].groups.push(child(GState::Runnable));
            } else {
                let (base, lanes) = (sm.units[u].warp_base_tid, sm.units[u].warp_lanes);
                let nu = sm.units.len();
                sm.units.push(Unit {
                    block_slot: slot,
                    warp_base_tid: base,
                    warp_lanes: lanes,
                    groups: vec![child(GState::InFlight)],
                    outstanding: 1,
                });
                sm.resident[slot].as_mut().unwrap().unit_ids.push(nu);
                self.push_event(t + depth, EventKind::InsnDone { sm: s, unit: nu, group: 0 });
            }
        }
        pop_reconverged(&mut self.sms[s].units[u].groups[gi]);
        self.sms[s].units[u].groups[gi].state = GState::InFlight;
        self.sms[s].units[u].outstanding += 1;
        self.push_event(t + depth, EventKind::InsnDone { sm: s, unit: u, group: gi });
    }

    /// Routes one coalesced transaction: L1 for reads, write-through for
    /// writes, pending-read merge or off-chip request otherwise. `groups`
    /// lists (group index, lane mask) of every fragment in the bucket.
    fn handle_txn(
        &mut self,
        s: usize,
        u: usize,
        txn: &MemoryTransaction,
        groups: &[(usize, u64)],
        t: u64,
    ) {
        let parts: Vec<usize> = groups
            .iter()
            .filter(|(_, m)| m & txn.lanes_served != 0)
            .map(|&(gi, _)| gi)
            .collect();
        debug_assert!(!parts.is_empty());

        if txn.is_write {
            self.stats.offchip_writes += 1;
            let sm = &mut self.sms[s];
            // Write-through, no-allocate: update the line if present.
            if sm.l1.probe(txn.segment_addr) {
                sm.l1.access(txn.segment_addr);
            }
            self.dispatch_offchip(s, u, txn.segment_addr, true, &parts, t);
            return;
        }

        if self.sms[s].l1.access(txn.segment_addr) {
            self.stats.l1_hits += 1;
            for &gi in &parts {
                self.sms[s].units[u].groups[gi].mem_pending += 1;
                self.push_event(t + 1, EventKind::TxnDone { sm: s, unit: u, group: gi, count: 1 });
            }
            return;
        }
        self.stats.l1_misses += 1;
        match self.sms[s].table.classify(txn) {
            IssueOutcome::MergedIntoPending(req) => {
                self.stats.merged_reads += 1;
                let waiters = self.req_waiters.get_mut(&req).expect("pending request");
                for &gi in &parts {
                    self.sms[s].units[u].groups[gi].mem_pending += 1;
                    waiters.push((u, gi));
                }
            }
            IssueOutcome::NewOffchip => {
                self.stats.offchip_reads += 1;
                self.dispatch_offchip(s, u, txn.segment_addr, false, &parts, t);
            }
        }
    }

    /// Sends an off-chip request now if a request-table slot is free, else
    /// queues it until one opens up.
    fn dispatch_offchip(
        &mut self,
        s: usize,
        u: usize,
        segment: u32,
        is_write: bool,
        parts: &[usize],
        t: u64,
    ) {
        for &gi in parts {
            self.sms[s].units[u].groups[gi].mem_pending += 1;
        }
        let waiters: Vec<(usize, usize)> = parts.iter().map(|&gi| (u, gi)).collect();
        if self.sms[s].table.free_slots() > 0 {
            self.send_request(s, segment, is_write, waiters, t);
        } else {
            self.sms[s].stalled.push_back(StalledTxn {
                segment,
                is_write,
                waiters,
            });
        }
    }

    fn send_request(
        &mut self,
        s: usize,
        segment: u32,
        is_write: bool,
        waiters: Vec<(usize, usize)>,
        t: u64,
    ) {
        self.next_req += 1;
        let req_id = self.next_req;
        self.sms[s].table.insert(
            &MemoryTransaction {
                segment_addr: segment,
                is_write,
                lanes_served: 0,
            },
            req_id,
        );
        let completion = self.dram.enqueue(segment, t);
        self.req_waiters.insert(req_id, waiters);
        self.push_event(
            completion,
            EventKind::ReqDone { sm: s, segment, is_write, req_id },
        );
    }

    fn apply_event(&mut self, kind: EventKind, now: u64) {
        match kind {
            EventKind::InsnDone { sm, unit, group } => {
                let un = &mut self.sms[sm].units[unit];
                un.groups[group].state = GState::Runnable;
                un.outstanding -= 1;
            }
            EventKind::TxnDone { sm, unit, group, count } => {
                self.txn_complete(sm, unit, group, count);
            }
            EventKind::ReqDone { sm, segment, is_write, req_id } => {
                self.sms[sm].table.complete(segment, is_write, req_id);
                if !is_write {
                    self.sms[sm].l1.fill(segment);
                }
                for (u, gi) in self.req_waiters.remove(&req_id).unwrap_or_default() {
                    self.txn_complete(sm, u, gi, 1);
                }
                while self.sms[sm].table.free_slots() > 0 {
                    let Some(st) = self.sms[sm].stalled.pop_front() else {
                        break;
                    };
                    self.send_request(sm, st.segment, st.is_write, st.waiters, now);
                }
            }
            EventKind::BarrierRelease { sm, slot } => {
                let unit_ids = self.sms[sm].resident[slot]
                    .as_ref()
                    .expect("block still resident at barrier release")
                    .unit_ids
                    .clone();
                for ui in unit_ids {
                    for g in &mut self.sms[sm].units[ui].groups {
                        if g.state == GState::AtBarrier {
                            g.state = GState::Runnable;
                        }
                    }
                }
            }
        }
    }

    fn txn_complete(&mut self, s: usize, u: usize, gi: usize, count: usize) {
        let un = &mut self.sms[s].units[u];
        un.groups[gi].mem_pending -= count;
        if un.groups[gi].mem_pending == 0 {
            un.groups[gi].state = GState::Runnable;
            un.outstanding -= 1;
        }
    }

    /// Post-issue block bookkeeping: retire a drained block (and admit the
    /// next), or trigger the barrier once every live group has arrived.
    fn check_block(&mut self, s: usize, slot: usize, t: u64) {
        let live = self.sms[s].resident[slot].as_ref().unwrap().live_groups;
        if live == 0 {
            let block = self.sms[s].resident[slot].take().unwrap();
            self.sms[s].resident_threads -= block.threads.len();
            self.admit_blocks(s);
            return;
        }
        let sm = &self.sms[s];
        let block = sm.resident[slot].as_ref().unwrap();
        let mut any_waiting = false;
        for &ui in &block.unit_ids {
            for g in &sm.units[ui].groups {
                match g.state {
                    GState::Runnable | GState::InFlight => return,
                    GState::AtBarrier => any_waiting = true,
                    GState::Done => {}
                }
            }
        }
        if any_waiting {
            self.push_event(
                t + self.mc.pipeline_depth,
                EventKind::BarrierRelease { sm: s, slot },
            );
        }
    }
}

/// Restores suspended contexts whose reconvergence point the current path
/// has reached.
fn pop_reconverged(g: &mut Group) {
    while g.pc == g.reconv_pc {
        let e = g.stack.pop().expect("reconvergence stack underflow");
        g.reconv_pc = e.reconv_pc;
        g.pc = e.pc;
        g.mask = e.mask;
    }
}

/// Executes one data instruction functionally for every active lane and, for
/// memory instructions, returns the per-lane addresses.
#[allow(clippy::too_many_arguments)]
fn exec_lanes(
    insn: Instruction,
    mask: u64,
    lanes: usize,
    base_tid: u32,
    ctaid: u32,
    ntid: u32,
    threads: &mut [ThreadState],
    mem: &mut MemImage,
) -> Result<Option<Vec<(usize, u32)>>, SimError> {
    let mut accesses = Vec::new();
    for lane in 0..lanes {
        if mask & (1 << lane) == 0 {
            continue;
        }
        let tid = base_tid + lane as u32;
        let st = &mut threads[tid as usize];
        let fault = |addr| SimError::Fault {
            thread: ctaid as u64 * ntid as u64 + tid as u64,
            addr,
        };
        match insn {
            Instruction::Mov { dst, src } => st.regs[dst.0 as usize] = st.operand(src),
            Instruction::Alu { op, dst, a, b } => {
                let (av, bv) = (st.regs[a.0 as usize], st.operand(b));
                st.regs[dst.0 as usize] = alu(op, av, bv);
            }
            Instruction::Setp { cond, dst, a, b } => {
                let (av, bv) = (st.regs[a.0 as usize], st.operand(b));
                st.preds[dst.0 as usize] = compare(cond, av, bv);
            }
            Instruction::LdGlobal { dst, addr, offset } => {
                let a = st.regs[addr.0 as usize].wrapping_add(offset as u32);
                match mem.load_u32(a) {
                    Some(v) => st.regs[dst.0 as usize] = v,
                    None => return Err(fault(a)),
                }
                accesses.push((lane, a));
            }
            Instruction::StGlobal { addr, offset, src } => {
                let a = st.regs[addr.0 as usize].wrapping_add(offset as u32);
                let v = st.regs[src.0 as usize];
                if mem.store_u32(a, v).is_none() {
                    return Err(fault(a));
                }
                accesses.push((lane, a));
            }
            Instruction::Bra { .. } | Instruction::BarSync | Instruction::Exit => {
                unreachable!("control instructions are handled at the issue site")
            }
        }
    }
    Ok(insn.is_memory().then_some(accesses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kisa::{build_cfg, compute_ipdom, parse_program, reference_execute};
    use crate::machines::{configure_machine, ConfigOverrides, MachineModel};

    fn run_on(
        src: &str,
        launch: LaunchConfig,
        mc: &MachineConfig,
        init: impl FnOnce(&mut MemImage),
    ) -> SimOutcome {
        let p = parse_program(src).unwrap();
        let cfg = build_cfg(&p).unwrap();
        let ipdom = compute_ipdom(&cfg).unwrap();
        let mut mem = MemImage::new(mc.mem_size);
        init(&mut mem);
        simulate(&p, &cfg, &ipdom, &launch, mc, &mem).unwrap()
    }

    fn one_sm(model: MachineModel, more: ConfigOverrides) -> MachineConfig {
        configure_machine(
            model,
            &ConfigOverrides {
                sm_count: Some(1),
                mem_size: Some(1 << 20),
                ..more
            },
        )
        .unwrap()
    }

    fn check_against_reference(src: &str, launch: LaunchConfig, mc: &MachineConfig) -> SimOutcome {
        let p = parse_program(src).unwrap();
        let cfg = build_cfg(&p).unwrap();
        let ipdom = compute_ipdom(&cfg).unwrap();
        let mem = MemImage::new(mc.mem_size);
        let out = simulate(&p, &cfg, &ipdom, &launch, mc, &mem).unwrap();
        let reference = reference_execute(&p, &launch, &mem, 1_000_000).unwrap();
        assert!(out.memory == reference.memory, "final memory diverges");
        assert_eq!(
            out.stats.committed_scalar_instructions,
            reference.insn_counts.iter().sum::<u64>(),
            "committed instruction count diverges"
        );
        out
    }

    const ALU3: &str = "mov r0, 1\nadd r0, r0, 1\nexit";

    #[test]
    fn single_warp_alu_timing() {
        // Dependent chain: issue at 0, 24, 48; the exit's issue slot ends the
        // SM at 52. Busy 3 * 4 = 12 cycles; the rest is idle.
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(ALU3, LaunchConfig::linear(1, 32), &mc, |_| {});
        let s = &out.stats;
        assert_eq!(s.total_cycles, 52);
        assert_eq!(s.per_sm[0], SmCycles { total: 52, busy: 12, idle: 40 });
        assert_eq!(s.committed_scalar_instructions, 3 * 32);
        assert_eq!(s.issued_warp_instructions, 3);
        assert_eq!(s.simd_slots_issued, 3 * 32);
    }

    #[test]
    fn two_warps_hide_pipeline_latency() {
        // Round-robin interleaves the second warp into the first warp's
        // pipeline bubbles: issues at 0/4, 24/28, 48/52.
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(ALU3, LaunchConfig::linear(1, 64), &mc, |_| {});
        assert_eq!(out.stats.total_cycles, 56);
        assert_eq!(out.stats.per_sm[0].busy, 24);
        assert_eq!(out.stats.per_sm[0].idle, 32);
    }

    #[test]
    fn partial_warp_issues_populated_lanes() {
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(ALU3, LaunchConfig::linear(1, 20), &mc, |_| {});
        assert_eq!(out.stats.committed_scalar_instructions, 3 * 20);
        assert_eq!(out.stats.simd_slots_issued, 3 * 20);
        // Issue cost is paid for the full warp width regardless.
        assert_eq!(out.stats.per_sm[0].busy, 12);
    }

    const COPY: &str = "\
mov r0, %tid
mul r0, r0, 4
mov r1, r0
add r1, r1, 0x1000
ld.global r2, [r1]
mov r3, r0
add r3, r3, 0x2000
st.global [r3], r2
exit";

    #[test]
    fn memory_round_trip_timing() {
        // One warp of 32: the load coalesces into two segments on distinct
        // controllers (completion 96 + 4 + 400), the store likewise from
        // cycle 548. Exit issues at 952.
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(COPY, LaunchConfig::linear(1, 32), &mc, |mem| {
            for i in 0..32u32 {
                mem.store_u32(0x1000 + 4 * i, 7 + i).unwrap();
            }
        });
        let s = &out.stats;
        assert_eq!(s.offchip_reads, 2);
        assert_eq!(s.offchip_writes, 2);
        assert_eq!(s.l1_misses, 2);
        assert_eq!(s.l1_hits, 0);
        assert_eq!(s.scalar_memory_instructions, 64);
        assert_eq!(s.total_cycles, 956);
        assert_eq!(s.per_sm[0].busy, 9 * 4);
        for i in 0..32u32 {
            assert_eq!(out.memory.load_u32(0x2000 + 4 * i).unwrap(), 7 + i);
        }
    }

    #[test]
    fn second_load_hits_after_fill() {
        let src = "\
mov r0, %tid
mul r0, r0, 4
add r0, r0, 0x1000
ld.global r1, [r0]
ld.global r2, [r0]
exit";
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(src, LaunchConfig::linear(1, 32), &mc, |_| {});
        assert_eq!(out.stats.offchip_reads, 2);
        assert_eq!(out.stats.l1_misses, 2);
        assert_eq!(out.stats.l1_hits, 2);
    }

    #[test]
    fn divergent_branch_reconverges() {
        // Even lanes add 1, odd lanes fall through; all reconverge and store.
        let src = "\
mov r0, %tid
mov r2, %tid
and r1, r0, 1
setp.eq p0, r1, 0
bra p0, EVEN
mul r2, r2, 3
setp.eq p1, r0, r0
bra p1, JOIN
EVEN: add r2, r2, 1
JOIN: mul r0, r0, 4
add r0, r0, 0x2000
st.global [r0], r2
exit";
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = check_against_reference(src, LaunchConfig::linear(1, 32), &mc);
        assert_eq!(out.stats.splits_created, 0);
        // Divergence costs lane slots: efficiency strictly below 1.
        let eff = out.stats.simd_efficiency();
        assert!(eff < 1.0 && eff > 0.5, "efficiency {eff}");
        for i in 0..32u32 {
            let expect = if i % 2 == 0 { i + 1 } else { i * 3 };
            assert_eq!(out.memory.load_u32(0x2000 + 4 * i).unwrap(), expect);
        }
    }

    const SPLIT: &str = "\
mov r0, %tid
setp.lt p0, r0, 32
bra p0, SKIP
add r1, r0, 1
SKIP: add r2, r0, 2
exit";

    #[test]
    fn lw_free_running_splits_once_per_divergence() {
        let mc = one_sm(
            MachineModel::LwPlus,
            ConfigOverrides {
                lw_sync_mode: Some(LwSyncMode::FreeRunning),
                ..Default::default()
            },
        );
        assert_eq!(mc.warp_size, 64);
        let out = check_against_reference(SPLIT, LaunchConfig::linear(1, 64), &mc);
        assert_eq!(out.stats.splits_created, 1);
        // MIMD fragments issue only their active lanes: full efficiency here.
        assert_eq!(out.stats.simd_efficiency(), 1.0);
    }

    #[test]
    fn lw_per_instruction_paces_fragments_together() {
        let mc = one_sm(MachineModel::LwPlus, ConfigOverrides::default());
        let out = check_against_reference(SPLIT, LaunchConfig::linear(1, 64), &mc);
        assert_eq!(out.stats.splits_created, 1);
        assert_eq!(out.stats.simd_efficiency(), 1.0);
    }

    #[test]
    fn sw_plus_merges_cross_warp_broadcast() {
        // Two 8-wide warps read the same word; the second read merges into
        // the first's pending request instead of going off-chip.
        let src = "mov r0, 0x1000\nld.global r1, [r0]\nexit";
        let mc = one_sm(MachineModel::SwPlus, ConfigOverrides::default());
        assert_eq!(mc.warp_size, 8);
        let out = run_on(src, LaunchConfig::linear(1, 16), &mc, |_| {});
        let s = &out.stats;
        assert_eq!(s.l1_misses, 2);
        assert_eq!(s.offchip_reads, 1);
        assert_eq!(s.merged_reads, 1);
        assert_eq!(s.offchip_reads, s.l1_misses - s.merged_reads);
        assert_eq!(s.total_cycles, 430);
    }

    #[test]
    fn baseline_never_merges_across_warps() {
        let src = "mov r0, 0x1000\nld.global r1, [r0]\nexit";
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on(src, LaunchConfig::linear(1, 64), &mc, |_| {});
        assert_eq!(out.stats.offchip_reads, 2);
        assert_eq!(out.stats.merged_reads, 0);
    }

    #[test]
    fn barrier_releases_whole_block() {
        // Two warps arrive at cycles 0 and 4; release fires at 4 + 24, the
        // exits issue back to back after it.
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = run_on("bar.sync\nexit", LaunchConfig::linear(1, 64), &mc, |_| {});
        assert_eq!(out.stats.total_cycles, 36);
        assert_eq!(out.stats.committed_scalar_instructions, 2 * 64);
    }

    #[test]
    fn request_table_throttles_but_drains() {
        // A 16-lane scatter needs 16 off-chip requests against a 4-entry
        // table; the overflow queues and completes, two service slots at a
        // time per controller pass.
        let src = "\
mov r0, %tid
mul r0, r0, 64
add r0, r0, 0x1000
ld.global r1, [r0]
exit";
        let mc = one_sm(
            MachineModel::Baseline,
            ConfigOverrides {
                warp_size: Some(16),
                request_table_capacity: Some(Some(4)),
                ..Default::default()
            },
        );
        let out = run_on(src, LaunchConfig::linear(1, 16), &mc, |_| {});
        assert_eq!(out.stats.offchip_reads, 16);
        assert_eq!(out.stats.l1_misses, 16);
        // More than one DRAM round trip: the tail waited for table slots.
        assert!(out.stats.total_cycles > 880, "cycles {}", out.stats.total_cycles);
    }

    #[test]
    fn blocks_rotate_through_residency_limits() {
        // 16 blocks of 128 threads on one SM: at most 8 resident at a time
        // (1024-thread cap), so completion requires re-admission.
        let src = "\
mov r0, %ctaid
mov r2, %ntid
mul r0, r0, r2
mov r2, %tid
add r0, r0, r2
mov r1, r0
mul r0, r0, 4
add r0, r0, 0x1000
st.global [r0], r1
exit";
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let out = check_against_reference(src, LaunchConfig::linear(16, 128), &mc);
        for gid in 0..(16 * 128u32) {
            assert_eq!(out.memory.load_u32(0x1000 + 4 * gid).unwrap(), gid);
        }
    }

    #[test]
    fn multiple_sms_split_the_grid() {
        let mc = configure_machine(
            MachineModel::Baseline,
            &ConfigOverrides {
                sm_count: Some(4),
                mem_size: Some(1 << 20),
                ..Default::default()
            },
        )
        .unwrap();
        let out = run_on(ALU3, LaunchConfig::linear(4, 32), &mc, |_| {});
        // Every SM got one block and finishes independently at cycle 52.
        assert_eq!(out.stats.total_cycles, 52);
        for sm in &out.stats.per_sm {
            assert_eq!(sm.total, 52);
            assert_eq!(sm.total, sm.busy + sm.idle);
        }
    }

    #[test]
    fn cycle_budget_enforced() {
        let p = parse_program(ALU3).unwrap();
        let cfg = build_cfg(&p).unwrap();
        let ipdom = compute_ipdom(&cfg).unwrap();
        let mc = one_sm(
            MachineModel::Baseline,
            ConfigOverrides {
                cycle_budget: Some(10),
                ..Default::default()
            },
        );
        let mem = MemImage::new(mc.mem_size);
        let err = simulate(&p, &cfg, &ipdom, &LaunchConfig::linear(1, 32), &mc, &mem).unwrap_err();
        assert!(matches!(err, SimError::CycleBudget { budget: 10 }));
    }

    #[test]
    fn faulting_access_reports_thread() {
        let bad = "mov r0, 0xFFFFFF00\nld.global r1, [r0]\nexit";
        let p = parse_program(bad).unwrap();
        let cfg = build_cfg(&p).unwrap();
        let ipdom = compute_ipdom(&cfg).unwrap();
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let mem = MemImage::new(mc.mem_size);
        let err = simulate(&p, &cfg, &ipdom, &LaunchConfig::linear(1, 8), &mc, &mem).unwrap_err();
        assert!(matches!(err, SimError::Fault { thread: 0, .. }));
    }

    #[test]
    fn deterministic_across_runs() {
        let mc = one_sm(MachineModel::Baseline, ConfigOverrides::default());
        let a = run_on(COPY, LaunchConfig::linear(2, 96), &mc, |_| {});
        let b = run_on(COPY, LaunchConfig::linear(2, 96), &mc, |_| {});
        assert_eq!(a.stats, b.stats);
        assert!(a.memory == b.memory);
    }
}
