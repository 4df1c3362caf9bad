//! Counters collected during a simulation and the derived metrics reported
//! from them: coalescing rate, idle-cycle share, scalar IPC and SIMD
//! efficiency, plus CSV and SVG chart emission.

use std::fmt::Write as _;

use thiserror::Error;

use crate::machines::MachineConfig;

/// Cycle accounting for one SM. `total = busy + idle` exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SmCycles {
    pub total: u64,
    pub busy: u64,
    pub idle: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimStats {
    /// Machine cycles: the cycle at which the last SM finished.
    pub total_cycles: u64,
    pub per_sm: Vec<SmCycles>,
    pub issued_warp_instructions: u64,
    pub committed_scalar_instructions: u64,
    pub scalar_memory_instructions: u64,
    pub offchip_reads: u64,
    pub offchip_writes: u64,
    pub merged_reads: u64,
    /// Read transactions that hit / missed in L1 (writes are write-through
    /// no-allocate and are not counted here).
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub simd_slots_issued: u64,
    pub active_slots: u64,
    pub splits_created: u64,
}

impl SimStats {
    pub fn offchip_requests(&self) -> u64 {
        self.offchip_reads + self.offchip_writes
    }

    pub fn idle_cycles(&self) -> u64 {
        self.per_sm.iter().map(|s| s.idle).sum()
    }

    fn sm_cycles_sum(&self) -> u64 {
        self.per_sm.iter().map(|s| s.total).sum()
    }

    /// Off-chip requests per scalar memory instruction (lower is better);
    /// absent when the kernel performs no memory accesses.
    pub fn coalescing_rate(&self) -> Option<f64> {
        if self.scalar_memory_instructions == 0 {
            None
        } else {
            Some(self.offchip_requests() as f64 / self.scalar_memory_instructions as f64)
        }
    }

    /// Fraction of SM cycles with no warp issued, averaged over SMs
    /// (weighted by each SM's active lifetime).
    pub fn idle_share(&self) -> f64 {
        let total = self.sm_cycles_sum();
        if total == 0 {
            0.0
        } else {
            self.idle_cycles() as f64 / total as f64
        }
    }

    /// Idle share of one SM.
    pub fn idle_share_sm(&self, sm: usize) -> f64 {
        let c = &self.per_sm[sm];
        if c.total == 0 {
            0.0
        } else {
            c.idle as f64 / c.total as f64
        }
    }

    /// Committed scalar instructions per machine cycle.
    pub fn ipc(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.committed_scalar_instructions as f64 / self.total_cycles as f64
        }
    }

    /// Active lane slots over issued lane slots.
    pub fn simd_efficiency(&self) -> f64 {
        if self.simd_slots_issued == 0 {
            0.0
        } else {
            self.active_slots as f64 / self.simd_slots_issued as f64
        }
    }
}

/// One finished (or failed) simulation point.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub kernel: String,
    pub config: MachineConfig,
    pub stats: SimStats,
    pub error: Option<String>,
}

impl RunRecord {
    /// `machine-warpsize` identifier, e.g. `baseline-32`, used to select
    /// normalization targets.
    pub fn point_id(&self) -> String {
        format!("{}-{}", self.config.machine_label(), self.config.warp_size)
    }
}

pub const CSV_COLUMNS: &str = "kernel,machine,warp_size,simd_width,sm_count,total_cycles,\
idle_cycles,committed_scalar_insns,scalar_mem_insns,offchip_requests,offchip_reads,\
offchip_writes,merged_reads,l1_hits,l1_misses,simd_slots_issued,active_slots,splits_created,\
coalescing_rate,idle_share,ipc,simd_efficiency,error";

/// Renders runs as CSV with a fixed column order and deterministic formatting
/// (ratios to 6 decimal places). Counter columns round-trip exactly.
pub fn emit_csv(runs: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for r in runs {
        let s = &r.stats;
        let rate = s
            .coalescing_rate()
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
            r.kernel,
            r.config.machine_label(),
            r.config.warp_size,
            r.config.simd_width,
            r.config.sm_count,
            s.total_cycles,
            s.idle_cycles(),
            s.committed_scalar_instructions,
            s.scalar_memory_instructions,
            s.offchip_requests(),
            s.offchip_reads,
            s.offchip_writes,
            s.merged_reads,
            s.l1_hits,
            s.l1_misses,
            s.simd_slots_issued,
            s.active_slots,
            s.splits_created,
            rate,
            s.idle_share(),
            s.ipc(),
            s.simd_efficiency(),
            r.error.as_deref().unwrap_or(""),
        );
    }
    out
}

/// Metrics that can be charted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    CoalescingRate,
    IdleShare,
    Ipc,
    SimdEfficiency,
}

impl Metric {
    pub fn parse(name: &str) -> Option<Metric> {
        match name {
            "coalescing_rate" => Some(Metric::CoalescingRate),
            "idle_share" => Some(Metric::IdleShare),
            "ipc" => Some(Metric::Ipc),
            "simd_efficiency" => Some(Metric::SimdEfficiency),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::CoalescingRate => "coalescing_rate",
            Metric::IdleShare => "idle_share",
            Metric::Ipc => "ipc",
            Metric::SimdEfficiency => "simd_efficiency",
        }
    }

    fn value(&self, s: &SimStats) -> f64 {
        match self {
            Metric::CoalescingRate => s.coalescing_rate().unwrap_or(0.0),
            Metric::IdleShare => s.idle_share(),
            Metric::Ipc => s.ipc(),
            Metric::SimdEfficiency => s.simd_efficiency(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("no runs to chart")]
    Empty,
    #[error("normalization target `{0}` not present in kernel group `{1}`")]
    MissingTarget(String, String),
}

/// Emits a grouped bar chart as a static SVG: one group per kernel, one bar
/// per machine/warp-size point. When `normalize_to` names a point id (e.g.
/// `baseline-32`), every value is divided by that point's value within its
/// kernel group.
pub fn emit_chart(
    runs: &[RunRecord],
    metric: Metric,
    normalize_to: Option<&str>,
) -> Result<String, ChartError> {
    if runs.is_empty() {
        return Err(ChartError::Empty);
    }
    // Group by kernel, preserving first-seen order.
    let mut kernels: Vec<&str> = Vec::new();
    for r in runs {
        if !kernels.contains(&r.kernel.as_str()) {
            kernels.push(&r.kernel);
        }
    }
    let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for k in &kernels {
        let members: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.kernel == *k && r.error.is_none())
            .collect();
        let base = match normalize_to {
            Some(target) => {
                let t = members
                    .iter()
                    .find(|r| r.point_id() == target)
                    .ok_or_else(|| ChartError::MissingTarget(target.into(), k.to_string()))?;
                let v = metric.value(&t.stats);
                if v == 0.0 {
                    1.0
                } else {
                    v
                }
            }
            None => 1.0,
        };
        let bars = members
            .iter()
            .map(|r| (r.point_id(), metric.value(&r.stats) / base))
            .collect();
        groups.push((k.to_string(), bars));
    }

    let bar_w = 26.0f64;
    let gap = 8.0f64;
    let group_gap = 40.0f64;
    let plot_h = 260.0f64;
    let margin_l = 60.0f64;
    let margin_b = 70.0f64;
    let margin_t = 30.0f64;

    let max_val = groups
        .iter()
        .flat_map(|(_, bars)| bars.iter().map(|(_, v)| *v))
        .fold(0.0f64, f64::max)
        .max(1e-9);

    let mut x = margin_l;
    let mut bars_svg = String::new();
    let mut labels_svg = String::new();
    let palette = [
        "#4c78a8", "#f58518", "#e45756", "#72b7b2", "#54a24b", "#eeca3b", "#b279a2", "#9d755d",
    ];
    for (kernel, bars) in &groups {
        let group_start = x;
        for (i, (id, v)) in bars.iter().enumerate() {
            let h = v / max_val * plot_h;
            let y = margin_t + plot_h - h;
            let color = palette[i % palette.len()];
            let _ = write!(
                bars_svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{color}"><title>{kernel} {id}: {v:.6}</title></rect>"#
            );
            let _ = write!(
                labels_svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end" transform="rotate(-60 {:.1} {:.1})">{}</text>"#,
                x + bar_w / 2.0,
                margin_t + plot_h + 12.0,
                x + bar_w / 2.0,
                margin_t + plot_h + 12.0,
                id
            );
            x += bar_w + gap;
        }
        let center = (group_start + x - gap) / 2.0;
        let _ = write!(
            labels_svg,
            r#"<text x="{center:.1}" y="{:.1}" font-size="12" text-anchor="middle">{kernel}</text>"#,
            margin_t + plot_h + margin_b - 8.0
        );
        x += group_gap;
    }
    let width = x;
    let height = margin_t + plot_h + margin_b;
    let title = match normalize_to {
        Some(t) => format!("{} (normalized to {})", metric.name(), t),
        None => metric.name().to_string(),
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="100%" height="100%" fill="white"/><text x="{:.1}" y="18" font-size="13">{}</text>"#,
        margin_l, title
    );
    // y axis with a few ticks
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = margin_t + plot_h * (1.0 - frac);
        let v = max_val * frac;
        let _ = write!(
            svg,
            r##"<line x1="{margin_l:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{v:.3}</text>"##,
            width - 10.0,
            margin_l - 4.0,
            y + 3.0
        );
    }
    svg.push_str(&bars_svg);
    svg.push_str(&labels_svg);
    svg.push_str("</svg>");
    Ok(svg)
}
