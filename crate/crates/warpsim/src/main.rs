//! Command line front end: simulate kernels (`run`, `sweep`), generate them
//! (`gen`), and inspect them (`ipdom`, `oracle`).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use warpsim::driver::{
    generate, parse_config, parse_kernel_text, parse_machine_label, run, sweep, KernelClass,
    RunSpec, SweepSpec,
};
use warpsim::kisa::{
    build_cfg, compute_ipdom, parse_program, reference_execute, LaunchConfig, MemImage,
    DEFAULT_STEP_BUDGET,
};
use warpsim::machines::ConfigOverrides;
use warpsim::metrics::{emit_chart, emit_csv, Metric};

#[derive(Parser)]
#[command(name = "warpsim", version, about = "Cycle-level SIMT core simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one kernel on one machine point and print a CSV row.
    Run {
        /// Kernel file (.kisa) with `#!` launch directives.
        #[arg(long)]
        kernel: PathBuf,
        /// Optional key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Machine point: baseline[-W], sw+, lw+pi, lw+fr.
        #[arg(long, default_value = "baseline")]
        machine: String,
        #[arg(long)]
        warp_size: Option<usize>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip checking the result against the reference interpreter.
        #[arg(long)]
        no_verify: bool,
    },
    /// Cross kernels with machine points from a sweep spec; write CSV and
    /// optionally an SVG chart.
    Sweep {
        /// Sweep spec: kernels=..., machines=..., plus overrides.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Chart a metric, e.g. `ipc` or `ipc:baseline-32` to normalize.
        #[arg(long)]
        chart: Option<String>,
        /// Where to write the chart SVG (defaults next to --out).
        #[arg(long)]
        chart_out: Option<PathBuf>,
        #[arg(long)]
        no_verify: bool,
    },
    /// Generate a kernel of the given class.
    Gen {
        /// One of: unit_stride_copy, broadcast_read, random_gather,
        /// divergent_tree, compute_loop, mixed.
        #[arg(long)]
        class: String,
        /// Total threads for the data-parallel classes.
        #[arg(long, default_value_t = 1024)]
        n: u32,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 64)]
        iters: u32,
        /// Total threads for divergent_tree / compute_loop.
        #[arg(long, default_value_t = 1024)]
        threads: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print basic blocks, successors and reconvergence points of a kernel.
    Ipdom {
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Run the sequential reference interpreter and report per-thread counts.
    Oracle {
        #[arg(long)]
        kernel: PathBuf,
        /// Dump this many output words starting at --dump-addr.
        #[arg(long, default_value_t = 0)]
        dump_words: u32,
        #[arg(long, value_parser = parse_hex, default_value = "0x200000")]
        dump_addr: u32,
    },
}

fn parse_hex(s: &str) -> Result<u32, String> {
    let t = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u32::from_str_radix(t, 16).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn write_or_print(out: Option<PathBuf>, contents: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(&path, contents)
            .map_err(|e| format!("writing {}: {e}", path.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))
}

fn dispatch(cmd: Cmd) -> Result<(), String> {
    match cmd {
        Cmd::Run {
            kernel,
            config,
            machine,
            warp_size,
            out,
            no_verify,
        } => {
            let text = read(&kernel)?;
            let (mut file_model, mut overrides) = (None, ConfigOverrides::default());
            if let Some(cfg_path) = config {
                let fc = parse_config(&read(&cfg_path)?).map_err(|e| e.to_string())?;
                file_model = fc.machine;
                overrides = fc.overrides;
            }
            // --machine wins over the config file except when it was left at
            // its default and the file names one.
            let model = if machine == "baseline" && file_model.is_some() {
                file_model.unwrap()
            } else {
                let (m, warp, mode) = parse_machine_label(&machine)?;
                if warp.is_some() {
                    overrides.warp_size = warp;
                }
                if mode.is_some() {
                    overrides.lw_sync_mode = mode;
                }
                m
            };
            if warp_size.is_some() {
                overrides.warp_size = warp_size;
            }
            let record = run(&RunSpec {
                kernel_name: None,
                kernel_text: text,
                model,
                overrides,
                launch: None,
                verify: !no_verify,
            })
            .map_err(|e| e.to_string())?;
            write_or_print(out, &emit_csv(&[record]))
        }
        Cmd::Sweep {
            spec,
            out,
            chart,
            chart_out,
            no_verify,
        } => {
            let spec_dir = spec.parent().map(PathBuf::from).unwrap_or_default();
            let fc = parse_config(&read(&spec)?).map_err(|e| e.to_string())?;
            if fc.kernels.is_empty() || fc.machines.is_empty() {
                return Err("sweep spec needs `kernels = ...` and `machines = ...`".into());
            }
            let mut kernels = Vec::new();
            for k in &fc.kernels {
                let path = spec_dir.join(k);
                kernels.push((None, read(&path)?));
            }
            let rows = sweep(&SweepSpec {
                kernels,
                machines: fc.machines.clone(),
                overrides: fc.overrides.clone(),
                verify: !no_verify,
            })
            .map_err(|e| e.to_string())?;
            write_or_print(out.clone(), &emit_csv(&rows))?;
            if let Some(chart_spec) = chart {
                let (metric_name, normalize) = match chart_spec.split_once(':') {
                    Some((m, n)) => (m, Some(n)),
                    None => (chart_spec.as_str(), None),
                };
                let metric = Metric::parse(metric_name)
                    .ok_or_else(|| format!("unknown metric `{metric_name}`"))?;
                let svg = emit_chart(&rows, metric, normalize).map_err(|e| e.to_string())?;
                let target = chart_out
                    .or_else(|| out.map(|p| p.with_extension("svg")))
                    .ok_or("need --chart-out (or --out) to place the chart")?;
                write_or_print(Some(target), &svg)?;
            }
            Ok(())
        }
        Cmd::Gen {
            class,
            n,
            depth,
            iters,
            threads,
            seed,
            out,
        } => {
            let class = match class.as_str() {
                "unit_stride_copy" => KernelClass::UnitStrideCopy { n },
                "broadcast_read" => KernelClass::BroadcastRead { n },
                "random_gather" => KernelClass::RandomGather { n, seed },
                "divergent_tree" => KernelClass::DivergentTree { depth, threads },
                "compute_loop" => KernelClass::ComputeLoop { iters, threads },
                "mixed" => KernelClass::Mixed { n, seed },
                other => {
                    return Err(format!(
                        "unknown class `{other}` (expected one of {})",
                        KernelClass::NAMES.join(", ")
                    ))
                }
            };
            let k = generate(&class).map_err(|e| e.to_string())?;
            write_or_print(Some(out), &k.text)
        }
        Cmd::Ipdom { kernel } => {
            let p = parse_program(&read(&kernel)?).map_err(|e| e.to_string())?;
            let cfg = build_cfg(&p).map_err(|e| e.to_string())?;
            let ipdom = compute_ipdom(&cfg).map_err(|e| e.to_string())?;
            let mut report = String::new();
            for (b, blk) in cfg.blocks.iter().enumerate() {
                use std::fmt::Write as _;
                let _ = writeln!(
                    report,
                    "block {b}: insns [{}, {}) succ {:?} reconverges at {}",
                    blk.start,
                    blk.end,
                    cfg.succ[b],
                    ipdom
                        .of(b)
                        .map(|r| format!("block {r}"))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            print!("{report}");
            Ok(())
        }
        Cmd::Oracle {
            kernel,
            dump_words,
            dump_addr,
        } => {
            let text = read(&kernel)?;
            let p = parse_program(&text).map_err(|e| e.to_string())?;
            let kf = parse_kernel_text(&text).map_err(|e| e.to_string())?;
            let launch = kf
                .launch
                .unwrap_or_else(|| LaunchConfig::linear(1, 32));
            let mut mem = MemImage::default();
            kf.apply_inits(&mut mem).map_err(|e| e.to_string())?;
            let run = reference_execute(&p, &launch, &mem, DEFAULT_STEP_BUDGET)
                .map_err(|e| e.to_string())?;
            let total: u64 = run.insn_counts.iter().sum();
            let min = run.insn_counts.iter().min().unwrap();
            let max = run.insn_counts.iter().max().unwrap();
            println!(
                "threads {} scalar_insns {} per_thread_min {} per_thread_max {}",
                run.insn_counts.len(),
                total,
                min,
                max
            );
            for i in 0..dump_words {
                let addr = dump_addr + 4 * i;
                println!(
                    "0x{addr:08x}: {}",
                    run.memory
                        .load_u32(addr)
                        .map(|w| w.to_string())
                        .unwrap_or_else(|| "<oob>".into())
                );
            }
            Ok(())
        }
    }
}
