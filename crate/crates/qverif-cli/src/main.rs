use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qverif::bench::{generate, self_check, BenchName, BenchmarkId, Mutant};
use qverif::dsl::{parse_program, parse_spec, write_program, write_spec};
use qverif::encoder::Mode;
use qverif::qpm::ProgramModel;
use qverif::sim::{run_trace, Enumeration};
use qverif::solver::{describe_qubit, render_script, verify, Outcome, Report, SolverConfig};
use qverif::spec::{assemble_query, SpecFormula, StructuralRule, DEFAULT_EPSILON};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qverif", version, about = "Symbolic verification of quantum circuits with a δ-complete solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a program against its specification.
    Verify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        solve: SolveOpts,
        /// Also write the SMT-LIB2 query to this path.
        #[arg(long)]
        dump_smt: Option<PathBuf>,
        /// Write the JSON report to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the dense simulator on the benchmark inputs or random samples.
    Simulate {
        #[command(flatten)]
        input: Input,
        /// Random inputs for programs with continuous input spaces.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print every branch's final state for this basis input.
        #[arg(long)]
        basis: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write the query without solving it.
    DumpSmt {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long)]
        box_keep_eq1: bool,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Output path; standard output when absent.
        #[arg(long, short = 'o')]
        dump_smt: Option<PathBuf>,
        /// Also write the program and specification as .qpm/.qspec files
        /// with this path prefix.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Verify a list of benchmarks and tabulate the results.
    Bench {
        /// Benchmarks such as `tp`, `qft-3`, `gdo-5`; the standard suite by default.
        #[arg(long = "bench", value_name = "NAME")]
        benches: Vec<String>,
        #[arg(long)]
        mutate: Option<String>,
        #[command(flatten)]
        solve: SolveOpts,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    /// Built-in benchmark, optionally sized: `tp`, `toffoli`, `add-3`, `qft-4`, `qpe-3`, `gdo-5`.
    #[arg(long, conflicts_with_all = ["program", "spec"])]
    bench: Option<String>,
    /// Fault injection for a benchmark: drop-cz, drop-cx, drop-x, sign-flip.
    #[arg(long, requires = "bench")]
    mutate: Option<String>,
    /// Circuit in the .qpm format.
    #[arg(requires = "spec")]
    program: Option<PathBuf>,
    /// Specification in the .qspec format.
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct SolveOpts {
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Solver executable; the bundled `deltasat` by default.
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Extra argument passed to the solver before `--precision`.
    #[arg(long = "solver-arg", value_name = "ARG", allow_hyphen_values = true)]
    solver_args: Vec<String>,
    /// Seconds per solver call.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    /// Keep the unit-sphere equality in box mode.
    #[arg(long)]
    box_keep_eq1: bool,
    /// Margin for strict comparisons in the negated specification.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Box,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Box => Mode::Box,
        }
    }
}

struct Loaded {
    label: String,
    model: ProgramModel,
    spec: SpecFormula,
    rules: Vec<StructuralRule>,
    bench: Option<qverif::bench::Benchmark>,
}

fn parse_bench(s: &str) -> Result<BenchmarkId, String> {
    let (name, n) = match s.rsplit_once('-') {
        Some((name, n)) => (name, Some(n.parse::<usize>().map_err(|_| format!("bad size in `{s}`"))?)),
        None => (s, None),
    };
    let name: BenchName = name.parse().map_err(|e: qverif::bench::BenchError| e.to_string())?;
    Ok(BenchmarkId::new(name, n))
}

fn load_bench(name: &str, mutate: Option<&str>) -> Result<Loaded, String> {
    let id = parse_bench(name)?;
    let mutant = mutate.map(str::parse::<Mutant>).transpose()?;
    let b = generate(id, mutant).map_err(|e| e.to_string())?;
    let label = match mutant {
        Some(m) => format!("{}+{}", b.id.label(), m.as_str()),
        None => b.id.label(),
    };
    Ok(Loaded { label, model: b.model.clone(), spec: b.spec.clone(), rules: b.rules.clone(), bench: Some(b) })
}

fn load(input: &Input) -> Result<Loaded, String> {
    if let Some(name) = &input.bench {
        return load_bench(name, input.mutate.as_deref());
    }
    let (Some(prog), Some(spec)) = (&input.program, &input.spec) else {
        return Err("give --bench NAME or PROGRAM.qpm SPEC.qspec".into());
    };
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let model = parse_program(&read(prog)?).map_err(|e| format!("{}: {e}", prog.display()))?;
    let s = parse_spec(&read(spec)?).map_err(|e| format!("{}: {e}", spec.display()))?;
    Ok(Loaded { label: prog.display().to_string(), model, spec: s.formula, rules: s.rules, bench: None })
}

/// The `deltasat` next to this executable, else whatever is on PATH.
fn default_solver() -> PathBuf {
    let name = format!("deltasat{}", std::env::consts::EXE_SUFFIX);
    std::env::current_exe()
        .ok()
        .and_then(|exe| exe.parent().map(|d| d.join(&name)))
        .filter(|p| p.exists())
        .unwrap_or_else(|| PathBuf::from(name))
}

fn config(o: &SolveOpts) -> Result<SolverConfig, String> {
    if !(o.delta > 0.0) {
        return Err("--delta must be positive".into());
    }
    if !(o.timeout > 0.0) {
        return Err("--timeout must be positive".into());
    }
    Ok(SolverConfig {
        solver_path: o.solver.clone().unwrap_or_else(default_solver),
        delta: o.delta,
        timeout: Some(o.timeout),
        mode: o.mode.into(),
        extra_flags: o.solver_args.clone(),
        box_keep_eq1: o.box_keep_eq1,
        epsilon: o.epsilon,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(path: &Option<PathBuf>, v: &impl serde::Serialize) -> Result<(), String> {
    match path {
        Some(p) => write_file(p, &(serde_json::to_string_pretty(v).expect("serializable") + "\n")),
        None => Ok(()),
    }
}

fn print_report(label: &str, r: &Report) {
    let verdict = |o: Outcome| match o {
        Outcome::Verified => "verified",
        Outcome::Refuted => "refuted",
        Outcome::Spurious => "spurious (box witness off the unit sphere)",
        Outcome::Timeout => "timeout",
    };
    println!("{label}: {} [{:?}, δ = {:e}, {} ms]", verdict(r.verdict), r.mode, r.delta, r.wall_time_ms);
    if let Some(c) = &r.counterexample {
        for q in &c.inputs {
            println!("  {}", describe_qubit(q));
        }
        for (k, v) in &c.params {
            println!("  {k} = {v}");
        }
    }
    if let Some(m) = r.replay_margin {
        println!("  simulator replay margin {m:.6}");
    }
    if let Some(rerun) = &r.rerun {
        print_report(&format!("{label} (exact re-run)"), rerun);
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Cmd::Verify { input, solve, dump_smt, json } => {
            let l = load(&input)?;
            let cfg = config(&solve)?;
            if let Some(path) = &dump_smt {
                let q = assemble_query(&l.model, &l.spec, &l.rules, &cfg.encode_options(), cfg.epsilon)
                    .map_err(|e| e.to_string())?;
                write_file(path, &render_script(&q).map_err(|e| e.to_string())?)?;
            }
            let report = verify(&l.model, &l.spec, &l.rules, &cfg).map_err(|e| e.to_string())?;
            print_report(&l.label, &report);
            write_json(&json, &report)?;
            Ok(report.exit_code() as u8)
        }
        Cmd::Simulate { input, samples, seed, basis, json } => {
            let l = load(&input)?;
            if let Some(x) = basis {
                if x >= 1 << l.model.n_qubits {
                    return Err(format!("basis input {x} needs more than {} qubits", l.model.n_qubits));
                }
                let bits = qverif::sim::index_bits(l.model.n_qubits, x);
                let st = qverif::sim::input_state(&l.model, &|q| {
                    let one = bits[q] == 1;
                    let (a, b) = if one { (0.0, 1.0) } else { (1.0, 0.0) };
                    (num_complex::Complex64::new(a, 0.0), num_complex::Complex64::new(b, 0.0))
                });
                let params = l.bench.as_ref().map(|b| b.sample_params.clone()).unwrap_or_default();
                for label in qverif::qpm::branch_labels(&l.model) {
                    match run_trace(&l.model, &st, &label, &params) {
                        Ok(t) => {
                            let fin = t.states.last().expect("initial state");
                            let amps: Vec<String> =
                                fin.amps.iter().map(|a| format!("{:+.6}{:+.6}i", a.re, a.im)).collect();
                            let name = if label.is_empty() { "-" } else { &label };
                            println!("branch {name} p={:.6}: [{}]", t.probability, amps.join(", "));
                        }
                        Err(e) => println!("branch {label}: {e}"),
                    }
                }
            }
            let result = match &l.bench {
                Some(b) => self_check(b, samples, seed),
                None => qverif::sim::sample_verify(&l.model, &l.spec, &Default::default(), samples, seed),
            }
            .map_err(|e| e.to_string())?;
            let (pass, v) = match result {
                Enumeration::Pass { inputs } => {
                    println!("{}: pass on {inputs} inputs", l.label);
                    (true, json!({"verdict": "pass", "inputs": inputs}))
                }
                Enumeration::Fail { input, robustness } => {
                    println!("{}: fail on input {input} (robustness {robustness:.6})", l.label);
                    (false, json!({"verdict": "fail", "input": input, "robustness": robustness}))
                }
            };
            write_json(&json, &v)?;
            Ok(if pass { 0 } else { 1 })
        }
        Cmd::DumpSmt { input, mode, box_keep_eq1, epsilon, dump_smt, export } => {
            let l = load(&input)?;
            let cfg = SolverConfig { mode: mode.into(), box_keep_eq1, epsilon, ..Default::default() };
            let q = assemble_query(&l.model, &l.spec, &l.rules, &cfg.encode_options(), cfg.epsilon)
                .map_err(|e| e.to_string())?;
            let script = render_script(&q).map_err(|e| e.to_string())?;
            match &dump_smt {
                Some(p) => write_file(p, &script)?,
                None => print!("{script}"),
            }
            if let Some(prefix) = export {
                let base = prefix.display().to_string();
                write_file(Path::new(&format!("{base}.qpm")), &write_program(&l.model))?;
                write_file(Path::new(&format!("{base}.qspec")), &write_spec(&l.spec, &l.rules))?;
            }
            Ok(0)
        }
        Cmd::Bench { benches, mutate, solve, json } => {
            let cfg = config(&solve)?;
            let names = if benches.is_empty() {
                ["toffoli", "tp", "qft-2", "qft-3", "qpe-3", "gdo-3", "gdo-5"].map(String::from).to_vec()
            } else {
                benches
            };
            let mut rows = Vec::new();
            let mut worst = 0u8;
            println!("{:<16} {:<10} {:>10}", "benchmark", "verdict", "time (ms)");
            for name in &names {
                let l = load_bench(name, mutate.as_deref())?;
                let report = verify(&l.model, &l.spec, &l.rules, &cfg).map_err(|e| e.to_string())?;
                let total = report.wall_time_ms + report.rerun.as_ref().map_or(0, |r| r.wall_time_ms);
                let fv = report.final_verdict();
                println!("{:<16} {:<10} {:>10}", l.label, serde_json::to_value(fv).unwrap().as_str().unwrap(), total);
                worst = worst.max(report.exit_code() as u8);
                rows.push(json!({"benchmark": l.label, "report": report}));
            }
            write_json(&json, &rows)?;
            Ok(worst)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qverif: {e}");
            ExitCode::from(2)
        }
    }
}
