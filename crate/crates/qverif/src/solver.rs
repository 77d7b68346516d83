//! Script emission, the external solver subprocess, and verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncodeOptions, Encoding, GroupRep, Mode, SymbolTable};
use crate::expr::Constraint;
use crate::qpm::{ProgramModel, Valuation};
use crate::sim::{input_state, violation_margin, CheckError};
use crate::spec::{assemble_query, Query, SpecError, SpecFormula, StructuralRule, DEFAULT_EPSILON};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver `{path}` could not be started: {reason}")]
    Unavailable { path: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("variable {0} appears in the query but is not declared")]
    Undeclared(String),
    #[error("model has no value for {0}")]
    MissingSymbol(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("solver failed: {0}")]
    Failed(String),
    #[error("counterexample replay: {0}")]
    Replay(#[from] CheckError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub solver_path: PathBuf,
    pub delta: f64,
    /// Seconds; `None` waits indefinitely.
    pub timeout: Option<f64>,
    pub mode: Mode,
    pub extra_flags: Vec<String>,
    pub box_keep_eq1: bool,
    /// Margin for strict atoms of the negated specification.
    pub epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            solver_path: PathBuf::from("deltasat"),
            delta: 1e-4,
            timeout: Some(600.0),
            mode: Mode::Exact,
            extra_flags: Vec::new(),
            box_keep_eq1: false,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SolverConfig {
    pub fn encode_options(&self) -> EncodeOptions {
        let mut o = EncodeOptions::with_mode(self.mode);
        o.box_keep_eq1 = self.box_keep_eq1;
        o
    }
}

/// Interval model: every declared variable to `[lo, hi]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Model(pub BTreeMap<String, (f64, f64)>);

impl Model {
    pub fn midpoint(&self, name: &str) -> Option<f64> {
        self.0.get(name).map(|(lo, hi)| if lo == hi { *lo } else { 0.5 * lo + 0.5 * hi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Unsat,
    DeltaSat(Model),
    Timeout,
    SolverError(String),
}

/// The SMT-LIB2 script of a query: one comment per encoding section.
pub fn render_script(q: &Query) -> Result<String, SolverError> {
    render_sections(
        &q.encoding,
        &[("negated specification", q.negated_spec.conjuncts())],
        &format!("mode {}, epsilon {}", mode_name(q.encoding.options.mode), q.epsilon),
    )
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exact => "exact",
        Mode::Box => "box",
    }
}

pub fn render_sections(e: &Encoding, extra: &[(&str, Vec<Constraint>)], header: &str) -> Result<String, SolverError> {
    let declared: BTreeSet<&str> = e.decls.iter().map(String::as_str).collect();
    let mut out = String::new();
    let _ = writeln!(out, "; {header}");
    out.push_str("(set-logic QF_NRA)\n");
    for d in &e.decls {
        let _ = writeln!(out, "(declare-fun {d} () Real)");
    }
    let sections = e
        .sections
        .iter()
        .map(|s| (s.name.as_str(), s.constraints.iter().flat_map(Constraint::conjuncts).collect::<Vec<_>>()))
        .chain(extra.iter().map(|(n, cs)| (*n, cs.clone())));
    for (name, conjuncts) in sections {
        let _ = writeln!(out, "; {name}");
        for c in conjuncts {
            if let Some(v) = c.vars().into_iter().find(|v| !declared.contains(v.as_str())) {
                return Err(SolverError::Undeclared(v));
            }
            if c == Constraint::True {
                continue;
            }
            out.push_str("(assert ");
            c.write_smt(&mut out);
            out.push_str(")\n");
        }
    }
    out.push_str("(check-sat)\n(exit)\n");
    Ok(out)
}

/// `solver --version`, first line.
pub fn solver_version(cfg: &SolverConfig) -> Result<String, SolverError> {
    let out = Command::new(&cfg.solver_path).arg("--version").output().map_err(|e| SolverError::Unavailable {
        path: cfg.solver_path.display().to_string(),
        reason: e.to_string(),
    })?;
    if !out.status.success() {
        return Err(SolverError::Unavailable {
            path: cfg.solver_path.display().to_string(),
            reason: format!("--version exited with {}", out.status),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").trim().to_string())
}

/// Writes the script to a temporary file and runs the solver on it.
pub fn run_script(script: &str, cfg: &SolverConfig) -> Result<Verdict, SolverError> {
    let mut file = tempfile::Builder::new().prefix("qverif-").suffix(".smt2").tempfile()?;
    std::io::Write::write_all(&mut file, script.as_bytes())?;
    let mut child = Command::new(&cfg.solver_path)
        .args(&cfg.extra_flags)
        .arg("--precision")
        .arg(format!("{:e}", cfg.delta))
        .arg(file.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SolverError::Unavailable { path: cfg.solver_path.display().to_string(), reason: e.to_string() })?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let deadline = cfg.timeout.map(|t| Instant::now() + Duration::from_secs_f64(t));
    let status = loop {
        if let Some(st) = child.try_wait()? {
            break Some(st);
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    let Some(status) = status else {
        return Ok(Verdict::Timeout);
    };
    let verdict = parse_output(&out);
    if !status.success() && !matches!(verdict, Verdict::Unsat | Verdict::DeltaSat(_)) {
        return Ok(Verdict::SolverError(format!("exit {status}: {}", err.trim())));
    }
    Ok(verdict)
}

/// Parses dReal-style output (`unsat`, `delta-sat with delta = …` plus
/// `name : [lo, hi]` lines) or a plain `sat` followed by `(define-fun …)`.
pub fn parse_output(out: &str) -> Verdict {
    let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
    let Some(first) = lines.next() else {
        return Verdict::SolverError("empty solver output".into());
    };
    if first == "unsat" {
        return Verdict::Unsat;
    }
    if first == "unknown" || first == "timeout" {
        return Verdict::Timeout;
    }
    if !(first.starts_with("delta-sat") || first == "sat") {
        return Verdict::SolverError(format!("unexpected solver output: {first}"));
    }
    let mut model = Model::default();
    let rest: Vec<&str> = lines.collect();
    for line in &rest {
        if let Some((name, value)) = line.split_once(" : ") {
            match parse_interval(value.trim()) {
                Some(iv) => {
                    model.0.insert(name.trim().to_string(), iv);
                }
                None => return Verdict::SolverError(format!("bad model line: {line}")),
            }
        }
    }
    if model.0.is_empty() {
        for (name, v) in parse_define_funs(&rest.join(" ")) {
            model.0.insert(name, (v, v));
        }
    }
    Verdict::DeltaSat(model)
}

fn parse_interval(s: &str) -> Option<(f64, f64)> {
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let (lo, hi) = inner.split_once(',')?;
        let parse = |x: &str| -> Option<f64> {
            match x.trim() {
                "-inf" | "-INFTY" => Some(f64::NEG_INFINITY),
                "inf" | "INFTY" | "+inf" => Some(f64::INFINITY),
                t => t.parse().ok(),
            }
        };
        return Some((parse(lo)?, parse(hi)?));
    }
    let v: f64 = s.parse().ok()?;
    Some((v, v))
}

/// `(define-fun x () Real v)` where v is a decimal, `(- v)` or `(/ a b)`.
fn parse_define_funs(text: &str) -> Vec<(String, f64)> {
    let tokens: Vec<String> = text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(String::from).collect();
    fn value(t: &[String], i: &mut usize) -> Option<f64> {
        if t.get(*i)? != "(" {
            let v = t[*i].parse().ok();
            *i += 1;
            return v;
        }
        *i += 1;
        let op = t.get(*i)?.clone();
        *i += 1;
        let mut args = Vec::new();
        while t.get(*i)? != ")" {
            args.push(value(t, i)?);
        }
        *i += 1;
        match (op.as_str(), args.as_slice()) {
            ("-", [a]) => Some(-a),
            ("-", [a, b]) => Some(a - b),
            ("/", [a, b]) => Some(a / b),
            _ => None,
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i + 5 < tokens.len() {
        if tokens[i] == "define-fun" && tokens[i + 2] == "(" && tokens[i + 3] == ")" {
            let name = tokens[i + 1].clone();
            let mut j = i + 5;
            if let Some(v) = value(&tokens, &mut j) {
                out.push((name, v));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// One qubit block read from a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitValue {
    pub state: usize,
    pub qubit: usize,
    pub branch: String,
    pub alpha: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    /// |α|² + |β_R|² + |β_I|² − 1.
    pub sphere_residual: f64,
    /// The residual exceeds 10δ: the point lies outside Hilbert space.
    pub box_artifact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub qubits: Vec<usize>,
    /// `[re, im]` per basis index, first qubit most significant.
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchValue {
    pub branch: String,
    pub groups: Vec<GroupValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub inputs: Vec<QubitValue>,
    pub params: BTreeMap<String, f64>,
    pub finals: Vec<BranchValue>,
    /// Values are interval midpoints.
    pub midpoint: bool,
}

impl Counterexample {
    pub fn max_input_residual(&self) -> f64 {
        self.inputs.iter().map(|q| q.sphere_residual.abs()).fold(0.0, f64::max)
    }
}

/// Maps a δ-sat model back to input qubits, parameters and final states.
pub fn extract_counterexample(model: &Model, table: &SymbolTable, delta: f64) -> Result<Counterexample, SolverError> {
    let get = |n: &str| model.midpoint(n).ok_or_else(|| SolverError::MissingSymbol(n.to_string()));
    let mut inputs = Vec::new();
    for g in table.groups(0, "").unwrap_or(&[]) {
        if let GroupRep::Block { block, .. } = &g.rep {
            let (a, br, bi) = (get(&block.alpha)?, get(&block.beta_re)?, get(&block.beta_im)?);
            let r = a * a + br * br + bi * bi - 1.0;
            inputs.push(QubitValue {
                state: 0,
                qubit: block.qubit_index,
                branch: String::new(),
                alpha: a,
                beta_re: br,
                beta_im: bi,
                sphere_residual: r,
                box_artifact: r.abs() > 10.0 * delta,
            });
        }
    }
    let mut params = BTreeMap::new();
    for p in &table.params {
        params.insert(p.clone(), get(p)?);
    }
    let last = table.n_states.saturating_sub(1);
    let env = |n: &str| model.midpoint(n);
    let mut finals = Vec::new();
    for label in &table.final_labels {
        let mut groups = Vec::new();
        for g in table.groups(last, label).unwrap_or(&[]) {
            let mut amplitudes = Vec::new();
            for a in g.amplitudes() {
                let v = a.eval(&env).map_err(|e| SolverError::MissingSymbol(e.to_string()))?;
                amplitudes.push([v.re, v.im]);
            }
            groups.push(GroupValue { qubits: g.qubits.clone(), amplitudes });
        }
        finals.push(BranchValue { branch: label.clone(), groups });
    }
    Ok(Counterexample { inputs, params, finals, midpoint: true })
}

/// Runs the counterexample's input through the simulator and returns the
/// guarded robustness of the specification (negative: the simulator
/// confirms a violation by that much).
pub fn replay(p: &ProgramModel, spec: &SpecFormula, cex: &Counterexample) -> Result<f64, SolverError> {
    let by_qubit: BTreeMap<usize, &QubitValue> = cex.inputs.iter().map(|q| (q.qubit, q)).collect();
    let free = |q: usize| -> (Complex64, Complex64) {
        let zero = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let Some(v) = by_qubit.get(&q) else { return zero };
        if let (_, Valuation::BasisSet(_)) = p.valuation_of(q) {
            return if v.beta_re > v.alpha { (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)) } else { zero };
        }
        let (a, b) = (Complex64::new(v.alpha, 0.0), Complex64::new(v.beta_re, v.beta_im));
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n < 1e-12 {
            zero
        } else {
            (a / n, b / n)
        }
    };
    let input = input_state(p, &free);
    let params: std::collections::HashMap<String, f64> = cex.params.clone().into_iter().collect();
    Ok(violation_margin(p, spec, &input, &params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Verified,
    Refuted,
    /// Box-mode witness outside Hilbert space; see the exact re-run.
    Spurious,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub verdict: Outcome,
    pub delta: f64,
    pub mode: Mode,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    /// Guarded robustness of the counterexample input in the simulator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_margin: Option<f64>,
    /// Exact-mode re-run of a spurious box-mode witness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerun: Option<Box<Report>>,
}

impl Report {
    /// The verdict after following any exact re-run.
    pub fn final_verdict(&self) -> Outcome {
        match &self.rerun {
            Some(r) => r.final_verdict(),
            None => self.verdict,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.final_verdict() {
            Outcome::Verified => 0,
            Outcome::Refuted => 1,
            Outcome::Spurious | Outcome::Timeout => 2,
        }
    }
}

/// Checks `p ⊨ spec`: Unsat of the query verifies; a δ-sat model refutes
/// unless, in box mode, its inputs lie off the unit sphere, in which case
/// the query is repeated in exact mode.
pub fn verify(
    p: &ProgramModel,
    spec: &SpecFormula,
    rules: &[StructuralRule],
    cfg: &SolverConfig,
) -> Result<Report, SolverError> {
    let start = Instant::now();
    let query = assemble_query(p, spec, rules, &cfg.encode_options(), cfg.epsilon)?;
    let script = render_script(&query)?;
    let verdict = run_script(&script, cfg)?;
    let elapsed = |s: Instant| s.elapsed().as_millis() as u64;
    let mut report = Report {
        verdict: Outcome::Timeout,
        delta: cfg.delta,
        mode: cfg.mode,
        wall_time_ms: 0,
        counterexample: None,
        replay_margin: None,
        rerun: None,
    };
    match verdict {
        Verdict::Unsat => report.verdict = Outcome::Verified,
        Verdict::Timeout => report.verdict = Outcome::Timeout,
        Verdict::SolverError(e) => return Err(SolverError::Failed(e)),
        Verdict::DeltaSat(model) => {
            let cex = extract_counterexample(&model, &query.encoding.table, cfg.delta)?;
            let spurious = cfg.mode == Mode::Box && cex.inputs.iter().any(|q| q.box_artifact);
            if !spurious {
                report.replay_margin = Some(replay(p, spec, &cex)?);
            }
            report.counterexample = Some(cex);
            report.verdict = if spurious { Outcome::Spurious } else { Outcome::Refuted };
            if spurious {
                report.wall_time_ms = elapsed(start);
                let exact = SolverConfig { mode: Mode::Exact, ..cfg.clone() };
                report.rerun = Some(Box::new(verify(p, spec, rules, &exact)?));
                return Ok(report);
            }
        }
    }
    report.wall_time_ms = elapsed(start);
    Ok(report)
}

/// One input qubit as `q = (α, β)` with six decimals.
pub fn describe_qubit(q: &QubitValue) -> String {
    format!(
        "q{} = ({:.6}, {:.6}{:+.6}i){}",
        q.qubit,
        q.alpha,
        q.beta_re,
        q.beta_im,
        if q.box_artifact { "  [off the unit sphere]" } else { "" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dreal_intervals() {
        let v = parse_output("delta-sat with delta = 0.0001\nx : [0.5, 0.50001]\ny : [-inf, 2]\n");
        let Verdict::DeltaSat(m) = v else { panic!() };
        assert_eq!(m.0["x"], (0.5, 0.50001));
        assert_eq!(m.0["y"], (f64::NEG_INFINITY, 2.0));
        assert_eq!(parse_output("unsat\n"), Verdict::Unsat);
        assert_eq!(parse_output("unknown\n"), Verdict::Timeout);
        assert!(matches!(parse_output("segfault"), Verdict::SolverError(_)));
    }

    #[test]
    fn parses_define_fun_models() {
        let v = parse_output("sat\n(model\n  (define-fun x () Real (- 0.25))\n  (define-fun y () Real (/ 1.0 4.0))\n)");
        let Verdict::DeltaSat(m) = v else { panic!() };
        assert_eq!(m.0["x"], (-0.25, -0.25));
        assert_eq!(m.0["y"], (0.25, 0.25));
    }

    #[test]
    fn midpoint_lies_inside() {
        let m = Model([("a".to_string(), (1.0, 1.5))].into_iter().collect());
        assert_eq!(m.midpoint("a"), Some(1.25));
    }

    #[test]
    fn report_exit_codes() {
        let mut r = Report {
            verdict: Outcome::Spurious,
            delta: 1e-4,
            mode: Mode::Box,
            wall_time_ms: 1,
            counterexample: None,
            replay_margin: None,
            rerun: None,
        };
        assert_eq!(r.exit_code(), 2);
        r.rerun = Some(Box::new(Report { verdict: Outcome::Verified, mode: Mode::Exact, ..r.clone() }));
        assert_eq!(r.exit_code(), 0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"verdict\":\"spurious\"") && json.contains("\"mode\":\"exact\""));
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
