//! Command-line front end. Every command is a thin wrapper that reads plan or
//! artifact files, calls into the library, and writes deterministic outputs.

use crate::cyclecalc::{coupled_cycle_count, expected_cycles_single, tanner_cycle_count, CandidateCensus};
use crate::error::{Error, Result};
use crate::grade::{run_pipeline, StageOutcome};
use crate::io::{load_code, read_json, write_alist, write_json, PlanFile, ResolvedPlan, StageArtifact, StageDistributions};
use crate::mc2::Mc2Result;
use crate::pipeline::{
    cycle_counts, design_reference, design_stage, lift_stage_partition, partition_stage, reduction_percent,
    sf_stage, stage_matrices, ReferenceDesign,
};
use crate::protomatrix::{hardware_sharing_savings, EdgeDistribution, StageMatrices};
use crate::simlab::{simulate_fer, write_fer_csv, ChannelKind};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "rmcsc", version, about = "Design and evaluate staged SC-LDPC codes with growing memory")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RMCSC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full staged design: distributions, reference, then every stage.
    Design {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Truncated baselines of a finished design and the comparison table.
    Baseline {
        /// Design directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage distributions only.
    Grade {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partitioning chain of one stage.
    Mc2Partition {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Lifting chain of one stage, on the stage's partition.
    Mc2Lift {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact cycle counts of an alist matrix or stage artifact.
    Count {
        matrix: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8])]
        lengths: Vec<usize>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected cycle counts of the plan's stage distributions.
    Expect {
        #[arg(long)]
        plan: PathBuf,
        /// Distributions from an earlier `grade` run instead of recomputing.
        #[arg(long)]
        grade: Option<PathBuf>,
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frame error rates of one or more codes.
    Simulate {
        /// Alist files or stage artifacts.
        #[arg(required = true)]
        codes: Vec<PathBuf>,
        /// Plan whose `[simulate]` section sets the defaults.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        channel: Option<ChannelArg>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        min_errors: Option<u64>,
        #[arg(long)]
        max_frames: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// CSV series for charts from grade, chain, or simulation outputs.
    PlotData {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Series::Trace)]
        series: Series,
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parity-check matrix of a stage artifact in alist format.
    ExportAlist {
        artifact: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChannelArg {
    Awgn,
    Bsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Series {
    /// Objective or cost per iteration.
    Trace,
    /// Final distribution of a grade stage.
    Distribution,
}

/// Parses arguments, runs the command, and maps errors to exit codes:
/// 2 for invalid input, 3 for exhausted or infeasible optimization.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == 3 {
                eprintln!("residual: {}", e.root());
            }
            ExitCode::from(code)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::BudgetExhausted(_) | Error::Infeasible(_) => 3,
        _ => 2,
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Design { plan, out, seed } => cmd_design(&plan, &out, seed),
        Command::Baseline { out } => cmd_baseline(&out),
        Command::Grade { plan, out } => cmd_grade(&plan, &out),
        Command::Mc2Partition { plan, out, stage, seed } => cmd_mc2_partition(&plan, &out, stage, seed),
        Command::Mc2Lift { plan, out, stage, seed } => cmd_mc2_lift(&plan, &out, stage, seed),
        Command::Count { matrix, lengths, out } => cmd_count(&matrix, &lengths, out.as_deref()),
        Command::Expect { plan, grade, stage, out } => cmd_expect(&plan, grade.as_deref(), stage, out.as_deref()),
        Command::Simulate {
            codes,
            plan,
            out,
            seed,
            channel,
            grid,
            min_errors,
            max_frames,
            max_iters,
        } => {
            let mut sim = match &plan {
                Some(p) => PlanFile::load(p)?.simulate,
                None => Default::default(),
            };
            if let Some(c) = channel {
                sim.channel = match c {
                    ChannelArg::Awgn => ChannelKind::Awgn,
                    ChannelArg::Bsc => ChannelKind::Bsc,
                };
            }
            if let Some(g) = grid {
                sim.grid = g;
            }
            sim.seed = seed.unwrap_or(sim.seed);
            sim.min_frame_errors = min_errors.unwrap_or(sim.min_frame_errors);
            sim.max_frames = max_frames.unwrap_or(sim.max_frames);
            sim.max_iterations = max_iters.unwrap_or(sim.max_iterations);
            cmd_simulate(&codes, &sim, &out)
        }
        Command::PlotData {
            input,
            series,
            stage,
            out,
        } => cmd_plot_data(&input, series, stage, out.as_deref()),
        Command::ExportAlist { artifact, out } => {
            let a: StageArtifact = read_json(&artifact)?;
            let text = write_alist(&a.code()?);
            match out {
                Some(p) => {
                    std::fs::write(&p, text)?;
                    Ok(format!("wrote {}\n", p.display()))
                }
                None => Ok(text),
            }
        }
    }
}

/// File names inside a design directory.
struct DesignDir<'a>(&'a Path);

impl DesignDir<'_> {
    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(self.0)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", self.0.display())))
    }
    fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
    fn plan(&self) -> PathBuf {
        self.file("plan.json")
    }
    fn grade(&self) -> PathBuf {
        self.file("grade.json")
    }
    fn reference(&self) -> PathBuf {
        self.file("reference.json")
    }
    fn stage(&self, family: &str, d: usize, ext: &str) -> PathBuf {
        self.file(&format!("{family}_stage{d}.{ext}"))
    }
    fn require<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T> {
        if !path.exists() {
            return Err(Error::InvalidInput(format!("missing {}", path.display())));
        }
        read_json(path)
    }
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn count_cell(c: Option<u64>) -> String {
    c.map_or_else(|| "-".into(), thousands)
}

fn write_stage(dir: &DesignDir, art: &StageArtifact) -> Result<()> {
    write_json(&dir.stage(&art.family, art.stage, "json"), art)?;
    std::fs::write(dir.stage(&art.family, art.stage, "alist"), write_alist(&art.code()?))?;
    Ok(())
}

fn rmc_artifact(
    resolved: &ResolvedPlan,
    grade: &[StageOutcome],
    d: usize,
    matrices: StageMatrices,
) -> Result<StageArtifact> {
    let mut art = StageArtifact::new("rmc", &resolved.plan, d, resolved.config.partition.seed, matrices)?;
    art.distributions = Some(StageDistributions {
        p: d.checked_sub(1).map(|e| grade[e].u.clone()),
        q: grade[d].result.q.clone(),
        u: grade[d].u.clone(),
    });
    art.cycles = cycle_counts(&art.matrices, resolved.plan.coupling, &[4, 6, 8])?;
    Ok(art)
}

/// Summary in the layout `Code | Cycle-6 count | Cycle-8 count`.
fn cycle_table(rows: &[(String, [Option<u64>; 3])]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>15} {:>15}", "Code", "Cycle-6 count", "Cycle-8 count");
    for (name, c) in rows {
        let _ = writeln!(s, "{:<16} {:>15} {:>15}", name, count_cell(c[1]), count_cell(c[2]));
    }
    s
}

fn load_resolved(plan: &Path, seed: Option<u64>) -> Result<ResolvedPlan> {
    PlanFile::load(plan)?.resolve(seed)
}

/// Grade outcomes and the reference design of a directory, computed and saved
/// when absent.
fn ensure_front(dir: &DesignDir, resolved: &ResolvedPlan) -> Result<(Vec<StageOutcome>, ReferenceDesign)> {
    dir.create()?;
    write_json(&dir.plan(), resolved)?;
    let grade = if dir.grade().exists() {
        read_json(&dir.grade())?
    } else {
        let g = run_pipeline(&resolved.plan, &resolved.config.grade)?;
        write_json(&dir.grade(), &g)?;
        g
    };
    let reference = if dir.reference().exists() {
        read_json(&dir.reference())?
    } else {
        let r = design_reference(&resolved.plan, &resolved.p_star, &resolved.config)?;
        write_json(&dir.reference(), &r)?;
        r
    };
    Ok((grade, reference))
}

fn previous_stage(dir: &DesignDir, d: usize) -> Result<Option<StageMatrices>> {
    match d {
        0 => Ok(None),
        _ => {
            let a: StageArtifact = dir.require(&dir.stage("rmc", d - 1, "json"))?;
            Ok(Some(a.matrices))
        }
    }
}

pub fn cmd_design(plan: &Path, out: &Path, seed: Option<u64>) -> Result<String> {
    let resolved = load_resolved(plan, seed)?;
    let dir = DesignDir(out);
    dir.create()?;
    write_json(&dir.plan(), &resolved)?;
    let grade = run_pipeline(&resolved.plan, &resolved.config.grade)?;
    write_json(&dir.grade(), &grade)?;
    let reference = design_reference(&resolved.plan, &resolved.p_star, &resolved.config)?;
    write_json(&dir.reference(), &reference)?;

    let mut rows = Vec::new();
    let mut prev: Option<StageMatrices> = None;
    let mut bases = Vec::new();
    for d in 0..resolved.plan.stages.len() {
        let wrap = |e: Error| Error::Stage {
            stage: d,
            source: Box::new(e),
        };
        let sd = design_stage(
            &resolved.plan,
            d,
            &reference.k_star,
            prev.as_ref(),
            &grade[d].result.q,
            &resolved.config,
        )
        .map_err(wrap)?;
        let art = rmc_artifact(&resolved, &grade, d, sd.matrices).map_err(wrap)?;
        write_stage(&dir, &art)?;
        rows.push((format!("RMC-SC Code {d}"), art.cycles));
        bases.push(art.matrices.base());
        prev = Some(art.matrices);
    }
    let mut s = String::new();
    for d in 0..resolved.plan.stages.len() {
        let (n, rate) = crate::protomatrix::code_rate_and_length(&resolved.plan, d)?;
        let _ = writeln!(
            s,
            "stage {d}: memory {}, length {n}, rate {}",
            resolved.plan.stages[d].memory(),
            crate::protomatrix::format_rate(rate)
        );
    }
    s.push_str(&cycle_table(&rows));
    let _ = writeln!(s, "hardware sharing savings: {:.4}", hardware_sharing_savings(&bases)?);
    std::fs::write(dir.file("summary.txt"), &s)?;
    Ok(s)
}

pub fn cmd_baseline(out: &Path) -> Result<String> {
    let dir = DesignDir(out);
    let resolved: ResolvedPlan = dir.require(&dir.plan())?;
    let reference: ReferenceDesign = dir.require(&dir.reference())?;
    let plan = &resolved.plan;
    let mut rows = Vec::new();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>15} {:>15} {:>17} {:>17}",
        "Code", "Cycle-6 count", "Cycle-8 count", "Cycle-6 reduction", "Cycle-8 reduction"
    );
    for d in 0..plan.stages.len() {
        let rmc: StageArtifact = dir.require(&dir.stage("rmc", d, "json"))?;
        let mut sf = StageArtifact::new("sf", plan, d, resolved.config.partition.seed, sf_stage(&reference, plan, d)?)?;
        sf.cycles = cycle_counts(&sf.matrices, plan.coupling, &[4, 6, 8])?;
        write_stage(&dir, &sf)?;
        let rc = if rmc.cycles.iter().all(Option::is_some) {
            rmc.cycles
        } else {
            cycle_counts(&rmc.matrices, plan.coupling, &[4, 6, 8])?
        };
        let red = |i: usize| match (rc[i], sf.cycles[i]) {
            (Some(r), Some(b)) => reduction_percent(r, b).map_or_else(|| "-".into(), |p| format!("{p:.2}%")),
            _ => "-".into(),
        };
        let _ = writeln!(
            s,
            "{:<16} {:>15} {:>15}",
            format!("SF-SC Code {d}"),
            count_cell(sf.cycles[1]),
            count_cell(sf.cycles[2])
        );
        let _ = writeln!(
            s,
            "{:<16} {:>15} {:>15} {:>17} {:>17}",
            format!("RMC-SC Code {d}"),
            count_cell(rc[1]),
            count_cell(rc[2]),
            red(1),
            red(2)
        );
        rows.push((d, rc, sf.cycles));
    }
    write_json(&dir.file("comparison.json"), &rows)?;
    std::fs::write(dir.file("comparison.txt"), &s)?;
    Ok(s)
}

fn format_distribution(u: &EdgeDistribution) -> String {
    let parts: Vec<String> = u.weights.iter().map(|w| format!("{w:.4}")).collect();
    format!("[{}]", parts.join(" "))
}

pub fn cmd_grade(plan: &Path, out: &Path) -> Result<String> {
    let resolved = load_resolved(plan, None)?;
    let dir = DesignDir(out);
    dir.create()?;
    let grade = run_pipeline(&resolved.plan, &resolved.config.grade)?;
    write_json(&dir.grade(), &grade)?;
    let mut s = String::new();
    for o in &grade {
        let _ = writeln!(s, "Design stage {}: u = {}", o.stage, format_distribution(&o.u));
        let _ = writeln!(
            s,
            "  E[cycle-6] ~ {}, E[cycle-8] ~ {}",
            thousands(o.result.e6.round() as u64),
            thousands(o.result.e8.round() as u64)
        );
    }
    std::fs::write(dir.file("grade.txt"), &s)?;
    Ok(s)
}

fn mc2_summary(r: &Mc2Result) -> String {
    format!(
        "cost {:.6}, counts 4/6/8 = {}/{}/{}, {} transitions (best at {})\n",
        r.cost, r.counts[0], r.counts[1], r.counts[2], r.transitions, r.best_transition
    )
}

fn write_mc2(dir: &DesignDir, name: &str, r: &Mc2Result) -> Result<()> {
    write_json(&dir.file(&format!("{name}.json")), r)?;
    let mut buf = Vec::new();
    r.write_trace_csv(&mut buf)?;
    std::fs::write(dir.file(&format!("{name}_trace.csv")), buf)?;
    Ok(())
}

fn with_trace(mut resolved: ResolvedPlan) -> ResolvedPlan {
    resolved.config.partition.record_trace = true;
    resolved.config.lift.record_trace = true;
    resolved
}

pub fn cmd_mc2_partition(plan: &Path, out: &Path, d: usize, seed: Option<u64>) -> Result<String> {
    let resolved = with_trace(load_resolved(plan, seed)?);
    resolved.plan.stage(d)?;
    let dir = DesignDir(out);
    let (grade, reference) = ensure_front(&dir, &resolved)?;
    let prev = previous_stage(&dir, d)?;
    let r = partition_stage(
        &resolved.plan,
        d,
        &reference.k_star,
        prev.as_ref(),
        &grade[d].result.q,
        &resolved.config,
    )
    .map_err(|e| Error::Stage {
        stage: d,
        source: Box::new(e),
    })?;
    write_mc2(&dir, &format!("partition_stage{d}"), &r)?;
    Ok(mc2_summary(&r))
}

pub fn cmd_mc2_lift(plan: &Path, out: &Path, d: usize, seed: Option<u64>) -> Result<String> {
    let resolved = with_trace(load_resolved(plan, seed)?);
    resolved.plan.stage(d)?;
    let dir = DesignDir(out);
    let grade: Vec<StageOutcome> = dir.require(&dir.grade())?;
    let part: Mc2Result = dir.require(&dir.file(&format!("partition_stage{d}.json")))?;
    let prev = previous_stage(&dir, d)?;
    let wrap = |e: Error| Error::Stage {
        stage: d,
        source: Box::new(e),
    };
    let r = lift_stage_partition(&resolved.plan, d, &part.x_opt, prev.as_ref(), &resolved.config).map_err(wrap)?;
    write_mc2(&dir, &format!("lift_stage{d}"), &r)?;
    let m = stage_matrices(&resolved.plan, d, part.x_opt, r.x_opt.clone(), prev.as_ref()).map_err(wrap)?;
    let art = rmc_artifact(&resolved, &grade, d, m)?;
    write_stage(&dir, &art)?;
    Ok(mc2_summary(&r))
}

/// Cycle counts keyed `cycles-<length>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub source: String,
    pub counts: BTreeMap<String, u64>,
}

pub fn cmd_count(matrix: &Path, lengths: &[usize], out: Option<&Path>) -> Result<String> {
    if let Some(&bad) = lengths.iter().find(|&&l| !matches!(l, 4 | 6 | 8)) {
        return Err(Error::InvalidInput(format!("cycle length {bad} not in 4, 6, 8")));
    }
    let text = std::fs::read_to_string(matrix)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", matrix.display())))?;
    let mut counts = BTreeMap::new();
    let mut s = String::new();
    if text.trim_start().starts_with('{') {
        let a: StageArtifact = serde_json::from_str(&text)?;
        for &l in lengths {
            let m = &a.matrices;
            let n = coupled_cycle_count(&m.k, Some((&m.t, a.plan.z)), a.plan.coupling, l / 2)?;
            counts.insert(format!("cycles-{l}"), n);
        }
    } else {
        let code = crate::io::read_alist(&text)?;
        for &l in lengths {
            counts.insert(format!("cycles-{l}"), tanner_cycle_count(&code, l / 2)?);
        }
    }
    for &l in lengths {
        let _ = writeln!(s, "cycles-{l}: {}", counts[&format!("cycles-{l}")]);
    }
    if let Some(p) = out {
        write_json(
            p,
            &CountReport {
                source: matrix.display().to_string(),
                counts,
            },
        )?;
    }
    Ok(s)
}

/// Expected counts of one stage code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectReport {
    pub stage: usize,
    pub u: EdgeDistribution,
    pub e4: f64,
    pub e6: f64,
    pub e8: f64,
}

pub fn cmd_expect(plan: &Path, grade: Option<&Path>, stage: Option<usize>, out: Option<&Path>) -> Result<String> {
    let resolved = load_resolved(plan, None)?;
    let outcomes: Vec<StageOutcome> = match grade {
        Some(g) => read_json(g)?,
        None => run_pipeline(&resolved.plan, &resolved.config.grade)?,
    };
    if outcomes.len() != resolved.plan.stages.len() {
        return Err(Error::InvalidInput(format!(
            "{} grade stages for a {}-stage plan",
            outcomes.len(),
            resolved.plan.stages.len()
        )));
    }
    let census = CandidateCensus::new(resolved.plan.gamma, resolved.plan.kappa);
    let mut reports = Vec::new();
    let mut s = String::new();
    for o in &outcomes {
        if stage.is_some_and(|d| d != o.stage) {
            continue;
        }
        let e = |ell| expected_cycles_single(ell, &o.u, &census);
        let r = ExpectReport {
            stage: o.stage,
            u: o.u.clone(),
            e4: e(2)?,
            e6: e(3)?,
            e8: e(4)?,
        };
        let _ = writeln!(
            s,
            "stage {}: E[cycle-4] ~ {}, E[cycle-6] ~ {}, E[cycle-8] ~ {}",
            r.stage,
            thousands(r.e4.round() as u64),
            thousands(r.e6.round() as u64),
            thousands(r.e8.round() as u64)
        );
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(Error::InvalidInput(format!("no stage {}", stage.unwrap_or_default())));
    }
    if let Some(p) = out {
        write_json(p, &reports)?;
    }
    Ok(s)
}

pub fn cmd_simulate(codes: &[PathBuf], sim: &crate::io::SimulateSection, out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", out.display())))?;
    let mut s = String::new();
    for path in codes {
        let code = load_code(path)?;
        let pts = simulate_fer(&code, sim.channel, &sim.grid, &sim.stop_rule(), sim.max_iterations, sim.seed)?;
        let stem = path.file_stem().map_or_else(|| "code".into(), |x| x.to_string_lossy().into_owned());
        let csv = out.join(format!("fer_{stem}.csv"));
        let mut buf = Vec::new();
        write_fer_csv(&pts, &mut buf)?;
        std::fs::write(&csv, buf)?;
        let _ = writeln!(s, "{}:", path.display());
        for p in &pts {
            let (lo, hi) = p.interval();
            let _ = writeln!(
                s,
                "  {:>8} frames {:>9} errors {:>6} FER {:.4e} [{:.4e}, {:.4e}]",
                p.parameter, p.frames, p.frame_errors, p.fer, lo, hi
            );
        }
    }
    Ok(s)
}

pub fn cmd_plot_data(input: &Path, series: Series, stage: Option<usize>, out: Option<&Path>) -> Result<String> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", input.display())))?;
    let mut s = String::new();
    if !text.trim_start().starts_with(['{', '[']) {
        // Simulation CSV: keep the chart columns.
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::Parse(format!("CSV has no {name} column")))
        };
        let idx = [col("parameter")?, col("fer")?, col("ci_low")?, col("ci_high")?];
        s.push_str("parameter,fer,ci_low,ci_high\n");
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let row: Vec<&str> = idx.iter().map(|&i| f.get(i).copied().unwrap_or("")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
    } else if let Ok(grade) = serde_json::from_str::<Vec<StageOutcome>>(&text) {
        let d = stage.unwrap_or(0);
        let o = grade
            .iter()
            .find(|o| o.stage == d)
            .ok_or_else(|| Error::InvalidInput(format!("no stage {d} in {}", input.display())))?;
        match series {
            Series::Trace => {
                s.push_str("iteration,objective\n");
                for (i, v) in o.result.trace.iter().enumerate() {
                    let _ = writeln!(s, "{i},{v}");
                }
            }
            Series::Distribution => {
                s.push_str("component,probability\n");
                for (i, w) in o.u.weights.iter().enumerate() {
                    let _ = writeln!(s, "{},{w}", o.u.offset + i);
                }
            }
        }
    } else {
        let r: Mc2Result = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{} is not a grade, chain, or FER output: {e}", input.display())))?;
        if series != Series::Trace {
            return Err(Error::InvalidInput("chain results only have a trace series".into()));
        }
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf)?;
        s.push_str(&String::from_utf8_lossy(&buf));
    }
    match out {
        Some(p) => {
            std::fs::write(p, &s)?;
            Ok(format!("wrote {}\n", p.display()))
        }
        None => Ok(s),
    }
}
