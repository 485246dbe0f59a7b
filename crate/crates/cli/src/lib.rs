//! `rulequest` subcommands. Each command writes its report to the given
//! writer so tests can drive the binary's logic in-process.

mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rulequest_core::cases::{parse_cases, run_cases, CaseReport};
use rulequest_core::display::format_body;
use rulequest_core::engine::full_questionnaire;
use rulequest_core::ordering::gtsp::{gtsp_brute_solve, gtsp_reduce};
use rulequest_core::ordering::{
    brute_force_order, condition_frequency_order, objective, optimize_order, OptimizerConfig,
    OrderingInstance, BRUTE_FORCE_CAP,
};
use rulequest_core::rules::validate_rulebase;
use rulequest_core::synth::{
    generate_cases, generate_synthetic, random_rulebase, CaseSpec, RandomRulebaseSpec, SynthSpec,
};
use rulequest_core::{
    compile_display_rules, expected_display_rule_count, Catalog, CondIdx, DisplayRuleSet, Order,
    PatientState, RuleBase,
};
use serde::Serialize;
use thiserror::Error;

pub use table::Table;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) | CliError::Output(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rulequest", version, about = "Adaptive questionnaires from clinical prescription rules")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit the display rules of a rulebase.
    Compile(CompileArgs),
    /// Report suspicious rules and unused catalog entries.
    Lint(Inputs),
    /// Compute a question order and compare solvers.
    Order(OrderArgs),
    /// Optimizer vs exhaustive search over random small rulebases.
    OrderBench(OrderBenchArgs),
    /// Truthful-entry metrics over a clinical case file.
    RunCases(RunCasesArgs),
    /// Write a synthetic catalog, rulebase and case file.
    Generate(GenerateArgs),
    /// List the whole non-adaptive questionnaire.
    DumpFull(DumpArgs),
    /// Time one full display-rule evaluation.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    rules: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Data,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OrderMode {
    Frequency,
    Optimize,
    File,
}

#[derive(Args, Debug)]
struct OrderChoice {
    #[arg(long = "order", value_enum, default_value = "frequency")]
    mode: OrderMode,
    #[arg(long)]
    order_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    order: OrderChoice,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Solver {
    Frequency,
    Optimize,
    Brute,
    All,
}

#[derive(Args, Debug)]
struct OrderArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value = "all")]
    mode: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Known drugs and labs, comma separated.
    #[arg(long, value_delimiter = ',')]
    drugs: Vec<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct OrderBenchArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 6)]
    clinical: usize,
    #[arg(long, default_value_t = 5)]
    rules: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct RunCasesArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    cases: PathBuf,
    #[command(flatten)]
    order: OrderChoice,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 124)]
    rule_count: usize,
    #[arg(long, default_value_t = 73)]
    clinical_count: usize,
    #[arg(long, default_value_t = 40)]
    drug_count: usize,
    #[arg(long, default_value_t = 0.69)]
    stopp_fraction: f64,
    /// Number of synthetic cases to write next to the rulebase.
    #[arg(long, default_value_t = 0)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, requires = "rules")]
    catalog: Option<PathBuf>,
    #[arg(long, requires = "catalog")]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    repetitions: usize,
    /// Seed for the synthetic rulebase (when no files are given) and the patient.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Compile(a) => compile(a, out),
        Command::Lint(a) => lint(a, out),
        Command::Order(a) => order(a, out),
        Command::OrderBench(a) => order_bench_cmd(a, out),
        Command::RunCases(a) => run_cases_cmd(a, out),
        Command::Generate(a) => generate(a, out),
        Command::DumpFull(a) => dump_full(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Loads a catalog and a rulebase from disk.
pub fn load_inputs(catalog: &Path, rules: &Path) -> Result<RuleBase, CliError> {
    let cat = Catalog::load(&read(catalog)?).map_err(|e| CliError::Input(format!("{}: {e}", catalog.display())))?;
    rulequest_core::parse_rulebase(&read(rules)?, Arc::new(cat))
        .map_err(|e| CliError::Input(format!("{}:{e}", rules.display())))
}

fn choose_order(rb: &RuleBase, choice: &OrderChoice) -> Result<Order, CliError> {
    match choice.mode {
        OrderMode::Frequency => Ok(condition_frequency_order(rb)),
        OrderMode::Optimize => Ok(optimize_order(&OrderingInstance::global(rb), &OptimizerConfig::with_seed(choice.seed))),
        OrderMode::File => {
            let path = choice
                .order_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--order file needs --order-file".into()))?;
            Order::parse(rb.catalog(), &read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
    }
}

fn compiled(rb: &RuleBase, order: &Order) -> Result<DisplayRuleSet, CliError> {
    let drs = compile_display_rules(rb, order).map_err(|e| CliError::Invariant(e.to_string()))?;
    let expected = expected_display_rule_count(rb);
    if drs.len() != expected {
        return Err(CliError::Invariant(format!("{} display rules, expected {expected}", drs.len())));
    }
    Ok(drs)
}

fn data<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Output(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn compile(a: CompileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rb = load_inputs(&a.inputs.catalog, &a.inputs.rules)?;
    let order = choose_order(&rb, &a.order)?;
    let drs = compiled(&rb, &order)?;
    if a.format == Format::Data {
        return data(out, &drs.export(&rb));
    }
    let catalog = rb.catalog();
    writeln!(out, "order: {}", order.ids(catalog).join(" < "))?;
    let mut t = Table::new(["rule", "display rule"]);
    for r in drs.rules() {
        t.row([
            rb.rules()[r.source].id.clone(),
            format!("{}({}) = {}", r.variant, catalog.id_of(r.target), format_body(catalog, &r.body)),
        ]);
    }
    write!(out, "{t}")?;
    writeln!(out, "{} display rules from {} clinical rules", drs.len(), rb.len())?;
    Ok(())
}

fn lint(a: Inputs, out: &mut dyn Write) -> Result<(), CliError> {
    let rb = load_inputs(&a.catalog, &a.rules)?;
    let diags = validate_rulebase(&rb);
    for d in &diags {
        writeln!(out, "{d}")?;
    }
    writeln!(out, "{} diagnostics", diags.len())?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverResult {
    pub solver: String,
    pub objective: usize,
    pub order: Vec<String>,
}

fn order(a: OrderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rb = load_inputs(&a.inputs.catalog, &a.inputs.rules)?;
    let catalog = rb.catalog();
    let drugs = a
        .drugs
        .iter()
        .map(|d| catalog.lookup(d).ok_or_else(|| CliError::Input(format!("unknown condition `{d}`"))))
        .collect::<Result<Vec<CondIdx>, _>>()?;
    let inst = OrderingInstance::for_patient(&rb, drugs).map_err(|e| CliError::Input(e.to_string()))?;
    let referenced = rb.referenced_clinical();
    let show = |o: &Order| -> Vec<String> {
        o.sequence()
            .iter()
            .filter(|c| referenced.contains(c))
            .map(|c| catalog.id_of(*c).to_string())
            .collect()
    };

    let mut results = Vec::new();
    let heuristic = condition_frequency_order(&rb);
    let h = objective(&inst, &heuristic);
    if matches!(a.mode, Solver::Frequency | Solver::All) {
        results.push(SolverResult { solver: "frequency".into(), objective: h, order: show(&heuristic) });
    }
    if matches!(a.mode, Solver::Optimize | Solver::All) {
        let o = optimize_order(&inst, &OptimizerConfig::with_seed(a.seed));
        let v = objective(&inst, &o);
        if v > h {
            return Err(CliError::Invariant(format!("optimizer objective {v} exceeds heuristic {h}")));
        }
        results.push(SolverResult { solver: "optimize".into(), objective: v, order: show(&o) });
    }
    if matches!(a.mode, Solver::Brute | Solver::All) {
        match brute_force_order(&inst) {
            Ok((o, v)) => results.push(SolverResult { solver: "brute-force".into(), objective: v, order: show(&o) }),
            Err(e) if a.mode == Solver::Brute => return Err(CliError::Input(e.to_string())),
            Err(e) => log::info!("skipping brute force: {e}"),
        }
    }
    let restricted = rb
        .rules()
        .iter()
        .all(|r| r.body.unions.is_empty() && r.body.c_absent.is_empty() && r.body.d_present.is_empty() && r.body.d_absent.is_empty());
    if a.mode == Solver::All && restricted && a.drugs.is_empty() {
        if let Ok(tour) = gtsp_reduce(&rb).and_then(|g| {
            let t = gtsp_brute_solve(&g)?;
            let o = g.order_from_tour(&t)?;
            Ok((t.cost, o))
        }) {
            results.push(SolverResult { solver: "gtsp".into(), objective: tour.0 as usize, order: show(&tour.1) });
        }
    }

    if a.format == Format::Data {
        return data(out, &results);
    }
    let mut t = Table::new(["solver", "objective", "order"]);
    for r in &results {
        t.row([r.solver.clone(), r.objective.to_string(), r.order.join(" < ")]);
    }
    write!(out, "{t}")?;
    if referenced.len() > BRUTE_FORCE_CAP && a.mode == Solver::All {
        writeln!(out, "({} referenced conditions; exhaustive search skipped above {BRUTE_FORCE_CAP})", referenced.len())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OrderBenchReport {
    pub instances: usize,
    /// Optimizer objective equals the exhaustive minimum.
    pub matched: usize,
    /// Optimizer objective is at most the frequency heuristic's.
    pub never_worse: usize,
    /// Instances where the heuristic alone misses the minimum.
    pub heuristic_suboptimal: usize,
}

/// Random rulebases with `clinical` referenced conditions; each instance
/// fixes a different subset of the first three drugs as known facts.
pub fn order_bench(instances: usize, clinical: usize, rules: usize, seed: u64) -> OrderBenchReport {
    let mut r = OrderBenchReport { instances, matched: 0, never_worse: 0, heuristic_suboptimal: 0 };
    for i in 0..instances as u64 {
        let spec = RandomRulebaseSpec::small(clinical, rules);
        let rb = random_rulebase(&spec, seed.wrapping_add(i));
        let facts: Vec<CondIdx> = (0..spec.drugs as u32)
            .filter(|k| (i >> k) & 1 == 1)
            .map(|k| CondIdx(clinical as u32 + k))
            .collect();
        let inst = OrderingInstance::for_patient(&rb, facts).expect("drug facts");
        let best = brute_force_order(&inst).map(|(_, v)| v).unwrap_or(usize::MAX);
        let h = objective(&inst, &condition_frequency_order(&rb));
        let o = objective(&inst, &optimize_order(&inst, &OptimizerConfig::with_seed(seed.wrapping_add(i))));
        r.matched += usize::from(o == best);
        r.never_worse += usize::from(o <= h);
        r.heuristic_suboptimal += usize::from(h > best);
    }
    r
}

fn order_bench_cmd(a: OrderBenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.clinical > BRUTE_FORCE_CAP {
        return Err(CliError::Usage(format!("--clinical must be at most {BRUTE_FORCE_CAP}")));
    }
    let r = order_bench(a.instances, a.clinical, a.rules, a.seed);
    if a.format == Format::Data {
        return data(out, &r);
    }
    let mut t = Table::new(["instances", "optimal", "never worse", "heuristic suboptimal"]);
    t.row([r.instances.to_string(), r.matched.to_string(), r.never_worse.to_string(), r.heuristic_suboptimal.to_string()]);
    write!(out, "{t}")?;
    Ok(())
}

fn case_table(report: &CaseReport) -> Table {
    let mut t = Table::new(["case", "# drugs", "time (s)", "conditions displayed", "rules triggered", "fraction"]);
    for c in &report.cases {
        t.row([
            c.case_id.clone(),
            c.drug_count.to_string(),
            format!("{:.3}", c.execution_time_seconds),
            c.conditions_displayed.to_string(),
            c.rules_triggered.to_string(),
            format!("{:.1}%", 100.0 * c.displayed_fraction),
        ]);
    }
    if let Some(m) = &report.mean {
        t.separator();
        t.row([
            "mean".to_string(),
            format!("{:.1}", m.drug_count),
            format!("{:.3}", m.execution_time_seconds),
            format!("{:.1}", m.conditions_displayed),
            format!("{:.1}", m.rules_triggered),
            format!("{:.1}%", 100.0 * m.displayed_fraction),
        ]);
    }
    t
}

fn run_cases_cmd(a: RunCasesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rb = load_inputs(&a.inputs.catalog, &a.inputs.rules)?;
    let cases = parse_cases(&read(&a.cases)?).map_err(|e| CliError::Input(format!("{}: {e}", a.cases.display())))?;
    let order = choose_order(&rb, &a.order)?;
    let drs = compiled(&rb, &order)?;
    let report = run_cases(&rb, &drs, &cases).map_err(|e| CliError::Input(e.to_string()))?;
    if report.cases.iter().any(|c| !(0.0..=1.0).contains(&c.displayed_fraction)) {
        return Err(CliError::Invariant("displayed fraction outside [0, 1]".into()));
    }
    if a.format == Format::Data {
        return data(out, &report);
    }
    write!(out, "{}", case_table(&report))?;
    writeln!(out, "{} clinical conditions in the catalog", report.total_clinical_conditions)?;
    Ok(())
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = SynthSpec {
        rule_count: a.rule_count,
        clinical_count: a.clinical_count,
        drug_count: a.drug_count,
        stopp_fraction: a.stopp_fraction,
        seed: a.seed,
    };
    let files = generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let write = |name: &str, text: &str| -> Result<PathBuf, CliError> {
        let p = a.out.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        Ok(p)
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;
    let mut written = vec![write("catalog.json", &files.catalog_json)?, write("rules.rq", &files.rules_text)?];
    if a.cases > 0 {
        let rb = files.load().map_err(|e| CliError::Invariant(e.to_string()))?;
        let cases = generate_cases(rb.catalog(), &CaseSpec::polypharmacy(a.cases, a.seed));
        let text = serde_json::to_string_pretty(&cases).expect("cases serialize");
        written.push(write("cases.json", &text)?);
    }
    for p in written {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn dump_full(a: DumpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rb = load_inputs(&a.inputs.catalog, &a.inputs.rules)?;
    let full = full_questionnaire(&rb);
    if a.format == Format::Data {
        return data(out, &full);
    }
    for panel in &full.panels {
        writeln!(out, "[{}]", panel.category)?;
        for item in &panel.items {
            let codes: Vec<String> = item.codes.iter().map(|c| format!("{}:{}", c.system, c.value)).collect();
            writeln!(out, "  [ ] {} ({}) {}", item.label, item.condition_id, codes.join(" "))?;
        }
    }
    writeln!(out, "{} conditions", full.count)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub rules: usize,
    pub display_rules: usize,
    pub clinical_conditions: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Times `repetitions` full display evaluations of `drs` on `patient`.
pub fn bench_display(rb: &RuleBase, drs: &DisplayRuleSet, patient: &PatientState, repetitions: usize) -> BenchReport {
    let mut samples: Vec<f64> = (0..repetitions.max(1))
        .map(|_| {
            let t = Instant::now();
            let shown = drs.displayed(patient);
            let ms = t.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(shown);
            ms
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let pct = |p: f64| samples[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
    BenchReport {
        rules: rb.len(),
        display_rules: drs.len(),
        clinical_conditions: rb.catalog().clinical_count(),
        repetitions: n,
        mean_ms: samples.iter().sum::<f64>() / n as f64,
        median_ms: if n % 2 == 1 { samples[n / 2] } else { (samples[n / 2 - 1] + samples[n / 2]) / 2.0 },
        p95_ms: pct(0.95),
        min_ms: samples[0],
        max_ms: samples[n - 1],
    }
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be positive".into()));
    }
    let rb = match (&a.catalog, &a.rules) {
        (Some(c), Some(r)) => load_inputs(c, r)?,
        _ => generate_synthetic(&SynthSpec::guideline_scale(a.seed))
            .map(|f| f.load().expect("generated files load"))
            .map_err(|e| CliError::Invariant(e.to_string()))?,
    };
    let drs = compiled(&rb, &condition_frequency_order(&rb))?;
    let case = generate_cases(rb.catalog(), &CaseSpec::polypharmacy(1, a.seed)).remove(0);
    let patient = PatientState::from_ids(rb.catalog(), case.drugs.iter().map(String::as_str), [])
        .map_err(|e| CliError::Invariant(e.to_string()))?;
    let r = bench_display(&rb, &drs, &patient, a.repetitions);
    if a.format == Format::Data {
        return data(out, &r);
    }
    let mut t = Table::new(["rules", "display rules", "conditions", "reps", "mean (ms)", "median (ms)", "p95 (ms)", "max (ms)"]);
    t.row([
        r.rules.to_string(),
        r.display_rules.to_string(),
        r.clinical_conditions.to_string(),
        r.repetitions.to_string(),
        format!("{:.4}", r.mean_ms),
        format!("{:.4}", r.median_ms),
        format!("{:.4}", r.p95_ms),
        format!("{:.4}", r.max_ms),
    ]);
    write!(out, "{t}")?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let cfg = rulequest_service::ServiceConfig::load(&a.config).map_err(|e| CliError::Input(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(rulequest_service::serve(cfg)).map_err(|e| CliError::Input(e.to_string()))
}
