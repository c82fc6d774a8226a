mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mebn::dataset::{build_default_dataset, execute_join, partition_by_cpc, write_dump};
use mebn::eval::{run_heater_experiment, score_table, Criteria, CriterionResult, HeaterConfig, HEATER_RULES};
use mebn::learn::{learn_mtheory, LearnOptions, Priors};
use mebn::mapper::{apply_rule, build_initial_mtheory, parse_rules, plan_join, prepare_rule_database, CausalRule};
use mebn::mtheory::{Aggregate, MTheory};
use mebn::relational::{er_normalize, load_database, write_database, Database};
use mebn::script::{emit_mtheory, format_number, parse_mtheory};
use mebn::ssbn::{ground, infer, EntityInstanceSet, Evidence, Network, QueryResult, Ssbn};

use config::{ConfigFile, Settings};
use error::CliError;

#[derive(Parser)]
#[command(name = "mebn", version, about = "Learn multi-entity Bayesian networks from relational data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a database, print a summary of its relations
    Ingest(Settings),
    /// Fold attribute relations into their entities and write the result to --out
    Normalize(Settings),
    /// Compile a normalized database into an initial MTheory
    Map(Settings),
    /// Expert causal rules
    Rules {
        #[command(subcommand)]
        command: RulesCommand,
    },
    /// Learn the local distributions of every rule-defined resident
    Learn(LearnArgs),
    /// Build the situation-specific network for queries and evidence
    Ground(QueryArgs),
    /// Posterior distributions of query nodes
    Infer(QueryArgs),
    /// Score predictions and check performance criteria
    Eval(EvalArgs),
    /// Simulate the heater domain, learn from it and score total-cost forecasts
    HeaterSim(HeaterArgs),
    /// Normalize, map, apply rules and learn in one run
    Pipeline(HeaterArgs),
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Rewrite MFrags with every rule and print the updated script
    Apply(ApplyArgs),
}

#[derive(Args)]
struct ApplyArgs {
    #[command(flatten)]
    settings: Settings,
    /// Start from this script instead of the initial MTheory
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write each rule's joined dataset as CSV into this directory
    #[arg(long)]
    dump_joined: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    settings: Settings,
    /// Script with rules already applied; otherwise they are applied here
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also write the learning report to this file
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of node_id,value
    #[arg(long)]
    evidence: Option<PathBuf>,
    /// Node id such as ThreatLevel_r1_t1; repeatable
    #[arg(long = "query", required = true)]
    queries: Vec<String>,
    /// Extra entity instances as TYPE=id,id; repeatable
    #[arg(long = "entity")]
    entities: Vec<String>,
    /// Write results as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// CSV with case and mean,variance[,actual] or probability[,outcome]
    #[arg(long)]
    predictions: PathBuf,
    /// CSV with case and actual or outcome
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    criteria: Option<PathBuf>,
}

#[derive(Args)]
struct HeaterArgs {
    #[command(flatten)]
    settings: Settings,
    /// Run the heater experiment instead of the data pipeline
    #[arg(long)]
    heater: bool,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    slabs_per_case: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(s) => ingest(&s.resolve()?.0),
        Command::Normalize(s) => normalize(&s.resolve()?.0),
        Command::Map(s) => {
            let (s, _) = s.resolve()?;
            let m = build_initial_mtheory(&load(&s)?)?;
            emit(s.out.as_deref(), &emit_mtheory(&m))
        }
        Command::Rules {
            command: RulesCommand::Apply(a),
        } => rules_apply(a),
        Command::Learn(a) => learn(a),
        Command::Ground(q) => ground_cmd(&q),
        Command::Infer(q) => infer_cmd(&q),
        Command::Eval(a) => eval_cmd(&a),
        Command::HeaterSim(a) => heater(&a),
        Command::Pipeline(a) => pipeline(&a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(s: &Settings) -> Result<Database, CliError> {
    let manifest = s.require(&s.manifest, "manifest")?;
    let dir = s.data_dir.clone().unwrap_or_default();
    Ok(load_database(manifest, &dir)?)
}

fn ingest(s: &Settings) -> Result<(), CliError> {
    let db = load(s)?;
    db.validate()?;
    for r in db.relations() {
        let attrs: Vec<String> = r.schema.attributes.iter().map(|a| format!("{} {}", a.name, a.kind)).collect();
        println!(
            "{:<20} {:<13} {:>6} rows  {}",
            r.name(),
            format!("{:?}", r.schema.classify()).to_lowercase(),
            r.rows.len(),
            attrs.join(", ")
        );
    }
    Ok(())
}

fn normalize(s: &Settings) -> Result<(), CliError> {
    let out = s.require(&s.out, "out")?;
    let db = er_normalize(&load(s)?)?;
    write_database(&db, out)?;
    println!("wrote {} relations to {}", db.len(), out.display());
    Ok(())
}

fn rules_for(s: &Settings, db: &Database) -> Result<Vec<CausalRule>, CliError> {
    let path = s.require(&s.rules, "rules")?;
    let mut rules = parse_rules(&read(path)?, db)?;
    if let Some(name) = &s.aggregate {
        let agg = Aggregate::from_name(name).ok_or_else(|| CliError::config(format!("unknown aggregate {name}")))?;
        for r in &mut rules {
            r.aggregate.get_or_insert(agg);
        }
    }
    Ok(rules)
}

fn model_or_initial(model: Option<&Path>, db: &Database) -> Result<MTheory, CliError> {
    match model {
        Some(p) => Ok(parse_mtheory(&read(p)?)?),
        None => Ok(build_initial_mtheory(db)?),
    }
}

fn apply_all(mut m: MTheory, db: &Database, rules: &[CausalRule]) -> Result<MTheory, CliError> {
    for r in rules {
        m = apply_rule(&m, r, &plan_join(r, db)?)?;
    }
    Ok(m)
}

fn rules_apply(a: ApplyArgs) -> Result<(), CliError> {
    let (s, _) = a.settings.resolve()?;
    let db = load(&s)?;
    let rules = rules_for(&s, &db)?;
    let db = prepare_rule_database(&db, &rules)?;
    let m = apply_all(model_or_initial(a.model.as_deref(), &db)?, &db, &rules)?;
    if let Some(dir) = &a.dump_joined {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (i, r) in rules.iter().enumerate() {
            let plan = plan_join(r, &db)?;
            let joined = execute_join(&plan, &db)?;
            let cpcs: Vec<_> = m
                .resident(&r.child.attribute)
                .and_then(|res| res.inline_cld())
                .map(|c| c.branches.iter().map(|(cpc, _)| cpc.clone()).collect())
                .unwrap_or_default();
            let csd = partition_by_cpc(&joined, &cpcs)?;
            let default = build_default_dataset(&db, &plan)?;
            let path = dir.join(format!("joined_{}_{}.csv", i + 1, r.child.attribute));
            let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_dump(file, &joined, Some(&csd), &default)?;
        }
    }
    emit(s.out.as_deref(), &emit_mtheory(&m))
}

fn learn_options(s: &Settings) -> Result<LearnOptions, CliError> {
    let mut opts = LearnOptions::default();
    if let Some(e) = &s.estimator {
        opts.estimator = e.parse().map_err(CliError::config)?;
    }
    if let Some(p) = &s.priors {
        opts.priors = Priors::parse(&read(p)?)?;
    }
    Ok(opts)
}

/// Applies the rules unless `model` already has them, then learns.
fn learn_model(s: &Settings, model: Option<&Path>) -> Result<(MTheory, String), CliError> {
    let db = load(s)?;
    let rules = rules_for(s, &db)?;
    let db = prepare_rule_database(&db, &rules)?;
    let m = match model {
        Some(p) => parse_mtheory(&read(p)?)?,
        None => apply_all(build_initial_mtheory(&db)?, &db, &rules)?,
    };
    let (learned, report) = learn_mtheory(&m, &db, &rules, &learn_options(s)?)?;
    if report.has_errors() {
        return Err(CliError::new("E_LEARN", format!("some residents could not be learned\n{report}")));
    }
    Ok((learned, report.to_string()))
}

fn learn(a: LearnArgs) -> Result<(), CliError> {
    let (s, _) = a.settings.resolve()?;
    let (m, report) = learn_model(&s, a.model.as_deref())?;
    if let Some(p) = &a.report {
        write(p, &report)?;
    }
    match &s.out {
        Some(p) => {
            write(p, &emit_mtheory(&m))?;
            print!("{report}");
        }
        None => print!("{}", emit_mtheory(&m)),
    }
    Ok(())
}

fn build(q: &QueryArgs) -> Result<(Ssbn, Evidence), CliError> {
    let m = parse_mtheory(&read(&q.model)?)?;
    let evidence = match &q.evidence {
        Some(p) => Evidence::parse_csv(&read(p)?)?,
        None => Evidence::new(),
    };
    let ids: Vec<&str> = q.queries.iter().map(String::as_str).collect();
    let mut entities = EntityInstanceSet::from_ids(&m, &ids, &evidence)?;
    for spec in &q.entities {
        let (ty, list) = spec
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--entity {spec}: expected TYPE=id,id")))?;
        for id in list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            entities.add(ty.trim(), id)?;
        }
    }
    Ok((ground(&m, &entities, &evidence, &ids)?, evidence))
}

fn ground_cmd(q: &QueryArgs) -> Result<(), CliError> {
    let (ssbn, _) = build(q)?;
    for n in &ssbn.nodes {
        let parents = n.parent_ids();
        let observed = ssbn.evidence.get(&n.id).map(|v| format!(" = {v}")).unwrap_or_default();
        if parents.is_empty() {
            println!("{}{observed}", n.id);
        } else {
            println!("{}{observed} <- {}", n.id, parents.join(", "));
        }
    }
    for r in &ssbn.reports {
        println!("# {r}");
    }
    Ok(())
}

fn infer_cmd(q: &QueryArgs) -> Result<(), CliError> {
    let (ssbn, evidence) = build(q)?;
    let net = Network::from_ssbn(&ssbn)?;
    let mut rows = Vec::new();
    for query in &q.queries {
        let r = infer(&net, query, &evidence)?;
        println!("{query}");
        print!("{r}");
        rows.push((query.clone(), r));
    }
    if let Some(path) = &q.csv {
        let continuous = rows.iter().all(|(_, r)| matches!(r, QueryResult::Continuous { .. }));
        let mut out = String::from(if continuous { "case,mean,variance\n" } else { "case,state,probability\n" });
        for (id, r) in &rows {
            match r {
                QueryResult::Discrete(p) => {
                    for (s, x) in p {
                        out.push_str(&format!("{id},{s},{}\n", format_number(*x)));
                    }
                }
                QueryResult::Continuous { mean, variance, .. } if continuous => {
                    out.push_str(&format!("{id},{},{}\n", format_number(*mean), format_number(*variance)));
                }
                QueryResult::Continuous { mean, variance, .. } => {
                    out.push_str(&format!("{id},mean,{}\n{id},variance,{}\n", format_number(*mean), format_number(*variance)));
                }
            }
        }
        write(path, &out)?;
    }
    Ok(())
}

fn print_criteria(results: &[CriterionResult]) -> Result<(), CliError> {
    let mut failed = vec![];
    for r in results {
        let v = r.value.map_or("n/a".to_string(), format_number);
        println!("criterion {:<24} value {v:<14} {}", r.criterion.to_string(), if r.pass { "pass" } else { "fail" });
        if !r.pass {
            failed.push(r.criterion.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new("E_CRITERIA_FAILED", failed.join("; ")))
    }
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let truth = a.truth.as_deref().map(read).transpose()?;
    let scores = score_table(&read(&a.predictions)?, truth.as_deref())?;
    for (name, v) in [("avg_crps", scores.avg_crps), ("mae", scores.mae), ("brier", scores.brier)] {
        if let Some(v) = v {
            println!("{name:<9} {}", format_number(v));
        }
    }
    match &a.criteria {
        Some(p) => print_criteria(&Criteria::parse(&read(p)?)?.check(&scores)),
        None => Ok(()),
    }
}

fn heater_config(a: &HeaterArgs, s: &Settings, file: &ConfigFile) -> Result<HeaterConfig, CliError> {
    let mut c = HeaterConfig::default();
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = file.parse(stringify!($field))? {
                c.$field = v;
            }
        )*};
    }
    set!(n_train, n_test, slabs_per_case, sensor_variance, target_temp, slab_mass, energy_per_degree, cost_per_kwh, input_temp_mean, input_temp_sd);
    c.n_train = a.n_train.unwrap_or(c.n_train);
    c.n_test = a.n_test.unwrap_or(c.n_test);
    c.slabs_per_case = a.slabs_per_case.unwrap_or(c.slabs_per_case);
    c.seed = s.seed.unwrap_or(c.seed);
    Ok(c)
}

fn heater(a: &HeaterArgs) -> Result<(), CliError> {
    let (s, file) = a.settings.resolve()?;
    let cfg = heater_config(a, &s, &file)?;
    let rules = match &s.rules {
        Some(p) => read(p)?,
        None => HEATER_RULES.to_string(),
    };
    let criteria = match &s.criteria {
        Some(p) => Criteria::parse(&read(p)?)?,
        None => Criteria::default(),
    };
    let report = run_heater_experiment(&cfg, &rules, &criteria)?;
    if let Some(out) = &s.out {
        let data = mebn::eval::generate_heater_db(&cfg)?;
        write_database(&data.train, &out.join("train"))?;
        write_database(&data.test, &out.join("test"))?;
        write(&out.join("learned.mebn"), &emit_mtheory(&report.learned))?;
        write(&out.join("heater_cases.csv"), &report.to_csv())?;
        write(&out.join("heater_report.txt"), &report.to_string())?;
    }
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report.criteria.iter().filter(|r| !r.pass).map(|r| r.criterion.to_string()).collect();
        Err(CliError::new("E_CRITERIA_FAILED", failed.join("; ")))
    }
}

fn pipeline(a: &HeaterArgs) -> Result<(), CliError> {
    let (s, file) = a.settings.resolve()?;
    if a.heater || file.values.get("experiment").is_some_and(|v| v == "heater") {
        return heater(a);
    }
    let out = s.require(&s.out, "out")?.to_path_buf();
    let normalized = er_normalize(&load(&s)?)?;
    let norm_dir = out.join("normalized");
    write_database(&normalized, &norm_dir)?;
    let initial = build_initial_mtheory(&normalized)?;
    write(&out.join("initial.mebn"), &emit_mtheory(&initial))?;

    let rules = rules_for(&s, &normalized)?;
    let db = prepare_rule_database(&normalized, &rules)?;
    let model = apply_all(initial, &db, &rules)?;
    write(&out.join("model.mebn"), &emit_mtheory(&model))?;
    let (learned, report) = learn_mtheory(&model, &db, &rules, &learn_options(&s)?)?;
    write(&out.join("learned.mebn"), &emit_mtheory(&learned))?;
    write(&out.join("report.txt"), &report.to_string())?;
    print!("{report}");
    println!("wrote {}", out.display());
    if report.has_errors() {
        return Err(CliError::new("E_LEARN", "some residents could not be learned; see report.txt"));
    }
    Ok(())
}
