//! `dirdesign`: construct, verify and certify super-simple (v,5,2) directed designs.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dirdesign::catalog::{compute_checksum, Catalog, Target};
use dirdesign::design::{
    admissible, verify_coverage, verify_super_simple, Admissibility, CoverageReport, GroupType, GroupedDesign,
};
use dirdesign::engine::{explain, provenance_leaves, PlanOptions, Planner};
use dirdesign::error::Error;
use dirdesign::format::{self, checksum};
use dirdesign::search::{search_gdd, IngredientCache, SearchOptions, SearchOutcome, Source, CACHE_ENV};
use dirdesign::td::td_any;

use report::{Failure, Report};

#[derive(Parser, Debug)]
#[command(name = "dirdesign", version, about = "Super-simple (v,5,2) directed designs: build, verify, certify")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Ingredient cache directory.
    #[arg(long, global = true, env = CACHE_ENV, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a (v,5,2)DD and write it as a design file.
    Construct {
        #[arg(short = 'v', long = "v")]
        v: usize,
        /// Output file [default: dd-v<V>.json].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Wall-clock budget for GDD searches the plan needs.
        #[arg(long, value_name = "SECONDS", default_value_t = 0.0)]
        budget_seconds: f64,
    },
    /// Check pair coverage and/or super-simplicity of a design file.
    Verify {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Level::All)]
        level: Level,
    },
    /// Certify a defining-set lower bound by packing disjoint trades.
    Trades {
        file: PathBuf,
        /// Use the design's construction structure (default).
        #[arg(long, overrides_with = "no_hints")]
        hints: bool,
        /// Use only the global matching.
        #[arg(long, overrides_with = "hints")]
        no_hints: bool,
        #[arg(long, value_name = "SECONDS")]
        budget_seconds: Option<f64>,
        /// Write the certificate JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect the built-in base-block catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Build and verify a transversal design TD(k,n).
    Td {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find a λ=1 GDD of a given type and block sizes.
    GddSearch {
        /// Group type, e.g. "3^8 7^1".
        #[arg(long = "type", value_name = "TYPE")]
        group_type: String,
        /// Block sizes, comma separated.
        #[arg(long = "K", value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[arg(long, value_name = "SECONDS", default_value_t = 10.0)]
        budget_seconds: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the provenance tree of a design file.
    Explain { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    List,
    Show { id: String },
    Build {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the catalog checksum and compare it with the stored one.
    Checksum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Level {
    Coverage,
    Super,
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { report::EXIT_IO } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let name = command_name(&cli.command);
    let report = match run(&cli) {
        Ok(r) => r,
        Err(f) => Report::failed(name, f),
    };
    report.print();
    ExitCode::from(report.exit_code())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Construct { .. } => "construct",
        Command::Verify { .. } => "verify",
        Command::Trades { .. } => "trades",
        Command::Catalog { .. } => "catalog",
        Command::Td { .. } => "td",
        Command::GddSearch { .. } => "gdd-search",
        Command::Explain { .. } => "explain",
    }
}

fn seconds(s: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(s).map_err(|_| Failure::usage(format!("invalid budget {s}")))
}

/// Refuses an existing output path up front, before any work is done.
fn check_out(out: Option<&Path>, force: bool) -> Result<(), Failure> {
    match out {
        Some(p) if p.exists() && !force => Err(Failure::io(format!("{} exists (use --force to overwrite)", p.display()))),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let g = &cli.global;
    // Validate everything before starting work.
    match &cli.command {
        Command::Construct { v, out, budget_seconds } => {
            seconds(*budget_seconds)?;
            check_out(Some(&out.clone().unwrap_or_else(|| default_out(*v))), g.force)?;
        }
        Command::Trades { budget_seconds, out, .. } => {
            budget_seconds.map(seconds).transpose()?;
            check_out(out.as_deref(), g.force)?;
        }
        Command::Td { out, .. } | Command::Catalog { action: CatalogAction::Build { out, .. } } => {
            check_out(out.as_deref(), g.force)?
        }
        Command::GddSearch { budget_seconds, out, .. } => {
            seconds(*budget_seconds)?;
            check_out(out.as_deref(), g.force)?;
        }
        _ => {}
    }
    if let Some(n) = g.jobs {
        set_jobs(n as usize);
    }
    let cache = IngredientCache::new(g.cache_dir.clone());
    match &cli.command {
        Command::Construct { v, out, budget_seconds } => {
            let out = out.clone().unwrap_or_else(|| default_out(*v));
            construct(*v, &out, seconds(*budget_seconds)?, cache, g.force)
        }
        Command::Verify { file, level } => verify(file, *level),
        Command::Trades { file, no_hints, budget_seconds, out, .. } => {
            let budget = budget_seconds.map(seconds).transpose()?;
            trades(file, !no_hints, budget, out.as_deref(), cache, g.force)
        }
        Command::Catalog { action } => catalog(action, g.force),
        Command::Td { k, n, out } => td(*k, *n, out.as_deref(), g.force),
        Command::GddSearch { group_type, ks, budget_seconds, out } => {
            gdd_search(group_type, ks, seconds(*budget_seconds)?, out.as_deref(), cache, g.force)
        }
        Command::Explain { file } => explain_file(file),
    }
}

#[cfg(feature = "parallel")]
fn set_jobs(n: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("--jobs ignored: {e}");
    }
}

#[cfg(not(feature = "parallel"))]
fn set_jobs(_: usize) {}

fn default_out(v: usize) -> PathBuf {
    PathBuf::from(format!("dd-v{v}.json"))
}

fn planner(budget: Duration, cache: IngredientCache) -> Result<Planner, Failure> {
    Ok(Planner::embedded(PlanOptions { search: SearchOptions { budget, seed: 0 }, cache })?)
}

fn load(file: &Path) -> Result<GroupedDesign, Failure> {
    format::read(file).map_err(|e| Failure::io(format!("{}: {e}", file.display())))
}

fn construct(v: usize, out: &Path, budget: Duration, cache: IngredientCache, force: bool) -> Result<Report, Failure> {
    if let Admissibility::No { reason } = admissible(v) {
        return Err(Failure::gap(format!("v={v} is not admissible: {reason}")));
    }
    let t = Instant::now();
    let p = planner(budget, cache)?;
    let recipe = p.plan(v)?;
    let e = p.execute(&recipe)?;
    let built = t.elapsed();
    let d = &e.design;
    let t = Instant::now();
    let cov = verify_coverage(d);
    let sup = verify_super_simple(d);
    let checked = t.elapsed();
    let mut r = Report::new("construct");
    r.line(format!("v={v}: {} blocks via {}", d.num_blocks(), recipe.route()));
    r.verdict("coverage", cov.pass);
    r.verdict("super_simple", sup.pass);
    if cov.pass && sup.pass {
        format::write(out, d, force)?;
        r.line(format!("wrote {}", out.display()));
    }
    r.set("v", json!(v));
    r.set("blocks", json!(d.num_blocks()));
    r.set("route", json!(recipe.route()));
    r.set("recipe_depth", json!(recipe.depth()));
    r.set("checksum", json!(checksum(d)));
    r.set("out", json!(out));
    r.timing("build", built);
    r.timing("verify", checked);
    Ok(r)
}

const MAX_LISTED: usize = 10;

fn list_problems(r: &mut Report, name: &str, rep: &CoverageReport) {
    for p in rep.violations.iter().take(MAX_LISTED) {
        r.line(format!("  pair ({},{}) covered {} times, expected {}", p.pair.0, p.pair.1, p.observed, p.expected));
    }
    for b in rep.block_violations.iter().take(MAX_LISTED) {
        r.line(format!("  blocks {} and {} share {} points", b.i, b.j, b.intersection));
    }
    r.set(
        &format!("{name}_violations"),
        json!({
            "pairs": rep.violations.len(),
            "blocks": rep.block_violations.len(),
            "first_pairs": rep.violations.iter().take(MAX_LISTED).collect::<Vec<_>>(),
            "first_blocks": rep.block_violations.iter().take(MAX_LISTED).collect::<Vec<_>>(),
        }),
    );
}

fn verify(file: &Path, level: Level) -> Result<Report, Failure> {
    let d = load(file)?;
    let mut r = Report::new("verify");
    r.line(format!(
        "{}: v={}, {} blocks, λ={}, {}",
        file.display(),
        d.v(),
        d.num_blocks(),
        d.lambda(),
        if d.directed() { "directed" } else { "undirected" }
    ));
    r.set("v", json!(d.v()));
    r.set("blocks", json!(d.num_blocks()));
    if matches!(level, Level::Coverage | Level::All) {
        let t = Instant::now();
        let cov = verify_coverage(&d);
        r.timing("coverage", t.elapsed());
        r.verdict("coverage", cov.pass);
        list_problems(&mut r, "coverage", &cov);
    }
    if matches!(level, Level::Super | Level::All) {
        let t = Instant::now();
        let sup = verify_super_simple(&d);
        r.timing("super_simple", t.elapsed());
        r.verdict("super_simple", sup.pass);
        list_problems(&mut r, "super_simple", &sup);
    }
    if let Admissibility::Yes { blocks } = admissible(d.v()) {
        if d.directed() && d.groups().is_none() && d.num_blocks() != blocks {
            r.line(format!("  expected {blocks} blocks for a ({},5,2)DD", d.v()));
            r.verdict("block_count", false);
        }
    }
    Ok(r)
}

fn trades(
    file: &Path,
    hints: bool,
    budget: Option<Duration>,
    out: Option<&Path>,
    cache: IngredientCache,
    force: bool,
) -> Result<Report, Failure> {
    let d = load(file)?;
    if !d.directed() {
        return Err(Failure::gap("trades are defined for directed designs only".into()));
    }
    let p = planner(Duration::ZERO, cache)?;
    let t = Instant::now();
    let cert = p.certify_design(&d, hints, budget)?;
    let took = t.elapsed();
    let mut r = Report::new("trades");
    r.line(format!(
        "lower bound {}/{} = {:.4} ({} matched, {} cyclical; {})",
        cert.lower_bound,
        cert.blocks,
        cert.ratio_f64(),
        cert.matching.len(),
        cert.cycles.len(),
        cert.strategy
    ));
    if !cert.complete {
        r.line("budget reached before certification finished; the bound is still valid".into());
    }
    r.verdict("ratio_at_least_half", cert.success);
    r.set("lower_bound", json!(cert.lower_bound));
    r.set("blocks", json!(cert.blocks));
    r.set("ratio", json!(cert.ratio));
    r.set("complete", json!(cert.complete));
    r.set("strategy", json!(cert.strategy));
    r.set("hints", json!(hints));
    r.timing("certify", took);
    if let Some(out) = out {
        format::write_text(out, &cert.to_json(), force)?;
        r.line(format!("wrote {}", out.display()));
        r.set("out", json!(out));
    }
    Ok(r)
}

fn catalog(action: &CatalogAction, force: bool) -> Result<Report, Failure> {
    let cat = Catalog::embedded()?;
    let mut r = Report::new("catalog");
    match action {
        CatalogAction::List => {
            let mut rows = Vec::new();
            for e in cat.entries() {
                r.line(format!("{:<12} {:<34} {:>5} blocks", e.id, e.target.to_string(), e.expected_blocks()));
                rows.push(json!({"id": e.id, "target": e.target.to_string(), "v": e.v(), "blocks": e.expected_blocks()}));
            }
            r.set("entries", json!(rows));
        }
        CatalogAction::Show { id } => {
            let e = cat.get(id)?;
            r.line(format!("{}: {}", e.id, e.target));
            r.line(format!(
                "  {} base blocks over Z_{}{}, increment {}",
                e.orbit.base.len(),
                e.orbit.modulus,
                if e.orbit.infinity { " ∪ {∞}" } else { "" },
                e.orbit.increment
            ));
            r.line(format!("  {} blocks, columns {:?}", e.expected_blocks(), e.columns));
            r.line(format!("  published defining-set bound {}/{}", e.claim.0, e.claim.1));
            for er in &e.errata {
                let printed = match &er.printed {
                    Some(b) => b.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
                    None => "missing".into(),
                };
                r.line(format!("  erratum: base block {} printed as {printed}", er.index));
            }
            let base: Vec<String> =
                e.orbit.base.iter().map(|b| b.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")).collect();
            let group_type = match &e.target {
                Target::Dgdd { group_type, .. } => Some(group_type.to_string()),
                Target::Dd { .. } => None,
            };
            r.set("id", json!(e.id));
            r.set("v", json!(e.v()));
            r.set("group_type", json!(group_type));
            r.set("blocks", json!(e.expected_blocks()));
            r.set("base_blocks", json!(base));
            r.set("modulus", json!(e.orbit.modulus));
            r.set("increment", json!(e.orbit.increment));
            r.set("infinity", json!(e.orbit.infinity));
            r.set("columns", json!(e.columns));
            r.set("claim", json!([e.claim.0, e.claim.1]));
            r.set("errata", json!(e.errata.len()));
        }
        CatalogAction::Build { id, out } => {
            let t = Instant::now();
            let d = cat.build(id)?;
            r.timing("build", t.elapsed());
            r.line(format!("{id}: {} blocks, verified", d.num_blocks()));
            r.verdict("verified", true);
            r.set("blocks", json!(d.num_blocks()));
            r.set("checksum", json!(checksum(&d)));
            if let Some(out) = out {
                format::write(out, &d, force)?;
                r.line(format!("wrote {}", out.display()));
            }
        }
        CatalogAction::Checksum => {
            let text = Catalog::embedded_text();
            let computed = compute_checksum(text);
            let ok = computed == cat.checksum();
            r.line(format!("stored   {}", cat.checksum()));
            r.line(format!("computed {computed}"));
            r.verdict("checksum", ok);
            r.set("stored", json!(cat.checksum()));
            r.set("computed", json!(computed));
        }
    }
    Ok(r)
}

fn td(k: usize, n: usize, out: Option<&Path>, force: bool) -> Result<Report, Failure> {
    let t = Instant::now();
    let td = td_any(k, n)?;
    td.verify()?;
    let d = td.design();
    let mut r = Report::new("td");
    r.timing("build", t.elapsed());
    r.line(format!("TD({k},{n}): {} blocks, verified", d.num_blocks()));
    r.verdict("verified", true);
    r.set("k", json!(k));
    r.set("n", json!(n));
    r.set("blocks", json!(d.num_blocks()));
    if let Some(out) = out {
        format::write(out, d, force)?;
        r.line(format!("wrote {}", out.display()));
    }
    Ok(r)
}

fn gdd_search(
    group_type: &str,
    ks: &[usize],
    budget: Duration,
    out: Option<&Path>,
    cache: IngredientCache,
    force: bool,
) -> Result<Report, Failure> {
    let t = GroupType::parse(group_type).map_err(|e| Failure::usage(e.to_string()))?;
    let start = Instant::now();
    let outcome = search_gdd(&t, ks, &SearchOptions { budget, seed: 0 }, &cache)?;
    let mut r = Report::new("gdd-search");
    r.timing("search", start.elapsed());
    r.set("type", json!(t.to_string()));
    r.set("K", json!(ks));
    match outcome {
        SearchOutcome::Found { design, source } => {
            let how = match source {
                Source::Cache => "cache".to_string(),
                Source::Construction => "construction".to_string(),
                Source::Orbit { nodes } => format!("cyclic search, {nodes} nodes"),
                Source::Search { nodes } => format!("backtracking search, {nodes} nodes"),
            };
            r.line(format!("found a GDD of type {t}: {} blocks ({how})", design.num_blocks()));
            r.verdict("found", true);
            r.set("blocks", json!(design.num_blocks()));
            r.set("source", json!(how));
            if let Some(out) = out {
                format::write(out, &design, force)?;
                r.line(format!("wrote {}", out.display()));
            }
            Ok(r)
        }
        SearchOutcome::NotFound { reason } => Err(Failure::gap(format!("no GDD of type {t} with K={ks:?}: {reason}"))),
    }
}

fn explain_file(file: &Path) -> Result<Report, Failure> {
    let d = load(file)?;
    let mut r = Report::new("explain");
    for l in explain(&d).lines() {
        r.line(l.to_string());
    }
    r.set("leaves", json!(provenance_leaves(d.provenance())));
    Ok(r)
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from_core(e)
    }
}
