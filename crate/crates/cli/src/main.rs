use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::json;
use spreadsamp::clustering::{up_balanced_clustering_with, ClusteringOptions};
use spreadsamp::disparity::density_disparity_index;
use spreadsamp::gfs::{build_bars, random_order, BarLayout};
use spreadsamp::gms::{greedy_search, GuidingIndex, ScoreMode, SearchConfig};
use spreadsamp::harness::{
    gen_population, lpm1_sample, run_monte_carlo, srs_sample, DesignKind, Layout, PopulationSpec, ProbabilityMode,
    SimulationConfig,
};
use spreadsamp::indices::{balanced_voronoi_index, build_weights, default_neighbours, moran_index, voronoi_index, QMatrix};
use spreadsamp::nms::{nms_design, NmsConfig, NmsDesign, RankingRule};
use spreadsamp::population::fmt_f64;
use spreadsamp::{rng, Population, Sample};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "spreadsamp", version, about = "Spatially balanced sampling designs and spread indices")]
struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for `simulate`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic or CSV-backed population.
    GenPop(GenPop),
    /// UP-balanced clustering of a population into n clusters.
    Cluster(ClusterArgs),
    /// Draw one sample from a design.
    Sample(SampleArgs),
    /// Spread indices of a given sample.
    Index(IndexArgs),
    /// Greedy search over NMS orderings.
    Search(SearchArgs),
    /// Monte Carlo comparison driven by a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Gridded,
    Random,
    Clustered,
    NeymanScott,
    Halton,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbabilityArg {
    Ep,
    UpGradient,
    UpColumn,
}

#[derive(Args)]
struct GenPop {
    #[arg(long, value_enum, default_value_t = LayoutArg::Gridded)]
    layout: LayoutArg,
    /// Population size N (ignored for csv layouts).
    #[arg(long, default_value_t = 100)]
    size: usize,
    /// Expected sample size n.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ProbabilityArg::Ep)]
    probability: ProbabilityArg,
    /// Size column for up-column.
    #[arg(long)]
    column: Option<String>,
    /// Source file for the csv layout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "y")]
    y: String,
    /// Blob count for the clustered layout.
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    /// Blob standard deviation for the clustered layout.
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
}

#[derive(Args)]
struct ClusterArgs {
    /// Population CSV with header `id,x,y,pi`.
    #[arg(long)]
    pop: PathBuf,
    /// Split size for the expanded frame.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct NmsArgs {
    /// Zones per cluster.
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, value_parser = parse_rule, default_value = "centroidal-polar")]
    psi1: RankingRule,
    #[arg(long, value_parser = parse_rule, default_value = "centroidal-polar")]
    psi2: RankingRule,
}

impl NmsArgs {
    fn config(&self) -> NmsConfig {
        NmsConfig {
            m: self.m,
            psi1: self.psi1,
            psi2: self.psi2,
            ..NmsConfig::default()
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    pop: PathBuf,
    /// gfs (input order), gfs-random, nms, srs or lpm1.
    #[arg(long, default_value = "nms")]
    design: String,
    /// Saved NMS/GMS design; overrides --design.
    #[arg(long)]
    from_design: Option<PathBuf>,
    /// Uniform draw for GFS-based designs; drawn from the seed when omitted.
    #[arg(long)]
    r: Option<f64>,
    /// Emit the exact support instead of one sample.
    #[arg(long)]
    support: bool,
    /// Also write the bar pieces as CSV.
    #[arg(long)]
    bars: Option<PathBuf>,
    /// Write the built NMS design as JSON.
    #[arg(long)]
    save_design: Option<PathBuf>,
    #[command(flatten)]
    nms: NmsArgs,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    pop: PathBuf,
    /// 1-based unit ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sample: Vec<usize>,
    /// Indices to compute.
    #[arg(long, value_delimiter = ',', value_parser = parse_index, default_value = "MI,VI,BI,DI")]
    index: Vec<GuidingIndex>,
    /// Neighbour count for MI.
    #[arg(long)]
    k: Option<usize>,
    /// Split size for the DI clustering.
    #[arg(long)]
    delta: Option<f64>,
    /// Write DI's per-unit angles as CSV.
    #[arg(long)]
    units: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    pop: PathBuf,
    #[arg(long, value_parser = parse_index, default_value = "MI")]
    index: GuidingIndex,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 8)]
    children: usize,
    #[arg(long, default_value_t = 2)]
    edits: usize,
    /// Stop once the oriented score reaches this value.
    #[arg(long)]
    target: Option<f64>,
    /// Score by this many Monte Carlo draws instead of exactly.
    #[arg(long)]
    mc: Option<usize>,
    /// Where to write the best design as JSON.
    #[arg(long)]
    design_out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    m: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_rule(s: &str) -> Result<RankingRule, String> {
    RankingRule::parse(s).ok_or_else(|| {
        let names: Vec<&str> = RankingRule::ALL.iter().map(|r| r.name()).collect();
        format!("unknown ranking rule `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_index(s: &str) -> Result<GuidingIndex, String> {
    GuidingIndex::parse(s).ok_or_else(|| format!("unknown index `{s}`; expected MI, VI, BI or DI"))
}

/// A failure that maps to exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return EXIT_INVALID;
    }
    match err.downcast_ref::<spreadsamp::Error>() {
        Some(spreadsamp::Error::Io(_)) => EXIT_IO,
        Some(spreadsamp::Error::Csv(e)) if e.is_io_error() => EXIT_IO,
        Some(_) => EXIT_INVALID,
        None if err.downcast_ref::<serde_json::Error>().is_some() => EXIT_INVALID,
        None => EXIT_IO,
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load_pop(path: &Path) -> Result<Population> {
    if !path.exists() {
        return Err(spreadsamp::Error::Io(io::Error::new(io::ErrorKind::NotFound, format!("{} not found", path.display()))).into());
    }
    Ok(Population::read_csv_path(path)?)
}

fn gen_pop(cli: &Cli, a: &GenPop) -> Result<()> {
    let layout = match a.layout {
        LayoutArg::Gridded => Layout::Gridded,
        LayoutArg::Random => Layout::Random,
        LayoutArg::Clustered => Layout::Clustered {
            clusters: a.clusters,
            spread: a.spread,
        },
        LayoutArg::NeymanScott => Layout::neyman_scott(),
        LayoutArg::Halton => Layout::Halton,
        LayoutArg::Csv => Layout::Csv {
            path: a.csv.clone().ok_or_else(|| invalid("--layout csv needs --csv <file>"))?,
            x: a.x.clone(),
            y: a.y.clone(),
        },
    };
    let probability = match a.probability {
        ProbabilityArg::Ep => ProbabilityMode::Ep { n: a.n },
        ProbabilityArg::UpGradient => ProbabilityMode::UpGradient { n: a.n },
        ProbabilityArg::UpColumn => ProbabilityMode::UpColumn {
            column: a.column.clone().ok_or_else(|| invalid("up-column needs --column <name>"))?,
            n: a.n,
        },
    };
    let pop = gen_population(&PopulationSpec {
        layout,
        size: a.size,
        probability,
        seed: cli.seed,
    })?;
    match cli.format {
        Format::Csv => pop.write_csv(sink(&cli.out)?)?,
        Format::Json => emit_json(&cli.out, &serde_json::to_value(&pop)?)?,
    }
    Ok(())
}

fn cluster(cli: &Cli, a: &ClusterArgs) -> Result<()> {
    let pop = load_pop(&a.pop)?;
    let opts = ClusteringOptions {
        delta: a.delta,
        ..ClusteringOptions::default()
    };
    let part = up_balanced_clustering_with(&pop, None, cli.seed, &opts)?;
    match cli.format {
        Format::Csv => part.write_csv(sink(&cli.out)?)?,
        Format::Json => {
            let mut v = part.sidecar_json();
            v["totals"] = json!(part.totals(pop.pi()));
            v["allocations"] = json!(part
                .allocations()
                .iter()
                .enumerate()
                .map(|(u, a)| json!({"unit": u + 1, "clusters": a.iter().map(|&(c, f)| json!([c + 1, f])).collect::<Vec<_>>()}))
                .collect::<Vec<_>>());
            emit_json(&cli.out, &v)?;
        }
    }
    Ok(())
}

fn write_support(cli: &Cli, layout: &BarLayout) -> Result<()> {
    let support = layout.enumerate_support();
    match cli.format {
        Format::Csv => {
            let mut w = sink(&cli.out)?;
            writeln!(w, "start,end,probability,sample")?;
            for iv in &support {
                let ids: Vec<String> = iv.sample.ids().iter().map(|i| i.to_string()).collect();
                writeln!(w, "{},{},{},{}", fmt_f64(iv.start), fmt_f64(iv.end), fmt_f64(iv.probability()), ids.join(" "))?;
            }
        }
        Format::Json => emit_json(
            &cli.out,
            &json!(support
                .iter()
                .map(|iv| json!({"start": iv.start, "end": iv.end, "sample": iv.sample.ids()}))
                .collect::<Vec<_>>()),
        )?,
    }
    Ok(())
}

fn sample(cli: &Cli, a: &SampleArgs) -> Result<()> {
    let pop = load_pop(&a.pop)?;
    if let Some(r) = a.r {
        if !(0.0..1.0).contains(&r) {
            return Err(invalid(format!("--r must lie in [0, 1), got {r}")));
        }
    }
    let mut draw_rng = rng::stream(cli.seed, rng::tag::DESIGN_DRAW);
    let r = a.r.unwrap_or_else(|| draw_rng.random());
    let mut layout: Option<BarLayout> = None;
    let name: String;
    let drawn = if let Some(path) = &a.from_design {
        let design = NmsDesign::from_json(&std::fs::read_to_string(path)?)?;
        if design.layout().units() != pop.len() {
            return Err(invalid("saved design does not match the population size"));
        }
        name = "saved".into();
        layout = Some(design.layout().clone());
        design.sample(r)
    } else {
        let kind = if a.design == "gfs" {
            None
        } else {
            Some(DesignKind::parse(&a.design).ok_or_else(|| invalid(format!("unknown design `{}`", a.design)))?)
        };
        name = a.design.clone();
        match kind {
            None => {
                let bars = build_bars(&pop, &(0..pop.len()).collect::<Vec<_>>())?;
                let s = bars.draw_sample(r);
                layout = Some(bars);
                s
            }
            Some(DesignKind::GfsRandom) => {
                let bars = build_bars(&pop, &random_order(pop.len(), cli.seed))?;
                let s = bars.draw_sample(r);
                layout = Some(bars);
                s
            }
            Some(DesignKind::Nms) => {
                let design = nms_design(&pop, a.nms.config(), cli.seed)?;
                if let Some(p) = &a.save_design {
                    design.write_json(File::create(p)?)?;
                }
                layout = Some(design.layout().clone());
                design.sample(r)
            }
            Some(DesignKind::Srs) => srs_sample(&pop, pop.sample_size(), &mut draw_rng)?,
            Some(DesignKind::Lpm1) => lpm1_sample(&pop, &mut draw_rng),
            Some(DesignKind::Gms) => return Err(invalid("run `search` and pass its design with --from-design")),
        }
    };
    if let (Some(path), Some(l)) = (&a.bars, &layout) {
        l.write_csv(File::create(path)?)?;
    }
    if a.support {
        let l = layout.ok_or_else(|| invalid("--support needs a GFS-based design"))?;
        return write_support(cli, &l);
    }
    match cli.format {
        Format::Csv => {
            let mut w = sink(&cli.out)?;
            writeln!(w, "id")?;
            for id in drawn.ids() {
                writeln!(w, "{id}")?;
            }
        }
        Format::Json => emit_json(
            &cli.out,
            &json!({"design": name, "r": layout.is_some().then_some(r), "sample": drawn.ids()}),
        )?,
    }
    Ok(())
}

fn index(cli: &Cli, a: &IndexArgs) -> Result<()> {
    let pop = load_pop(&a.pop)?;
    let s = Sample::from_ids(&a.sample)?;
    let s = Sample::checked(&pop, s.members().to_vec())?;
    let mut values: Vec<(GuidingIndex, f64)> = Vec::new();
    let mut detail = serde_json::Map::new();
    for &idx in &a.index {
        let v = match idx {
            GuidingIndex::Moran => {
                let k = a.k.unwrap_or_else(|| default_neighbours(pop.len(), s.len()));
                moran_index(&pop, &s, &build_weights(&pop, k)?)?
            }
            GuidingIndex::Voronoi => voronoi_index(&pop, &s)?,
            GuidingIndex::BalancedVoronoi => balanced_voronoi_index(&pop, &s, &[], &QMatrix::Identity)?,
            GuidingIndex::Disparity => {
                let rep = density_disparity_index(&pop, &s, a.delta, cli.seed)?;
                if let Some(p) = &a.units {
                    rep.write_units_csv(File::create(p)?)?;
                }
                detail.insert("DI_detail".into(), rep.summary_json());
                rep.di
            }
        };
        values.push((idx, v));
    }
    match cli.format {
        Format::Csv => {
            let mut w = sink(&cli.out)?;
            writeln!(w, "index,value")?;
            for (i, v) in &values {
                writeln!(w, "{},{}", i.name(), fmt_f64(*v))?;
            }
        }
        Format::Json => {
            let mut m = serde_json::Map::new();
            for (i, v) in &values {
                m.insert(i.name().into(), json!(v));
            }
            m.extend(detail);
            emit_json(&cli.out, &serde_json::Value::Object(m))?;
        }
    }
    Ok(())
}

fn search(cli: &Cli, a: &SearchArgs) -> Result<()> {
    let pop = load_pop(&a.pop)?;
    let config = SearchConfig {
        iterations: a.iterations,
        target: a.target,
        children: a.children,
        edits: a.edits,
        index: a.index,
        mode: a.mc.map_or(ScoreMode::Exact, ScoreMode::MonteCarlo),
        seed: cli.seed,
        nms: NmsConfig {
            m: a.m,
            ..NmsConfig::default()
        },
        ..SearchConfig::default()
    };
    config.validate().map_err(|e| invalid(e.to_string()))?;
    let res = greedy_search(&pop, &config)?;
    if let Some(p) = &a.design_out {
        res.best.design.write_json(File::create(p)?)?;
    }
    match cli.format {
        Format::Csv => res.write_trace_csv(sink(&cli.out)?)?,
        Format::Json => emit_json(
            &cli.out,
            &json!({
                "index": a.index.name(),
                "best_score": res.best.score,
                "best_seed_score": res.best_seed_score(),
                "seed_scores": res.seed_scores,
                "origin": config.seeds[res.best.origin].name(),
                "provenance": res.best.provenance,
                "evaluated": res.evaluated,
                "total_order": res.best.design.total_order().iter().map(|u| u + 1).collect::<Vec<_>>(),
                "trace": res.trace,
            }),
        )?,
    }
    Ok(())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let mut config: SimulationConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("bad config: {e}")))?;
    if let Some(dir) = &cli.out {
        config.output_dir = dir.clone();
    }
    if cli.seed != 0 {
        config.seed = cli.seed;
    }
    config.validate().map_err(|e| invalid(e.to_string()))?;
    let report = run_monte_carlo(&config)?;
    let files: Vec<String> = report.sizes.iter().map(|s| s.csv.display().to_string()).collect();
    match cli.format {
        Format::Csv => {
            for f in &files {
                println!("{f}");
            }
            println!("{}", report.summary_path.display());
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "csv": files,
                "summary": report.summary_path,
                "failures": report.failures,
            }))?
        ),
    }
    if report.failures > 0 {
        eprintln!("{} index evaluations failed (NaN rows)", report.failures);
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::GenPop(a) => gen_pop(cli, a)?,
        Command::Cluster(a) => cluster(cli, a)?,
        Command::Sample(a) => sample(cli, a)?,
        Command::Index(a) => index(cli, a)?,
        Command::Search(a) => search(cli, a)?,
        Command::Simulate(a) => return simulate(cli, a),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

