//! Subcommand wiring. All randomness flows from `--seed`; stage seeds are
//! derived by labeled hashing inside the library, so identical invocations
//! produce identical artifacts.

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blockwalk::catalog::{self, MeasureKind};
use blockwalk::classify::Outcome;
use blockwalk::matrix::{parse_word, GroupSpec, GroupSpecJson, Word};
use blockwalk::measure::{StepMeasure, StepMeasureJson};
use blockwalk::moduledim::DimensionValue;
use blockwalk::order::TOrder;
use blockwalk::pipeline::{run_pipeline, PipelineConfig};
use blockwalk::stages::recurrent_measure_stages;
use blockwalk::walk::{
    cautiousness_probe, simulate_select, strong_transience_probe, AdmissibleRelation,
    CautiousScale, StatSelect, WalkConfig,
};

use crate::manifest::ManifestBuilder;
use crate::render;

/// Exit code for Unknown / ambiguous verdicts.
pub const EXIT_AMBIGUOUS: i32 = 4;
/// Exit code for computation errors.
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "blockwalk",
    about = "Block decomposition, module dimensions, boundary verdicts and random-walk \
             statistics for finitely generated upper-triangular matrix groups",
    version
)]
pub struct Cli {
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List catalog names or build one group presentation.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Block decomposition with validity witnesses.
    Blocks {
        #[command(flatten)]
        input: SpecInput,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = OrderChoice::U)]
        order: OrderChoice,
        /// Ranked pair list file for a custom total order (JSON [[i,j],...],
        /// 1-based).
        #[arg(long)]
        order_file: Option<PathBuf>,
    },
    /// Dimension reports: for the valid blocks of a group, or for one
    /// module given directly.
    Dim {
        #[command(flatten)]
        input: SpecInput,
        /// ModuleSpec JSON file (bypasses the block decomposition).
        #[arg(long, conflicts_with_all = ["spec", "name"])]
        module: Option<PathBuf>,
        /// Radius grid, comma separated.
        #[arg(long, value_delimiter = ',')]
        radii: Vec<usize>,
        #[arg(long, default_value_t = 6)]
        exponent_bound: i64,
    },
    /// Full classification: blocks, dimensions, wreath checks, verdict.
    Classify {
        #[command(flatten)]
        input: SpecInput,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Monte Carlo walk statistics.
    Simulate(SimulateArgs),
    /// Staged recurrent-measure construction on Z or Z^2.
    Stages {
        #[arg(long, default_value_t = 1)]
        growth_degree: usize,
        #[arg(long, default_value_t = 2)]
        stages: usize,
    },
    /// Chain blocks -> dim -> classify (and optionally simulate) into one
    /// consolidated report.
    Pipeline {
        #[command(flatten)]
        input: SpecInput,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Also run a default simulation with this horizon.
        #[arg(long)]
        walk_n: Option<usize>,
        #[arg(long, default_value_t = 200)]
        walk_walkers: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum CatalogAction {
    List,
    Build {
        /// Catalog name, e.g. lamplighter(3,2) or xyz.
        name: String,
    },
}

#[derive(Args, Debug)]
pub struct SpecInput {
    /// Path to a GroupSpec JSON file.
    #[arg(long, conflicts_with = "name")]
    pub spec: Option<PathBuf>,
    /// Catalog name, e.g. lamplighter(3,2).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: SpecInput,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub walkers: usize,
    /// Checkpoints, comma separated; defaults to the horizon.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<usize>,
    /// Which statistics to collect.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![StatChoice::Range, StatChoice::Drift, StatChoice::Return, StatChoice::Deltarank])]
    pub stat: Vec<StatChoice>,
    #[arg(long, value_enum, default_value_t = MeasureChoice::Uniform)]
    pub measure: MeasureChoice,
    /// Step measure JSON file (overrides --measure).
    #[arg(long)]
    pub measure_file: Option<PathBuf>,
    /// Delta pair: two words, each a comma-separated letter list, joined by
    /// a semicolon, e.g. "M_X;M_X,delta". An empty side is the identity.
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long, value_enum, default_value_t = RelationChoice::Identity)]
    pub relation: RelationChoice,
    /// Cautiousness scaling; enables the cautiousness table.
    #[arg(long, value_enum)]
    pub cautious: Option<ScaleChoice>,
    /// Epsilons for the cautiousness table.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0])]
    pub epsilons: Vec<f64>,
    /// Fit return-frequency decay and report transience consistency.
    #[arg(long, default_value_t = false)]
    pub transience: bool,
    /// Per-axis drift for the sequence-hit counter: counts times with
    /// projection equal to round(drift * t). Enables the hits statistic.
    #[arg(long, value_delimiter = ',')]
    pub gamma_drift: Vec<f64>,
    /// Keep each delta-step's conjugate vector only with this probability.
    #[arg(long)]
    pub delta_color: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderChoice {
    U,
    Rowmajor,
    Colmajor,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StatChoice {
    Range,
    Genrange,
    Drift,
    Cautious,
    Return,
    Deltarank,
    Hits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeasureChoice {
    Uniform,
    Lazy,
    Baselamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RelationChoice {
    Identity,
    Conjvec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleChoice {
    Sqrt,
    Linear,
}

fn load_spec(input: &SpecInput, mb: &mut ManifestBuilder) -> anyhow::Result<GroupSpec> {
    match (&input.spec, &input.name) {
        (Some(path), _) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            mb.record_input("spec", &bytes);
            let json: GroupSpecJson = serde_json::from_slice(&bytes)?;
            Ok(GroupSpec::from_json(&json)?)
        }
        (None, Some(name)) => {
            mb.record_input("catalog-name", name.as_bytes());
            Ok(catalog::build(name)?.spec)
        }
        (None, None) => Err(anyhow!("provide --spec FILE or --name CATALOG_NAME")),
    }
}

fn load_order(
    choice: OrderChoice,
    file: &Option<PathBuf>,
    n: usize,
) -> anyhow::Result<TOrder> {
    Ok(match choice {
        OrderChoice::U => TOrder::U,
        OrderChoice::Rowmajor => TOrder::row_major(n),
        OrderChoice::Colmajor => TOrder::col_major(n),
        OrderChoice::File => {
            let path = file
                .as_ref()
                .ok_or_else(|| anyhow!("--order file needs --order-file PATH"))?;
            let pairs: Vec<(usize, usize)> = serde_json::from_slice(&fs::read(path)?)?;
            let zero_based: Vec<(usize, usize)> =
                pairs.into_iter().map(|(i, j)| (i - 1, j - 1)).collect();
            TOrder::validated_total(zero_based, n)?
        }
    })
}

fn build_measure(
    spec: &GroupSpec,
    choice: MeasureChoice,
    file: &Option<PathBuf>,
    mb: &mut ManifestBuilder,
) -> anyhow::Result<StepMeasure> {
    if let Some(path) = file {
        let bytes = fs::read(path)?;
        mb.record_input("measure", &bytes);
        let json: StepMeasureJson = serde_json::from_slice(&bytes)?;
        let m = StepMeasure::from_json(&json)?;
        m.validate(spec)?;
        return Ok(m);
    }
    let entry = catalog::CatalogEntry {
        name: "adhoc".into(),
        spec: spec.clone(),
        expected_dimension: None,
        expected_verdict: None,
    };
    Ok(match choice {
        MeasureChoice::Uniform => catalog::default_measure(&entry, MeasureKind::UniformSymmetric)?,
        MeasureChoice::Lazy => catalog::default_measure(&entry, MeasureKind::LazyUniform)?,
        MeasureChoice::Baselamp => catalog::default_measure(&entry, MeasureKind::BasePlusLamp)?,
    })
}

fn parse_delta(raw: &str) -> anyhow::Result<(Word, Word)> {
    let mut sides = raw.splitn(2, ';');
    let parse_side = |s: &str| -> Word {
        if s.trim().is_empty() {
            Vec::new()
        } else {
            parse_word(
                &s.split(',')
                    .map(|x| x.trim().to_string())
                    .collect::<Vec<_>>(),
            )
        }
    };
    let a = parse_side(sides.next().unwrap_or(""));
    let b = parse_side(
        sides
            .next()
            .ok_or_else(|| anyhow!("--delta needs two words separated by ';'"))?,
    );
    Ok((a, b))
}

/// Execute the parsed command line; returns the process exit code.
pub fn run_cli(cli: Cli) -> anyhow::Result<i32> {
    if let Some(t) = cli.threads {
        blockwalk::parallel::limit_threads(t);
    }
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Catalog { action } => {
            let mut mb = ManifestBuilder::new("catalog", cli.seed, argv, &cli.out);
            match action {
                CatalogAction::List => {
                    for n in catalog::catalog_names() {
                        println!("{n}");
                    }
                }
                CatalogAction::Build { name } => {
                    let entry = catalog::build(&name)?;
                    let json = serde_json::to_vec_pretty(&entry.spec.to_json())?;
                    let path = mb.write_artifact("groupspec.json", &json)?;
                    println!("{}", String::from_utf8_lossy(&json));
                    eprintln!("wrote {}", path.display());
                }
            }
            mb.finish()?;
            Ok(0)
        }
        Command::Blocks {
            input,
            depth,
            order,
            order_file,
        } => {
            let mut mb = ManifestBuilder::new("blocks", cli.seed, argv, &cli.out);
            let spec = load_spec(&input, &mut mb)?;
            let ord = load_order(order, &order_file, spec.n)?;
            let report = blockwalk::blocks::decompose(&spec, depth, &ord)?;
            let json = serde_json::to_vec_pretty(&report)?;
            mb.write_artifact("blocks.json", &json)?;
            print!("{}", render::blocks_table(&report));
            mb.finish()?;
            Ok(0)
        }
        Command::Dim {
            input,
            module,
            radii,
            exponent_bound,
        } => {
            let mut mb = ManifestBuilder::new("dim", cli.seed, argv, &cli.out);
            if let Some(path) = module {
                let bytes = fs::read(&path)?;
                mb.record_input("module", &bytes);
                let json: blockwalk::moduledim::ModuleSpecJson = serde_json::from_slice(&bytes)?;
                let spec = blockwalk::moduledim::ModuleSpec::from_json(&json)?;
                let grid = if radii.is_empty() {
                    blockwalk::moduledim::DEFAULT_RADII.to_vec()
                } else {
                    radii
                };
                let report = blockwalk::moduledim::dimension_estimate(&spec, &grid)?;
                let json = serde_json::to_vec_pretty(&report)?;
                mb.write_artifact("dimensions.json", &json)?;
                println!("{}", String::from_utf8_lossy(&json));
                mb.finish()?;
                let ambiguous = matches!(report.dimension, DimensionValue::Ambiguous(..));
                return Ok(if ambiguous { EXIT_AMBIGUOUS } else { 0 });
            }
            let spec = load_spec(&input, &mut mb)?;
            let mut config = PipelineConfig {
                seed: cli.seed,
                exponent_bound,
                ..Default::default()
            };
            if !radii.is_empty() {
                config.radii = radii;
            }
            let report = run_pipeline(&spec, &config)?;
            let json = serde_json::to_vec_pretty(&report.dimensions)?;
            mb.write_artifact("dimensions.json", &json)?;
            print!("{}", render::dimension_table(&report.dimensions));
            mb.finish()?;
            let ambiguous = report
                .dimensions
                .iter()
                .any(|(_, d)| matches!(d.dimension, DimensionValue::Ambiguous(..)));
            Ok(if ambiguous { EXIT_AMBIGUOUS } else { 0 })
        }
        Command::Classify { input, depth } => {
            let mut mb = ManifestBuilder::new("classify", cli.seed, argv, &cli.out);
            let spec = load_spec(&input, &mut mb)?;
            let config = PipelineConfig {
                seed: cli.seed,
                depth,
                ..Default::default()
            };
            let report = run_pipeline(&spec, &config)?;
            let json = serde_json::to_vec_pretty(&report)?;
            mb.write_artifact("classify.json", &json)?;
            print!("{}", render::blocks_table(&report.blocks));
            print!("{}", render::dimension_table(&report.dimensions));
            print!("{}", render::verdict_text(&report.verdict));
            mb.finish()?;
            Ok(if report.verdict.outcome == Outcome::Unknown {
                EXIT_AMBIGUOUS
            } else {
                0
            })
        }
        Command::Simulate(args) => {
            let mut mb = ManifestBuilder::new("simulate", cli.seed, argv, &cli.out);
            let spec = load_spec(&args.input, &mut mb)?;
            let measure = build_measure(&spec, args.measure, &args.measure_file, &mut mb)?;
            let checkpoints = if args.checkpoints.is_empty() {
                vec![args.n]
            } else {
                args.checkpoints.clone()
            };
            let config = WalkConfig::new(
                spec,
                measure,
                args.n,
                args.walkers,
                cli.seed,
                checkpoints,
            )?;

            // optional caching keyed by the config digest
            let cache_key = crate::manifest::sha256_hex(
                format!(
                    "{:?}|{:?}|{}|{}|{}|{:?}|{:?}|{:?}",
                    config.spec.to_json(),
                    config.measure.to_json(),
                    config.horizon,
                    config.walkers,
                    config.seed,
                    config.checkpoints,
                    args.stat,
                    (&args.delta, &args.gamma_drift, args.delta_color),
                )
                .as_bytes(),
            );
            // probes always recompute; only plain statistic runs are cached
            let cacheable = !args.transience && args.cautious.is_none();
            let cache_dir = std::env::var_os("BLOCKWALK_CACHE_DIR")
                .map(PathBuf::from)
                .filter(|_| cacheable);
            if let Some(dir) = &cache_dir {
                let hit = dir.join(format!("{cache_key}.json"));
                if hit.exists() {
                    let bytes = fs::read(&hit)?;
                    mb.write_artifact("walk.json", &bytes)?;
                    let stats: blockwalk::walk::WalkStats = serde_json::from_slice(&bytes)?;
                    print!("{}", render::walk_table(&stats));
                    mb.write_artifact("walk.csv", render::walk_csv(&stats).as_bytes())?;
                    mb.finish()?;
                    return Ok(0);
                }
            }

            let want_hits = args.stat.contains(&StatChoice::Hits) || !args.gamma_drift.is_empty();
            let select = StatSelect {
                range: args.stat.contains(&StatChoice::Range),
                gen_range: args.stat.contains(&StatChoice::Genrange),
                drift: args.stat.contains(&StatChoice::Drift)
                    || args.stat.contains(&StatChoice::Cautious),
                return_freq: args.stat.contains(&StatChoice::Return),
                delta: args.stat.contains(&StatChoice::Deltarank),
                hits: want_hits,
                cautious: args.cautious.map(|s| {
                    (
                        match s {
                            ScaleChoice::Sqrt => CautiousScale::Sqrt,
                            ScaleChoice::Linear => CautiousScale::Linear,
                        },
                        args.epsilons.clone(),
                    )
                }),
                delta_color_prob: args.delta_color,
            };
            let relation = match args.relation {
                RelationChoice::Identity => AdmissibleRelation::Identity,
                RelationChoice::Conjvec => AdmissibleRelation::ConjugateVector,
            };
            let delta = args.delta.as_deref().map(parse_delta).transpose()?;
            let gamma: Option<Vec<Vec<i64>>> = if want_hits {
                if args.gamma_drift.is_empty() {
                    return Err(anyhow!("--stat hits needs --gamma-drift d1,d2,..."));
                }
                if args.gamma_drift.len() != config.spec.nvars {
                    return Err(anyhow!(
                        "--gamma-drift needs one component per variable ({} expected)",
                        config.spec.nvars
                    ));
                }
                Some(
                    (1..=args.n)
                        .map(|t| {
                            args.gamma_drift
                                .iter()
                                .map(|d| (d * t as f64).round() as i64)
                                .collect()
                        })
                        .collect(),
                )
            } else {
                None
            };
            let stats = simulate_select(&config, &relation, delta.as_ref(), gamma.as_deref(), &select)?;
            let json = serde_json::to_vec_pretty(&stats)?;
            mb.write_artifact("walk.json", &json)?;
            mb.write_artifact("walk.csv", render::walk_csv(&stats).as_bytes())?;
            if let Some(dir) = &cache_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("{cache_key}.json")), &json)?;
            }
            print!("{}", render::walk_table(&stats));
            if args.transience {
                let report = strong_transience_probe(&config)?;
                let json = serde_json::to_vec_pretty(&report)?;
                mb.write_artifact("transience.json", &json)?;
                println!(
                    "return-frequency decay exponent: {:?} (uniform strong transience \
                     consistent: {})",
                    report.fitted_exponent, report.uniform_strong_transience_consistent
                );
            }
            if let Some(scale) = args.cautious {
                let f = match scale {
                    ScaleChoice::Sqrt => CautiousScale::Sqrt,
                    ScaleChoice::Linear => CautiousScale::Linear,
                };
                let cells = cautiousness_probe(&config, f, &args.epsilons)?;
                let json = serde_json::to_vec_pretty(&cells)?;
                mb.write_artifact("cautious.json", &json)?;
            }
            mb.finish()?;
            Ok(0)
        }
        Command::Stages {
            growth_degree,
            stages,
        } => {
            let mut mb = ManifestBuilder::new("stages", cli.seed, argv, &cli.out);
            let triples = recurrent_measure_stages(growth_degree, stages)?;
            let json = serde_json::to_vec_pretty(&triples)?;
            mb.write_artifact("stages.json", &json)?;
            for t in &triples {
                println!(
                    "stage {}: a = {:.6e}, N = {}, b = {:.6e}, C = {:.6e}, half partial sum = {:.3}",
                    t.stage, t.a, t.n_horizon, t.b, t.c, t.half_partial_sum
                );
            }
            mb.finish()?;
            Ok(0)
        }
        Command::Pipeline {
            input,
            depth,
            walk_n,
            walk_walkers,
        } => {
            let mut mb = ManifestBuilder::new("pipeline", cli.seed, argv, &cli.out);
            let spec = load_spec(&input, &mut mb)?;
            let config = PipelineConfig {
                seed: cli.seed,
                depth,
                ..Default::default()
            };
            let report = run_pipeline(&spec, &config)?;
            let json = serde_json::to_vec_pretty(&report)?;
            mb.write_artifact("pipeline.json", &json)?;
            print!("{}", render::blocks_table(&report.blocks));
            print!("{}", render::dimension_table(&report.dimensions));
            print!("{}", render::verdict_text(&report.verdict));
            if let Some(n) = walk_n {
                let measure = StepMeasure::uniform_symmetric(&spec);
                let config = WalkConfig::new(
                    spec,
                    measure,
                    n,
                    walk_walkers,
                    cli.seed,
                    vec![n / 4, n / 2, n],
                )?;
                let stats = blockwalk::walk::simulate(
                    &config,
                    &AdmissibleRelation::Identity,
                    None,
                )?;
                mb.write_artifact("walk.json", &serde_json::to_vec_pretty(&stats)?)?;
                mb.write_artifact("walk.csv", render::walk_csv(&stats).as_bytes())?;
                print!("{}", render::walk_table(&stats));
            }
            mb.finish()?;
            Ok(if report.verdict.outcome == Outcome::Unknown {
                EXIT_AMBIGUOUS
            } else {
                0
            })
        }
    }
}
