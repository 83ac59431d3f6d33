use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hgnn_space::analysis::{edf_of_records, emit_report, rank_choices};
use hgnn_space::designspace::{
    all_strata, cardinality, condensed_space, full_space, sample_controlled, DesignSpace, DEFAULT_SAMPLES,
};
use hgnn_space::hgraph::{generate_synthetic, save_graph, SyntheticSpec};
use hgnn_space::model::DesignConfig;
use hgnn_space::runner::{self, read_results, ExperimentPlan};
use hgnn_space::train::Task;
use hgnn_space::transform::MetaPath;
use hgnn_space::Result;

#[derive(Parser)]
#[command(name = "hgnn-space", version, about = "Heterogeneous GNN design-space exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or sample a design space.
    Space {
        #[command(subcommand)]
        action: SpaceAction,
    },
    /// Run every trial of an experiment plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Worker threads; overrides the plan, and is overridden by HGNN_SPACE_THREADS.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Keep finished trials of an earlier run of the same plan.
        #[arg(long)]
        resume: bool,
    },
    /// Rank design choices or plot score distributions.
    Analyze {
        #[command(subcommand)]
        action: AnalyzeAction,
    },
    /// Write a planted-partition academic graph bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        papers: usize,
        #[arg(long, default_value_t = 1000)]
        authors: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.9)]
        boost: f64,
        /// Author-paper edges; defaults to three per paper.
        #[arg(long)]
        edges: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceName {
    Full,
    Condensed,
}

impl SpaceName {
    fn space(self) -> DesignSpace {
        match self {
            SpaceName::Full => full_space(),
            SpaceName::Condensed => condensed_space(),
        }
    }
}

#[derive(Subcommand)]
enum SpaceAction {
    /// Print every dimension and its choices.
    Describe {
        #[arg(long, value_enum, default_value = "full")]
        space: SpaceName,
    },
    /// Print the number of configurations in both spaces.
    Cardinality,
    /// Draw a stratified sample and write one configuration per line.
    Sample(SampleArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum, default_value = "full")]
    space: SpaceName,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws guaranteed for every (family, micro) pair.
    #[arg(long, default_value_t = 2)]
    strata_hits: usize,
    /// `nc:<type>:<classes>` or `lp:<relation>`.
    #[arg(long)]
    task: Task,
    /// Comma-separated `name=rel1/rel2` chains.
    #[arg(long, default_value = "")]
    metapaths: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeAction {
    /// Average rank of each choice of one dimension.
    Rank {
        #[arg(long)]
        dim: String,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Empirical distribution of best scores, one curve per results file.
    Edf {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn curve_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn sample(args: SampleArgs) -> Result<()> {
    let space = args.space.space();
    let mut base = DesignConfig::rgcn(args.task);
    base.metapaths = args
        .metapaths
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<MetaPath>>>()?;
    let strata = if args.strata_hits > 0 { all_strata(&space, args.strata_hits)? } else { Vec::new() };
    let configs = sample_controlled(&space, &base, args.n, &strata, args.seed)?;
    let text: String = configs.iter().map(|c| format!("{c}\n")).collect();
    match args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Space { action } => match action {
            SpaceAction::Describe { space } => {
                let space = space.space();
                println!("{} ({} configurations)", space.name, cardinality(&space));
                for d in &space.dimensions {
                    println!("  {:<13} {}", d.name, d.choices.join(" | "));
                }
            }
            SpaceAction::Cardinality => {
                let full = cardinality(&full_space());
                let condensed = cardinality(&condensed_space());
                println!("full       {full}");
                println!("condensed  {condensed}");
                println!("ratio      {:.1}", full as f64 / condensed as f64);
            }
            SpaceAction::Sample(args) => sample(args)?,
        },
        Command::Run {
            plan,
            parallelism,
            resume,
        } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(p) = parallelism {
                plan.parallelism = p.max(1);
            }
            let summary = if resume { runner::resume(plan)? } else { runner::run_plan(plan)? };
            println!(
                "{}: {} trials, {} executed, {} failed",
                summary.output.display(),
                summary.total,
                summary.executed,
                summary.failed
            );
        }
        Command::Analyze { action } => match action {
            AnalyzeAction::Rank { dim, results, out } => {
                let (_, records) = read_results(&results)?;
                let table = rank_choices(&records, &dim)?;
                for c in &table.choices {
                    println!("{:<14} {:.3}", c.choice, c.average_rank);
                }
                println!("{} complete setups, {} incomplete", table.setups, table.incomplete);
                for p in emit_report(&[table], &[], &out)? {
                    println!("wrote {}", p.display());
                }
            }
            AnalyzeAction::Edf { results, out } => {
                let mut curves = Vec::new();
                for path in &results {
                    let (_, records) = read_results(path)?;
                    curves.push(edf_of_records(&curve_name(path), &records)?);
                }
                for p in emit_report(&[], &curves, &out)? {
                    println!("wrote {}", p.display());
                }
            }
        },
        Command::Synth {
            out,
            papers,
            authors,
            classes,
            boost,
            edges,
            seed,
        } => {
            let mut spec = SyntheticSpec::academic(papers, authors, classes, boost, seed);
            if let Some(e) = edges {
                spec.relations[0].edges = e;
            }
            let g = generate_synthetic(&spec)?;
            save_graph(&g, &out)?;
            println!("wrote {} ({} nodes)", out.display(), g.num_nodes());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
