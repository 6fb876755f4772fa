//! Command-line harness: point-set generation, metric and net checks,
//! partition and Gram builds, cell partitions, compression experiments,
//! field profiles, and the end-to-end suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use roefield::report::fmt_float;
use roefield::{
    adapted_basis, alpha, alpha_beta_defect, beta, build_stages, cell_dims, epsilon_net, gram,
    greedy_delone, load_delone, load_operator, load_pou, load_space, norm_convergence,
    norm_profile, random_banded, random_banded_grid, rho, run_suite, save_cells, save_delone,
    save_pou, save_site_operator, section, truncate_k, verify_pou, BlockRank, CellPartition,
    ExperimentConfig, FinitePropOperator, GridFunction, GridOperator, LoadedOperator, Outcome,
    Point, SpaceConfig, StageData, Table, TorusSpace,
};

#[derive(Parser)]
#[command(name = "roefield", version, about = "Delone sets, partitions of unity, and finite-propagation operator compression on discretized tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Delone point sets
    #[command(subcommand)]
    Delone(DeloneCmd),
    /// Set-to-set metric and compactness nets
    #[command(subcommand)]
    Chabauty(ChabautyCmd),
    /// Partitions of unity
    #[command(subcommand)]
    Pou(PouCmd),
    /// Gram matrices of partition frames
    #[command(subcommand)]
    Gram(GramCmd),
    /// Voronoi cell partitions and cell dimensions
    #[command(subcommand)]
    Cells(CellsCmd),
    /// Compression experiments along a refinement schedule
    #[command(subcommand)]
    Roe(RoeCmd),
    /// Norm profiles of operator sections over a schedule
    #[command(subcommand)]
    Field(FieldCmd),
    /// Run every experiment and write CSV tables plus a JSON summary
    Suite(SuiteArgs),
}

#[derive(Subcommand)]
enum DeloneCmd {
    /// Greedy farthest-point set for a target covering radius
    Gen {
        /// Target covering radius
        #[arg(long = "target-r")]
        target_r: f64,
        /// Seed point coordinates, comma separated
        #[arg(long)]
        seed: String,
        /// Output point-set file
        #[arg(long)]
        out: PathBuf,
        /// Space config file (default: unit circle, 1024 nodes)
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChabautyCmd {
    /// Distance between two point-set files
    Rho {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Build an eps-net and check coverage of candidate sets
    Net {
        #[arg(long)]
        eps: f64,
        /// Directory of candidate point-set files
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PouCmd {
    /// Build the partition of unity subordinate to a point set
    Build {
        #[arg(long)]
        delone: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GramCmd {
    /// Gram matrix of a stored partition of unity
    Build {
        #[arg(long)]
        pou: PathBuf,
        /// Write the Gram matrix as a site-operator file
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CellsCmd {
    /// Voronoi cells of a point set, with per-cell dimension counts
    Build {
        #[arg(long)]
        delone: PathBuf,
        /// Output assignment file
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
        /// Fine-stage point set for dimension counts (default: the coarse set)
        #[arg(long)]
        fine: Option<PathBuf>,
        /// Write per-cell dimensions as CSV
        #[arg(long)]
        dims: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RoeArgs {
    /// Experiment config file (default: standard schedule on the unit circle)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RoeCmd {
    /// Norm preservation of the compression map per stage
    Alpha(RoeArgs),
    /// Round-trip deviation of the expansion after compression per stage
    Beta(RoeArgs),
    /// Reconstruction defect for rank-limited operators per stage
    Defect(RoeArgs),
    /// Compressed norms of the truncated cosine multiplier per stage
    Norms(RoeArgs),
}

#[derive(Subcommand)]
enum FieldCmd {
    /// Fiber norms and continuity gaps of an operator section
    Run {
        /// Experiment config file providing the schedule
        #[arg(long)]
        schedule: PathBuf,
        /// Grid-operator file, the fiber at infinity
        #[arg(long)]
        op: PathBuf,
    },
}

#[derive(Args)]
struct SuiteArgs {
    /// Experiment config file (default config when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Delone(DeloneCmd::Gen { target_r, seed, out, space }) => {
            delone_gen(target_r, &seed, &out, space.as_deref())
        }
        Command::Chabauty(ChabautyCmd::Rho { a, b, space }) => {
            chabauty_rho(&a, &b, space.as_deref())
        }
        Command::Chabauty(ChabautyCmd::Net { eps, candidates, space }) => {
            chabauty_net(eps, &candidates, space.as_deref())
        }
        Command::Pou(PouCmd::Build { delone, out, space }) => {
            pou_build(&delone, &out, space.as_deref())
        }
        Command::Gram(GramCmd::Build { pou, dump }) => gram_build(&pou, dump.as_deref()),
        Command::Cells(CellsCmd::Build { delone, out, space, fine, dims }) => {
            cells_build(&delone, &out, space.as_deref(), fine.as_deref(), dims.as_deref())
        }
        Command::Roe(RoeCmd::Alpha(args)) => roe_alpha(&load_config(args.config.as_deref())?),
        Command::Roe(RoeCmd::Beta(args)) => roe_beta(&load_config(args.config.as_deref())?),
        Command::Roe(RoeCmd::Defect(args)) => roe_defect(&load_config(args.config.as_deref())?),
        Command::Roe(RoeCmd::Norms(args)) => roe_norms(&load_config(args.config.as_deref())?),
        Command::Field(FieldCmd::Run { schedule, op }) => field_run(&schedule, &op),
        Command::Suite(args) => suite(args.config.as_deref(), args.out),
    }
}

fn space_or_default(path: Option<&Path>) -> Result<TorusSpace> {
    match path {
        Some(p) => Ok(load_space(p).with_context(|| format!("loading space {}", p.display()))?),
        None => Ok(SpaceConfig { dim: 1, side: 1.0, grid_n: 1024, basepoint: vec![0.0] }.build()?),
    }
}

fn parse_point(space: &TorusSpace, text: &str) -> Result<Point> {
    let coords: Vec<f64> = text
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("seed {text:?} is not a comma-separated point"))?;
    Ok(space.point(&coords)?)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => ExperimentConfig::load(p)
            .with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn delone_gen(target_r: f64, seed: &str, out: &Path, space: Option<&Path>) -> Result<bool> {
    let space = space_or_default(space)?;
    let seed = parse_point(&space, seed)?;
    let d = greedy_delone(&space, target_r, seed)?;
    ensure_parent(out)?;
    save_delone(out, &d)?;
    println!("sites = {}", d.len());
    println!("r(D) = {}", fmt_float(d.packing_radius()));
    println!("R(D) = {}", fmt_float(d.covering_radius()));
    Ok(true)
}

fn chabauty_rho(a: &Path, b: &Path, space: Option<&Path>) -> Result<bool> {
    let space = space_or_default(space)?;
    let da = load_delone(a, &space).with_context(|| format!("loading {}", a.display()))?;
    let db = load_delone(b, &space).with_context(|| format!("loading {}", b.display()))?;
    let result = rho(&space, da.points(), db.points())?;
    println!("rho = {}", fmt_float(result.value));
    Ok(true)
}

fn chabauty_net(eps: f64, candidates: &Path, space: Option<&Path>) -> Result<bool> {
    let space = space_or_default(space)?;
    let mut files: Vec<PathBuf> = fs::read_dir(candidates)
        .with_context(|| format!("reading {}", candidates.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .json candidates in {}", candidates.display());
    }
    let sets: Vec<Vec<Point>> = files
        .iter()
        .map(|p| Ok(load_delone(p, &space)?.points().to_vec()))
        .collect::<Result<_>>()?;
    let net = epsilon_net(&space, eps, &sets)?;
    let mut covered = 0usize;
    for (file, cov) in files.iter().zip(&net.coverage) {
        let name = file.file_name().unwrap_or_default().to_string_lossy();
        let verdict = if cov.ok { "covered" } else { "NOT covered" };
        println!(
            "{name}: rho = {} via net element {} ({verdict})",
            fmt_float(cov.rho),
            cov.net_index
        );
        covered += cov.ok as usize;
    }
    println!("covered {covered}/{} at eps = {}", files.len(), fmt_float(eps));
    Ok(covered == files.len())
}

fn pou_build(delone: &Path, out: &Path, space: Option<&Path>) -> Result<bool> {
    let space = space_or_default(space)?;
    let d = load_delone(delone, &space)?;
    let pou = roefield::build_pou(&d)?;
    ensure_parent(out)?;
    save_pou(out, &pou)?;
    let report = verify_pou(&pou);
    println!("sites = {}", pou.len());
    println!("r = {}", fmt_float(pou.packing_radius()));
    println!("R = {}", fmt_float(pou.covering_radius()));
    println!("row_sum_dev = {}", fmt_float(report.max_row_sum_dev));
    println!("lebesgue = {}", fmt_float(report.lebesgue_empirical));
    println!("lebesgue_bound = {}", fmt_float(report.lebesgue_bound));
    Ok(true)
}

fn gram_build(pou_path: &Path, dump: Option<&Path>) -> Result<bool> {
    let pou = load_pou(pou_path)?;
    let g = gram(&pou)?;
    println!("lambda_min = {}", fmt_float(g.lambda_min()));
    println!("cond = {}", fmt_float(g.cond()));
    if let Some(path) = dump {
        ensure_parent(path)?;
        let op = FinitePropOperator::new(pou.delone().clone(), g.matrix().clone())?;
        save_site_operator(path, &op)?;
        println!("matrix -> {}", path.display());
    }
    Ok(true)
}

fn cells_build(
    delone: &Path,
    out: &Path,
    space: Option<&Path>,
    fine: Option<&Path>,
    dims: Option<&Path>,
) -> Result<bool> {
    let space = space_or_default(space)?;
    let d = load_delone(delone, &space)?;
    let cells = roefield::voronoi_cells(&space, &d);
    ensure_parent(out)?;
    save_cells(out, &cells)?;
    println!("cells = {}", cells.cells().len());
    println!("min_cell_nodes = {}", cells.min_cell_size());
    if let Some(path) = dims {
        let fine_set = match fine {
            Some(p) => load_delone(p, &space)?,
            None => d.clone(),
        };
        let pou = roefield::build_pou(&fine_set)?;
        let counts = cell_dims(&pou, &cells);
        let mut table = Table::new("dims.csv", &["u", "m_u"]);
        for (u, &m_u) in counts.m_u.iter().enumerate() {
            table.push(vec![u.to_string(), m_u.to_string()]);
        }
        ensure_parent(path)?;
        fs::write(path, table.to_csv())?;
        println!("m_min = {}", counts.m_min);
        println!("m_max = {}", counts.m_max);
    }
    Ok(true)
}

struct Rig {
    space: TorusSpace,
    stages: Vec<StageData>,
}

fn build_rig(config: &ExperimentConfig) -> Result<Rig> {
    let space = config.space.build()?;
    let seed = space.point(&config.seeds.greedy)?;
    let stages = build_stages(&space, &config.schedule, seed)?;
    Ok(Rig { space, stages })
}

fn coarse_cells(rig: &Rig) -> CellPartition {
    let coarse = 1.min(rig.stages.len() - 1);
    roefield::voronoi_cells(&rig.space, rig.stages[coarse].delone())
}

fn stage_seed(config: &ExperimentConfig, stage: usize) -> u64 {
    config.seeds.rng ^ ((stage as u64 + 1) << 32)
}

fn write_rows(config: &ExperimentConfig, name: &str, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut table = Table::new(name, &["n", "R_cover", "value"]);
    for &(n, r_cover, value) in rows {
        table.push(vec![n.to_string(), fmt_float(r_cover), fmt_float(value)]);
        println!("n = {n}  R_cover = {}  value = {}", fmt_float(r_cover), fmt_float(value));
    }
    fs::create_dir_all(&config.output_dir)?;
    table.write(&config.output_dir)?;
    println!("wrote {}", config.output_dir.join(name).display());
    Ok(())
}

fn roe_alpha(config: &ExperimentConfig) -> Result<bool> {
    let rig = build_rig(config)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, stage) in rig.stages.iter().enumerate() {
        let t = random_banded(stage.delone(), 2.0 * stage.r_cover(), stage_seed(config, i))?;
        let value = alpha(stage.iso(), &t)?.norm();
        ok &= (value - t.norm()).abs() < config.tolerances.isometry;
        rows.push((i + 1, stage.r_cover(), value));
    }
    write_rows(config, "roe_alpha.csv", &rows)?;
    println!("norm_preserved = {ok}");
    Ok(ok)
}

fn roe_beta(config: &ExperimentConfig) -> Result<bool> {
    let rig = build_rig(config)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, stage) in rig.stages.iter().enumerate() {
        let t = random_banded(stage.delone(), 2.0 * stage.r_cover(), stage_seed(config, i))?;
        let back = beta(stage.iso(), &alpha(stage.iso(), &t)?)?;
        let value = back
            .matrix()
            .iter()
            .zip(t.matrix().iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        ok &= value < config.tolerances.beta_alpha;
        rows.push((i + 1, stage.r_cover(), value));
    }
    write_rows(config, "roe_beta.csv", &rows)?;
    println!("round_trip = {ok}");
    Ok(ok)
}

fn roe_defect(config: &ExperimentConfig) -> Result<bool> {
    let rig = build_rig(config)?;
    let cells = coarse_cells(&rig);
    let block = BlockRank::new(&cells, config.block_rank)?;
    let last = rig.stages.last().expect("validated schedule is nonempty");
    let prep = adapted_basis(last.pou(), &cells, last.gram(), config.block_rank)?;
    let input = prep
        .compress(&random_banded_grid(&rig.space, config.band, config.seeds.rng)?)?
        .normalized();
    let defect_rows = alpha_beta_defect(&rig.stages, &input, &cells, &block)?;
    let rows: Vec<(usize, f64, f64)> =
        defect_rows.iter().map(|r| (r.n, r.r_cover, r.defect)).collect();
    let ok = defect_rows
        .iter()
        .filter(|r| r.m_min > config.block_rank)
        .all(|r| r.defect < config.tolerances.reconstruction);
    write_rows(config, "roe_defect.csv", &rows)?;
    println!("reconstructed = {ok}");
    Ok(ok)
}

fn roe_norms(config: &ExperimentConfig) -> Result<bool> {
    let rig = build_rig(config)?;
    let cells = coarse_cells(&rig);
    let full = BlockRank::new(&cells, cells.min_cell_size())?;
    let two_pi = std::f64::consts::TAU;
    let side = rig.space.side();
    let f = GridFunction::from_fn(rig.space, |p| (two_pi * p.coords()[0] / side).cos());
    let s = truncate_k(&GridOperator::multiplication(&f), &cells, &full)?;
    let data = norm_convergence(&rig.stages, &s)?;
    let rows: Vec<(usize, f64, f64)> =
        data.rows.iter().map(|r| (r.n, r.r_cover, r.value)).collect();
    let identity_dev = data.rows.iter().fold(0.0f64, |a, r| a.max(r.identity_dev));
    let ok = identity_dev < config.tolerances.norm_identity
        && data.final_gap() < config.tolerances.norm_final_rel * data.s_norm;
    write_rows(config, "roe_norm.csv", &rows)?;
    println!("norm_of_limit = {}", fmt_float(data.s_norm));
    println!("final_gap = {}", fmt_float(data.final_gap()));
    println!("converged = {ok}");
    Ok(ok)
}

fn field_run(schedule: &Path, op: &Path) -> Result<bool> {
    let config = load_config(Some(schedule))?;
    let rig = build_rig(&config)?;
    let source = match load_operator(op)? {
        LoadedOperator::Grid(g) => g,
        LoadedOperator::Sites(_) => bail!(
            "{}: field sections need a grid operator (\"kind\": \"grid\")",
            op.display()
        ),
    };
    let sec = section(&source, &rig.stages)?;
    let profile = norm_profile(&sec)?;
    let mut table = Table::new("field.csv", &["t", "fiber_norm", "continuity_gap"]);
    for row in &profile.rows {
        table.push(vec![
            row.t.to_string(),
            fmt_float(row.fiber_norm),
            fmt_float(row.continuity_gap),
        ]);
        println!(
            "t = {}  fiber_norm = {}  continuity_gap = {}",
            row.t,
            fmt_float(row.fiber_norm),
            fmt_float(row.continuity_gap)
        );
    }
    fs::create_dir_all(&config.output_dir)?;
    table.write(&config.output_dir)?;
    println!("limit_norm = {}", fmt_float(profile.limit_norm));
    let contraction_ok = sec.contraction_defect() <= config.tolerances.field_contraction;
    let gap_ok = profile.final_gap()
        <= config.tolerances.norm_final_rel * profile.limit_norm + config.tolerances.norm_identity;
    println!("contraction = {contraction_ok}");
    println!("continuity = {gap_ok}");
    Ok(contraction_ok && gap_ok)
}

fn suite(config: Option<&Path>, out: Option<PathBuf>) -> Result<bool> {
    let mut config = load_config(config)?;
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    let report = run_suite(&config)?;
    for a in &report.assertions {
        let label = match a.outcome {
            Outcome::Passed => "PASS",
            Outcome::Failed => "FAIL",
            Outcome::Skipped => "SKIP",
        };
        println!("{label} {} ({})", a.name, a.detail);
    }
    let failed = report.assertions.iter().filter(|a| a.outcome == Outcome::Failed).count();
    let skipped = report.assertions.iter().filter(|a| a.outcome == Outcome::Skipped).count();
    println!(
        "{} assertions: {} failed, {} skipped",
        report.assertions.len(),
        failed,
        skipped
    );
    println!("summary -> {}", config.output_dir.join("summary.json").display());
    Ok(report.passed)
}
