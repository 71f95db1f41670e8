//! Command-line surface: compression, single-cell training, prediction,
//! the cached `(h, C)` grid search, singular-value decay reports and
//! synthetic benchmarks. Exit codes: 0 success, 1 usage or I/O failure,
//! 2 when some grid cells failed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use hss_svm::cluster::build_tree;
use hss_svm::dataset::{apply_permutation, parse_sparse_rows, Dataset};
use hss_svm::hss::{compress, factor_shifted, write_hss, CompressionConfig};
use hss_svm::kernel::{dense_kernel_capped, KernelAccessor, KernelSpec};
use hss_svm::linalg::sym_eigen;
use hss_svm::rng::SplitMix64;
use hss_svm::svm::{
    load_model, save_model, train_grid, train_single, BetaChoice, GridKnobs, GridRow,
};
use hss_svm::synth;

#[derive(Parser)]
#[command(
    name = "hss-svm",
    about = "Gaussian-kernel SVM training on hierarchically compressed kernel matrices",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress the kernel matrix of a dataset and report structure stats
    Compress(CompressArgs),
    /// Train a single (h, C) model and save it
    Train(TrainArgs),
    /// Predict labels for a dataset using a saved model
    Predict(PredictArgs),
    /// Grid search over (h, C) with one compression/factorization per h
    Grid(GridArgs),
    /// Singular-value decay of the dense kernel matrix per bandwidth
    SvdDecay(SvdDecayArgs),
    /// Compression/factorization/solve timings on synthetic data
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct CommonKnobs {
    /// Relative truncation tolerance
    #[arg(long = "rel-tol", default_value_t = 1.0)]
    rel_tol: f64,
    /// Absolute truncation tolerance
    #[arg(long = "abs-tol", default_value_t = 0.1)]
    abs_tol: f64,
    /// Rank cap for off-diagonal generators
    #[arg(long = "max-rank", default_value_t = 200)]
    max_rank: usize,
    /// Points per leaf of the cluster tree
    #[arg(long = "leaf-size", default_value_t = 128)]
    leaf_size: usize,
    /// ADMM penalty: a number, or "auto" for the size-tiered schedule
    #[arg(long, default_value = "auto")]
    beta: String,
    /// Fixed ADMM iteration count
    #[arg(long = "max-it", default_value_t = 10)]
    max_it: usize,
    /// Seed for every random choice (clustering, probing, splits)
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for independent grid cells
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    /// Remap 0/1 labels to -1/+1 while parsing
    #[arg(long)]
    remap01: bool,
    /// Size cap for dense reference operations
    #[arg(long = "oracle-cap", default_value_t = 4096)]
    oracle_cap: usize,
    /// Accepted for command-line compatibility; ignored
    #[arg(long = "hss-approximate-neighbors")]
    hss_approximate_neighbors: Option<usize>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl CommonKnobs {
    fn beta_choice(&self) -> Result<BetaChoice<f64>, String> {
        if self.beta == "auto" {
            Ok(BetaChoice::Auto)
        } else {
            let v: f64 = self
                .beta
                .parse()
                .map_err(|_| format!("--beta expects a number or \"auto\", got `{}`", self.beta))?;
            Ok(BetaChoice::Fixed(v))
        }
    }

    fn grid_knobs(&self) -> Result<GridKnobs<f64>, String> {
        Ok(GridKnobs {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_rank: self.max_rank,
            leaf_size: self.leaf_size,
            beta: self.beta_choice()?,
            max_it: self.max_it,
            seed: self.seed,
            threads: self.threads.max(1),
        })
    }

    fn warn_noop_flags(&self) {
        if self.hss_approximate_neighbors.is_some() {
            eprintln!(
                "notice: --hss-approximate-neighbors is accepted for compatibility and ignored"
            );
        }
    }
}

#[derive(Args)]
struct CompressArgs {
    /// Training data in sparse-row text format
    #[arg(long)]
    data: PathBuf,
    /// Kernel bandwidth (single value)
    #[arg(long = "h", default_value = "1")]
    h: String,
    /// Optional binary dump of the compressed operator
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    knobs: CommonKnobs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output model file
    #[arg(long)]
    model: PathBuf,
    /// Kernel bandwidth (single value)
    #[arg(long = "h", default_value = "1")]
    h: String,
    /// Box bound (single value)
    #[arg(long = "C", default_value = "1")]
    c: String,
    #[command(flatten)]
    knobs: CommonKnobs,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,
    /// Data to classify (sparse-row text format)
    #[arg(long)]
    test: PathBuf,
    /// Predictions output path (one ±1 per line)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    knobs: CommonKnobs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    /// Labeled evaluation data
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated bandwidth grid
    #[arg(long = "h", default_value = "0.1,1,10")]
    h: String,
    /// Comma-separated box-bound grid
    #[arg(long = "C", default_value = "0.1,1,10")]
    c: String,
    /// Results CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory to save the per-cell models into
    #[arg(long = "models-dir")]
    models_dir: Option<PathBuf>,
    #[command(flatten)]
    knobs: CommonKnobs,
}

#[derive(Args)]
struct SvdDecayArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "h", default_value = "0.1,1,10")]
    h: String,
    /// Analyze a random subset of this many points (seeded)
    #[arg(long)]
    subsample: Option<usize>,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    knobs: CommonKnobs,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated synthetic training sizes
    #[arg(long, default_value = "20000,40000")]
    sizes: String,
    /// Feature count of the synthetic data
    #[arg(long, default_value_t = 8)]
    features: usize,
    /// Kernel bandwidth
    #[arg(long = "h", default_value = "1")]
    h: String,
    /// Repetitions per size
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    knobs: CommonKnobs,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Grid(a) => cmd_grid(a),
        Command::SvdDecay(a) => cmd_svd_decay(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn load_dataset(path: &Path, remap01: bool) -> Result<Dataset<f64>, String> {
    let file =
        File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    parse_sparse_rows(BufReader::new(file), remap01)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| format!("bad {what} list `{s}`"))?;
    if vals.is_empty() {
        return Err(format!("empty {what} list"));
    }
    Ok(vals)
}

fn parse_single(s: &str, what: &str) -> Result<f64, String> {
    let vals = parse_list(s, what)?;
    if vals.len() != 1 {
        return Err(format!("expected a single {what} value, got `{s}`"));
    }
    Ok(vals[0])
}

/// Six significant digits; plain decimal in a readable range, scientific
/// outside it.
fn fmt_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return "nan".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).clamp(0, 17) as usize;
    format!("{v:.decimals$}")
}

fn fmt_time(v: f64) -> String {
    if !v.is_finite() {
        return "nan".into();
    }
    format!("{v:.3}")
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>, String> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| format!("cannot create {}: {e}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn cmd_compress(a: CompressArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let h = parse_single(&a.h, "h")?;
    let ds = load_dataset(&a.data, a.knobs.remap01)?;
    let spec = KernelSpec::gaussian(h).map_err(|e| e.to_string())?;
    let (tree, perm) =
        build_tree(&ds, a.knobs.leaf_size, a.knobs.seed).map_err(|e| e.to_string())?;
    let permuted = apply_permutation(&ds, &perm).map_err(|e| e.to_string())?;
    let acc = KernelAccessor::new(spec, &permuted);
    let hss = compress(
        &acc,
        &tree,
        &CompressionConfig {
            rel_tol: a.knobs.rel_tol,
            abs_tol: a.knobs.abs_tol,
            max_rank: a.knobs.max_rank,
            seed: a.knobs.seed,
        },
    )
    .map_err(|e| e.to_string())?;
    let capped = hss.audits().filter(|(_, au)| au.rank_capped).count();
    println!("d: {}", ds.len());
    println!("features: {}", ds.num_features());
    println!("leaf_size: {}", a.knobs.leaf_size);
    println!("hss_rank: {}", hss.hss_rank());
    println!("memory_mb: {}", fmt_sig6(hss.memory_bytes() as f64 / 1048576.0));
    println!("compress_s: {}", fmt_time(hss.compress_seconds()));
    println!("rank_capped_nodes: {capped}");
    if let Some(out) = &a.out {
        let mut w = BufWriter::new(
            File::create(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?,
        );
        write_hss(&hss, &mut w).map_err(|e| e.to_string())?;
        w.flush().map_err(|e| e.to_string())?;
        println!("wrote: {}", out.display());
    }
    Ok(0)
}

fn cmd_train(a: TrainArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let h = parse_single(&a.h, "h")?;
    let c = parse_single(&a.c, "C")?;
    let ds = load_dataset(&a.data, a.knobs.remap01)?;
    let knobs = a.knobs.grid_knobs()?;
    let (model, row) = train_single(&ds, h, c, &knobs).map_err(|e| e.to_string())?;
    let mut w = BufWriter::new(
        File::create(&a.model)
            .map_err(|e| format!("cannot create {}: {e}", a.model.display()))?,
    );
    save_model(&model, &mut w).map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())?;
    println!("d: {}", ds.len());
    println!("support_vectors: {}", model.num_support_vectors());
    println!("bias: {}", fmt_sig6(model.bias()));
    println!("hss_rank: {}", row.hss_rank);
    println!("compress_s: {}", fmt_time(row.compress_s));
    println!("factor_s: {}", fmt_time(row.factor_s));
    println!("admm_s: {}", fmt_time(row.admm_s));
    println!("wrote: {}", a.model.display());
    Ok(0)
}

fn cmd_predict(a: PredictArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let mut f = BufReader::new(
        File::open(&a.model)
            .map_err(|e| format!("cannot open model {}: {e}", a.model.display()))?,
    );
    let model = load_model::<f64, _>(&mut f).map_err(|e| e.to_string())?;
    let test = load_dataset(&a.test, a.knobs.remap01)?;
    let predictions: Vec<i8> = (0..test.len())
        .map(|i| model.predict(test.point(i)))
        .collect();
    if let Some(out) = &a.out {
        let mut w = BufWriter::new(
            File::create(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?,
        );
        for &p in &predictions {
            writeln!(w, "{}", if p == 1 { "+1" } else { "-1" }).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    } else {
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        for &p in &predictions {
            writeln!(w, "{}", if p == 1 { "+1" } else { "-1" }).map_err(|e| e.to_string())?;
        }
    }
    let correct = predictions
        .iter()
        .zip(test.labels())
        .filter(|(p, y)| **p == **y)
        .count();
    println!(
        "accuracy_pct: {}",
        fmt_sig6(100.0 * correct as f64 / test.len() as f64)
    );
    Ok(0)
}

const GRID_CSV_HEADER: &str = "h,C,accuracy_pct,compress_s,factor_s,admm_s,memory_mb,hss_rank";

fn grid_csv_row(row: &GridRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        fmt_sig6(row.h),
        fmt_sig6(row.c),
        fmt_sig6(row.accuracy_pct),
        fmt_time(row.compress_s),
        fmt_time(row.factor_s),
        fmt_time(row.admm_s),
        fmt_sig6(row.memory_mb),
        row.hss_rank
    )
}

fn cmd_grid(a: GridArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let h_list = parse_list(&a.h, "h")?;
    let c_list = parse_list(&a.c, "C")?;
    let train = load_dataset(&a.data, a.knobs.remap01)?;
    let test = load_dataset(&a.test, a.knobs.remap01)?;
    let knobs = a.knobs.grid_knobs()?;
    let out = train_grid(&train, &test, &h_list, &c_list, &knobs).map_err(|e| e.to_string())?;
    let mut w = out_writer(&a.out)?;
    writeln!(w, "{GRID_CSV_HEADER}").map_err(|e| e.to_string())?;
    let mut any_failed = false;
    for row in &out.rows {
        writeln!(w, "{}", grid_csv_row(row)).map_err(|e| e.to_string())?;
        if let Some(err) = &row.error {
            any_failed = true;
            eprintln!("cell h={} C={} failed: {err}", row.h, row.c);
        }
    }
    w.flush().map_err(|e| e.to_string())?;
    if let Some(dir) = &a.models_dir {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        for (row, model) in out.rows.iter().zip(&out.models) {
            if let Some(model) = model {
                let path = dir.join(format!("model_h{}_C{}.svm1", fmt_sig6(row.h), fmt_sig6(row.c)));
                let mut mw = BufWriter::new(
                    File::create(&path)
                        .map_err(|e| format!("cannot create {}: {e}", path.display()))?,
                );
                save_model(model, &mut mw).map_err(|e| e.to_string())?;
                mw.flush().map_err(|e| e.to_string())?;
            }
        }
    }
    eprintln!(
        "grid done: {} cells, {} compressions, {} factorizations, {} trainings",
        out.rows.len(),
        out.compressions,
        out.factorizations,
        out.admm_runs
    );
    Ok(if any_failed { 2 } else { 0 })
}

fn cmd_svd_decay(a: SvdDecayArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let h_list = parse_list(&a.h, "h")?;
    let mut ds = load_dataset(&a.data, a.knobs.remap01)?;
    if let Some(n) = a.subsample {
        ds = ds.subsample(n, a.knobs.seed);
    }
    if ds.len() > a.knobs.oracle_cap {
        return Err(format!(
            "d={} exceeds --oracle-cap {}; pass --subsample <n> to analyze a subset",
            ds.len(),
            a.knobs.oracle_cap
        ));
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(h_list.len());
    for &h in &h_list {
        let spec = KernelSpec::gaussian(h).map_err(|e| e.to_string())?;
        let k = dense_kernel_capped(&spec, &ds, a.knobs.oracle_cap).map_err(|e| e.to_string())?;
        let (eigvals, _) = sym_eigen(&k, false);
        // singular values of a symmetric matrix
        let mut sv: Vec<f64> = eigvals.iter().map(|v| v.abs()).collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        columns.push(sv);
    }
    let mut w = out_writer(&a.out)?;
    let header: Vec<String> = std::iter::once("index".to_string())
        .chain(h_list.iter().map(|h| format!("h={}", fmt_sig6(*h))))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| e.to_string())?;
    for i in 0..ds.len() {
        let mut cells = vec![(i + 1).to_string()];
        for col in &columns {
            cells.push(format!("{:.17e}", col[i]));
        }
        writeln!(w, "{}", cells.join(",")).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())?;
    Ok(0)
}

fn cmd_bench(a: BenchArgs) -> Result<i32, String> {
    a.knobs.warn_noop_flags();
    let h = parse_single(&a.h, "h")?;
    let sizes: Result<Vec<usize>, _> = a.sizes.split(',').map(|t| t.trim().parse()).collect();
    let sizes = sizes.map_err(|_| format!("bad --sizes list `{}`", a.sizes))?;
    let spec = KernelSpec::gaussian(h).map_err(|e| e.to_string())?;
    let mut w = out_writer(&a.out)?;
    writeln!(w, "d,rep,compress_s,factor_s,solve_s,hss_rank,memory_mb")
        .map_err(|e| e.to_string())?;
    for &d in &sizes {
        let ds = synth::gaussian_blobs::<f64>(
            d,
            a.features,
            &[
                (vec![0.0; a.features], 1),
                (vec![1.5; a.features], 1),
                (vec![-1.0; a.features], 1),
            ],
            0.6,
            a.knobs.seed,
        );
        for rep in 0..a.reps.max(1) {
            let t0 = Instant::now();
            let (tree, perm) =
                build_tree(&ds, a.knobs.leaf_size, a.knobs.seed).map_err(|e| e.to_string())?;
            let permuted = apply_permutation(&ds, &perm).map_err(|e| e.to_string())?;
            let acc = KernelAccessor::new(spec, &permuted);
            let hss = compress(
                &acc,
                &tree,
                &CompressionConfig {
                    rel_tol: a.knobs.rel_tol,
                    abs_tol: a.knobs.abs_tol,
                    max_rank: a.knobs.max_rank,
                    seed: a.knobs.seed,
                },
            )
            .map_err(|e| e.to_string())?;
            let compress_s = t0.elapsed().as_secs_f64();
            let beta = match a.knobs.beta_choice()? {
                BetaChoice::Auto => hss_svm::admm::beta_policy::<f64>(d),
                BetaChoice::Fixed(b) => b,
            };
            let t1 = Instant::now();
            let fact = factor_shifted(&hss, beta).map_err(|e| e.to_string())?;
            let factor_s = t1.elapsed().as_secs_f64();
            let mut rng = SplitMix64::new(a.knobs.seed ^ 0xbe9c);
            let b: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let t2 = Instant::now();
            let _x = fact.solve(&b).map_err(|e| e.to_string())?;
            let solve_s = t2.elapsed().as_secs_f64();
            writeln!(
                w,
                "{d},{rep},{},{},{},{},{}",
                fmt_time(compress_s),
                fmt_time(factor_s),
                fmt_time(solve_s),
                hss.hss_rank(),
                fmt_sig6(hss.memory_bytes() as f64 / 1048576.0)
            )
            .map_err(|e| e.to_string())?;
        }
    }
    w.flush().map_err(|e| e.to_string())?;
    Ok(0)
}
