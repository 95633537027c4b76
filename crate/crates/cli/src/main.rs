use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use radam_cli::selftest::Fault;
use radam_cli::train::{EVAL_REPORT, TRAIN_REPORT};
use radam_cli::{
    cmd_encode, cmd_eval, cmd_fit, cmd_selftest, synth, CliError, Pooling, Report, RunConfig,
};
use radam_core::classifier::ClassifierKind;
use radam_core::rng::LcgParams;

#[derive(Parser, Debug)]
#[command(
    name = "radam",
    version,
    about = "Texture descriptors from randomized autoencoder soups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode every manifest record into the feature store.
    Encode(EncodeArgs),
    /// Train one classifier per fold on split=train.
    Fit(FitArgs),
    /// Score fitted classifiers on split=test.
    Eval(EvalArgs),
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Write the synthetic texture benchmark as RADT blocks plus a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature store directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Pooling::Radam)]
    pooling: Pooling,
    /// Autoencoders in the soup.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Hidden neurons per autoencoder.
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = LcgParams::ZX81.a())]
    lcg_a: u64,
    #[arg(long, default_value_t = LcgParams::ZX81.b())]
    lcg_b: u64,
    #[arg(long, default_value_t = LcgParams::ZX81.c())]
    lcg_c: u64,
    #[arg(long, default_value_t = LcgParams::ZX81.x0())]
    lcg_x0: u64,
    /// Skip this many LCG states before the first encoder.
    #[arg(long, default_value_t = 0)]
    lcg_offset: u64,
    /// Ridge term added to g^T g.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Worker threads (default: all logical cores).
    #[arg(long, env = "RADAM_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClassifierArg {
    Svm,
    Lda,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Svm => ClassifierKind::Svm,
            ClassifierArg::Lda => ClassifierKind::Lda,
        }
    }
}

#[derive(Args, Debug)]
struct StoreArgs {
    /// Feature store written by `encode`.
    #[arg(long)]
    store: PathBuf,
    /// Model directory (default: <store>/model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Svm)]
    classifier: ClassifierArg,
    /// SVM penalty.
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    /// SVM stopping tolerance on the projected gradient.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    /// Standardize features before training.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    store: StoreArgs,
}

fn store_config(args: &StoreArgs) -> RunConfig {
    RunConfig {
        output_dir: args.store.clone(),
        model_dir: args.model.clone(),
        ..RunConfig::default()
    }
}

fn print_report(report: &Report, json: bool, path: PathBuf) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serializes")
        );
    } else {
        print!("{}", report.table());
        println!("report written to {}", path.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode(a) => {
            let cfg = RunConfig {
                manifest_path: Some(a.manifest),
                output_dir: a.out,
                m: a.m,
                q: a.q,
                lcg: LcgParams::new(a.lcg_a, a.lcg_b, a.lcg_c, a.lcg_x0)?,
                lcg_offset: a.lcg_offset,
                ridge: a.ridge,
                pooling: a.pooling,
                threads: a.threads,
                ..RunConfig::default()
            };
            let s = cmd_encode(&cfg)?;
            println!(
                "encoded {} records ({} distinct images), {} features each, into {}",
                s.records,
                s.unique,
                s.feature_dim,
                s.store.display()
            );
        }
        Command::Fit(a) => {
            let cfg = RunConfig {
                classifier: a.classifier.into(),
                c: a.c,
                tol: a.tol,
                max_epochs: a.max_epochs,
                standardize: a.standardize,
                ..store_config(&a.store)
            };
            let report = cmd_fit(&cfg)?;
            print_report(&report, a.store.json, cfg.model_dir().join(TRAIN_REPORT));
        }
        Command::Eval(a) => {
            let cfg = store_config(&a.store);
            let report = cmd_eval(&cfg)?;
            print_report(&report, a.store.json, cfg.model_dir().join(EVAL_REPORT));
        }
        Command::Selftest { inject_fault } => {
            let report = cmd_selftest(inject_fault);
            println!("{report}");
            if !report.passed() {
                let names: Vec<_> = report
                    .failures()
                    .map(|c| format!("{}::{}", c.module, c.name))
                    .collect();
                return Err(CliError::SelfTest(names.join(", ")));
            }
        }
        Command::Synth {
            out,
            per_class,
            seed,
        } => {
            if per_class == 0 {
                return Err(CliError::validation("--per-class must be at least 1"));
            }
            let samples = synth::generate(per_class, seed);
            let manifest = synth::write_dataset(&samples, &out)
                .map_err(|e| CliError::validation(format!("{e:#}")))?;
            println!(
                "wrote {} images, manifest {}",
                samples.len(),
                manifest.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
