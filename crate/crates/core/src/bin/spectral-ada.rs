use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spectral_ada::active::{run_experiment, select_batch, ExperimentData, MetricsHistory, Pool, Strategy};
use spectral_ada::calibration::{write_report, PredictionLog};
use spectral_ada::config::{BenchmarkConfig, ExperimentConfig};
use spectral_ada::features::{read_feature_file, write_feature_file, Domain};
use spectral_ada::margin::{LinearHead, MarginParams};
use spectral_ada::rng::{seeded_stream, SELECTION};
use spectral_ada::synthetic::{
    make_gaussian_bench, make_texture_bench, GaussianBenchSpec, ImageSet, TextureBenchSpec,
};
use spectral_ada::{netpbm, spectral, Error, ErrorKind};

const EXIT_USAGE: u8 = 1;
const EXIT_MALFORMED: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "spectral-ada", version, about = "Spectral-transfer guided active domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Swap the low-frequency amplitude of SOURCE with that of TARGET.
    FdaTransform {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full active adaptation experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// One-shot selection of target-tagged samples from a feature file.
    Select {
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0.001)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a source-only head on the configured benchmark.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the trained head.
        #[arg(long, default_value = "head.sdmh")]
        out: PathBuf,
    },
    /// Reliability bins and ECE for a prediction log.
    Calibrate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic two-domain benchmark.
    GenBench {
        #[arg(long, value_enum)]
        kind: BenchKind,
        /// JSON spec; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Sdm,
    Random,
    Entropy,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Sdm => Strategy::Sdm,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Entropy => Strategy::Entropy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Gaussian,
    Texture,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::MalformedInput | ErrorKind::Io => EXIT_MALFORMED,
                ErrorKind::InvariantViolation => EXIT_INVARIANT,
            })
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::FdaTransform {
            source,
            target,
            beta,
            out,
        } => {
            let src = netpbm::read_image(&source)?;
            let tgt = netpbm::read_image(&target)?;
            let transferred = spectral::fda_transfer(&src, &tgt, beta)?;
            netpbm::write_image(&transferred.clamped(), &out)
        }
        Command::Simulate { config, out_dir } => simulate(&ExperimentConfig::load(config)?, &out_dir),
        Command::Select {
            head,
            features,
            k,
            strategy,
            lambda,
            m,
            seed,
        } => select(&head, &features, k, strategy.into(), MarginParams::new(m, lambda)?, seed),
        Command::Train { config, out } => train(&ExperimentConfig::load(config)?, &out),
        Command::Calibrate { log, bins, out } => {
            let log = PredictionLog::read_csv(File::open(log)?)?;
            let ece = write_report(&log, bins, BufWriter::new(File::create(out)?))?;
            println!("ece,{ece}");
            Ok(())
        }
        Command::GenBench { kind, spec, out_dir } => gen_bench(kind, spec.as_deref(), &out_dir),
    }
}

fn load_data(config: &ExperimentConfig) -> Result<ExperimentData, Error> {
    Ok(match &config.benchmark {
        BenchmarkConfig::Gaussian(spec) => ExperimentData::Features(make_gaussian_bench(spec)?),
        BenchmarkConfig::Texture(spec) => ExperimentData::Images(make_texture_bench(spec)?),
    })
}

fn simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<(), Error> {
    config.validate()?;
    let data = load_data(config)?;
    let history = run_experiment(config, &data)?;
    write_outputs(&history, out_dir)?;
    let metrics = &history.final_metrics;
    println!(
        "accuracy {:.4}  ece {:.4}  labeled {}/{}",
        metrics.accuracy,
        metrics.ece,
        history.labeled.len(),
        history.budget
    );
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    accuracy: f64,
    macro_average: Option<f64>,
    per_class: &'a [Option<f64>],
    ece: f64,
    labeled_target: usize,
    budget: usize,
}

fn write_outputs(history: &MetricsHistory, out_dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(out_dir)?;
    history.write_epochs_csv(BufWriter::new(File::create(out_dir.join("metrics.csv"))?))?;
    for r in 0..history.rounds.len() {
        let path = out_dir.join(format!("selection_round_{r}.csv"));
        history.write_round_csv(r, BufWriter::new(File::create(path)?))?;
    }
    let metrics = &history.final_metrics;
    metrics
        .predictions
        .write_csv(BufWriter::new(File::create(out_dir.join("predictions.csv"))?))?;
    write_report(
        &metrics.predictions,
        metrics.bins.len(),
        BufWriter::new(File::create(out_dir.join("calibration.csv"))?),
    )?;
    let summary = Summary {
        accuracy: metrics.accuracy,
        macro_average: metrics.class_accuracy.macro_average,
        per_class: &metrics.class_accuracy.per_class,
        ece: metrics.ece,
        labeled_target: history.labeled.len(),
        budget: history.budget,
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    history.head.save(out_dir.join("head.sdmh"))
}

fn select(
    head: &Path,
    features: &Path,
    k: usize,
    strategy: Strategy,
    params: MarginParams,
    seed: u64,
) -> Result<(), Error> {
    let head = LinearHead::load(head)?;
    let set = read_feature_file(features)?;
    let rows: Vec<usize> = (0..set.len())
        .filter(|&i| set.domains()[i] == Domain::Target)
        .collect();
    let pool_features: Vec<Vec<f64>> = rows.iter().map(|&i| set.row(i).to_vec()).collect();
    // labels are not needed for selection; the pool only tracks membership
    let pool = Pool::new(vec![0; rows.len()], 0)?;
    let mut rng = seeded_stream(seed, SELECTION);
    let picks = select_batch(&head, &pool_features, &pool, k, strategy, &params, &mut rng)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "row,score")?;
    for p in picks {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{},{score}", rows[p.sample_index])?;
    }
    Ok(())
}

fn train(config: &ExperimentConfig, out: &Path) -> Result<(), Error> {
    // source-only: no selection rounds
    let source_only = ExperimentConfig {
        rounds: 0,
        selection_epochs: Vec::new(),
        ..config.clone()
    };
    source_only.validate()?;
    let history = run_experiment(&source_only, &load_data(&source_only)?)?;
    history.head.save(out)?;
    println!("epoch,mean_loss,target_test_accuracy");
    for e in &history.epochs {
        println!("{},{},{}", e.epoch, e.mean_loss, e.target_test_accuracy);
    }
    Ok(())
}

fn gen_bench(kind: BenchKind, spec: Option<&Path>, out_dir: &Path) -> Result<(), Error> {
    let text = spec.map(fs::read_to_string).transpose()?;
    fs::create_dir_all(out_dir)?;
    match kind {
        BenchKind::Gaussian => {
            let spec: GaussianBenchSpec = match text {
                Some(t) => serde_json::from_str(&t)?,
                None => GaussianBenchSpec::default(),
            };
            let bench = make_gaussian_bench(&spec)?;
            write_feature_file(&bench.source, out_dir.join("source.feat"))?;
            write_feature_file(&bench.target_pool, out_dir.join("target_pool.feat"))?;
            write_feature_file(&bench.target_test, out_dir.join("target_test.feat"))?;
        }
        BenchKind::Texture => {
            let spec: TextureBenchSpec = match text {
                Some(t) => serde_json::from_str(&t)?,
                None => TextureBenchSpec::default(),
            };
            let bench = make_texture_bench(&spec)?;
            for (name, set) in [
                ("source", &bench.source),
                ("target_pool", &bench.target_pool),
                ("target_test", &bench.target_test),
            ] {
                write_image_split(set, &out_dir.join(name))?;
            }
        }
    }
    Ok(())
}

fn write_image_split(set: &ImageSet, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let mut labels = csv::Writer::from_path(dir.join("labels.csv"))?;
    labels.write_record(["file", "label"])?;
    for (i, (img, label)) in set.images.iter().zip(&set.labels).enumerate() {
        let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
        let name = format!("{i:05}.{ext}");
        netpbm::write_image(img, dir.join(&name))?;
        labels.write_record([name, label.to_string()])?;
    }
    labels.flush()?;
    Ok(())
}
