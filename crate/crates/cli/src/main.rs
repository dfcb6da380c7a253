use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsnrec::config::Config;
use dsnrec::pipeline;

/// Cross-domain recommendation with domain separation networks.
#[derive(Parser, Debug)]
#[command(name = "dsnrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the top-level `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root holding data/, vocab/, models/, checkpoints/ and reports/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Configuration overrides such as `train.epochs=3`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic two-domain task into <out>/data.
    SynthGen(Common),
    /// Split the labeled users and fit the vocabularies.
    BuildVocab(Common),
    /// Pretrain the item autoencoder.
    TrainSdae(Common),
    /// Train the configured network and select a checkpoint.
    Train(Common),
    /// Evaluate the configured methods over the evaluation seeds.
    Evaluate(Common),
    /// Write top-K source items for target-domain users.
    Recommend(Common),
    /// Verify analytic gradients by central differences.
    Gradcheck(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SynthGen(c)
            | Command::BuildVocab(c)
            | Command::TrainSdae(c)
            | Command::Train(c)
            | Command::Evaluate(c)
            | Command::Recommend(c)
            | Command::Gradcheck(c) => c,
        }
    }
}

fn run(command: &Command) -> dsnrec::Result<bool> {
    let common = command.common();
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = Config::load(common.config.as_deref(), &overrides)?;
    let out = &common.out;
    match command {
        Command::SynthGen(_) => println!("wrote {}", pipeline::synth_gen(&config, out)?.display()),
        Command::BuildVocab(_) => println!("wrote {}", pipeline::build_vocab(&config, out)?.display()),
        Command::TrainSdae(_) => println!("wrote {}", pipeline::train_sdae(&config, out)?.display()),
        Command::Train(_) => println!("wrote {}", pipeline::train_model(&config, out)?.display()),
        Command::Evaluate(_) => {
            let reports = pipeline::evaluate(&config, out)?;
            print!("{}", pipeline::summary_table(&reports));
        }
        Command::Recommend(_) => println!("wrote {}", pipeline::recommend(&config, out)?.display()),
        Command::Gradcheck(_) => {
            let summary = pipeline::gradcheck(&config, out)?;
            print!("{}", summary.to_text());
            return Ok(summary.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
