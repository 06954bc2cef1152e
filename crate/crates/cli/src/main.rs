//! Command-line workflows: dataset generation, training, translation and evaluation.

mod config;
mod data;
mod eval;
mod train;
mod translate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pairgan::shapes::{generate_dataset, BackgroundSpec, DatasetOptions, Scenario, DEFAULT_SIDE};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "pairgan", version, about = "Joint image and class-map translation between unpaired domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a two-domain shape dataset.
    GenShapes(GenShapesArgs),
    /// Train both translation directions from a TOML run configuration.
    Train(train::TrainArgs),
    /// Translate a split directory with a trained checkpoint.
    Translate(translate::TranslateArgs),
    /// Compare predicted and reference images or label maps.
    Eval(eval::EvalArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenShapesArgs {
    /// One of circle2square, circle2triangle, square2circle, square2triangle,
    /// triangle2circle, triangle2square.
    #[arg(long, value_parser = parse_scenario)]
    #[serde(serialize_with = "as_display")]
    scenario: Scenario,
    /// Training images per domain.
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Held-out images per domain; a fifth of --count when omitted.
    #[arg(long)]
    test_count: Option<usize>,
    /// Image side in pixels.
    #[arg(long, default_value_t = DEFAULT_SIDE)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `smooth-noise`, `uniform-noise`, or a PNG file or directory to crop from.
    #[arg(long, default_value = "smooth-noise")]
    background: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: pairgan::Error| e.to_string())
}

fn as_display<S: serde::Serializer>(v: &Scenario, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn echo<T: Serialize>(args: &T) {
    println!("# effective configuration\n{}", toml::to_string(args).expect("arguments serialize"));
}

fn gen_shapes(args: &GenShapesArgs) -> Result<()> {
    echo(args);
    let mut opts = DatasetOptions::new(args.count, args.size, args.seed);
    if let Some(t) = args.test_count {
        opts.test_count = t;
    }
    opts.sample.background = match args.background.as_str() {
        "smooth-noise" => BackgroundSpec::SmoothNoise,
        "uniform-noise" => BackgroundSpec::UniformNoise,
        path => BackgroundSpec::ImageFile { path: path.into() },
    };
    let meta = generate_dataset(args.scenario, &opts, &args.out)?;
    println!(
        "wrote {} ({}x{}, {} images per training domain)",
        args.out.join("manifest.json").display(),
        meta.height,
        meta.width,
        args.count
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenShapes(a) => gen_shapes(&a),
        Command::Train(a) => train::run(&a),
        Command::Translate(a) => {
            echo(&a);
            translate::run(&a)
        }
        Command::Eval(a) => {
            echo(&a);
            eval::run(&a).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
