//! `meshtex`: train, sample, render and evaluate mesh texture generators.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use meshtex::dataset;
use meshtex::harness::{self, FakeSource, HarnessError, RunConfig, Suite, KEYS};

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("key = value file; flags below override it")];
    for &key in KEYS {
        let mut arg = Arg::new(key)
            .long(key)
            .value_name("VALUE")
            .help_heading("Config keys");
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        args.push(arg);
    }
    args
}

fn path_arg(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id)
        .long(id)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

fn cli() -> Command {
    Command::new("meshtex")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Per-face texture synthesis for triangle meshes with a graph-conditioned GAN")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("train")
                .about("Train on a dataset directory")
                .args(config_args()),
        )
        .subcommand(
            Command::new("generate")
                .about("Generate face colors for a mesh from a checkpoint; `seed` picks the noise")
                .args(config_args())
                .arg(path_arg("checkpoint", "trained checkpoint").required(true))
                .arg(path_arg("mesh", "OBJ mesh").required(true))
                .arg(path_arg("output", "facecolors file to write").required(true))
                .arg(path_arg(
                    "renders",
                    "also write view-ring PNGs into this directory",
                )),
        )
        .subcommand(
            Command::new("render")
                .about("Render a mesh with stored face colors around the view ring")
                .args(config_args())
                .arg(path_arg("mesh", "OBJ mesh").required(true))
                .arg(path_arg("colors", "facecolors file").required(true))
                .arg(path_arg("output", "directory for the images").required(true))
                .arg(
                    Arg::new("buffers")
                        .long("buffers")
                        .action(ArgAction::SetTrue)
                        .help("also dump face-index buffers"),
                ),
        )
        .subcommand(
            Command::new("eval-fid")
                .about("Multi-view FID against the ground truth of `dataset`")
                .args(config_args())
                .arg(path_arg(
                    "checkpoint",
                    "score textures generated by this checkpoint",
                ))
                .arg(
                    Arg::new("baseline")
                        .long("baseline")
                        .value_parser(["truth", "random"])
                        .conflicts_with("checkpoint")
                        .help("score the ground truth itself or uniform random colors"),
                )
                .arg(path_arg("per-mesh", "write per-mesh scores to this CSV")),
        )
        .subcommand(
            Command::new("graph-stats")
                .about("Face-adjacency statistics of a mesh")
                .arg(path_arg("mesh", "OBJ mesh").required(true)),
        )
        .subcommand(
            Command::new("grad-check")
                .about("Run the finite-difference gradient suites")
                .arg(
                    Arg::new("inject-sign-flip")
                        .long("inject-sign-flip")
                        .value_name("SUITE")
                        .value_parser(Suite::ALL.map(|s| s.name()))
                        .hide(true),
                ),
        )
        .subcommand(
            Command::new("toy-dataset")
                .about("Write the three-mesh toy dataset")
                .arg(path_arg("output", "dataset directory").required(true)),
        )
}

fn resolve_config(m: &ArgMatches) -> Result<RunConfig, HarnessError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for &key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn path<'a>(m: &'a ArgMatches, id: &str) -> &'a PathBuf {
    m.get_one::<PathBuf>(id).expect("required by clap")
}

fn run(matches: ArgMatches) -> Result<(), HarnessError> {
    match matches.subcommand() {
        Some(("train", m)) => {
            let cfg = resolve_config(m)?;
            let summary = harness::run_train(&cfg, |s| {
                if (s.step + 1) % 50 == 0 || s.step + 1 == cfg.steps {
                    eprintln!(
                        "step {:>6}  loss_D {:.4}  loss_G {:.4}  perc {:.4}  D(real) {:.3}  D(fake) {:.3}",
                        s.step + 1,
                        s.loss_d,
                        s.loss_g,
                        s.perc,
                        s.d_real,
                        s.d_fake
                    );
                }
            })?;
            for (name, d) in &summary.diversity {
                eprintln!("diversity {name} {d}");
            }
            eprintln!("wrote {}", cfg.out.display());
        }
        Some(("generate", m)) => {
            let cfg = resolve_config(m)?;
            harness::run_generate(
                path(m, "checkpoint"),
                path(m, "mesh"),
                cfg.train.seed,
                path(m, "output"),
                m.get_one::<PathBuf>("renders").map(PathBuf::as_path),
                &cfg,
            )?;
        }
        Some(("render", m)) => {
            let cfg = resolve_config(m)?;
            let files = harness::run_render(
                path(m, "mesh"),
                path(m, "colors"),
                path(m, "output"),
                m.get_flag("buffers"),
                &cfg,
            )?;
            eprintln!("wrote {} files", files.len());
        }
        Some(("eval-fid", m)) => {
            let cfg = resolve_config(m)?;
            let source = match (
                m.get_one::<PathBuf>("checkpoint"),
                m.get_one::<String>("baseline"),
            ) {
                (Some(p), _) => FakeSource::Checkpoint(p.clone()),
                (None, Some(b)) if b == "random" => FakeSource::Random,
                (None, Some(_)) => FakeSource::Truth,
                (None, None) => {
                    return Err(HarnessError::Usage(
                        "eval-fid needs --checkpoint or --baseline".into(),
                    ))
                }
            };
            let report = harness::run_eval(
                &cfg,
                &source,
                m.get_one::<PathBuf>("per-mesh").map(PathBuf::as_path),
            )?;
            println!("FID {}", report.pooled);
        }
        Some(("graph-stats", m)) => {
            print!("{}", harness::run_graph_stats(path(m, "mesh"))?);
        }
        Some(("grad-check", m)) => {
            let flip = m
                .get_one::<String>("inject-sign-flip")
                .and_then(|s| Suite::parse(s));
            let reports = harness::run_gradcheck(flip)?;
            for r in &reports {
                println!("{}", r.line());
            }
            if let Some(r) = reports.iter().find(|r| !r.passed()) {
                return Err(HarnessError::Numerical(format!(
                    "suite {} failed",
                    r.suite.name()
                )));
            }
        }
        Some(("toy-dataset", m)) => {
            dataset::write_dataset(path(m, "output"), &dataset::toy_dataset())?;
        }
        _ => unreachable!("subcommand required"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
