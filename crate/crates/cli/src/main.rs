use std::process::ExitCode;

use clap::Parser;
use splatseg::camera::read_cameras;
use splatseg::ply::load_ply;
use splatseg::provider::OracleTarget;
use splatseg::synth::{gen_scene, preset};

use splatseg_cli::args::{Cli, Command, ServeArgs};
use splatseg_cli::commands::{
    run_convert, run_eval, run_gen, run_segment, CliError, CliResult, SegmentJob, PROVIDER_ENV,
};
use splatseg_cli::service::{serve, AppState};

fn run_serve(args: ServeArgs) -> CliResult<()> {
    let config = |m: String| CliError::Config(m);
    let (cloud, cameras, oracle) = match (&args.preset, &args.scene) {
        (Some(name), _) => {
            let scene = gen_scene(&preset(name)?, args.seed)?;
            let oracle = scene.oracle(OracleTarget::FromPrompts);
            (scene.cloud, scene.cameras, Some(oracle))
        }
        (None, Some(path)) => {
            let cams = args
                .cameras
                .as_ref()
                .ok_or_else(|| config("missing --cameras".into()))?;
            (load_ply(path)?, read_cameras(cams)?, None)
        }
        (None, None) => return Err(config("missing --scene (or --preset)".into())),
    };
    let provider = args.provider_url.or_else(|| std::env::var(PROVIDER_ENV).ok());
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = AppState::new(cloud, cameras, oracle, provider, workers);
    let rt = tokio::runtime::Runtime::new().map_err(|e| config(e.to_string()))?;
    rt.block_on(serve(state, args.addr))
        .map_err(|e| config(format!("{}: {e}", args.addr)))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Segment(a) => {
            let job = SegmentJob::resolve(a)?;
            let out = job.out.clone();
            let result = run_segment(job)?;
            println!(
                "{} Gaussians, {} decompositions, wrote {}",
                result.len(),
                result.decompositions.len(),
                out.display()
            );
        }
        Command::Serve(a) => run_serve(a)?,
        Command::Gen(a) => run_gen(&a)?,
        Command::Eval(a) => {
            let report = run_eval(&a)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::ConvertColmap(a) => {
            let n = run_convert(&a)?;
            println!("wrote {n} cameras to {}", a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splatseg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
