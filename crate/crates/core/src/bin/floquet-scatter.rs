use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use floquet_scatter::cli::{self, presets, DiskCache, RunConfig};

const DEFAULT_CACHE: &str = ".floquet-cache";

#[derive(Parser)]
#[command(version, about = "Electron wave-packet scattering on time-harmonic potentials")]
struct Args {
    /// Worker threads (0 = all cores); overrides the configuration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use a bundled figure configuration (fig1..fig5) instead of a file.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a configuration and run it.
    Run { config: Option<PathBuf> },
    /// Check a configuration and print derived quantities.
    Validate { config: Option<PathBuf> },
    /// Inspect or empty the eigensystem cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
        #[arg(long, global = true, default_value = DEFAULT_CACHE)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Ls,
    Clear,
}

fn load(args: &Args, path: Option<&PathBuf>) -> floquet_scatter::Result<RunConfig> {
    let mut config = match (&args.preset, path) {
        (Some(name), None) => RunConfig::from_toml(presets::preset(name).ok_or_else(|| {
            let names: Vec<&str> = presets::PRESETS.iter().map(|(n, _)| *n).collect();
            floquet_scatter::Error::Config(format!("unknown preset {name}; available: {}", names.join(", ")))
        })?)?,
        (None, Some(p)) => RunConfig::load(p)?,
        (Some(_), Some(_)) => {
            return Err(floquet_scatter::Error::Config("give either a config file or --preset, not both".into()))
        }
        (None, None) => return Err(floquet_scatter::Error::Config("no configuration given".into())),
    };
    if let Some(w) = args.workers {
        config.output.workers = w;
    }
    if let Some(o) = &args.out {
        config.output.dir = Some(o.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = match &args.command {
        Command::Validate { config } => load(&args, config.as_ref()).and_then(cli::validate).map(|v| {
            println!("configuration valid (parameter hash {})", v.config.parameter_hash());
            println!("{}", v.derived.describe());
            true
        }),
        Command::Run { config } => load(&args, config.as_ref()).and_then(cli::validate).and_then(|v| {
            let out = v.config.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            log::info!("{}", v.derived.describe().replace('\n', ", "));
            let m = cli::run(&v, &out, v.config.output.workers)?;
            println!(
                "wrote {} files to {} in {:.1} s ({} diagonalizations, {} cache hits)",
                m.outputs.len(),
                out.display(),
                m.timings_s["total"],
                m.cache.diagonalizations,
                m.cache.store_hits
            );
            if m.partial {
                eprintln!("{} of {} points failed; see manifest.json", m.failures, m.points.len());
            }
            Ok(!m.partial)
        }),
        Command::Cache { action, dir } => DiskCache::open(dir).and_then(|cache| match action {
            CacheAction::Ls => {
                let entries = cache.entries()?;
                for e in &entries {
                    let desc = e.descriptor.as_deref().unwrap_or("<damaged>");
                    println!("{}\t{}\t{desc}", e.path.file_name().unwrap().to_string_lossy(), e.bytes);
                }
                println!("{} entries, {} bytes", entries.len(), entries.iter().map(|e| e.bytes).sum::<u64>());
                Ok(true)
            }
            CacheAction::Clear => {
                println!("removed {} entries from {}", cache.clear()?, cache.dir().display());
                Ok(true)
            }
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
