use clap::Parser;
use storyguard::cli::{self, Cli, Command};
use tracing_subscriber::EnvFilter;

fn main() {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let code = match &cli.command {
        Command::Serve { port, host, static_dir } => {
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(cli::serve(&cli.data, host, *port, static_dir.clone())) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    2
                }
            }
        }
        _ => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            match cli::run(&cli, &mut out) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    2
                }
            }
        }
    };
    std::process::exit(code);
}
