use clap::Parser;

use acf_cli::commands::{run, Cli, Failure};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let text = e.to_string();
            let reason = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", Failure::Usage(reason.to_string()).line());
            std::process::exit(2);
        }
    };
    if let Err(f) = run(cli) {
        eprintln!("{}", f.line());
        std::process::exit(f.exit_code());
    }
}
