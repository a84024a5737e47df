use clap::Parser;
use navslip_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let report = run(cli.command, &cli.run);
    if let Some(dir) = &report.out_dir {
        if report.exit_code == 0 {
            println!(
                "{}: all checks passed; artifacts in {}",
                cli.command.name(),
                dir.display()
            );
        } else if !report.failed.is_empty() {
            println!(
                "{}: failed checks {:?}; artifacts in {}",
                cli.command.name(),
                report.failed,
                dir.display()
            );
        }
    }
    std::process::exit(report.exit_code);
}
