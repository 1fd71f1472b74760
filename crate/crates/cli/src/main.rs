mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

/// Marks an error as a usage problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<voxproj::Error>() {
            return match e {
                voxproj::Error::InvalidArgument(_) | voxproj::Error::MissingSupervision(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!(
                "voxproj: {}",
                one_line(&e.render().to_string()).trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("voxproj: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("voxproj: {e}");
            return ExitCode::from(1);
        }
    }

    match commands::run(cli.command, cli.manifest) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("voxproj: {}", one_line(&format!("{e:#}")));
            ExitCode::from(exit_code_for(&e))
        }
    }
}
