use clap::Parser;

fn main() -> std::process::ExitCode {
    noisy_rlvr::cli::main_with(noisy_rlvr::cli::Cli::parse())
}
