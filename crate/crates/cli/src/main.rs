use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = scenq::Cli::parse();
    std::process::exit(scenq::run(cli));
}
