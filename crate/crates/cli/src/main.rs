use clap::Parser;

fn main() {
    let cli = tkge_cli::Cli::parse();
    if let Err(err) = tkge_cli::run(cli) {
        if tkge_cli::is_broken_pipe(&err) {
            return;
        }
        eprintln!("error: {err:#}");
        std::process::exit(tkge_cli::exit_code(&err));
    }
}
