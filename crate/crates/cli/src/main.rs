use std::io;

fn main() {
    let seed = std::env::var(covsteer_cli::SEED_ENV).ok();
    let code = covsteer_cli::run(std::env::args_os(), seed.as_deref(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
