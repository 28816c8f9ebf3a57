use clap::Parser;

fn main() {
    let cli = cascade_cli::Cli::parse();
    if let Err(e) = cascade_cli::run(cli) {
        let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
        eprintln!("error: {}", chain.join(": "));
        std::process::exit(1);
    }
}
