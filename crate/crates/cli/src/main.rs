use clap::Parser;
use serde_json::json;

use groupdyn_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        // Machine-readable error record on stderr; exit codes: config 2,
        // numerical 3, I/O 4.
        let record = json!({
            "error": { "kind": err.kind(), "message": err.to_string() }
        });
        eprintln!("{record}");
        std::process::exit(err.exit_code());
    }
}
