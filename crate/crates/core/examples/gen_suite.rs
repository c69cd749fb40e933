//! Generates a planted benchmark suite and writes it as JSON.
//!
//! Usage: `cargo run -p specforge-core --example gen_suite -- <seed> <out.json>`
//!
//! The suite plants one coordinated two-primitive cluster plus an engine
//! cluster and an intelligence cluster, so it exercises every search regime.

use std::path::Path;

use specforge_core::harness::{gen_coordinated_config, gen_suite};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        eprintln!("usage: gen_suite <seed> <out.json>");
        std::process::exit(2);
    }
    let seed: u64 = match args[1].parse() {
        Ok(seed) => seed,
        Err(e) => {
            eprintln!("bad seed `{}`: {e}", args[1]);
            std::process::exit(2);
        }
    };
    let suite = match gen_suite(&gen_coordinated_config(seed)) {
        Ok(suite) => suite,
        Err(e) => {
            eprintln!("suite generation failed: {e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = suite.save(Path::new(&args[2])) {
        eprintln!("write failed: {e}");
        std::process::exit(2);
    }
    println!("wrote {} ({} clusters)", args[2], suite.clusters.len());
}
